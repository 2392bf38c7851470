#pragma once

namespace d2f::tokens {

// Fixed vocabulary conventions: every task reserves these two ids and puts
// its own symbols at 2 and up. EOS doubles as answer padding — answers are
// EOS-filled to the end of their region, so a model learns confident EOS
// tails and the decoder can use EOS to stop appending blocks.
inline constexpr int kEos = 0;
inline constexpr int kMask = 1;
inline constexpr int kFirstSymbol = 2;

}  // namespace d2f::tokens
