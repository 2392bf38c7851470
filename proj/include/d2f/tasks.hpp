#pragma once

#include <string>
#include <vector>

#include "d2f/rng.hpp"
#include "d2f/tokens.hpp"

namespace d2f::tasks {

// Task symbols sit on top of the reserved ids: digits 0-9 are tokens 2-11.
inline constexpr int kPlus = 12;
inline constexpr int kEquals = 13;

inline constexpr int digit_token(int d) { return tokens::kFirstSymbol + d; }

enum class TaskKind { copy, reverse, addition };

TaskKind task_from_name(const std::string& name);
const char* task_name(TaskKind k);

// All lengths are fixed per spec: prompts and answer regions have one shape,
// and answers are EOS-terminated inside a fixed-size region.
struct TaskSpec {
    TaskKind kind = TaskKind::addition;
    int content_len = 8;  // copy/reverse: symbols per example
    int alphabet = 10;    // copy/reverse: distinct symbols, ids 2 .. 2+alphabet-1
    int digits = 2;       // addition: operand width, zero-padded

    int prompt_len() const;
    int answer_len() const;
    int seq_len() const { return prompt_len() + answer_len(); }
    int min_vocab() const;
    void validate() const;
};

struct Dataset {
    TaskSpec spec;
    std::vector<std::vector<int>> train;
    std::vector<std::vector<int>> held_out;
};

// Deterministic disjoint splits: examples are deduplicated by prompt before
// splitting, so no held-out prompt ever appears in training.
Dataset gen_dataset(const TaskSpec& spec, int n_train, int n_held_out, uint64_t seed,
                    int vocab_size);

// Ground-truth answer content of a dataset row (answer region truncated
// before the EOS).
std::vector<int> answer_content(const TaskSpec& spec, const std::vector<int>& row);

}  // namespace d2f::tasks
