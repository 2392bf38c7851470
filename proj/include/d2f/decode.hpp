#pragma once

#include <map>
#include <string>
#include <vector>

#include "d2f/model.hpp"
#include "d2f/tokens.hpp"

namespace d2f::decode {

struct DecodeConfig {
    int block_len = 8;
    int max_len = 64;        // answer-position budget
    double tau_add = 0.1;    // append a block once the last block's decoded ratio exceeds this
    double tau_act = 0.95;   // promote semi -> fully once the predecessor's ratio exceeds this
    double tau_conf = 0.9;   // decode a position once its confidence exceeds this
    long vanilla_steps = 0;  // step budget for the vanilla decoder; 0 means max_len
    bool emit_trace = false;

    void validate() const;
};

// semi_activated blocks decode only above-threshold positions and may stall;
// fully_activated blocks force at least one decode per step; complete blocks
// have no masks left.
enum class BlockState { semi, fully, complete };

const char* block_state_name(BlockState s);

// Position-selection rule shared by both block states: indices of confidences
// strictly above tau_conf; a fully_activated block with nothing above the bar
// decodes its single most confident position instead (ties to the lowest
// index). Indices are into the caller's candidate arrays.
std::vector<size_t> select_positions(const std::vector<double>& conf, BlockState state,
                                     double tau_conf);

struct TraceRecord {
    long step = 0;
    int block_index = 0;
    std::string state;                   // state at decode time this step
    std::vector<int> decoded_positions;  // absolute positions decoded this step
    bool appended = false;               // true on the block's first record
    int committed_blocks = 0;            // after this step's commits
};

struct DecodeResult {
    std::vector<int> tokens;  // prompt followed by the generated answer region
    int prompt_len = 0;
    long steps = 0;
    long forwards = 0;
    double wall_ms = 0.0;
    std::vector<TraceRecord> trace;

    // Answer region truncated before the first EOS.
    std::vector<int> answer_content() const;
};

// What the decoders need from a model: logits for the not-yet-materialized
// suffix of the sequence. forward() returns the first position its logits
// cover (row r of logits is position first + r); a cacheless predictor
// always returns 0.
template <typename Real>
class Predictor {
  public:
    virtual ~Predictor() = default;
    virtual int vocab_size() const = 0;
    virtual int max_total_len() const = 0;
    virtual void begin_sequence(int prompt_len) = 0;
    virtual int forward(const std::vector<int>& tokens, int total_len, Mat<Real>& logits) = 0;
    // Tokens [0, len) are final and will not change.
    virtual void on_commit(int /*len*/) {}
};

// Runs the real network. With use_cache, each forward covers only the rows
// past cache.materialized_len, and rows proven final afterwards (those under
// the committed prefix when the forward ran) become reusable — a committed
// block's K/V is picked up by the following window at no extra pass.
template <typename Real>
class TransformerPredictor final : public Predictor<Real> {
  public:
    TransformerPredictor(const model::Net<Real>& net, model::MaskSpec mask, bool use_cache);

    int vocab_size() const override { return net_->cfg.vocab_size; }
    int max_total_len() const override { return net_->cfg.max_seq_len; }
    void begin_sequence(int prompt_len) override;
    int forward(const std::vector<int>& tokens, int total_len, Mat<Real>& logits) override;
    void on_commit(int len) override;

  private:
    const model::Net<Real>* net_;
    model::MaskSpec mask_;
    bool use_cache_;
    model::KVCache<Real> cache_;
};

// Deterministic stand-in for engine tests: forward call s hands out a
// scripted (token, confidence) per position, encoded as logits whose softmax
// is exactly that distribution (confidence at the token, the rest uniform).
// Positions and calls beyond the script fall back to the defaults.
template <typename Real>
class ScriptedPredictor final : public Predictor<Real> {
  public:
    struct Cell {
        int token = 0;
        double conf = 0.95;
    };

    ScriptedPredictor(int vocab, int max_len, std::vector<std::map<int, Cell>> script,
                      Cell fallback)
        : vocab_(vocab), max_len_(max_len), script_(std::move(script)), fallback_(fallback) {}

    int vocab_size() const override { return vocab_; }
    int max_total_len() const override { return max_len_; }
    void begin_sequence(int) override { calls_ = 0; }
    int forward(const std::vector<int>& tokens, int total_len, Mat<Real>& logits) override;

    int calls() const { return calls_; }

  private:
    int vocab_;
    int max_len_;
    std::vector<std::map<int, Cell>> script_;
    Cell fallback_;
    int calls_ = 0;
};

// Pipelined dual-state block decoder.
template <typename Real>
DecodeResult d2f_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                        const DecodeConfig& cfg);

// Cache-only baseline: the same engine with tau_add forced to 1.0, so a new
// block is appended only once the last one is complete — exactly one active
// block at a time.
template <typename Real>
DecodeResult block_sequential_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                                     const DecodeConfig& cfg);

// Iterative remasking over the whole answer at once: every step is a full
// forward, and the max_len/steps most confident masked positions decode
// (steps must divide max_len), finishing exactly at the step budget.
template <typename Real>
DecodeResult vanilla_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                            const DecodeConfig& cfg);

}  // namespace d2f::decode
