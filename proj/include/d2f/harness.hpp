#pragma once

#include <string>
#include <vector>

#include "d2f/checkpoint.hpp"
#include "d2f/decode.hpp"
#include "d2f/tasks.hpp"

namespace d2f::harness {

enum class DecoderKind { vanilla, cache_only, d2f };

DecoderKind decoder_from_name(const std::string& name);
const char* decoder_name(DecoderKind k);

// One report row. Wall-clock fields (tokens_per_second, mean_latency_ms) are
// informational; forward_passes and tokens_per_forward are the
// hardware-independent measures the acceptance gate uses.
struct Metrics {
    std::string arm;      // row label, e.g. "d2f" or "act0.90_add0.10"
    std::string decoder;  // vanilla / cache_only / d2f
    double tau_add = 0.0;
    double tau_act = 0.0;
    double tau_conf = 0.0;
    long examples = 0;
    double exact_match = 0.0;
    long forward_passes = 0;     // summed over the split
    long total_decoded = 0;      // kept answer tokens, summed over the split
    double tokens_per_forward = 0.0;
    double tokens_per_second = 0.0;
    double mean_latency_ms = 0.0;
    double mean_gen_length = 0.0;
};

struct EvalResult {
    Metrics metrics;
    // Kept answer tokens per example, for determinism and paired-run checks.
    std::vector<std::vector<int>> outputs;
};

// Decodes every row's prompt and scores against the row's answer. The
// decoder dictates the checkpoint side: vanilla runs the bidirectional
// teacher without a cache; cache_only and d2f need the block-causal student.
template <typename Real>
EvalResult run_eval(const model::Net<Real>& net, model::Role role,
                    const tasks::TaskSpec& spec, const std::vector<std::vector<int>>& rows,
                    DecoderKind decoder, const decode::DecodeConfig& dcfg,
                    const std::string& arm_label);

// The threshold grid: tau_act = tau_conf in {0.85, 0.90, 0.95} crossed with
// tau_add in {0.1, 0.5, 0.7, tau_act}; the last arm collapses the dual-state
// pipeline into a single-state one. 12 rows, stable order.
template <typename Real>
std::vector<Metrics> sweep_thresholds(const model::Net<Real>& student,
                                      const tasks::TaskSpec& spec,
                                      const std::vector<std::vector<int>>& rows,
                                      const decode::DecodeConfig& base);

}  // namespace d2f::harness
