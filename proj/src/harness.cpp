#include "d2f/harness.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace d2f::harness {

DecoderKind decoder_from_name(const std::string& name) {
    if (name == "vanilla") return DecoderKind::vanilla;
    if (name == "cache_only") return DecoderKind::cache_only;
    if (name == "d2f") return DecoderKind::d2f;
    throw std::runtime_error("unknown decoder: " + name);
}

const char* decoder_name(DecoderKind k) {
    switch (k) {
        case DecoderKind::vanilla: return "vanilla";
        case DecoderKind::cache_only: return "cache_only";
        case DecoderKind::d2f: return "d2f";
    }
    return "?";
}

template <typename Real>
EvalResult run_eval(const model::Net<Real>& net, model::Role role,
                    const tasks::TaskSpec& spec, const std::vector<std::vector<int>>& rows,
                    DecoderKind decoder, const decode::DecodeConfig& dcfg,
                    const std::string& arm_label) {
    dcfg.validate();
    require(!rows.empty(), "run_eval: empty split");
    if (decoder == DecoderKind::vanilla) {
        require(role == model::Role::teacher,
                "run_eval: vanilla decoding needs a teacher checkpoint");
    } else {
        require(role == model::Role::student,
                "run_eval: cached decoding needs a student checkpoint");
    }

    const int P = spec.prompt_len();
    model::MaskSpec mask;
    if (decoder == DecoderKind::vanilla) {
        mask = model::MaskSpec{model::MaskSpec::Kind::full, P, 1};
    } else {
        mask = model::MaskSpec{model::MaskSpec::Kind::block_causal, P, dcfg.block_len};
    }
    decode::TransformerPredictor<Real> pred(net, mask, decoder != DecoderKind::vanilla);

    EvalResult out;
    out.outputs.reserve(rows.size());
    long forwards = 0;
    long decoded = 0;
    long correct = 0;
    double wall_ms = 0.0;

    for (const auto& row : rows) {
        require(static_cast<int>(row.size()) == spec.seq_len(), "run_eval: ragged split row");
        const std::vector<int> prompt(row.begin(), row.begin() + P);

        const auto t0 = std::chrono::steady_clock::now();
        decode::DecodeResult res;
        switch (decoder) {
            case DecoderKind::vanilla:
                res = decode::vanilla_decode(pred, prompt, dcfg);
                break;
            case DecoderKind::cache_only:
                res = decode::block_sequential_decode(pred, prompt, dcfg);
                break;
            case DecoderKind::d2f:
                res = decode::d2f_decode(pred, prompt, dcfg);
                break;
        }
        wall_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();

        auto got = res.answer_content();
        forwards += res.forwards;
        decoded += static_cast<long>(got.size());
        if (got == tasks::answer_content(spec, row)) ++correct;
        out.outputs.push_back(std::move(got));
    }

    Metrics& m = out.metrics;
    m.arm = arm_label.empty() ? decoder_name(decoder) : arm_label;
    m.decoder = decoder_name(decoder);
    m.tau_add = dcfg.tau_add;
    m.tau_act = dcfg.tau_act;
    m.tau_conf = dcfg.tau_conf;
    m.examples = static_cast<long>(rows.size());
    m.exact_match = double(correct) / double(rows.size());
    m.forward_passes = forwards;
    m.total_decoded = decoded;
    m.tokens_per_forward = forwards > 0 ? double(decoded) / double(forwards) : 0.0;
    m.tokens_per_second = wall_ms > 0.0 ? 1000.0 * double(decoded) / wall_ms : 0.0;
    m.mean_latency_ms = wall_ms / double(rows.size());
    m.mean_gen_length = double(decoded) / double(rows.size());
    return out;
}

template <typename Real>
std::vector<Metrics> sweep_thresholds(const model::Net<Real>& student,
                                      const tasks::TaskSpec& spec,
                                      const std::vector<std::vector<int>>& rows,
                                      const decode::DecodeConfig& base) {
    static const double kLevels[] = {0.85, 0.90, 0.95};
    static const double kAdds[] = {0.1, 0.5, 0.7, -1.0};  // -1 stands for tau_add = tau_act

    std::vector<Metrics> grid;
    grid.reserve(12);
    for (double level : kLevels) {
        for (double add : kAdds) {
            decode::DecodeConfig cfg = base;
            cfg.tau_act = level;
            cfg.tau_conf = level;
            cfg.tau_add = add < 0.0 ? level : add;
            char label[64];
            std::snprintf(label, sizeof(label), "act%.2f_add%.2f", cfg.tau_act, cfg.tau_add);
            auto r = run_eval(student, model::Role::student, spec, rows, DecoderKind::d2f,
                              cfg, label);
            grid.push_back(std::move(r.metrics));
        }
    }
    return grid;
}

template EvalResult run_eval<float>(const model::Net<float>&, model::Role,
                                    const tasks::TaskSpec&, const std::vector<std::vector<int>>&,
                                    DecoderKind, const decode::DecodeConfig&, const std::string&);
template EvalResult run_eval<double>(const model::Net<double>&, model::Role,
                                     const tasks::TaskSpec&, const std::vector<std::vector<int>>&,
                                     DecoderKind, const decode::DecodeConfig&, const std::string&);
template std::vector<Metrics> sweep_thresholds<float>(const model::Net<float>&,
                                                      const tasks::TaskSpec&,
                                                      const std::vector<std::vector<int>>&,
                                                      const decode::DecodeConfig&);
template std::vector<Metrics> sweep_thresholds<double>(const model::Net<double>&,
                                                       const tasks::TaskSpec&,
                                                       const std::vector<std::vector<int>>&,
                                                       const decode::DecodeConfig&);

}  // namespace d2f::harness
