#include "d2f/report.hpp"

#include <charconv>
#include <cmath>

#include <json.hpp>

namespace d2f::report {

using nlohmann::json;

std::string fmt_double(double v) {
    if (!std::isfinite(v)) return "0";  // reports never carry inf/nan on purpose
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc(), "fmt_double: to_chars failed");
    return std::string(buf, end);
}

namespace {

const char* const kColumns[] = {
    "arm",           "decoder",        "tau_add",          "tau_act",
    "tau_conf",      "examples",       "exact_match",      "forward_passes",
    "total_decoded", "tokens_per_forward", "tokens_per_second", "speedup_vs_baseline",
    "mean_latency_ms", "mean_gen_length",
};

// Column values as strings, in kColumns order.
std::vector<std::string> row_values(const harness::Metrics& m, double speedup) {
    return {
        m.arm,
        m.decoder,
        fmt_double(m.tau_add),
        fmt_double(m.tau_act),
        fmt_double(m.tau_conf),
        std::to_string(m.examples),
        fmt_double(m.exact_match),
        std::to_string(m.forward_passes),
        std::to_string(m.total_decoded),
        fmt_double(m.tokens_per_forward),
        fmt_double(m.tokens_per_second),
        fmt_double(speedup),
        fmt_double(m.mean_latency_ms),
        fmt_double(m.mean_gen_length),
    };
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    return out;
}

std::string json_escape(const std::string& s) {
    return json(s).dump();  // quoted and escaped
}

}  // namespace

void emit_report(const std::vector<harness::Metrics>& rows, const std::string& baseline_arm,
                 const std::string& csv_path, const std::string& json_path) {
    double base_tps = 0.0;
    if (!rows.empty()) {
        const std::string want = baseline_arm.empty() ? rows.front().arm : baseline_arm;
        const harness::Metrics* base = nullptr;
        for (const auto& m : rows) {
            if (m.arm == want) {
                base = &m;
                break;
            }
        }
        require(base != nullptr, "emit_report: baseline arm not found: " + want);
        base_tps = base->tokens_per_second;
    }
    auto speedup_of = [&](const harness::Metrics& m) {
        return base_tps > 0.0 ? m.tokens_per_second / base_tps : 0.0;
    };

    const size_t ncols = std::size(kColumns);
    if (!csv_path.empty()) {
        auto out = open_out(csv_path);
        for (size_t c = 0; c < ncols; ++c) out << (c ? "," : "") << kColumns[c];
        out << "\n";
        for (const auto& m : rows) {
            const auto vals = row_values(m, speedup_of(m));
            for (size_t c = 0; c < ncols; ++c) out << (c ? "," : "") << vals[c];
            out << "\n";
        }
        require(out.good(), "write failed: " + csv_path);
    }

    if (!json_path.empty()) {
        // Hand-assembled so numeric strings match the CSV byte for byte.
        auto out = open_out(json_path);
        out << "[";
        for (size_t r = 0; r < rows.size(); ++r) {
            const auto vals = row_values(rows[r], speedup_of(rows[r]));
            out << (r ? ",\n " : "\n ") << "{";
            for (size_t c = 0; c < ncols; ++c) {
                out << (c ? ", " : "") << "\"" << kColumns[c] << "\": ";
                if (c < 2) {
                    out << json_escape(vals[c]);  // arm, decoder are strings
                } else {
                    out << vals[c];
                }
            }
            out << "}";
        }
        out << (rows.empty() ? "]" : "\n]") << "\n";
        require(out.good(), "write failed: " + json_path);
    }
}

std::vector<harness::Metrics> load_metrics(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open report: " + path);
    json j = json::parse(in);
    require(j.is_array(), "report is not a JSON array: " + path);

    std::vector<harness::Metrics> rows;
    rows.reserve(j.size());
    for (const auto& o : j) {
        harness::Metrics m;
        m.arm = o.at("arm").get<std::string>();
        m.decoder = o.at("decoder").get<std::string>();
        m.tau_add = o.at("tau_add").get<double>();
        m.tau_act = o.at("tau_act").get<double>();
        m.tau_conf = o.at("tau_conf").get<double>();
        m.examples = o.at("examples").get<long>();
        m.exact_match = o.at("exact_match").get<double>();
        m.forward_passes = o.at("forward_passes").get<long>();
        m.total_decoded = o.at("total_decoded").get<long>();
        m.tokens_per_forward = o.at("tokens_per_forward").get<double>();
        m.tokens_per_second = o.at("tokens_per_second").get<double>();
        m.mean_latency_ms = o.at("mean_latency_ms").get<double>();
        m.mean_gen_length = o.at("mean_gen_length").get<double>();
        rows.push_back(std::move(m));
    }
    return rows;
}

void save_dataset(const std::string& path, const tasks::Dataset& ds, int vocab_size,
                  uint64_t seed) {
    json j;
    j["task"] = {{"kind", tasks::task_name(ds.spec.kind)},
                 {"content_len", ds.spec.content_len},
                 {"alphabet", ds.spec.alphabet},
                 {"digits", ds.spec.digits}};
    j["vocab_size"] = vocab_size;
    j["seed"] = seed;
    j["train"] = ds.train;
    j["held_out"] = ds.held_out;
    auto out = open_out(path);
    out << j.dump(1) << "\n";
    require(out.good(), "write failed: " + path);
}

LoadedDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open dataset: " + path);
    json j = json::parse(in);

    LoadedDataset r;
    const auto& t = j.at("task");
    r.data.spec.kind = tasks::task_from_name(t.at("kind").get<std::string>());
    r.data.spec.content_len = t.at("content_len").get<int>();
    r.data.spec.alphabet = t.at("alphabet").get<int>();
    r.data.spec.digits = t.at("digits").get<int>();
    r.data.spec.validate();
    r.vocab_size = j.at("vocab_size").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.data.train = j.at("train").get<std::vector<std::vector<int>>>();
    r.data.held_out = j.at("held_out").get<std::vector<std::vector<int>>>();
    const int T = r.data.spec.seq_len();
    for (const auto* split : {&r.data.train, &r.data.held_out}) {
        for (const auto& row : *split) {
            require(static_cast<int>(row.size()) == T, "dataset row length mismatch: " + path);
        }
    }
    return r;
}

LossLogger::LossLogger(const std::string& path) : out_(path) {
    require(out_.good(), "cannot open loss log: " + path);
}

void LossLogger::log(long step, double loss, double wall_ms) {
    out_ << "{\"step\": " << step << ", \"loss\": " << fmt_double(loss)
         << ", \"wall_ms\": " << fmt_double(wall_ms) << "}\n";
    out_.flush();
}

void write_trace(const std::string& path, const std::vector<decode::TraceRecord>& trace) {
    auto out = open_out(path);
    for (const auto& t : trace) {
        out << "{\"step\": " << t.step << ", \"block_index\": " << t.block_index
            << ", \"state\": \"" << t.state << "\", \"decoded_positions\": [";
        for (size_t i = 0; i < t.decoded_positions.size(); ++i) {
            out << (i ? ", " : "") << t.decoded_positions[i];
        }
        out << "], \"appended\": " << (t.appended ? "true" : "false")
            << ", \"committed_blocks\": " << t.committed_blocks << "}\n";
    }
    require(out.good(), "write failed: " + path);
}

}  // namespace d2f::report
