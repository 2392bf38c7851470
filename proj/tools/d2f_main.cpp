// Command-line front end: gen-data / train-teacher / distill / eval / sweep /
// report. Every value can come from a JSON config file (--config), be
// overridden per flag, or patched with --set dotted.key=value; precedence is
// flag > --set > config file > built-in default.

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "d2f/checkpoint.hpp"
#include "d2f/decode.hpp"
#include "d2f/diffusion.hpp"
#include "d2f/distill.hpp"
#include "d2f/harness.hpp"
#include "d2f/report.hpp"
#include "d2f/tasks.hpp"

using json = nlohmann::json;
using namespace d2f;

namespace {

const json* find_dotted(const json& j, const std::string& key) {
    const json* cur = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
        if (dot == std::string::npos) return cur;
        start = dot + 1;
    }
}

void set_dotted(json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, "--set expects key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* cur = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        require(!part.empty(), "--set has an empty key segment: " + assignment);
        if (dot == std::string::npos) {
            json val = json::parse(raw, nullptr, false);  // numbers, bools, arrays...
            (*cur)[part] = val.is_discarded() ? json(raw) : val;  // ...else a plain string
            return;
        }
        cur = &(*cur)[part];
        start = dot + 1;
    }
}

// Ties one CLI option to one config key. After parsing, apply() fills every
// variable the user did not pass on the command line from the config.
class Wiring {
  public:
    Wiring(CLI::App* cmd, const json* cfg) : cmd_(cmd), cfg_(cfg) {}

    template <typename T>
    CLI::Option* opt(const std::string& flag, T& var, const std::string& dotted,
                     const std::string& desc) {
        CLI::Option* o = cmd_->add_option(flag, var, desc + " [" + dotted + "]");
        appliers_.push_back([o, &var, dotted, this] {
            if (o->count() > 0) return;
            if (const json* v = find_dotted(*cfg_, dotted)) var = v->get<T>();
        });
        return o;
    }

    void apply() const {
        for (const auto& f : appliers_) f();
    }

  private:
    CLI::App* cmd_;
    const json* cfg_;
    std::vector<std::function<void()>> appliers_;
};

// Per-subcommand plumbing shared by every command: --config and --set.
struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    json cfg;

    void wire(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--set", sets, "override a config key, e.g. --set train.steps=500");
    }

    void load() {
        cfg = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            require(in.good(), "cannot open config: " + config_path);
            cfg = json::parse(in);
            require(cfg.is_object(), "config root must be a JSON object: " + config_path);
        }
        for (const auto& s : sets) set_dotted(cfg, s);
    }
};

void print_metrics(const harness::Metrics& m) {
    std::printf(
        "%-18s decoder=%-10s em=%.4f forwards=%ld tokens/forward=%.3f tps=%.1f "
        "latency_ms=%.2f gen_len=%.2f n=%ld\n",
        m.arm.c_str(), m.decoder.c_str(), m.exact_match, m.forward_passes, m.tokens_per_forward,
        m.tokens_per_second, m.mean_latency_ms, m.mean_gen_length, m.examples);
}

tasks::TaskSpec spec_from(const std::string& task, int content_len, int alphabet, int digits) {
    tasks::TaskSpec spec;
    spec.kind = tasks::task_from_name(task);
    spec.content_len = content_len;
    spec.alphabet = alphabet;
    spec.digits = digits;
    spec.validate();
    return spec;
}

decode::DecodeResult decode_one(const model::Net<float>& net, harness::DecoderKind kind,
                                const tasks::TaskSpec& spec, const std::vector<int>& prompt,
                                decode::DecodeConfig dcfg) {
    const bool vanilla = kind == harness::DecoderKind::vanilla;
    model::MaskSpec mask{vanilla ? model::MaskSpec::Kind::full : model::MaskSpec::Kind::block_causal,
                         spec.prompt_len(), vanilla ? 1 : dcfg.block_len};
    decode::TransformerPredictor<float> pred(net, mask, !vanilla);
    switch (kind) {
        case harness::DecoderKind::vanilla: return decode::vanilla_decode(pred, prompt, dcfg);
        case harness::DecoderKind::cache_only:
            return decode::block_sequential_decode(pred, prompt, dcfg);
        case harness::DecoderKind::d2f: break;
    }
    return decode::d2f_decode(pred, prompt, dcfg);
}

std::function<void(long, double, double)> make_train_logger(const std::string& loss_log_path,
                                                            const char* tag,
                                                            std::optional<report::LossLogger>& slot) {
    if (!loss_log_path.empty()) slot.emplace(loss_log_path);
    std::string name(tag);
    auto* logger = slot ? &*slot : nullptr;
    return [logger, name](long step, double loss, double wall_ms) {
        if (logger) logger->log(step, loss, wall_ms);
        std::fprintf(stderr, "[%s] step %ld loss %.6f (%.1fs)\n", name.c_str(), step, loss,
                     wall_ms / 1000.0);
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block-pipelined diffusion decoding: data, training, and benchmarks"};
    app.require_subcommand(1);

    int rc = 0;
    auto guard = [&rc](const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            rc = 1;
        }
    };

    // ---- gen-data ----------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::string task = "addition", out = "dataset.json";
            int content_len = 8, alphabet = 10, digits = 2;
            int n_train = 2000, n_held_out = 200, vocab = 0;
            uint64_t seed = 1;
        };
        auto a = std::make_shared<A>();
        w->opt("--task", a->task, "task.kind", "copy | reverse | addition");
        w->opt("--content-len", a->content_len, "task.content_len", "symbols per copy/reverse example");
        w->opt("--alphabet", a->alphabet, "task.alphabet", "distinct copy/reverse symbols");
        w->opt("--digits", a->digits, "task.digits", "addition operand width");
        w->opt("--n-train", a->n_train, "data.n_train", "training examples");
        w->opt("--n-held-out", a->n_held_out, "data.n_held_out", "held-out examples");
        w->opt("--vocab", a->vocab, "data.vocab_size", "model vocab size (0 = task minimum)");
        w->opt("--seed", a->seed, "seed", "RNG seed");
        w->opt("--out", a->out, "data.path", "output dataset file");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                const auto spec = spec_from(a->task, a->content_len, a->alphabet, a->digits);
                const int vocab = a->vocab > 0 ? a->vocab : spec.min_vocab();
                const auto ds = tasks::gen_dataset(spec, a->n_train, a->n_held_out, a->seed, vocab);
                report::save_dataset(a->out, ds, vocab, a->seed);
                std::printf("wrote %s: task=%s train=%zu held_out=%zu seq_len=%d vocab=%d\n",
                            a->out.c_str(), tasks::task_name(spec.kind), ds.train.size(),
                            ds.held_out.size(), spec.seq_len(), vocab);
            });
        });
    }

    // ---- train-teacher -----------------------------------------------------
    {
        auto* cmd = app.add_subcommand("train-teacher", "masked-diffusion training, full attention");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::string data = "dataset.json", out = "teacher.ckpt", loss_log;
            int dim = 64, layers = 4, heads = 4, max_seq = 0, batch = 8;
            long steps = 2000, log_every = 100;
            double lr = 1e-3, weight_decay = 0.0, grad_clip = 1.0;
            bool inv_t_weight = true;
            uint64_t seed = 1;
        };
        auto a = std::make_shared<A>();
        w->opt("--data", a->data, "data.path", "dataset file");
        w->opt("--out", a->out, "teacher.out", "checkpoint to write");
        w->opt("--loss-log", a->loss_log, "teacher.loss_log", "JSONL loss log (optional)");
        w->opt("--dim", a->dim, "model.dim", "model width");
        w->opt("--layers", a->layers, "model.n_layers", "transformer layers");
        w->opt("--heads", a->heads, "model.n_heads", "attention heads");
        w->opt("--max-seq", a->max_seq, "model.max_seq_len", "max sequence length (0 = dataset's)");
        w->opt("--steps", a->steps, "teacher.steps", "optimizer steps");
        w->opt("--batch", a->batch, "teacher.batch", "batch size");
        w->opt("--lr", a->lr, "teacher.lr", "learning rate");
        w->opt("--weight-decay", a->weight_decay, "teacher.weight_decay", "AdamW weight decay");
        w->opt("--grad-clip", a->grad_clip, "teacher.grad_clip", "global grad-norm clip");
        w->opt("--inv-t-weight", a->inv_t_weight, "teacher.inv_t_weight", "weight loss by 1/t");
        w->opt("--log-every", a->log_every, "teacher.log_every", "steps between log lines");
        w->opt("--seed", a->seed, "seed", "RNG seed (init + training)");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                const auto loaded = report::load_dataset(a->data);
                model::ModelConfig mc;
                mc.vocab_size = loaded.vocab_size;
                mc.dim = a->dim;
                mc.n_layers = a->layers;
                mc.n_heads = a->heads;
                mc.max_seq_len = a->max_seq > 0 ? a->max_seq : loaded.data.spec.seq_len();
                auto net = model::Net<float>::init(mc, a->seed);

                diffusion::TeacherTrainConfig tc;
                tc.steps = a->steps;
                tc.batch = a->batch;
                tc.lr = a->lr;
                tc.weight_decay = a->weight_decay;
                tc.grad_clip = a->grad_clip;
                tc.inv_t_weight = a->inv_t_weight;
                tc.seed = a->seed;
                tc.log_every = a->log_every;

                std::optional<report::LossLogger> slot;
                const long empty = diffusion::train_teacher(
                    net, loaded.data.train, loaded.data.spec.prompt_len(), tc,
                    make_train_logger(a->loss_log, "teacher", slot));
                model::save_checkpoint(a->out, net, model::Role::teacher);
                std::printf("wrote %s (dim=%d layers=%d heads=%d vocab=%d seq=%d, "
                            "%ld empty-mask draws)\n",
                            a->out.c_str(), mc.dim, mc.n_layers, mc.n_heads, mc.vocab_size,
                            mc.max_seq_len, empty);
            });
        });
    }

    // ---- distill -----------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("distill", "block-causal student from a frozen teacher");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::string data = "dataset.json", teacher = "teacher.ckpt", out = "student.ckpt";
            std::string loss_log, schedule = "monotone";
            int batch = 8, block_len = 8;
            long steps = 2000, log_every = 100;
            double t_lo = 0.05, t_hi = 0.95, lr = 1e-3, weight_decay = 0.0, grad_clip = 1.0;
            uint64_t seed = 1;
        };
        auto a = std::make_shared<A>();
        w->opt("--data", a->data, "data.path", "dataset file");
        w->opt("--teacher", a->teacher, "distill.teacher", "teacher checkpoint");
        w->opt("--out", a->out, "distill.out", "student checkpoint to write");
        w->opt("--loss-log", a->loss_log, "distill.loss_log", "JSONL loss log (optional)");
        w->opt("--steps", a->steps, "distill.steps", "optimizer steps");
        w->opt("--batch", a->batch, "distill.batch", "batch size");
        w->opt("--block-len", a->block_len, "distill.block_len", "training block length");
        w->opt("--t-lo", a->t_lo, "distill.t_lo", "noise schedule lower bound");
        w->opt("--t-hi", a->t_hi, "distill.t_hi", "noise schedule upper bound");
        w->opt("--schedule", a->schedule, "distill.schedule", "monotone | random");
        w->opt("--lr", a->lr, "distill.lr", "learning rate");
        w->opt("--weight-decay", a->weight_decay, "distill.weight_decay", "AdamW weight decay");
        w->opt("--grad-clip", a->grad_clip, "distill.grad_clip", "global grad-norm clip");
        w->opt("--log-every", a->log_every, "distill.log_every", "steps between log lines");
        w->opt("--seed", a->seed, "seed", "RNG seed");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                require(a->schedule == "monotone" || a->schedule == "random",
                        "schedule must be monotone or random");
                const auto loaded = report::load_dataset(a->data);
                const auto teacher =
                    model::load_checkpoint<float>(a->teacher, model::Role::teacher);
                auto student = teacher;  // the student starts as a parameter copy

                distill::DistillConfig dc;
                dc.steps = a->steps;
                dc.batch = a->batch;
                dc.block_len = a->block_len;
                dc.t_lo = a->t_lo;
                dc.t_hi = a->t_hi;
                dc.monotone = a->schedule == "monotone";
                dc.lr = a->lr;
                dc.weight_decay = a->weight_decay;
                dc.grad_clip = a->grad_clip;
                dc.seed = a->seed;
                dc.log_every = a->log_every;

                std::optional<report::LossLogger> slot;
                distill::distill_student(student, teacher, loaded.data.train,
                                         loaded.data.spec.prompt_len(), dc,
                                         make_train_logger(a->loss_log, "distill", slot));
                model::save_checkpoint(a->out, student, model::Role::student);
                std::printf("wrote %s (block_len=%d schedule=%s steps=%ld)\n", a->out.c_str(),
                            dc.block_len, a->schedule.c_str(), dc.steps);
            });
        });
    }

    // ---- eval --------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("eval", "decode the held-out split and score it");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::string data = "dataset.json", ckpt = "student.ckpt", decoder = "d2f";
            std::string arm, csv, json_out, trace;
            int block_len = 8, max_len = 0, limit = 0;
            long vanilla_steps = 0;
            double tau_add = 0.1, tau_act = 0.95, tau_conf = 0.9;
        };
        auto a = std::make_shared<A>();
        w->opt("--data", a->data, "data.path", "dataset file");
        w->opt("--checkpoint", a->ckpt, "eval.checkpoint", "model checkpoint");
        w->opt("--decoder", a->decoder, "eval.decoder", "vanilla | cache_only | d2f");
        w->opt("--block-len", a->block_len, "decode.block_len", "inference block length");
        w->opt("--max-len", a->max_len, "decode.max_len", "answer budget (0 = task answer length)");
        w->opt("--tau-add", a->tau_add, "decode.tau_add", "append threshold");
        w->opt("--tau-act", a->tau_act, "decode.tau_act", "promotion threshold");
        w->opt("--tau-conf", a->tau_conf, "decode.tau_conf", "decode confidence threshold");
        w->opt("--vanilla-steps", a->vanilla_steps, "decode.vanilla_steps",
               "vanilla step budget (0 = max_len)");
        w->opt("--limit", a->limit, "eval.limit", "evaluate only the first N examples (0 = all)");
        w->opt("--arm", a->arm, "eval.arm", "row label in reports");
        w->opt("--csv", a->csv, "eval.csv", "write a one-row CSV report");
        w->opt("--json", a->json_out, "eval.json", "write a one-row JSON report");
        w->opt("--trace", a->trace, "eval.trace", "write the first example's decode trace (JSONL)");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                const auto kind = harness::decoder_from_name(a->decoder);
                const auto role = kind == harness::DecoderKind::vanilla ? model::Role::teacher
                                                                        : model::Role::student;
                const auto loaded = report::load_dataset(a->data);
                const auto net = model::load_checkpoint<float>(a->ckpt, role);
                auto rows = loaded.data.held_out;
                if (a->limit > 0 && a->limit < static_cast<int>(rows.size())) {
                    rows.resize(a->limit);
                }

                decode::DecodeConfig dcfg;
                dcfg.block_len = a->block_len;
                dcfg.max_len = a->max_len > 0 ? a->max_len : loaded.data.spec.answer_len();
                dcfg.tau_add = a->tau_add;
                dcfg.tau_act = a->tau_act;
                dcfg.tau_conf = a->tau_conf;
                dcfg.vanilla_steps = a->vanilla_steps;

                const auto res =
                    harness::run_eval(net, role, loaded.data.spec, rows, kind, dcfg, a->arm);
                print_metrics(res.metrics);
                if (!a->csv.empty() || !a->json_out.empty()) {
                    report::emit_report({res.metrics}, "", a->csv, a->json_out);
                }
                if (!a->trace.empty()) {
                    decode::DecodeConfig tcfg = dcfg;
                    tcfg.emit_trace = true;
                    const auto& row0 = rows.front();
                    const std::vector<int> prompt(row0.begin(),
                                                  row0.begin() + loaded.data.spec.prompt_len());
                    const auto one = decode_one(net, kind, loaded.data.spec, prompt, tcfg);
                    report::write_trace(a->trace, one.trace);
                }
            });
        });
    }

    // ---- sweep -------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("sweep", "12-arm threshold grid over the held-out split");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::string data = "dataset.json", ckpt = "student.ckpt", baseline;
            std::string csv = "sweep.csv", json_out = "sweep.json";
            int block_len = 8, max_len = 0, limit = 0;
        };
        auto a = std::make_shared<A>();
        w->opt("--data", a->data, "data.path", "dataset file");
        w->opt("--checkpoint", a->ckpt, "sweep.checkpoint", "student checkpoint");
        w->opt("--block-len", a->block_len, "decode.block_len", "inference block length");
        w->opt("--max-len", a->max_len, "decode.max_len", "answer budget (0 = task answer length)");
        w->opt("--limit", a->limit, "sweep.limit", "evaluate only the first N examples (0 = all)");
        w->opt("--baseline", a->baseline, "sweep.baseline", "speedup baseline arm (default: first)");
        w->opt("--csv", a->csv, "sweep.csv_path", "CSV report path");
        w->opt("--json", a->json_out, "sweep.json_path", "JSON report path");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                const auto loaded = report::load_dataset(a->data);
                const auto net = model::load_checkpoint<float>(a->ckpt, model::Role::student);
                auto rows = loaded.data.held_out;
                if (a->limit > 0 && a->limit < static_cast<int>(rows.size())) {
                    rows.resize(a->limit);
                }
                decode::DecodeConfig base;
                base.block_len = a->block_len;
                base.max_len = a->max_len > 0 ? a->max_len : loaded.data.spec.answer_len();
                const auto grid = harness::sweep_thresholds(net, loaded.data.spec, rows, base);
                for (const auto& m : grid) print_metrics(m);
                report::emit_report(grid, a->baseline, a->csv, a->json_out);
                std::printf("wrote %s and %s\n", a->csv.c_str(), a->json_out.c_str());
            });
        });
    }

    // ---- report ------------------------------------------------------------
    {
        auto* cmd = app.add_subcommand("report", "merge JSON reports and recompute speedups");
        auto common = std::make_shared<CommonArgs>();
        common->wire(cmd);
        auto w = std::make_shared<Wiring>(cmd, &common->cfg);
        struct A {
            std::vector<std::string> inputs;
            std::string baseline, csv = "report.csv", json_out = "report.json";
        };
        auto a = std::make_shared<A>();
        w->opt("--in", a->inputs, "report.inputs", "JSON reports to merge (repeatable)");
        w->opt("--baseline", a->baseline, "report.baseline", "speedup baseline arm (default: first)");
        w->opt("--csv", a->csv, "report.csv_path", "CSV report path");
        w->opt("--json", a->json_out, "report.json_path", "JSON report path");
        cmd->callback([=, &rc] {
            guard([&] {
                common->load();
                w->apply();
                require(!a->inputs.empty(), "report: need at least one --in file");
                std::vector<harness::Metrics> rows;
                for (const auto& path : a->inputs) {
                    auto part = report::load_metrics(path);
                    rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                                std::make_move_iterator(part.end()));
                }
                for (const auto& m : rows) print_metrics(m);
                report::emit_report(rows, a->baseline, a->csv, a->json_out);
                std::printf("wrote %s and %s\n", a->csv.c_str(), a->json_out.c_str());
            });
        });
    }

    CLI11_PARSE(app, argc, argv);
    return rc;
}
