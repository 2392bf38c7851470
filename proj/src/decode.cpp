#include "d2f/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "d2f/numerics.hpp"

namespace d2f::decode {

void DecodeConfig::validate() const {
    require(block_len >= 1, "decode: block_len must be >= 1");
    require(max_len >= 1, "decode: max_len must be >= 1");
    require(tau_add > 0.0 && tau_add <= 1.0, "decode: tau_add out of range");
    require(tau_act > 0.0 && tau_act <= 1.0, "decode: tau_act out of range");
    require(tau_conf > 0.0 && tau_conf <= 1.0, "decode: tau_conf out of range");
    require(tau_add <= tau_act, "decode: tau_add must not exceed tau_act");
}

std::vector<size_t> select_positions(const std::vector<double>& conf, BlockState state,
                                     double tau_conf) {
    std::vector<size_t> chosen;
    for (size_t i = 0; i < conf.size(); ++i) {
        if (conf[i] > tau_conf) {
            chosen.push_back(i);
        }
    }
    if (chosen.empty() && state == BlockState::fully && !conf.empty()) {
        size_t best = 0;
        for (size_t i = 1; i < conf.size(); ++i) {
            if (conf[i] > conf[best]) {
                best = i;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

const char* block_state_name(BlockState s) {
    switch (s) {
        case BlockState::semi:
            return "semi_activated";
        case BlockState::fully:
            return "fully_activated";
        case BlockState::complete:
            return "complete";
    }
    return "?";
}

std::vector<int> DecodeResult::answer_content() const {
    std::vector<int> out;
    for (size_t p = prompt_len; p < tokens.size(); ++p) {
        if (tokens[p] == tokens::kEos) {
            break;
        }
        out.push_back(tokens[p]);
    }
    return out;
}

template <typename Real>
TransformerPredictor<Real>::TransformerPredictor(const model::Net<Real>& net,
                                                 model::MaskSpec mask, bool use_cache)
    : net_(&net), mask_(mask), use_cache_(use_cache) {
    cache_.init(net.cfg);
}

template <typename Real>
void TransformerPredictor<Real>::begin_sequence(int prompt_len) {
    mask_.prompt_len = prompt_len;
    cache_.reset();
}

template <typename Real>
int TransformerPredictor<Real>::forward(const std::vector<int>& tokens, int total_len,
                                        Mat<Real>& logits) {
    if (!use_cache_) {
        cache_.reset();
    }
    const int first = cache_.materialized_len;
    net_->forward_window(tokens, total_len, first, mask_, cache_, logits);
    if (use_cache_) {
        // Rows under the committed prefix were just recomputed from final
        // tokens only, so they are now safe to reuse.
        cache_.materialized_len = cache_.committed_len;
    }
    return first;
}

template <typename Real>
void TransformerPredictor<Real>::on_commit(int len) {
    require(len >= cache_.committed_len, "predictor: commit moved backwards");
    cache_.committed_len = len;
}

template <typename Real>
int ScriptedPredictor<Real>::forward(const std::vector<int>& tokens, int total_len,
                                     Mat<Real>& logits) {
    (void)tokens;
    logits.resize(total_len, vocab_);
    const std::map<int, Cell>* m =
        calls_ < static_cast<int>(script_.size()) ? &script_[calls_] : nullptr;
    for (int pos = 0; pos < total_len; ++pos) {
        Cell c = fallback_;
        if (m) {
            const auto it = m->find(pos);
            if (it != m->end()) {
                c = it->second;
            }
        }
        require(c.token >= 0 && c.token < vocab_, "scripted predictor: token out of range");
        const double rest = (1.0 - c.conf) / double(vocab_ - 1);
        Real* row = logits.row(pos);
        for (int j = 0; j < vocab_; ++j) {
            row[j] = Real(std::log(rest));
        }
        row[c.token] = Real(std::log(c.conf));
    }
    ++calls_;
    return 0;
}

namespace {

struct Blk {
    int start = 0;
    int len = 0;
    BlockState state = BlockState::semi;
};

// Greedy read-out of one position's distribution: softmax over the whole
// vocabulary, then argmax and confidence over everything except the mask id
// (a model must never emit a mask). Ties break to the lowest token id.
template <typename Real>
void read_position(const Real* logit_row, int vocab, std::vector<Real>& scratch, int* token,
                   double* conf) {
    for (int j = 0; j < vocab; ++j) {
        scratch[j] = logit_row[j];
    }
    numerics::softmax_row(scratch.data(), vocab);
    int best = -1;
    double best_p = -1.0;
    for (int j = 0; j < vocab; ++j) {
        if (j == tokens::kMask) {
            continue;
        }
        if (double(scratch[j]) > best_p) {
            best_p = double(scratch[j]);
            best = j;
        }
    }
    *token = best;
    *conf = best_p;
}

template <typename Real>
DecodeResult run_pipeline(Predictor<Real>& pred, const std::vector<int>& prompt,
                          DecodeConfig cfg) {
    cfg.validate();
    const int P = static_cast<int>(prompt.size());
    require(P >= 1, "decode: empty prompt");
    require(P + cfg.max_len <= pred.max_total_len(), "decode: prompt + max_len too long");
    const auto t0 = std::chrono::steady_clock::now();

    DecodeResult res;
    res.prompt_len = P;
    res.tokens = prompt;
    pred.begin_sequence(P);
    pred.on_commit(P);  // the prompt is final from the start

    std::vector<Blk> blocks;
    int first_active = 0;
    bool eos_seen = false;
    Mat<Real> logits;
    const int V = pred.vocab_size();
    std::vector<Real> prow(V);

    const auto total_answer = [&] { return static_cast<int>(res.tokens.size()) - P; };
    const auto masked_in = [&](const Blk& b) {
        int m = 0;
        for (int p = b.start; p < b.start + b.len; ++p) {
            m += res.tokens[p] == tokens::kMask;
        }
        return m;
    };
    const auto ratio = [&](const Blk& b) { return double(b.len - masked_in(b)) / double(b.len); };

    long step = 0;
    const long step_limit = 4L * cfg.max_len + 16;
    while (true) {
        const bool none_active = first_active == static_cast<int>(blocks.size());
        const bool can_append = !eos_seen && total_answer() < cfg.max_len;
        if (none_active && !can_append) {
            break;
        }
        ++step;
        require(step <= step_limit, "decode: pipeline made no progress");

        // 1. maybe append a block (strict > on tau_add; a complete last block
        //    always admits the next one, which is what a tau_add of 1.0 —
        //    the cache-only baseline — reduces to). New blocks are born
        //    semi_activated; the exceptions are block 0 and a block whose
        //    predecessor is already done, which start fully_activated.
        int appended_index = -1;
        if (can_append) {
            bool room_ok = true;
            bool born_fully = true;
            if (!blocks.empty()) {
                const Blk& last = blocks.back();
                room_ok = last.state == BlockState::complete || ratio(last) > cfg.tau_add;
                born_fully = last.state == BlockState::complete;
            }
            if (room_ok) {
                Blk nb;
                nb.start = P + total_answer();
                nb.len = std::min(cfg.block_len, cfg.max_len - total_answer());
                nb.state = born_fully ? BlockState::fully : BlockState::semi;
                blocks.push_back(nb);
                appended_index = static_cast<int>(blocks.size()) - 1;
                res.tokens.resize(res.tokens.size() + nb.len, tokens::kMask);
            }
        }

        // 2. one forward over the unmaterialized suffix
        const int L = static_cast<int>(res.tokens.size());
        const int first = pred.forward(res.tokens, L, logits);
        ++res.forwards;

        // 3. decode each active block
        struct Rec {
            int bi;
            BlockState state_at_decode;
            std::vector<int> decoded;
        };
        std::vector<Rec> recs;
        bool any_active_incomplete = false;
        bool any_decoded = false;
        for (int bi = first_active; bi < static_cast<int>(blocks.size()); ++bi) {
            Blk& b = blocks[bi];
            Rec rec{bi, b.state, {}};
            if (b.state != BlockState::complete) {
                any_active_incomplete = true;
                std::vector<int> pos, tok;
                std::vector<double> conf;
                for (int p = b.start; p < b.start + b.len; ++p) {
                    if (res.tokens[p] != tokens::kMask) {
                        continue;
                    }
                    require(p >= first, "decode: logit window misses an active position");
                    int t = 0;
                    double c = 0.0;
                    read_position(logits.row(p - first), V, prow, &t, &c);
                    pos.push_back(p);
                    tok.push_back(t);
                    conf.push_back(c);
                }
                for (const size_t i : select_positions(conf, b.state, cfg.tau_conf)) {
                    res.tokens[pos[i]] = tok[i];
                    eos_seen = eos_seen || tok[i] == tokens::kEos;
                    rec.decoded.push_back(pos[i]);
                    any_decoded = true;
                }
                if (masked_in(b) == 0) {
                    b.state = BlockState::complete;
                }
            }
            recs.push_back(std::move(rec));
        }
        // The first active block is always fully_activated by the time it is
        // decoded, so a step over incomplete blocks must place something.
        require(any_decoded || !any_active_incomplete, "decode: step made no progress");

        // 4. promote semi blocks whose predecessor is done or nearly done
        for (int bi = first_active; bi < static_cast<int>(blocks.size()); ++bi) {
            Blk& b = blocks[bi];
            if (b.state != BlockState::semi) {
                continue;
            }
            bool pred_ok = bi == first_active;  // predecessor already committed
            if (!pred_ok) {
                const Blk& pb = blocks[bi - 1];
                pred_ok = pb.state == BlockState::complete || ratio(pb) > cfg.tau_act;
            }
            if (pred_ok) {
                b.state = BlockState::fully;
            }
        }

        // 5. commit the maximal complete prefix
        while (first_active < static_cast<int>(blocks.size()) &&
               blocks[first_active].state == BlockState::complete) {
            ++first_active;
        }
        const int committed_len =
            first_active == 0 ? P : blocks[first_active - 1].start + blocks[first_active - 1].len;
        pred.on_commit(committed_len);

        if (cfg.emit_trace) {
            for (auto& rec : recs) {
                TraceRecord tr;
                tr.step = step;
                tr.block_index = rec.bi;
                tr.state = block_state_name(rec.state_at_decode);
                tr.decoded_positions = std::move(rec.decoded);
                tr.appended = rec.bi == appended_index;
                tr.committed_blocks = first_active;
                res.trace.push_back(std::move(tr));
            }
        }
    }

    res.steps = step;
    res.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace

template <typename Real>
DecodeResult d2f_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                        const DecodeConfig& cfg) {
    return run_pipeline(pred, prompt, cfg);
}

template <typename Real>
DecodeResult block_sequential_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                                     const DecodeConfig& cfg) {
    DecodeConfig c = cfg;
    c.tau_add = 1.0;
    c.tau_act = 1.0;  // keep tau_add <= tau_act; born state is fully anyway
    return run_pipeline(pred, prompt, c);
}

template <typename Real>
DecodeResult vanilla_decode(Predictor<Real>& pred, const std::vector<int>& prompt,
                            const DecodeConfig& cfg) {
    cfg.validate();
    const int P = static_cast<int>(prompt.size());
    const int A = cfg.max_len;
    require(P >= 1, "decode: empty prompt");
    require(P + A <= pred.max_total_len(), "decode: prompt + max_len too long");
    const long S = cfg.vanilla_steps > 0 ? cfg.vanilla_steps : A;
    require(A % S == 0, "vanilla decode: steps must divide max_len");
    const int quota = A / static_cast<int>(S);
    const auto t0 = std::chrono::steady_clock::now();

    DecodeResult res;
    res.prompt_len = P;
    res.tokens = prompt;
    res.tokens.resize(size_t(P) + A, tokens::kMask);
    pred.begin_sequence(P);

    Mat<Real> logits;
    const int V = pred.vocab_size();
    std::vector<Real> prow(V);
    struct Cand {
        double conf;
        int pos;
        int tok;
    };

    int remaining = A;
    long step = 0;
    while (remaining > 0) {
        ++step;
        const int first = pred.forward(res.tokens, P + A, logits);
        require(first == 0, "vanilla decode needs full-sequence logits");
        ++res.forwards;

        std::vector<Cand> cands;
        for (int p = P; p < P + A; ++p) {
            if (res.tokens[p] != tokens::kMask) {
                continue;
            }
            Cand c;
            c.pos = p;
            read_position(logits.row(p), V, prow, &c.tok, &c.conf);
            cands.push_back(c);
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.conf != b.conf ? a.conf > b.conf : a.pos < b.pos;
        });
        const int take = std::min<int>(quota, static_cast<int>(cands.size()));
        for (int i = 0; i < take; ++i) {
            res.tokens[cands[i].pos] = cands[i].tok;
        }
        remaining -= take;
    }

    res.steps = step;
    res.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

template class TransformerPredictor<float>;
template class TransformerPredictor<double>;
template class ScriptedPredictor<float>;
template class ScriptedPredictor<double>;
template DecodeResult d2f_decode<float>(Predictor<float>&, const std::vector<int>&,
                                        const DecodeConfig&);
template DecodeResult d2f_decode<double>(Predictor<double>&, const std::vector<int>&,
                                         const DecodeConfig&);
template DecodeResult block_sequential_decode<float>(Predictor<float>&, const std::vector<int>&,
                                                     const DecodeConfig&);
template DecodeResult block_sequential_decode<double>(Predictor<double>&, const std::vector<int>&,
                                                      const DecodeConfig&);
template DecodeResult vanilla_decode<float>(Predictor<float>&, const std::vector<int>&,
                                            const DecodeConfig&);
template DecodeResult vanilla_decode<double>(Predictor<double>&, const std::vector<int>&,
                                             const DecodeConfig&);

}  // namespace d2f::decode
