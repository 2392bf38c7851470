#include "d2f/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "d2f/numerics.hpp"
#include "d2f/tokens.hpp"

namespace d2f::diffusion {

CorruptResult corrupt(const std::vector<int>& clean, int prompt_len, double t, Rng& rng) {
    const int n = static_cast<int>(clean.size());
    require(prompt_len >= 0 && prompt_len <= n, "corrupt: bad prompt_len");
    CorruptResult r{clean, std::vector<uint8_t>(n, 0)};
    for (int p = prompt_len; p < n; ++p) {
        if (rng.uniform() < t) {
            r.noisy[p] = tokens::kMask;
            r.is_masked[p] = 1;
        }
    }
    return r;
}

CorruptResult corrupt_blocks(const std::vector<int>& clean, int prompt_len, int block_len,
                             const std::vector<double>& schedule, Rng& rng) {
    const int n = static_cast<int>(clean.size());
    require(prompt_len >= 0 && prompt_len <= n, "corrupt_blocks: bad prompt_len");
    require(block_len >= 1, "corrupt_blocks: bad block_len");
    const int n_blocks = (n - prompt_len + block_len - 1) / block_len;
    require(static_cast<int>(schedule.size()) == n_blocks, "corrupt_blocks: schedule length");
    CorruptResult r{clean, std::vector<uint8_t>(n, 0)};
    for (int p = prompt_len; p < n; ++p) {
        const int b = (p - prompt_len) / block_len;
        if (rng.uniform() < schedule[b]) {
            r.noisy[p] = tokens::kMask;
            r.is_masked[p] = 1;
        }
    }
    return r;
}

std::vector<double> sample_monotone_schedule(int n_blocks, double lo, double hi, Rng& rng) {
    require(n_blocks >= 1 && lo < hi, "sample_monotone_schedule: bad arguments");
    std::vector<double> s(n_blocks);
    for (;;) {
        for (auto& v : s) {
            v = rng.uniform(lo, hi);
        }
        std::sort(s.begin(), s.end());
        bool distinct = true;
        for (int i = 1; i < n_blocks; ++i) {
            if (s[i] == s[i - 1]) {
                distinct = false;
            }
        }
        if (distinct) {
            return s;
        }
    }
}

std::vector<double> sample_random_schedule(int n_blocks, double lo, double hi, Rng& rng) {
    require(n_blocks >= 1 && lo < hi, "sample_random_schedule: bad arguments");
    std::vector<double> s(n_blocks);
    for (auto& v : s) {
        v = rng.uniform(lo, hi);
    }
    return s;
}

template <typename Real>
double masked_ce_loss(model::TrainWorkspace<Real>& ws, const std::vector<int>& clean,
                      const std::vector<uint8_t>& is_masked, const std::vector<double>& inv_weight,
                      long* empty_mask_examples) {
    const int B = ws.batch, T = ws.seq, V = ws.logits.cols;
    require(static_cast<int>(clean.size()) == B * T, "masked_ce_loss: clean size");
    require(static_cast<int>(inv_weight.size()) == B, "masked_ce_loss: weight size");
    ws.dlogits.zero();
    double total = 0.0;
    for (int b = 0; b < B; ++b) {
        int m_count = 0;
        for (int i = 0; i < T; ++i) {
            m_count += is_masked[b * T + i];
        }
        if (m_count == 0) {
            if (empty_mask_examples) {
                ++*empty_mask_examples;
            }
            continue;
        }
        const double scale = inv_weight[b] / (double(m_count) * double(B));
        double ex_loss = 0.0;
        for (int i = 0; i < T; ++i) {
            const int r = b * T + i;
            if (!is_masked[r]) {
                continue;
            }
            const Real* lrow = ws.logits.row(r);
            Real* drow = ws.dlogits.row(r);
            // softmax into drow, then subtract the one-hot target
            for (int j = 0; j < V; ++j) {
                drow[j] = lrow[j];
            }
            numerics::softmax_row(drow, V);
            const int tgt = clean[r];
            ex_loss -= std::log(double(drow[tgt]) + 1e-30);
            for (int j = 0; j < V; ++j) {
                drow[j] = Real(double(drow[j]) * scale);
            }
            drow[tgt] -= Real(scale);
        }
        total += ex_loss * scale;
    }
    return total;
}

template <typename Real>
long train_teacher(model::Net<Real>& net, const std::vector<std::vector<int>>& data,
                   int prompt_len, const TeacherTrainConfig& cfg,
                   const std::function<void(long, double, double)>& on_log) {
    require(!data.empty(), "train_teacher: empty dataset");
    const int T = static_cast<int>(data[0].size());
    const int B = cfg.batch;

    model::TrainWorkspace<Real> ws;
    ws.init(net.cfg, B, T);
    model::MaskSpec mask;  // Kind::full: the teacher is bidirectional
    mask.prompt_len = prompt_len;

    std::vector<Real> grad(net.params.size(), Real(0));
    numerics::AdamState<Real> adam(net.params.size());
    numerics::AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;

    Rng rng(cfg.seed, 7);
    std::vector<int> toks(size_t(B) * T);
    std::vector<uint8_t> masked(size_t(B) * T);
    std::vector<int> clean(size_t(B) * T);
    std::vector<double> weights(B);
    long empty_masks = 0;

    const auto t0 = std::chrono::steady_clock::now();
    for (long step = 1; step <= cfg.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto& seq = data[rng.uniform_int(data.size())];
            require(static_cast<int>(seq.size()) == T, "train_teacher: ragged dataset");
            double t = rng.uniform();
            while (t <= 0.0) {  // keep the 1/t weight finite
                t = rng.uniform();
            }
            const CorruptResult cr = corrupt(seq, prompt_len, t, rng);
            std::copy(seq.begin(), seq.end(), clean.begin() + size_t(b) * T);
            std::copy(cr.noisy.begin(), cr.noisy.end(), toks.begin() + size_t(b) * T);
            std::copy(cr.is_masked.begin(), cr.is_masked.end(), masked.begin() + size_t(b) * T);
            weights[b] = cfg.inv_t_weight ? 1.0 / t : 1.0;
        }
        net.forward_train(toks, mask, ws);
        const double loss = masked_ce_loss(ws, clean, masked, weights, &empty_masks);
        require(std::isfinite(loss),
                "train_teacher: non-finite loss at step " + std::to_string(step));
        std::fill(grad.begin(), grad.end(), Real(0));
        net.backward_train(toks, mask, ws, grad);
        numerics::clip_global_norm(grad, Real(cfg.grad_clip));
        numerics::adamw_step(net.params, grad, adam, acfg);

        if (on_log && (step % cfg.log_every == 0 || step == cfg.steps)) {
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            on_log(step, loss, ms);
        }
    }
    return empty_masks;
}

template double masked_ce_loss<float>(model::TrainWorkspace<float>&, const std::vector<int>&,
                                      const std::vector<uint8_t>&, const std::vector<double>&,
                                      long*);
template double masked_ce_loss<double>(model::TrainWorkspace<double>&, const std::vector<int>&,
                                       const std::vector<uint8_t>&, const std::vector<double>&,
                                       long*);
template long train_teacher<float>(model::Net<float>&, const std::vector<std::vector<int>>&, int,
                                   const TeacherTrainConfig&,
                                   const std::function<void(long, double, double)>&);
template long train_teacher<double>(model::Net<double>&, const std::vector<std::vector<int>>&,
                                    int, const TeacherTrainConfig&,
                                    const std::function<void(long, double, double)>&);

}  // namespace d2f::diffusion
