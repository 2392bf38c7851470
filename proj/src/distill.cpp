#include "d2f/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "d2f/diffusion.hpp"
#include "d2f/numerics.hpp"

namespace d2f::distill {

template <typename Real>
double kl_to_teacher(model::TrainWorkspace<Real>& student_ws, const Mat<Real>& teacher_probs,
                     const std::vector<uint8_t>& is_masked) {
    const int R = student_ws.batch * student_ws.seq;
    const int V = student_ws.logits.cols;
    require(teacher_probs.rows == R && teacher_probs.cols == V, "kl_to_teacher: teacher shape");
    long total_masked = 0;
    for (int r = 0; r < R; ++r) {
        total_masked += is_masked[r];
    }
    student_ws.dlogits.zero();
    if (total_masked == 0) {
        return 0.0;
    }
    const double inv_m = 1.0 / double(total_masked);
    double loss = 0.0;
    for (int r = 0; r < R; ++r) {
        if (!is_masked[r]) {
            continue;
        }
        const Real* lrow = student_ws.logits.row(r);
        const Real* trow = teacher_probs.row(r);
        Real* drow = student_ws.dlogits.row(r);
        for (int j = 0; j < V; ++j) {
            drow[j] = lrow[j];
        }
        numerics::softmax_row(drow, V);  // drow = student probs
        loss += numerics::kl_row(trow, drow, V) * inv_m;
        for (int j = 0; j < V; ++j) {
            drow[j] = Real((double(drow[j]) - double(trow[j])) * inv_m);
        }
    }
    return loss;
}

template <typename Real>
void distill_student(model::Net<Real>& student, const model::Net<Real>& teacher,
                     const std::vector<std::vector<int>>& data, int prompt_len,
                     const DistillConfig& cfg,
                     const std::function<void(long, double, double)>& on_log) {
    require(!data.empty(), "distill_student: empty dataset");
    require(student.cfg == teacher.cfg, "distill_student: config mismatch");
    const int T = static_cast<int>(data[0].size());
    const int B = cfg.batch;
    const int answer_len = T - prompt_len;
    require(answer_len >= 1, "distill_student: no answer region");
    const int n_blocks = (answer_len + cfg.block_len - 1) / cfg.block_len;

    model::TrainWorkspace<Real> sws, tws;
    sws.init(student.cfg, B, T);
    tws.init(teacher.cfg, B, T);

    model::MaskSpec smask;
    smask.kind = model::MaskSpec::Kind::block_causal;
    smask.prompt_len = prompt_len;
    smask.block_len = cfg.block_len;
    model::MaskSpec tmask;  // full
    tmask.prompt_len = prompt_len;

    std::vector<Real> grad(student.params.size(), Real(0));
    numerics::AdamState<Real> adam(student.params.size());
    numerics::AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;

    Rng rng(cfg.seed, 11);
    std::vector<int> toks(size_t(B) * T);
    std::vector<uint8_t> masked(size_t(B) * T);
    Mat<Real> teacher_probs(B * T, teacher.cfg.vocab_size);
    const int V = teacher.cfg.vocab_size;

    const auto t0 = std::chrono::steady_clock::now();
    for (long step = 1; step <= cfg.steps; ++step) {
        for (int b = 0; b < B; ++b) {
            const auto& seq = data[rng.uniform_int(data.size())];
            require(static_cast<int>(seq.size()) == T, "distill_student: ragged dataset");
            const std::vector<double> sched =
                cfg.monotone ? diffusion::sample_monotone_schedule(n_blocks, cfg.t_lo, cfg.t_hi, rng)
                             : diffusion::sample_random_schedule(n_blocks, cfg.t_lo, cfg.t_hi, rng);
            const diffusion::CorruptResult cr =
                diffusion::corrupt_blocks(seq, prompt_len, cfg.block_len, sched, rng);
            std::copy(cr.noisy.begin(), cr.noisy.end(), toks.begin() + size_t(b) * T);
            std::copy(cr.is_masked.begin(), cr.is_masked.end(), masked.begin() + size_t(b) * T);
        }

        teacher.forward_train(toks, tmask, tws);
        for (int r = 0; r < B * T; ++r) {
            if (!masked[r]) {
                continue;
            }
            const Real* lrow = tws.logits.row(r);
            Real* prow = teacher_probs.row(r);
            for (int j = 0; j < V; ++j) {
                prow[j] = lrow[j];
            }
            numerics::softmax_row(prow, V);
        }

        student.forward_train(toks, smask, sws);
        const double loss = kl_to_teacher(sws, teacher_probs, masked);
        require(std::isfinite(loss),
                "distill_student: non-finite loss at step " + std::to_string(step));
        std::fill(grad.begin(), grad.end(), Real(0));
        student.backward_train(toks, smask, sws, grad);
        numerics::clip_global_norm(grad, Real(cfg.grad_clip));
        numerics::adamw_step(student.params, grad, adam, acfg);

        if (on_log && (step % cfg.log_every == 0 || step == cfg.steps)) {
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            on_log(step, loss, ms);
        }
    }
}

template double kl_to_teacher<float>(model::TrainWorkspace<float>&, const Mat<float>&,
                                     const std::vector<uint8_t>&);
template double kl_to_teacher<double>(model::TrainWorkspace<double>&, const Mat<double>&,
                                      const std::vector<uint8_t>&);
template void distill_student<float>(model::Net<float>&, const model::Net<float>&,
                                     const std::vector<std::vector<int>>&, int,
                                     const DistillConfig&,
                                     const std::function<void(long, double, double)>&);
template void distill_student<double>(model::Net<double>&, const model::Net<double>&,
                                      const std::vector<std::vector<int>>&, int,
                                      const DistillConfig&,
                                      const std::function<void(long, double, double)>&);

}  // namespace d2f::distill
