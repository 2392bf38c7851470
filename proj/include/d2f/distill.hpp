#pragma once

#include <functional>
#include <vector>

#include "d2f/model.hpp"
#include "d2f/rng.hpp"

namespace d2f::distill {

struct DistillConfig {
    long steps = 2000;
    int batch = 8;
    int block_len = 8;
    double t_lo = 0.05;
    double t_hi = 0.95;
    bool monotone = true;  // sorted per-block noise; false is the ablation
    double lr = 1e-3;
    double weight_decay = 0.0;
    double grad_clip = 1.0;
    uint64_t seed = 1;
    long log_every = 100;
};

// Mean KL(teacher || student) over masked positions for one batch: the
// teacher runs on the same corrupted tokens under a full mask, the student
// under its block-causal mask. Fills the student workspace's dlogits
// (gradient: (student_softmax - teacher_probs) / total_masked). teacher_probs
// holds softmaxed teacher rows (only masked rows are read).
template <typename Real>
double kl_to_teacher(model::TrainWorkspace<Real>& student_ws, const Mat<Real>& teacher_probs,
                     const std::vector<uint8_t>& is_masked);

// Distills the block-causal student from a frozen bidirectional teacher.
// Each step: draw a per-block noise schedule (monotone unless ablated),
// corrupt the answer region block-wise, run both models on the identical
// corrupted input, and match the student's masked-position distributions to
// the teacher's. The student should start as a copy of the teacher's
// parameters; steps = 0 leaves it exactly that copy.
template <typename Real>
void distill_student(model::Net<Real>& student, const model::Net<Real>& teacher,
                     const std::vector<std::vector<int>>& data, int prompt_len,
                     const DistillConfig& cfg,
                     const std::function<void(long step, double loss, double wall_ms)>& on_log);

}  // namespace d2f::distill
