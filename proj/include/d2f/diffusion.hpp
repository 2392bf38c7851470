#pragma once

#include <functional>
#include <vector>

#include "d2f/model.hpp"
#include "d2f/rng.hpp"

namespace d2f::diffusion {

struct CorruptResult {
    std::vector<int> noisy;
    std::vector<uint8_t> is_masked;  // per position; prompt positions always 0
};

// Masks each answer position independently with probability t. The prompt
// stays clean.
CorruptResult corrupt(const std::vector<int>& clean, int prompt_len, double t, Rng& rng);

// Per-block masking rates: answer position p uses schedule[block(p)]. The
// ragged final block is just a shorter block.
CorruptResult corrupt_blocks(const std::vector<int>& clean, int prompt_len, int block_len,
                             const std::vector<double>& schedule, Rng& rng);

// n iid draws from U(lo, hi), sorted ascending; redrawn in the (measure-zero)
// event of a tie so the schedule is strictly increasing. Later blocks get
// noisier, which is the asymmetry the distilled student depends on.
std::vector<double> sample_monotone_schedule(int n_blocks, double lo, double hi, Rng& rng);

// Ablation: same marginals, no sorting.
std::vector<double> sample_random_schedule(int n_blocks, double lo, double hi, Rng& rng);

// Mean cross-entropy over masked positions, per example, optionally weighted
// by 1/t. Fills ws.dlogits with the matching gradient (zero at unmasked
// rows). Examples with an empty mask contribute zero loss and bump
// *empty_mask_examples. Returns the batch-mean loss.
template <typename Real>
double masked_ce_loss(model::TrainWorkspace<Real>& ws, const std::vector<int>& clean,
                      const std::vector<uint8_t>& is_masked, const std::vector<double>& inv_weight,
                      long* empty_mask_examples);

struct TeacherTrainConfig {
    long steps = 2000;
    int batch = 8;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double grad_clip = 1.0;
    bool inv_t_weight = true;  // weight each example's loss by 1/t
    uint64_t seed = 1;
    long log_every = 100;
};

// Masked-diffusion training of the bidirectional teacher: per example draw
// t ~ U(0,1), corrupt the answer region, predict the originals at the masked
// positions under a full attention mask. Returns the number of examples that
// came up with an empty mask.
template <typename Real>
long train_teacher(model::Net<Real>& net, const std::vector<std::vector<int>>& data,
                   int prompt_len, const TeacherTrainConfig& cfg,
                   const std::function<void(long step, double loss, double wall_ms)>& on_log);

}  // namespace d2f::diffusion
