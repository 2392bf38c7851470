#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d2f/matrix.hpp"
#include "d2f/rng.hpp"

namespace d2f::model {

struct ModelConfig {
    int vocab_size = 64;
    int dim = 128;
    int n_layers = 4;
    int n_heads = 4;
    int max_seq_len = 256;
    double ln_eps = 1e-5;

    int head_dim() const { return dim / n_heads; }
    int mlp_dim() const { return 4 * dim; }
    bool operator==(const ModelConfig&) const = default;
};

// Who may attend to whom. Prompt tokens see only the prompt; an answer token
// sees the prompt plus every answer block up to and including its own (full
// bidirectional attention inside a block). The visible set of any query is
// therefore a contiguous prefix of the sequence, which is what makes an
// exact KV cache possible. Kind::full (the teacher) sees everything.
struct MaskSpec {
    enum class Kind { full, block_causal };
    Kind kind = Kind::full;
    int prompt_len = 0;
    int block_len = 1;

    // Block index of an answer position; -1 for prompt positions.
    int block_index(int pos) const {
        return pos < prompt_len ? -1 : (pos - prompt_len) / block_len;
    }

    // One past the last position visible to a query at qpos.
    int vis_end(int qpos, int total_len) const {
        if (kind == Kind::full) {
            return total_len;
        }
        if (qpos < prompt_len) {
            return prompt_len;
        }
        const int e = prompt_len + (block_index(qpos) + 1) * block_len;
        return e < total_len ? e : total_len;
    }
};

struct ParamView {
    std::string name;
    size_t offset = 0;
    int rows = 0;
    int cols = 0;

    size_t count() const { return size_t(rows) * size_t(cols); }
};

struct LayerOffsets {
    size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, w2;
};

struct ParamLayout {
    size_t emb_tok = 0;
    size_t emb_pos = 0;
    size_t lnf_g = 0;
    size_t lnf_b = 0;
    size_t head_w = 0;
    size_t total = 0;
    std::vector<LayerOffsets> layer;
    std::vector<ParamView> views;  // canonical order, used by checkpoints and tests

    const ParamView& view(const std::string& name) const;
};

ParamLayout make_layout(const ModelConfig& cfg);

// Per-layer K/V rows indexed by absolute position.
//
// committed_len: tokens [0, committed_len) are final and will never change.
// materialized_len: rows [0, materialized_len) were computed from committed
// context, so they can be reused as-is. Rows above that are scratch from the
// latest forward window and get overwritten. The decode loop raises
// materialized_len to the committed_len that held when the window ran; a
// freshly committed block's K/V is picked up by the next window at no extra
// forward pass.
template <typename Real>
struct KVCache {
    int committed_len = 0;
    int materialized_len = 0;
    std::vector<Mat<Real>> k;
    std::vector<Mat<Real>> v;

    void init(const ModelConfig& cfg) {
        k.assign(cfg.n_layers, Mat<Real>(cfg.max_seq_len, cfg.dim));
        v.assign(cfg.n_layers, Mat<Real>(cfg.max_seq_len, cfg.dim));
        committed_len = 0;
        materialized_len = 0;
    }
    void reset() {
        committed_len = 0;
        materialized_len = 0;
    }
};

// Activation stash for one batched training pass, allocated once and reused.
template <typename Real>
struct TrainWorkspace {
    int batch = 0;
    int seq = 0;

    // per layer, rows = batch * seq
    std::vector<Mat<Real>> x_in;   // residual stream entering the layer
    std::vector<std::vector<Real>> mean1, rstd1;
    std::vector<Mat<Real>> h1;     // ln1 output
    std::vector<Mat<Real>> q, k, v;
    std::vector<Mat<Real>> probs;  // attention weights, rows = batch*heads*seq
    std::vector<Mat<Real>> ctx;    // mixed values before the output projection
    std::vector<Mat<Real>> x_mid;  // residual stream entering ln2
    std::vector<std::vector<Real>> mean2, rstd2;
    std::vector<Mat<Real>> h2;     // ln2 output
    std::vector<Mat<Real>> u;      // mlp pre-activation
    std::vector<Mat<Real>> a;      // mlp activation

    Mat<Real> x_f;  // residual stream entering the final norm
    std::vector<Real> meanf, rstdf;
    Mat<Real> hf;
    Mat<Real> logits;
    Mat<Real> dlogits;  // loss modules fill this before backward_train

    // backward scratch (dh also serves as a forward temp)
    Mat<Real> dx, dh, dq, dk, dv, dctx;
    Mat<Real> du, da;
    Mat<Real> wt_dd;  // [dim x dim] transpose scratch
    Mat<Real> wt_md;  // [mlp x dim]
    Mat<Real> wt_dm;  // [dim x mlp]

    void init(const ModelConfig& cfg, int batch_size, int seq_len);
};

template <typename Real>
class Net {
  public:
    ModelConfig cfg;
    ParamLayout layout;
    std::vector<Real> params;

    Net() = default;
    explicit Net(const ModelConfig& c) : cfg(c), layout(make_layout(c)) {
        params.assign(layout.total, Real(0));
    }

    static Net init(const ModelConfig& c, uint64_t seed);

    // Casts parameters (e.g. a float checkpoint loaded into a double net).
    template <typename Other>
    static Net from(const Net<Other>& o) {
        Net n(o.cfg);
        for (size_t i = 0; i < n.params.size(); ++i) {
            n.params[i] = Real(o.params[i]);
        }
        return n;
    }

    // One forward over rows [window_start, total_len) of a single sequence.
    // K/V for the window rows are written into the cache, so attention reads
    // cache rows [0, total_len) uniformly. window_start must not exceed
    // cache.materialized_len. logits gets one row per window position.
    // A full fresh forward is window_start = 0 with a reset cache.
    void forward_window(const std::vector<int>& tokens, int total_len, int window_start,
                        const MaskSpec& mask, KVCache<Real>& cache, Mat<Real>& logits) const;

    // Batched training forward; stashes everything backward_train needs.
    // tokens has batch*seq entries, example-major.
    void forward_train(const std::vector<int>& tokens, const MaskSpec& mask,
                       TrainWorkspace<Real>& ws) const;

    // Backprop from ws.dlogits; accumulates into grad (same layout as params).
    void backward_train(const std::vector<int>& tokens, const MaskSpec& mask,
                        TrainWorkspace<Real>& ws, std::vector<Real>& grad) const;
};

}  // namespace d2f::model
