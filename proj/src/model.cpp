#include "d2f/model.hpp"

#include <cmath>

#include "d2f/kernels.hpp"
#include "d2f/numerics.hpp"

namespace d2f::model {

const ParamView& ParamLayout::view(const std::string& name) const {
    for (const auto& v : views) {
        if (v.name == name) {
            return v;
        }
    }
    throw std::runtime_error("unknown parameter: " + name);
}

ParamLayout make_layout(const ModelConfig& cfg) {
    ParamLayout lay;
    size_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        const size_t at = off;
        lay.views.push_back({name, at, rows, cols});
        off += size_t(rows) * size_t(cols);
        return at;
    };
    const int D = cfg.dim, M = cfg.mlp_dim();
    lay.emb_tok = add("emb.tok", cfg.vocab_size, D);
    lay.emb_pos = add("emb.pos", cfg.max_seq_len, D);
    lay.layer.resize(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lo = lay.layer[l];
        lo.ln1_g = add(p + "ln1.g", 1, D);
        lo.ln1_b = add(p + "ln1.b", 1, D);
        lo.wq = add(p + "attn.wq", D, D);
        lo.wk = add(p + "attn.wk", D, D);
        lo.wv = add(p + "attn.wv", D, D);
        lo.wo = add(p + "attn.wo", D, D);
        lo.ln2_g = add(p + "ln2.g", 1, D);
        lo.ln2_b = add(p + "ln2.b", 1, D);
        lo.w1 = add(p + "mlp.w1", D, M);
        lo.w2 = add(p + "mlp.w2", M, D);
    }
    lay.lnf_g = add("lnf.g", 1, D);
    lay.lnf_b = add("lnf.b", 1, D);
    lay.head_w = add("head.w", D, cfg.vocab_size);
    lay.total = off;
    return lay;
}

template <typename Real>
Net<Real> Net<Real>::init(const ModelConfig& c, uint64_t seed) {
    Net n(c);
    Rng rng(seed, 0);
    for (const auto& v : n.layout.views) {
        Real* dst = n.params.data() + v.offset;
        if (v.name.ends_with(".g")) {
            for (size_t i = 0; i < v.count(); ++i) {
                dst[i] = Real(1);
            }
        } else if (v.name.ends_with(".b")) {
            // zero already
        } else {
            for (size_t i = 0; i < v.count(); ++i) {
                dst[i] = Real(rng.normal() * 0.02);
            }
        }
    }
    return n;
}

template <typename Real>
void TrainWorkspace<Real>::init(const ModelConfig& cfg, int batch_size, int seq_len) {
    batch = batch_size;
    seq = seq_len;
    const int R = batch * seq, D = cfg.dim, M = cfg.mlp_dim(), L = cfg.n_layers;
    const int H = cfg.n_heads, V = cfg.vocab_size;
    require(seq <= cfg.max_seq_len, "workspace: seq_len > max_seq_len");

    x_in.assign(L, Mat<Real>(R, D));
    mean1.assign(L, std::vector<Real>(R));
    rstd1.assign(L, std::vector<Real>(R));
    h1.assign(L, Mat<Real>(R, D));
    q.assign(L, Mat<Real>(R, D));
    k.assign(L, Mat<Real>(R, D));
    v.assign(L, Mat<Real>(R, D));
    probs.assign(L, Mat<Real>(batch * H * seq, seq));
    ctx.assign(L, Mat<Real>(R, D));
    x_mid.assign(L, Mat<Real>(R, D));
    mean2.assign(L, std::vector<Real>(R));
    rstd2.assign(L, std::vector<Real>(R));
    h2.assign(L, Mat<Real>(R, D));
    u.assign(L, Mat<Real>(R, M));
    a.assign(L, Mat<Real>(R, M));

    x_f.resize(R, D);
    meanf.assign(R, Real(0));
    rstdf.assign(R, Real(0));
    hf.resize(R, D);
    logits.resize(R, V);
    dlogits.resize(R, V);

    dx.resize(R, D);
    dh.resize(R, D);
    dq.resize(R, D);
    dk.resize(R, D);
    dv.resize(R, D);
    dctx.resize(R, D);
    du.resize(R, M);
    da.resize(R, M);
    wt_dd.resize(D, D);
    wt_md.resize(M, D);
    wt_dm.resize(D, M);
}

namespace {

template <typename Real>
void add_rows(Mat<Real>& out, const Mat<Real>& a, const Mat<Real>& b) {
    const long long n = static_cast<long long>(out.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
    }
}

}  // namespace

template <typename Real>
void Net<Real>::forward_window(const std::vector<int>& tokens, int total_len, int window_start,
                               const MaskSpec& mask, KVCache<Real>& cache,
                               Mat<Real>& logits) const {
    const int W = window_start, L = total_len, n = L - W;
    require(L <= cfg.max_seq_len, "forward_window: sequence longer than max_seq_len");
    require(static_cast<int>(tokens.size()) >= L, "forward_window: token buffer too short");
    require(W >= 0 && W < L, "forward_window: empty window");
    require(W <= cache.materialized_len, "forward_window: window starts past materialized rows");
    require(static_cast<int>(cache.k.size()) == cfg.n_layers, "forward_window: cache uninitialized");
    const int D = cfg.dim, H = cfg.n_heads, hd = cfg.head_dim(), M = cfg.mlp_dim();
    const Real rscale = Real(1) / std::sqrt(Real(hd));
    const Real eps = Real(cfg.ln_eps);

    Mat<Real> x(n, D), h(n, D), tmp(n, D), ctxm(n, D), qm(n, D);
    Mat<Real> u(n, M), a(n, M);
    Mat<Real> scores(n * H, L);
    std::vector<Real> mean(n), rstd(n);

    const Real* etok = params.data() + layout.emb_tok;
    const Real* epos = params.data() + layout.emb_pos;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) {
        const int pos = W + r;
        const Real* te = etok + size_t(tokens[pos]) * D;
        const Real* pe = epos + size_t(pos) * D;
        Real* xr = x.row(r);
        for (int j = 0; j < D; ++j) {
            xr[j] = te[j] + pe[j];
        }
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& off = layout.layer[l];
        kernels::layernorm(h, mean.data(), rstd.data(), x, params.data() + off.ln1_g,
                           params.data() + off.ln1_b, eps);
        kernels::gemm(qm, h, mref(params, off.wq, D, D));
        // K/V for the window land directly in the cache, making rows [0, L)
        // uniformly addressable for attention.
        MatRef<Real> kwin(cache.k[l].row(W), n, D);
        MatRef<Real> vwin(cache.v[l].row(W), n, D);
        kernels::gemm(kwin, h, mref(params, off.wk, D, D));
        kernels::gemm(vwin, h, mref(params, off.wv, D, D));

        const Mat<Real>& K = cache.k[l];
        const Mat<Real>& V = cache.v[l];
#pragma omp parallel for schedule(static)
        for (int ih = 0; ih < n * H; ++ih) {
            const int r = ih / H;
            const int hh = ih % H;
            const int ve = mask.vis_end(W + r, L);
            const Real* qrow = qm.row(r) + hh * hd;
            Real* s = scores.row(ih);
            for (int j = 0; j < ve; ++j) {
                const Real* krow = K.row(j) + hh * hd;
                Real acc = Real(0);
                for (int d = 0; d < hd; ++d) {
                    acc += qrow[d] * krow[d];
                }
                s[j] = acc * rscale;
            }
            numerics::softmax_row(s, ve);
            Real* crow = ctxm.row(r) + hh * hd;
            for (int d = 0; d < hd; ++d) {
                crow[d] = Real(0);
            }
            for (int j = 0; j < ve; ++j) {
                const Real p = s[j];
                const Real* vrow = V.row(j) + hh * hd;
                for (int d = 0; d < hd; ++d) {
                    crow[d] += p * vrow[d];
                }
            }
        }
        kernels::gemm(tmp, ctxm, mref(params, off.wo, D, D));
        kernels::add_inplace(x, tmp);

        kernels::layernorm(h, mean.data(), rstd.data(), x, params.data() + off.ln2_g,
                           params.data() + off.ln2_b, eps);
        kernels::gemm(u, h, mref(params, off.w1, D, M));
        kernels::gelu(a, u);
        kernels::gemm(tmp, a, mref(params, off.w2, M, D));
        kernels::add_inplace(x, tmp);
    }

    kernels::layernorm(h, mean.data(), rstd.data(), x, params.data() + layout.lnf_g,
                       params.data() + layout.lnf_b, eps);
    logits.resize(n, cfg.vocab_size);
    kernels::gemm(logits, h, mref(params, layout.head_w, D, cfg.vocab_size));
}

template <typename Real>
void Net<Real>::forward_train(const std::vector<int>& tokens, const MaskSpec& mask,
                              TrainWorkspace<Real>& ws) const {
    const int B = ws.batch, T = ws.seq, R = B * T;
    require(static_cast<int>(tokens.size()) == R, "forward_train: token count != batch*seq");
    const int D = cfg.dim, H = cfg.n_heads, hd = cfg.head_dim(), M = cfg.mlp_dim();
    const Real rscale = Real(1) / std::sqrt(Real(hd));
    const Real eps = Real(cfg.ln_eps);

    const Real* etok = params.data() + layout.emb_tok;
    const Real* epos = params.data() + layout.emb_pos;
    Mat<Real>& x0 = ws.x_in[0];
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        const int pos = r % T;
        const Real* te = etok + size_t(tokens[r]) * D;
        const Real* pe = epos + size_t(pos) * D;
        Real* xr = x0.row(r);
        for (int j = 0; j < D; ++j) {
            xr[j] = te[j] + pe[j];
        }
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& off = layout.layer[l];
        const Mat<Real>& x = ws.x_in[l];
        kernels::layernorm(ws.h1[l], ws.mean1[l].data(), ws.rstd1[l].data(), x,
                           params.data() + off.ln1_g, params.data() + off.ln1_b, eps);
        kernels::gemm(ws.q[l], ws.h1[l], mref(params, off.wq, D, D));
        kernels::gemm(ws.k[l], ws.h1[l], mref(params, off.wk, D, D));
        kernels::gemm(ws.v[l], ws.h1[l], mref(params, off.wv, D, D));

        Mat<Real>& P = ws.probs[l];
        Mat<Real>& ctx = ws.ctx[l];
#pragma omp parallel for schedule(static)
        for (int bh = 0; bh < B * H; ++bh) {
            const int b = bh / H;
            const int hh = bh % H;
            for (int i = 0; i < T; ++i) {
                const int ve = mask.vis_end(i, T);
                const Real* qrow = ws.q[l].row(b * T + i) + hh * hd;
                Real* prow = P.row(bh * T + i);
                for (int j = 0; j < ve; ++j) {
                    const Real* krow = ws.k[l].row(b * T + j) + hh * hd;
                    Real acc = Real(0);
                    for (int d = 0; d < hd; ++d) {
                        acc += qrow[d] * krow[d];
                    }
                    prow[j] = acc * rscale;
                }
                numerics::softmax_row(prow, ve);
                for (int j = ve; j < T; ++j) {
                    prow[j] = Real(0);
                }
                Real* crow = ctx.row(b * T + i) + hh * hd;
                for (int d = 0; d < hd; ++d) {
                    crow[d] = Real(0);
                }
                for (int j = 0; j < ve; ++j) {
                    const Real p = prow[j];
                    const Real* vrow = ws.v[l].row(b * T + j) + hh * hd;
                    for (int d = 0; d < hd; ++d) {
                        crow[d] += p * vrow[d];
                    }
                }
            }
        }
        kernels::gemm(ws.dh, ctx, mref(params, off.wo, D, D));  // dh doubles as forward temp
        add_rows(ws.x_mid[l], x, ws.dh);

        kernels::layernorm(ws.h2[l], ws.mean2[l].data(), ws.rstd2[l].data(), ws.x_mid[l],
                           params.data() + off.ln2_g, params.data() + off.ln2_b, eps);
        kernels::gemm(ws.u[l], ws.h2[l], mref(params, off.w1, D, M));
        kernels::gelu(ws.a[l], ws.u[l]);
        kernels::gemm(ws.dh, ws.a[l], mref(params, off.w2, M, D));
        Mat<Real>& next = (l + 1 < cfg.n_layers) ? ws.x_in[l + 1] : ws.x_f;
        add_rows(next, ws.x_mid[l], ws.dh);
    }

    kernels::layernorm(ws.hf, ws.meanf.data(), ws.rstdf.data(), ws.x_f,
                       params.data() + layout.lnf_g, params.data() + layout.lnf_b, eps);
    kernels::gemm(ws.logits, ws.hf, mref(params, layout.head_w, D, cfg.vocab_size));
}

template <typename Real>
void Net<Real>::backward_train(const std::vector<int>& tokens, const MaskSpec& mask,
                               TrainWorkspace<Real>& ws, std::vector<Real>& grad) const {
    const int B = ws.batch, T = ws.seq, R = B * T;
    require(grad.size() == params.size(), "backward_train: grad size mismatch");
    const int D = cfg.dim, H = cfg.n_heads, hd = cfg.head_dim(), M = cfg.mlp_dim();
    const int V = cfg.vocab_size;
    const Real rscale = Real(1) / std::sqrt(Real(hd));

    // head
    kernels::gemm_at(mref(grad, layout.head_w, D, V), ws.hf, ws.dlogits, true);
    Mat<Real> head_t(V, D);
    kernels::transpose(head_t, mref(params, layout.head_w, D, V));
    kernels::gemm(ws.dh, ws.dlogits, head_t);

    // final norm; dx accumulates the residual-stream gradient from here down
    ws.dx.zero();
    kernels::layernorm_backward(ws.dx, grad.data() + layout.lnf_g, grad.data() + layout.lnf_b,
                                ws.dh, ws.x_f, ws.meanf.data(), ws.rstdf.data(),
                                params.data() + layout.lnf_g);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& off = layout.layer[l];
        // mlp branch: dx currently holds d(layer output)
        kernels::transpose(ws.wt_dm, mref(params, off.w2, M, D));
        kernels::gemm(ws.da, ws.dx, ws.wt_dm);
        ws.du.zero();
        kernels::gelu_backward(ws.du, ws.u[l], ws.da);
        kernels::gemm_at(mref(grad, off.w2, M, D), ws.a[l], ws.dx, true);
        kernels::gemm_at(mref(grad, off.w1, D, M), ws.h2[l], ws.du, true);
        kernels::transpose(ws.wt_md, mref(params, off.w1, D, M));
        kernels::gemm(ws.dh, ws.du, ws.wt_md);
        kernels::layernorm_backward(ws.dx, grad.data() + off.ln2_g, grad.data() + off.ln2_b,
                                    ws.dh, ws.x_mid[l], ws.mean2[l].data(), ws.rstd2[l].data(),
                                    params.data() + off.ln2_g);

        // attention branch: dx now holds d(x_mid)
        kernels::transpose(ws.wt_dd, mref(params, off.wo, D, D));
        kernels::gemm(ws.dctx, ws.dx, ws.wt_dd);
        kernels::gemm_at(mref(grad, off.wo, D, D), ws.ctx[l], ws.dx, true);

        ws.dq.zero();
        ws.dk.zero();
        ws.dv.zero();
        const Mat<Real>& P = ws.probs[l];
#pragma omp parallel for schedule(static)
        for (int bh = 0; bh < B * H; ++bh) {
            const int b = bh / H;
            const int hh = bh % H;
            std::vector<Real> dp(T);
            for (int i = 0; i < T; ++i) {
                const int ve = mask.vis_end(i, T);
                const Real* prow = P.row(bh * T + i);
                const Real* dcx = ws.dctx.row(b * T + i) + hh * hd;
                Real sum_pdp = Real(0);
                for (int j = 0; j < ve; ++j) {
                    const Real* vrow = ws.v[l].row(b * T + j) + hh * hd;
                    Real acc = Real(0);
                    for (int d = 0; d < hd; ++d) {
                        acc += dcx[d] * vrow[d];
                    }
                    dp[j] = acc;
                    sum_pdp += prow[j] * acc;
                }
                const Real* qrow = ws.q[l].row(b * T + i) + hh * hd;
                Real* dqrow = ws.dq.row(b * T + i) + hh * hd;
                for (int j = 0; j < ve; ++j) {
                    const Real pj = prow[j];
                    const Real ds = pj * (dp[j] - sum_pdp) * rscale;
                    const Real* krow = ws.k[l].row(b * T + j) + hh * hd;
                    Real* dkrow = ws.dk.row(b * T + j) + hh * hd;
                    Real* dvrow = ws.dv.row(b * T + j) + hh * hd;
                    for (int d = 0; d < hd; ++d) {
                        dqrow[d] += ds * krow[d];
                        dkrow[d] += ds * qrow[d];
                        dvrow[d] += pj * dcx[d];
                    }
                }
            }
        }

        kernels::transpose(ws.wt_dd, mref(params, off.wq, D, D));
        kernels::gemm(ws.dh, ws.dq, ws.wt_dd);
        kernels::transpose(ws.wt_dd, mref(params, off.wk, D, D));
        kernels::gemm(ws.dh, ws.dk, ws.wt_dd, true);
        kernels::transpose(ws.wt_dd, mref(params, off.wv, D, D));
        kernels::gemm(ws.dh, ws.dv, ws.wt_dd, true);
        kernels::gemm_at(mref(grad, off.wq, D, D), ws.h1[l], ws.dq, true);
        kernels::gemm_at(mref(grad, off.wk, D, D), ws.h1[l], ws.dk, true);
        kernels::gemm_at(mref(grad, off.wv, D, D), ws.h1[l], ws.dv, true);
        kernels::layernorm_backward(ws.dx, grad.data() + off.ln1_g, grad.data() + off.ln1_b,
                                    ws.dh, ws.x_in[l], ws.mean1[l].data(), ws.rstd1[l].data(),
                                    params.data() + off.ln1_g);
    }

    // embeddings: serial scatter so the accumulation order is fixed
    Real* gtok = grad.data() + layout.emb_tok;
    Real* gpos = grad.data() + layout.emb_pos;
    for (int r = 0; r < R; ++r) {
        const Real* dxr = ws.dx.row(r);
        Real* gt = gtok + size_t(tokens[r]) * D;
        Real* gp = gpos + size_t(r % T) * D;
        for (int j = 0; j < D; ++j) {
            gt[j] += dxr[j];
            gp[j] += dxr[j];
        }
    }
}

template class Net<float>;
template class Net<double>;
template struct TrainWorkspace<float>;
template struct TrainWorkspace<double>;

}  // namespace d2f::model
