#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <set>
#include <vector>

#include "d2f/checkpoint.hpp"
#include "d2f/model.hpp"
#include "d2f/numerics.hpp"
#include "d2f/rng.hpp"

using namespace d2f;

namespace {

model::ModelConfig tiny_cfg() {
    model::ModelConfig c;
    c.vocab_size = 16;
    c.dim = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_seq_len = 12;
    return c;
}

std::vector<int> random_tokens(int n, int vocab, Rng& rng) {
    std::vector<int> t(n);
    for (int i = 0; i < n; ++i) t[i] = int(rng.uniform_int(vocab));
    return t;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/d2f_model_test_") + name;
}

}  // namespace

TEST_CASE("parameter layout covers the buffer exactly once") {
    const auto cfg = tiny_cfg();
    const auto layout = model::make_layout(cfg);
    size_t covered = 0;
    size_t expect_offset = 0;
    std::set<std::string> names;
    for (const auto& v : layout.views) {
        CHECK(v.offset == expect_offset);  // contiguous, canonical order
        expect_offset += v.count();
        covered += v.count();
        CHECK(names.insert(v.name).second);
    }
    CHECK(covered == layout.total);

    CHECK(layout.view("emb.tok").rows == cfg.vocab_size);
    CHECK(layout.view("emb.tok").cols == cfg.dim);
    CHECK(layout.view("emb.pos").rows == cfg.max_seq_len);
    CHECK(layout.view("head.w").rows == cfg.dim);
    CHECK(layout.view("head.w").cols == cfg.vocab_size);
    CHECK(layout.view("layers.0.attn.wq").rows == cfg.dim);
    CHECK(layout.view("layers.1.mlp.w1").cols == cfg.mlp_dim());
    CHECK_THROWS(layout.view("no.such.view"));
}

TEST_CASE("init is seeded, sets gains to one and biases to zero") {
    const auto cfg = tiny_cfg();
    const auto a = model::Net<float>::init(cfg, 7);
    const auto b = model::Net<float>::init(cfg, 7);
    const auto c = model::Net<float>::init(cfg, 8);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);

    const auto& ln1g = a.layout.view("layers.0.ln1.g");
    for (size_t i = 0; i < ln1g.count(); ++i) CHECK(a.params[ln1g.offset + i] == 1.0f);
    const auto& ln2b = a.layout.view("layers.1.ln2.b");
    for (size_t i = 0; i < ln2b.count(); ++i) CHECK(a.params[ln2b.offset + i] == 0.0f);
    for (const float p : a.params) CHECK(std::isfinite(p));
}

TEST_CASE("visibility is a contiguous prefix") {
    model::MaskSpec full{model::MaskSpec::Kind::full, 3, 1};
    CHECK(full.vis_end(0, 9) == 9);
    CHECK(full.vis_end(8, 9) == 9);

    model::MaskSpec bc{model::MaskSpec::Kind::block_causal, 3, 2};
    CHECK(bc.block_index(2) == -1);
    CHECK(bc.block_index(3) == 0);
    CHECK(bc.block_index(6) == 1);

    CHECK(bc.vis_end(1, 9) == 3);   // prompt sees only the prompt
    CHECK(bc.vis_end(3, 9) == 5);   // block 0 sees prompt + itself
    CHECK(bc.vis_end(4, 9) == 5);
    CHECK(bc.vis_end(5, 9) == 7);   // block 1 sees through itself
    CHECK(bc.vis_end(7, 8) == 8);   // ragged final block clips to the sequence
}

TEST_CASE("perturbing a later block leaves earlier logits untouched") {
    const auto cfg = tiny_cfg();
    const auto net = model::Net<float>::init(cfg, 3);
    Rng rng(11, 0);
    const int P = 3, K = 2, L = 9;  // blocks: [3,5) [5,7) [7,9)
    model::MaskSpec mask{model::MaskSpec::Kind::block_causal, P, K};

    auto toks = random_tokens(L, cfg.vocab_size, rng);
    auto toks2 = toks;
    toks2[7] = (toks2[7] + 1) % cfg.vocab_size;  // perturb block 2

    Mat<float> la, lb;
    model::KVCache<float> cache;
    cache.init(cfg);
    net.forward_window(toks, L, 0, mask, cache, la);
    cache.reset();
    net.forward_window(toks2, L, 0, mask, cache, lb);

    for (int p = 0; p < 7; ++p) {  // prompt, block 0, block 1
        for (int j = 0; j < cfg.vocab_size; ++j) {
            CHECK(la.at(p, j) == lb.at(p, j));
        }
    }
    // ...and the perturbed block's own logits do move.
    bool moved = false;
    for (int j = 0; j < cfg.vocab_size; ++j) moved = moved || la.at(7, j) != lb.at(7, j);
    CHECK(moved);
}

TEST_CASE("windowed cached forwards are bitwise equal to one full forward") {
    const auto cfg = tiny_cfg();
    const auto net = model::Net<float>::init(cfg, 5);
    Rng rng(12, 0);
    const int P = 3, K = 2, L = 9;
    model::MaskSpec mask{model::MaskSpec::Kind::block_causal, P, K};
    const auto toks = random_tokens(L, cfg.vocab_size, rng);

    // Decode-style staging: prompt+block0, then one block per window, with
    // the committed prefix growing behind the window.
    model::KVCache<float> cache;
    cache.init(cfg);
    cache.committed_len = P;
    Mat<float> w0, w1, w2;
    net.forward_window(toks, 5, 0, mask, cache, w0);
    cache.materialized_len = 3;
    cache.committed_len = 5;
    net.forward_window(toks, 7, 3, mask, cache, w1);
    cache.materialized_len = 5;
    cache.committed_len = 7;
    net.forward_window(toks, 9, 5, mask, cache, w2);

    model::KVCache<float> fresh;
    fresh.init(cfg);
    Mat<float> full;
    net.forward_window(toks, L, 0, mask, fresh, full);

    for (int r = 0; r < w2.rows; ++r) {  // positions 5..8
        for (int j = 0; j < cfg.vocab_size; ++j) {
            CHECK(w2.at(r, j) == full.at(5 + r, j));
        }
    }
    for (int l = 0; l < cfg.n_layers; ++l) {
        CHECK(std::memcmp(cache.k[l].ptr(), fresh.k[l].ptr(), size_t(L) * cfg.dim * 4) == 0);
        CHECK(std::memcmp(cache.v[l].ptr(), fresh.v[l].ptr(), size_t(L) * cfg.dim * 4) == 0);
    }
}

TEST_CASE("batched training forward agrees with the decode path") {
    const auto cfg = tiny_cfg();
    const auto net = model::Net<float>::init(cfg, 9);
    Rng rng(13, 0);
    const int P = 3, K = 2, T = 9;
    model::MaskSpec mask{model::MaskSpec::Kind::block_causal, P, K};
    const auto toks = random_tokens(T, cfg.vocab_size, rng);

    model::TrainWorkspace<float> ws;
    ws.init(cfg, 1, T);
    net.forward_train(toks, mask, ws);

    model::KVCache<float> cache;
    cache.init(cfg);
    Mat<float> logits;
    net.forward_window(toks, T, 0, mask, cache, logits);

    for (int p = 0; p < T; ++p) {
        for (int j = 0; j < cfg.vocab_size; ++j) {
            CHECK(ws.logits.at(p, j) ==
                  doctest::Approx(logits.at(p, j)).epsilon(1e-5).scale(1.0));
        }
    }
}

TEST_CASE("analytic gradients match finite differences") {
    auto cfg = tiny_cfg();
    cfg.max_seq_len = 8;
    auto net = model::Net<double>::init(cfg, 21);
    Rng rng(22, 0);
    const int B = 2, T = 8, P = 3, K = 2;
    model::MaskSpec mask{model::MaskSpec::Kind::block_causal, P, K};
    std::vector<int> toks = random_tokens(B * T, cfg.vocab_size, rng);

    // Fixed linear readout of the logits as the scalar loss.
    Mat<double> w(B * T, cfg.vocab_size);
    for (size_t i = 0; i < w.size(); ++i) w.data[i] = rng.normal() * 0.1;

    model::TrainWorkspace<double> ws;
    ws.init(cfg, B, T);
    const auto loss = [&] {
        net.forward_train(toks, mask, ws);
        double s = 0;
        for (size_t i = 0; i < w.size(); ++i) s += w.data[i] * ws.logits.data[i];
        return s;
    };
    loss();
    for (size_t i = 0; i < w.size(); ++i) ws.dlogits.data[i] = w.data[i];
    std::vector<double> grad(net.params.size(), 0.0);
    net.backward_train(toks, mask, ws, grad);

    // A slice of every view, including embeddings reached via the scatter.
    std::vector<size_t> idx;
    for (const auto& v : net.layout.views) {
        for (size_t s = 0; s < v.count(); s += v.count() / 7 + 1) idx.push_back(v.offset + s);
    }
    // Central differences at eps=1e-5 bottom out around 1e-6 relative on
    // this loss scale; a dropped term would sit at 1e-2 or worse.
    const double worst = numerics::grad_check(loss, net.params, grad, idx);
    CHECK(worst < 1e-5);
}

TEST_CASE("checkpoints round-trip bitwise and reject mismatches") {
    const auto cfg = tiny_cfg();
    const auto net = model::Net<float>::init(cfg, 31);
    const auto path = temp_path("ckpt");
    model::save_checkpoint(path, net, model::Role::teacher);

    const auto info = model::peek_checkpoint(path);
    CHECK(info.cfg == cfg);
    CHECK(info.role == model::Role::teacher);
    CHECK_FALSE(info.is_double);

    const auto back = model::load_checkpoint<float>(path, model::Role::teacher);
    CHECK(back.cfg == cfg);
    CHECK(back.params == net.params);

    CHECK_THROWS(model::load_checkpoint<float>(path, model::Role::student));
    CHECK_THROWS(model::load_checkpoint<double>(path, model::Role::teacher));
    auto other = cfg;
    other.dim = 64;
    CHECK_THROWS(model::load_checkpoint<float>(path, model::Role::teacher, other));

    // Truncated file.
    {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f);
        std::fseek(f, 0, SEEK_END);
        const long full = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<char> buf(size_t(full) / 2);
        REQUIRE(std::fread(buf.data(), 1, buf.size(), f) == buf.size());
        std::fclose(f);
        const auto cut = temp_path("ckpt_cut");
        std::FILE* g = std::fopen(cut.c_str(), "wb");
        REQUIRE(g);
        std::fwrite(buf.data(), 1, buf.size(), g);
        std::fclose(g);
        CHECK_THROWS(model::load_checkpoint<float>(cut, model::Role::teacher));
    }

    // Garbage magic.
    {
        const auto bad = temp_path("ckpt_bad");
        std::FILE* g = std::fopen(bad.c_str(), "wb");
        REQUIRE(g);
        std::fputs("not a checkpoint at all", g);
        std::fclose(g);
        CHECK_THROWS(model::load_checkpoint<float>(bad, model::Role::teacher));
    }
}

TEST_CASE("cross-precision cast keeps values") {
    const auto cfg = tiny_cfg();
    const auto f = model::Net<float>::init(cfg, 41);
    const auto d = model::Net<double>::from(f);
    for (size_t i = 0; i < f.params.size(); ++i) {
        CHECK(double(f.params[i]) == d.params[i]);
    }
}
