#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "d2f/distill.hpp"
#include "d2f/numerics.hpp"
#include "d2f/rng.hpp"
#include "d2f/tokens.hpp"

using namespace d2f;

namespace {

model::ModelConfig micro_cfg() {
    model::ModelConfig c;
    c.vocab_size = 10;
    c.dim = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.max_seq_len = 6;
    return c;
}

std::vector<std::vector<int>> micro_data(int n, int T, int vocab, uint64_t seed) {
    Rng rng(seed, 0);
    std::vector<std::vector<int>> data;
    for (int i = 0; i < n; ++i) {
        std::vector<int> row(T);
        for (auto& v : row) v = 2 + int(rng.uniform_int(vocab - 2));
        data.push_back(row);
    }
    return data;
}

}  // namespace

TEST_CASE("kl_to_teacher on a pinned pair") {
    model::ModelConfig cfg = micro_cfg();
    cfg.vocab_size = 2;
    model::TrainWorkspace<double> ws;
    ws.init(cfg, 1, 2);

    // Student row 1: logits (0,0) -> probs (0.5, 0.5). Teacher: (0.9, 0.1).
    ws.logits.zero();
    Mat<double> teacher(2, 2);
    teacher.at(0, 0) = 0.5;
    teacher.at(0, 1) = 0.5;
    teacher.at(1, 0) = 0.9;
    teacher.at(1, 1) = 0.1;
    const std::vector<uint8_t> masked = {0, 1};

    // Teacher-led divergence: 0.9 ln(0.9/0.5) + 0.1 ln(0.1/0.5), written out
    // independently of the implementation's p (log p - log q) form.
    const double want = 0.9 * std::log(9.0 / 5.0) + 0.1 * std::log(1.0 / 5.0);
    const double loss = distill::kl_to_teacher(ws, teacher, masked);
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.36806420716849715).epsilon(1e-12));

    // Gradient: (student - teacher) / total_masked on the masked row only.
    CHECK(ws.dlogits.at(1, 0) == doctest::Approx(0.5 - 0.9).epsilon(1e-12));
    CHECK(ws.dlogits.at(1, 1) == doctest::Approx(0.5 - 0.1).epsilon(1e-12));
    CHECK(ws.dlogits.at(0, 0) == 0.0);
    CHECK(ws.dlogits.at(0, 1) == 0.0);
}

TEST_CASE("kl_to_teacher is zero when the student equals the teacher") {
    model::ModelConfig cfg = micro_cfg();
    model::TrainWorkspace<double> ws;
    ws.init(cfg, 1, 3);
    Rng rng(3, 0);
    for (size_t i = 0; i < ws.logits.size(); ++i) ws.logits.data[i] = rng.normal();

    Mat<double> teacher(3, cfg.vocab_size);
    for (int r = 0; r < 3; ++r) {
        for (int j = 0; j < cfg.vocab_size; ++j) teacher.at(r, j) = ws.logits.at(r, j);
        numerics::softmax_row(teacher.row(r), cfg.vocab_size);
    }
    const std::vector<uint8_t> masked = {1, 1, 1};
    CHECK(distill::kl_to_teacher(ws, teacher, masked) == doctest::Approx(0.0).epsilon(1e-12));
    for (size_t i = 0; i < ws.dlogits.size(); ++i) {
        CHECK(std::abs(ws.dlogits.data[i]) < 1e-12);
    }
}

TEST_CASE("distillation gradient passes finite differences") {
    const auto cfg = micro_cfg();
    const auto teacher = model::Net<double>::init(cfg, 7);
    auto student = model::Net<double>::init(cfg, 8);  // different params on purpose
    Rng rng(9, 0);

    const int B = 2, T = 6, P = 2, K = 2;
    std::vector<int> toks(B * T);
    std::vector<uint8_t> masked(B * T, 0);
    for (int i = 0; i < B * T; ++i) toks[i] = 2 + int(rng.uniform_int(cfg.vocab_size - 2));
    for (const int r : {3, 5, 8, 9}) {
        toks[r] = tokens::kMask;
        masked[r] = 1;
    }

    model::MaskSpec tmask;  // full
    tmask.prompt_len = P;
    model::MaskSpec smask{model::MaskSpec::Kind::block_causal, P, K};
    model::TrainWorkspace<double> tws, sws;
    tws.init(cfg, B, T);
    sws.init(cfg, B, T);

    teacher.forward_train(toks, tmask, tws);
    Mat<double> tprobs(B * T, cfg.vocab_size);
    for (int r = 0; r < B * T; ++r) {
        for (int j = 0; j < cfg.vocab_size; ++j) tprobs.at(r, j) = tws.logits.at(r, j);
        numerics::softmax_row(tprobs.row(r), cfg.vocab_size);
    }

    const auto loss = [&] {
        student.forward_train(toks, smask, sws);
        return distill::kl_to_teacher(sws, tprobs, masked);
    };
    loss();
    std::vector<double> grad(student.params.size(), 0.0);
    student.backward_train(toks, smask, sws, grad);

    std::vector<size_t> idx;
    for (const auto& v : student.layout.views) {
        for (size_t s = 0; s < v.count(); s += v.count() / 5 + 1) idx.push_back(v.offset + s);
    }
    CHECK(numerics::grad_check(loss, student.params, grad, idx) < 1e-5);
}

TEST_CASE("distill_student leaves the teacher frozen and is reproducible") {
    const auto cfg = micro_cfg();
    const auto data = micro_data(24, 6, cfg.vocab_size, 4);
    const auto teacher = model::Net<float>::init(cfg, 11);
    const auto teacher_params = teacher.params;

    distill::DistillConfig dc;
    dc.steps = 15;
    dc.batch = 4;
    dc.block_len = 2;
    dc.seed = 99;
    dc.log_every = 1000;

    auto run = [&] {
        auto student = teacher;
        double last = -1;
        distill::distill_student(student, teacher, data, 2, dc,
                                 [&](long, double l, double) { last = l; });
        CHECK(std::isfinite(last));
        return student.params;
    };
    const auto s1 = run();
    const auto s2 = run();
    CHECK(s1 == s2);
    CHECK(teacher.params == teacher_params);
    CHECK(s1 != teacher_params);  // training moved the student
}

TEST_CASE("zero distillation steps keep the student an exact copy") {
    const auto cfg = micro_cfg();
    const auto data = micro_data(8, 6, cfg.vocab_size, 5);
    const auto teacher = model::Net<float>::init(cfg, 12);
    auto student = teacher;
    distill::DistillConfig dc;
    dc.steps = 0;
    distill::distill_student(student, teacher, data, 2, dc, nullptr);
    CHECK(student.params == teacher.params);
}

TEST_CASE("monotone and random schedules produce different training paths") {
    const auto cfg = micro_cfg();
    const auto data = micro_data(24, 6, cfg.vocab_size, 6);
    const auto teacher = model::Net<float>::init(cfg, 13);

    distill::DistillConfig dc;
    dc.steps = 10;
    dc.batch = 4;
    dc.block_len = 2;
    dc.seed = 7;
    dc.log_every = 1000;

    auto student_m = teacher;
    distill::distill_student(student_m, teacher, data, 2, dc, nullptr);
    dc.monotone = false;
    auto student_r = teacher;
    distill::distill_student(student_r, teacher, data, 2, dc, nullptr);
    CHECK(student_m.params != student_r.params);
}

TEST_CASE("config mismatch between student and teacher is rejected") {
    const auto cfg = micro_cfg();
    auto other = cfg;
    other.dim = 32;
    const auto teacher = model::Net<float>::init(cfg, 14);
    auto student = model::Net<float>::init(other, 14);
    const auto data = micro_data(8, 6, cfg.vocab_size, 7);
    distill::DistillConfig dc;
    dc.steps = 1;
    CHECK_THROWS(distill::distill_student(student, teacher, data, 2, dc, nullptr));
}
