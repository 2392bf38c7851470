#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "d2f/tasks.hpp"
#include "d2f/tokens.hpp"

using namespace d2f;
using tasks::TaskKind;
using tasks::TaskSpec;

namespace {

// Reads an operand back out of its zero-padded digit tokens.
long parse_digits(const std::vector<int>& row, int begin, int width) {
    long v = 0;
    for (int i = 0; i < width; ++i) {
        const int d = row[begin + i] - tokens::kFirstSymbol;
        REQUIRE(d >= 0);
        REQUIRE(d <= 9);
        v = 10 * v + d;
    }
    return v;
}

}  // namespace

TEST_CASE("task names round-trip and unknown names are rejected") {
    CHECK(tasks::task_from_name("copy") == TaskKind::copy);
    CHECK(tasks::task_from_name("reverse") == TaskKind::reverse);
    CHECK(tasks::task_from_name("addition") == TaskKind::addition);
    CHECK(tasks::task_name(TaskKind::reverse) == std::string("reverse"));
    CHECK_THROWS(tasks::task_from_name("sort"));
}

TEST_CASE("shape arithmetic: prompt, answer, and vocab floors") {
    TaskSpec add;
    add.kind = TaskKind::addition;
    add.digits = 3;
    CHECK(add.prompt_len() == 8);   // "ddd+ddd="
    CHECK(add.answer_len() == 5);   // dddd then EOS
    CHECK(add.seq_len() == 13);
    CHECK(add.min_vocab() == 14);

    TaskSpec cp;
    cp.kind = TaskKind::copy;
    cp.content_len = 5;
    CHECK(cp.prompt_len() == 6);
    CHECK(cp.answer_len() == 6);
}

TEST_CASE("addition rows encode a zero-padded sum that is actually the sum") {
    TaskSpec spec;
    spec.kind = TaskKind::addition;
    spec.digits = 2;
    const auto ds = tasks::gen_dataset(spec, 60, 12, 123, spec.min_vocab());

    auto check_rows = [&](const std::vector<std::vector<int>>& rows) {
        for (const auto& row : rows) {
            REQUIRE(int(row.size()) == spec.seq_len());
            const long a = parse_digits(row, 0, 2);
            CHECK(row[2] == tasks::kPlus);
            const long b = parse_digits(row, 3, 2);
            CHECK(row[5] == tasks::kEquals);
            const long sum = parse_digits(row, 6, 3);
            CHECK(row[9] == tokens::kEos);
            CHECK(sum == a + b);
        }
    };
    check_rows(ds.train);
    check_rows(ds.held_out);

    // "23+45=068." spelled out in tokens, as a fixed point of the encoding.
    const std::vector<int> row = {4, 5, tasks::kPlus, 6, 7, tasks::kEquals, 2, 8, 10, 0};
    CHECK(parse_digits(row, 0, 2) == 23);
    CHECK(parse_digits(row, 6, 3) == 68);
    CHECK(tasks::answer_content(spec, row) == std::vector<int>{2, 8, 10});
}

TEST_CASE("copy and reverse rows mirror the prompt around the separator") {
    TaskSpec spec;
    spec.kind = TaskKind::copy;
    spec.content_len = 4;
    spec.alphabet = 6;
    const auto ds = tasks::gen_dataset(spec, 40, 8, 9, spec.min_vocab());
    for (const auto& row : ds.train) {
        REQUIRE(int(row.size()) == 10);
        CHECK(row[4] == tasks::kEquals);
        CHECK(row[9] == tokens::kEos);
        for (int i = 0; i < 4; ++i) {
            CHECK(row[i] >= tokens::kFirstSymbol);
            CHECK(row[i] < tokens::kFirstSymbol + spec.alphabet);
            CHECK(row[5 + i] == row[i]);
        }
    }

    spec.kind = TaskKind::reverse;
    const auto rv = tasks::gen_dataset(spec, 40, 8, 9, spec.min_vocab());
    for (const auto& row : rv.train) {
        for (int i = 0; i < 4; ++i) {
            CHECK(row[5 + i] == row[3 - i]);
        }
    }
}

TEST_CASE("splits are deduplicated by prompt and disjoint") {
    TaskSpec spec;
    spec.kind = TaskKind::copy;
    spec.content_len = 4;
    spec.alphabet = 6;
    const auto ds = tasks::gen_dataset(spec, 200, 50, 31, spec.min_vocab());
    REQUIRE(int(ds.train.size()) == 200);
    REQUIRE(int(ds.held_out.size()) == 50);

    std::set<std::vector<int>> prompts;
    auto prompt_of = [&](const std::vector<int>& row) {
        return std::vector<int>(row.begin(), row.begin() + spec.prompt_len());
    };
    for (const auto& row : ds.train) CHECK(prompts.insert(prompt_of(row)).second);
    for (const auto& row : ds.held_out) CHECK(prompts.insert(prompt_of(row)).second);
    CHECK(prompts.size() == 250);
}

TEST_CASE("generation is seed-deterministic") {
    TaskSpec spec;
    spec.kind = TaskKind::addition;
    spec.digits = 2;
    const auto a = tasks::gen_dataset(spec, 30, 10, 42, 16);
    const auto b = tasks::gen_dataset(spec, 30, 10, 42, 16);
    CHECK(a.train == b.train);
    CHECK(a.held_out == b.held_out);

    const auto c = tasks::gen_dataset(spec, 30, 10, 43, 16);
    CHECK(a.train != c.train);
}

TEST_CASE("bad configurations are rejected up front") {
    TaskSpec spec;
    spec.kind = TaskKind::addition;
    spec.digits = 1;
    // 100 distinct prompts; asking for 90 blows the 80% budget.
    CHECK_THROWS(tasks::gen_dataset(spec, 85, 5, 1, 14));
    CHECK_THROWS(tasks::gen_dataset(spec, 10, 2, 1, 13));  // vocab below the floor

    TaskSpec bad = spec;
    bad.digits = 0;
    CHECK_THROWS(bad.validate());
    TaskSpec bad2;
    bad2.kind = TaskKind::copy;
    bad2.alphabet = 11;
    CHECK_THROWS(bad2.validate());
}

TEST_CASE("answer_content stops at EOS and validates row length") {
    TaskSpec spec;
    spec.kind = TaskKind::copy;
    spec.content_len = 3;
    // Prompt "abc=", answer "ab" then EOS with one slot of padding behind it.
    const std::vector<int> row = {2, 3, 4, tasks::kEquals, 2, 3, tokens::kEos, 5};
    CHECK(tasks::answer_content(spec, row) == std::vector<int>{2, 3});
    CHECK_THROWS(tasks::answer_content(spec, std::vector<int>(5, 2)));
}
