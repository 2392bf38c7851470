#include "d2f/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "d2f/matrix.hpp"

namespace d2f::tasks {

TaskKind task_from_name(const std::string& name) {
    if (name == "copy") {
        return TaskKind::copy;
    }
    if (name == "reverse") {
        return TaskKind::reverse;
    }
    if (name == "addition") {
        return TaskKind::addition;
    }
    throw std::runtime_error("unknown task: " + name);
}

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::copy:
            return "copy";
        case TaskKind::reverse:
            return "reverse";
        case TaskKind::addition:
            return "addition";
    }
    return "?";
}

int TaskSpec::prompt_len() const {
    return kind == TaskKind::addition ? 2 * digits + 2 : content_len + 1;
}

int TaskSpec::answer_len() const {
    return kind == TaskKind::addition ? digits + 2 : content_len + 1;
}

int TaskSpec::min_vocab() const {
    // every task uses '=' (id 13), so 14 is the floor
    return kEquals + 1;
}

void TaskSpec::validate() const {
    if (kind == TaskKind::addition) {
        require(digits >= 1 && digits <= 9, "task: digits must be in [1, 9]");
    } else {
        require(content_len >= 1, "task: content_len must be >= 1");
        require(alphabet >= 1 && alphabet <= 10, "task: alphabet must be in [1, 10]");
    }
}

namespace {

std::vector<int> make_addition(const TaskSpec& spec, long a, long b) {
    std::vector<int> row;
    row.reserve(spec.seq_len());
    auto push_digits = [&](long v, int width) {
        for (int i = width - 1; i >= 0; --i) {
            long pow10 = 1;
            for (int j = 0; j < i; ++j) {
                pow10 *= 10;
            }
            row.push_back(digit_token(int((v / pow10) % 10)));
        }
    };
    push_digits(a, spec.digits);
    row.push_back(kPlus);
    push_digits(b, spec.digits);
    row.push_back(kEquals);
    push_digits(a + b, spec.digits + 1);
    row.push_back(tokens::kEos);
    return row;
}

std::vector<int> make_copyish(const TaskSpec& spec, const std::vector<int>& symbols) {
    std::vector<int> row;
    row.reserve(spec.seq_len());
    row.insert(row.end(), symbols.begin(), symbols.end());
    row.push_back(kEquals);
    if (spec.kind == TaskKind::copy) {
        row.insert(row.end(), symbols.begin(), symbols.end());
    } else {
        row.insert(row.end(), symbols.rbegin(), symbols.rend());
    }
    row.push_back(tokens::kEos);
    return row;
}

}  // namespace

Dataset gen_dataset(const TaskSpec& spec, int n_train, int n_held_out, uint64_t seed,
                    int vocab_size) {
    spec.validate();
    require(vocab_size >= spec.min_vocab(), "task: vocab too small for task symbols");
    require(n_train >= 1 && n_held_out >= 0, "task: bad split sizes");

    const long need = long(n_train) + n_held_out;
    double space;  // distinct prompts available
    if (spec.kind == TaskKind::addition) {
        space = std::pow(10.0, 2 * spec.digits);
    } else {
        space = std::pow(double(spec.alphabet), double(spec.content_len));
    }
    require(double(need) <= 0.8 * space, "task: split sizes exceed distinct prompt space");

    Rng rng(seed, 3);
    Dataset ds;
    ds.spec = spec;
    std::vector<std::vector<int>> rows;
    std::set<std::vector<int>> seen_prompts;
    long attempts = 0;
    while (static_cast<long>(rows.size()) < need) {
        require(++attempts < 100 * need + 1000, "task: prompt sampling failed to find fresh rows");
        std::vector<int> row;
        if (spec.kind == TaskKind::addition) {
            long pow10 = 1;
            for (int i = 0; i < spec.digits; ++i) {
                pow10 *= 10;
            }
            const long a = static_cast<long>(rng.uniform_int(uint64_t(pow10)));
            const long b = static_cast<long>(rng.uniform_int(uint64_t(pow10)));
            row = make_addition(spec, a, b);
        } else {
            std::vector<int> symbols(spec.content_len);
            for (auto& s : symbols) {
                s = tokens::kFirstSymbol + int(rng.uniform_int(uint64_t(spec.alphabet)));
            }
            row = make_copyish(spec, symbols);
        }
        std::vector<int> prompt(row.begin(), row.begin() + spec.prompt_len());
        if (seen_prompts.insert(std::move(prompt)).second) {
            rows.push_back(std::move(row));
        }
    }
    ds.train.assign(rows.begin(), rows.begin() + n_train);
    ds.held_out.assign(rows.begin() + n_train, rows.end());
    return ds;
}

std::vector<int> answer_content(const TaskSpec& spec, const std::vector<int>& row) {
    require(static_cast<int>(row.size()) == spec.seq_len(), "task: row length mismatch");
    std::vector<int> out;
    for (int p = spec.prompt_len(); p < spec.seq_len(); ++p) {
        if (row[p] == tokens::kEos) {
            break;
        }
        out.push_back(row[p]);
    }
    return out;
}

}  // namespace d2f::tasks
