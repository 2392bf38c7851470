#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "d2f/decode.hpp"
#include "d2f/harness.hpp"
#include "d2f/tasks.hpp"

namespace d2f::report {

// Shortest round-trip decimal form. Every double in the CSV and JSON reports
// goes through this one function so the two files carry identical values.
std::string fmt_double(double v);

// One row per metrics arm, stable column order, speedup recomputed from raw
// tokens_per_second against the named baseline arm (empty name = first row).
// Empty path skips that format; empty rows emit a header-only CSV / empty
// JSON array.
void emit_report(const std::vector<harness::Metrics>& rows, const std::string& baseline_arm,
                 const std::string& csv_path, const std::string& json_path);

// Reads rows back from an emitted JSON report. The stored speedup column is
// ignored; ratios are always recomputed at emission time.
std::vector<harness::Metrics> load_metrics(const std::string& path);

void save_dataset(const std::string& path, const tasks::Dataset& ds, int vocab_size,
                  uint64_t seed);

struct LoadedDataset {
    tasks::Dataset data;
    int vocab_size = 0;
    uint64_t seed = 0;
};

LoadedDataset load_dataset(const std::string& path);

// Newline-delimited {step, loss, wall_ms} records, one per training log call.
class LossLogger {
  public:
    explicit LossLogger(const std::string& path);
    void log(long step, double loss, double wall_ms);

  private:
    std::ofstream out_;
};

// Newline-delimited decode trace for golden-trace tests and inspection.
void write_trace(const std::string& path, const std::vector<decode::TraceRecord>& trace);

}  // namespace d2f::report
