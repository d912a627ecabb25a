#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attnmix/training.hpp"

namespace attnmix {

struct SweepPlan {
    std::vector<MixStrategy> strategies;  // one entry per grid cell strategy
    int repeats = 3;
    TrainConfig base;          // strategy/seed overridden per cell
    EncoderConfig encoder;     // vocab_size must already be set
    std::uint64_t base_seed = 1;
    std::string record_dir;    // completed-cell records; empty disables resume

    void validate() const;
};

struct CellResult {
    MixStrategy strategy;
    std::vector<RunRecord> runs;         // successful repeats, in repeat order
    std::vector<std::string> failures;   // error text per failed repeat
    double mean = 0.0;
    double stddev = 0.0;                 // population std over repeats

    std::string approach() const;        // display label
    bool complete() const { return failures.empty(); }
};

struct SweepResult {
    std::vector<CellResult> cells;
};

// Runs one (strategy, seed) cell; the default runner trains a fresh model.
using CellRunner = std::function<RunRecord(const MixStrategy&, std::uint64_t seed)>;

// Seed per repeat is base_seed + repeat index. Completed repeats found in
// record_dir are reused; failures are recorded and the sweep continues.
SweepResult run_sweep(const SweepPlan& plan, const DataSplits& data);
SweepResult run_sweep_with(const SweepPlan& plan, const CellRunner& runner);

struct RankedRow {
    std::string approach;
    std::optional<int> layer;
    std::optional<int> head;  // empty for layer-mean and baselines
    double mean = 0.0;
    double stddev = 0.0;
    bool baseline = false;
};

// Rows sorted by mean accuracy descending; baselines always included;
// top_k > 0 keeps only the k best attention cells.
std::vector<RankedRow> rank_cells(const SweepResult& result, int top_k = 0);

// comparison.csv: approach,layer,head,mean,std (RFC 4180, CRLF).
void write_comparison_csv(const std::string& path, const std::vector<RankedRow>& rows);

// layer_series.csv (layer,mean,std) from layer-mean cells and
// head_series.csv (layer,head,mean,std) from single-head cells.
void write_series_csv(const std::string& layer_path, const std::string& head_path,
                      const SweepResult& result);

// Stable content key for one (cell, seed); used as the record filename.
std::string cell_record_key(const SweepPlan& plan, const MixStrategy& strategy,
                            int repeat, std::uint64_t seed);

}  // namespace attnmix
