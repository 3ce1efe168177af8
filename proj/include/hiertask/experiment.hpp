#pragma once

#include <filesystem>

#include "hiertask/config.hpp"
#include "hiertask/metrics.hpp"
#include "hiertask/training.hpp"

namespace hiertask {

struct RunResult {
    std::string run_id;
    ExperimentConfig config;
    MetricsReport test_metrics;
    std::size_t params = 0;
    std::size_t flops = 0;
    TrainedRun training;
    std::int64_t wall_ms = 0;
    std::string error;  // nonempty when the run failed

    bool failed() const { return !error.empty(); }
};

/// Trains one sweep point and evaluates it on the test split. When a
/// checkpoint path is given, the best-validation model is saved there.
RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::filesystem::path& checkpoint_path = {});

struct SweepOutcome {
    std::vector<RunResult> results;  // sorted by run_id, failures included
    std::size_t failed = 0;
    std::filesystem::path results_csv;
};

/// Runs every sweep point (optionally on several worker threads), writes
/// results.csv, summary.txt, per-run checkpoints and failures.csv when any
/// run failed. Failed points keep the sweep going.
SweepOutcome run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir,
                       std::size_t jobs = 1);

extern const char* const kResultsCsvHeader;

void write_results_csv(const std::vector<RunResult>& results, const std::filesystem::path& path);
std::string results_csv_row(const RunResult& result);
void write_summary_table(const std::vector<RunResult>& results, const std::filesystem::path& path);

}  // namespace hiertask
