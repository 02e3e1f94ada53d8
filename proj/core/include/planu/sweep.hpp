#pragma once

#include "planu/config.hpp"
#include "planu/envs.hpp"
#include "planu/planner.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace planu {

inline constexpr int trace_schema_version = 1;

/// One cell of the sweep's Cartesian product.
struct RunSpec {
    std::string run_id;
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    double failure_rate = 0.0;
    std::size_t instance = 0;
};

/// failure_rate x instance x variant x seed, in that nesting order.
std::vector<RunSpec> enumerate_runs(const ExperimentConfig& cfg);

/// Blocksworld instances of the sweep (empty for other environments).
std::vector<envs::BlocksworldInstance> prepare_instances(const EnvSpec& spec);

std::unique_ptr<envs::Environment> make_environment(const ExperimentConfig& cfg, const RunSpec& run,
                                                    const std::vector<envs::BlocksworldInstance>& instances);

struct RunOutcome {
    RunSpec spec;
    bool ok = false;
    std::string error;
    std::string recommendation;
    double success = 0.0;  ///< fraction of evaluation episodes that succeeded
    double mean_return = 0.0;
    std::optional<std::size_t> iterations_to_first_success;  ///< 1-based
    double wall_seconds = 0.0;
    std::vector<std::string> trace_lines;  ///< JSONL records
    nlohmann::json tree;                   ///< snapshot, null unless requested
};

/// Effective configuration of one run: the sweep config narrowed to the
/// run's variant, seed and failure rate.
ExperimentConfig effective_config(const ExperimentConfig& cfg, const RunSpec& run);

RunOutcome execute_run(const ExperimentConfig& cfg, const RunSpec& run,
                       const std::vector<envs::BlocksworldInstance>& instances, bool keep_tree);

struct SweepResult {
    std::vector<RunOutcome> runs;
    std::string summary_csv;
    std::string aggregate_csv;
    bool all_ok() const;
};

/// Runs every cell on a bounded worker pool. With write_files, writes
/// <out>/<run_id>.jsonl, <out>/trees/<run_id>.json, summary.csv,
/// aggregate.csv, config.snapshot and runs.json.
SweepResult run_sweep(const ExperimentConfig& cfg, bool write_files = true);

std::string summary_csv(const std::vector<RunOutcome>& runs, const std::string& env_id);
std::string aggregate_csv(const std::vector<RunOutcome>& runs, const std::string& env_id);

}  // namespace planu
