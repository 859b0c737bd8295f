#pragma once

// Experiment configuration, run persistence, sweeps and aggregation.
//
// A run directory (one per seed) holds:
//   config.json     resolved configuration with every default materialized
//   log.jsonl       header line, one line per evaluation, closing summary line
//   evals.csv       the eval records of log.jsonl in wide form
//   checkpoint.bin  final agent (see save_checkpoint for the layout)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rheacl/schedulers.hpp"

namespace rheacl {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kLogSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "RHEACL_OUTPUT_ROOT";

using Json = nlohmann::ordered_json;

struct RunConfig {
    std::string name = "run";
    SchedulerConfig scheduler;
    PpoConfig ppo;
    ScoreConfig score;
    StepBudgetSchedule schedule;
    EnvOptions env;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    /// Relative paths resolve against the output root.
    std::string output_dir = "default";

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

Json config_to_json(const RunConfig& cfg);
/// Missing keys take defaults; unknown keys and ill-typed values throw ConfigError.
RunConfig config_from_json(const Json& doc);

/// Sets `doc[a][b][c] = value` for the dotted path "a.b.c". The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& dotted_path, const std::string& value);
/// "a.b.c=value"
void apply_override(Json& doc, const std::string& assignment);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& doc);

/// Loads a config file (or the defaults when `path` is empty) and applies overrides.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// $RHEACL_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const std::string& output_dir);

Json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const Json& j);

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    bool ok = false;
    std::string error;
    double final_roster_mean = 0.0;
    std::int64_t frames_consumed = 0;
};

/// Runs one seed into `dir`. Failures are caught, logged to log.jsonl and reported
/// through the outcome; partial logs stay on disk.
SeedOutcome run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);

struct ExperimentOutcome {
    std::vector<SeedOutcome> seeds;
    bool ok() const;
};

/// All seeds into `dir`/seed_<s>, then `dir`/summary.csv across seeds.
ExperimentOutcome run_experiment(const RunConfig& cfg, const std::filesystem::path& dir, std::size_t jobs = 1);

struct SweepRow {
    std::string id;
    Json overrides = Json::object(); // dotted path -> value
};

struct SweepSpec {
    std::string name;
    std::string description;
    Json base = Json::object();
    std::vector<SweepRow> rows;

    /// Base config with the row's overrides applied.
    RunConfig resolve(const SweepRow& row) const;
};

/// Rows come from an explicit "rows" list, optionally crossed with "axes"
/// (dotted path -> list of values) and "sobol_rates" (count of Sobol
/// mutation/crossover pairs).
SweepSpec sweep_from_json(const Json& doc);
SweepSpec load_sweep(const std::filesystem::path& path);

struct SweepOutcome {
    std::size_t runs = 0;
    std::size_t failures = 0;
    std::filesystem::path index;
};

/// Every row x seed into `dir`/<row id>/seed_<s>; index.csv lists each run and its status.
SweepOutcome run_sweep(const SweepSpec& spec, const std::filesystem::path& dir, std::size_t jobs = 1);

struct AggregateRow {
    std::string group;
    std::int64_t frames = 0; // bucket start
    double mean = 0.0;
    double std = 0.0; // population std across runs
    std::size_t n = 0;
};

/// Directories holding log.jsonl, found by walking `roots` (sorted, deterministic).
std::vector<std::filesystem::path> find_run_dirs(const std::vector<std::filesystem::path>& roots);

/// Per group and frame bucket: mean/std over runs of the roster mean of each run's
/// last eval record in that bucket. `group_by` is a dotted config path; a width of
/// 0 uses the runs' scheduler.iter_steps.
std::vector<AggregateRow> aggregate(const std::vector<std::filesystem::path>& run_dirs, const std::string& group_by,
                                    std::int64_t bucket_width = 0);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& group_by,
                         const std::filesystem::path& path);

struct ValidationReport {
    std::vector<std::string> problems;
    bool ok() const { return problems.empty(); }
};

/// Checks that a run directory holds a parseable config, a complete log, the CSV
/// and a loadable checkpoint.
ValidationReport validate_run_dir(const std::filesystem::path& dir);

/// Minimal CSV quoting.
std::string csv_field(const std::string& s);

} // namespace rheacl
