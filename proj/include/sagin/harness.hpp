#pragma once

// Experiment runner: configuration loading with key-path diagnostics,
// presets, per-slot metrics, and the on-disk outputs of a run
// (metrics.csv, run.json, checkpoints/, clusters.log).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sagin/baselines.hpp"
#include "sagin/clustering.hpp"
#include "sagin/env.hpp"
#include "sagin/marl.hpp"

namespace sagin::harness {

enum class Algorithm : std::uint8_t { Cmaddpg, NaiveMaddpg, Maac, GreedyNearest, RandomOffload, LocalOnly };

/// cmaddpg|maddpg|maac|greedy|random|local
Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

/// Configuration problem; the message names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  env::EnvConfig env{};
  cluster::ClusterConfig cluster{};
  marl::TrainConfig train{};
  Algorithm algorithm{Algorithm::Cmaddpg};
  int episodes{300};
  std::vector<std::uint64_t> seeds{1};
  int final_window{100};         // episodes averaged for the headline profit
  int convergence_window{50};    // moving-average window
  double convergence_fraction{0.95};
  int jobs{1};                   // concurrent seeds in a sweep
  bool write_trace{false};
  bool save_checkpoints{true};
};

/// 12 UAVs, 6 base stations, 1.25 km side; communication radius scaled with
/// the side so clustering stays non-trivial.
void apply_desk_preset(RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);
/// Reads every key of `j` over `base`; unknown keys and type errors raise
/// ConfigError naming the key path.
RunConfig from_json(const nlohmann::json& j, const RunConfig& base = {});
/// Throws ConfigError naming the failing key.
void validate(const RunConfig& cfg);

/// Applies one `key=value` (or `section.key=value`) override. The value is
/// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Loads `path` (an empty file means all defaults), then applies overrides.
/// An empty path skips the file.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  int episode{};
  std::int64_t slot{};
  double reward{};
  double cumulative_profit{};  // over the whole run
  double completion_rate{};    // on-time completions / spawned, episode to date
  double jain_index{1.0};      // over utilized cycles per device, episode to date
  int cluster_count{};
  double critic_loss{};        // NaN when no train cycle ran in the slot
  double actor_objective{};
  int spawned{};
  int on_time{};
  int late{};
  double short_deadline_profit{};
};

/// (sum u)^2 / (n sum u^2); 1 when every entry is zero.
double jain_index(std::span<const double> utilization);

/// Streaming conversion of slot records into metric rows.
class MetricsAccumulator {
 public:
  MetricsRow push(const marl::SlotRecord& record);

 private:
  int episode_{-1};
  double cumulative_profit_{0.0};
  std::int64_t spawned_{0};
  std::int64_t on_time_{0};
  std::vector<double> cycles_;
};

std::vector<MetricsRow> compute_metrics(std::span<const marl::SlotRecord> records);

/// Column order of metrics.csv.
const std::vector<std::string>& metrics_header();
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

struct EpisodeSummary {
  int episode{};
  double profit{};
  std::int64_t spawned{};
  std::int64_t on_time{};
  std::int64_t late{};
  double short_deadline_profit{};
};

std::vector<EpisodeSummary> summarize_episodes(std::span<const MetricsRow> rows);

/// First episode whose trailing moving average reaches `fraction` of the final
/// moving average (measured from below by |final|), or -1 for no episodes.
int convergence_episode(std::span<const double> episode_profit, int window, double fraction);

struct RunTotals {
  int episodes{};
  double total_profit{};
  double mean_final_profit{};       // mean episode profit over the final window
  double final_completion_rate{};   // on-time / spawned over the final window
  double completion_rate{};         // on-time / spawned over the run
  double short_deadline_share{};    // short-deadline on-time profit / on-time profit, final window
  int convergence_episode{-1};
};

RunTotals compute_totals(std::span<const MetricsRow> rows, int final_window, int convergence_window,
                         double convergence_fraction);

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
  std::uint64_t seed{};
  std::filesystem::path directory;
  std::vector<MetricsRow> rows;
  RunTotals totals;
  marl::RunArtifacts artifacts;
  double wall_seconds{};
};

/// Executes the configured algorithm without touching the filesystem.
marl::RunArtifacts execute(const RunConfig& cfg, std::uint64_t seed, const marl::RunOptions& base_options = {});

/// Runs one seed and writes metrics.csv, run.json, checkpoints/ and
/// clusters.log (and trace.csv when enabled) under `out_dir`.
RunResult run_single(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

/// One run per configured seed; with several seeds each lands in
/// `out_dir/seed_<s>` and a sweep.json summary is written.
std::vector<RunResult> run_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace sagin::harness
