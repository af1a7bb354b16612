#pragma once

// Experiment plumbing: building environments and consensus matrices from a
// RunConfig, running seed replicas in a worker pool, writing RunLogs,
// ablation sweeps, plot-data export and the verification checklist.
//
// RunLog JSONL schema (version 1), one object per episode, keys sorted:
//   axis_value (sweeps only), config_hash, episode, param_disagreement,
//   raw_reward, round, schema, seed, skips, td_disagreement, td_loss

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "decac/actor.hpp"
#include "decac/config.hpp"

namespace decac::harness {

inline constexpr int kRunLogSchema = 1;
inline constexpr std::size_t kMovingAverageWindow = 5;
inline constexpr double kWindowFraction = 0.1;

std::unique_ptr<env::Mamdp> build_environment(const config::RunConfig& cfg, std::uint64_t seed);
Matrix build_consensus(const config::RunConfig& cfg, std::size_t n_agents, std::uint64_t seed);

/// Seed of replica r under a master seed (counter-based, see rng.hpp).
inline std::uint64_t replica_seed(std::uint64_t master, std::size_t r) {
  return derive_seed(master, 0x5eed0000ULL + r);
}

struct Replica {
  std::uint64_t seed = 0;
  actor::TrainResult result;
};
Replica run_replica(const config::RunConfig& cfg, std::uint64_t seed);

void write_runlog_jsonl(std::ostream& os, const actor::RunLog& log, const std::string& config_hash,
                        std::uint64_t seed, const std::optional<std::string>& axis_value = {});
void write_runlog_csv(std::ostream& os, const actor::RunLog& log);
void write_steps_csv(std::ostream& os, const actor::RunLog& log);

std::vector<double> episode_rewards(const actor::RunLog& log);

/// Runs fn(i) for i in [0, n) on `jobs` threads (at least one).
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Resolves the output directory: --out beats DECAC_OUT beats the config.
std::filesystem::path output_dir(const config::RunConfig& cfg,
                                 const std::optional<std::string>& cli_out);

struct TrainSummary {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> episodes;
  std::vector<double> first_window;
  std::vector<double> final_window;
};

/// Trains every seed of the config, writing per-seed JSONL/CSV/checkpoints
/// and merged runlog.jsonl / summary.csv under `out`.
TrainSummary train_all(const config::RunConfig& cfg, const std::filesystem::path& out,
                       std::size_t jobs);

struct CellSummary {
  std::string label;
  std::vector<double> first_window;  // per replica
  std::vector<double> final_window;  // per replica
  std::vector<double> mean_curve;    // mean over replicas per episode
  std::vector<double> moving_avg;    // window 5 on mean_curve
};

struct SweepSummary {
  std::string name;
  std::string axis;
  std::vector<CellSummary> cells;
};

/// All cells x repetitions; replica r uses the same seed in every cell so
/// comparisons are paired. Writes per-replica JSONL and two CSVs:
/// <name>_curves.csv (axis_value, episode, mean_reward, moving_avg, ci_lo,
/// ci_hi) and <name>_cells.csv (axis_value, replicas, first_window_mean,
/// final_window_mean, final_ci_lo, final_ci_hi).
SweepSummary run_sweep(const config::SweepSpec& spec, std::uint64_t master_seed,
                       const std::filesystem::path& out, std::size_t jobs);

/// Long-format CSV (episode, seed, axis_value, raw_reward, moving_avg) from
/// every RunLog matching the glob. Returns the number of data rows;
/// ConfigError when nothing matches.
std::size_t plotdata(const std::string& pattern, std::ostream& os);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  bool mutate_gradient = false;  // negative control: corrupt grad_w
  std::uint64_t seed = 0;
};

std::vector<Check> verify(const VerifyOptions& opts);

}  // namespace decac::harness
