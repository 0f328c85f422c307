#pragma once

// Experiment runner and run-directory file formats. A run directory holds:
//   dataset.csv (+ .csv.json)    the folded points and their provenance
//   margin.json                  max-margin solution used by diagnostics
//   states.csv                   per-step state (dense up to the horizon)
//   trajectory.csv               scalar diagnostic series, fixed column order
//   report.json                  summary diagnostics
//   manifest.json                config echo, hashes, versions, wall clock
// All numeric files are written with 17 significant digits and atomically
// (temp file + rename); re-running a config reproduces them byte for byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "marginlab/config.hpp"
#include "marginlab/diagnostics.hpp"

namespace marginlab {

struct RunResult {
  ExperimentConfig config;  // echo with the resolved learning rate
  double resolved_eta = 0.0;
  bool lr_bound_heuristic = false;  // bound reused outside its exact setting
  long steps_taken = 0;
  Eigen::VectorXd final_w;
  double final_loss = 0.0;
  double final_angle = 0.0;
  double wall_clock_ms = 0.0;
  std::map<std::string, long> violations;
  std::filesystem::path out_dir;
  std::uint64_t manifest_hash = 0;
  DiagnosticsReport report;
};

RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Recompute diagnostics from a run directory's states.csv + dataset +
// manifest; writes trajectory.csv and report.json (and returns the report).
DiagnosticsReport diagnose_run(const std::filesystem::path& run_dir);

struct RunSummary {
  std::string label;
  OptimizerKind kind = OptimizerKind::Gdm;
  double eta = 0.0;
  double beta1 = 0.0;
  double tL_plateau = 0.0;
  double wnorm_over_lnt_tail = 0.0;
  double final_angle = 0.0;
  std::uint64_t dataset_hash = 0;
  std::string loss;
};

struct Comparison {
  std::vector<RunSummary> runs;
  // tl_ratio[i][j] = tL_plateau(run i) / tL_plateau(run j).
  std::vector<std::vector<double>> tl_ratio;
};

// Requires >= 2 runs over the same dataset (by content hash) and loss.
Comparison compare_runs(const std::vector<std::filesystem::path>& run_dirs);
std::string render_comparison(const Comparison& cmp);

// ---- file-format helpers (shared by the runner, diagnose and the tests) ----

void write_states_csv(const std::filesystem::path& path, const TrajectoryRecord& traj);
TrajectoryRecord read_states_csv(const std::filesystem::path& path, OptimizerKind kind,
                                 SamplerMode sampler, const OptimizerHyper& hyper,
                                 long total_steps, long dense_horizon, long record_every);
void write_trajectory_csv(const std::filesystem::path& path, const DiagnosticsReport& rep);

// FNV-1a 64-bit over a byte string / file contents.
std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t hash_file(const std::filesystem::path& path);

// Format a double with round-trip precision (17 significant digits).
std::string format_double(double v);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace marginlab
