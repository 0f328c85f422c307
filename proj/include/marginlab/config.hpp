#pragma once

// Experiment configuration: a small human-editable key/value format with
// [section] headers, '#' comments, and a mandatory top-level `schema = 1`.
// Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "marginlab/losses.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/optimizers.hpp"

namespace marginlab {

// Invalid configuration or input files; the CLI maps this to exit code 1.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Trajectory produced a non-finite value; the CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
  long step;
  NumericError(const std::string& msg, long step_index)
      : std::runtime_error(msg), step(step_index) {}
};

struct DatasetConfig {
  std::string generator = "soudry";  // soudry | illposed | file
  std::uint64_t seed = 0;
  int n_extra = 0;      // soudry
  double scale = 10.0;  // illposed
  std::string path;     // file
};

enum class LrPolicy { Explicit, BoundFraction };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Gdm;
  SamplerMode sampler = SamplerMode::FullBatch;
  OptimizerHyper hyper;
  std::uint64_t seed = 1;
  LrPolicy lr_policy = LrPolicy::Explicit;
  double lr_fraction = 0.5;  // eta = fraction * theoretical bound
};

struct RunSection {
  long steps = 100000;
  long record_every = 10;
  long diagnostic_horizon = 100000;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  LossFamily loss = LossFamily::Logistic;
  OptimizerConfig optimizer;
  RunSection run;

  // Throws ConfigError on any inconsistency (steps < 1, record_every < 1,
  // batch/sampler mismatches, bound-fraction for kinds without a bound, ...).
  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical round-trippable rendering (used for the manifest echo).
std::string render_config(const ExperimentConfig& cfg);

std::string to_string(OptimizerKind kind);
std::string to_string(SamplerMode mode);
std::string to_string(LossFamily family);

}  // namespace marginlab
