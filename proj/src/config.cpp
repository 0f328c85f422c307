#include "marginlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "marginlab/version.hpp"

namespace marginlab {

namespace {

// Full round-trip precision: the rendered echo is what `diagnose` replays.
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
  }
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + value + "'");
  }
}

OptimizerKind parse_kind(const std::string& value, OptimizerConfig& opt) {
  // gd / sgd are conveniences for the momentum kinds with beta = 0.
  if (value == "gd") {
    opt.hyper.beta1 = 0.0;
    return OptimizerKind::Gdm;
  }
  if (value == "sgd") {
    opt.hyper.beta1 = 0.0;
    return OptimizerKind::Sgdm;
  }
  if (value == "gdm") return OptimizerKind::Gdm;
  if (value == "sgdm") return OptimizerKind::Sgdm;
  if (value == "adam") return OptimizerKind::AdamDeterministic;
  if (value == "rmsprop") return OptimizerKind::RmspropDecay;
  if (value == "sahb") return OptimizerKind::Sahb;
  throw ConfigError("config: unknown optimizer kind '" + value + "'");
}

}  // namespace

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Gdm: return "gdm";
    case OptimizerKind::Sgdm: return "sgdm";
    case OptimizerKind::AdamDeterministic: return "adam";
    case OptimizerKind::RmspropDecay: return "rmsprop";
    case OptimizerKind::Sahb: return "sahb";
  }
  return "?";
}

std::string to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::FullBatch: return "full";
    case SamplerMode::WithReplacement: return "with";
    case SamplerMode::WithoutReplacement: return "without";
  }
  return "?";
}

std::string to_string(LossFamily family) {
  return family == LossFamily::Exponential ? "exponential" : "logistic";
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  bool schema_seen = false;
  bool beta_seen = false;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "loss" && section != "optimizer" &&
          section != "run") {
        throw ConfigError("config: unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
    }

    if (section.empty()) {
      if (key == "schema") {
        if (parse_long(key, value) != kSchemaVersion) {
          throw ConfigError("config: unsupported schema '" + value + "'");
        }
        schema_seen = true;
        continue;
      }
      throw ConfigError("config: key '" + key + "' outside any section");
    }

    if (section == "dataset") {
      if (key == "generator") cfg.dataset.generator = value;
      else if (key == "seed") cfg.dataset.seed = parse_u64(key, value);
      else if (key == "n_extra") cfg.dataset.n_extra = static_cast<int>(parse_long(key, value));
      else if (key == "scale") cfg.dataset.scale = parse_double(key, value);
      else if (key == "path") cfg.dataset.path = value;
      else throw ConfigError("config: unknown key '" + key + "' in [dataset]");
    } else if (section == "loss") {
      if (key == "family") {
        if (value == "exponential") cfg.loss = LossFamily::Exponential;
        else if (value == "logistic") cfg.loss = LossFamily::Logistic;
        else throw ConfigError("config: unknown loss family '" + value + "'");
      } else {
        throw ConfigError("config: unknown key '" + key + "' in [loss]");
      }
    } else if (section == "optimizer") {
      if (key == "kind") cfg.optimizer.kind = parse_kind(value, cfg.optimizer);
      else if (key == "eta" || key == "eta1") cfg.optimizer.hyper.eta = parse_double(key, value);
      else if (key == "beta" || key == "beta1") {
        cfg.optimizer.hyper.beta1 = parse_double(key, value);
        beta_seen = true;
      } else if (key == "beta2") cfg.optimizer.hyper.beta2 = parse_double(key, value);
      else if (key == "epsilon") cfg.optimizer.hyper.epsilon = parse_double(key, value);
      else if (key == "batch_size") {
        cfg.optimizer.hyper.batch_size = static_cast<int>(parse_long(key, value));
      } else if (key == "sampler") {
        if (value == "full") cfg.optimizer.sampler = SamplerMode::FullBatch;
        else if (value == "with") cfg.optimizer.sampler = SamplerMode::WithReplacement;
        else if (value == "without") cfg.optimizer.sampler = SamplerMode::WithoutReplacement;
        else throw ConfigError("config: unknown sampler '" + value + "'");
      } else if (key == "seed") cfg.optimizer.seed = parse_u64(key, value);
      else if (key == "lr_policy") {
        if (value == "explicit") cfg.optimizer.lr_policy = LrPolicy::Explicit;
        else if (value == "bound-fraction") cfg.optimizer.lr_policy = LrPolicy::BoundFraction;
        else throw ConfigError("config: unknown lr_policy '" + value + "'");
      } else if (key == "lr_fraction") cfg.optimizer.lr_fraction = parse_double(key, value);
      else throw ConfigError("config: unknown key '" + key + "' in [optimizer]");
    } else if (section == "run") {
      if (key == "steps") cfg.run.steps = parse_long(key, value);
      else if (key == "record_every") cfg.run.record_every = parse_long(key, value);
      else if (key == "diagnostic_horizon") cfg.run.diagnostic_horizon = parse_long(key, value);
      else throw ConfigError("config: unknown key '" + key + "' in [run]");
    }
  }
  if (!schema_seen) throw ConfigError("config: missing 'schema = 1'");
  (void)beta_seen;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void ExperimentConfig::validate() const {
  const auto& gen = dataset.generator;
  if (gen != "soudry" && gen != "illposed" && gen != "file") {
    throw ConfigError("config: dataset generator must be soudry, illposed or file");
  }
  if (gen == "file" && dataset.path.empty()) {
    throw ConfigError("config: dataset generator 'file' needs a path");
  }
  if (gen == "soudry" && dataset.n_extra < 0) throw ConfigError("config: n_extra must be >= 0");
  if (gen == "illposed" && dataset.scale < 10.0) {
    throw ConfigError("config: illposed scale must be >= 10");
  }

  if (run.steps < 1) throw ConfigError("config: steps must be >= 1");
  if (run.record_every < 1) throw ConfigError("config: record_every must be >= 1");
  if (run.diagnostic_horizon < 1) throw ConfigError("config: diagnostic_horizon must be >= 1");

  const OptimizerHyper& h = optimizer.hyper;
  if (!(h.eta > 0.0) && optimizer.lr_policy == LrPolicy::Explicit) {
    throw ConfigError("config: eta must be positive");
  }
  if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) throw ConfigError("config: beta must lie in [0, 1)");

  const OptimizerKind kind = optimizer.kind;
  const bool adaptive = kind == OptimizerKind::AdamDeterministic ||
                        kind == OptimizerKind::RmspropDecay || kind == OptimizerKind::Sahb;
  if (adaptive) {
    if (!(h.epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
    if (!(h.beta2 > 0.0 && h.beta2 < 1.0)) throw ConfigError("config: beta2 must lie in (0, 1)");
    if (kind == OptimizerKind::AdamDeterministic &&
        !(h.beta2 > h.beta1 * h.beta1 * h.beta1 * h.beta1)) {
      throw ConfigError("config: adam requires beta2 > beta1^4");
    }
  }

  // Sampler discipline per kind.
  if (kind == OptimizerKind::Gdm || kind == OptimizerKind::AdamDeterministic) {
    if (optimizer.sampler != SamplerMode::FullBatch) {
      throw ConfigError("config: " + to_string(kind) + " is full-batch only");
    }
  }
  if (kind == OptimizerKind::RmspropDecay || kind == OptimizerKind::Sahb) {
    if (optimizer.sampler != SamplerMode::WithoutReplacement) {
      throw ConfigError("config: " + to_string(kind) + " requires sampler = without");
    }
  }
  if (optimizer.sampler != SamplerMode::FullBatch && h.batch_size < 1) {
    throw ConfigError("config: stochastic sampling needs batch_size >= 1");
  }

  if (optimizer.lr_policy == LrPolicy::BoundFraction) {
    if (!(optimizer.lr_fraction > 0.0 && optimizer.lr_fraction <= 1.0)) {
      throw ConfigError("config: lr_fraction must lie in (0, 1]");
    }
    if (kind == OptimizerKind::RmspropDecay || kind == OptimizerKind::Sahb) {
      throw ConfigError(
          "config: no closed-form learning-rate bound for " + to_string(kind) +
          "; use an explicit eta");
    }
    if (kind == OptimizerKind::Sgdm && loss == LossFamily::Exponential) {
      throw ConfigError("config: the sgdm learning-rate bound needs the logistic loss");
    }
  }
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "schema = " << kSchemaVersion << "\n\n";
  out << "[dataset]\n";
  out << "generator = " << cfg.dataset.generator << "\n";
  if (cfg.dataset.generator == "file") {
    out << "path = " << cfg.dataset.path << "\n";
  } else {
    out << "seed = " << cfg.dataset.seed << "\n";
    if (cfg.dataset.generator == "soudry") out << "n_extra = " << cfg.dataset.n_extra << "\n";
    if (cfg.dataset.generator == "illposed") out << "scale = " << g17(cfg.dataset.scale) << "\n";
  }
  out << "\n[loss]\nfamily = " << to_string(cfg.loss) << "\n";
  out << "\n[optimizer]\n";
  out << "kind = " << to_string(cfg.optimizer.kind) << "\n";
  out << "eta = " << g17(cfg.optimizer.hyper.eta) << "\n";
  out << "beta1 = " << g17(cfg.optimizer.hyper.beta1) << "\n";
  const OptimizerKind kind = cfg.optimizer.kind;
  if (kind == OptimizerKind::AdamDeterministic || kind == OptimizerKind::RmspropDecay ||
      kind == OptimizerKind::Sahb) {
    out << "beta2 = " << g17(cfg.optimizer.hyper.beta2) << "\n";
    out << "epsilon = " << g17(cfg.optimizer.hyper.epsilon) << "\n";
  }
  out << "sampler = " << to_string(cfg.optimizer.sampler) << "\n";
  if (cfg.optimizer.sampler != SamplerMode::FullBatch) {
    out << "batch_size = " << cfg.optimizer.hyper.batch_size << "\n";
    out << "seed = " << cfg.optimizer.seed << "\n";
  }
  if (cfg.optimizer.lr_policy == LrPolicy::BoundFraction) {
    out << "lr_policy = bound-fraction\n";
    out << "lr_fraction = " << g17(cfg.optimizer.lr_fraction) << "\n";
  }
  out << "\n[run]\n";
  out << "steps = " << cfg.run.steps << "\n";
  out << "record_every = " << cfg.run.record_every << "\n";
  out << "diagnostic_horizon = " << cfg.run.diagnostic_horizon << "\n";
  return out.str();
}

}  // namespace marginlab
