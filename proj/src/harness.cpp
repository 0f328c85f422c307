#include "marginlab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "marginlab/version.hpp"

namespace marginlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

LossSpec spec_for(LossFamily family) {
  return family == LossFamily::Exponential ? LossSpec::exponential() : LossSpec::logistic();
}

Dataset build_dataset(const DatasetConfig& dc) {
  if (dc.generator == "soudry") return make_soudry_dataset(dc.seed, dc.n_extra);
  if (dc.generator == "illposed") return make_illposed_dataset(dc.seed, dc.scale);
  return load_dataset(dc.path);
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Empty cell for NaN so inapplicable diagnostics stay visibly blank.
std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

double cell_double(const std::string& s, const char* what, long row) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument(std::string("states.csv row ") + std::to_string(row) +
                                ": bad " + what + " value '" + s + "'");
  }
  return v;
}

json double_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

json report_to_json(const DiagnosticsReport& rep) {
  json r;
  r["steps"] = rep.t.empty() ? 0 : rep.t.back();
  r["final_loss"] = rep.loss.empty() ? 0.0 : rep.loss.back();
  r["final_angle"] = rep.angle.empty() ? 0.0 : rep.angle.back();
  r["descent"] = {{"applicable", rep.descent_applicable},
                  {"checked", rep.descent.checked},
                  {"violations", rep.descent.violations},
                  {"worst_slack", rep.descent.worst_slack},
                  {"coefficient", rep.descent.coefficient}};
  r["u"] = {{"applicable", rep.u_applicable},
            {"identity_max_err", rep.u_identity_max_err}};
  r["residual"] = {{"applicable", rep.residual_applicable},
                   {"window_ratio", double_or_null(rep.residual_window_ratio)}};
  r["g"] = {{"applicable", rep.g_applicable},
            {"window_growth", double_or_null(rep.g_window_growth)},
            {"increment_max_err", rep.g_increment_max_err}};
  r["rates_applicable"] = rep.rates_applicable;
  if (rep.rates_applicable) {
    r["tL_plateau"] = rep.rates.tL_plateau;
    r["wnorm_over_lnt_tail"] = rep.rates.wnorm_over_lnt_tail;
  }
  r["gradient_loss_sandwich"] = {{"checked", rep.gradient_loss_sandwich_checked},
                                 {"violations", rep.gradient_loss_sandwich_violations}};
  r["note"] = rep.note;
  return r;
}

std::map<std::string, long> tally_violations(const DiagnosticsReport& rep, SamplerMode sampler) {
  std::map<std::string, long> v;
  if (rep.descent_applicable) v["descent"] = rep.descent.violations;
  v["gradient_loss_sandwich"] = rep.gradient_loss_sandwich_violations;
  if (rep.u_applicable) v["u_identity"] = rep.u_identity_max_err > 1e-9 ? 1 : 0;
  // Stochastic runs get a wider, unasserted residual band (see report note).
  if (rep.residual_applicable && sampler == SamplerMode::FullBatch &&
      !std::isnan(rep.residual_window_ratio)) {
    v["residual_window"] = rep.residual_window_ratio > 1.2 ? 1 : 0;
  }
  if (rep.g_applicable) {
    v["g_increment"] = rep.g_increment_max_err > 1e-10 ? 1 : 0;
    if (!std::isnan(rep.g_window_growth)) v["g_window"] = rep.g_window_growth > 1.1 ? 1 : 0;
  }
  return v;
}

json margin_to_json(const MaxMarginSolution& sol) {
  json m;
  m["w_hat"] = std::vector<double>(sol.w_hat.data(), sol.w_hat.data() + sol.w_hat.size());
  m["gamma"] = sol.gamma;
  m["support"] = sol.support;
  m["v"] = sol.dual_v;
  m["kkt_residual"] = sol.kkt_residual;
  m["converged"] = sol.converged;
  m["sweeps"] = sol.sweeps;
  return m;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_states_csv(const fs::path& path, const TrajectoryRecord& traj) {
  const int d = traj.steps.empty() ? 0 : static_cast<int>(traj.steps.front().w.size());
  std::ostringstream out;
  out << "t";
  for (int j = 0; j < d; ++j) out << ",w" << j;
  out << ",loss,grad_norm,delta_w_norm";
  for (int j = 0; j < d; ++j) out << ",nu" << j;
  out << ",batch\n";
  for (const StepRecord& rec : traj.steps) {
    out << rec.t;
    for (int j = 0; j < d; ++j) out << ',' << format_double(rec.w(j));
    out << ',' << format_double(rec.loss) << ',' << format_double(rec.grad_norm) << ','
        << format_double(rec.delta_w_norm);
    for (int j = 0; j < d; ++j) {
      out << ',';
      if (rec.nu_used.size() == d) out << format_double(rec.nu_used(j));
    }
    out << ',';
    for (std::size_t k = 0; k < rec.batch.size(); ++k) {
      if (k) out << '|';
      out << rec.batch[k];
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

TrajectoryRecord read_states_csv(const fs::path& path, OptimizerKind kind, SamplerMode sampler,
                                 const OptimizerHyper& hyper, long total_steps,
                                 long dense_horizon, long record_every) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty states file " + path.string());
  // Header: t,w0..w{d-1},loss,grad_norm,delta_w_norm,nu0..nu{d-1},batch.
  const auto header = split_csv(line);
  int d = 0;
  while (1 + d < static_cast<int>(header.size()) &&
         header[static_cast<std::size_t>(1 + d)] == "w" + std::to_string(d)) {
    ++d;
  }
  const std::size_t expect = 1 + 2 * static_cast<std::size_t>(d) + 3 + 1;
  if (d == 0 || header.size() != expect) {
    throw std::invalid_argument("unrecognized states.csv header in " + path.string());
  }

  TrajectoryRecord traj;
  traj.kind = kind;
  traj.sampler = sampler;
  traj.hyper = hyper;
  traj.total_steps = total_steps;
  traj.dense_horizon = dense_horizon;
  traj.record_every = record_every;

  long row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = split_csv(line);
    if (cells.size() != expect) {
      throw std::invalid_argument("states.csv row " + std::to_string(row) + ": wrong cell count");
    }
    StepRecord rec;
    rec.t = static_cast<long>(cell_double(cells[0], "t", row));
    rec.w.resize(d);
    for (int j = 0; j < d; ++j) {
      rec.w(j) = cell_double(cells[static_cast<std::size_t>(1 + j)], "w", row);
    }
    std::size_t k = 1 + static_cast<std::size_t>(d);
    rec.loss = cell_double(cells[k++], "loss", row);
    rec.grad_norm = cell_double(cells[k++], "grad_norm", row);
    rec.delta_w_norm = cell_double(cells[k++], "delta_w_norm", row);
    if (!cells[k].empty()) {
      rec.nu_used.resize(d);
      for (int j = 0; j < d; ++j) {
        rec.nu_used(j) = cell_double(cells[k + static_cast<std::size_t>(j)], "nu", row);
      }
    }
    k += static_cast<std::size_t>(d);
    if (!cells[k].empty()) {
      const std::string& field = cells[k];
      std::size_t start = 0;
      while (start <= field.size()) {
        const auto bar = field.find('|', start);
        const std::string tok =
            field.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        int idx = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
        if (ec != std::errc() || p != tok.data() + tok.size()) {
          throw std::invalid_argument("states.csv row " + std::to_string(row) + ": bad batch");
        }
        rec.batch.push_back(idx);
        if (bar == std::string::npos) break;
        start = bar + 1;
      }
    }
    traj.steps.push_back(std::move(rec));
  }
  traj.validate();
  return traj;
}

void write_trajectory_csv(const fs::path& path, const DiagnosticsReport& rep) {
  std::ostringstream out;
  out << "t,loss,grad_norm,delta_w_norm,xi,g,L_u,r_norm,angle,tL\n";
  for (std::size_t i = 0; i < rep.t.size(); ++i) {
    out << rep.t[i] << ',' << cell(rep.loss[i]) << ',' << cell(rep.grad_norm[i]) << ','
        << cell(rep.delta_w_norm[i]) << ',' << cell(rep.xi[i]) << ',' << cell(rep.g[i]) << ','
        << cell(rep.L_u[i]) << ',' << cell(rep.r_norm[i]) << ',' << cell(rep.angle[i]) << ','
        << cell(rep.tL[i]) << '\n';
  }
  write_file_atomic(path, out.str());
}

RunResult run_experiment(const ExperimentConfig& cfg_in, const fs::path& out_dir) {
  cfg_in.validate();
  const LossSpec spec = spec_for(cfg_in.loss);
  Dataset ds = build_dataset(cfg_in.dataset);

  if (!check_separable(ds).separable) {
    throw ConfigError(
        "run: dataset is not linearly separable; the margin problem these "
        "diagnostics are built on has no solution for it");
  }

  const OptimizerKind kind = cfg_in.optimizer.kind;
  const SamplerMode mode = cfg_in.optimizer.sampler;
  const Eigen::VectorXd w1 = Eigen::VectorXd::Zero(ds.d());

  double resolved = cfg_in.optimizer.hyper.eta;
  bool heuristic = false;
  if (cfg_in.optimizer.lr_policy == LrPolicy::BoundFraction) {
    LrBoundReport bound;
    switch (kind) {
      case OptimizerKind::Gdm:
        bound = lr_bound_gdm(spec, ds, w1);
        break;
      case OptimizerKind::Sgdm: {
        const int b = mode == SamplerMode::FullBatch ? ds.n() : cfg_in.optimizer.hyper.batch_size;
        bound = lr_bound_sgdm(spec, ds, b, cfg_in.optimizer.hyper.beta1);
        // The bound's sampling model is with-replacement; other samplers
        // reuse it as a heuristic and say so in the manifest.
        heuristic = mode != SamplerMode::WithReplacement;
        break;
      }
      case OptimizerKind::AdamDeterministic:
        bound = lr_bound_adam(spec, ds, cfg_in.optimizer.hyper.beta1,
                              cfg_in.optimizer.hyper.beta2, cfg_in.optimizer.hyper.epsilon, w1);
        break;
      default:
        throw ConfigError("config: no learning-rate bound for " + to_string(kind));
    }
    resolved = cfg_in.optimizer.lr_fraction * bound.bound;
  }
  if (!(resolved > 0.0) || !std::isfinite(resolved)) {
    throw ConfigError("run: resolved learning rate is not positive and finite");
  }

  OptimizerHyper hyper = cfg_in.optimizer.hyper;
  hyper.eta = resolved;
  const int n = ds.n();
  const int b = mode == SamplerMode::FullBatch ? n : hyper.batch_size;
  if (b > n) throw ConfigError("config: batch_size exceeds the dataset size");

  const long total = cfg_in.run.steps;
  const long horizon = cfg_in.run.diagnostic_horizon;
  const long stride = cfg_in.run.record_every;

  OptimizerState st = make_state(w1, hyper);
  BatchSampler sampler(mode, n, b, cfg_in.optimizer.seed);

  TrajectoryRecord traj;
  traj.kind = kind;
  traj.sampler = mode;
  traj.hyper = hyper;
  traj.total_steps = total;
  traj.dense_horizon = horizon;
  traj.record_every = stride;
  traj.steps.reserve(static_cast<std::size_t>(std::min(total, horizon) + total / stride + 2));

  const bool corrected_nu = kind == OptimizerKind::AdamDeterministic;
  const bool raw_nu = kind == OptimizerKind::RmspropDecay || kind == OptimizerKind::Sahb;

  const auto t0 = std::chrono::steady_clock::now();

  const auto record_state = [&](const std::vector<int>* batch) {
    StepRecord rec;
    rec.t = st.t;
    rec.w = st.w;
    rec.loss = empirical_loss(spec, ds, st.w);
    rec.grad_norm = empirical_grad(spec, ds, st.w).norm();
    rec.delta_w_norm = (st.w - st.prev_w).norm();
    if (corrected_nu && st.t > 1) {
      rec.nu_used = st.nu / (1.0 - std::pow(hyper.beta2, static_cast<double>(st.t - 1)));
    } else if (raw_nu && st.t > 1) {
      rec.nu_used = st.nu;
    }
    if (batch != nullptr && mode != SamplerMode::FullBatch) rec.batch = *batch;
    if (!std::isfinite(rec.loss)) {
      throw NumericError("non-finite loss at step " + std::to_string(st.t), st.t);
    }
    traj.steps.push_back(std::move(rec));
  };

  const auto should_record = [&](long t) {
    return t <= horizon || t % stride == 0 || t == total;
  };

  record_state(nullptr);
  for (long t = 1; t < total; ++t) {
    const std::vector<int>* used = nullptr;
    switch (kind) {
      case OptimizerKind::Gdm:
        step_gdm(st, spec, ds);
        break;
      case OptimizerKind::Sgdm: {
        const auto& batch = sampler.next();
        used = &batch;
        step_sgdm(st, spec, ds, batch);
        break;
      }
      case OptimizerKind::AdamDeterministic:
        step_adam_deterministic(st, spec, ds);
        break;
      case OptimizerKind::RmspropDecay: {
        const auto& batch = sampler.next();
        used = &batch;
        step_rmsprop_decay(st, spec, ds, batch);
        break;
      }
      case OptimizerKind::Sahb: {
        const auto& batch = sampler.next();
        used = &batch;
        step_sahb(st, spec, ds, batch);
        break;
      }
    }
    if (!st.w.allFinite()) {
      throw NumericError("non-finite iterate at step " + std::to_string(st.t), st.t);
    }
    if (should_record(st.t)) record_state(used);
  }
  traj.validate();

  DiagnosticsReport rep = build_report(traj, spec, ds);
  const MaxMarginSolution sol = solve_max_margin(ds);

  const auto t1 = std::chrono::steady_clock::now();
  const double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  RunResult res;
  res.config = cfg_in;
  res.resolved_eta = resolved;
  res.lr_bound_heuristic = heuristic;
  res.steps_taken = total;
  res.final_w = traj.steps.back().w;
  res.final_loss = traj.steps.back().loss;
  res.final_angle = angle_gap(res.final_w, sol);
  res.wall_clock_ms = wall_ms;
  res.violations = tally_violations(rep, mode);
  res.out_dir = out_dir;
  res.report = rep;

  fs::create_directories(out_dir);
  save_dataset(ds, out_dir / "dataset.csv");
  write_file_atomic(out_dir / "margin.json", margin_to_json(sol).dump(2) + "\n");
  write_states_csv(out_dir / "states.csv", traj);
  write_trajectory_csv(out_dir / "trajectory.csv", rep);
  write_file_atomic(out_dir / "report.json", report_to_json(rep).dump(2) + "\n");

  json m;
  m["schema"] = kSchemaVersion;
  m["artifact_version"] = kVersion;
  m["config"] = render_config(cfg_in);
  m["resolved_eta"] = resolved;
  m["lr_bound_heuristic"] = heuristic;
  m["rng"] = {{"algorithm", "splitmix64"},
              {"dataset_seed", cfg_in.dataset.seed},
              {"optimizer_seed", cfg_in.optimizer.seed}};
  m["steps"] = total;
  json files;
  for (const char* name :
       {"dataset.csv", "dataset.csv.json", "margin.json", "states.csv", "trajectory.csv",
        "report.json"}) {
    files[name] = hex64(hash_file(out_dir / name));
  }
  m["files"] = files;
  m["violations"] = res.violations;
  // The hash covers the deterministic part only; wall clock rides along after.
  res.manifest_hash = fnv1a64(m.dump(2));
  m["manifest_hash"] = hex64(res.manifest_hash);
  m["wall_clock_ms"] = wall_ms;
  write_file_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
  return res;
}

DiagnosticsReport diagnose_run(const fs::path& run_dir) {
  std::ifstream min(run_dir / "manifest.json");
  if (!min) throw ConfigError("diagnose: missing manifest.json under " + run_dir.string());
  json m = json::parse(min);
  ExperimentConfig cfg = parse_config_text(m.at("config").get<std::string>());
  cfg.optimizer.hyper.eta = m.at("resolved_eta").get<double>();
  cfg.optimizer.lr_policy = LrPolicy::Explicit;

  Dataset ds = load_dataset(run_dir / "dataset.csv");
  const LossSpec spec = spec_for(cfg.loss);
  OptimizerHyper hyper = cfg.optimizer.hyper;
  TrajectoryRecord traj =
      read_states_csv(run_dir / "states.csv", cfg.optimizer.kind, cfg.optimizer.sampler, hyper,
                      cfg.run.steps, cfg.run.diagnostic_horizon, cfg.run.record_every);
  DiagnosticsReport rep = build_report(traj, spec, ds);
  write_trajectory_csv(run_dir / "trajectory.csv", rep);
  write_file_atomic(run_dir / "report.json", report_to_json(rep).dump(2) + "\n");
  return rep;
}

Comparison compare_runs(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.size() < 2) throw ConfigError("compare: need at least two run directories");
  Comparison cmp;
  for (const fs::path& dir : run_dirs) {
    std::ifstream min(dir / "manifest.json");
    if (!min) throw ConfigError("compare: missing manifest.json under " + dir.string());
    json m = json::parse(min);
    std::ifstream rin(dir / "report.json");
    if (!rin) throw ConfigError("compare: missing report.json under " + dir.string());
    json r = json::parse(rin);

    const ExperimentConfig cfg = parse_config_text(m.at("config").get<std::string>());
    RunSummary s;
    s.label = dir.filename().empty() ? dir.parent_path().filename().string()
                                     : dir.filename().string();
    s.kind = cfg.optimizer.kind;
    s.eta = m.at("resolved_eta").get<double>();
    s.beta1 = cfg.optimizer.hyper.beta1;
    if (!r.value("rates_applicable", false)) {
      throw ConfigError("compare: run '" + s.label + "' is too short for rate estimates");
    }
    s.tL_plateau = r.at("tL_plateau").get<double>();
    s.wnorm_over_lnt_tail = r.at("wnorm_over_lnt_tail").get<double>();
    s.final_angle = r.at("final_angle").get<double>();
    s.dataset_hash =
        std::stoull(m.at("files").at("dataset.csv").get<std::string>(), nullptr, 16);
    s.loss = to_string(cfg.loss);
    cmp.runs.push_back(std::move(s));
  }
  for (const RunSummary& s : cmp.runs) {
    if (s.dataset_hash != cmp.runs.front().dataset_hash || s.loss != cmp.runs.front().loss) {
      throw ConfigError("compare: runs were made on different datasets or losses");
    }
  }
  const std::size_t k = cmp.runs.size();
  cmp.tl_ratio.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      cmp.tl_ratio[i][j] = cmp.runs[i].tL_plateau / cmp.runs[j].tL_plateau;
    }
  }
  return cmp;
}

std::string render_comparison(const Comparison& cmp) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-8s %-12s %-7s %-12s %-12s %-10s\n", "run", "kind",
                "eta", "beta1", "t*L", "|w|/ln t", "angle");
  out << buf;
  for (const RunSummary& s : cmp.runs) {
    std::snprintf(buf, sizeof buf, "%-24s %-8s %-12.6g %-7.3g %-12.6g %-12.6g %-10.4g\n",
                  s.label.c_str(), to_string(s.kind).c_str(), s.eta, s.beta1, s.tL_plateau,
                  s.wnorm_over_lnt_tail, s.final_angle);
    out << buf;
  }
  out << "\nt*L ratio (row / column):\n";
  std::snprintf(buf, sizeof buf, "%-24s", "");
  out << buf;
  for (const RunSummary& s : cmp.runs) {
    std::snprintf(buf, sizeof buf, " %-12s", s.label.substr(0, 12).c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-24s", cmp.runs[i].label.substr(0, 24).c_str());
    out << buf;
    for (std::size_t j = 0; j < cmp.runs.size(); ++j) {
      std::snprintf(buf, sizeof buf, " %-12.6g", cmp.tl_ratio[i][j]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace marginlab
