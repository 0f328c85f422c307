// End-to-end property checks at desk scale. Each criterion prints one
// [PASS]/[FAIL] line with its measured values; the process exit code is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "marginlab/harness.hpp"
#include "marginlab/rng.hpp"
#include "oracles.hpp"

using namespace marginlab;
namespace fs = std::filesystem;

namespace {

const fs::path kRunBase = "acceptance_runs";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Run into a scratch directory and drop the artifacts once the in-memory
// result is extracted (dense 1e5-step runs write ~25 MB of state each).
RunResult run_scratch(const ExperimentConfig& cfg, const std::string& label) {
  const fs::path dir = kRunBase / label;
  RunResult res = run_experiment(cfg, dir);
  std::error_code ec;
  fs::remove_all(dir, ec);
  return res;
}

ExperimentConfig soudry_cfg(int n_extra, LossFamily loss, long steps, long horizon, long stride) {
  ExperimentConfig cfg;
  cfg.dataset.generator = "soudry";
  cfg.dataset.seed = 0;
  cfg.dataset.n_extra = n_extra;
  cfg.loss = loss;
  cfg.run.steps = steps;
  cfg.run.diagnostic_horizon = horizon;
  cfg.run.record_every = stride;
  return cfg;
}

double angle_at(const DiagnosticsReport& rep, long t) {
  for (std::size_t i = 0; i < rep.t.size(); ++i) {
    if (rep.t[i] == t) return rep.angle[i];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double min_angle_in(const DiagnosticsReport& rep, long lo, long hi) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rep.t.size(); ++i) {
    if (rep.t[i] >= lo && rep.t[i] <= hi && std::isfinite(rep.angle[i])) {
      best = std::min(best, rep.angle[i]);
    }
  }
  return best;
}

// ---- criterion bodies ------------------------------------------------------

Outcome margin_oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(42);
  double worst_rel = 0.0, worst_kkt = 0.0, worst_dual = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + static_cast<int>(rng.next_below(5));  // n in [2, 6]
    // Plant a random separator: every point has margin >= 0.1 along a random
    // unit direction, so each instance is separable on a scale the 1e-4-rad
    // grid oracle can resolve (uniform clouds can be separable with margins
    // below the grid resolution, where no oracle comparison is meaningful).
    const double theta = 2.0 * std::numbers::pi * rng.next_double();
    const Eigen::Vector2d u(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d u_perp(-u.y(), u.x());
    Eigen::MatrixXd pts(2, n);
    for (int i = 0; i < n; ++i) {
      const double along = 0.1 + rng.next_double();         // [0.1, 1.1)
      const double across = 2.0 * rng.next_double() - 1.0;  // [-1, 1)
      pts.col(i) = along * u + across * u_perp;
    }
    const Dataset ds(pts, {"random", 0, {}});
    const MaxMarginSolution sol = solve_max_margin(ds);
    const double grid = oracle::grid_margin_2d(ds);
    worst_rel = std::max(worst_rel, std::abs(sol.gamma - grid) / grid);
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
    Eigen::VectorXd recon = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < ds.n(); ++i) recon += sol.dual_v(i) * ds.points().col(i);
    worst_dual = std::max(worst_dual, (recon - sol.w_hat).norm());
  }
  const double secs = elapsed_s(start);
  const bool pass = worst_rel <= 1e-3 && worst_kkt <= 1e-9 && worst_dual <= 1e-8 && secs < 10.0;
  return {pass, fmt("50 datasets, worst |dgamma|/gamma=%.2e, kkt=%.2e, dual recon=%.2e, %.2fs",
                    worst_rel, worst_kkt, worst_dual, secs)};
}

Outcome direction_convergence() {
  struct OptCase {
    const char* label;
    OptimizerKind kind;
    SamplerMode mode;
    double b1;
    int batch;
  };
  const std::vector<OptCase> cases = {
      {"gd", OptimizerKind::Gdm, SamplerMode::FullBatch, 0.0, 0},
      {"gdm", OptimizerKind::Gdm, SamplerMode::FullBatch, 0.9, 0},
      {"sgd", OptimizerKind::Sgdm, SamplerMode::WithoutReplacement, 0.0, 1},
      {"sgdm", OptimizerKind::Sgdm, SamplerMode::WithoutReplacement, 0.9, 1},
      {"adam", OptimizerKind::AdamDeterministic, SamplerMode::FullBatch, 0.9, 0},
      {"rmsprop", OptimizerKind::RmspropDecay, SamplerMode::WithoutReplacement, 0.0, 1},
  };
  bool pass = true;
  std::string detail;
  for (const OptCase& oc : cases) {
    ExperimentConfig cfg = soudry_cfg(10, LossFamily::Logistic, 100000, 100000, 10);
    cfg.optimizer.kind = oc.kind;
    cfg.optimizer.sampler = oc.mode;
    cfg.optimizer.hyper.eta = 0.1;
    cfg.optimizer.hyper.beta1 = oc.b1;
    cfg.optimizer.hyper.batch_size = oc.batch;
    cfg.optimizer.seed = 7;
    const auto start = std::chrono::steady_clock::now();
    const RunResult res = run_scratch(cfg, std::string("c2_") + oc.label);
    const double secs = elapsed_s(start);

    // Largest one-record increase of the angle series after step 1000.
    double jitter = 0.0;
    const DiagnosticsReport& rep = res.report;
    for (std::size_t i = 0; i + 1 < rep.t.size(); ++i) {
      if (rep.t[i] < 1000 || !std::isfinite(rep.angle[i]) || !std::isfinite(rep.angle[i + 1])) {
        continue;
      }
      jitter = std::max(jitter, rep.angle[i + 1] - rep.angle[i]);
    }
    const bool ok = res.final_angle < 0.05 && jitter <= 1e-3 && secs < 60.0;
    pass = pass && ok;
    detail += fmt("%s%s angle=%.2e jitter=%.1e %.1fs", detail.empty() ? "" : "; ", oc.label,
                  res.final_angle, jitter, secs);
  }
  return {pass, detail};
}

Outcome momentum_descent_inequality() {
  ExperimentConfig cfg = soudry_cfg(0, LossFamily::Exponential, 10000, 10000, 1);
  cfg.optimizer.kind = OptimizerKind::Gdm;
  cfg.optimizer.hyper.beta1 = 0.9;
  cfg.optimizer.lr_policy = LrPolicy::BoundFraction;
  cfg.optimizer.lr_fraction = 0.5;
  const RunResult res = run_scratch(cfg, "c3_gdm");
  const DescentCheck& d = res.report.descent;
  const bool pass = d.checked == 9999 && d.violations == 0;
  return {pass, fmt("eta=%.6g, checked=%ld, violations=%ld, worst slack=%.2e", res.resolved_eta,
                    d.checked, d.violations, d.worst_slack)};
}

Outcome adaptive_potential_inequality() {
  ExperimentConfig cfg = soudry_cfg(10, LossFamily::Logistic, 10000, 10000, 1);
  cfg.optimizer.kind = OptimizerKind::AdamDeterministic;
  cfg.optimizer.hyper.beta1 = 0.9;
  cfg.optimizer.hyper.beta2 = 0.999;
  cfg.optimizer.hyper.epsilon = 1e-8;
  cfg.optimizer.lr_policy = LrPolicy::BoundFraction;
  cfg.optimizer.lr_fraction = 0.5;
  const RunResult res = run_scratch(cfg, "c4_adam");
  const DescentCheck& d = res.report.descent;
  const bool pass = d.checked == 9999 && d.violations == 0;
  return {pass, fmt("eta=%.6g, checked=%ld, violations=%ld, worst slack=%.2e", res.resolved_eta,
                    d.checked, d.violations, d.worst_slack)};
}

Outcome stochastic_surrogate_descent() {
  const long T = 10000;
  std::vector<double> stats;
  double eta = 0.0, c2 = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExperimentConfig cfg = soudry_cfg(10, LossFamily::Logistic, T, T, 1);
    cfg.optimizer.kind = OptimizerKind::Sgdm;
    cfg.optimizer.sampler = SamplerMode::WithReplacement;
    cfg.optimizer.hyper.beta1 = 0.9;
    cfg.optimizer.hyper.batch_size = 1;
    cfg.optimizer.lr_policy = LrPolicy::BoundFraction;
    cfg.optimizer.lr_fraction = 0.5;
    cfg.optimizer.seed = seed;
    const RunResult res = run_scratch(cfg, fmt("c5_seed%llu", (unsigned long long)seed));
    eta = res.resolved_eta;
    // At eta = bound / 2 the guaranteed descent margin is exactly 1/2.
    c2 = 0.5;
    const DiagnosticsReport& rep = res.report;
    double grad_sq_sum = 0.0;
    for (std::size_t i = 0; i < rep.t.size(); ++i) {
      if (rep.t[i] < T) grad_sq_sum += rep.grad_norm[i] * rep.grad_norm[i];
    }
    stats.push_back(rep.L_u.front() - rep.L_u.back() - c2 * eta * grad_sq_sum);
  }
  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= static_cast<double>(stats.size());
  double var = 0.0;
  for (double s : stats) var += (s - mean) * (s - mean);
  var /= static_cast<double>(stats.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(stats.size()));
  const bool pass = mean >= -2.0 * se;
  return {pass, fmt("eta=%.6g, C2=%.2f, mean=%.4g, se=%.2g over 20 seeds", eta, c2, mean, se)};
}

Outcome rate_scaling() {
  const auto start = std::chrono::steady_clock::now();
  auto run_tl = [&](double eta, double beta, const char* label) {
    ExperimentConfig cfg = soudry_cfg(10, LossFamily::Logistic, 100000, 100, 10);
    cfg.optimizer.kind = OptimizerKind::Gdm;
    cfg.optimizer.hyper.eta = eta;
    cfg.optimizer.hyper.beta1 = beta;
    return run_scratch(cfg, label).report.rates.tL_plateau;
  };
  const double tl_b0 = run_tl(0.1, 0.0, "c6_b0");
  const double tl_b5 = run_tl(0.1, 0.5, "c6_b5");
  const double tl_b9 = run_tl(0.1, 0.9, "c6_b9");
  const double tl_half = run_tl(0.05, 0.9, "c6_half");
  const double secs = elapsed_s(start);

  const double eta_ratio = tl_half / tl_b9;
  double beta_lo = std::numeric_limits<double>::infinity(), beta_hi = 0.0;
  const double tls[] = {tl_b0, tl_b5, tl_b9};
  for (double a : tls) {
    for (double b : tls) {
      beta_lo = std::min(beta_lo, a / b);
      beta_hi = std::max(beta_hi, a / b);
    }
  }
  const bool pass = eta_ratio >= 1.8 && eta_ratio <= 2.2 && beta_lo >= 0.9 && beta_hi <= 1.1 &&
                    secs < 120.0;
  return {pass, fmt("tL(eta/2)/tL(eta)=%.3f, beta ratios in [%.3f, %.3f], %.1fs", eta_ratio,
                    beta_lo, beta_hi, secs)};
}

Outcome norm_growth() {
  ExperimentConfig cfg = soudry_cfg(0, LossFamily::Logistic, 100000, 100, 10);
  cfg.optimizer.kind = OptimizerKind::Gdm;
  cfg.optimizer.hyper.eta = 1.0;
  cfg.optimizer.hyper.beta1 = 0.9;
  const RunResult res = run_scratch(cfg, "c7_gdm");
  const double ratio = res.final_w.norm() / std::log(1e5);
  const double what_norm = std::sqrt(0.5);  // solution of the 2x2 support system
  const double solver_norm = solve_max_margin(make_soudry_dataset(0, 0)).w_hat.norm();
  const bool pass = ratio >= 0.9 * what_norm && ratio <= 1.1 * what_norm &&
                    std::abs(solver_norm - what_norm) <= 1e-6;
  return {pass, fmt("||w||/ln t=%.5f vs band [%.5f, %.5f], solver ||w_hat||=%.8f", ratio,
                    0.9 * what_norm, 1.1 * what_norm, solver_norm)};
}

Outcome residual_boundedness() {
  ExperimentConfig cfg = soudry_cfg(10, LossFamily::Logistic, 100000, 100000, 10);
  cfg.optimizer.kind = OptimizerKind::Gdm;
  cfg.optimizer.hyper.eta = 0.1;
  cfg.optimizer.hyper.beta1 = 0.9;
  const RunResult res = run_scratch(cfg, "c8_gdm");
  const DiagnosticsReport& rep = res.report;
  const bool pass = rep.residual_applicable && rep.g_applicable &&
                    rep.residual_window_ratio <= 1.2 && rep.g_window_growth <= 1.1;
  return {pass, fmt("residual window ratio=%.3f (<=1.2), g growth=%.3f (<=1.1), g inc err=%.1e",
                    rep.residual_window_ratio, rep.g_window_growth, rep.g_increment_max_err)};
}

Outcome second_moment_sandwich() {
  const Dataset ds = make_soudry_dataset(0, 2);  // 6 points
  const int b = 2;
  const auto batches = oracle::subsets(ds.n(), b);
  const MaxMarginSolution sol = solve_max_margin(ds);
  const double sigma = ds.sigma_max();
  const double cap = ds.n() * sigma * sigma / (sol.gamma * sol.gamma * b);
  SplitMix64 rng(7);
  long checked = 0, violations = 0;
  double worst_lower = std::numeric_limits<double>::infinity();
  double worst_upper = std::numeric_limits<double>::infinity();
  for (const LossSpec& spec : {LossSpec::logistic(), LossSpec::exponential()}) {
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd w(2);
      w << 6.0 * rng.next_double() - 3.0, 6.0 * rng.next_double() - 3.0;
      const double full_sq = empirical_grad(spec, ds, w).squaredNorm();
      double exp_batch_sq = 0.0;
      for (const std::vector<int>& batch : batches) {
        exp_batch_sq += batch_grad(spec, ds, batch, w).squaredNorm();
      }
      exp_batch_sq /= static_cast<double>(batches.size());
      ++checked;
      const double tol = 1e-10;
      const double lower_margin = exp_batch_sq - full_sq;
      const double upper_margin = cap * full_sq - exp_batch_sq;
      worst_lower = std::min(worst_lower, lower_margin);
      worst_upper = std::min(worst_upper, upper_margin);
      if (lower_margin < -tol * std::max(1.0, full_sq) ||
          upper_margin < -tol * std::max(1.0, cap * full_sq)) {
        ++violations;
      }
    }
  }
  const bool pass = violations == 0;
  return {pass, fmt("%ld w-points (both losses), violations=%ld, worst margins %.2e / %.2e, "
                    "cap=%.2f",
                    checked, violations, worst_lower, worst_upper, cap)};
}

Outcome reduction_lattice() {
  const Dataset ds = make_soudry_dataset(0, 2);
  const LossSpec lg = LossSpec::logistic();
  const double eta = 0.05, b2 = 0.999, eps = 1e-8;
  double worst = 0.0;

  {  // momentum at beta = 0 against a hand-rolled gradient step
    OptimizerState s = make_state(Eigen::VectorXd::Zero(2), {eta, 0.0, b2, eps, 0});
    Eigen::VectorXd w = Eigen::VectorXd::Zero(2);
    for (int k = 0; k < 100; ++k) {
      step_gdm(s, lg, ds);
      w -= eta * empirical_grad(lg, ds, w);
      worst = std::max(worst, (s.w - w).norm());
    }
  }
  {  // mini-batch momentum fed the full index set against full-batch momentum
    OptimizerState a = make_state(Eigen::VectorXd::Zero(2), {eta, 0.9, b2, eps, 0});
    OptimizerState b = a;
    std::vector<int> all(static_cast<std::size_t>(ds.n()));
    for (int i = 0; i < ds.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    for (int k = 0; k < 100; ++k) {
      step_sgdm(a, lg, ds, all);
      step_gdm(b, lg, ds);
      worst = std::max(worst, (a.w - b.w).norm());
    }
  }
  {  // adaptive momentum at beta1 = 0 against hand-rolled corrected second moment
    OptimizerState s = make_state(Eigen::VectorXd::Zero(2), {eta, 0.0, b2, eps, 0});
    Eigen::VectorXd w = Eigen::VectorXd::Zero(2), nu = Eigen::VectorXd::Zero(2);
    for (int k = 0; k < 100; ++k) {
      step_adam_deterministic(s, lg, ds);
      const Eigen::VectorXd g = empirical_grad(lg, ds, w);
      nu = b2 * nu + (1.0 - b2) * g.cwiseAbs2();
      const Eigen::VectorXd nu_hat = nu / (1.0 - std::pow(b2, static_cast<double>(k + 1)));
      w -= eta * (g.array() / (nu_hat.array() + eps).sqrt()).matrix();
      worst = std::max(worst, (s.w - w).norm());
    }
  }
  {  // adaptive heavy ball at beta1 = 0 against the decaying-rate step
    OptimizerState a = make_state(Eigen::VectorXd::Zero(2), {eta, 0.0, b2, eps, 2});
    OptimizerState b = a;
    BatchSampler sa(SamplerMode::WithoutReplacement, ds.n(), 2, 3);
    BatchSampler sb(SamplerMode::WithoutReplacement, ds.n(), 2, 3);
    for (int k = 0; k < 100; ++k) {
      step_sahb(a, lg, ds, sa.next());
      step_rmsprop_decay(b, lg, ds, sb.next());
      worst = std::max(worst, (a.w - b.w).norm());
    }
  }
  return {worst <= 1e-12, fmt("4 reductions x 100 steps, worst step deviation %.2e", worst)};
}

Outcome illposed_learning_rates() {
  auto illposed_cfg = [&](OptimizerKind kind, double eta) {
    ExperimentConfig cfg;
    cfg.dataset.generator = "illposed";
    cfg.dataset.seed = 0;
    cfg.dataset.scale = 10.0;
    cfg.loss = LossFamily::Logistic;
    cfg.run.steps = 100000;
    cfg.run.diagnostic_horizon = 100;
    cfg.run.record_every = 10;
    cfg.optimizer.kind = kind;
    cfg.optimizer.hyper.eta = eta;
    if (kind == OptimizerKind::AdamDeterministic) {
      cfg.optimizer.hyper.beta1 = 0.9;
      cfg.optimizer.hyper.beta2 = 0.999;
      cfg.optimizer.hyper.epsilon = 1e-8;
    }
    return cfg;
  };
  const DiagnosticsReport big =
      run_scratch(illposed_cfg(OptimizerKind::Gdm, 0.1), "c11_gd_big").report;
  const DiagnosticsReport small =
      run_scratch(illposed_cfg(OptimizerKind::Gdm, 1e-3), "c11_gd_small").report;
  const DiagnosticsReport adam =
      run_scratch(illposed_cfg(OptimizerKind::AdamDeterministic, 1e-3), "c11_adam_small").report;

  const double plateau = min_angle_in(big, 10000, 100000);
  const double gd_early = angle_at(small, 10000), gd_late = angle_at(small, 100000);
  const double ad_early = angle_at(adam, 10000), ad_late = angle_at(adam, 100000);
  const bool pass = plateau > 1e-3 && gd_late < gd_early && ad_late < ad_early;
  return {pass, fmt("large-rate plateau=%.4f (>1e-3); small-rate gd %.4f->%.4f, adam %.4f->%.4f",
                    plateau, gd_early, gd_late, ad_early, ad_late)};
}

}  // namespace

int main() {
  fs::create_directories(kRunBase);
  int failures = 0;
  const auto run_criterion = [&](int num, const char* name, const std::function<Outcome()>& fn) {
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s (%s)\n", out.pass ? "PASS" : "FAIL", num, name,
                out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  };

  run_criterion(1, "max-margin solver matches the direction-grid oracle", margin_oracle_equivalence);
  run_criterion(2, "all optimizers converge to the max-margin direction", direction_convergence);
  run_criterion(3, "momentum potential descends below half its rate bound", momentum_descent_inequality);
  run_criterion(4, "adaptive potential descends below half its rate bound", adaptive_potential_inequality);
  run_criterion(5, "stochastic surrogate descent is nonnegative in the mean", stochastic_surrogate_descent);
  run_criterion(6, "loss plateau scales inversely with the rate, not momentum", rate_scaling);
  run_criterion(7, "weight norm grows like ln t times the margin direction norm", norm_growth);
  run_criterion(8, "residual and bounded functional stay in their late windows", residual_boundedness);
  run_criterion(9, "batch second moment sits in the analytic sandwich", second_moment_sandwich);
  run_criterion(10, "degenerate parameter reductions coincide step for step", reduction_lattice);
  run_criterion(11, "ill-posed data needs a large rate for directional progress", illposed_learning_rates);

  std::error_code ec;
  fs::remove_all(kRunBase, ec);
  if (failures == 0) {
    std::printf("all 11 criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", failures);
  }
  return failures;
}
