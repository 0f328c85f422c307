#include "marginlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace marginlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Max of |f| over records with t in [lo, hi].
double window_max(const std::vector<long>& t, const std::vector<double>& f, long lo, long hi) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= lo && t[i] <= hi && std::isfinite(f[i])) {
      best = std::max(best, f[i]);
      any = true;
    }
  }
  return any ? best : kNaN;
}

long dense_count(const TrajectoryRecord& traj) {
  // Number of leading records that are consecutive in t.
  long count = 1;
  for (std::size_t i = 1; i < traj.steps.size(); ++i) {
    if (traj.steps[i].t != traj.steps[i - 1].t + 1) break;
    ++count;
  }
  return count;
}

}  // namespace

void TrajectoryRecord::validate() const {
  if (steps.empty()) throw std::invalid_argument("trajectory: no records");
  if (steps.front().t != 1) throw std::invalid_argument("trajectory: must start at t = 1");
  long prev = 0;
  for (const StepRecord& rec : steps) {
    if (rec.t <= prev) throw std::invalid_argument("trajectory: t must strictly increase");
    if (prev > 0 && prev < std::min(dense_horizon, total_steps) && rec.t != prev + 1) {
      throw std::invalid_argument("trajectory: records must be dense up to the horizon");
    }
    if (!rec.w.allFinite() || !std::isfinite(rec.loss) || !std::isfinite(rec.grad_norm) ||
        !std::isfinite(rec.delta_w_norm)) {
      throw std::invalid_argument("trajectory: non-finite record at t = " + std::to_string(rec.t));
    }
    prev = rec.t;
  }
}

std::vector<double> xi_gdm(const TrajectoryRecord& traj) {
  const double eta = traj.hyper.eta, beta = traj.hyper.beta1;
  const double coef = beta / (2.0 * eta * (1.0 - beta));
  std::vector<double> xi;
  xi.reserve(traj.steps.size());
  for (const StepRecord& rec : traj.steps) {
    xi.push_back(rec.loss + coef * rec.delta_w_norm * rec.delta_w_norm);
  }
  return xi;
}

std::vector<double> xi_adam(const TrajectoryRecord& traj) {
  const double eta = traj.hyper.eta, b1 = traj.hyper.beta1, eps = traj.hyper.epsilon;
  const long dense = dense_count(traj);
  std::vector<double> xi(traj.steps.size(), kNaN);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const StepRecord& rec = traj.steps[i];
    if (rec.t == 1) {
      xi[i] = rec.loss;  // momentum term vanishes: weight 1 - beta1^0 = 0
      continue;
    }
    if (static_cast<long>(i) >= dense) break;  // needs the previous iterate
    if (rec.nu_used.size() == 0) {
      throw std::invalid_argument("xi_adam: missing second-moment snapshot at t = " +
                                  std::to_string(rec.t));
    }
    const Eigen::VectorXd dw = rec.w - traj.steps[i - 1].w;
    const Eigen::ArrayXd quarter = (rec.nu_used.array() + eps).sqrt().sqrt();
    const double weighted = (quarter * dw.array()).matrix().squaredNorm();
    const double coef =
        (1.0 - std::pow(b1, static_cast<double>(rec.t - 1))) / (2.0 * eta * (1.0 - b1));
    xi[i] = rec.loss + coef * weighted;
  }
  return xi;
}

DescentCheck check_descent_gdm(const TrajectoryRecord& traj, const LossSpec& spec,
                               const Dataset& ds) {
  if (traj.kind != OptimizerKind::Gdm) {
    throw std::invalid_argument("check_descent_gdm: trajectory is not full-batch momentum");
  }
  const double eta = traj.hyper.eta;
  const double n = ds.n();
  const double sigma = ds.sigma_max();
  const double l1 = traj.steps.front().loss;
  const double h = smoothness_at(spec, loss_inverse(spec, n * l1));
  const double c1 = sigma * sigma * h * eta / (2.0 * n);

  const std::vector<double> xi = xi_gdm(traj);
  DescentCheck check;
  check.coefficient = c1;
  const long dense = dense_count(traj);
  for (long i = 0; i + 1 < dense; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double dw = traj.steps[ui + 1].delta_w_norm;
    const double slack = xi[ui] - xi[ui + 1] - (1.0 - c1) / eta * dw * dw;
    ++check.checked;
    if (slack < -1e-10 * std::max(1.0, std::abs(xi[ui]))) ++check.violations;
    check.worst_slack = std::min(check.worst_slack, slack);
  }
  return check;
}

DescentCheck check_descent_adam(const TrajectoryRecord& traj, const LossSpec& spec,
                                const Dataset& ds) {
  (void)spec;
  (void)ds;
  if (traj.kind != OptimizerKind::AdamDeterministic) {
    throw std::invalid_argument("check_descent_adam: trajectory is not deterministic Adam");
  }
  const double eta = traj.hyper.eta, b1 = traj.hyper.beta1, b2 = traj.hyper.beta2,
               eps = traj.hyper.epsilon;
  const double cb1 = std::pow(b2, 0.25);
  DescentCheck check;
  check.coefficient = b1 > 0.0 ? cb1 / b1 : std::numeric_limits<double>::infinity();

  const long dense = dense_count(traj);
  auto weighted_sq = [&](std::size_t i) {
    // || (eps + nu_used(t))^{1/4} . (w(t) - w(t-1)) ||^2 at record i.
    const StepRecord& rec = traj.steps[i];
    if (rec.nu_used.size() == 0) {
      throw std::invalid_argument("check_descent_adam: missing second-moment snapshot at t = " +
                                  std::to_string(rec.t));
    }
    const Eigen::VectorXd dw = rec.w - traj.steps[i - 1].w;
    const Eigen::ArrayXd quarter = (rec.nu_used.array() + eps).sqrt().sqrt();
    return (quarter * dw.array()).matrix().squaredNorm();
  };

  for (long i = 0; i + 1 < dense; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const long t = traj.steps[ui].t;
    const double td = static_cast<double>(t);
    const double lhs = traj.steps[ui + 1].loss +
                       (1.0 - std::pow(b1, td)) / (2.0 * eta * (1.0 - b1)) * weighted_sq(ui + 1);
    double rhs = traj.steps[ui].loss;
    if (t >= 2 && b1 > 0.0) {
      const double coef = (1.0 - std::pow(b1, td - 1.0)) /
                          (2.0 * check.coefficient * eta * (1.0 - b1)) *
                          (1.0 - std::pow(cb1, td)) / (1.0 - std::pow(cb1, td - 1.0));
      rhs += coef * weighted_sq(ui);
    }
    const double slack = rhs - lhs;
    ++check.checked;
    if (slack < -1e-10 * std::max(1.0, std::abs(rhs))) ++check.violations;
    check.worst_slack = std::min(check.worst_slack, slack);
  }
  return check;
}

USeries u_series(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds) {
  const OptimizerKind kind = traj.kind;
  if (kind != OptimizerKind::Gdm && kind != OptimizerKind::Sgdm && kind != OptimizerKind::Sahb) {
    throw std::invalid_argument("u_series: surrogate defined for momentum kinds only");
  }
  const double beta = traj.hyper.beta1;
  const long dense = dense_count(traj);
  USeries out;
  out.t.reserve(static_cast<std::size_t>(dense));
  for (long i = 0; i < dense; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const StepRecord& rec = traj.steps[ui];
    Eigen::VectorXd u = rec.t == 1
                            ? rec.w
                            : ((rec.w - beta * traj.steps[ui - 1].w) / (1.0 - beta)).eval();
    out.t.push_back(rec.t);
    out.loss_u.push_back(empirical_loss(spec, ds, u));
    out.u.push_back(std::move(u));
  }
  // Identity u(t+1) - u(t) = -(step size) * (preconditioned) batch gradient,
  // with the gradient recomputed from the logged batch.
  for (std::size_t i = 0; i + 1 < out.u.size(); ++i) {
    const StepRecord& next = traj.steps[i + 1];
    const std::vector<int>& batch = next.batch;
    Eigen::VectorXd g;
    if (kind == OptimizerKind::Gdm || batch.empty()) {
      g = empirical_grad(spec, ds, traj.steps[i].w);
    } else {
      g = batch_grad(spec, ds, batch, traj.steps[i].w);
    }
    Eigen::VectorXd expected;
    if (kind == OptimizerKind::Sahb) {
      if (next.nu_used.size() == 0) {
        throw std::invalid_argument("u_series: missing second-moment snapshot at t = " +
                                    std::to_string(next.t));
      }
      const double eta_t = traj.hyper.eta / std::sqrt(static_cast<double>(traj.steps[i].t));
      expected = -eta_t * (g.array() / (next.nu_used.array() + traj.hyper.epsilon).sqrt()).matrix();
    } else {
      expected = -traj.hyper.eta * g;
    }
    const double err = ((out.u[i + 1] - out.u[i]) - expected).cwiseAbs().maxCoeff();
    out.identity_max_err = std::max(out.identity_max_err, err);
  }
  return out;
}

ResidualSeries residual_series(const TrajectoryRecord& traj, const MaxMarginSolution& sol,
                               const TildeW& tilde) {
  ResidualSeries out;
  const double what_sq = sol.w_hat.squaredNorm();
  for (const StepRecord& rec : traj.steps) {
    const double lnt = std::log(static_cast<double>(rec.t));
    out.t.push_back(rec.t);
    out.r_norm.push_back((rec.w - lnt * sol.w_hat - tilde.w_tilde).norm());
    out.proj_drift.push_back(rec.w.dot(sol.w_hat) / what_sq - lnt);
  }
  const long T = out.t.back();
  if (T >= 100) {
    const double late = window_max(out.t, out.r_norm, T / 2, T);
    const double early = window_max(out.t, out.r_norm, T / 10, T / 5);
    out.window_ratio = (std::isfinite(early) && early > 0.0) ? late / early : kNaN;
  } else {
    out.window_ratio = kNaN;
  }
  return out;
}

namespace {

GSeries g_series_impl(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds,
                      const MaxMarginSolution& sol, const TildeW& tilde, bool adam) {
  traj.validate();
  if (traj.steps.back().t != traj.total_steps ||
      dense_count(traj) != static_cast<long>(traj.steps.size())) {
    throw std::invalid_argument(
        "g series needs records at every step (its cumulative term has no sparse form)");
  }
  const double eta = traj.hyper.eta, b1 = traj.hyper.beta1, eps = traj.hyper.epsilon;
  const double kappa = b1 / (1.0 - b1);
  const double sqrt_eps = std::sqrt(eps);

  GSeries out;
  const std::size_t count = traj.steps.size();
  out.t.resize(count);
  out.g.resize(count);
  out.a2.assign(count, kNaN);
  out.a3.assign(count, kNaN);

  // X(t) = (1 - b1^{t-1}) sqrt(eps + nu_used(t)) . (w(t) - w(t-1)) for the
  // adaptive form; plain dw(t) for the momentum form.
  auto x_vec = [&](std::size_t i) -> Eigen::VectorXd {
    const StepRecord& rec = traj.steps[i];
    if (rec.t == 1) return Eigen::VectorXd::Zero(rec.w.size());
    const Eigen::VectorXd dw = rec.w - traj.steps[i - 1].w;
    if (!adam) return dw;
    if (rec.nu_used.size() == 0) {
      throw std::invalid_argument("g series: missing second-moment snapshot at t = " +
                                  std::to_string(rec.t));
    }
    const double weight = 1.0 - std::pow(b1, static_cast<double>(rec.t - 1));
    return weight * ((rec.nu_used.array() + eps).sqrt() * dw.array()).matrix();
  };

  auto r_vec = [&](std::size_t i) {
    return (traj.steps[i].w - std::log(static_cast<double>(traj.steps[i].t)) * sol.w_hat -
            tilde.w_tilde)
        .eval();
  };

  double cumulative = 0.0;  // sum_{tau=2}^t <r(tau) - r(tau-1), X(tau)>
  Eigen::VectorXd r_prev = r_vec(0);
  const double half_weight = adam ? 0.5 * sqrt_eps : 0.5;
  double g_def = half_weight * r_prev.squaredNorm();  // kappa terms vanish at t = 1
  double g_inc = g_def;
  out.t[0] = traj.steps[0].t;
  out.g[0] = g_def;

  for (std::size_t i = 1; i < count; ++i) {
    const Eigen::VectorXd r_cur = r_vec(i);
    const Eigen::VectorXd x_cur = x_vec(i);
    const Eigen::VectorXd dr = r_cur - r_prev;
    cumulative += dr.dot(x_cur);
    g_def = half_weight * r_cur.squaredNorm() + kappa * r_cur.dot(x_cur) - kappa * cumulative;

    // Increment route: substitutes the update rule, so agreement with the
    // definition validates the recorded dynamics, not just the algebra.
    const long t_prev = traj.steps[i - 1].t;
    const double log_ratio =
        std::log(static_cast<double>(t_prev + 1) / static_cast<double>(t_prev));
    const Eigen::VectorXd grad = empirical_grad(spec, ds, traj.steps[i - 1].w);
    double inc;
    if (!adam) {
      const double a2 = dr.squaredNorm();
      const double a3 = r_prev.dot(-eta * grad - log_ratio * sol.w_hat);
      out.a2[i - 1] = a2;
      out.a3[i - 1] = a3;
      inc = 0.5 * a2 + a3;
    } else {
      const double a2 = dr.squaredNorm();
      double coupling;
      if (b1 > 0.0) {
        coupling = r_prev.dot(-x_cur - eta * grad);
      } else {
        coupling = 0.0;  // kappa = 0: the X terms drop from g entirely
      }
      const double a3 = sqrt_eps * dr.dot(r_prev) + coupling;
      out.a2[i - 1] = a2;
      out.a3[i - 1] = a3;
      inc = 0.5 * sqrt_eps * a2 + a3;
    }
    g_inc += inc;
    out.increment_max_err =
        std::max(out.increment_max_err,
                 std::abs(g_def - g_inc) / std::max({1.0, std::abs(g_def), std::abs(g_inc)}));

    out.t[i] = traj.steps[i].t;
    out.g[i] = g_def;
    r_prev = r_cur;
  }

  const long T = out.t.back();
  if (T >= 1000) {
    const double late = window_max(out.t, out.g, T / 10, T);
    const double early = window_max(out.t, out.g, T / 100, T / 10);
    out.window_growth = (std::isfinite(early) && early > 0.0) ? late / early : kNaN;
  } else {
    out.window_growth = kNaN;
  }
  return out;
}

}  // namespace

GSeries g_series_gdm(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds,
                     const MaxMarginSolution& sol, const TildeW& tilde) {
  if (traj.kind != OptimizerKind::Gdm) {
    throw std::invalid_argument("g_series_gdm: trajectory is not full-batch momentum");
  }
  return g_series_impl(traj, spec, ds, sol, tilde, /*adam=*/false);
}

GSeries g_series_adam(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds,
                      const MaxMarginSolution& sol, const TildeW& tilde) {
  if (traj.kind != OptimizerKind::AdamDeterministic) {
    throw std::invalid_argument("g_series_adam: trajectory is not deterministic Adam");
  }
  return g_series_impl(traj, spec, ds, sol, tilde, /*adam=*/true);
}

double angle_gap(const Eigen::VectorXd& w, const MaxMarginSolution& sol) {
  const double wn = w.norm();
  if (wn == 0.0) throw std::invalid_argument("angle_gap: zero vector has no direction");
  const double cosine = w.dot(sol.w_hat) / (wn * sol.w_hat.norm());
  return std::acos(std::clamp(cosine, -1.0, 1.0));
}

RateEstimates rate_estimates(const TrajectoryRecord& traj) {
  if (traj.total_steps < 1000) {
    throw std::invalid_argument("rate_estimates: need at least 1000 steps");
  }
  const long T = traj.steps.back().t;
  std::vector<double> tl, wnorm;
  for (const StepRecord& rec : traj.steps) {
    if (rec.t < T / 10 || rec.t < 2) continue;
    tl.push_back(static_cast<double>(rec.t) * rec.loss);
    wnorm.push_back(rec.w.norm() / std::log(static_cast<double>(rec.t)));
  }
  return RateEstimates{median_of(std::move(tl)), median_of(std::move(wnorm))};
}

DiagnosticsReport build_report(const TrajectoryRecord& traj, const LossSpec& spec,
                               const Dataset& ds) {
  traj.validate();
  const OptimizerKind kind = traj.kind;
  const std::size_t count = traj.steps.size();

  DiagnosticsReport rep;
  rep.t.reserve(count);
  auto fill = [&](std::vector<double>& v) { v.assign(count, kNaN); };
  fill(rep.loss);
  fill(rep.grad_norm);
  fill(rep.delta_w_norm);
  fill(rep.xi);
  fill(rep.g);
  fill(rep.L_u);
  fill(rep.r_norm);
  fill(rep.angle);
  fill(rep.tL);

  MaxMarginSolution sol = solve_max_margin(ds);

  for (std::size_t i = 0; i < count; ++i) {
    const StepRecord& rec = traj.steps[i];
    rep.t.push_back(rec.t);
    rep.loss[i] = rec.loss;
    rep.grad_norm[i] = rec.grad_norm;
    rep.delta_w_norm[i] = rec.delta_w_norm;
    rep.tL[i] = static_cast<double>(rec.t) * rec.loss;
    if (rec.w.norm() > 0.0) rep.angle[i] = angle_gap(rec.w, sol);
  }

  if (kind == OptimizerKind::Gdm) {
    rep.xi = xi_gdm(traj);
    rep.descent = check_descent_gdm(traj, spec, ds);
    rep.descent_applicable = true;
  } else if (kind == OptimizerKind::AdamDeterministic) {
    rep.xi = xi_adam(traj);
    rep.descent = check_descent_adam(traj, spec, ds);
    rep.descent_applicable = true;
  }

  if (kind == OptimizerKind::Gdm || kind == OptimizerKind::Sgdm || kind == OptimizerKind::Sahb) {
    const USeries us = u_series(traj, spec, ds);
    for (std::size_t i = 0; i < us.t.size(); ++i) rep.L_u[i] = us.loss_u[i];
    rep.u_identity_max_err = us.identity_max_err;
    rep.u_applicable = true;
  }

  const bool has_tilde = kind == OptimizerKind::Gdm || kind == OptimizerKind::Sgdm ||
                         kind == OptimizerKind::AdamDeterministic;
  if (has_tilde) {
    const double c3 = tilde_constant(kind, traj.hyper.eta, traj.hyper.beta1, ds.n(),
                                     traj.hyper.epsilon);
    const TildeW tilde = solve_tilde_w(sol, ds, c3);
    const ResidualSeries rs = residual_series(traj, sol, tilde);
    for (std::size_t i = 0; i < rs.t.size(); ++i) rep.r_norm[i] = rs.r_norm[i];
    rep.residual_window_ratio = rs.window_ratio;
    rep.residual_applicable = true;
    if (kind == OptimizerKind::Sgdm && traj.sampler != SamplerMode::FullBatch) {
      rep.note =
          "stochastic momentum residual omits the sampling-drift correction; expect a wider "
          "(still bounded) band";
    }

    const bool dense_to_end = traj.dense_horizon >= traj.total_steps &&
                              dense_count(traj) == static_cast<long>(count);
    if (dense_to_end &&
        (kind == OptimizerKind::Gdm || kind == OptimizerKind::AdamDeterministic) &&
        traj.sampler == SamplerMode::FullBatch) {
      const GSeries gs = kind == OptimizerKind::Gdm
                             ? g_series_gdm(traj, spec, ds, sol, tilde)
                             : g_series_adam(traj, spec, ds, sol, tilde);
      rep.g = gs.g;
      rep.g_window_growth = gs.window_growth;
      rep.g_increment_max_err = gs.increment_max_err;
      rep.g_applicable = true;
    }
  }

  if (traj.total_steps >= 1000) {
    rep.rates = rate_estimates(traj);
    rep.rates_applicable = true;
  }

  // Late-step two-sided bound between loss and gradient norm. Only checked
  // where the loss is small enough that every margin sits in the bracket
  // region (individual losses below loss(bracket threshold)).
  const double c_l = loss_value(spec, std::max(bracket_threshold(spec), 0.0)) / ds.n();
  const double gamma = sol.gamma;
  for (std::size_t i = 0; i < count; ++i) {
    const double l = rep.loss[i];
    if (!(l > 0.0) || l > c_l) continue;
    ++rep.gradient_loss_sandwich_checked;
    const double gn = rep.grad_norm[i];
    if (gn < gamma / 4.0 * l * (1.0 - 1e-9) || gn > 4.0 * l * (1.0 + 1e-9)) {
      ++rep.gradient_loss_sandwich_violations;
    }
  }
  return rep;
}

}  // namespace marginlab
