#pragma once

// Per-step implicit-bias diagnostics over a recorded trajectory: descent
// potentials and their one-step inequalities, the momentum-corrected
// surrogate u(t), the shifted residual r(t) = w(t) - ln(t) w_hat - w_tilde,
// the bounded functional g(t) built on r, angle to the max-margin direction,
// and late-run rate estimates. Series cells that are undefined or not
// applicable for the recorded optimizer hold quiet NaN; file writers render
// those as empty cells.

#include <Eigen/Core>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/optimizers.hpp"

namespace marginlab {

// State at time t plus how the update that produced it was made. nu_used is
// the (bias-corrected where the optimizer bias-corrects) second-moment vector
// in the denominator of that update; batch is its mini-batch, empty for
// full-batch updates. At t = 1 both are empty and delta_w_norm is 0.
struct StepRecord {
  long t = 0;
  Eigen::VectorXd w;
  double loss = 0.0;
  double grad_norm = 0.0;      // full-gradient norm even for stochastic runs
  double delta_w_norm = 0.0;   // ||w(t) - w(t-1)||
  Eigen::VectorXd nu_used;
  std::vector<int> batch;
};

struct TrajectoryRecord {
  OptimizerKind kind = OptimizerKind::Gdm;
  SamplerMode sampler = SamplerMode::FullBatch;
  OptimizerHyper hyper;
  long total_steps = 0;
  long dense_horizon = 0;  // records are per-step up to this t
  long record_every = 1;   // stride past the horizon
  std::vector<StepRecord> steps;

  // Throws std::invalid_argument unless t starts at 1, strictly increases,
  // is dense up to min(dense_horizon, total_steps), and all numbers are
  // finite.
  void validate() const;
  // True when records at [first, last] cover every step (needed by the
  // cumulative diagnostics).
  bool dense_through(long t) const { return t <= dense_horizon; }
};

// xi(t) = L(w(t)) + beta / (2 eta (1 - beta)) * ||w(t) - w(t-1)||^2.
// beta = 0 reduces to the loss itself.
std::vector<double> xi_gdm(const TrajectoryRecord& traj);

// xi(t) = L(w(t)) + (1-beta1^{t-1}) / (2 eta (1-beta1)) *
//         || (eps + nu_used(t))^{1/4} . (w(t) - w(t-1)) ||^2  (dense region).
std::vector<double> xi_adam(const TrajectoryRecord& traj);

struct DescentCheck {
  long checked = 0;
  long violations = 0;
  double worst_slack = 0.0;  // most negative slack seen (0 if none checked)
  double coefficient = 0.0;  // C1 for the GDM check, c = beta2^{1/4}/beta1 for Adam
};

// One-step inequality xi(t) >= xi(t+1) + (1 - C1)/eta * ||w(t+1) - w(t)||^2
// with C1 = sigma_max^2 * H_{loss_inverse(N L(w(1)))} * eta / (2N); a step
// violates when slack < -1e-10 * max(1, |xi(t)|).
DescentCheck check_descent_gdm(const TrajectoryRecord& traj, const LossSpec& spec,
                               const Dataset& ds);

// Adam one-step inequality between consecutive weighted potentials,
//   L(w(t+1)) + (1-b1^t)/(2 eta (1-b1)) ||(eps+nu(t))^{1/4} . dw(t+1)||^2
//     <= L(w(t)) + (1-b1^{t-1})/(2 c eta (1-b1)) * (1-(c b1)^t)/(1-(c b1)^{t-1})
//        * ||(eps+nu(t-1))^{1/4} . dw(t)||^2,
// same violation rule. beta1 = 0 degenerates to plain descent (the weighted
// term on the right vanishes).
DescentCheck check_descent_adam(const TrajectoryRecord& traj, const LossSpec& spec,
                                const Dataset& ds);

struct USeries {
  std::vector<long> t;
  std::vector<Eigen::VectorXd> u;    // u(t) = (w(t) - beta w(t-1)) / (1 - beta)
  std::vector<double> loss_u;        // L(u(t))
  double identity_max_err = 0.0;     // worst || u(t+1)-u(t) + step term ||_inf
};

// Dense region only. The identity term is eta * grad_B(w(t)) for GDM/SGDM and
// eta_t * grad_B(w(t)) / sqrt(eps + nu(t)) for SAHB, with the batch gradient
// recomputed from the logged indices.
USeries u_series(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds);

struct ResidualSeries {
  std::vector<long> t;
  std::vector<double> r_norm;      // ||w(t) - ln(t) w_hat - w_tilde||
  std::vector<double> proj_drift;  // <w(t), w_hat>/||w_hat||^2 - ln t
  // max r_norm over [T/2, T] divided by max over [T/10, T/5] (T = last t);
  // NaN when the run is too short for both windows.
  double window_ratio = 0.0;
};

ResidualSeries residual_series(const TrajectoryRecord& traj, const MaxMarginSolution& sol,
                               const TildeW& tilde);

struct GSeries {
  std::vector<long> t;
  std::vector<double> g;
  std::vector<double> a2;  // ||r(t+1) - r(t)||^2 (last entry NaN)
  std::vector<double> a3;  // <r(t), -ln((t+1)/t) w_hat - eta grad L(w(t))> (GDM form)
  // max g over [T/10, T] divided by max over [T/100, T/10]; NaN when short.
  double window_growth = 0.0;
  // Worst gap between g accumulated from its definition and g accumulated
  // from the one-step increment identity (which substitutes the update rule).
  double increment_max_err = 0.0;
};

// Requires records dense through the final step (throws otherwise): the
// functional carries a cumulative sum that has no sparse form.
GSeries g_series_gdm(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds,
                     const MaxMarginSolution& sol, const TildeW& tilde);
GSeries g_series_adam(const TrajectoryRecord& traj, const LossSpec& spec, const Dataset& ds,
                      const MaxMarginSolution& sol, const TildeW& tilde);

// arccos of the clamped cosine between w and w_hat; throws
// std::invalid_argument on a zero vector.
double angle_gap(const Eigen::VectorXd& w, const MaxMarginSolution& sol);

struct RateEstimates {
  double tL_plateau = 0.0;           // median of t * L(w(t)) over the last decade
  double wnorm_over_lnt_tail = 0.0;  // median of ||w(t)|| / ln t over the last decade
};

// Requires total_steps >= 1000.
RateEstimates rate_estimates(const TrajectoryRecord& traj);

// Everything above, assembled with per-optimizer applicability; inapplicable
// series are all-NaN. Margin artifacts are computed internally.
struct DiagnosticsReport {
  std::vector<long> t;
  std::vector<double> loss, grad_norm, delta_w_norm, xi, g, L_u, r_norm, angle, tL;
  DescentCheck descent;          // populated for Gdm / AdamDeterministic
  bool descent_applicable = false;
  double u_identity_max_err = 0.0;
  bool u_applicable = false;
  double residual_window_ratio = 0.0;
  bool residual_applicable = false;
  double g_window_growth = 0.0;
  double g_increment_max_err = 0.0;
  bool g_applicable = false;
  RateEstimates rates;
  bool rates_applicable = false;
  // Late-step sanity: counts of recorded steps (loss below the small-loss
  // threshold) where gamma/4 * L <= ||grad L|| <= 4 L fails.
  long gradient_loss_sandwich_checked = 0;
  long gradient_loss_sandwich_violations = 0;
  std::string note;  // e.g. wider residual band for stochastic momentum runs
};

DiagnosticsReport build_report(const TrajectoryRecord& traj, const LossSpec& spec,
                               const Dataset& ds);

}  // namespace marginlab
