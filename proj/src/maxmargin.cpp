#include "marginlab/maxmargin.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace marginlab {

namespace {

constexpr double kSupportSlackTol = 1e-6;
constexpr double kDualFloor = 1e-10;
// A dual coordinate exceeding this signals an unbounded dual: on separable
// data the optimal weights satisfy v_i <= ||w_hat|| * ... well below it.
constexpr double kDualCap = 1e12;

double kkt_residual_of(const Eigen::MatrixXd& pts, const Eigen::VectorXd& w,
                       const Eigen::VectorXd& alpha) {
  double primal = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double slack = w.dot(pts.col(i)) - 1.0;
    primal = std::max(primal, -slack);
    comp = std::max(comp, std::abs(alpha[i] * slack));
  }
  return std::max(primal, comp);
}

}  // namespace

MaxMarginSolution solve_max_margin(const Dataset& ds, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_max_margin: tol must be positive");
  // On non-separable data the dual is unbounded but the coordinate ascent
  // diverges too slowly for a cap to catch it reliably; certify first.
  if (!check_separable(ds).separable) {
    throw std::runtime_error(
        "solve_max_margin: input is not separable (zero lies in the convex hull; "
        "the dual is unbounded)");
  }
  const Eigen::MatrixXd& pts = ds.points();
  const int n = ds.n();

  // Dual: max_{a >= 0} sum a_i - 0.5 || sum a_i x_i ||^2. Exact cyclic
  // coordinate maximization; w tracks sum a_i x_i incrementally and is
  // refreshed from scratch each sweep to stop drift accumulation.
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(ds.d());
  Eigen::VectorXd norms2(n);
  for (int i = 0; i < n; ++i) norms2[i] = pts.col(i).squaredNorm();

  constexpr long kMaxSweeps = 1'000'000;
  MaxMarginSolution sol;
  sol.converged = false;
  double residual = std::numeric_limits<double>::infinity();
  long sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    for (int i = 0; i < n; ++i) {
      if (norms2[i] == 0.0) {
        // A zero folded point admits no positive margin; the dual direction
        // a_i is unbounded.
        throw std::runtime_error(
            "solve_max_margin: zero data point, input is not separable (dual unbounded)");
      }
      const double grad = 1.0 - w.dot(pts.col(i));
      const double next = std::max(0.0, alpha[i] + grad / norms2[i]);
      if (next != alpha[i]) {
        w += (next - alpha[i]) * pts.col(i);
        alpha[i] = next;
      }
      if (next > kDualCap) {
        throw std::runtime_error(
            "solve_max_margin: dual weights diverge, input is not separable (dual unbounded)");
      }
    }
    w = pts * alpha;  // refresh
    residual = kkt_residual_of(pts, w, alpha);
    if (residual <= tol) {
      sol.converged = true;
      ++sweep;
      break;
    }
  }

  sol.w_hat = w;
  sol.sweeps = sweep;
  sol.kkt_residual = residual;
  const double norm = w.norm();
  if (norm == 0.0) {
    throw std::runtime_error("solve_max_margin: degenerate zero solution (non-separable input)");
  }
  sol.gamma = 1.0 / norm;
  // Support membership by primal slack (ties included); dual weights keep
  // only entries that are both on the margin and materially positive, so
  // v_i > 0 implies support membership.
  sol.dual_v = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const double slack = w.dot(pts.col(i)) - 1.0;
    if (slack <= kSupportSlackTol) {
      sol.support.push_back(i);
      if (alpha[i] >= kDualFloor) sol.dual_v[i] = alpha[i];
    }
  }
  return sol;
}

std::vector<int> support_set(const MaxMarginSolution& sol, const Dataset& ds, double tol) {
  std::vector<int> out;
  for (int i = 0; i < ds.n(); ++i) {
    if (sol.w_hat.dot(ds.points().col(i)) <= 1.0 + tol) out.push_back(i);
  }
  return out;
}

double tilde_constant(OptimizerKind kind, double eta, double beta, int n, double epsilon) {
  if (!(eta > 0.0)) throw std::invalid_argument("tilde_constant: eta must be positive");
  if (n < 1) throw std::invalid_argument("tilde_constant: n must be >= 1");
  switch (kind) {
    case OptimizerKind::Gdm:
      return eta / n;
    case OptimizerKind::Sgdm:
      if (beta >= 1.0 || beta < 0.0) {
        throw std::invalid_argument("tilde_constant: beta must lie in [0, 1)");
      }
      return eta / ((1.0 - beta) * n);
    case OptimizerKind::AdamDeterministic:
      if (beta >= 1.0 || beta < 0.0) {
        throw std::invalid_argument("tilde_constant: beta must lie in [0, 1)");
      }
      if (!(epsilon > 0.0)) throw std::invalid_argument("tilde_constant: epsilon must be positive");
      return eta / ((1.0 - beta) * std::sqrt(epsilon));
    case OptimizerKind::RmspropDecay:
    case OptimizerKind::Sahb:
      throw std::invalid_argument("tilde_constant: no comparator shift for this optimizer kind");
  }
  throw std::logic_error("unknown optimizer kind");
}

TildeW solve_tilde_w(const MaxMarginSolution& sol, const Dataset& ds, double c3) {
  if (!(c3 > 0.0)) throw std::invalid_argument("solve_tilde_w: c3 must be positive");
  if (sol.support.empty()) throw std::invalid_argument("solve_tilde_w: empty support set");

  // Collapse bitwise-identical support points and sum their dual weights:
  // duplicates share one equation with the combined weight.
  std::vector<Eigen::VectorXd> distinct;
  std::vector<double> weights;
  for (int i : sol.support) {
    const Eigen::VectorXd& x = ds.points().col(i);
    bool merged = false;
    for (std::size_t j = 0; j < distinct.size(); ++j) {
      if (distinct[j].size() == x.size() && distinct[j] == x) {
        weights[j] += sol.dual_v[i];
        merged = true;
        break;
      }
    }
    if (!merged) {
      distinct.push_back(x);
      weights.push_back(sol.dual_v[i]);
    }
  }

  const auto k = static_cast<Eigen::Index>(distinct.size());
  Eigen::MatrixXd Z(k, ds.d());
  Eigen::VectorXd rhs(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(weights[j] > 0.0)) {
      throw std::invalid_argument("solve_tilde_w: support point with non-positive dual weight");
    }
    Z.row(j) = distinct[static_cast<std::size_t>(j)].transpose();
    rhs[j] = std::log(c3 / weights[j]);
  }

  TildeW out;
  out.c3 = c3;
  // Minimum-norm least squares.
  out.w_tilde = Z.completeOrthogonalDecomposition().solve(rhs);
  out.residual = (Z * out.w_tilde - rhs).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace marginlab
