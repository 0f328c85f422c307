#pragma once

// L2 max-margin solver for folded separable data, the dual representation
// w_hat = sum_i v_i x_i, and the shifted comparator w_tilde that the late
// trajectory w(t) ~ ln(t) w_hat + w_tilde drifts toward. w_hat is normalized
// so that support points satisfy <w_hat, x_i> = 1, hence gamma = 1/||w_hat||.

#include <Eigen/Core>
#include <vector>

#include "marginlab/dataset.hpp"

namespace marginlab {

struct MaxMarginSolution {
  Eigen::VectorXd w_hat;
  double gamma = 0.0;          // 1 / ||w_hat||
  std::vector<int> support;    // indices with <w_hat, x_i> <= 1 + 1e-6
  Eigen::VectorXd dual_v;      // v_i >= 0, zero off support, w_hat = sum v_i x_i
  double kkt_residual = 0.0;   // max of primal violation and complementarity
  bool converged = true;
  long sweeps = 0;
};

// Dual coordinate ascent on max_a sum a_i - 0.5 || sum a_i x_i ||^2 subject
// to a >= 0, cyclic exact coordinate maximization, at most 1e6 sweeps.
// Throws std::runtime_error when the dual is detected to be unbounded
// (non-separable input). On sweep-cap exhaustion returns the best iterate
// with converged = false.
MaxMarginSolution solve_max_margin(const Dataset& ds, double tol = 1e-9);

// Indices with primal slack <w_hat, x_i> - 1 <= tol (ties toward inclusion).
std::vector<int> support_set(const MaxMarginSolution& sol, const Dataset& ds, double tol = 1e-6);

enum class OptimizerKind { Gdm, Sgdm, AdamDeterministic, RmspropDecay, Sahb };

// Constant c3 relating the dual weights to the shifted comparator via
// c3 * exp(-<x_i, w_tilde>) = v_i on support points:
//   Gdm  -> eta / n,   Sgdm -> eta / ((1 - beta) n),
//   Adam -> eta / ((1 - beta1) sqrt(epsilon)).
// beta is ignored for Gdm; epsilon only read for Adam. Throws
// std::invalid_argument for beta = 1, epsilon <= 0, or kinds without a
// comparator shift (RmspropDecay, Sahb).
double tilde_constant(OptimizerKind kind, double eta, double beta, int n, double epsilon);

struct TildeW {
  Eigen::VectorXd w_tilde;
  double c3 = 0.0;
  double residual = 0.0;  // max_j |<z_j, w_tilde> - ln(c3 / v_j)| over distinct support
};

// Minimum-norm least-squares solve of <x_i, w_tilde> = ln(c3 / v_i) over the
// distinct support points (bitwise-identical duplicates collapse, dual
// weights summed). Throws std::invalid_argument for c3 <= 0 or empty support.
TildeW solve_tilde_w(const MaxMarginSolution& sol, const Dataset& ds, double c3);

}  // namespace marginlab
