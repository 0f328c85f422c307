#pragma once

// Exponential-tailed classification losses (exponential and logistic) with
// the tail/smoothness constants the optimizer theory consumes, plus empirical
// and mini-batch loss/gradient evaluation. All scalar functions are
// overflow-safe: finite input never yields Inf or NaN.

#include <Eigen/Core>
#include <vector>

#include "marginlab/dataset.hpp"

namespace marginlab {

enum class LossFamily { Exponential, Logistic };

// Constants of the exponential-tail envelope: for x beyond x_plus / x_minus,
//   (1 - exp(-mu_minus * x)) * exp(-x) <= -loss'(x) <= (1 + exp(-mu_plus * x)) * exp(-x).
struct TailConstants {
  double mu_plus = 1.0;
  double x_plus = 0.0;
  double mu_minus = 1.0;
  double x_minus = 0.0;
};

struct LossSpec {
  LossFamily family = LossFamily::Exponential;
  TailConstants tail;

  static LossSpec exponential();
  static LossSpec logistic();
};

double loss_value(const LossSpec& spec, double x);
double loss_derivative(const LossSpec& spec, double x);
// Inverse of the (strictly decreasing) loss; v must be positive and, for the
// logistic family, any positive value is accepted.
double loss_inverse(const LossSpec& spec, double v);

// Supremum of loss'' on [s0, infinity): exp(-s0) for the exponential family,
// min(1/4, loss''(s0)) for the logistic one.
double smoothness_at(const LossSpec& spec, double s0);
// Global smoothness constant; only the logistic family has one (1/4).
// Throws std::invalid_argument for the exponential family.
double global_smoothness(const LossSpec& spec);

// Smallest grid value (step 0.01, scanned upward from -10) from which the
// two-sided bracket -loss'(x)/4 <= loss(x) <= -4 loss'(x) holds for the rest
// of the grid. Exponential: holds everywhere (returns the grid start).
// Logistic: -3.9.
double bracket_threshold(const LossSpec& spec);

double empirical_loss(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w);
Eigen::VectorXd empirical_grad(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w);
double batch_loss(const LossSpec& spec, const Dataset& ds, const std::vector<int>& batch,
                  const Eigen::VectorXd& w);
Eigen::VectorXd batch_grad(const LossSpec& spec, const Dataset& ds, const std::vector<int>& batch,
                           const Eigen::VectorXd& w);

}  // namespace marginlab
