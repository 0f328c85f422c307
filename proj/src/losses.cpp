#include "marginlab/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace marginlab {

namespace {

constexpr double kLogisticGlobalSmoothness = 0.25;

double sigmoid(double x) {
  // 1 / (1 + e^{-x}) without overflow on either side.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double exp_capped(double x) {
  const double v = std::exp(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::max();
}

// The exponential-tail envelope the constants promise:
//   (1 - e^{-mu_minus x}) e^{-x} <= -loss'(x) <= (1 + e^{-mu_plus x}) e^{-x}
// for x beyond x_minus / x_plus. Checked on a coarse sample at construction
// so a bad constants edit fails immediately.
void verify_tail(const LossSpec& spec) {
  const double start = std::max(spec.tail.x_plus, spec.tail.x_minus);
  for (int k = 1; k <= 200; ++k) {
    const double x = start + 0.25 * k;
    const double neg_dl = -loss_derivative(spec, x);
    const double e = std::exp(-x);
    const double upper = (1.0 + std::exp(-spec.tail.mu_plus * x)) * e;
    const double lower = (1.0 - std::exp(-spec.tail.mu_minus * x)) * e;
    if (neg_dl > upper * (1.0 + 1e-12) || neg_dl < lower * (1.0 - 1e-12) - 1e-300) {
      throw std::logic_error("loss tail constants do not bracket the derivative");
    }
  }
}

}  // namespace

LossSpec LossSpec::exponential() {
  LossSpec spec{LossFamily::Exponential, TailConstants{1.0, 0.0, 1.0, 0.0}};
  verify_tail(spec);
  return spec;
}

LossSpec LossSpec::logistic() {
  LossSpec spec{LossFamily::Logistic, TailConstants{1.0, 1.0, 1.0, 0.0}};
  verify_tail(spec);
  return spec;
}

double loss_value(const LossSpec& spec, double x) {
  switch (spec.family) {
    case LossFamily::Exponential:
      return exp_capped(-x);
    case LossFamily::Logistic:
      // ln(1 + e^{-x}) = max(-x, 0) + log1p(e^{-|x|}) is exact on both tails.
      return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  throw std::logic_error("unknown loss family");
}

double loss_derivative(const LossSpec& spec, double x) {
  switch (spec.family) {
    case LossFamily::Exponential:
      return -exp_capped(-x);
    case LossFamily::Logistic:
      return -sigmoid(-x);
  }
  throw std::logic_error("unknown loss family");
}

double loss_inverse(const LossSpec& spec, double v) {
  if (!(v > 0.0)) throw std::invalid_argument("loss_inverse: value must be positive");
  switch (spec.family) {
    case LossFamily::Exponential:
      return -std::log(v);
    case LossFamily::Logistic:
      // Solve ln(1 + e^{-x}) = v: x = -ln(e^v - 1). For large v use
      // ln(e^v - 1) = v + log1p(-e^{-v}) to stay in range.
      if (v > 30.0) return -v - std::log1p(-std::exp(-v));
      return -std::log(std::expm1(v));
  }
  throw std::logic_error("unknown loss family");
}

double smoothness_at(const LossSpec& spec, double s0) {
  switch (spec.family) {
    case LossFamily::Exponential:
      return exp_capped(-s0);  // loss'' = e^{-x}, decreasing
    case LossFamily::Logistic: {
      // loss'' = sigma(x) sigma(-x): peak 1/4 at 0, decreasing away from it.
      if (s0 <= 0.0) return kLogisticGlobalSmoothness;
      return sigmoid(s0) * sigmoid(-s0);
    }
  }
  throw std::logic_error("unknown loss family");
}

double global_smoothness(const LossSpec& spec) {
  if (spec.family != LossFamily::Logistic) {
    throw std::invalid_argument(
        "global_smoothness: only the logistic loss is globally smooth; the exponential loss "
        "is smooth only on lower-bounded margins");
  }
  return kLogisticGlobalSmoothness;
}

double bracket_threshold(const LossSpec& spec) {
  // Scan x in [-10, 10] (step 0.01) and return the smallest grid point from
  // which -loss'(x)/4 <= loss(x) <= -4 loss'(x) holds for the rest of the
  // grid; both bounds keep holding beyond it because loss and -loss' decay at
  // the same exponential rate.
  constexpr double kLo = -10.0, kHi = 10.0, kStep = 0.01;
  const int count = static_cast<int>(std::lround((kHi - kLo) / kStep)) + 1;
  int first_ok = count;
  for (int k = count - 1; k >= 0; --k) {
    const double x = kLo + kStep * k;
    const double l = loss_value(spec, x);
    const double neg_dl = -loss_derivative(spec, x);
    const bool ok = (0.25 * neg_dl <= l) && (l <= 4.0 * neg_dl);
    if (!ok) break;
    first_ok = k;
  }
  if (first_ok >= count) throw std::logic_error("bracket_threshold: bracket never holds");
  return kLo + kStep * first_ok;
}

double empirical_loss(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (int i = 0; i < ds.n(); ++i) total += loss_value(spec, w.dot(ds.points().col(i)));
  return total / ds.n();
}

Eigen::VectorXd empirical_grad(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ds.d());
  for (int i = 0; i < ds.n(); ++i) {
    g += loss_derivative(spec, w.dot(ds.points().col(i))) * ds.points().col(i);
  }
  return g / ds.n();
}

double batch_loss(const LossSpec& spec, const Dataset& ds, const std::vector<int>& batch,
                  const Eigen::VectorXd& w) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  double total = 0.0;
  for (int i : batch) {
    if (i < 0 || i >= ds.n()) throw std::invalid_argument("batch_loss: index out of range");
    total += loss_value(spec, w.dot(ds.points().col(i)));
  }
  return total / static_cast<double>(batch.size());
}

Eigen::VectorXd batch_grad(const LossSpec& spec, const Dataset& ds, const std::vector<int>& batch,
                           const Eigen::VectorXd& w) {
  if (batch.empty()) throw std::invalid_argument("batch_grad: empty batch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ds.d());
  for (int i : batch) {
    if (i < 0 || i >= ds.n()) throw std::invalid_argument("batch_grad: index out of range");
    g += loss_derivative(spec, w.dot(ds.points().col(i))) * ds.points().col(i);
  }
  return g / static_cast<double>(batch.size());
}

}  // namespace marginlab
