#include "marginlab/optimizers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace marginlab {

namespace {

void check_momentum(double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument("momentum parameter must lie in [0, 1)");
  }
}

void check_adaptive(const OptimizerHyper& h) {
  check_momentum(h.beta1);
  if (!(h.beta2 < 1.0 && h.beta2 > h.beta1 * h.beta1 * h.beta1 * h.beta1)) {
    throw std::invalid_argument("requires 1 > beta2 > beta1^4");
  }
  if (!(h.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

void advance(OptimizerState& s, const Eigen::VectorXd& w_next) {
  s.prev_w = s.w;
  s.w = w_next;
  ++s.t;
}

}  // namespace

OptimizerState make_state(const Eigen::VectorXd& w1, const OptimizerHyper& hyper) {
  OptimizerState s;
  s.w = w1;
  s.prev_w = w1;
  s.m = Eigen::VectorXd::Zero(w1.size());
  s.nu = Eigen::VectorXd::Zero(w1.size());
  s.t = 1;
  s.hyper = hyper;
  return s;
}

BatchSampler::BatchSampler(SamplerMode mode, int n, int batch_size, std::uint64_t seed)
    : mode_(mode), n_(n), batch_size_(batch_size), rng_(SplitMix64(seed).split(2)) {
  if (n < 1) throw std::invalid_argument("sampler: n must be >= 1");
  if (mode == SamplerMode::FullBatch) {
    batch_size_ = n;
  } else {
    if (batch_size < 1 || batch_size > n) {
      throw std::invalid_argument("sampler: batch size must lie in [1, n]");
    }
    if (mode == SamplerMode::WithoutReplacement && n % batch_size != 0) {
      throw std::invalid_argument(
          "sampler: without-replacement epochs need batch size dividing n");
    }
  }
  perm_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;
  pos_ = n;  // trigger a shuffle on first use
  batch_.reserve(static_cast<std::size_t>(batch_size_));
}

const std::vector<int>& BatchSampler::next() {
  batch_.clear();
  switch (mode_) {
    case SamplerMode::FullBatch:
      for (int i = 0; i < n_; ++i) batch_.push_back(i);
      break;
    case SamplerMode::WithReplacement:
      // batch_size distinct indices per step (partial Fisher-Yates),
      // independent across steps.
      for (int i = 0; i < n_; ++i) perm_[static_cast<std::size_t>(i)] = i;
      for (int k = 0; k < batch_size_; ++k) {
        const auto j = k + static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(n_ - k)));
        std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(j)]);
        batch_.push_back(perm_[static_cast<std::size_t>(k)]);
      }
      break;
    case SamplerMode::WithoutReplacement:
      if (pos_ >= n_) {
        for (int k = 0; k < n_ - 1; ++k) {
          const auto j = k + static_cast<int>(rng_.next_below(static_cast<std::uint64_t>(n_ - k)));
          std::swap(perm_[static_cast<std::size_t>(k)], perm_[static_cast<std::size_t>(j)]);
        }
        pos_ = 0;
      }
      for (int k = 0; k < batch_size_; ++k) batch_.push_back(perm_[static_cast<std::size_t>(pos_++)]);
      break;
  }
  return batch_;
}

void step_gdm(OptimizerState& s, const LossSpec& spec, const Dataset& ds) {
  check_momentum(s.hyper.beta1);
  const Eigen::VectorXd g = empirical_grad(spec, ds, s.w);
  s.m = s.hyper.beta1 * s.m + (1.0 - s.hyper.beta1) * g;
  advance(s, s.w - s.hyper.eta * s.m);
}

void step_sgdm(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
               const std::vector<int>& batch) {
  check_momentum(s.hyper.beta1);
  const Eigen::VectorXd g = batch_grad(spec, ds, batch, s.w);
  s.m = s.hyper.beta1 * s.m + (1.0 - s.hyper.beta1) * g;
  advance(s, s.w - s.hyper.eta * s.m);
}

void step_adam_deterministic(OptimizerState& s, const LossSpec& spec, const Dataset& ds) {
  check_adaptive(s.hyper);
  const double b1 = s.hyper.beta1, b2 = s.hyper.beta2;
  const Eigen::VectorXd g = empirical_grad(spec, ds, s.w);
  s.m = b1 * s.m + (1.0 - b1) * g;
  s.nu = b2 * s.nu + (1.0 - b2) * g.cwiseProduct(g);
  const auto t = static_cast<double>(s.t);
  const Eigen::VectorXd m_hat = s.m / (1.0 - std::pow(b1, t));
  const Eigen::VectorXd nu_hat = s.nu / (1.0 - std::pow(b2, t));
  const Eigen::VectorXd denom =
      (nu_hat.array() + s.hyper.epsilon).sqrt().matrix();
  advance(s, s.w - s.hyper.eta * m_hat.cwiseQuotient(denom));
}

void step_rmsprop_decay(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
                        const std::vector<int>& batch) {
  if (s.t < 1) throw std::invalid_argument("step index must start at 1");
  if (!(s.hyper.beta2 > 0.0 && s.hyper.beta2 < 1.0)) {
    throw std::invalid_argument("requires beta2 in (0, 1)");
  }
  if (!(s.hyper.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const Eigen::VectorXd g = batch_grad(spec, ds, batch, s.w);
  s.nu = s.hyper.beta2 * s.nu + (1.0 - s.hyper.beta2) * g.cwiseProduct(g);
  const double eta_t = s.hyper.eta / std::sqrt(static_cast<double>(s.t));
  const Eigen::VectorXd denom = (s.nu.array() + s.hyper.epsilon).sqrt().matrix();
  advance(s, s.w - eta_t * g.cwiseQuotient(denom));
}

void step_sahb(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
               const std::vector<int>& batch) {
  check_momentum(s.hyper.beta1);
  if (!(s.hyper.beta2 > 0.0 && s.hyper.beta2 < 1.0)) {
    throw std::invalid_argument("requires beta2 in (0, 1)");
  }
  if (!(s.hyper.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  const double b1 = s.hyper.beta1;
  const Eigen::VectorXd g = batch_grad(spec, ds, batch, s.w);
  s.nu = s.hyper.beta2 * s.nu + (1.0 - s.hyper.beta2) * g.cwiseProduct(g);
  const double eta_t = s.hyper.eta / std::sqrt(static_cast<double>(s.t));
  const Eigen::VectorXd denom = (s.nu.array() + s.hyper.epsilon).sqrt().matrix();
  const Eigen::VectorXd w_next =
      s.w + b1 * (s.w - s.prev_w) - eta_t * (1.0 - b1) * g.cwiseQuotient(denom);
  advance(s, w_next);
}

LrBoundReport lr_bound_gdm(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w1) {
  LrBoundReport rep;
  rep.sigma_max = ds.sigma_max();
  if (rep.sigma_max == 0.0) throw std::invalid_argument("lr_bound_gdm: all-zero dataset");
  const double n = ds.n();
  const double l1 = empirical_loss(spec, ds, w1);
  rep.smoothness = smoothness_at(spec, loss_inverse(spec, n * l1));
  rep.bound = 2.0 * n / (rep.sigma_max * rep.sigma_max * rep.smoothness);
  return rep;
}

LrBoundReport lr_bound_sgdm(const LossSpec& spec, const Dataset& ds, int batch_size, double beta) {
  check_momentum(beta);
  if (batch_size < 1 || batch_size > ds.n()) {
    throw std::invalid_argument("lr_bound_sgdm: batch size must lie in [1, n]");
  }
  // The stochastic estimate needs a smoothness constant valid on the whole
  // line (the surrogate u(t) can overshoot any fixed sublevel set).
  const double h = global_smoothness(spec);
  LrBoundReport rep;
  rep.smoothness = h;
  rep.sigma_max = ds.sigma_max();
  if (rep.sigma_max == 0.0) throw std::invalid_argument("lr_bound_sgdm: all-zero dataset");
  rep.gamma = solve_max_margin(ds).gamma;
  const double n = ds.n(), b = batch_size, sig = rep.sigma_max, gam = rep.gamma;
  const double momentum_term =
      beta > 0.0 ? h * beta * sig * sig * sig / (std::sqrt(n * b) * gam * (1.0 - beta)) : 0.0;
  const double variance_term = h * sig * sig * sig * sig / (2.0 * b * gam * gam);
  rep.bound = 1.0 / (momentum_term + variance_term);
  return rep;
}

LrBoundReport lr_bound_adam(const LossSpec& spec, const Dataset& ds, double beta1, double beta2,
                            double epsilon, const Eigen::VectorXd& w1, long t_max) {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("lr_bound_adam: beta1 in [0,1)");
  if (!(beta2 < 1.0 && beta2 > beta1 * beta1 * beta1 * beta1)) {
    throw std::invalid_argument("lr_bound_adam: requires 1 > beta2 > beta1^4");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("lr_bound_adam: epsilon must be positive");
  if (t_max < 2) throw std::invalid_argument("lr_bound_adam: t_max must be >= 2");

  LrBoundReport rep;
  rep.sigma_max = ds.sigma_max();
  const double cb1 = std::pow(beta2, 0.25);  // c * beta1, finite even at beta1 = 0
  double inf_term;
  if (beta1 == 0.0) {
    rep.c = std::numeric_limits<double>::infinity();
    inf_term = 1.0;  // limiting value of the inf expression as beta1 -> 0
  } else {
    rep.c = cb1 / beta1;
    const double limit = (1.0 - 1.0 / rep.c) / (1.0 - beta1);
    inf_term = limit;
    for (long t = 2; t <= t_max; ++t) {
      const double td = static_cast<double>(t);
      const double lead = (1.0 - std::pow(beta1, td)) / (1.0 - beta1);
      const double trail = (1.0 - std::pow(beta1, td - 1.0)) / (rep.c * (1.0 - beta1)) *
                           (1.0 - std::pow(cb1, td)) / (1.0 - std::pow(cb1, td - 1.0));
      inf_term = std::min(inf_term, lead - trail);
    }
    if (!(inf_term > 0.0)) {
      throw std::invalid_argument("lr_bound_adam: step-weight gap is not positive");
    }
  }
  rep.inf_term = inf_term;
  const double n = ds.n();
  const double l1 = empirical_loss(spec, ds, w1);
  rep.smoothness = smoothness_at(spec, loss_inverse(spec, n * l1 / (1.0 - cb1)));
  rep.bound = std::sqrt(epsilon) * inf_term / rep.smoothness;
  return rep;
}

double surrogate_descent_constant(const LossSpec& spec, const Dataset& ds, int batch_size,
                                  double beta, double eta) {
  return 1.0 - eta / lr_bound_sgdm(spec, ds, batch_size, beta).bound;
}

}  // namespace marginlab
