#pragma once

// Momentum-family optimizer steps on the empirical loss, mini-batch samplers,
// and the theoretical learning-rate bounds under which the descent
// inequalities of the companion diagnostics hold. All steps mutate an
// OptimizerState in place; callers that need the previous iterate read
// state.prev_w before stepping (the step updates it).

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

struct OptimizerHyper {
  double eta = 0.1;       // eta1 for the decaying-rate kinds
  double beta1 = 0.0;     // "beta" of GDM/SGDM
  double beta2 = 0.999;   // second-moment decay (Adam/RMSProp/SAHB)
  double epsilon = 1e-8;  // added under the square root
  int batch_size = 0;     // 0 means full batch
};

struct OptimizerState {
  Eigen::VectorXd w;
  Eigen::VectorXd prev_w;  // equals w at init (zero first momentum)
  Eigen::VectorXd m;
  Eigen::VectorXd nu;
  long t = 1;  // index of the next step to take
  OptimizerHyper hyper;
};

OptimizerState make_state(const Eigen::VectorXd& w1, const OptimizerHyper& hyper);

enum class SamplerMode { FullBatch, WithReplacement, WithoutReplacement };

// FullBatch yields all indices every step. WithReplacement draws batch_size
// distinct indices per step, independently across steps. WithoutReplacement
// shuffles a permutation each epoch and partitions it into n/batch_size
// batches (batch_size must divide n).
class BatchSampler {
 public:
  BatchSampler(SamplerMode mode, int n, int batch_size, std::uint64_t seed);

  const std::vector<int>& next();
  SamplerMode mode() const { return mode_; }
  int batch_size() const { return batch_size_; }

 private:
  SamplerMode mode_;
  int n_;
  int batch_size_;
  SplitMix64 rng_;
  std::vector<int> perm_;
  std::vector<int> batch_;
  int pos_ = 0;
};

// w <- w - eta * m with m <- beta * m + (1 - beta) * grad. GDM uses the full
// gradient; SGDM the batch gradient at the given indices.
void step_gdm(OptimizerState& s, const LossSpec& spec, const Dataset& ds);
void step_sgdm(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
               const std::vector<int>& batch);

// Deterministic Adam: both moments from the full gradient, bias correction
// 1 - beta^t with t the running step index, epsilon under the square root.
// Requires 1 > beta2 > beta1^4 >= 0 and epsilon > 0.
void step_adam_deterministic(OptimizerState& s, const LossSpec& spec, const Dataset& ds);

// Decaying-rate RMSProp over a without-replacement sampler: raw (uncorrected)
// second moment, step eta1 / sqrt(t).
void step_rmsprop_decay(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
                        const std::vector<int>& batch);

// Stochastic adaptive heavy ball: shares RMSProp's second moment and decaying
// rate, plus heavy-ball momentum
//   w(t+1) - w(t) = beta1 (w(t) - w(t-1)) - eta_t (1-beta1) g / sqrt(eps + nu(t)),
// so that u(t) = (w(t) - beta1 w(t-1)) / (1 - beta1) obeys
// u(t+1) = u(t) - eta_t g / sqrt(eps + nu(t)) and beta1 = 0 recovers RMSProp
// step for step.
void step_sahb(OptimizerState& s, const LossSpec& spec, const Dataset& ds,
               const std::vector<int>& batch);

struct LrBoundReport {
  double bound = 0.0;
  // Echo of the quantities the bound was computed from.
  double sigma_max = 0.0;
  double smoothness = 0.0;
  double gamma = 0.0;       // SGDM only
  double inf_term = 0.0;    // Adam only
  double c = 0.0;           // Adam only: beta2^(1/4) / beta1
};

// 2N / (sigma_max^2 * H_s0) with s0 = loss_inverse(N * L(w1)).
LrBoundReport lr_bound_gdm(const LossSpec& spec, const Dataset& ds, const Eigen::VectorXd& w1);

// 1 / (H beta sigma^3 / (sqrt(N b) gamma (1-beta)) + H sigma^4 / (2 b gamma^2));
// needs a global smoothness constant, so logistic only.
LrBoundReport lr_bound_sgdm(const LossSpec& spec, const Dataset& ds, int batch_size, double beta);

// sqrt(eps) * inf_t phi(t) / H_s0 with
//   phi(t) = (1-beta1^t)/(1-beta1) - (1-beta1^{t-1})/(c(1-beta1)) * (1-(c b1)^t)/(1-(c b1)^{t-1}),
// the inf taken over a scan t in [2, t_max] together with the analytic limit
// (1 - 1/c)/(1 - beta1), and s0 = loss_inverse(N L(w1) / (1 - c beta1)).
// beta1 = 0 uses the limiting value phi = 1. Requires beta2 > beta1^4.
LrBoundReport lr_bound_adam(const LossSpec& spec, const Dataset& ds, double beta1, double beta2,
                            double epsilon, const Eigen::VectorXd& w1, long t_max = 10000);

// Descent margin 1 - eta / lr_bound_sgdm(...), the constant multiplying
// eta * sum ||grad L||^2 in the surrogate descent estimate.
double surrogate_descent_constant(const LossSpec& spec, const Dataset& ds, int batch_size,
                                  double beta, double eta);

}  // namespace marginlab
