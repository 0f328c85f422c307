#include <cmath>

#include "doctest.h"
#include "marginlab/maxmargin.hpp"
#include "marginlab/rng.hpp"
#include "oracles.hpp"

using namespace marginlab;

namespace {

Dataset inline_ds(std::initializer_list<std::initializer_list<double>> cols) {
  Eigen::MatrixXd m(static_cast<int>(cols.begin()->size()), static_cast<int>(cols.size()));
  int j = 0;
  for (const auto& col : cols) {
    int i = 0;
    for (double v : col) m(i++, j) = v;
    ++j;
  }
  return Dataset(m, {"inline", 0, {}});
}

}  // namespace

TEST_CASE("single point margin problem solves in closed form") {
  const Dataset ds = inline_ds({{1.0, 0.0}});
  const MaxMarginSolution sol = solve_max_margin(ds);
  CHECK(sol.converged);
  CHECK(sol.w_hat(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(sol.w_hat(1)) <= 1e-10);
  CHECK(sol.gamma == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.support == std::vector<int>{0});
  CHECK(sol.dual_v(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.kkt_residual <= 1e-9);
}

TEST_CASE("symmetric four-point problem has the diagonal direction") {
  const Dataset ds = make_soudry_dataset(0, 0);
  const MaxMarginSolution sol = solve_max_margin(ds);
  CHECK(sol.converged);
  CHECK(sol.w_hat(0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(sol.w_hat(1) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(sol.gamma == doctest::Approx(std::sqrt(2.0)).epsilon(1e-8));
  // All four points are support points (two duplicated pairs).
  CHECK(sol.support.size() == 4);
  CHECK(sol.dual_v.sum() == doctest::Approx(0.5).epsilon(1e-8));
  // Dual representation: w_hat is a conic combination of the data.
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(2);
  for (int i = 0; i < ds.n(); ++i) recon += sol.dual_v(i) * ds.points().col(i);
  CHECK((recon - sol.w_hat).norm() <= 1e-8);
  CHECK(sol.kkt_residual <= 1e-9);
}

TEST_CASE("margin value matches a brute-force direction grid") {
  SplitMix64 rng(2024);
  int tested = 0;
  while (tested < 10) {
    const int n = 2 + static_cast<int>(rng.next_below(5));
    Eigen::MatrixXd pts(2, n);
    for (int i = 0; i < n; ++i) {
      pts(0, i) = 2.0 * rng.next_double() - 1.0;
      pts(1, i) = 2.0 * rng.next_double() - 1.0;
    }
    const Dataset ds(pts, {"random", 0, {}});
    if (!check_separable(ds).witness_w) continue;
    ++tested;
    const MaxMarginSolution sol = solve_max_margin(ds);
    const double grid = oracle::grid_margin_2d(ds);
    CHECK(sol.gamma == doctest::Approx(grid).epsilon(1e-3));
    CHECK(sol.kkt_residual <= 1e-9);
    Eigen::VectorXd recon = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < ds.n(); ++i) recon += sol.dual_v(i) * ds.points().col(i);
    CHECK((recon - sol.w_hat).norm() <= 1e-8);
    for (int i = 0; i < ds.n(); ++i) {
      CHECK(sol.dual_v(i) >= 0.0);
      CHECK(sol.w_hat.dot(ds.points().col(i)) >= 1.0 - 1e-8);
    }
  }
}

TEST_CASE("non-separable input is rejected") {
  CHECK_THROWS_AS(solve_max_margin(inline_ds({{1.0, 0.0}, {-1.0, 0.0}})), std::runtime_error);
  CHECK_THROWS_AS(solve_max_margin(inline_ds({{0.0, 0.0}})), std::runtime_error);
}

TEST_CASE("tilde_constant per optimizer family") {
  CHECK(tilde_constant(OptimizerKind::Gdm, 0.1, 0.9, 4, 0.0) == doctest::Approx(0.025).epsilon(1e-15));
  // Momentum does not enter the plain-gradient constant.
  CHECK(tilde_constant(OptimizerKind::Gdm, 0.1, 0.0, 4, 0.0) ==
        tilde_constant(OptimizerKind::Gdm, 0.1, 0.9, 4, 0.0));
  CHECK(tilde_constant(OptimizerKind::Sgdm, 0.1, 0.9, 4, 0.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(tilde_constant(OptimizerKind::AdamDeterministic, 0.1, 0.9, 4, 1e-8) ==
        doctest::Approx(1e4).epsilon(1e-12));
  CHECK_THROWS_AS(tilde_constant(OptimizerKind::Sgdm, 0.1, 1.0, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(tilde_constant(OptimizerKind::AdamDeterministic, 0.1, 0.9, 4, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(tilde_constant(OptimizerKind::RmspropDecay, 0.1, 0.9, 4, 1e-8),
                  std::invalid_argument);
  CHECK_THROWS_AS(tilde_constant(OptimizerKind::Sahb, 0.1, 0.9, 4, 1e-8), std::invalid_argument);
}

TEST_CASE("comparator shift solves the support equations") {
  const Dataset ds = make_soudry_dataset(0, 0);
  const MaxMarginSolution sol = solve_max_margin(ds);

  // Collapsed support weights are 0.25 each, so c3 = 0.25 makes every
  // right-hand side ln(1) = 0 and the minimum-norm solution is the origin.
  TildeW tw = solve_tilde_w(sol, ds, 0.25);
  CHECK(tw.w_tilde.norm() <= 1e-6);
  CHECK(tw.residual <= 1e-6);

  // c3 = 0.25 e: both support equations read <z_j, w_tilde> = 1, whose
  // solution is (0.5, 0.5).
  tw = solve_tilde_w(sol, ds, 0.25 * std::exp(1.0));
  CHECK(tw.w_tilde(0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(tw.w_tilde(1) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(tw.residual <= 1e-6);

  // c3 = 0.025: right-hand sides ln(0.1), so both coordinates equal
  // ln(0.1) / 2 = -1.151292546497023.
  tw = solve_tilde_w(sol, ds, 0.025);
  CHECK(tw.w_tilde(0) == doctest::Approx(-1.151292546497023).epsilon(1e-6));
  CHECK(tw.w_tilde(1) == doctest::Approx(-1.151292546497023).epsilon(1e-6));

  CHECK_THROWS_AS(solve_tilde_w(sol, ds, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_tilde_w(sol, ds, -1.0), std::invalid_argument);
}

TEST_CASE("comparator shift picks the minimum-norm solution") {
  // One support point in 2-D: the equation <(1,0), w_tilde> = 1 has a line of
  // solutions; minimum norm zeroes the free coordinate.
  const Dataset ds = inline_ds({{1.0, 0.0}});
  const MaxMarginSolution sol = solve_max_margin(ds);
  const TildeW tw = solve_tilde_w(sol, ds, std::exp(1.0));
  CHECK(tw.w_tilde(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(tw.w_tilde(1)) <= 1e-8);
  CHECK(tw.residual <= 1e-8);
}
