#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "rexmv/admissible_set.hpp"
#include "rexmv/closed_form.hpp"
#include "rexmv/simulate.hpp"
#include "rexmv/variance.hpp"
#include "support/test_util.hpp"

using namespace rexmv;
using rexmv_test::rk4_second_moment;
using rexmv_test::sect51_sigma;
using rexmv_test::vec4;
using Catch::Approx;

namespace {

ScenarioPair scenario(const Vec& invest, const Vec& market) {
  ScenarioPair s;
  s.rho_invest = invest;
  s.rho_market = market;
  return s;
}

}  // namespace

TEST_CASE("lagrange multiplier closes the expected wealth constraint") {
  const Vec rho = vec4(0.4, 0.4, 0.4, 0.4);  // rho'rho = 0.64
  const double x0 = 1.0, l = 1.2, T = 1.0;

  const double omega = lagrange_multiplier(rho, rho, x0, l, T);
  CHECK(omega ==
        Approx((1.2 * std::exp(0.64) - 1.0) / std::expm1(0.64)).epsilon(1e-14));
  CHECK(omega == Approx(1.4230945518).epsilon(1e-9));

  // E[X_T] = omega + (x0 - omega) e^{-uT} must return the target l.
  const double u = rho.squaredNorm();
  CHECK(omega + (x0 - omega) * std::exp(-u * T) == Approx(l).epsilon(1e-13));

  CHECK(lagrange_multiplier(rho, rho, l, l, T) == Approx(l));
  CHECK(lagrange_multiplier(rho, rho, x0, l, 400.0) == Approx(l));

  Vec plus(2), minus(2);
  plus << 1.0, 0.0;
  minus << 0.0, 1.0;
  CHECK_THROWS_AS(lagrange_multiplier(plus, minus, x0, l, T),
                  DegenerateScenario);
  CHECK_THROWS_AS(lagrange_multiplier(plus, Vec::Ones(3), x0, l, T),
                  DimensionMismatch);
}

TEST_CASE("value function boundary and closed values") {
  const double T = 1.0, l = 1.2, omega = 1.5;
  const Vec rho = Vec::Constant(1, 1.0);
  const Mat sigma = Mat::Identity(1, 1);
  const auto sched = PiecewiseSchedule::constant(rho, T);

  // Terminal slice: the integrals vanish and only the penalty remains.
  const double vT = value_function(T, 2.0, sched, sigma, 1.0, omega, l, T);
  CHECK(vT == Approx((2.0 - omega) * (2.0 - omega) -
                     (omega - l) * (omega - l)).epsilon(1e-14));

  // c = 0 collapses to the quadratic classical value.
  const double v0 = value_function(0.0, 2.0, sched, sigma, 0.0, omega, l, T);
  CHECK(v0 == Approx((2.0 - omega) * (2.0 - omega) * std::exp(-1.0) -
                     (omega - l) * (omega - l)).epsilon(1e-14));

  // Unit premium, unit volatility, c = 1, evaluated at the anchor point:
  // the double integral contributes T^2/4 and the log term 0.5 ln(pi).
  const double va =
      value_function(0.0, omega, sched, sigma, 1.0, omega, l, T);
  CHECK(va == Approx(-(omega - l) * (omega - l) - 0.25 -
                     0.5 * std::log(std::numbers::pi)).epsilon(1e-13));

  CHECK_THROWS_AS(value_function(-0.1, 1.0, sched, sigma, 1.0, omega, l, T),
                  OutOfRange);
  CHECK_THROWS_AS(value_function(T + 0.1, 1.0, sched, sigma, 1.0, omega, l, T),
                  OutOfRange);
  CHECK_THROWS_AS(value_function(0.5, 1.0, sched, sigma, -1.0, omega, l, T),
                  InvalidIntensity);
}

TEST_CASE("optimal policy mean and covariance") {
  const double T = 1.0, omega = 1.5;
  const Mat eye2 = Mat::Identity(2, 2);
  Vec rho2(2);
  rho2 << 0.3, 0.6;

  const GaussianPolicy anchored =
      optimal_policy(0.3, omega, rho2, eye2, 0.7, omega, T);
  CHECK(anchored.mean.norm() == 0.0);

  const GaussianPolicy terminal =
      optimal_policy(T, 1.0, rho2, eye2, 1.0, omega, T);
  CHECK((terminal.covariance - 0.5 * eye2).norm() < 1e-14);

  // d = 1, sigma = 0.2, rho = 0.5, c = 1.5, one unit below the anchor.
  const Mat s = Mat::Constant(1, 1, 0.2);
  const Vec r = Vec::Constant(1, 0.5);
  const GaussianPolicy p = optimal_policy(0.0, omega - 1.0, r, s, 1.5, omega, T);
  CHECK(p.mean[0] == Approx(2.5).epsilon(1e-14));
  CHECK(p.covariance(0, 0) ==
        Approx((0.75 / 0.04) * std::exp(0.25)).epsilon(1e-14));

  // Mean is linear in the distance to the anchor; covariance ignores x.
  const GaussianPolicy lo = optimal_policy(0.2, 0.5, rho2, eye2, 1.0, omega, T);
  const GaussianPolicy hi =
      optimal_policy(0.2, 2.0 * omega - 0.5, rho2, eye2, 1.0, omega, T);
  CHECK((lo.mean + hi.mean).norm() < 1e-14);
  CHECK((lo.covariance - hi.covariance).norm() == 0.0);

  // Zero intensity recovers the deterministic classical strategy.
  const GaussianPolicy classical =
      optimal_policy(0.2, 0.5, rho2, eye2, 0.0, omega, T);
  CHECK(classical.covariance.norm() == 0.0);
  CHECK((classical.mean - rho2 * (omega - 0.5)).norm() < 1e-14);

  CHECK_THROWS_AS(optimal_policy(0.0, 1.0, rho2, eye2, -0.5, omega, T),
                  InvalidIntensity);
  CHECK_THROWS_AS(
      optimal_policy(0.0, 1.0, rho2, Mat::Zero(2, 2), 1.0, omega, T),
      SingularVolatility);
  CHECK_THROWS_AS(optimal_policy(0.0, 1.0, rho2, Mat::Identity(3, 3), 1.0,
                                 omega, T),
                  DimensionMismatch);
}

TEST_CASE("second moment matches an ODE integration in both modes") {
  const double x0 = 1.0, omega = 1.6, c = 0.8, T = 2.0;
  Vec invest(3), market(3), robust(3);
  invest << 0.5, 0.3, 0.4;
  market << 0.4, 0.35, 0.3;
  robust << 0.3, 0.2, 0.25;
  ScenarioPair pair = scenario(invest, market);
  pair.rho_robust = robust;
  const double init = (x0 - omega) * (x0 - omega);

  CHECK(second_moment_N(0.0, pair, SecondMomentMode::InvestVsMarket, x0,
                        omega, c, T) == Approx(init).epsilon(1e-14));
  CHECK(second_moment_N(0.0, pair, SecondMomentMode::MarketVsRobust, x0,
                        omega, c, T) == Approx(init).epsilon(1e-14));

  for (double t : {0.4, 1.1, T}) {
    const double invest_exact = second_moment_N(
        t, pair, SecondMomentMode::InvestVsMarket, x0, omega, c, T);
    const double invest_ode =
        rk4_second_moment(t, invest.dot(market), invest.squaredNorm(),
                          c * 3.0, T, init);
    CHECK(invest_exact == Approx(invest_ode).epsilon(1e-8));

    const double robust_exact = second_moment_N(
        t, pair, SecondMomentMode::MarketVsRobust, x0, omega, c, T);
    const double robust_ode =
        rk4_second_moment(t, market.dot(robust), robust.squaredNorm(),
                          c * 3.0, T, init);
    CHECK(robust_exact == Approx(robust_ode).epsilon(1e-8));
  }

  CHECK_THROWS_AS(second_moment_N(-0.1, pair,
                                  SecondMomentMode::InvestVsMarket, x0, omega,
                                  c, T),
                  OutOfRange);
  ScenarioPair bare = scenario(invest, market);
  CHECK_THROWS_AS(second_moment_N(1.0, bare,
                                  SecondMomentMode::MarketVsRobust, x0, omega,
                                  c, T),
                  InvalidSet);
}

TEST_CASE("second moment is continuous across coinciding exponents") {
  // Near rho_invest = rho_market the invest-mode exponent difference
  // crosses zero; the removable singularity must not kink the value.
  const double x0 = 1.0, omega = 1.5, c = 1.0, T = 1.0;
  const Vec base = Vec::Constant(2, 0.4);
  const double at = second_moment_N(0.7, scenario(base, base),
                                    SecondMomentMode::InvestVsMarket, x0,
                                    omega, c, T);
  for (double eps : {1e-7, -1e-7}) {
    const Vec bumped = base.array() + eps;
    const double near = second_moment_N(0.7, scenario(bumped, base),
                                        SecondMomentMode::InvestVsMarket, x0,
                                        omega, c, T);
    CHECK(std::abs(near - at) < 1e-5 * std::abs(at));
  }
}

TEST_CASE("robust mode collapses to invest mode on the diagonal") {
  const double x0 = 1.0, omega = 1.7, c = 0.5, T = 1.5;
  Vec invest(2), market(2);
  invest << 0.35, 0.45;
  market << 0.5, 0.4;
  ScenarioPair invest_pair = scenario(invest, market);
  ScenarioPair robust_pair = scenario(market, market);
  robust_pair.rho_robust = invest;
  for (double t : {0.2, 0.9, 1.5}) {
    const double a = second_moment_N(t, invest_pair,
                                     SecondMomentMode::InvestVsMarket, x0,
                                     omega, c, T);
    const double b = second_moment_N(t, robust_pair,
                                     SecondMomentMode::MarketVsRobust, x0,
                                     omega, c, T);
    CHECK(a == Approx(b).epsilon(1e-13));
  }
}

TEST_CASE("terminal second moment reproduces the aligned variance") {
  // With rho = rho_hat the terminal variance N(T) - (l - omega)^2 must
  // agree with the aligned closed form (x0-l)^2/em(QT) + c d T / 2.
  const double x0 = 1.0, l = 1.2, c = 1.5, T = 1.0;
  const Vec rho = vec4(0.4, 0.4, 0.4, 0.4);
  const double omega = lagrange_multiplier(rho, rho, x0, l, T);
  const double nT = second_moment_N(T, scenario(rho, rho),
                                    SecondMomentMode::InvestVsMarket, x0,
                                    omega, c, T);
  const double var = nT - (l - omega) * (l - omega);
  const double aligned =
      variance_with_exploration(rho, rho, x0, l, c, 4, T).variance;
  CHECK(var == Approx(aligned).epsilon(1e-12));
  CHECK(aligned == Approx(0.04 / std::expm1(0.64) + 3.0).epsilon(1e-12));
}

TEST_CASE("optimal objective value") {
  const double x0 = 1.0, l = 1.2, T = 1.0;
  Vec rho(2);
  rho << 0.3, 0.6;
  const auto sched = PiecewiseSchedule::constant(rho, T);
  const Mat eye2 = Mat::Identity(2, 2);

  CHECK(m_optimal(sched, eye2, x0, l, 0.0, T) ==
        Approx(0.04 / std::expm1(0.45)).epsilon(1e-14));
  CHECK(m_optimal(PiecewiseSchedule::constant(rho, T), eye2, l, l, 0.0, T) ==
        0.0);

  // Self-consistent anchor: the objective equals the value function at x0.
  const Mat sigma = sect51_sigma();
  const Vec rho4 = vec4(0.4, 0.4, 0.4, 0.4);
  const auto sched4 = PiecewiseSchedule::constant(rho4, T);
  const double omega = lagrange_multiplier(rho4, rho4, x0, l, T);
  const double m = m_optimal(sched4, sigma, x0, l, 1.5, T);
  CHECK(m == Approx(value_function(0.0, x0, sched4, sigma, 1.5, omega, l, T))
                 .epsilon(1e-12));

  CHECK_THROWS_AS(
      m_optimal(PiecewiseSchedule::constant(Vec::Zero(2), T), eye2, x0, l,
                1.0, T),
      DegenerateScenario);
  CHECK_THROWS_AS(m_optimal(sched, eye2, x0, l, -1.0, T), InvalidIntensity);
}

TEST_CASE("cross objective agrees with the optimal one on the diagonal") {
  const double x0 = 1.0, l = 1.2, c = 0.9, T = 1.3;
  const Mat sigma = sect51_sigma();
  const Vec rho = vec4(0.2, 0.3, 0.4, 0.5);
  CHECK(m_cross(rho, rho, sigma, x0, l, c, T) ==
        Approx(m_optimal(PiecewiseSchedule::constant(rho, T), sigma, x0, l, c,
                         T))
            .margin(1e-12));
}

TEST_CASE("projected premium supports the cross objective over the set") {
  const double x0 = 1.0, l = 1.2, c = 0.5, T = 1.0;
  const Mat sigma = sect51_sigma();

  AdmissibleSet cube;
  cube.shape = Cube{(vec4(0.4, 0.5, 0.5, 0.7).array() - 0.3).matrix(),
                    (vec4(0.4, 0.5, 0.5, 0.7).array() + 0.3).matrix()};
  AdmissibleSet ball;
  ball.shape = Ball{vec4(0.15, 0.15, 0.35, 0.4), 0.1};

  for (const AdmissibleSet& set : {cube, ball}) {
    const Vec star = project_min_norm(set);
    const double at_star = m_cross(star, star, sigma, x0, l, c, T);
    for (const Vec& rho : sample_boundary_and_interior(set, 1000, 99)) {
      CHECK(at_star >= m_cross(rho, star, sigma, x0, l, c, T) - 1e-12);
    }
  }
}

TEST_CASE("cross objective matches a Monte Carlo estimate", "[slow]") {
  // Simulate X under the market premium while the control uses the
  // projected one, then add the analytic entropy part of the objective.
  const double x0 = 1.0, l = 1.2, c = 1.0, T = 1.0;
  const Vec rho = Vec::Constant(1, 0.5);
  const Vec star = Vec::Constant(1, 0.2);

  SimConfig cfg;
  cfg.m = 65536;
  cfg.n = 800;
  cfg.seed = 20;
  cfg.scenario = scenario(star, rho);
  cfg.market.d = 1;
  cfg.market.sigma = Mat::Identity(1, 1);
  cfg.market.rho_hat = rho;
  cfg.market.T = T;
  cfg.problem.x0 = x0;
  cfg.problem.l = l;
  cfg.problem.c = c;

  const WealthEnsemble ens = simulate(cfg, ControlLeg::Misspecified);
  const double omega = lagrange_multiplier(star, rho, x0, l, T);
  const Vec sq = (ens.terminal.array() - omega).square();
  const double mean_sq = sq.mean();
  const double se =
      std::sqrt((sq.array() - mean_sq).square().sum() /
                (static_cast<double>(cfg.m) - 1.0) /
                static_cast<double>(cfg.m));
  const double w = star.squaredNorm();
  const double entropy_part =
      -0.5 * c * T * std::log(std::numbers::pi * std::numbers::e * c) -
      0.25 * c * w * T * T;
  const double mc = mean_sq - (omega - l) * (omega - l) + entropy_part;
  const double exact = m_cross(rho, star, Mat::Identity(1, 1), x0, l, c, T);
  CHECK(std::abs(mc - exact) <= 3.0 * se + 1e-3);
}
