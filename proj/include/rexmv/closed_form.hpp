#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include "rexmv/market.hpp"

namespace rexmv {

struct GaussianPolicy {
  Vec mean;
  Mat covariance;
  double time = 0.0;
};

struct ScenarioPair {
  Vec rho_invest;  // the premium the investor acts on
  Vec rho_market;  // the premium driving the data
  std::optional<Vec> rho_robust;

  int d() const { return static_cast<int>(rho_market.size()); }
};

inline void check_scenario(const ScenarioPair& s) {
  if (s.rho_invest.size() != s.rho_market.size())
    throw DimensionMismatch("scenario premium dimensions differ");
  if (s.rho_robust && s.rho_robust->size() != s.rho_market.size())
    throw DimensionMismatch("robust premium dimension differs");
  auto positive = [](const Vec& v) { return v.size() && v.minCoeff() > 0.0; };
  if (!positive(s.rho_invest) || !positive(s.rho_market))
    throw DegenerateScenario("scenario premiums must be positive");
  // Table-style robust premiums may sit on the boundary of the positive
  // orthant (zero-lower cubes); they only need a positive market dot.
  if (s.rho_robust && (!(s.rho_robust->minCoeff() >= 0.0) ||
                       !(s.rho_robust->dot(s.rho_market) > 0.0)))
    throw DegenerateScenario("robust premium must be nonnegative");
}

// omega solving E[X_T] = l when the investor acts on rho_invest while the
// market pays rho_market. Written through expm1 so l == x0 gives omega == x0
// exactly and large exponents stay finite.
inline double lagrange_multiplier(const Vec& rho_invest, const Vec& rho_market,
                                  double x0, double l, double T) {
  if (rho_invest.size() != rho_market.size())
    throw DimensionMismatch("premium dimensions differ");
  const double u = rho_invest.dot(rho_market);
  if (!(u * T > 0.0))
    throw DegenerateScenario("rho'rho_hat T must be positive, got " +
                             num_str(u * T));
  return l + (l - x0) / std::expm1(u * T);
}

inline GaussianPolicy optimal_policy(double t, double x, const Vec& rho,
                                     const Mat& sigma, double c, double omega,
                                     double T) {
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  if (sigma.rows() != rho.size() || sigma.cols() != rho.size())
    throw DimensionMismatch("sigma must be d x d");
  Eigen::FullPivLU<Mat> lu(sigma);
  if (!lu.isInvertible()) throw SingularVolatility("sigma is singular");
  GaussianPolicy p;
  p.time = t;
  p.mean = lu.solve(rho) * (omega - x);
  const auto d = rho.size();
  if (c == 0.0) {
    p.covariance = Mat::Zero(d, d);
  } else {
    const Mat gram_inv = (sigma.transpose() * sigma).inverse();
    p.covariance =
        0.5 * c * std::exp(rho.squaredNorm() * (T - t)) * gram_inv;
  }
  return p;
}

// Value function of the entropy-regularized problem. Entropy terms vanish
// identically at c = 0 (classical limit).
inline double value_function(double t, double x,
                             const PiecewiseSchedule& rho_schedule,
                             const Mat& sigma, double c, double omega,
                             double l, double T) {
  if (t < 0.0 || t > T) throw OutOfRange("t outside [0, T]");
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  const double i1 = integral_rho_sq(rho_schedule, t, T);
  double v = (x - omega) * (x - omega) * std::exp(-i1) -
             (omega - l) * (omega - l);
  if (c > 0.0) {
    const auto d = static_cast<double>(rho_schedule.values.front().size());
    const double i2 = double_integral_rho_sq(rho_schedule, t, T);
    v += -0.5 * c * d * i2 +
         0.5 * c * log_det_spd(sigma.transpose() * sigma) * (T - t) -
         0.5 * c * d * std::log(std::numbers::pi * c) * (T - t);
  }
  return v;
}

enum class SecondMomentMode { InvestVsMarket, MarketVsRobust };

// E[(X_t - omega)^2] under the two scenario couplings. Removable
// singularities run through expm1_over_x, so the formulas are continuous
// across coinciding exponents.
inline double second_moment_N(double t, const ScenarioPair& pair,
                              SecondMomentMode mode, double x0, double omega,
                              double c, double T) {
  check_scenario(pair);
  if (t < 0.0 || t > T) throw OutOfRange("t outside [0, T]");
  const double d = pair.d();
  const double dx2 = (x0 - omega) * (x0 - omega);
  if (mode == SecondMomentMode::InvestVsMarket) {
    const double p = pair.rho_invest.squaredNorm();
    const double q = pair.rho_invest.dot(pair.rho_market);
    const double eps = q - p;
    return c * d * std::exp(p * (T - t)) * 0.5 * t *
               expm1_over_x(-2.0 * eps * t) +
           dx2 * std::exp((p - 2.0 * q) * t);
  }
  if (!pair.rho_robust) throw InvalidSet("scenario has no robust premium");
  const double u = pair.rho_market.dot(*pair.rho_robust);
  const double w = pair.rho_robust->squaredNorm();
  const double integral = t * expm1_over_x(2.0 * (u - w) * t);
  return std::exp((-2.0 * u + w) * t) *
         (dx2 + 0.5 * c * d * std::exp(w * T) * integral);
}

// Objective value attained by the policy matched to the schedule.
inline double m_optimal(const PiecewiseSchedule& rho_schedule,
                        const Mat& sigma, double x0, double l, double c,
                        double T) {
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  const double i1 = integral_rho_sq(rho_schedule, 0.0, T);
  if (!(i1 > 0.0))
    throw DegenerateScenario("integral of rho'rho must be positive");
  double m = (x0 - l) * (x0 - l) / std::expm1(i1);
  if (c > 0.0) {
    const auto d = static_cast<double>(rho_schedule.values.front().size());
    m += -0.5 * c * d * double_integral_rho_sq(rho_schedule, 0.0, T) +
         0.5 * c * T * log_det_spd(sigma.transpose() * sigma) -
         0.5 * c * d * T * std::log(std::numbers::pi * c);
  }
  return m;
}

// Objective value when the market pays rho but the investor holds the
// policy built from rho_star; equals m_optimal(rho_star) on the diagonal.
inline double m_cross(const Vec& rho, const Vec& rho_star, const Mat& sigma,
                      double x0, double l, double c, double T) {
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  if (rho.size() != rho_star.size())
    throw DimensionMismatch("premium dimensions differ");
  if (!(rho.minCoeff() > 0.0) || !(rho_star.minCoeff() > 0.0))
    throw DegenerateScenario("premiums must be positive");
  const double u = rho.dot(rho_star);
  const double w = rho_star.squaredNorm();
  if (!(u * T > 0.0))
    throw DegenerateScenario("rho'rho_star T must be positive");
  double m = (x0 - l) * (x0 - l) * std::expm1(w * T) /
             (std::expm1(u * T) * std::expm1(u * T));
  if (c > 0.0) {
    const auto d = static_cast<double>(rho.size());
    const double phi = T * expm1_over_x(2.0 * (u - w) * T);
    m += -0.5 * c * T * d * std::log(std::numbers::pi * std::numbers::e * c) +
         0.5 * c * T * log_det_spd(sigma.transpose() * sigma) +
         0.5 * c * d * std::exp(-2.0 * (u - w) * T) * phi -
         0.25 * c * d * w * T * T;
  }
  return m;
}

}  // namespace rexmv
