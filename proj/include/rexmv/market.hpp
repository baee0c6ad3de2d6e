#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "rexmv/linalg.hpp"

namespace rexmv {

struct MarketParams {
  int d = 1;
  Mat sigma;    // d x d volatility matrix, constant in time
  Vec rho_hat;  // true risk premium, all components strictly positive
  double T = 1.0;
  double r = 0.0;  // risk-free rate; only used to discount price data
};

struct ProblemParams {
  double x0 = 1.0;
  double l = 1.2;
  double c = 0.0;  // exploration intensity
  // Lagrangian multiplier; NaN means "derive from the scenario".
  double omega = std::numeric_limits<double>::quiet_NaN();

  bool has_omega() const { return std::isfinite(omega); }
};

// Piecewise-constant vector schedule on [0, T]. breakpoints holds the
// m+1 segment edges starting at 0 and ending at T; values holds the m
// per-segment vectors.
struct PiecewiseSchedule {
  std::vector<double> breakpoints;
  std::vector<Vec> values;

  double T() const { return breakpoints.empty() ? 0.0 : breakpoints.back(); }
  int segments() const { return static_cast<int>(values.size()); }

  static PiecewiseSchedule constant(const Vec& v, double T) {
    PiecewiseSchedule s;
    s.breakpoints = {0.0, T};
    s.values = {v};
    return s;
  }
};

inline void check_schedule(const PiecewiseSchedule& s) {
  if (s.breakpoints.size() < 2 ||
      s.values.size() + 1 != s.breakpoints.size())
    throw DimensionMismatch("schedule needs m segments and m+1 breakpoints");
  if (s.breakpoints.front() != 0.0)
    throw OutOfRange("schedule must start at 0");
  for (std::size_t i = 1; i < s.breakpoints.size(); ++i)
    if (!(s.breakpoints[i] > s.breakpoints[i - 1]))
      throw OutOfRange("schedule breakpoints must be strictly increasing");
  const auto dim = s.values.front().size();
  for (const Vec& v : s.values)
    if (v.size() != dim)
      throw DimensionMismatch("schedule segment dimensions differ");
}

// Segment value at time t; the final segment is closed at T.
inline const Vec& schedule_at(const PiecewiseSchedule& s, double t) {
  if (t < 0.0 || t > s.T()) throw OutOfRange("t outside [0, T]");
  for (std::size_t i = 1; i + 1 < s.breakpoints.size(); ++i)
    if (t < s.breakpoints[i]) return s.values[i - 1];
  return s.values.back();
}

// Exact integral of rho_s' rho_s over [t, T].
inline double integral_rho_sq(const PiecewiseSchedule& s, double t, double T) {
  check_schedule(s);
  if (t < 0.0 || t > s.T() || T > s.T() || t > T)
    throw OutOfRange("integration bounds outside the schedule");
  double acc = 0.0;
  for (int i = 0; i < s.segments(); ++i) {
    const double lo = std::max(t, s.breakpoints[i]);
    const double hi = std::min(T, s.breakpoints[i + 1]);
    if (hi > lo) acc += s.values[i].squaredNorm() * (hi - lo);
  }
  return acc;
}

// Exact double integral of rho over the triangle t <= s <= r <= T:
// int_t^T int_s^T rho_r' rho_r dr ds. Piecewise constancy makes the inner
// integral piecewise linear, so each segment contributes in closed form.
inline double double_integral_rho_sq(const PiecewiseSchedule& s, double t,
                                     double T) {
  check_schedule(s);
  if (t < 0.0 || t > s.T() || T > s.T() || t > T)
    throw OutOfRange("integration bounds outside the schedule");
  // Walk segments backward from T; J(s) = int_s^T rho'rho accumulates.
  double acc = 0.0;
  double tail = 0.0;  // J at the upper edge of the current segment
  for (int i = s.segments() - 1; i >= 0; --i) {
    const double lo = std::max(t, s.breakpoints[i]);
    const double hi = std::min(T, s.breakpoints[i + 1]);
    if (hi > lo) {
      const double p = s.values[i].squaredNorm();
      const double w = hi - lo;
      // int_lo^hi [tail + p (hi - s)] ds
      acc += tail * w + 0.5 * p * w * w;
      tail += p * w;
    }
  }
  return acc;
}

struct TimeGrid {
  int n = 1;
  double T = 1.0;

  double dt() const { return T / n; }
  double node(int i) const { return T * i / n; }
};

struct ValidatedMarket {
  MarketParams params;
  double min_eigenvalue = 0.0;  // of sigma sigma'
};

inline ValidatedMarket validate_market(const MarketParams& raw,
                                       double eps = 1e-8) {
  if (raw.d < 1) throw OutOfRange("asset count must be at least 1");
  if (!(raw.T > 0.0)) throw OutOfRange("horizon must be positive");
  if (raw.sigma.rows() != raw.d || raw.sigma.cols() != raw.d)
    throw DimensionMismatch("sigma must be d x d");
  if (raw.rho_hat.size() != raw.d)
    throw DimensionMismatch("rho_hat must have d components");
  Eigen::SelfAdjointEigenSolver<Mat> es(raw.sigma * raw.sigma.transpose());
  if (es.info() != Eigen::Success)
    throw FactorizationFailure("eigendecomposition did not converge");
  const double min_eig = es.eigenvalues().minCoeff();
  if (!(min_eig > eps))
    throw SingularVolatility("sigma sigma' eigenvalue " + num_str(min_eig) +
                             " not above " + num_str(eps));
  for (int j = 0; j < raw.d; ++j)
    if (!(raw.rho_hat[j] > 0.0))
      throw NonPositivePremium("rho_hat[" + std::to_string(j) +
                               "] = " + num_str(raw.rho_hat[j]));
  return {raw, min_eig};
}

// Symmetric square root of correlation' diag(vols)^2 correlation.
inline Mat build_volatility(const Vec& diag_vols, const Mat& correlation) {
  const auto d = diag_vols.size();
  if (correlation.rows() != d || correlation.cols() != d)
    throw DimensionMismatch("correlation must match the vol vector");
  const Mat s0sq = diag_vols.cwiseProduct(diag_vols).asDiagonal();
  const Mat prod = correlation.transpose() * s0sq * correlation;
  try {
    return sym_sqrt(prod, 0.0);
  } catch (const NotPositiveDefinite&) {
    throw NotPositiveDefinite("correlation' diag^2 correlation is not PD");
  }
}

}  // namespace rexmv
