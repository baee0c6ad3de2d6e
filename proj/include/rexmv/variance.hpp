#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rexmv/appendix.hpp"
#include "rexmv/closed_form.hpp"
#include "rexmv/rng.hpp"

namespace rexmv {

struct VarianceReport {
  double variance = 0.0;
  double exploration_term = 0.0;
  double classical_term = 0.0;
  double omega = 0.0;
  Vec rho, rho_hat;
  double x0 = 0.0, l = 0.0, c = 0.0, T = 0.0;
  int d = 0;
};

inline double variance_no_exploration(const Vec& rho, const Vec& rho_hat,
                                      double x0, double l, double T) {
  if (rho.size() != rho_hat.size())
    throw DimensionMismatch("premium dimensions differ");
  const double q = rho.dot(rho_hat);
  if (!(q * T > 0.0))
    throw DegenerateScenario("rho'rho_hat T must be positive");
  const double em = std::expm1(q * T);
  return (x0 - l) * (x0 - l) * std::expm1(rho.squaredNorm() * T) / (em * em);
}

// Terminal variance under a misspecified premium, split into the
// exploration and classical summands. The exploration summand runs through
// expm1_over_x, so rho'rho == rho'rho_hat needs no special casing.
inline VarianceReport variance_with_exploration(const Vec& rho,
                                                const Vec& rho_hat, double x0,
                                                double l, double c, int d,
                                                double T) {
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  if (rho.size() != rho_hat.size())
    throw DimensionMismatch("premium dimensions differ");
  const double p = rho.squaredNorm();
  const double q = rho.dot(rho_hat);
  if (!(q * T > 0.0))
    throw DegenerateScenario("rho'rho_hat T must be positive");
  VarianceReport rep;
  rep.rho = rho;
  rep.rho_hat = rho_hat;
  rep.x0 = x0;
  rep.l = l;
  rep.c = c;
  rep.T = T;
  rep.d = d;
  const double em = std::expm1(q * T);
  rep.exploration_term =
      0.5 * c * d * T * expm1_over_x(2.0 * (p - q) * T);
  rep.classical_term = (x0 - l) * (x0 - l) * std::expm1(p * T) / (em * em);
  rep.variance = rep.exploration_term + rep.classical_term;
  rep.omega = l + (l - x0) / em;
  return rep;
}

namespace detail {

// d/dD of expm1(2DT)/(2D); the series band is wider than the value band
// because the direct form cancels catastrophically near D = 0.
inline double exploration_phi_prime(double dd, double T) {
  const double z = 2.0 * dd * T;
  if (std::abs(z) < 1e-5)
    return T * T * (1.0 + dd * T * (4.0 / 3.0 + dd * T));
  return T * std::exp(z) / dd - std::expm1(z) / (2.0 * dd * dd);
}

}  // namespace detail

// Analytic gradient of the misspecified terminal variance in rho. The
// classical part is factored so it vanishes exactly at rho == rho_hat.
inline Vec variance_gradient(const Vec& rho, const Vec& rho_hat, double x0,
                             double l, double c, int d, double T) {
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  if (rho.size() != rho_hat.size())
    throw DimensionMismatch("premium dimensions differ");
  const double p = rho.squaredNorm();
  const double q = rho.dot(rho_hat);
  if (!(q * T > 0.0))
    throw DegenerateScenario("rho'rho_hat T must be positive");
  const double dd = p - q;
  Vec grad =
      (0.5 * c * d * detail::exploration_phi_prime(dd, T)) *
      (2.0 * rho - rho_hat);
  const double emq = std::expm1(q * T);
  const double emp = std::expm1(p * T);
  grad += ((x0 - l) * (x0 - l) * 2.0 * T * std::exp(q * T) / (emq * emq)) *
          (std::exp(dd * T) * rho - (emp / emq) * rho_hat);
  return grad;
}

struct KStarResult {
  double k_star = 0.0;
  double residual = 0.0;  // gradient norm at k_star rho_hat
  int iterations = 0;
  std::pair<double, double> bracket{0.5, 1.0};
};

namespace detail {

// dVar/dk along rho = k rho_hat with n = |rho_hat|^2. Evaluated in
// extended precision: the classical bracket cancels catastrophically when
// k n T is small, and the acceptance bound on the gradient norm at k* sits
// below the double-precision noise floor of the direct form.
inline double kstar_derivative(double k, double n, double x0l2, double c,
                               double d, double T) {
  const long double kl = k, nl = n, Tl = T;
  const long double dd = kl * (kl - 1.0L) * nl;
  const long double z = 2.0L * dd * Tl;
  long double phip;
  if (std::abs(static_cast<double>(z)) < 1e-5)
    phip = Tl * Tl * (1.0L + dd * Tl * (4.0L / 3.0L + dd * Tl));
  else
    phip = Tl * std::exp(z) / dd - std::expm1(z) / (2.0L * dd * dd);
  const long double de = 0.5L * c * d * phip * (2.0L * kl - 1.0L) * nl;
  const long double a = kl * kl * nl * Tl;
  const long double b = kl * nl * Tl;
  const long double ema = std::expm1(a);
  const long double emb = std::expm1(b);
  const long double dc = 2.0L * nl * Tl * static_cast<long double>(x0l2) *
                         (kl * std::exp(a) * emb - std::exp(b) * ema) /
                         (emb * emb * emb);
  return static_cast<double>(de + dc);
}

}  // namespace detail

// Bisection for the variance minimizer on the half-open segment
// rho = k rho_hat, k in (1/2, 1). The derivative is exactly zero-free at
// the endpoints: the exploration part vanishes at k = 1/2 while the
// classical part is strictly negative there, and vice versa at k = 1.
inline KStarResult solve_kstar(const Vec& rho_hat, double x0, double l,
                               double c, double d, double T,
                               double tol = 1e-10) {
  const double n = rho_hat.squaredNorm();
  if (!(n > 0.0)) throw DegenerateScenario("rho_hat must be nonzero");
  if (!(c > 0.0)) throw InvalidIntensity("c must be positive");
  if (x0 == l) throw DegenerateScenario("x0 must differ from l");
  if (!(T > 0.0)) throw OutOfRange("T must be positive");
  if (!(tol > 0.0)) throw OutOfRange("tol must be positive");
  const double x0l2 = (x0 - l) * (x0 - l);
  const double scale = std::sqrt(n);
  auto deriv = [&](double k) {
    return detail::kstar_derivative(k, n, x0l2, c, d, T);
  };
  double a = 0.5, b = 1.0;
  if (!(deriv(a) < 0.0) || !(deriv(b) > 0.0))
    throw NoBracket("derivative does not change sign on [1/2, 1]");
  KStarResult res;
  double best_k = 0.5 * (a + b);
  double best_res = std::numeric_limits<double>::infinity();
  for (res.iterations = 0; res.iterations < 200; ++res.iterations) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;  // interval at machine precision
    const double dm = deriv(mid);
    const double r = std::abs(dm) / scale;
    if (r < best_res) {
      best_res = r;
      best_k = mid;
    }
    if (r <= tol) {
      res.k_star = mid;
      res.residual = r;
      res.bracket = {a, b};
      ++res.iterations;
      return res;
    }
    (dm < 0.0 ? a : b) = mid;
  }
  res.k_star = best_k;
  res.residual = best_res;
  res.bracket = {a, b};
  if (res.residual <= tol) return res;
  throw NonConvergence("k* residual " + num_str(res.residual) +
                       " above tolerance after " +
                       std::to_string(res.iterations) + " iterations");
}

enum class SurfaceMode { Exploration, Classical };

struct AxisSpec {
  double min = 0.0;
  double max = 1.0;
  int steps = 2;  // number of grid points along the axis
};

struct SurfaceGrid {
  std::vector<AxisSpec> axes;
  SurfaceMode mode = SurfaceMode::Exploration;
  Mat values;                       // axis0 rows x axis1 cols (1 col if 1-d)
  std::vector<std::uint8_t> flags;  // row-major; 1 = limit-form cell
  Vec rho_hat;
  double c = 0.0, T = 0.0, x0 = 0.0, l = 0.0;
  double k_star = std::numeric_limits<double>::quiet_NaN();
  Vec marker_rho_hat, marker_half, marker_kstar;
};

inline SurfaceGrid variance_surface(const std::vector<AxisSpec>& axes,
                                    const Vec& rho_hat, double x0, double l,
                                    double c, double T, SurfaceMode mode,
                                    long cell_cap = 1000000) {
  if (axes.empty() || axes.size() > 2)
    throw OutOfRange("surface needs 1 or 2 grid axes");
  if (static_cast<std::size_t>(rho_hat.size()) != axes.size())
    throw DimensionMismatch("rho_hat dimension must match the axis count");
  long cells = 1;
  for (const auto& ax : axes) {
    if (ax.steps < 2 || !(ax.max > ax.min))
      throw OutOfRange("axis needs max > min and at least 2 points");
    cells *= ax.steps;
  }
  if (cells > cell_cap) throw GridTooLarge(std::to_string(cells) + " cells");

  SurfaceGrid grid;
  grid.axes = axes;
  grid.mode = mode;
  grid.rho_hat = rho_hat;
  grid.c = c;
  grid.T = T;
  grid.x0 = x0;
  grid.l = l;
  const int rows = axes[0].steps;
  const int cols = axes.size() == 2 ? axes[1].steps : 1;
  grid.values.resize(rows, cols);
  grid.flags.assign(static_cast<std::size_t>(rows) * cols, 0);

  auto axis_value = [](const AxisSpec& ax, int i) {
    return ax.min + (ax.max - ax.min) * i / (ax.steps - 1);
  };
  const int d = static_cast<int>(rho_hat.size());
  Vec rho(d);
  for (int i = 0; i < rows; ++i) {
    rho[0] = axis_value(axes[0], i);
    for (int j = 0; j < cols; ++j) {
      if (axes.size() == 2) rho[1] = axis_value(axes[1], j);
      double value = std::numeric_limits<double>::quiet_NaN();
      bool limit_form = false;
      try {
        if (mode == SurfaceMode::Classical) {
          value = variance_no_exploration(rho, rho_hat, x0, l, T);
        } else {
          value =
              variance_with_exploration(rho, rho_hat, x0, l, c, d, T).variance;
        }
        const double p = rho.squaredNorm();
        const double q = rho.dot(rho_hat);
        limit_form = std::abs(p - q) < 1e-8 * std::max(1.0, q);
      } catch (const DegenerateScenario&) {
        limit_form = true;  // off-domain cell, flagged with NaN value
      }
      grid.values(i, j) = value;
      grid.flags[static_cast<std::size_t>(i) * cols + j] =
          limit_form ? 1 : 0;
    }
  }
  grid.marker_rho_hat = rho_hat;
  grid.marker_half = 0.5 * rho_hat;
  if (c > 0.0 && x0 != l) {
    try {
      grid.k_star = solve_kstar(rho_hat, x0, l, c, d, T).k_star;
      grid.marker_kstar = grid.k_star * rho_hat;
    } catch (const Error&) {
    }
  }
  return grid;
}

enum class ConvexityTarget { ExplorationTermOfRho, ClassicalTermOfK, G };

struct ConvexityReport {
  struct Violation {
    std::string check;
    double where = 0.0;
    double value = 0.0;
  };
  std::vector<Violation> violations;
  long cells = 0;

  bool pass() const { return violations.empty(); }
};

struct ConvexityOptions {
  int grid_points = 64;
  int rays = 50;
  std::uint64_t seed = 1234;
  Vec rho_hat;  // base premium for the variance targets
  double x0 = 1.0, l = 1.2, c = 1.5, T = 1.0;
};

namespace detail {

// Divided-difference convexity: consecutive secant slopes must increase.
template <typename F>
inline void check_slopes(F&& fn, const std::vector<double>& xs,
                         const std::string& name, ConvexityReport& rep) {
  double prev_slope = 0.0;
  bool have_prev = false;
  double prev_x = 0.0, prev_y = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double y = fn(xs[i]);
    if (i > 0) {
      const double slope = (y - prev_y) / (xs[i] - prev_x);
      if (have_prev && !(slope > prev_slope))
        rep.violations.push_back({name, xs[i], slope - prev_slope});
      prev_slope = slope;
      have_prev = true;
      ++rep.cells;
    }
    prev_x = xs[i];
    prev_y = y;
  }
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> xs(points);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < points; ++i)
    xs[i] = std::exp(a + (b - a) * i / (points - 1));
  return xs;
}

inline std::vector<double> uniform_grid(double lo, double hi, int points) {
  std::vector<double> xs(points);
  for (int i = 0; i < points; ++i)
    xs[i] = lo + (hi - lo) * i / (points - 1);
  return xs;
}

}  // namespace detail

inline ConvexityReport check_convexity(ConvexityTarget target,
                                       const ConvexityOptions& opt) {
  ConvexityReport rep;
  if (target == ConvexityTarget::G) {
    const auto xs = detail::log_grid(1.1e-3, 10.0, opt.grid_points);
    for (double x : xs) {
      const double gpp = appendix::g_second(x);
      ++rep.cells;
      if (!(gpp > 0.0)) rep.violations.push_back({"g''", x, gpp});
      const double hv = appendix::h(x);
      ++rep.cells;
      if (!(hv > 0.0)) rep.violations.push_back({"h", x, hv});
      const double h2v = appendix::h2(x);
      ++rep.cells;
      if (!(h2v > -0.5)) rep.violations.push_back({"h2", x, h2v});
    }
    detail::check_slopes([](double x) { return appendix::g(x); }, xs, "g",
                         rep);
    for (double t : detail::log_grid(1e-6, 19.0, opt.grid_points)) {
      const double y = 1.0 + t;
      const double xv = appendix::xi(y);
      ++rep.cells;
      if (!(xv > 0.0)) rep.violations.push_back({"xi", y, xv});
    }
    return rep;
  }

  const int d = static_cast<int>(opt.rho_hat.size());
  if (d == 0) throw DimensionMismatch("convexity options need rho_hat");
  if (target == ConvexityTarget::ExplorationTermOfRho) {
    const auto ss = detail::uniform_grid(-0.3, 0.3, opt.grid_points);
    for (int ray = 0; ray < opt.rays; ++ray) {
      CounterRng rng(opt.seed, Stream::SetSampling,
                     static_cast<std::uint64_t>(ray));
      Vec base(d), dir(d);
      for (int j = 0; j < d; ++j) {
        base[j] = 0.35 + 0.65 * rng.uniform(j);
        dir[j] = rng.normal(d + j);
      }
      if (dir.norm() == 0.0) dir.setConstant(1.0);
      dir.normalize();
      auto fn = [&](double s) {
        const Vec rho = base + s * dir;
        const double dd = rho.squaredNorm() - rho.dot(opt.rho_hat);
        return 0.5 * opt.c * d * opt.T * expm1_over_x(2.0 * dd * opt.T);
      };
      detail::check_slopes(fn, ss, "exploration_ray", rep);
    }
    return rep;
  }

  // ClassicalTermOfK: each ray draws its own premium direction and checks
  // the classical summand along rho = k rho_hat.
  const auto ks = detail::uniform_grid(0.1, 1.9, opt.grid_points);
  const double x0l2 = (opt.x0 - opt.l) * (opt.x0 - opt.l);
  if (!(x0l2 > 0.0)) throw DegenerateScenario("x0 must differ from l");
  for (int ray = 0; ray < opt.rays; ++ray) {
    CounterRng rng(opt.seed, Stream::SetSampling,
                   static_cast<std::uint64_t>(1000 + ray));
    Vec rh(d);
    for (int j = 0; j < d; ++j) rh[j] = 0.05 + 0.95 * rng.uniform(j);
    const double n = rh.squaredNorm();
    auto fn = [&](double k) {
      const double em = std::expm1(k * n * opt.T);
      return x0l2 * std::expm1(k * k * n * opt.T) / (em * em);
    };
    detail::check_slopes(fn, ks, "classical_k", rep);
  }
  return rep;
}

}  // namespace rexmv
