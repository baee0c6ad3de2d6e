#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rexmv/closed_form.hpp"
#include "rexmv/parallel.hpp"
#include "rexmv/rng.hpp"

namespace rexmv {

struct SimConfig {
  long m = 512;
  int n = 100;
  std::uint64_t seed = 0;
  bool record_paths = false;
  ScenarioPair scenario;
  MarketParams market;
  ProblemParams problem;
  double overflow_guard = 1e12;
  int threads = 1;
};

struct WealthEnsemble {
  Vec terminal;
  std::vector<std::uint8_t> overflowed;
  long overflow_count = 0;
  std::optional<Mat> paths;  // m x (n+1) when recorded
  std::uint64_t seed = 0;
  Stream control_stream = Stream::ControlMisspecified;
  SimConfig config;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double std_error_mean = 0.0;
  double std_error_variance = 0.0;
  long used = 0;
};

struct ComparisonReport {
  Moments misspecified;
  Moments robust;
  double variance_ratio = 0.0;  // robust / misspecified
  WealthEnsemble misspecified_ensemble;
  WealthEnsemble robust_ensemble;
};

enum class ControlLeg { Misspecified, Robust };

// v = mean + L z with L a PSD square-root factor; roundoff-scale negative
// eigenvalues are clamped, anything worse is a factorization error. A zero
// covariance returns the mean without consuming draws.
inline Vec sample_policy(const GaussianPolicy& policy, const CounterRng& rng,
                         std::uint64_t index0 = 0) {
  const auto d = policy.mean.size();
  if (policy.covariance.rows() != d || policy.covariance.cols() != d)
    throw DimensionMismatch("policy covariance must be d x d");
  if (policy.covariance.isZero(0.0)) return policy.mean;
  Eigen::SelfAdjointEigenSolver<Mat> es(policy.covariance);
  if (es.info() != Eigen::Success)
    throw FactorizationFailure("policy covariance eigensolve failed");
  Vec ev = es.eigenvalues();
  const double floor = -1e-12 * std::max(1.0, std::abs(ev.maxCoeff()));
  for (Eigen::Index i = 0; i < d; ++i) {
    if (ev[i] < floor)
      throw FactorizationFailure("policy covariance not positive semidefinite");
    ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
  }
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i)
    z[i] = rng.normal(index0 + static_cast<std::uint64_t>(i));
  return policy.mean +
         es.eigenvectors() * (ev.asDiagonal() * (es.eigenvectors().transpose() * z));
}

namespace detail {

inline const Vec& market_premium(const SimConfig& cfg) {
  if (cfg.scenario.rho_market.size() == 0) return cfg.market.rho_hat;
  if (cfg.scenario.rho_market.size() != cfg.market.rho_hat.size() ||
      !cfg.scenario.rho_market.cwiseEqual(cfg.market.rho_hat).all())
    throw DimensionMismatch(
        "scenario market premium must match the market rho_hat");
  return cfg.scenario.rho_market;
}

}  // namespace detail

// Algorithm: explicit Euler on X_{i+1} = X_i + v_i'sigma'(rho_hat dt + dW_i)
// with one policy draw per step per path. Draw indices are a pure function
// of (seed, purpose, path, step, component), so the ensemble is identical
// for every thread count. Paths breaching the overflow guard freeze at the
// last in-range value and are flagged.
inline WealthEnsemble simulate(const SimConfig& cfg, ControlLeg which) {
  if (cfg.m < 1) throw OutOfRange("need at least one path");
  if (cfg.n < 1) throw OutOfRange("need at least one step");
  if (!(cfg.overflow_guard > 0.0))
    throw OutOfRange("overflow guard must be positive");
  const ValidatedMarket vm = validate_market(cfg.market);
  const MarketParams& mkt = vm.params;
  const double c = cfg.problem.c;
  if (c < 0.0) throw InvalidIntensity("c must be nonnegative");
  if (cfg.scenario.rho_invest.size() == 0)
    throw DimensionMismatch("scenario needs an invest premium");
  const Vec& rho_hat = detail::market_premium(cfg);
  const Vec* used = &cfg.scenario.rho_invest;
  if (which == ControlLeg::Robust) {
    if (!cfg.scenario.rho_robust)
      throw InvalidSet("scenario lacks a robust premium");
    used = &*cfg.scenario.rho_robust;
  }
  const Vec& rho_used = *used;
  if (rho_used.size() != rho_hat.size())
    throw DimensionMismatch("premium dimensions differ");
  // The robust projection of a zero-lower-bound cube has zero components;
  // the control stays well defined as long as rho_used'rho_hat > 0.
  const bool positive = rho_used.minCoeff() > 0.0;
  if (which == ControlLeg::Misspecified ? !positive
                                        : !(rho_used.minCoeff() >= 0.0 &&
                                            rho_used.dot(rho_hat) > 0.0))
    throw DegenerateScenario("control premium must be positive");

  const int d = mkt.d;
  const double T = mkt.T;
  const double dt = T / cfg.n;
  const double sqrt_dt = std::sqrt(dt);
  const double omega = cfg.problem.has_omega()
                           ? cfg.problem.omega
                           : lagrange_multiplier(rho_used, rho_hat,
                                                 cfg.problem.x0,
                                                 cfg.problem.l, T);

  Eigen::FullPivLU<Mat> lu(mkt.sigma);
  if (!lu.isInvertible()) throw SingularVolatility("sigma is singular");
  const Vec sigma_inv_rho = lu.solve(rho_used);
  const Vec drift = mkt.sigma.transpose() * rho_hat;  // sigma' rho_hat
  const double p_used = rho_used.squaredNorm();

  // x-independent covariance factor: L_i = e^{p (T - t_i) / 2} L0.
  Mat l0;
  std::vector<double> step_scale(static_cast<std::size_t>(cfg.n), 0.0);
  if (c > 0.0) {
    const Mat gram_inv = (mkt.sigma.transpose() * mkt.sigma).inverse();
    l0 = sym_sqrt(0.5 * c * gram_inv, -1e-14);
    for (int i = 0; i < cfg.n; ++i)
      step_scale[static_cast<std::size_t>(i)] =
          std::exp(0.5 * p_used * (T - i * dt));
  }

  WealthEnsemble ens;
  ens.seed = cfg.seed;
  ens.control_stream = which == ControlLeg::Robust
                           ? Stream::ControlRobust
                           : Stream::ControlMisspecified;
  ens.config = cfg;
  ens.terminal.resize(cfg.m);
  ens.overflowed.assign(static_cast<std::size_t>(cfg.m), 0);
  if (cfg.record_paths) ens.paths.emplace(cfg.m, cfg.n + 1);

  parallel_for(cfg.m, cfg.threads, [&](long begin, long end) {
    Vec z(d), zc(d), v(d);
    for (long p = begin; p < end; ++p) {
      const CounterRng noise(cfg.seed, Stream::Noise,
                             static_cast<std::uint64_t>(p));
      const CounterRng control(cfg.seed, ens.control_stream,
                               static_cast<std::uint64_t>(p));
      double x = cfg.problem.x0;
      if (ens.paths) (*ens.paths)(p, 0) = x;
      bool frozen = false;
      for (int i = 0; i < cfg.n; ++i) {
        if (!frozen) {
          const std::uint64_t base =
              static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(d);
          v = sigma_inv_rho * (omega - x);
          if (c > 0.0) {
            for (int k = 0; k < d; ++k)
              zc[k] = control.normal(base + static_cast<std::uint64_t>(k));
            v += step_scale[static_cast<std::size_t>(i)] * (l0 * zc);
          }
          for (int k = 0; k < d; ++k)
            z[k] = noise.normal(base + static_cast<std::uint64_t>(k));
          const double next =
              x + v.dot(drift) * dt +
              sqrt_dt * v.dot(mkt.sigma.transpose() * z);
          if (std::abs(next) > cfg.overflow_guard || !std::isfinite(next)) {
            ens.overflowed[static_cast<std::size_t>(p)] = 1;
            frozen = true;
          } else {
            x = next;
          }
        }
        if (ens.paths) (*ens.paths)(p, i + 1) = x;
      }
      ens.terminal[p] = x;
    }
  });
  for (const auto f : ens.overflowed) ens.overflow_count += f;
  if (ens.overflow_count == cfg.m)
    throw NumericOverflow("every path breached the overflow guard");
  return ens;
}

inline Moments moments(const WealthEnsemble& ens) {
  Moments mo;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ens.terminal.size(); ++i) {
    if (ens.overflowed[static_cast<std::size_t>(i)]) continue;
    sum += ens.terminal[i];
    ++mo.used;
  }
  if (mo.used < 2) throw TooFewPaths("need at least two finite paths");
  mo.mean = sum / mo.used;
  double m2 = 0.0, m4 = 0.0;
  for (Eigen::Index i = 0; i < ens.terminal.size(); ++i) {
    if (ens.overflowed[static_cast<std::size_t>(i)]) continue;
    const double dev = ens.terminal[i] - mo.mean;
    m2 += dev * dev;
    m4 += dev * dev * dev * dev;
  }
  const double m = static_cast<double>(mo.used);
  mo.variance = m2 / (m - 1.0);
  mo.std_error_mean = std::sqrt(mo.variance / m);
  m4 /= m;
  const double var_of_var =
      (m4 - mo.variance * mo.variance * (m - 3.0) / (m - 1.0)) / m;
  mo.std_error_variance = std::sqrt(std::max(0.0, var_of_var));
  return mo;
}

// Both legs ride the identical Noise stream (common random numbers); the
// control draws come from leg-specific purposes unless shared_control is
// set for the identity diagnostic.
inline ComparisonReport paired_compare(const SimConfig& cfg,
                                       bool shared_control = false) {
  if (!cfg.scenario.rho_robust)
    throw InvalidSet("paired comparison needs a robust premium");
  ComparisonReport rep;
  rep.misspecified_ensemble = simulate(cfg, ControlLeg::Misspecified);
  if (shared_control) {
    SimConfig alt = cfg;
    alt.scenario.rho_invest = *cfg.scenario.rho_robust;
    rep.robust_ensemble = simulate(alt, ControlLeg::Misspecified);
  } else {
    rep.robust_ensemble = simulate(cfg, ControlLeg::Robust);
  }
  rep.misspecified = moments(rep.misspecified_ensemble);
  rep.robust = moments(rep.robust_ensemble);
  rep.variance_ratio = rep.robust.variance / rep.misspecified.variance;
  return rep;
}

}  // namespace rexmv
