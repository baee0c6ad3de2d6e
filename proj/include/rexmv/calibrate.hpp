#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rexmv/linalg.hpp"
#include "rexmv/parallel.hpp"
#include "rexmv/rng.hpp"

namespace rexmv {

struct PriceSeries {
  std::vector<std::int64_t> dates;  // days since epoch, strictly increasing
  std::vector<double> prices;       // discounted closes
  std::string symbol;
  int n_year = 252;
};

struct DataPool {
  std::vector<Vec> windows;   // each holds n+1 prices
  std::vector<long> offsets;  // window start index in the source series
  std::string split;          // train / valid / test
  Vec segment;                // the split's full price segment
  int n = 252;                // returns per window
};

struct Hyperparams {
  long m = 512;
  long K = 10000;
  double x0 = 1.0;
  double l = 1.2;
  double c = 0.001;
  double lr_a = 0.01;    // lr_k = lr_a e^{-lr_b k}
  double lr_b = 2.0e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<double> scalings{0.4, 0.6, 0.8, 1.0};
  double rho_max = 10.0;
  double loss_guard = 1e6;
  double rho_init = 0.5;
  double T = 1.0;
  int threads = 1;
  int backtest_reps = 8;
};

struct CalibrationResult {
  double rho = 0.0;
  double omega = 0.0;
  double sigma_train = 0.0;
  double sigma_valid = 0.0;
  std::vector<double> loss_history;
  std::uint64_t seed = 0;
  Hyperparams hp;
};

struct PerformanceRow {
  double R = 0.0;
  double rho_star = 0.0;
  double test_loss = 0.0;
  double test_mean = 0.0;
  double test_variance = 0.0;
};

struct PerformanceReport {
  std::vector<PerformanceRow> rows;
  std::uint64_t seed = 0;
  int reps = 0;
};

namespace detail {

inline std::int64_t parse_iso_date(const std::string& text, long line) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw ParseError("line " + std::to_string(line) + ": bad date '" + text +
                     "'");
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i == 4 || i == 7) continue;
    if (text[i] < '0' || text[i] > '9')
      throw ParseError("line " + std::to_string(line) + ": bad date '" +
                       text + "'");
  }
  const int y = std::stoi(text.substr(0, 4));
  const unsigned mo = static_cast<unsigned>(std::stoi(text.substr(5, 2)));
  const unsigned da = static_cast<unsigned>(std::stoi(text.substr(8, 2)));
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{mo},
                                        std::chrono::day{da}};
  if (!ymd.ok())
    throw ParseError("line " + std::to_string(line) + ": invalid date '" +
                     text + "'");
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

}  // namespace detail

// Two-column `date,close` text with a header row; closes are discounted by
// e^{-r t} with t the ACT/365 year fraction from the first date.
inline PriceSeries load_prices(const std::string& path, double r = 0.02,
                               int n_year = 252, std::string symbol = "") {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  PriceSeries s;
  s.symbol = symbol.empty() ? path : std::move(symbol);
  s.n_year = n_year;
  std::string row;
  long line = 0;
  while (std::getline(in, row)) {
    ++line;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    if (line == 1) {
      if (row.find("date") == std::string::npos)
        throw ParseError("line 1: header row 'date,close' required");
      continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string::npos)
      throw ParseError("line " + std::to_string(line) + ": expected 2 fields");
    const std::int64_t day = detail::parse_iso_date(row.substr(0, comma), line);
    double close = 0.0;
    try {
      std::size_t used = 0;
      close = std::stod(row.substr(comma + 1), &used);
      if (used == 0) throw std::invalid_argument("empty");
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line) + ": bad price field");
    }
    if (!(close > 0.0))
      throw NonPositivePrice("line " + std::to_string(line) + ": price " +
                             num_str(close));
    if (!s.dates.empty() && day <= s.dates.back())
      throw UnsortedDates("line " + std::to_string(line) +
                          ": dates must strictly increase");
    s.dates.push_back(day);
    s.prices.push_back(close);
  }
  if (s.prices.empty()) throw ParseError("no data rows in " + path);
  const std::int64_t day0 = s.dates.front();
  for (std::size_t i = 0; i < s.prices.size(); ++i)
    s.prices[i] *= std::exp(-r * static_cast<double>(s.dates[i] - day0) / 365.0);
  return s;
}

// sqrt(n) * sample std of log returns, averaged over rolling windows.
inline double historical_vol_prices(const std::vector<double>& prices, int n,
                                    int stride = 21) {
  if (n < 2) throw OutOfRange("window must contain at least 2 returns");
  if (stride < 1) throw OutOfRange("stride must be positive");
  const long len = static_cast<long>(prices.size());
  if (len < n + 1) throw WindowTooLarge("window exceeds the series");
  double acc = 0.0;
  long count = 0;
  for (long start = 0; start + n < len; start += stride) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i)
      mean += std::log(prices[static_cast<std::size_t>(start + i + 1)] /
                       prices[static_cast<std::size_t>(start + i)]);
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dev =
          std::log(prices[static_cast<std::size_t>(start + i + 1)] /
                   prices[static_cast<std::size_t>(start + i)]) -
          mean;
      ss += dev * dev;
    }
    acc += std::sqrt(static_cast<double>(n) * ss / (n - 1));
    ++count;
  }
  return acc / static_cast<double>(count);
}

inline double historical_vol(const PriceSeries& series, int n,
                             int stride = 21) {
  return historical_vol_prices(series.prices, n, stride);
}

struct PoolSet {
  DataPool train, valid, test;
};

// Consecutive year blocks sharing boundary prices; windows of n+1 prices
// slide with stride 1 and never cross a split edge.
inline PoolSet build_pool(const PriceSeries& series, int years_train = 7,
                          int years_valid = 3, int years_test = 3,
                          int n = 252) {
  if (years_train < 1 || years_valid < 1 || years_test < 1 || n < 1)
    throw OutOfRange("split years and window must be positive");
  const long need =
      static_cast<long>(years_train + years_valid + years_test) * n + 1;
  if (static_cast<long>(series.prices.size()) < need)
    throw InsufficientData("need " + std::to_string(need) + " prices, have " +
                           std::to_string(series.prices.size()));
  PoolSet set;
  long edge = 0;
  const std::array<std::pair<DataPool*, int>, 3> splits{
      {{&set.train, years_train}, {&set.valid, years_valid},
       {&set.test, years_test}}};
  const std::array<const char*, 3> tags{"train", "valid", "test"};
  for (std::size_t si = 0; si < splits.size(); ++si) {
    DataPool& pool = *splits[si].first;
    const long span = static_cast<long>(splits[si].second) * n;
    pool.split = tags[si];
    pool.n = n;
    pool.segment.resize(span + 1);
    for (long i = 0; i <= span; ++i)
      pool.segment[i] = series.prices[static_cast<std::size_t>(edge + i)];
    for (long start = 0; start + n <= span; ++start) {
      Vec w(n + 1);
      for (int i = 0; i <= n; ++i)
        w[i] = series.prices[static_cast<std::size_t>(edge + start + i)];
      pool.windows.push_back(std::move(w));
      pool.offsets.push_back(edge + start);
    }
    edge += span;
  }
  return set;
}

// Entropy-rate penalty of the exploratory policy, time-weighted over the
// window: -(c/2) sum_i dt ln(2 pi e Var(v_i)) with
// Var(v_i) = (c/2) e^{rho^2 (T - t_i)} / sigma^2. Increasing in sigma,
// decreasing in rho^2; zero at rho = 0, sigma^2 = pi e c.
inline double explore_loss(double sigma_hat, double rho, double c, int n,
                           double T) {
  if (!(c > 0.0)) throw InvalidIntensity("c must be positive");
  if (!(sigma_hat > 0.0)) throw OutOfRange("sigma_hat must be positive");
  if (n < 1 || !(T > 0.0)) throw OutOfRange("n and T must be positive");
  const double dt = T / n;
  const double base = std::log(std::numbers::pi * std::numbers::e * c /
                               (sigma_hat * sigma_hat));
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    sum += base + rho * rho * (T - i * dt);
  return -0.5 * c * dt * sum;
}

inline double explore_loss_grad_rho(double rho, double c, int n, double T) {
  return -0.5 * c * rho * T * T * (n + 1.0) / n;
}

namespace detail {

struct BatchAccum {
  double loss_sum = 0.0;   // sum of (X_n - omega)^2
  double grad_sum = 0.0;   // sum of 2 (X_n - omega) dX_n
  double mean_sum = 0.0;   // sum of X_n
};

// One wealth path on a price window under the d=1 exploratory policy,
// carrying dX/drho through the recursion (omega held constant).
inline void roll_window(const Vec& window, double rho, double omega,
                        double sigma_hat, double x0,
                        const std::vector<double>& scale,
                        const std::vector<double>& dscale,
                        const CounterRng& control, double& xn, double& dxn) {
  const int n = static_cast<int>(window.size()) - 1;
  double x = x0, dx = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = control.normal(static_cast<std::uint64_t>(i));
    const double ret = window[i + 1] / window[i] - 1.0;
    const double v = rho * (omega - x) / sigma_hat +
                     scale[static_cast<std::size_t>(i)] * z;
    const double dv = (omega - x) / sigma_hat - rho / sigma_hat * dx +
                      z * dscale[static_cast<std::size_t>(i)];
    x += v * ret;
    dx += dv * ret;
  }
  xn = x;
  dxn = dx;
}

inline void policy_scales(double rho, double sigma_hat, double c, int n,
                          double T, std::vector<double>& scale,
                          std::vector<double>& dscale) {
  scale.resize(static_cast<std::size_t>(n));
  dscale.resize(static_cast<std::size_t>(n));
  const double coef = std::sqrt(0.5 * c) / sigma_hat;
  const double dt = T / n;
  for (int i = 0; i < n; ++i) {
    const double tau = T - i * dt;
    scale[static_cast<std::size_t>(i)] =
        coef * std::exp(0.5 * rho * rho * tau);
    dscale[static_cast<std::size_t>(i)] =
        scale[static_cast<std::size_t>(i)] * rho * tau;
  }
}

}  // namespace detail

// Stochastic-gradient training of (rho, omega): per step, batch elements
// draw independent windows and control noise, the pathwise gradient in rho
// flows through both the policy mean and its exploration scale, rho takes
// an Adam step and omega the displayed mean-matching step. lr is updated
// recursively so lr_k / lr_{k-1} is e^{-lr_b} to the last bit.
inline CalibrationResult calibrate(const DataPool& train_pool,
                                   double sigma_train, const Hyperparams& hp,
                                   std::uint64_t seed) {
  if (train_pool.windows.empty()) throw InsufficientData("empty train pool");
  if (!(sigma_train > 0.0)) throw OutOfRange("sigma_train must be positive");
  if (hp.m < 1 || hp.K < 0) throw OutOfRange("batch and steps must be valid");
  const int n = train_pool.n;
  const long W = static_cast<long>(train_pool.windows.size());

  CalibrationResult res;
  res.hp = hp;
  res.seed = seed;
  res.sigma_train = sigma_train;
  res.sigma_valid = std::numeric_limits<double>::quiet_NaN();
  double rho = hp.rho_init;
  double omega = hp.l + 0.5 * std::abs(hp.l - hp.x0);
  double lr = hp.lr_a;
  const double lr_decay = std::exp(-hp.lr_b);
  double adam_m = 0.0, adam_v = 0.0;
  res.loss_history.reserve(static_cast<std::size_t>(hp.K));

  std::vector<double> scale, dscale;
  std::vector<double> xn(static_cast<std::size_t>(hp.m));
  std::vector<double> dxn(static_cast<std::size_t>(hp.m));
  const double explore_base = explore_loss(sigma_train, 0.0, hp.c, n, hp.T);
  const double quad_coef = 0.25 * hp.c * hp.T * hp.T * (n + 1.0) / n;

  for (long k = 0; k < hp.K; ++k) {
    detail::policy_scales(rho, sigma_train, hp.c, n, hp.T, scale, dscale);
    const CounterRng pick(seed, Stream::CalibBatch,
                          static_cast<std::uint64_t>(k));
    const double rho_k = rho, omega_k = omega;
    parallel_for(hp.m, hp.threads, [&](long begin, long end) {
      for (long j = begin; j < end; ++j) {
        long w = static_cast<long>(pick.uniform(static_cast<std::uint64_t>(j)) *
                                   static_cast<double>(W));
        if (w >= W) w = W - 1;
        const CounterRng control(
            seed, Stream::CalibControl,
            static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(hp.m) +
                static_cast<std::uint64_t>(j));
        detail::roll_window(train_pool.windows[static_cast<std::size_t>(w)],
                            rho_k, omega_k, sigma_train, hp.x0, scale, dscale,
                            control, xn[static_cast<std::size_t>(j)],
                            dxn[static_cast<std::size_t>(j)]);
      }
    });
    detail::BatchAccum acc;
    for (long j = 0; j < hp.m; ++j) {
      const double dev = xn[static_cast<std::size_t>(j)] - omega;
      acc.loss_sum += dev * dev;
      acc.grad_sum += 2.0 * dev * dxn[static_cast<std::size_t>(j)];
      acc.mean_sum += xn[static_cast<std::size_t>(j)];
    }
    const double inv_m = 1.0 / static_cast<double>(hp.m);
    const double loss = acc.loss_sum * inv_m -
                        (omega - hp.l) * (omega - hp.l) + explore_base -
                        quad_coef * rho * rho;
    const double grad =
        acc.grad_sum * inv_m + explore_loss_grad_rho(rho, hp.c, n, hp.T);
    if (!std::isfinite(loss) || !std::isfinite(grad))
      throw NonFinite("non-finite loss or gradient at step " +
                      std::to_string(k));
    res.loss_history.push_back(loss);
    if (loss > hp.loss_guard)
      throw Divergence("loss guard exceeded at step " + std::to_string(k));

    adam_m = hp.adam_beta1 * adam_m + (1.0 - hp.adam_beta1) * grad;
    adam_v = hp.adam_beta2 * adam_v + (1.0 - hp.adam_beta2) * grad * grad;
    const double t = static_cast<double>(k + 1);
    const double m_hat = adam_m / (1.0 - std::pow(hp.adam_beta1, t));
    const double v_hat = adam_v / (1.0 - std::pow(hp.adam_beta2, t));
    rho -= lr * m_hat / (std::sqrt(v_hat) + hp.adam_eps);
    omega -= lr * (acc.mean_sum * inv_m - hp.l);
    lr *= lr_decay;
    if (!(rho > 0.0) || rho > hp.rho_max)
      throw Divergence("rho left (0, rho_max] at step " + std::to_string(k));
    if (!std::isfinite(omega))
      throw NonFinite("non-finite omega at step " + std::to_string(k));
  }
  res.rho = rho;
  res.omega = omega;
  return res;
}

struct GradientProbe {
  double pathwise = 0.0;
  double finite_difference = 0.0;
};

// Cross-check of the pathwise batch gradient against central differences
// with frozen windows and noise.
inline GradientProbe calibration_grad_check(const DataPool& pool,
                                            double sigma_hat,
                                            const Hyperparams& hp,
                                            std::uint64_t seed, double rho,
                                            double omega, double h = 1e-6) {
  if (pool.windows.empty()) throw InsufficientData("empty pool");
  const int n = pool.n;
  const long W = static_cast<long>(pool.windows.size());
  const CounterRng pick(seed, Stream::CalibBatch, 0);
  std::vector<double> scale, dscale;
  auto batch = [&](double r, bool want_grad, double& grad_out) {
    detail::policy_scales(r, sigma_hat, hp.c, n, hp.T, scale, dscale);
    double loss = 0.0, grad = 0.0;
    for (long j = 0; j < hp.m; ++j) {
      long w = static_cast<long>(pick.uniform(static_cast<std::uint64_t>(j)) *
                                 static_cast<double>(W));
      if (w >= W) w = W - 1;
      const CounterRng control(seed, Stream::CalibControl,
                               static_cast<std::uint64_t>(j));
      double x = 0.0, dx = 0.0;
      detail::roll_window(pool.windows[static_cast<std::size_t>(w)], r, omega,
                          sigma_hat, hp.x0, scale, dscale, control, x, dx);
      loss += (x - omega) * (x - omega);
      grad += 2.0 * (x - omega) * dx;
    }
    loss = loss / hp.m - (omega - hp.l) * (omega - hp.l) +
           explore_loss(sigma_hat, r, hp.c, n, hp.T);
    if (want_grad)
      grad_out = grad / hp.m + explore_loss_grad_rho(r, hp.c, n, hp.T);
    return loss;
  };
  GradientProbe probe;
  batch(rho, true, probe.pathwise);
  double unused = 0.0;
  probe.finite_difference =
      (batch(rho + h, false, unused) - batch(rho - h, false, unused)) /
      (2.0 * h);
  return probe;
}

// Replays the scaled policies on every test window with common random
// numbers across scalings: the control stream depends on (window, rep)
// only. Terminal statistics aggregate over windows and reps.
inline PerformanceReport backtest(const CalibrationResult& result,
                                  const DataPool& test_pool,
                                  double sigma_valid,
                                  const std::vector<double>& scalings,
                                  std::uint64_t seed) {
  if (test_pool.windows.empty()) throw InsufficientData("empty test pool");
  if (!(sigma_valid > 0.0)) throw OutOfRange("sigma_valid must be positive");
  if (scalings.empty()) throw OutOfRange("need at least one scaling");
  if (!std::isfinite(result.rho) || !std::isfinite(result.omega))
    throw NonFinite("calibration result is not finite");
  const Hyperparams& hp = result.hp;
  const int n = test_pool.n;
  const long W = static_cast<long>(test_pool.windows.size());
  const long reps = std::max(1, hp.backtest_reps);
  const long total = W * reps;

  PerformanceReport rep;
  rep.seed = seed;
  rep.reps = static_cast<int>(reps);
  std::vector<double> terminal(static_cast<std::size_t>(total));
  std::vector<double> scale, dscale;
  for (const double R : scalings) {
    const double rho_star = R * result.rho;
    detail::policy_scales(rho_star, sigma_valid, hp.c, n, hp.T, scale, dscale);
    parallel_for(total, hp.threads, [&](long begin, long end) {
      for (long idx = begin; idx < end; ++idx) {
        const long w = idx / reps;
        const CounterRng control(seed, Stream::BacktestControl,
                                 static_cast<std::uint64_t>(idx));
        const Vec& window = test_pool.windows[static_cast<std::size_t>(w)];
        double x = hp.x0;
        for (int i = 0; i < n; ++i) {
          const double z = control.normal(static_cast<std::uint64_t>(i));
          const double ret = window[i + 1] / window[i] - 1.0;
          const double v = rho_star * (result.omega - x) / sigma_valid +
                           scale[static_cast<std::size_t>(i)] * z;
          x += v * ret;
        }
        terminal[static_cast<std::size_t>(idx)] = x;
      }
    });
    double mean = 0.0;
    for (const double x : terminal) mean += x;
    mean /= static_cast<double>(total);
    double ss = 0.0, loss_sum = 0.0;
    for (const double x : terminal) {
      ss += (x - mean) * (x - mean);
      loss_sum += (x - result.omega) * (x - result.omega);
    }
    PerformanceRow row;
    row.R = R;
    row.rho_star = rho_star;
    row.test_mean = mean;
    row.test_variance = total > 1 ? ss / static_cast<double>(total - 1) : 0.0;
    row.test_loss = loss_sum / static_cast<double>(total) -
                    (result.omega - hp.l) * (result.omega - hp.l) +
                    explore_loss(sigma_valid, rho_star, hp.c, n, hp.T);
    rep.rows.push_back(row);
  }
  return rep;
}

// Synthetic geometric Brownian data with constant premium rho: the
// discounted log price steps by (rho sigma - sigma^2/2) dt + sigma dW at
// dt = 1/n_year. Returned prices are discounted; undiscount with rate r
// before writing files meant for load_prices.
inline PriceSeries synth_gbm_series(std::uint64_t seed, int days, int n_year,
                                    double rho, double sigma,
                                    double s0 = 100.0,
                                    std::uint64_t path = 0) {
  if (days < 1 || n_year < 1) throw OutOfRange("days and n_year positive");
  PriceSeries s;
  s.symbol = "synthetic";
  s.n_year = n_year;
  const CounterRng rng(seed, Stream::DataSynthesis, path);
  const double dt = 1.0 / n_year;
  const double drift = (rho * sigma - 0.5 * sigma * sigma) * dt;
  const double step_vol = sigma * std::sqrt(dt);
  double logp = std::log(s0);
  const std::int64_t day0 = 10957;  // 2000-01-01
  for (int i = 0; i < days; ++i) {
    s.dates.push_back(day0 + i);
    s.prices.push_back(std::exp(logp));
    logp += drift + step_vol * rng.normal(static_cast<std::uint64_t>(i));
  }
  return s;
}

// Pool of mutually independent GBM windows, for recovery tests that need
// more effective sample than one overlapping series provides.
inline DataPool synth_independent_pool(std::uint64_t seed, long count, int n,
                                       double rho, double sigma,
                                       double s0 = 100.0) {
  if (count < 1) throw OutOfRange("count must be positive");
  DataPool pool;
  pool.split = "train";
  pool.n = n;
  const double dt = 1.0 / n;
  const double drift = (rho * sigma - 0.5 * sigma * sigma) * dt;
  const double step_vol = sigma * std::sqrt(dt);
  for (long w = 0; w < count; ++w) {
    const CounterRng rng(seed, Stream::DataSynthesis,
                         static_cast<std::uint64_t>(w));
    Vec window(n + 1);
    double logp = std::log(s0);
    for (int i = 0; i <= n; ++i) {
      window[i] = std::exp(logp);
      logp += drift + step_vol * rng.normal(static_cast<std::uint64_t>(i));
    }
    pool.windows.push_back(std::move(window));
    pool.offsets.push_back(w);
  }
  pool.segment = pool.windows.front();
  return pool;
}

}  // namespace rexmv
