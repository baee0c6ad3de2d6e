#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "rexmv/calibrate.hpp"
#include "support/test_util.hpp"

using namespace rexmv;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using rexmv_test::write_series_csv;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

double pool_vol(const DataPool& pool) {
  double acc = 0.0;
  for (const Vec& w : pool.windows) {
    std::vector<double> prices(w.data(), w.data() + w.size());
    acc += historical_vol_prices(prices, static_cast<int>(w.size()) - 1);
  }
  return acc / static_cast<double>(pool.windows.size());
}

DataPool constant_pool(int copies, int n, double price) {
  DataPool pool;
  pool.split = "test";
  pool.n = n;
  for (int i = 0; i < copies; ++i) {
    pool.windows.push_back(Vec::Constant(n + 1, price));
    pool.offsets.push_back(i);
  }
  pool.segment = pool.windows.front();
  return pool;
}

}  // namespace

TEST_CASE("load_prices parses, validates and discounts") {
  SECTION("round trip through an undiscounted csv") {
    const PriceSeries series = synth_gbm_series(11, 40, 252, 0.3, 0.25);
    const std::string path = tmp_path("rexmv_roundtrip.csv");
    write_series_csv(path, series);
    const PriceSeries loaded = load_prices(path);
    REQUIRE(loaded.prices.size() == series.prices.size());
    CHECK(loaded.dates == series.dates);
    for (std::size_t i = 0; i < series.prices.size(); ++i)
      CHECK(loaded.prices[i] == Approx(series.prices[i]).epsilon(1e-12));
  }
  SECTION("discounting uses ACT/365 from the first date") {
    const std::string path = tmp_path("rexmv_discount.csv");
    write_text(path, "date,close\n2020-01-01,100\n2020-12-31,100\n");
    const PriceSeries s = load_prices(path);
    CHECK(s.prices[0] == 100.0);
    CHECK(s.prices[1] == Approx(100.0 * std::exp(-0.02)).epsilon(1e-14));
  }
  SECTION("CRLF endings and blank lines are tolerated") {
    const std::string path = tmp_path("rexmv_crlf.csv");
    write_text(path, "date,close\r\n2020-01-01,100\r\n\r\n2020-01-02,101\r\n");
    const PriceSeries s = load_prices(path);
    REQUIRE(s.prices.size() == 2);
    CHECK(s.prices[1] ==
          Approx(101.0 * std::exp(-0.02 / 365.0)).epsilon(1e-14));
  }
  SECTION("failures carry the offending line") {
    const std::string path = tmp_path("rexmv_bad.csv");
    CHECK_THROWS_AS(load_prices(tmp_path("rexmv_nope.csv")), ParseError);
    write_text(path, "time,close\n2020-01-01,100\n");
    CHECK_THROWS_WITH(load_prices(path), ContainsSubstring("header"));
    write_text(path, "date,close\n2020-01-01,100\njunk row\n");
    CHECK_THROWS_WITH(load_prices(path), ContainsSubstring("line 3"));
    write_text(path, "date,close\n2020-13-01,100\n");
    CHECK_THROWS_AS(load_prices(path), ParseError);
    write_text(path, "date,close\n2020-02-30,100\n");
    CHECK_THROWS_AS(load_prices(path), ParseError);
    write_text(path, "date,close\n2020-01-01,abc\n");
    CHECK_THROWS_WITH(load_prices(path), ContainsSubstring("price field"));
    write_text(path, "date,close\n2020-01-01,100\n2020-01-02,0\n");
    CHECK_THROWS_AS(load_prices(path), NonPositivePrice);
    write_text(path, "date,close\n2020-01-02,100\n2020-01-02,101\n");
    CHECK_THROWS_AS(load_prices(path), UnsortedDates);
    write_text(path, "date,close\n");
    CHECK_THROWS_AS(load_prices(path), ParseError);
  }
}

TEST_CASE("historical volatility estimator") {
  SECTION("constant prices have zero volatility") {
    const std::vector<double> flat(300, 42.0);
    CHECK(historical_vol_prices(flat, 252) == 0.0);
  }
  SECTION("alternating signed log returns, one exact window") {
    // returns +a,-a,+a,-a: mean 0, sample std a*sqrt(4/3), scaled by sqrt(4)
    const double a = std::log(1.01);
    const std::vector<double> alt{100.0, 100.0 * std::exp(a), 100.0,
                                  100.0 * std::exp(a), 100.0};
    CHECK(historical_vol_prices(alt, 4) ==
          Approx(4.0 * a / std::sqrt(3.0)).epsilon(1e-14));
  }
  SECTION("annualized GBM volatility is recovered") {
    const PriceSeries s = synth_gbm_series(7, 1261, 252, 0.4, 0.3);
    const double vol = historical_vol(s, 252);
    CHECK(vol > 0.285);
    CHECK(vol < 0.315);
  }
  SECTION("window and stride validation") {
    const std::vector<double> five{1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK_THROWS_AS(historical_vol_prices(five, 252), WindowTooLarge);
    CHECK_THROWS_AS(historical_vol_prices(five, 1), OutOfRange);
    CHECK_THROWS_AS(historical_vol_prices(five, 4, 0), OutOfRange);
  }
}

TEST_CASE("build_pool splits a series without crossing edges") {
  const PriceSeries series = synth_gbm_series(3, 3277, 252, 0.4, 0.2);
  const PoolSet set = build_pool(series);
  SECTION("window counts and tags at the 7/3/3 default") {
    CHECK(set.train.windows.size() == 1513);
    CHECK(set.valid.windows.size() == 505);
    CHECK(set.test.windows.size() == 505);
    CHECK(set.train.split == "train");
    CHECK(set.valid.split == "valid");
    CHECK(set.test.split == "test");
    for (const Vec& w : set.train.windows) REQUIRE(w.size() == 253);
  }
  SECTION("segments share boundary prices") {
    REQUIRE(set.train.segment.size() == 7 * 252 + 1);
    REQUIRE(set.valid.segment.size() == 3 * 252 + 1);
    CHECK(set.train.segment[7 * 252] == set.valid.segment[0]);
    CHECK(set.valid.segment[3 * 252] == set.test.segment[0]);
    CHECK(set.train.segment[0] == series.prices[0]);
  }
  SECTION("no window crosses a split edge") {
    CHECK(set.train.offsets.front() == 0);
    CHECK(set.train.offsets.back() == 7 * 252 - 252);
    CHECK(set.valid.offsets.front() == 7 * 252);
    CHECK(set.valid.offsets.back() == 10 * 252 - 252);
    CHECK(set.test.offsets.front() == 10 * 252);
    CHECK(set.test.offsets.back() == 13 * 252 - 252);
    for (std::size_t i = 0; i < set.valid.windows.size(); ++i) {
      const long off = set.valid.offsets[i];
      CHECK(set.valid.windows[i][0] ==
            series.prices[static_cast<std::size_t>(off)]);
    }
  }
  SECTION("a two-year split yields n+1 windows") {
    const PriceSeries four = synth_gbm_series(3, 4 * 252 + 1, 252, 0.4, 0.2);
    const PoolSet small = build_pool(four, 2, 1, 1);
    CHECK(small.train.windows.size() == 253);
    CHECK(small.valid.windows.size() == 1);
    CHECK(small.test.windows.size() == 1);
  }
  SECTION("insufficient data names the shortfall") {
    const PriceSeries short_series =
        synth_gbm_series(3, 3276, 252, 0.4, 0.2);
    CHECK_THROWS_WITH(build_pool(short_series),
                      ContainsSubstring("need 3277 prices, have 3276"));
    CHECK_THROWS_AS(build_pool(series, 0, 3, 3), OutOfRange);
  }
}

TEST_CASE("explore_loss closed form, monotonicity and gradient") {
  const double c = 0.001;
  const int n = 252;
  const double T = 1.0;
  SECTION("zero when the policy entropy rate vanishes at rho=0") {
    const double sig = std::sqrt(std::numbers::pi * std::numbers::e * c);
    CHECK(explore_loss(sig, 0.0, c, n, T) == Approx(0.0).margin(1e-15));
  }
  SECTION("matches an independent summation") {
    const double sig = 0.2, rho = 0.1;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double tau = T - i * T / n;
      sum += -0.5 * c * (T / n) *
             std::log(std::numbers::pi * std::numbers::e * c *
                      std::exp(rho * rho * tau) / (sig * sig));
    }
    CHECK(explore_loss(sig, rho, c, n, T) == Approx(sum).epsilon(1e-12));
  }
  SECTION("matches the aggregated closed form") {
    const double sig = 0.35, rho = 0.8;
    const double expected =
        -0.5 * c * T *
            std::log(std::numbers::pi * std::numbers::e * c / (sig * sig)) -
        0.25 * c * rho * rho * T * T * (n + 1.0) / n;
    CHECK(explore_loss(sig, rho, c, n, T) == Approx(expected).epsilon(1e-13));
  }
  SECTION("increasing in sigma, decreasing in rho") {
    double prev = explore_loss(0.05, 0.5, c, n, T);
    for (double sig : {0.1, 0.2, 0.4, 0.8, 1.6}) {
      const double cur = explore_loss(sig, 0.5, c, n, T);
      CHECK(cur > prev);
      prev = cur;
    }
    prev = explore_loss(0.2, 0.0, c, n, T);
    for (double rho : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      const double cur = explore_loss(0.2, rho, c, n, T);
      CHECK(cur < prev);
      prev = cur;
    }
  }
  SECTION("rho gradient agrees with central differences") {
    const double rho = 0.7, h = 1e-6;
    const double fd =
        (explore_loss(0.2, rho + h, c, n, T) -
         explore_loss(0.2, rho - h, c, n, T)) /
        (2.0 * h);
    CHECK(explore_loss_grad_rho(rho, c, n, T) == Approx(fd).epsilon(1e-8));
    CHECK(explore_loss_grad_rho(rho, c, n, T) ==
          Approx(-0.5 * c * rho * T * T * (n + 1.0) / n).epsilon(1e-15));
  }
  SECTION("domain validation") {
    CHECK_THROWS_AS(explore_loss(0.2, 0.5, 0.0, n, T), InvalidIntensity);
    CHECK_THROWS_AS(explore_loss(0.0, 0.5, c, n, T), OutOfRange);
    CHECK_THROWS_AS(explore_loss(0.2, 0.5, c, 0, T), OutOfRange);
    CHECK_THROWS_AS(explore_loss(0.2, 0.5, c, n, 0.0), OutOfRange);
  }
}

TEST_CASE("calibrate echoes the initialization at K=0") {
  const DataPool pool = synth_independent_pool(101, 20, 252, 0.4, 0.2);
  Hyperparams hp;
  hp.K = 0;
  const CalibrationResult res = calibrate(pool, 0.2, hp, 5);
  CHECK(res.rho == 0.5);
  CHECK(res.omega == 1.2 + 0.5 * std::abs(1.2 - 1.0));
  CHECK(res.loss_history.empty());
  CHECK(res.sigma_train == 0.2);
  CHECK(res.seed == 5);
}

TEST_CASE("calibrate is deterministic under seed and thread count") {
  const DataPool pool = synth_independent_pool(101, 20, 252, 0.4, 0.2);
  Hyperparams hp;
  hp.K = 25;
  hp.m = 32;
  const CalibrationResult a = calibrate(pool, 0.2, hp, 5);
  const CalibrationResult b = calibrate(pool, 0.2, hp, 5);
  REQUIRE(a.loss_history.size() == 25);
  CHECK(a.rho == b.rho);
  CHECK(a.omega == b.omega);
  CHECK(a.loss_history == b.loss_history);
  Hyperparams threaded = hp;
  threaded.threads = 3;
  const CalibrationResult c = calibrate(pool, 0.2, threaded, 5);
  CHECK(a.rho == c.rho);
  CHECK(a.omega == c.omega);
  CHECK(a.loss_history == c.loss_history);
  const CalibrationResult d = calibrate(pool, 0.2, hp, 6);
  CHECK(a.loss_history != d.loss_history);
}

TEST_CASE("calibrate follows the displayed updates on riskless data") {
  // ret == 0 kills both drift and exploration noise: X_n == x0 on every
  // path, so the loss and the omega trajectory are exact arithmetic.
  const DataPool pool = constant_pool(3, 252, 100.0);
  const double sig = 0.2;
  Hyperparams hp;
  hp.m = 8;
  hp.K = 1;
  const CalibrationResult one = calibrate(pool, sig, hp, 9);
  const double expected_loss =
      (1.0 - 1.3) * (1.0 - 1.3) - (1.3 - 1.2) * (1.3 - 1.2) +
      explore_loss(sig, 0.5, hp.c, 252, hp.T);
  REQUIRE(one.loss_history.size() == 1);
  CHECK(one.loss_history[0] == Approx(expected_loss).margin(1e-15));
  CHECK(one.omega == Approx(1.3 - 0.01 * (1.0 - 1.2)).margin(1e-15));
  hp.K = 2;
  const CalibrationResult two = calibrate(pool, sig, hp, 9);
  const double step0 = one.omega - 1.3;
  const double step1 = two.omega - one.omega;
  CHECK(step1 / step0 == Approx(std::exp(-2.0e-4)).epsilon(1e-10));
}

TEST_CASE("calibrate recovers the premium on an independent GBM pool") {
  const DataPool pool = synth_independent_pool(101, 400, 252, 0.4, 0.2);
  const double sig = pool_vol(pool);
  CHECK(sig == Approx(0.2).epsilon(0.05));
  Hyperparams hp;
  hp.m = 256;
  hp.K = 2000;
  hp.rho_init = 1.2;
  const CalibrationResult res = calibrate(pool, sig, hp, 2);
  CHECK(res.rho > 0.25);
  CHECK(res.rho < 0.55);
  REQUIRE(res.loss_history.size() == 2000);
  for (const double v : res.loss_history) REQUIRE(std::isfinite(v));
  // omega's fixed point is the mean-matching level for the learned rho
  const double omega_pred =
      1.2 + 0.2 / std::expm1(0.4 * res.rho * hp.T);
  CHECK(std::abs(res.omega - omega_pred) < 0.25);
  const PerformanceReport rep = backtest(res, pool, sig, {1.0}, 3);
  CHECK(std::abs(rep.rows[0].test_mean - 1.2) < 0.024);
}

TEST_CASE("training loss decreases on a single-series pool") {
  const PriceSeries series = synth_gbm_series(4, 2521, 252, 0.4, 0.2);
  const PoolSet set = build_pool(series, 4, 3, 3);
  std::vector<double> seg(set.train.segment.data(),
                          set.train.segment.data() + set.train.segment.size());
  const double sig = historical_vol_prices(seg, 252);
  Hyperparams hp;
  hp.m = 256;
  hp.K = 500;
  const CalibrationResult res = calibrate(set.train, sig, hp, 5);
  const long tenth = hp.K / 10;
  double head = 0.0, tail = 0.0;
  for (long i = 0; i < tenth; ++i)
    head += res.loss_history[static_cast<std::size_t>(i)];
  for (long i = hp.K - tenth; i < hp.K; ++i)
    tail += res.loss_history[static_cast<std::size_t>(i)];
  CHECK(tail / tenth < head / tenth);
}

TEST_CASE("calibrate guards against divergence and bad input") {
  const DataPool pool = synth_independent_pool(101, 20, 252, 0.4, 0.2);
  Hyperparams hp;
  hp.K = 10;
  hp.m = 16;
  SECTION("loss guard") {
    Hyperparams guarded = hp;
    guarded.loss_guard = 1e-9;
    CHECK_THROWS_WITH(calibrate(pool, 0.2, guarded, 5),
                      ContainsSubstring("loss guard"));
  }
  SECTION("rho leaves its bracket under an oversized step") {
    Hyperparams wild = hp;
    wild.lr_a = 1.0;
    wild.rho_max = 0.6;
    CHECK_THROWS_AS(calibrate(pool, 0.2, wild, 5), Divergence);
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(calibrate(DataPool{}, 0.2, hp, 5), InsufficientData);
    CHECK_THROWS_AS(calibrate(pool, 0.0, hp, 5), OutOfRange);
    Hyperparams zero_m = hp;
    zero_m.m = 0;
    CHECK_THROWS_AS(calibrate(pool, 0.2, zero_m, 5), OutOfRange);
    Hyperparams neg_k = hp;
    neg_k.K = -1;
    CHECK_THROWS_AS(calibrate(pool, 0.2, neg_k, 5), OutOfRange);
  }
}

TEST_CASE("pathwise gradient agrees with finite differences") {
  const DataPool pool = synth_independent_pool(101, 50, 252, 0.4, 0.2);
  Hyperparams hp;
  hp.m = 64;
  for (const auto& [rho, omega] : {std::pair{0.7, 1.4}, std::pair{0.4, 2.0}}) {
    const GradientProbe probe =
        calibration_grad_check(pool, 0.2, hp, 7, rho, omega);
    REQUIRE(probe.pathwise != 0.0);
    CHECK(probe.pathwise ==
          Approx(probe.finite_difference).epsilon(1e-6));
  }
  CHECK_THROWS_AS(calibration_grad_check(DataPool{}, 0.2, hp, 7, 0.5, 1.3),
                  InsufficientData);
}

TEST_CASE("hyperparameter defaults pin the published configuration") {
  const Hyperparams hp;
  CHECK(hp.m == 512);
  CHECK(hp.K == 10000);
  CHECK(hp.x0 == 1.0);
  CHECK(hp.l == 1.2);
  CHECK(hp.c == 0.001);
  CHECK(hp.lr_a == 0.01);
  CHECK(hp.lr_b == 2.0e-4);
  CHECK(hp.adam_beta1 == 0.9);
  CHECK(hp.adam_beta2 == 0.999);
  CHECK(hp.adam_eps == 1e-8);
  CHECK(hp.rho_init == 0.5);
  CHECK(hp.T == 1.0);
  CHECK(hp.scalings == std::vector<double>{0.4, 0.6, 0.8, 1.0});
}

TEST_CASE("backtest scales the policy and reports per R") {
  CalibrationResult fake;
  fake.rho = 0.5;
  fake.omega = 2.0;
  fake.sigma_train = 0.2;
  fake.hp = Hyperparams{};
  SECTION("negative-drift variance shrinks with the scaling") {
    DataPool neg = synth_independent_pool(309, 100, 252, -0.4, 0.2);
    neg.split = "test";
    const std::vector<double> rs{1.0, 0.8, 0.6, 0.4};
    const PerformanceReport rep = backtest(fake, neg, 0.2, rs, 13);
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.reps == 8);
    for (std::size_t i = 0; i < rs.size(); ++i)
      CHECK(rep.rows[i].rho_star == rs[i] * fake.rho);
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
      CHECK(rep.rows[i].test_variance < rep.rows[i - 1].test_variance);
    // identity scaling reproduces the R=1 row exactly
    const PerformanceReport lone = backtest(fake, neg, 0.2, {1.0}, 13);
    CHECK(lone.rows[0].rho_star == fake.rho);
    CHECK(lone.rows[0].test_mean == rep.rows[0].test_mean);
    CHECK(lone.rows[0].test_variance == rep.rows[0].test_variance);
  }
  SECTION("constant prices pin the terminal wealth at x0") {
    const DataPool flat = constant_pool(4, 252, 100.0);
    const PerformanceReport rep = backtest(fake, flat, 0.2, {1.0, 0.5}, 13);
    for (const PerformanceRow& row : rep.rows) {
      CHECK(row.test_mean == 1.0);
      CHECK(row.test_variance == 0.0);
      const double expected =
          (1.0 - fake.omega) * (1.0 - fake.omega) -
          (fake.omega - 1.2) * (fake.omega - 1.2) +
          explore_loss(0.2, row.rho_star, fake.hp.c, 252, fake.hp.T);
      CHECK(row.test_loss == Approx(expected).margin(1e-15));
    }
  }
  SECTION("validation") {
    const DataPool flat = constant_pool(2, 252, 100.0);
    CHECK_THROWS_AS(backtest(fake, DataPool{}, 0.2, {1.0}, 13),
                    InsufficientData);
    CHECK_THROWS_AS(backtest(fake, flat, 0.0, {1.0}, 13), OutOfRange);
    CHECK_THROWS_AS(backtest(fake, flat, 0.2, {}, 13), OutOfRange);
    CalibrationResult broken = fake;
    broken.rho = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(backtest(broken, flat, 0.2, {1.0}, 13), NonFinite);
  }
}

TEST_CASE("synthetic generators are deterministic") {
  SECTION("series") {
    const PriceSeries a = synth_gbm_series(9, 100, 252, 0.4, 0.2);
    const PriceSeries b = synth_gbm_series(9, 100, 252, 0.4, 0.2);
    CHECK(a.prices == b.prices);
    CHECK(a.dates.front() == 10957);
    for (std::size_t i = 1; i < a.dates.size(); ++i)
      REQUIRE(a.dates[i] == a.dates[i - 1] + 1);
    for (const double p : a.prices) REQUIRE(p > 0.0);
    const PriceSeries c = synth_gbm_series(9, 100, 252, 0.4, 0.2, 100.0, 1);
    CHECK(a.prices != c.prices);
    CHECK_THROWS_AS(synth_gbm_series(9, 0, 252, 0.4, 0.2), OutOfRange);
  }
  SECTION("independent pools") {
    const DataPool a = synth_independent_pool(9, 5, 252, 0.4, 0.2);
    const DataPool b = synth_independent_pool(9, 5, 252, 0.4, 0.2);
    REQUIRE(a.windows.size() == 5);
    for (std::size_t i = 0; i < a.windows.size(); ++i) {
      REQUIRE(a.windows[i].size() == 253);
      CHECK(a.windows[i] == b.windows[i]);
    }
    CHECK(a.offsets == std::vector<long>{0, 1, 2, 3, 4});
    CHECK(a.segment == a.windows.front());
    CHECK(a.windows[0] != a.windows[1]);
    CHECK_THROWS_AS(synth_independent_pool(9, 0, 252, 0.4, 0.2), OutOfRange);
  }
}
