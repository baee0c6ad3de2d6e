#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rexmv/admissible_set.hpp"
#include "rexmv/appendix.hpp"
#include "rexmv/calibrate.hpp"
#include "rexmv/closed_form.hpp"
#include "rexmv/config.hpp"
#include "rexmv/io.hpp"
#include "rexmv/simulate.hpp"
#include "rexmv/variance.hpp"
#include "rexmv/version.hpp"

namespace fs = std::filesystem;
using namespace rexmv;

namespace {

struct KeyedOptions {
  std::map<std::string, std::string> staged;
  std::map<std::string, CLI::Option*> options;
};

std::string flag_name(const std::string& key) {
  std::string f = "--";
  for (const char ch : key) f += ch == '.' ? '-' : ch;
  return f;
}

std::string env_name(const std::string& key) {
  std::string e = "REXMV_";
  for (const char ch : key)
    e += (ch == '.' || ch == '-') ? '_'
                                  : static_cast<char>(std::toupper(ch));
  return e;
}

// Every config key is mirrored one-to-one by a flag (dots become dashes)
// and an environment variable; flags beat env vars beat the config file.
void add_keys(CLI::App* app, KeyedOptions& ko,
              const std::vector<std::pair<std::string, std::string>>& keys) {
  for (const auto& [key, help] : keys) {
    auto* opt = app->add_option(flag_name(key), ko.staged[key], help);
    opt->envname(env_name(key));
    ko.options[key] = opt;
  }
}

Config merge_config(const std::string& config_path, const KeyedOptions& ko) {
  Config cfg = config_path.empty() ? Config() : Config::from_file(config_path);
  for (const auto& [key, opt] : ko.options)
    if (opt->count() > 0) cfg.set(key, ko.staged.at(key));
  return cfg;
}

Mat identity_sigma(int d, double vol) {
  return vol * Mat::Identity(d, d);
}

MarketParams market_from(const Config& cfg) {
  MarketParams mkt;
  Vec rho_hat = cfg.vec("rho_hat", Vec());
  int d = static_cast<int>(cfg.integer(
      "d", rho_hat.size() ? static_cast<long>(rho_hat.size()) : 1));
  if (rho_hat.size() == 0) rho_hat = Vec::Constant(d, 0.4);
  mkt.d = d;
  mkt.rho_hat = rho_hat;
  mkt.T = cfg.num("T", 1.0);
  mkt.r = cfg.num("r", 0.02);
  if (cfg.has("sigma")) {
    mkt.sigma = cfg.mat("sigma");
  } else if (cfg.has("vols")) {
    const Vec vols = cfg.vec("vols", Vec());
    const Mat corr = cfg.has("corr")
                         ? cfg.mat("corr")
                         : Mat(Mat::Identity(vols.size(), vols.size()));
    mkt.sigma = build_volatility(vols, corr);
  } else {
    mkt.sigma = identity_sigma(d, 0.2);
  }
  return validate_market(mkt).params;
}

ProblemParams problem_from(const Config& cfg) {
  ProblemParams pb;
  pb.x0 = cfg.num("x0", 1.0);
  pb.l = cfg.num("l", 1.2);
  pb.c = cfg.num("c", 1.5);
  if (cfg.has("omega")) pb.omega = cfg.num("omega", 0.0);
  return pb;
}

AdmissibleSet set_from(const Config& cfg, const Vec& default_center) {
  AdmissibleSet set;
  const std::string type = cfg.require("set.type");
  set.allow_zero_lower = cfg.integer("set.allow_zero_lower", 0) != 0;
  const std::string proj = cfg.str("set.projection", "min_norm");
  if (proj == "table_compat")
    set.projection = Projection::TableCompat;
  else if (proj != "min_norm")
    throw ParseError("set.projection must be min_norm or table_compat");
  if (type == "cube") {
    Cube cube;
    if (cfg.has("set.lower")) {
      cube.lower = cfg.vec("set.lower", Vec());
      cube.upper = cfg.vec("set.upper", Vec());
    } else {
      const Vec center = cfg.vec("set.center", default_center);
      const double radius = cfg.num("set.radius", 0.0);
      cube.lower = (center.array() - radius).matrix();
      cube.upper = (center.array() + radius).matrix();
      if (set.allow_zero_lower) cube.lower = cube.lower.cwiseMax(0.0);
    }
    set.shape = cube;
  } else if (type == "ball") {
    Ball ball;
    ball.center = cfg.vec("set.center", default_center);
    ball.radius = cfg.num("set.radius", 0.0);
    set.shape = ball;
  } else {
    throw ParseError("set.type must be cube or ball");
  }
  check_valid(set);
  return set;
}

Mat cfg_sigma(const Config& cfg, const Vec& default_vols,
              const Mat& default_corr) {
  if (cfg.has("sigma")) return cfg.mat("sigma");
  if (cfg.has("vols")) {
    const Vec vols = cfg.vec("vols", Vec());
    const Mat corr = cfg.has("corr")
                         ? cfg.mat("corr")
                         : Mat(Mat::Identity(vols.size(), vols.size()));
    return build_volatility(vols, corr);
  }
  return build_volatility(default_vols, default_corr);
}

std::optional<Vec> robust_from(const Config& cfg, const Vec& rho) {
  if (cfg.has("rho_star")) return cfg.vec("rho_star", Vec());
  if (cfg.has("set.type")) return project_min_norm(set_from(cfg, rho));
  return std::nullopt;
}

std::string mat_str(const Mat& m) {
  std::string s;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) s += ";";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) s += ",";
      s += num_str(m(i, j));
    }
  }
  return s;
}

void emit(std::ostream& out, const std::string& text) { out << text; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
}

struct RunContext {
  Config cfg;
  fs::path out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }

  void finish(const std::string& subcommand) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    write_manifest((out_dir / "manifest.txt").string(), subcommand, cfg, seed,
                   static_cast<long>(ms), outputs);
  }
};

RunContext make_context(const Config& cfg, const std::string& out_dir) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.out_dir = out_dir;
  fs::create_directories(ctx.out_dir);
  ctx.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  ctx.threads = resolve_threads(static_cast<int>(cfg.integer("threads", 0)));
  return ctx;
}

int run_closed_form(RunContext& ctx) {
  const MarketParams mkt = market_from(ctx.cfg);
  const ProblemParams pb = problem_from(ctx.cfg);
  const Vec rho = ctx.cfg.vec("rho", mkt.rho_hat);
  const auto rho_star = robust_from(ctx.cfg, rho);

  const double omega_vs_market =
      lagrange_multiplier(rho, mkt.rho_hat, pb.x0, pb.l, mkt.T);
  const double omega_self = lagrange_multiplier(rho, rho, pb.x0, pb.l, mkt.T);
  const auto schedule = PiecewiseSchedule::constant(rho, mkt.T);
  const double v0 = value_function(0.0, pb.x0, schedule, mkt.sigma, pb.c,
                                   omega_self, pb.l, mkt.T);
  const GaussianPolicy pol =
      optimal_policy(0.0, pb.x0, rho, mkt.sigma, pb.c, omega_self, mkt.T);
  const double m_opt = m_optimal(schedule, mkt.sigma, pb.x0, pb.l, pb.c,
                                 mkt.T);

  std::string rep;
  rep += "omega=" + num_str(omega_vs_market) + "\n";
  rep += "omega_self=" + num_str(omega_self) + "\n";
  rep += "value0=" + num_str(v0) + "\n";
  rep += "policy_mean=";
  for (Eigen::Index i = 0; i < pol.mean.size(); ++i)
    rep += (i ? "," : "") + num_str(pol.mean[i]);
  rep += "\npolicy_covariance=" + mat_str(pol.covariance) + "\n";
  rep += "m_optimal=" + num_str(m_opt) + "\n";
  if (rho_star) {
    rep += "rho_star=";
    for (Eigen::Index i = 0; i < rho_star->size(); ++i)
      rep += (i ? "," : "") + num_str((*rho_star)[i]);
    rep += "\nm_cross=" +
           num_str(m_cross(rho, *rho_star, mkt.sigma, pb.x0, pb.l, pb.c,
                           mkt.T)) +
           "\n";
    rep += "m_star=" +
           num_str(m_cross(*rho_star, *rho_star, mkt.sigma, pb.x0, pb.l, pb.c,
                           mkt.T)) +
           "\n";
  }
  write_text(ctx.file("closed_form.txt"), rep);
  emit(std::cout, rep);
  ctx.finish("closed-form");
  return 0;
}

int run_kstar(RunContext& ctx) {
  const MarketParams mkt = market_from(ctx.cfg);
  const ProblemParams pb = problem_from(ctx.cfg);
  const double tol = ctx.cfg.num("kstar.tol", 1e-10);
  const auto res = solve_kstar(mkt.rho_hat, pb.x0, pb.l, pb.c, mkt.d, mkt.T,
                               tol);
  std::string rep;
  rep += "k_star=" + num_str(res.k_star) + "\n";
  rep += "residual=" + num_str(res.residual) + "\n";
  rep += "iterations=" + std::to_string(res.iterations) + "\n";
  rep += "bracket_low=" + num_str(res.bracket.first) + "\n";
  rep += "bracket_high=" + num_str(res.bracket.second) + "\n";
  write_text(ctx.file("kstar.txt"), rep);
  emit(std::cout, rep);
  ctx.finish("kstar");
  return 0;
}

std::vector<AxisSpec> axes_from(const Config& cfg) {
  if (cfg.has("surface.axis2"))
    throw OutOfRange("surface supports at most 2 axes");
  std::vector<AxisSpec> axes;
  for (const char* key : {"surface.axis0", "surface.axis1"}) {
    if (!cfg.has(key)) continue;
    const Vec spec = cfg.vec(key, Vec());
    if (spec.size() != 3)
      throw ParseError(std::string(key) + " needs min,max,steps");
    axes.push_back({spec[0], spec[1], static_cast<int>(spec[2])});
  }
  if (axes.empty()) axes.push_back({0.05, 1.0, 96});
  return axes;
}

int run_surface(RunContext& ctx) {
  const ProblemParams pb = problem_from(ctx.cfg);
  const auto axes = axes_from(ctx.cfg);
  const Vec rho_hat = ctx.cfg.vec(
      "rho_hat", Vec::Constant(static_cast<Eigen::Index>(axes.size()), 0.5));
  const std::string mode_text = ctx.cfg.str("surface.mode", "exploration");
  SurfaceMode mode = SurfaceMode::Exploration;
  if (mode_text == "classical")
    mode = SurfaceMode::Classical;
  else if (mode_text != "exploration")
    throw ParseError("surface.mode must be exploration or classical");
  const long cap = ctx.cfg.integer("surface.cap", 1000000);
  const SurfaceGrid grid = variance_surface(axes, rho_hat, pb.x0, pb.l, pb.c,
                                            ctx.cfg.num("T", 1.0), mode, cap);
  write_surface(ctx.file("surface.txt").string(), grid);
  std::string rep = "cells=" +
                    std::to_string(grid.values.rows() * grid.values.cols()) +
                    "\n";
  if (grid.marker_kstar.size()) rep += "k_star=" + num_str(grid.k_star) + "\n";
  emit(std::cout, rep);
  ctx.finish("surface");
  return 0;
}

int run_simulate(RunContext& ctx) {
  const MarketParams mkt = market_from(ctx.cfg);
  const ProblemParams pb = problem_from(ctx.cfg);
  SimConfig sim;
  sim.market = mkt;
  sim.problem = pb;
  sim.scenario.rho_invest = ctx.cfg.vec("rho", mkt.rho_hat);
  sim.scenario.rho_market = mkt.rho_hat;
  sim.scenario.rho_robust = robust_from(ctx.cfg, sim.scenario.rho_invest);
  sim.m = ctx.cfg.integer("m", 512);
  sim.n = static_cast<int>(ctx.cfg.integer("n", 100));
  sim.seed = ctx.seed;
  sim.threads = ctx.threads;
  sim.record_paths = ctx.cfg.integer("record_paths", 0) != 0;
  sim.overflow_guard = ctx.cfg.num("overflow_guard", 1e12);

  const std::uint64_t chash = ctx.cfg.hash();
  std::string rep;
  if (sim.scenario.rho_robust) {
    const bool shared = ctx.cfg.integer("shared_control", 0) != 0;
    const ComparisonReport cmp = paired_compare(sim, shared);
    write_ensemble(ctx.file("misspecified.txt").string(),
                   cmp.misspecified_ensemble, chash);
    write_ensemble(ctx.file("robust.txt").string(), cmp.robust_ensemble,
                   chash);
    write_comparison(ctx.file("comparison.txt").string(), cmp);
    rep += "misspecified_variance=" + num_str(cmp.misspecified.variance) +
           "\n";
    rep += "robust_variance=" + num_str(cmp.robust.variance) + "\n";
    rep += "variance_ratio=" + num_str(cmp.variance_ratio) + "\n";
  } else {
    const WealthEnsemble ens = simulate(sim, ControlLeg::Misspecified);
    write_ensemble(ctx.file("ensemble.txt").string(), ens, chash);
    const Moments mo = moments(ens);
    rep += "mean=" + num_str(mo.mean) + "\n";
    rep += "variance=" + num_str(mo.variance) + "\n";
    rep += "se_mean=" + num_str(mo.std_error_mean) + "\n";
    rep += "se_variance=" + num_str(mo.std_error_variance) + "\n";
    write_text(ctx.file("simulate_report.txt"), rep);
  }
  emit(std::cout, rep);
  ctx.finish("simulate");
  return 0;
}

Hyperparams hyperparams_from(const Config& cfg, int threads) {
  Hyperparams hp;
  hp.m = cfg.integer("m", hp.m);
  hp.K = cfg.integer("K", hp.K);
  hp.x0 = cfg.num("x0", hp.x0);
  hp.l = cfg.num("l", hp.l);
  hp.c = cfg.num("c", 0.001);
  hp.lr_a = cfg.num("lr.a", hp.lr_a);
  hp.lr_b = cfg.num("lr.b", hp.lr_b);
  hp.adam_beta1 = cfg.num("adam.beta1", hp.adam_beta1);
  hp.adam_beta2 = cfg.num("adam.beta2", hp.adam_beta2);
  hp.adam_eps = cfg.num("adam.eps", hp.adam_eps);
  hp.rho_max = cfg.num("rho_max", hp.rho_max);
  hp.loss_guard = cfg.num("loss_guard", hp.loss_guard);
  hp.rho_init = cfg.num("rho_init", hp.rho_init);
  hp.T = cfg.num("T", hp.T);
  hp.backtest_reps = static_cast<int>(cfg.integer("backtest_reps",
                                                  hp.backtest_reps));
  if (cfg.has("scalings")) {
    const Vec s = cfg.vec("scalings", Vec());
    hp.scalings.assign(s.data(), s.data() + s.size());
  }
  hp.threads = threads;
  return hp;
}

int run_calibrate(RunContext& ctx) {
  const std::string prices = ctx.cfg.require("prices");
  const int n_year = static_cast<int>(ctx.cfg.integer("n_year", 252));
  const int stride = static_cast<int>(ctx.cfg.integer("stride", 21));
  const PriceSeries series =
      load_prices(prices, ctx.cfg.num("r", 0.02), n_year,
                  ctx.cfg.str("symbol", ""));
  const PoolSet pools = build_pool(
      series, static_cast<int>(ctx.cfg.integer("years.train", 7)),
      static_cast<int>(ctx.cfg.integer("years.valid", 3)),
      static_cast<int>(ctx.cfg.integer("years.test", 3)), n_year);
  const std::vector<double> train_prices(
      pools.train.segment.data(),
      pools.train.segment.data() + pools.train.segment.size());
  const std::vector<double> valid_prices(
      pools.valid.segment.data(),
      pools.valid.segment.data() + pools.valid.segment.size());
  const double sigma_train = historical_vol_prices(train_prices, n_year,
                                                   stride);
  const double sigma_valid = historical_vol_prices(valid_prices, n_year,
                                                   stride);
  const Hyperparams hp = hyperparams_from(ctx.cfg, ctx.threads);
  CalibrationResult res = calibrate(pools.train, sigma_train, hp, ctx.seed);
  res.sigma_valid = sigma_valid;
  write_calibration(ctx.file("calibration.txt").string(), res);
  write_loss_history(ctx.file("loss_history.txt").string(),
                     res.loss_history);
  std::string rep;
  rep += "rho=" + num_str(res.rho) + "\n";
  rep += "sigma_train=" + num_str(res.sigma_train) + "\n";
  rep += "sigma_valid=" + num_str(res.sigma_valid) + "\n";
  rep += "omega=" + num_str(res.omega) + "\n";
  emit(std::cout, rep);
  ctx.finish("calibrate");
  return 0;
}

int run_backtest(RunContext& ctx) {
  CalibrationResult res = read_calibration(ctx.cfg.require("calibration"));
  const std::string prices = ctx.cfg.require("prices");
  const int n_year = static_cast<int>(ctx.cfg.integer("n_year", 252));
  const int stride = static_cast<int>(ctx.cfg.integer("stride", 21));
  const PriceSeries series =
      load_prices(prices, ctx.cfg.num("r", 0.02), n_year,
                  ctx.cfg.str("symbol", ""));
  const PoolSet pools = build_pool(
      series, static_cast<int>(ctx.cfg.integer("years.train", 7)),
      static_cast<int>(ctx.cfg.integer("years.valid", 3)),
      static_cast<int>(ctx.cfg.integer("years.test", 3)), n_year);
  double sigma_valid = res.sigma_valid;
  if (!std::isfinite(sigma_valid) || !(sigma_valid > 0.0)) {
    const std::vector<double> valid_prices(
        pools.valid.segment.data(),
        pools.valid.segment.data() + pools.valid.segment.size());
    sigma_valid = historical_vol_prices(valid_prices, n_year, stride);
  }
  res.hp.threads = ctx.threads;
  std::vector<double> scalings = res.hp.scalings;
  if (ctx.cfg.has("scalings")) {
    const Vec s = ctx.cfg.vec("scalings", Vec());
    scalings.assign(s.data(), s.data() + s.size());
  }
  const PerformanceReport rep =
      backtest(res, pools.test, sigma_valid, scalings, ctx.seed);
  write_performance(ctx.file("performance.txt").string(), res, rep);
  std::string text = "R rho_star test_loss test_mean test_variance\n";
  for (const auto& row : rep.rows)
    text += num_str(row.R) + " " + num_str(row.rho_star) + " " +
            num_str(row.test_loss) + " " + num_str(row.test_mean) + " " +
            num_str(row.test_variance) + "\n";
  emit(std::cout, text);
  ctx.finish("backtest");
  return 0;
}

// Self-test: saddle sweep, convexity grids, gradient cross-check, k*
// bracket sweep. Exit 0 iff every property holds; the first failing check
// is named on stderr and the process exits with the property code.
int run_verify(RunContext& ctx) {
  const double grad_tol = ctx.cfg.num("verify.gradient_tol", 1e-6);
  const int samples = static_cast<int>(ctx.cfg.integer("verify.samples",
                                                       250));
  std::string rep;
  std::string failed;
  auto record = [&](const std::string& name, bool ok,
                    const std::string& detail) {
    rep += std::string(ok ? "ok " : "FAIL ") + name +
           (detail.empty() ? "" : " " + detail) + "\n";
    if (!ok && failed.empty()) failed = name;
  };

  // Saddle inequality over admissible sets.
  {
    const double x0 = ctx.cfg.num("x0", 1.0), l = ctx.cfg.num("l", 1.2);
    const double c = ctx.cfg.num("c", 1.5), T = ctx.cfg.num("T", 1.0);
    std::vector<AdmissibleSet> sets;
    if (ctx.cfg.has("set.type")) {
      const AdmissibleSet set = set_from(ctx.cfg, Vec::Constant(4, 0.4));
      if (ctx.cfg.has("rho_star")) {
        const Vec claimed = ctx.cfg.vec("rho_star", Vec());
        if (!contains(set, claimed))
          throw InvalidSet("rho_star lies outside the admissible set");
      }
      sets.push_back(set);
    } else {
      Vec c1(4), c2(4);
      c1 << 0.4, 0.5, 0.5, 0.7;
      c2 << 0.15, 0.15, 0.35, 0.4;
      AdmissibleSet cube;
      cube.shape = Cube{(c1.array() - 0.3).matrix(), (c1.array() + 0.3).matrix()};
      sets.push_back(cube);
      // Samples feed m_cross, so every set must stay inside the positive
      // orthant; the compat projection additionally needs |center| < 1.
      AdmissibleSet ball1;
      ball1.shape = Ball{c2, 0.1};
      sets.push_back(ball1);
      AdmissibleSet ball2 = ball1;
      ball2.projection = Projection::TableCompat;
      sets.push_back(ball2);
      AdmissibleSet ball3;
      ball3.shape = Ball{c1, 0.2};
      sets.push_back(ball3);
    }
    const Eigen::Index sd = dim(sets.front());
    Mat sigma;
    if (ctx.cfg.has("sigma") || ctx.cfg.has("vols")) {
      sigma = cfg_sigma(ctx.cfg, Vec(), Mat());
    } else if (sd == 4) {
      Vec vols(4);
      vols << 0.15, 0.2, 0.4, 0.3;
      Mat corr(4, 4);
      corr << 1, -0.85, 0.45, 0.78, -0.85, 1, -0.41, -0.62, 0.45, -0.41, 1,
          0.64, 0.78, -0.62, 0.64, 1;
      sigma = build_volatility(vols, corr);
    } else {
      sigma = identity_sigma(static_cast<int>(sd), 0.2);
    }
    if (sigma.rows() != sd)
      throw DimensionMismatch("volatility does not match the set dimension");
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t si = 0; si < sets.size(); ++si) {
      const Vec star = project_min_norm(sets[si]);
      const double m_star = m_cross(star, star, sigma, x0, l, c, T);
      const auto points = sample_boundary_and_interior(
          sets[si], samples, 9000 + static_cast<std::uint64_t>(si));
      for (const Vec& p : points)
        worst = std::min(worst,
                         m_star - m_cross(p, star, sigma, x0, l, c, T));
    }
    record("saddle_inequality", worst >= -1e-12,
           "worst_margin=" + num_str(worst));
  }

  // Convexity grids.
  {
    ConvexityOptions opt;
    opt.grid_points = 48;
    opt.rays = 20;
    opt.rho_hat = Vec::Constant(2, 0.5);
    long violations = 0;
    for (const auto target :
         {ConvexityTarget::ExplorationTermOfRho,
          ConvexityTarget::ClassicalTermOfK, ConvexityTarget::G})
      violations +=
          static_cast<long>(check_convexity(target, opt).violations.size());
    record("convexity", violations == 0,
           "violations=" + std::to_string(violations));
  }

  // Gradient versus central differences.
  {
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      CounterRng rng(777, Stream::SetSampling,
                     static_cast<std::uint64_t>(trial));
      const int d = 1 + static_cast<int>(rng.uniform(0) * 4.0) % 4;
      Vec rho(d), rho_hat(d);
      for (int j = 0; j < d; ++j) {
        rho[j] = 0.25 + rng.uniform(10 + j);
        rho_hat[j] = 0.25 + rng.uniform(20 + j);
      }
      if (std::abs(rho.squaredNorm() - rho.dot(rho_hat)) < 1e-3) continue;
      const double c = 0.5 + 2.0 * rng.uniform(1);
      const Vec grad = variance_gradient(rho, rho_hat, 1.0, 1.2, c, d, 1.0);
      const double h = 1e-5;
      for (int j = 0; j < d; ++j) {
        Vec hi = rho, lo = rho;
        hi[j] += h;
        lo[j] -= h;
        const double fd =
            (variance_with_exploration(hi, rho_hat, 1.0, 1.2, c, d, 1.0)
                 .variance -
             variance_with_exploration(lo, rho_hat, 1.0, 1.2, c, d, 1.0)
                 .variance) /
            (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad[j]) /
                                    std::max(1.0, std::abs(grad[j])));
      }
    }
    record("gradient_fd", worst <= grad_tol, "worst_rel=" + num_str(worst));
  }

  // k* bracket sweep.
  {
    bool ok = true;
    double worst_res = 0.0;
    std::string detail;
    for (int trial = 0; trial < 120 && ok; ++trial) {
      CounterRng rng(555, Stream::SetSampling,
                     static_cast<std::uint64_t>(trial));
      const int d = 1 + static_cast<int>(rng.uniform(0) * 4.0) % 4;
      Vec rh(d);
      for (int j = 0; j < d; ++j) rh[j] = 1e-2 + rng.uniform(10 + j);
      const double c = 1e-3 + 5.0 * rng.uniform(1);
      const double T = 0.25 + 4.75 * rng.uniform(2);
      const double gap = 1e-3 + rng.uniform(3);
      try {
        const auto res = solve_kstar(rh, 1.0, 1.0 + gap, c, d, T);
        worst_res = std::max(worst_res, res.residual);
        if (!(res.k_star > 0.5 && res.k_star < 1.0) ||
            !(res.residual <= 1e-8)) {
          ok = false;
          detail = "trial=" + std::to_string(trial);
        }
      } catch (const Error& e) {
        ok = false;
        detail = std::string("trial=") + std::to_string(trial) + " " +
                 e.name();
      }
    }
    record("kstar_bracket", ok, detail.empty()
                                    ? "worst_residual=" + num_str(worst_res)
                                    : detail);
  }

  write_text(ctx.file("verify.txt"), rep);
  emit(std::cout, rep);
  ctx.finish("verify");
  if (!failed.empty()) throw PropertyViolation(failed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exploratory robust mean-variance toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";

  const std::vector<std::pair<std::string, std::string>> shared_keys{
      {"seed", "master RNG seed"},
      {"threads", "worker thread count"},
      {"d", "asset count"},
      {"T", "horizon in years"},
      {"x0", "initial wealth"},
      {"l", "target terminal mean"},
      {"c", "exploration intensity"},
      {"r", "discount rate"},
      {"omega", "fixed Lagrange multiplier override"},
      {"rho_hat", "market premium vector"},
      {"rho", "investor premium vector"},
      {"rho_star", "robust premium vector"},
      {"vols", "diagonal volatilities"},
      {"corr", "correlation matrix (rows ; separated)"},
      {"sigma", "volatility matrix (rows ; separated)"},
      {"set.type", "admissible set kind: cube or ball"},
      {"set.center", "set center"},
      {"set.radius", "set radius"},
      {"set.lower", "cube lower corner"},
      {"set.upper", "cube upper corner"},
      {"set.allow_zero_lower", "admit zero lower bounds (0/1)"},
      {"set.projection", "min_norm or table_compat"},
      {"m", "paths / batch size"},
      {"n", "time steps"},
      {"record_paths", "store full paths (0/1)"},
      {"overflow_guard", "wealth overflow guard"},
      {"shared_control", "diagnostic shared control draws (0/1)"},
      {"surface.mode", "exploration or classical"},
      {"surface.axis0", "axis spec min,max,steps"},
      {"surface.axis1", "axis spec min,max,steps"},
      {"surface.cap", "maximum grid cells"},
      {"kstar.tol", "k* residual tolerance"},
      {"prices", "price csv path"},
      {"calibration", "calibration result path"},
      {"symbol", "series symbol"},
      {"n_year", "trading days per year"},
      {"stride", "historical vol window stride"},
      {"years.train", "training years"},
      {"years.valid", "validation years"},
      {"years.test", "test years"},
      {"K", "training steps"},
      {"lr.a", "learning rate scale"},
      {"lr.b", "learning rate decay"},
      {"adam.beta1", "Adam first-moment decay"},
      {"adam.beta2", "Adam second-moment decay"},
      {"adam.eps", "Adam epsilon"},
      {"rho_max", "divergence guard on rho"},
      {"loss_guard", "divergence guard on loss"},
      {"rho_init", "initial rho"},
      {"backtest_reps", "control replays per window"},
      {"scalings", "robust scaling list"},
      {"verify.gradient_tol", "verify: gradient tolerance"},
      {"verify.samples", "verify: saddle samples per set"},
  };

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(RunContext&);
  };
  const std::vector<Sub> subs{
      {"closed-form", "closed-form values and policy", run_closed_form},
      {"kstar", "variance minimizer on the premium ray", run_kstar},
      {"surface", "variance surface grid", run_surface},
      {"simulate", "Monte Carlo wealth ensembles", run_simulate},
      {"calibrate", "train on price data", run_calibrate},
      {"backtest", "replay scaled policies on the test split", run_backtest},
      {"verify", "property self-test", run_verify},
  };
  std::map<std::string, KeyedOptions> keyed;
  std::map<std::string, int (*)(RunContext&)> runners;
  for (const auto& sub : subs) {
    CLI::App* s = app.add_subcommand(sub.name, sub.help);
    s->add_option("--config", config_path, "key=value configuration file")
        ->envname("REXMV_CONFIG");
    s->add_option("--out-dir", out_dir, "output directory")
        ->envname("REXMV_OUT_DIR");
    add_keys(s, keyed[sub.name], shared_keys);
    runners[sub.name] = sub.run;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string chosen = app.get_subcommands().front()->get_name();
  try {
    const Config cfg = merge_config(config_path, keyed[chosen]);
    RunContext ctx = make_context(cfg, out_dir);
    return runners[chosen](ctx);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
