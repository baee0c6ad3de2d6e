#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "rexmv/calibrate.hpp"
#include "rexmv/config.hpp"
#include "rexmv/simulate.hpp"
#include "rexmv/variance.hpp"
#include "rexmv/version.hpp"

namespace rexmv {

inline std::string hash_str(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h;
  return os.str();
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  return out;
}

inline std::string vec_str(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += num_str(v[i]);
  }
  return s;
}

}  // namespace detail

inline void write_ensemble(const std::string& path, const WealthEnsemble& ens,
                           std::uint64_t config_hash) {
  auto out = detail::open_out(path);
  out << "# rexmv ensemble\n";
  out << "# config_hash " << hash_str(config_hash) << "\n";
  out << "# seed " << ens.seed << "\n";
  out << "# control_stream " << static_cast<std::uint64_t>(ens.control_stream)
      << "\n";
  out << "# m " << ens.terminal.size() << "\n";
  out << "# n " << ens.config.n << "\n";
  out << "# overflowed " << ens.overflow_count << "\n";
  if (ens.overflow_count > 0) {
    out << "# overflow_indices ";
    bool first = true;
    for (std::size_t i = 0; i < ens.overflowed.size(); ++i) {
      if (!ens.overflowed[i]) continue;
      if (!first) out << ",";
      out << i;
      first = false;
    }
    out << "\n";
  }
  for (Eigen::Index i = 0; i < ens.terminal.size(); ++i)
    out << num_str(ens.terminal[i]) << "\n";
  if (ens.paths) {
    out << "# paths " << ens.paths->rows() << " " << ens.paths->cols() << "\n";
    for (Eigen::Index i = 0; i < ens.paths->rows(); ++i) {
      for (Eigen::Index j = 0; j < ens.paths->cols(); ++j) {
        if (j) out << " ";
        out << num_str((*ens.paths)(i, j));
      }
      out << "\n";
    }
  }
}

inline void write_comparison(const std::string& path,
                             const ComparisonReport& rep) {
  auto out = detail::open_out(path);
  auto block = [&](const char* tag, const Moments& mo) {
    out << tag << "_mean=" << num_str(mo.mean) << "\n";
    out << tag << "_variance=" << num_str(mo.variance) << "\n";
    out << tag << "_se_mean=" << num_str(mo.std_error_mean) << "\n";
    out << tag << "_se_variance=" << num_str(mo.std_error_variance) << "\n";
    out << tag << "_paths_used=" << mo.used << "\n";
  };
  block("misspecified", rep.misspecified);
  block("robust", rep.robust);
  out << "variance_ratio=" << num_str(rep.variance_ratio) << "\n";
}

inline void write_surface(const std::string& path, const SurfaceGrid& grid) {
  auto out = detail::open_out(path);
  out << "# rexmv surface\n";
  out << "# mode "
      << (grid.mode == SurfaceMode::Classical ? "classical" : "exploration")
      << "\n";
  for (std::size_t a = 0; a < grid.axes.size(); ++a)
    out << "# axis" << a << " " << num_str(grid.axes[a].min) << " "
        << num_str(grid.axes[a].max) << " " << grid.axes[a].steps << "\n";
  out << "# rho_hat " << detail::vec_str(grid.rho_hat) << "\n";
  out << "# c " << num_str(grid.c) << "\n";
  out << "# T " << num_str(grid.T) << "\n";
  out << "# x0 " << num_str(grid.x0) << "\n";
  out << "# l " << num_str(grid.l) << "\n";
  out << "# marker_rho_hat " << detail::vec_str(grid.marker_rho_hat) << "\n";
  out << "# marker_half " << detail::vec_str(grid.marker_half) << "\n";
  if (grid.marker_kstar.size()) {
    out << "# marker_kstar " << detail::vec_str(grid.marker_kstar) << "\n";
    out << "# k_star " << num_str(grid.k_star) << "\n";
  }
  std::string flagged;
  const Eigen::Index cols = grid.values.cols();
  for (std::size_t i = 0; i < grid.flags.size(); ++i) {
    if (!grid.flags[i]) continue;
    if (!flagged.empty()) flagged += ";";
    flagged += std::to_string(i / static_cast<std::size_t>(cols)) + "," +
               std::to_string(i % static_cast<std::size_t>(cols));
  }
  if (!flagged.empty()) out << "# flagged " << flagged << "\n";
  for (Eigen::Index i = 0; i < grid.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (j) out << " ";
      out << num_str(grid.values(i, j));
    }
    out << "\n";
  }
}

inline void write_calibration(const std::string& path,
                              const CalibrationResult& res) {
  auto out = detail::open_out(path);
  out << "rho=" << num_str(res.rho) << "\n";
  out << "sigma_train=" << num_str(res.sigma_train) << "\n";
  out << "sigma_valid=" << num_str(res.sigma_valid) << "\n";
  out << "omega=" << num_str(res.omega) << "\n";
  out << "seed=" << res.seed << "\n";
  out << "steps=" << res.loss_history.size() << "\n";
  const Hyperparams& hp = res.hp;
  out << "m=" << hp.m << "\n";
  out << "K=" << hp.K << "\n";
  out << "x0=" << num_str(hp.x0) << "\n";
  out << "l=" << num_str(hp.l) << "\n";
  out << "c=" << num_str(hp.c) << "\n";
  out << "lr.a=" << num_str(hp.lr_a) << "\n";
  out << "lr.b=" << num_str(hp.lr_b) << "\n";
  out << "adam.beta1=" << num_str(hp.adam_beta1) << "\n";
  out << "adam.beta2=" << num_str(hp.adam_beta2) << "\n";
  out << "adam.eps=" << num_str(hp.adam_eps) << "\n";
  out << "rho_max=" << num_str(hp.rho_max) << "\n";
  out << "loss_guard=" << num_str(hp.loss_guard) << "\n";
  out << "rho_init=" << num_str(hp.rho_init) << "\n";
  out << "T=" << num_str(hp.T) << "\n";
  out << "backtest_reps=" << hp.backtest_reps << "\n";
}

inline CalibrationResult read_calibration(const std::string& path) {
  const Config cfg = Config::from_file(path);
  CalibrationResult res;
  res.rho = cfg.num("rho", 0.0);
  res.omega = cfg.num("omega", 0.0);
  res.sigma_train = cfg.num("sigma_train", 0.0);
  res.sigma_valid = cfg.num("sigma_valid", 0.0);
  res.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
  Hyperparams& hp = res.hp;
  hp.m = cfg.integer("m", hp.m);
  hp.K = cfg.integer("K", hp.K);
  hp.x0 = cfg.num("x0", hp.x0);
  hp.l = cfg.num("l", hp.l);
  hp.c = cfg.num("c", hp.c);
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
  return res;
}

inline void write_loss_history(const std::string& path,
                               const std::vector<double>& history) {
  auto out = detail::open_out(path);
  for (const double v : history) out << num_str(v) << "\n";
}

inline void write_performance(const std::string& path,
                              const CalibrationResult& res,
                              const PerformanceReport& rep) {
  auto out = detail::open_out(path);
  out << "rho=" << num_str(res.rho) << "\n";
  out << "sigma_train=" << num_str(res.sigma_train) << "\n";
  out << "sigma_valid=" << num_str(res.sigma_valid) << "\n";
  out << "omega=" << num_str(res.omega) << "\n";
  out << "reps=" << rep.reps << "\n";
  out << "R rho_star test_loss test_mean test_variance\n";
  for (const auto& row : rep.rows)
    out << num_str(row.R) << " " << num_str(row.rho_star) << " "
        << num_str(row.test_loss) << " " << num_str(row.test_mean) << " "
        << num_str(row.test_variance) << "\n";
}

inline void write_manifest(const std::string& path,
                           const std::string& subcommand, const Config& cfg,
                           std::uint64_t seed, long wall_time_ms,
                           const std::vector<std::string>& outputs) {
  auto out = detail::open_out(path);
  out << "subcommand=" << subcommand << "\n";
  out << "config_hash=" << hash_str(cfg.hash()) << "\n";
  out << "seed=" << seed << "\n";
  out << "version=" << kVersion << "\n";
  out << "wall_time_ms=" << wall_time_ms << "\n";
  out << "outputs=";
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (i) out << ",";
    out << outputs[i];
  }
  out << "\n";
  for (const auto& [k, v] : cfg.entries())
    out << "config." << k << "=" << v << "\n";
}

}  // namespace rexmv
