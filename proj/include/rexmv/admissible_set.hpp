#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "rexmv/linalg.hpp"
#include "rexmv/rng.hpp"

namespace rexmv {

// How a ball set maps to its worst-case point. MinNorm is the exact
// minimum-norm element rho (1 - R/|rho|); TableCompat is the opt-in
// variant scaling by (1 - R/|rho|^2) that reproduces the published
// elliptic worst-case vectors. Cubes are unaffected by the mode.
enum class Projection { MinNorm, TableCompat };

struct Cube {
  Vec lower;
  Vec upper;
};

struct Ball {
  Vec center;
  double radius = 0.0;
};

struct AdmissibleSet {
  std::variant<Cube, Ball> shape;
  // Relaxed mode admits zero lower bounds on a cube; strict mode keeps the
  // set away from the origin.
  bool allow_zero_lower = false;
  Projection projection = Projection::MinNorm;
};

inline int dim(const AdmissibleSet& s) {
  if (const auto* c = std::get_if<Cube>(&s.shape))
    return static_cast<int>(c->lower.size());
  return static_cast<int>(std::get<Ball>(s.shape).center.size());
}

inline void check_valid(const AdmissibleSet& s) {
  if (const auto* c = std::get_if<Cube>(&s.shape)) {
    if (c->lower.size() == 0 || c->lower.size() != c->upper.size())
      throw InvalidSet("cube bounds empty or of unequal dimension");
    for (Eigen::Index j = 0; j < c->lower.size(); ++j) {
      const double lo = c->lower[j], hi = c->upper[j];
      const bool lo_ok = s.allow_zero_lower ? lo >= 0.0 : lo > 0.0;
      if (!lo_ok || !(lo <= hi))
        throw InvalidSet("cube needs 0 < lower <= upper componentwise");
    }
    return;
  }
  const auto& b = std::get<Ball>(s.shape);
  if (b.center.size() == 0) throw InvalidSet("ball center is empty");
  if (!(b.radius > 0.0)) throw InvalidSet("ball radius must be positive");
  if (!(b.radius < b.center.norm()))
    throw InvalidSet("ball radius must stay below the center norm");
  if (!(b.center.minCoeff() > 0.0))
    throw InvalidSet("ball center must be componentwise positive");
}

// Worst-case (minimum L2 norm) element of the set. For a cube this is the
// all-lower-bounds vertex; for a ball the center shrunk toward the origin.
inline Vec project_min_norm(const AdmissibleSet& s) {
  check_valid(s);
  if (const auto* c = std::get_if<Cube>(&s.shape)) return c->lower;
  const auto& b = std::get<Ball>(s.shape);
  const double nrm = b.center.norm();
  const double factor = s.projection == Projection::MinNorm
                            ? 1.0 - b.radius / nrm
                            : 1.0 - b.radius / (nrm * nrm);
  return factor * b.center;
}

inline bool contains(const AdmissibleSet& s, const Vec& p) {
  if (p.size() != dim(s)) throw DimensionMismatch("point dimension mismatch");
  if (const auto* c = std::get_if<Cube>(&s.shape)) {
    for (Eigen::Index j = 0; j < p.size(); ++j)
      if (p[j] < c->lower[j] || p[j] > c->upper[j]) return false;
    return true;
  }
  const auto& b = std::get<Ball>(s.shape);
  return (p - b.center).norm() <= b.radius;
}

// Deterministic sample of set members: the minimum-norm element first, then
// alternating interior and boundary points.
inline std::vector<Vec> sample_boundary_and_interior(const AdmissibleSet& s,
                                                     int count,
                                                     std::uint64_t seed) {
  check_valid(s);
  if (count < 1) throw OutOfRange("count must be at least 1");
  const int d = dim(s);
  std::vector<Vec> out;
  out.reserve(count);

  AdmissibleSet min_mode = s;
  min_mode.projection = Projection::MinNorm;
  out.push_back(project_min_norm(min_mode));

  for (int i = 1; i < count; ++i) {
    CounterRng rng(seed, Stream::SetSampling, static_cast<std::uint64_t>(i));
    Vec p(d);
    if (const auto* c = std::get_if<Cube>(&s.shape)) {
      for (int j = 0; j < d; ++j)
        p[j] = c->lower[j] + rng.uniform(j) * (c->upper[j] - c->lower[j]);
      if (i % 2 == 0) {
        // Snap one coordinate to a face to hit the boundary exactly.
        const int j = static_cast<int>(rng.word(d) % d);
        p[j] = (rng.word(d + 1) & 1) ? c->lower[j] : c->upper[j];
      }
    } else {
      const auto& b = std::get<Ball>(s.shape);
      Vec z(d);
      for (int j = 0; j < d; ++j) z[j] = rng.normal(j);
      if (z.norm() == 0.0) z.setConstant(1.0);
      // Interior points are uniform in volume; boundary points sit a hair
      // inside the sphere so the exact membership test stays true.
      double scale = b.radius * (1.0 - 1e-12);
      if (i % 2 == 1)
        scale *= std::pow(rng.uniform(2 * d), 1.0 / d);
      p = b.center + scale / z.norm() * z;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace rexmv
