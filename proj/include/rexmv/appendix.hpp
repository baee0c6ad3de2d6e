#pragma once

#include <cmath>
#include <string>

#include "rexmv/errors.hpp"
#include "rexmv/linalg.hpp"

namespace rexmv {
namespace appendix {

// Convexity helper family. Every function evaluates its closed form with
// removable singularities patched by series, and rational forms rescaled
// by e^{-x} where the naive display would overflow.

inline double f(double x) { return expm1_over_x(x); }

inline double f_prime(double x) {
  if (std::abs(x) < 1e-3)
    return 0.5 + x * (1.0 / 3.0 + x * (0.125 + x / 30.0));
  return ((x - 1.0) * std::exp(x) + 1.0) / (x * x);
}

inline double f_second(double x) {
  // The closed form cancels like x^3 near 0; hand over to the series
  // where the x^4 truncation already beats the cancellation noise.
  if (std::abs(x) < 1.5e-2)
    return 1.0 / 3.0 + x * (0.25 + x * (0.1 + x / 36.0));
  return ((x * x - 2.0 * x + 2.0) * std::exp(x) - 2.0) / (x * x * x);
}

inline double g(double x) {
  if (x < 0.0) throw DomainError("g needs x >= 0");
  if (x == 0.0) return 1.0;
  const double e = std::expm1(x);
  return std::expm1(x * x) / (e * e);
}

inline double g_second(double x) {
  if (x < 0.0) throw DomainError("g'' needs x >= 0");
  if (x < 3e-3)
    return 11.0 / 6.0 +
           x * (-3.5 + x * (91.0 / 20.0 - x * 149.0 / 36.0));
  const double e = std::expm1(x);
  const double ex = e + 1.0;
  const double emxx = std::expm1(x * x);
  const double exx = emxx + 1.0;
  const double num = (4.0 * x * x + 2.0) * exx * e * e -
                     8.0 * x * exx * ex * e +
                     2.0 * emxx * ex * (2.0 * e + 3.0);
  return num / (e * e * e * e);
}

inline double u0(double x) {
  if (x < 0.0) throw DomainError("u0 needs x >= 0");
  if (x == 0.0) return 1.0;
  const double em = std::expm1(-x);
  return x * x * std::exp(-x) / (em * em);
}

inline double u1(double x) {
  if (x < 0.0) throw DomainError("u1 needs x >= 0");
  return 2.0 * std::expm1(x) - x * (std::exp(x) + 1.0);
}

inline double u0_prime(double x) {
  if (x < 0.0) throw DomainError("u0' needs x >= 0");
  if (x < 1e-3) return -x / 6.0 + x * x * x / 60.0;
  if (x <= 1.0) {
    const double e = std::expm1(x);
    return x * std::exp(x) * u1(x) / (e * e * e);
  }
  // u1(x) e^{-x} stays representable for every x.
  const double u1s = (2.0 - x) - (2.0 + x) * std::exp(-x);
  const double den = 1.0 - std::exp(-x);
  return x * std::exp(-x) * u1s / (den * den * den);
}

inline double h1(double x) {
  if (x < 0.0) throw DomainError("h1 needs x >= 0");
  const double y = x * x;
  if (y < 1e-6) return 0.5 + y / 6.0;
  if (y <= 1.0) {
    const double e = std::expm1(y);
    return std::exp(y) * (e - y) / (e * e);
  }
  const double ey = std::exp(-y);
  const double den = 1.0 - ey;
  return (1.0 - ey - y * ey) / (den * den);
}

inline double h2(double x) {
  if (x < 0.0) throw DomainError("h2 needs x >= 0");
  if (x < 1e-3) return -1.0 / 12.0 + 7.0 * x * x / 80.0;
  return (u0(x) - u0(x * x)) / (x * x);
}

inline double h(double x) { return 2.0 * (h1(x) + h2(x)); }

inline double xi(double y) {
  if (y < 1.0) throw DomainError("xi needs y >= 1");
  const double ln = std::log(y);
  const double ym1 = y - 1.0;
  return y * (y * (2.0 - ln) - (2.0 + ln)) + ym1 * ym1 * ym1;
}

}  // namespace appendix

inline double appendix_function(const std::string& name, double x) {
  using namespace appendix;
  if (name == "f") return f(x);
  if (name == "f'") return f_prime(x);
  if (name == "f''") return f_second(x);
  if (name == "g") return g(x);
  if (name == "g''") return g_second(x);
  if (name == "h") return h(x);
  if (name == "h1") return h1(x);
  if (name == "h2") return h2(x);
  if (name == "u0") return u0(x);
  if (name == "u0'") return u0_prime(x);
  if (name == "u1") return u1(x);
  if (name == "xi") return xi(x);
  throw DomainError("unknown appendix function: " + name);
}

}  // namespace rexmv
