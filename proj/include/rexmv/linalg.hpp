#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>

#include "rexmv/errors.hpp"

namespace rexmv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::string num_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// (e^x - 1)/x, continuous through the removable singularity at 0.
inline double expm1_over_x(double x) noexcept {
  if (std::abs(x) < 1e-8) return 1.0 + x * (0.5 + x / 6.0);
  return std::expm1(x) / x;
}

// Symmetric positive-definite square root via eigendecomposition.
// Eigenvalues must exceed eps.
inline Mat sym_sqrt(const Mat& a, double eps = 0.0) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success)
    throw FactorizationFailure("eigendecomposition did not converge");
  const Vec& lam = es.eigenvalues();
  if (!(lam.minCoeff() > eps))
    throw NotPositiveDefinite("eigenvalue " + num_str(lam.minCoeff()) +
                              " not above " + num_str(eps));
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// ln det of a symmetric positive-definite matrix via its eigenvalues.
inline double log_det_spd(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success)
    throw FactorizationFailure("eigendecomposition did not converge");
  const Vec& lam = es.eigenvalues();
  if (!(lam.minCoeff() > 0.0))
    throw NotPositiveDefinite("eigenvalue " + num_str(lam.minCoeff()) +
                              " not positive");
  return lam.array().log().sum();
}

}  // namespace rexmv
