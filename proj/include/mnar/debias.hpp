#pragma once

#include <algorithm>
#include <cmath>

#include "mnar/svd.hpp"

namespace mnar {

// De-shrunken factor pair of a penalized fit: row factors x_hat (n x r) and
// column factors z_hat (t x r), columns ordered by descending singular
// value, satisfying x_hat^T x_hat = x_tilde^T x_tilde + lambda I.
struct FactorPair {
  Matrix x_hat;
  Matrix z_hat;
  double lambda = 0.0;
  Index rank = 0;
};

// Best rank-r approximation (truncated SVD reconstruction).
inline Matrix rank_r_project(const Matrix& b, Index r) {
  const Index k = std::min(b.rows(), b.cols());
  if (r < 1 || r > k) throw input_error("rank_r_project: rank out of range");
  if (r == k) return b;
  const ThinSvd svd = thin_svd(b);
  return svd.u.leftCols(r) * svd.s.head(r).asDiagonal() * svd.v.leftCols(r).transpose();
}

// Projection debiasing step: splice raw data over the observed cells of the
// penalized fit and take the best rank-r approximation of the result.
inline Matrix debias_project(const Matrix& m_tilde, const Matrix& values, const Mask& mask,
                             Index r) {
  if (m_tilde.rows() != values.rows() || m_tilde.cols() != values.cols() ||
      mask.rows() != values.rows() || mask.cols() != values.cols()) {
    throw input_error("debias_project: shape mismatch");
  }
  return rank_r_project(mask.select(values, m_tilde), r);
}

namespace detail {

// Symmetric PSD square root via eigendecomposition of the r x r core.
inline Matrix sqrt_sym_psd(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) throw numeric_error("sqrt_sym_psd: eigendecomposition failed");
  Vector d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

// Factors of the rank-r projected penalized fit, rescaled to undo the
// shrinkage of the nuclear-norm penalty:
//   x_tilde = U sqrt(D), z_tilde = V sqrt(D) from the rank-r SVD,
//   x_hat = x_tilde (I + lam (x_tilde^T x_tilde)^{-1})^{1/2}, z_hat likewise.
// A collapsed fit (r-th singular value below 1e-12 of the largest) is an
// error: the downstream variance formulas are invalid in that case.
inline FactorPair deshrink_factors(const Matrix& m_tilde, double lam, Index r) {
  const Index k = std::min(m_tilde.rows(), m_tilde.cols());
  if (r < 1 || r > k) throw input_error("deshrink_factors: rank out of range");
  if (!(lam >= 0.0)) throw input_error("deshrink_factors: negative lambda");
  const ThinSvd svd = thin_svd(m_tilde);
  if (!(svd.s[r - 1] > 1e-12 * svd.s[0])) {
    throw numeric_error("rank collapse: penalized fit has rank below the requested " +
                        std::to_string(r));
  }
  const Vector root_s = svd.s.head(r).cwiseSqrt();
  Matrix x_tilde = svd.u.leftCols(r) * root_s.asDiagonal();
  Matrix z_tilde = svd.v.leftCols(r) * root_s.asDiagonal();
  FactorPair out;
  out.lambda = lam;
  out.rank = r;
  if (lam == 0.0) {
    out.x_hat = std::move(x_tilde);
    out.z_hat = std::move(z_tilde);
    return out;
  }
  const Matrix ident = Matrix::Identity(r, r);
  const Matrix core_x = x_tilde.transpose() * x_tilde;
  const Matrix core_z = z_tilde.transpose() * z_tilde;
  out.x_hat = x_tilde * detail::sqrt_sym_psd(ident + lam * core_x.inverse());
  out.z_hat = z_tilde * detail::sqrt_sym_psd(ident + lam * core_z.inverse());
  return out;
}

}  // namespace mnar
