#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mnar/error.hpp"
#include "mnar/panel.hpp"

namespace mnar {

struct ThinSvd {
  Matrix u;  // n x k
  Vector s;  // k, descending
  Matrix v;  // m x k
};

namespace detail {

// Sign convention: the largest-magnitude coordinate of each left singular
// vector is made nonnegative (ties broken toward the lowest index), with the
// right vector flipped to match. Keeps factor output deterministic across
// platforms and backends.
inline void canonicalize_signs(Matrix& u, Matrix& v) {
  for (Index k = 0; k < u.cols(); ++k) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, k));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (u(arg, k) < 0.0) {
      u.col(k) = -u.col(k);
      if (k < v.cols()) v.col(k) = -v.col(k);
    }
  }
}

constexpr Index kSmallSvdDim = 64;

}  // namespace detail

// Thin SVD with singular values in descending order. Small problems go
// through BDCSVD; larger ones through an eigendecomposition of the Gram
// matrix on the shorter side, which is substantially faster for the
// repeated decompositions the solver performs.
inline ThinSvd thin_svd(const Matrix& b) {
  const Index n = b.rows(), m = b.cols(), k = std::min(n, m);
  ThinSvd out;
  if (k <= detail::kSmallSvdDim) {
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    out.s = svd.singularValues();
    detail::canonicalize_signs(out.u, out.v);
    return out;
  }
  const bool rows_short = n <= m;
  Matrix gram = Matrix::Zero(k, k);
  if (rows_short) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(b);
  } else {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw numeric_error("eigendecomposition failed");
  // Ascending eigenvalues; reverse into descending singular values.
  out.s.resize(k);
  Matrix w(k, k);
  for (Index i = 0; i < k; ++i) {
    out.s[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[k - 1 - i]));
    w.col(i) = eig.eigenvectors().col(k - 1 - i);
  }
  const double cutoff = out.s.size() ? out.s[0] * 1e-15 : 0.0;
  if (rows_short) {
    out.u = std::move(w);
    out.v.resize(m, k);
    for (Index i = 0; i < k; ++i) {
      out.v.col(i) = out.s[i] > cutoff ? Vector(b.transpose() * out.u.col(i) / out.s[i])
                                       : Vector(Vector::Zero(m));
    }
  } else {
    out.v = std::move(w);
    out.u.resize(n, k);
    for (Index i = 0; i < k; ++i) {
      out.u.col(i) =
          out.s[i] > cutoff ? Vector(b * out.v.col(i) / out.s[i]) : Vector(Vector::Zero(n));
    }
  }
  detail::canonicalize_signs(out.u, out.v);
  return out;
}

inline Vector singular_values(const Matrix& b) { return thin_svd(b).s; }

// U max(S - lam, 0) V^T without materializing the discarded directions;
// the minimizer of (1/2)||A - B||_F^2 + lam ||A||_*.
inline Matrix soft_threshold_svd(const Matrix& b, double lam) {
  if (!(lam >= 0.0)) throw input_error("soft_threshold_svd: lam must be nonnegative");
  if (!b.allFinite()) throw numeric_error("soft_threshold_svd: non-finite input");
  if (lam == 0.0) return b;
  const Index n = b.rows(), m = b.cols(), k = std::min(n, m);
  if (k <= detail::kSmallSvdDim) {
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector s = svd.singularValues();
    Index kept = 0;
    while (kept < s.size() && s[kept] > lam) ++kept;
    if (kept == 0) return Matrix::Zero(n, m);
    return svd.matrixU().leftCols(kept) * (s.head(kept).array() - lam).matrix().asDiagonal() *
           svd.matrixV().leftCols(kept).transpose();
  }
  const bool rows_short = n <= m;
  Matrix gram = Matrix::Zero(k, k);
  if (rows_short) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(b);
  } else {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw numeric_error("eigendecomposition failed");
  const double lam2 = lam * lam;
  Index kept = 0;
  for (Index i = k - 1; i >= 0 && eig.eigenvalues()[i] > lam2; --i) ++kept;
  if (kept == 0) return Matrix::Zero(n, m);
  Matrix w(k, kept);        // eigenvectors of the retained directions
  Vector scale(kept);       // (s - lam) / s
  for (Index i = 0; i < kept; ++i) {
    const double s = std::sqrt(eig.eigenvalues()[k - 1 - i]);
    w.col(i) = eig.eigenvectors().col(k - 1 - i);
    scale[i] = (s - lam) / s;
  }
  if (rows_short) {
    // B = U S V^T, W = U_kept: result = W diag(scale) W^T B
    return w * (scale.asDiagonal() * (w.transpose() * b));
  }
  return ((b * w) * scale.asDiagonal()) * w.transpose();
}

// Sum of singular values.
inline double nuclear_norm(const Matrix& b) { return thin_svd(b).s.sum(); }

}  // namespace mnar
