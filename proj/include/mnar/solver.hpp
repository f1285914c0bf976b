#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "mnar/svd.hpp"

namespace mnar {

struct SolverOptions {
  int max_iters = 500;
  double rel_tol = 1e-7;
  bool acceleration = true;
  double lambda_constant = 2.0;  // C_lambda in the tuning rule

  void validate() const {
    if (max_iters < 1) throw input_error("max_iters must be >= 1");
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw input_error("rel_tol must lie in (0,1)");
    if (!(lambda_constant > 0.0)) throw input_error("lambda_constant must be positive");
  }
};

struct SolveDiagnostics {
  int iterations = 0;
  double final_objective = 0.0;
  double rel_change = 0.0;
  bool converged = false;
};

// Tuning rule for the nuclear-norm penalty: c * sigma * sqrt(max(n, m)).
inline double select_lambda(double sigma, Index n, Index m, double c_lambda) {
  if (sigma < 0.0) throw input_error("select_lambda: sigma must be nonnegative");
  if (n < 1 || m < 1) throw input_error("select_lambda: dimensions must be positive");
  if (!(c_lambda > 0.0)) throw input_error("select_lambda: c_lambda must be positive");
  return c_lambda * sigma * std::sqrt(static_cast<double>(std::max(n, m)));
}

// Pilot noise scale from a fully observed block: RMS of the residual after
// the best rank-r approximation. Used to set lambda before any fit exists.
inline double estimate_sigma_initial(const Matrix& block, Index r) {
  const Index k = std::min(block.rows(), block.cols());
  if (r < 0 || r >= k) throw input_error("estimate_sigma_initial: rank out of range");
  const Vector s = singular_values(block);
  double resid2 = block.squaredNorm();
  for (Index i = 0; i < r; ++i) resid2 -= s[i] * s[i];
  resid2 = std::max(0.0, resid2);
  return std::sqrt(resid2 / static_cast<double>(block.rows() * block.cols()));
}

// Pilot scale with a relative floor: an exactly rank-r block would yield
// sigma = 0 and hence lambda = 0, for which the proximal step degenerates
// to the identity and never fills the missing entries. The floor puts the
// resulting penalty near 1e-6 of the data Frobenius norm, far below any
// real noise level.
inline double pilot_sigma(const Matrix& block, Index r) {
  const double sigma = estimate_sigma_initial(block, r);
  const double rms = block.norm() / std::sqrt(static_cast<double>(block.size()));
  const double min_dim = static_cast<double>(std::min(block.rows(), block.cols()));
  return std::max(sigma, 1e-6 * rms * std::sqrt(min_dim));
}

// Eigenvalue-ratio rank estimate: argmax_k s_k / s_{k+1}, ties toward the
// smaller k.
inline Index estimate_rank(const Matrix& block, Index r_max) {
  const Index k = std::min(block.rows(), block.cols());
  if (r_max < 1 || r_max >= k) throw input_error("estimate_rank: r_max out of range");
  const Vector s = singular_values(block);
  Index best = 1;
  double best_ratio = -1.0;
  for (Index j = 1; j <= r_max; ++j) {
    const double hi = s[j - 1], lo = s[j];
    const double ratio =
        lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = j;
    }
  }
  return best;
}

namespace detail {

// Soft-thresholded SVD that also reports the nuclear norm of the result,
// which the solver needs for its objective at no extra cost.
inline Matrix svt_with_norm(const Matrix& b, double lam, double& nn) {
  if (lam == 0.0) {
    nn = 0.0;  // caller multiplies by lam
    return b;
  }
  const Index n = b.rows(), m = b.cols(), k = std::min(n, m);
  if (k <= kSmallSvdDim) {
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector s = svd.singularValues();
    Index kept = 0;
    nn = 0.0;
    while (kept < s.size() && s[kept] > lam) nn += s[kept++] - lam;
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
  nn = 0.0;
  if (kept == 0) return Matrix::Zero(n, m);
  Matrix w(k, kept);
  Vector scale(kept);
  for (Index i = 0; i < kept; ++i) {
    const double s = std::sqrt(eig.eigenvalues()[k - 1 - i]);
    w.col(i) = eig.eigenvectors().col(k - 1 - i);
    scale[i] = (s - lam) / s;
    nn += s - lam;
  }
  if (rows_short) return w * (scale.asDiagonal() * (w.transpose() * b));
  return ((b * w) * scale.asDiagonal()) * w.transpose();
}

}  // namespace detail

// Nuclear-norm-penalized completion
//   min_A (1/2) ||mask o (Y - A)||_F^2 + lam ||A||_*
// by proximal gradient with unit step (the masked quadratic is 1-Lipschitz):
//   A_{k+1} = svt(A_k - mask o (A_k - Y), lam).
// Acceleration is FISTA momentum with a restart whenever the objective
// would increase, which preserves a non-increasing objective sequence.
// Non-convergence within max_iters is reported, not thrown.
inline Matrix solve_nuclear(const Matrix& values, const Mask& mask, double lam,
                            const SolverOptions& opts, SolveDiagnostics* diag = nullptr) {
  opts.validate();
  if (!(lam >= 0.0)) throw input_error("solve_nuclear: lam must be nonnegative");
  const Index n = values.rows(), m = values.cols();
  if (mask.rows() != n || mask.cols() != m) throw input_error("solve_nuclear: mask shape mismatch");
  for (Index i = 0; i < n; ++i)
    if (!mask.row(i).any()) throw input_error("solve_nuclear: row with no observed entry");
  for (Index j = 0; j < m; ++j)
    if (!mask.col(j).any()) throw input_error("solve_nuclear: column with no observed entry");
  const Matrix y = mask.select(values, 0.0);
  if (!y.allFinite()) throw numeric_error("solve_nuclear: non-finite observed value");

  auto objective = [&](const Matrix& a, double nn) {
    const Matrix r = mask.select(y - a, 0.0);
    return 0.5 * r.squaredNorm() + lam * nn;
  };

  Matrix a = y;  // A_0 = mask o Y
  Matrix a_prev = a;
  double nn0 = lam > 0.0 ? nuclear_norm(a) : 0.0;
  double f_prev = objective(a, nn0);
  double t_momentum = 1.0;
  SolveDiagnostics d;
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    Matrix b = a;
    if (opts.acceleration && iter > 1) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
      b = a + ((t_momentum - 1.0) / t_next) * (a - a_prev);
      t_momentum = t_next;
    }
    double nn = 0.0;
    Matrix a_next = detail::svt_with_norm(mask.select(y, b), lam, nn);
    double f_next = objective(a_next, nn);
    if (opts.acceleration && f_next > f_prev) {
      // Restart: plain proximal step from the last accepted iterate.
      t_momentum = 1.0;
      a_next = detail::svt_with_norm(mask.select(y, a), lam, nn);
      f_next = objective(a_next, nn);
    }
    const double denom = std::max(a.norm(), 1e-300);
    d.rel_change = (a_next - a).norm() / denom;
    d.iterations = iter;
    d.final_objective = f_next;
    a_prev = std::move(a);
    a = std::move(a_next);
    f_prev = f_next;
    if (d.rel_change <= opts.rel_tol) {
      d.converged = true;
      break;
    }
  }
  if (diag) *diag = d;
  return a;
}

}  // namespace mnar
