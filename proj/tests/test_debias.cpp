#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mnar/debias.hpp"
#include "mnar/rng.hpp"
#include "mnar/solver.hpp"

using namespace mnar;

namespace {

Matrix random_matrix(Index n, Index m, CounterRng& rng, double scale = 1.0) {
  Matrix b(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) b(i, j) = scale * rng.next_normal();
  return b;
}

Matrix random_rank_r(Index n, Index m, Index r, CounterRng& rng, double scale = 1.0) {
  return random_matrix(n, r, rng, scale) * random_matrix(r, m, rng, 1.0);
}

}  // namespace

TEST_CASE("rank projection basics") {
  CounterRng rng(21);
  const Matrix b = random_rank_r(12, 10, 3, rng);
  CHECK((rank_r_project(b, 3) - b).norm() < 1e-10 * b.norm());

  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3;
  d(1, 1) = 2;
  d(2, 2) = 1;
  const Matrix p = rank_r_project(d, 2);
  CHECK(p(0, 0) == Catch::Approx(3.0).margin(1e-12));
  CHECK(p(1, 1) == Catch::Approx(2.0).margin(1e-12));
  CHECK(p(2, 2) == Catch::Approx(0.0).margin(1e-12));

  const Matrix g = random_matrix(7, 9, rng);
  CHECK(rank_r_project(g, 7) == g);
  CHECK_THROWS_AS(rank_r_project(g, 8), input_error);
  CHECK_THROWS_AS(rank_r_project(g, 0), input_error);
}

TEST_CASE("eckart-young: the projection dominates random rank-r candidates") {
  CounterRng rng(22);
  const Matrix b = random_matrix(14, 11, rng);
  const Index r = 3;
  const Matrix p = rank_r_project(b, r);
  const double best = (b - p).norm();
  for (int c = 0; c < 100; ++c) {
    const Matrix cand = random_rank_r(14, 11, r, rng, 0.5 + rng.next_uniform());
    CHECK(best <= (b - cand).norm() + 1e-10);
  }
}

TEST_CASE("debias projection splices observed data over the fit") {
  CounterRng rng(23);
  const Matrix y = random_matrix(9, 8, rng);
  const Matrix fit = random_matrix(9, 8, rng);
  const Mask full = Mask::Constant(9, 8, true);
  // Fully observed: the fit is ignored entirely.
  CHECK((debias_project(fit, y, full, 2) - rank_r_project(y, 2)).norm() < 1e-12);

  // Noiseless rank-r with correct fill is a fixed point.
  const Matrix m = random_rank_r(10, 9, 2, rng);
  Mask mask = Mask::Constant(10, 9, true);
  mask(9, 8) = mask(8, 8) = false;
  CHECK((debias_project(m, m, mask, 2) - m).norm() < 1e-9 * m.norm());

  CHECK_THROWS_AS(debias_project(fit, y, Mask::Constant(3, 3, true), 1), input_error);
}

TEST_CASE("debiased output never exceeds rank r") {
  CounterRng rng(24);
  const Matrix y = random_matrix(20, 16, rng);
  const Matrix fit = random_matrix(20, 16, rng);
  Mask mask = Mask::Constant(20, 16, true);
  mask(19, 15) = false;
  const Matrix out = debias_project(fit, y, mask, 3);
  const Vector s = singular_values(out);
  CHECK(s[3] <= 1e-10 * s[0]);
}

TEST_CASE("pipeline on a noiseless block-missing rank-2 panel") {
  CounterRng rng(25);
  const Matrix m = random_rank_r(30, 30, 2, rng);
  Mask mask = Mask::Constant(30, 30, true);
  for (Index i = 27; i < 30; ++i)
    for (Index j = 27; j < 30; ++j) mask(i, j) = false;
  SolverOptions opts;
  opts.max_iters = 3000;
  const double lam = 1e-6 * mask.select(m, 0.0).matrix().norm();
  const Matrix fit = solve_nuclear(m, mask, lam, opts);
  const Matrix debiased = debias_project(fit, m, mask, 2);
  CHECK((debiased - m).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("de-shrinking identities") {
  CounterRng rng(26);
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 8 + static_cast<Index>(rng.next_below(12));
    const Index m = 8 + static_cast<Index>(rng.next_below(12));
    const Index r = 1 + static_cast<Index>(rng.next_below(3));
    const Matrix b = random_rank_r(n, m, r, rng, 2.0);
    const double lam = 0.5 + 2.0 * rng.next_uniform();
    const auto f = deshrink_factors(b, lam, r);

    // x_hat^T x_hat = x_tilde^T x_tilde + lam I (and likewise for z).
    const ThinSvd svd = thin_svd(b);
    const Vector root_s = svd.s.head(r).cwiseSqrt();
    const Matrix xt = svd.u.leftCols(r) * root_s.asDiagonal();
    const Matrix zt = svd.v.leftCols(r) * root_s.asDiagonal();
    const Matrix ident = Matrix::Identity(r, r);
    CHECK((f.x_hat.transpose() * f.x_hat - (xt.transpose() * xt + lam * ident)).norm() < 1e-8);
    CHECK((f.z_hat.transpose() * f.z_hat - (zt.transpose() * zt + lam * ident)).norm() < 1e-8);
  }
}

TEST_CASE("de-shrinking with zero penalty is the identity") {
  CounterRng rng(27);
  const Matrix b = random_rank_r(9, 7, 2, rng);
  const auto f = deshrink_factors(b, 0.0, 2);
  CHECK((f.x_hat * f.z_hat.transpose() - b).norm() < 1e-9 * b.norm());
}

TEST_CASE("scalar de-shrinking case") {
  // m_tilde = 4 u v^T with unit u, v and lam = 9: x_tilde^T x_tilde = 4,
  // x_hat^T x_hat = 13.
  Vector u = Vector::Zero(6), v = Vector::Zero(5);
  u[2] = 1.0;
  v[1] = 1.0;
  const Matrix b = 4.0 * u * v.transpose();
  const auto f = deshrink_factors(b, 9.0, 1);
  CHECK(f.x_hat.squaredNorm() == Catch::Approx(13.0).epsilon(1e-10));
  CHECK(f.z_hat.squaredNorm() == Catch::Approx(13.0).epsilon(1e-10));
}

TEST_CASE("rank collapse of the penalized fit is an error") {
  CounterRng rng(28);
  const Matrix b = random_rank_r(10, 10, 1, rng);
  CHECK_THROWS_AS(deshrink_factors(b, 1.0, 2), numeric_error);
}
