#include <catch2/catch_amalgamated.hpp>

#include <cmath>

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

// Oracle nuclear norm via Eigen's Jacobi SVD, independent of the library's
// decomposition path.
double oracle_nuclear_norm(const Matrix& b) {
  return Eigen::JacobiSVD<Matrix>(b).singularValues().sum();
}

double prox_objective(const Matrix& candidate, const Matrix& b, double lam) {
  return 0.5 * (candidate - b).squaredNorm() + lam * oracle_nuclear_norm(candidate);
}

Matrix oracle_svt(const Matrix& b, double lam) {
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = svd.singularValues();
  for (Index i = 0; i < s.size(); ++i) s[i] = std::max(0.0, s[i] - lam);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

TEST_CASE("soft threshold on a diagonal matrix") {
  Matrix b = Matrix::Zero(2, 2);
  b(0, 0) = 3.0;
  b(1, 1) = 1.0;
  const Matrix p = soft_threshold_svd(b, 2.0);
  CHECK(p(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(p(1, 1) == Catch::Approx(0.0).margin(1e-12));
  CHECK(std::abs(p(0, 1)) < 1e-12);
}

TEST_CASE("soft threshold identity and annihilation cases") {
  CounterRng rng(1);
  const Matrix b = random_matrix(8, 5, rng);
  CHECK((soft_threshold_svd(b, 0.0) - b).norm() < 1e-12 * b.norm());
  const double smax = Eigen::JacobiSVD<Matrix>(b).singularValues()[0];
  CHECK(soft_threshold_svd(b, smax * 1.000001).norm() == 0.0);
  Matrix bad = b;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(soft_threshold_svd(bad, 1.0), numeric_error);
}

TEST_CASE("prox correctness: thresholded svd beats random candidates") {
  CounterRng rng(2);
  for (int inst = 0; inst < 5; ++inst) {
    const Index n = 6 + static_cast<Index>(rng.next_below(60));
    const Index m = 6 + static_cast<Index>(rng.next_below(60));
    const Matrix b = random_matrix(n, m, rng);
    const double lam = 0.3 + 2.0 * rng.next_uniform();
    const Matrix p = soft_threshold_svd(b, lam);
    const double fp = prox_objective(p, b, lam);
    for (int c = 0; c < 100; ++c) {
      const Matrix cand = p + random_matrix(n, m, rng, 0.2 * rng.next_uniform());
      CHECK(fp <= prox_objective(cand, b, lam) + 1e-9);
    }
  }
}

TEST_CASE("gram path agrees with jacobi svd on large matrices") {
  CounterRng rng(3);
  const Matrix b = random_matrix(90, 130, rng);
  for (double lam : {0.5, 3.0, 9.0}) {
    CHECK((soft_threshold_svd(b, lam) - oracle_svt(b, lam)).norm() < 1e-9 * b.norm());
  }
  const Vector s = singular_values(b);
  const Vector s_oracle = Eigen::JacobiSVD<Matrix>(b).singularValues();
  CHECK((s - s_oracle).norm() < 1e-9 * s_oracle[0]);
}

TEST_CASE("full-mask solve equals the closed-form prox") {
  CounterRng rng(4);
  SolverOptions opts;
  for (int inst = 0; inst < 20; ++inst) {
    const Matrix y = random_matrix(30, 22, rng);
    const double lam = (0.2 + rng.next_uniform()) * 3.0;
    const Mask mask = Mask::Constant(30, 22, true);
    SolveDiagnostics diag;
    const Matrix a = solve_nuclear(y, mask, lam, opts, &diag);
    const Matrix closed = oracle_svt(y, lam);
    CHECK((a - closed).norm() <= 1e-6 * std::max(1.0, closed.norm()));
    CHECK(diag.converged);
  }
}

TEST_CASE("full mask with zero penalty returns the data") {
  CounterRng rng(5);
  const Matrix y = random_matrix(12, 9, rng);
  const Mask mask = Mask::Constant(12, 9, true);
  const Matrix a = solve_nuclear(y, mask, 0.0, SolverOptions{});
  CHECK((a - y).norm() < 1e-12 * y.norm());
}

TEST_CASE("rank-1 noiseless completion recovers a masked entry") {
  CounterRng rng(6);
  Vector u(20), v(20);
  for (Index i = 0; i < 20; ++i) {
    u[i] = 0.5 + rng.next_uniform();
    v[i] = 0.5 + rng.next_uniform();
  }
  const Matrix y = u * v.transpose();
  Mask mask = Mask::Constant(20, 20, true);
  mask(7, 13) = false;
  SolverOptions opts;
  opts.max_iters = 2000;
  const Matrix a = solve_nuclear(y, mask, 1e-6 * y.norm(), opts);
  CHECK(std::abs(a(7, 13) - u[7] * v[13]) < 1e-3);
}

TEST_CASE("objective descends monotonically without acceleration") {
  CounterRng rng(7);
  const Matrix y = random_matrix(18, 14, rng);
  Mask mask = Mask::Constant(18, 14, true);
  for (int k = 0; k < 40; ++k)
    mask(static_cast<Index>(rng.next_below(18)), static_cast<Index>(rng.next_below(14))) = false;
  for (Index j = 0; j < 14; ++j) mask(0, j) = true;
  for (Index i = 0; i < 18; ++i) mask(i, 0) = true;
  SolverOptions opts;
  opts.acceleration = false;
  opts.rel_tol = 1e-12;
  const double lam = 1.5;
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 25; ++iters) {
    SolverOptions o = opts;
    o.max_iters = iters;
    SolveDiagnostics diag;
    solve_nuclear(y, mask, lam, o, &diag);
    CHECK(diag.final_objective <= prev + 1e-9);
    prev = diag.final_objective;
  }
  // With acceleration the final objective still does not exceed the first.
  SolverOptions accel;
  accel.max_iters = 1;
  SolveDiagnostics first;
  solve_nuclear(y, mask, lam, accel, &first);
  accel.max_iters = 60;
  SolveDiagnostics last;
  solve_nuclear(y, mask, lam, accel, &last);
  CHECK(last.final_objective <= first.final_objective + 1e-9);
}

TEST_CASE("solve is scale equivariant") {
  CounterRng rng(8);
  const Matrix y = random_matrix(15, 11, rng);
  Mask mask = Mask::Constant(15, 11, true);
  mask(3, 4) = mask(9, 2) = mask(14, 10) = false;
  const double lam = 0.8, c = 37.5;
  const Matrix a1 = solve_nuclear(y, mask, lam, SolverOptions{});
  const Matrix a2 = solve_nuclear(c * y, mask, c * lam, SolverOptions{});
  CHECK((a2 - c * a1).norm() <= 1e-8 * a2.norm());
}

TEST_CASE("invalid masks are rejected while non-convergence is only flagged") {
  CounterRng rng(9);
  const Matrix y = random_matrix(6, 6, rng);
  Mask empty_row = Mask::Constant(6, 6, true);
  for (Index j = 0; j < 6; ++j) empty_row(2, j) = false;
  CHECK_THROWS_AS(solve_nuclear(y, empty_row, 1.0, SolverOptions{}), input_error);

  Mask mask = Mask::Constant(6, 6, true);
  mask(1, 2) = mask(4, 5) = false;
  SolverOptions strict;
  strict.max_iters = 1;
  strict.rel_tol = 1e-15;
  SolveDiagnostics diag;
  CHECK_NOTHROW(solve_nuclear(y, mask, 0.4, strict, &diag));
  CHECK_FALSE(diag.converged);
  CHECK(diag.iterations == 1);
}

TEST_CASE("lambda selection rule") {
  CHECK(select_lambda(1.0, 100, 100, 2.0) == Catch::Approx(20.0));
  CHECK(select_lambda(0.0, 37, 11, 2.0) == 0.0);
  CHECK(select_lambda(2.0, 64, 100, 1.5) == Catch::Approx(30.0));
  CHECK_THROWS_AS(select_lambda(-1.0, 10, 10, 2.0), input_error);
}

TEST_CASE("pilot sigma estimate") {
  CounterRng rng(10);
  // Exact rank-2 block has zero residual beyond rank 2.
  const Matrix x = random_matrix(40, 2, rng), z = random_matrix(30, 2, rng);
  const Matrix signal = x * z.transpose();
  CHECK(estimate_sigma_initial(signal, 2) < 1e-10);

  // Strong rank-1 signal plus noise of known Frobenius norm.
  Vector u(200), v(200);
  for (Index i = 0; i < 200; ++i) {
    u[i] = 1.0 + rng.next_uniform();
    v[i] = 1.0 + rng.next_uniform();
  }
  const Matrix e = random_matrix(200, 200, rng, 0.3);
  const Matrix block = 50.0 * u * v.transpose() + e;
  const double expected = e.norm() / 200.0;
  CHECK(estimate_sigma_initial(block, 1) == Catch::Approx(expected).epsilon(0.10));

  // r = min(dims) - 1 leaves exactly the smallest singular value.
  const Matrix g = random_matrix(9, 7, rng);
  const Vector s = Eigen::JacobiSVD<Matrix>(g).singularValues();
  const double expect_last = s[6] / std::sqrt(63.0);
  CHECK(estimate_sigma_initial(g, 6) == Catch::Approx(expect_last).epsilon(1e-8));

  CHECK_THROWS_AS(estimate_sigma_initial(g, 7), input_error);
}

TEST_CASE("eigenvalue-ratio rank estimate") {
  auto diag_matrix = [](std::initializer_list<double> vals) {
    Matrix m = Matrix::Zero(static_cast<Index>(vals.size()), static_cast<Index>(vals.size()) + 2);
    Index i = 0;
    for (double v : vals) {
      m(i, i) = v;
      ++i;
    }
    return m;
  };
  // Ratios 10/9=1.11, 9/0.1=90, 0.1/0.09=1.11: the drop sits at k=2.
  CHECK(estimate_rank(diag_matrix({10, 9, 0.1, 0.09, 0.05}), 4) == 2);
  // Exact rank 1 with tiny jitter.
  CounterRng rng(11);
  Vector u(25), v(18);
  for (Index i = 0; i < 25; ++i) u[i] = rng.next_normal();
  for (Index i = 0; i < 18; ++i) v[i] = rng.next_normal();
  Matrix nearly = u * v.transpose() + 1e-10 * random_matrix(25, 18, rng);
  CHECK(estimate_rank(nearly, 8) == 1);
  // Equal ratios tie toward the smaller k.
  CHECK(estimate_rank(diag_matrix({5, 0.5, 0.05}), 2) == 1);
  CHECK_THROWS_AS(estimate_rank(diag_matrix({5, 0.5, 0.05}), 3), input_error);
}
