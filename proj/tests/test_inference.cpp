#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mnar/inference.hpp"
#include "mnar/rng.hpp"

using namespace mnar;

namespace {

Matrix random_matrix(Index n, Index m, CounterRng& rng, double scale = 1.0) {
  Matrix b(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) b(i, j) = scale * rng.next_normal();
  return b;
}

// Rank-2 panel with a block-missing corner; factors kept away from zero so
// entries are O(1).
struct BlockScene {
  ObservedPanel panel;
  MissingPattern pattern;
  Matrix truth;
};

BlockScene make_block_scene(Index n, Index t, Index n0, Index t0, double noise_sd,
                            std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix zeta(n, 2), eta(t, 2);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < 2; ++k) zeta(i, k) = 1.0 + 0.5 * rng.next_normal();
  for (Index s = 0; s < t; ++s)
    for (Index k = 0; k < 2; ++k) eta(s, k) = 1.0 + 0.5 * rng.next_normal();
  BlockScene scene;
  scene.truth = zeta * eta.transpose();
  Matrix y = scene.truth;
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s) y(i, s) += noise_sd * rng.next_normal();
  Mask mask = Mask::Constant(n, t, true);
  for (Index i = n0; i < n; ++i)
    for (Index s = t0; s < t; ++s) mask(i, s) = false;
  scene.panel = make_panel(std::move(y), std::move(mask));
  scene.pattern = classify_pattern(scene.panel);
  return scene;
}

}  // namespace

TEST_CASE("sigma_hat is the residual root mean square") {
  Matrix y = Matrix::Constant(4, 5, 3.0);
  CHECK(sigma_hat(y, y) == 0.0);
  const Matrix fit = y.array() - 2.0;
  CHECK(sigma_hat(y, fit) == Catch::Approx(2.0));

  // Fixture with precomputed RMS: residuals (1,-1,2,-2,1,-1) over 2x3.
  Matrix block(2, 3), m(2, 3);
  block << 1, -1, 2, -2, 1, -1;
  m.setZero();
  CHECK(sigma_hat(block, m) == Catch::Approx(std::sqrt(12.0 / 6.0)));
  CHECK_THROWS_AS(sigma_hat(Matrix(), Matrix()), input_error);
}

TEST_CASE("gaussian interval uses the right quantiles") {
  const auto [lo, hi] = group_average_ci(0.0, 1.0, 0.95);
  CHECK(lo == Catch::Approx(-1.95996).margin(1e-4));
  CHECK(hi == Catch::Approx(1.95996).margin(1e-4));

  const auto [lo4, hi4] = group_average_ci(0.0, 4.0, 0.95);
  CHECK(hi4 == Catch::Approx(2.0 * hi).epsilon(1e-12));

  const auto [lo99, hi99] = group_average_ci(0.0, 1.0, 0.99);
  CHECK(hi99 == Catch::Approx(2.57583).margin(1e-4));

  CHECK_THROWS_AS(group_average_ci(0.0, 1.0, 0.0), input_error);
  CHECK_THROWS_AS(group_average_ci(0.0, 1.0, 1.0), input_error);
  CHECK_THROWS_AS(group_average_ci(0.0, 0.0, 0.9), input_error);
}

TEST_CASE("variance formula on hand-computed scalar fixtures") {
  // r=1, one group: 4 observed units with factor 1, group mean 1, sigma2=1
  // -> row term = sum_i (1 * (1/4) * 1)^2 = 0.25.
  VarianceFitInput f;
  f.x_obs = Matrix::Constant(4, 1, 1.0);
  f.x_group_mean = Vector::Constant(1, 1.0);
  f.z_pre = Matrix::Constant(5, 1, 1.0);
  f.z_target = Vector::Constant(1, 1.0);
  f.weight = 1.0;
  const auto one = variance_group_average({f}, 1.0, 2);
  CHECK(one.row_component == Catch::Approx(0.25).epsilon(1e-12));
  // col term with |G|=2: (1/2) * (1/5) = 0.1.
  CHECK(one.col_component == Catch::Approx(0.1).epsilon(1e-12));
  CHECK(one.variance == Catch::Approx(0.35).epsilon(1e-12));

  // Two groups with identical factors and sizes match one merged group.
  VarianceFitInput half = f;
  half.weight = 0.5;
  const auto merged = variance_group_average({half, half}, 1.0, 2);
  CHECK(merged.variance == Catch::Approx(one.variance).epsilon(1e-12));

  // Decomposition identity.
  CHECK(one.variance == Catch::Approx(one.row_component + one.col_component).margin(1e-12));

  // Column component shrinks like 1/|G| with factors held fixed.
  const auto g1 = variance_group_average({f}, 1.0, 1);
  const auto g4 = variance_group_average({f}, 1.0, 4);
  CHECK(g1.col_component == Catch::Approx(4.0 * g4.col_component).epsilon(1e-12));
  CHECK(g1.row_component == Catch::Approx(g4.row_component).epsilon(1e-12));
}

TEST_CASE("singular gram matrices are refused") {
  VarianceFitInput f;
  f.x_obs = Matrix::Zero(4, 2);
  f.x_obs.col(0).setOnes();  // rank-1 gram in r=2
  f.x_group_mean = Vector::Constant(2, 1.0);
  f.z_pre = Matrix::Constant(5, 2, 1.0);
  f.z_target = Vector::Constant(2, 1.0);
  f.weight = 1.0;
  CHECK_THROWS_AS(variance_group_average({f}, 1.0, 1), numeric_error);
}

TEST_CASE("noiseless block panel: the group mean is recovered") {
  auto scene = make_block_scene(40, 45, 30, 35, 0.0, 99);
  InferenceOptions opts;
  opts.rank = 2;
  opts.solver.max_iters = 4000;
  opts.solver.rel_tol = 1e-11;
  const std::vector<Index> group{32, 36, 39};
  const Index t0 = 41;
  const auto inf = infer_group_average(scene.panel, scene.pattern, group, t0, opts);
  double truth = 0.0;
  for (Index u : group) truth += scene.truth(u, t0) / 3.0;
  CHECK(inf.estimate == Catch::Approx(truth).margin(1e-4));
  CHECK(inf.variance > 0.0);
  CHECK(inf.variance == Catch::Approx(inf.row_component + inf.col_component).margin(1e-12));
}

TEST_CASE("noisy block panel: interval is sane and contains the truth at this seed") {
  auto scene = make_block_scene(60, 70, 45, 55, 0.5, 7);
  InferenceOptions opts;
  opts.rank = 2;
  const std::vector<Index> group{50, 51, 52, 53};
  const Index t0 = 60;
  const auto inf = infer_group_average(scene.panel, scene.pattern, group, t0, opts);
  double truth = 0.0;
  for (Index u : group) truth += scene.truth(u, t0) / 4.0;
  CHECK(inf.ci_lower < inf.estimate);
  CHECK(inf.estimate < inf.ci_upper);
  CHECK(inf.ci_lower <= truth);
  CHECK(truth <= inf.ci_upper);
  CHECK(inf.sigma_hat == Catch::Approx(0.5).epsilon(0.2));
}

TEST_CASE("a fully observed query group uses only the reference fit") {
  auto scene = make_block_scene(30, 30, 24, 26, 0.3, 5);
  InferenceOptions opts;
  opts.rank = 2;
  const auto inf = infer_group_average(scene.panel, scene.pattern, {3, 10}, 28, opts);
  CHECK(inf.n_groups == 1);
  CHECK(inf.variance > 0.0);
}

TEST_CASE("inference is scale equivariant") {
  auto scene = make_block_scene(36, 40, 28, 32, 0.4, 11);
  InferenceOptions opts;
  opts.rank = 2;
  opts.solver.rel_tol = 1e-10;
  const std::vector<Index> group{30, 33};
  const Index t0 = 37;
  const auto a = infer_group_average(scene.panel, scene.pattern, group, t0, opts);
  const double c = 13.0;
  auto scaled = scene;
  scaled.panel.values *= c;
  const auto b = infer_group_average(scaled.panel, scaled.pattern, group, t0, opts);
  CHECK(b.sigma_hat == Catch::Approx(c * a.sigma_hat).epsilon(1e-6));
  CHECK(b.estimate == Catch::Approx(c * a.estimate).epsilon(1e-6));
  CHECK(b.variance == Catch::Approx(c * c * a.variance).epsilon(1e-5));
}

TEST_CASE("staggered inference splits mixed adoption groups by class") {
  CounterRng rng(17);
  const Index n = 40, t = 50;
  Matrix zeta(n, 1), eta(t, 1);
  for (Index i = 0; i < n; ++i) zeta(i, 0) = 1.0 + 0.3 * rng.next_uniform();
  for (Index s = 0; s < t; ++s) eta(s, 0) = 1.0 + 0.3 * rng.next_uniform();
  Matrix truth = zeta * eta.transpose();
  Matrix y = truth;
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s) y(i, s) += 0.2 * rng.next_normal();
  Mask mask = Mask::Constant(n, t, true);
  for (Index i = 30; i < 35; ++i)
    for (Index s = 25; s < t; ++s) mask(i, s) = false;
  for (Index i = 35; i < 40; ++i)
    for (Index s = 35; s < t; ++s) mask(i, s) = false;
  auto panel = make_panel(y, mask);
  const auto pattern = classify_pattern(panel);
  REQUIRE(pattern.kind == PatternKind::Staggered);
  InferenceOptions opts;
  opts.rank = 1;
  opts.group_cap = 2;
  // Group mixes both adoption classes; the split is by class, then cap.
  const auto inf = infer_group_average(panel, pattern, {30, 31, 32, 36, 37}, 45, opts);
  CHECK(inf.n_groups == 3);  // {30,31},{32} from class 1; {36,37} from class 2
  double truth_mean = 0.0;
  for (Index u : {30, 31, 32, 36, 37}) truth_mean += truth(u, 45) / 5.0;
  CHECK(std::abs(inf.estimate - truth_mean) < 0.5);
  CHECK(inf.variance > 0.0);
}

TEST_CASE("variance positivity across random noisy scenes") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto scene = make_block_scene(25, 28, 19, 22, 0.5, seed);
    InferenceOptions opts;
    opts.rank = 2;
    const auto inf = infer_group_average(scene.panel, scene.pattern, {20, 24}, 25, opts);
    CHECK(inf.variance > 0.0);
    CHECK(inf.row_component > 0.0);
    CHECK(inf.col_component > 0.0);
  }
}
