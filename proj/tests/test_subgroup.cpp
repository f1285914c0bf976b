#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "mnar/rng.hpp"
#include "mnar/subgroup.hpp"

using namespace mnar;

namespace {

ObservedPanel panel_from_mask(const Mask& mask, double fill = 1.0) {
  Matrix v = Matrix::Constant(mask.rows(), mask.cols(), fill);
  return make_panel(std::move(v), mask);
}

Mask block_mask(Index n, Index t, Index n0, Index t0) {
  Mask m = Mask::Constant(n, t, true);
  for (Index i = n0; i < n; ++i)
    for (Index s = t0; s < t; ++s) m(i, s) = false;
  return m;
}

}  // namespace

TEST_CASE("partition into capped contiguous chunks") {
  std::vector<Index> targets(10);
  std::iota(targets.begin(), targets.end(), Index{0});
  const auto plan = partition_missing(targets, 3);
  REQUIRE(plan.groups.size() == 4);
  CHECK(plan.groups[0].size() == 3);
  CHECK(plan.groups[1].size() == 3);
  CHECK(plan.groups[2].size() == 3);
  CHECK(plan.groups[3].size() == 1);

  CHECK(partition_missing(targets, 100).groups.size() == 1);
  CHECK(partition_missing(targets, 1).groups.size() == 10);
  CHECK_THROWS_AS(partition_missing({}, 3), input_error);
}

TEST_CASE("single treated period subproblem layout") {
  // n0=3 observed units, T=4, last period missing for treated units.
  const auto p = panel_from_mask(block_mask(6, 4, 3, 3));
  const auto pat = classify_pattern(p);
  REQUIRE(pat.kind == PatternKind::SingleTreatedPeriod);

  const auto sub = assemble_single_period(p, pat, {5});
  CHECK(sub.rows() == 4);
  CHECK(sub.cols() == 4);
  REQUIRE(sub.target.size() == 1);
  CHECK(sub.target[0] == std::make_pair(Index{3}, Index{3}));
  CHECK_FALSE(sub.mask(3, 3));
  CHECK(sub.mask.count() == 15);

  const auto sub2 = assemble_single_period(p, pat, {4, 5});
  CHECK(sub2.rows() == 5);
  CHECK(sub2.target.size() == 2);

  CHECK_THROWS_AS(assemble_single_period(p, pat, {1}), input_error);
}

TEST_CASE("block subproblem takes observed periods plus one treated period") {
  const auto p = panel_from_mask(block_mask(9, 8, 4, 5));
  const auto pat = classify_pattern(p);
  REQUIRE(pat.kind == PatternKind::Block);

  const auto sub = assemble_block(p, pat, {6}, 7);
  CHECK(sub.rows() == 5);
  CHECK(sub.cols() == 6);
  REQUIRE(sub.target.size() == 1);
  CHECK(sub.row_map[4] == 6);
  CHECK(sub.col_map[5] == 7);

  CHECK_THROWS_AS(assemble_block(p, pat, {6}, 2), input_error);
  CHECK_THROWS_AS(assemble_block(p, pat, {0}, 7), input_error);
}

TEST_CASE("staggered band assembly matches the interval arithmetic") {
  // Adoption times 5, 7, 10 (0-based) on a 12-period panel.
  Mask m = Mask::Constant(10, 12, true);
  auto adopt = [&](std::initializer_list<Index> units, Index at) {
    for (Index u : units)
      for (Index s = at; s < 12; ++s) m(u, s) = false;
  };
  adopt({4, 5}, 5);
  adopt({6, 7}, 7);
  adopt({8, 9}, 10);
  const auto p = panel_from_mask(m);
  const auto pat = classify_pattern(p);
  REQUIRE(pat.kind == PatternKind::Staggered);

  // d=0, d'=1: columns [0,5) then [7,10); rows untreated before period 10
  // are 0..3 and 8,9, then the group.
  const auto sub = assemble_staggered(p, pat, 0, 1, {4, 5});
  std::vector<Index> cols(sub.col_map);
  CHECK(cols == std::vector<Index>{0, 1, 2, 3, 4, 7, 8, 9});
  CHECK(sub.row_map == std::vector<Index>{0, 1, 2, 3, 8, 9, 4, 5});
  CHECK(sub.target.size() == 2 * 3);

  // d=d'=D-1: never-treated rows plus the last group, all columns outside
  // earlier bands.
  const auto last = assemble_staggered(p, pat, 2, 2, {8, 9});
  CHECK(last.row_map == std::vector<Index>{0, 1, 2, 3, 8, 9});
  CHECK(last.col_map == std::vector<Index>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  CHECK(last.target.size() == 2 * 2);

  CHECK_THROWS_AS(assemble_staggered(p, pat, 0, 1, {6}), input_error);
}

TEST_CASE("inference subproblem for block and staggered patterns") {
  const auto bp = panel_from_mask(block_mask(8, 9, 5, 6));
  const auto bpat = classify_pattern(bp);
  const auto bsub = assemble_inference(bp, bpat, {6, 7}, 7);
  CHECK(bsub.col_map == std::vector<Index>{0, 1, 2, 3, 4, 5, 7});
  CHECK(bsub.row_map == std::vector<Index>{0, 1, 2, 3, 4, 6, 7});
  CHECK(bsub.target.size() == 2);

  Mask m = Mask::Constant(8, 10, true);
  for (Index s = 4; s < 10; ++s) m(5, s) = m(6, s) = false;
  for (Index s = 7; s < 10; ++s) m(7, s) = false;
  const auto sp = panel_from_mask(m);
  const auto spat = classify_pattern(sp);
  REQUIRE(spat.kind == PatternKind::Staggered);
  // Group adopting at 4, queried at t0=8: rows untreated at 8 are 0..4.
  const auto ssub = assemble_inference(sp, spat, {5, 6}, 8);
  CHECK(ssub.col_map == std::vector<Index>{0, 1, 2, 3, 8});
  CHECK(ssub.row_map == std::vector<Index>{0, 1, 2, 3, 4, 5, 6});
  // Mixed adoption times in one group are refused.
  CHECK_THROWS_AS(assemble_inference(sp, spat, {5, 7}, 8), input_error);
}

TEST_CASE("fully observed reference block appends the target column") {
  const auto p = panel_from_mask(block_mask(7, 8, 4, 5));
  const auto pat = classify_pattern(p);
  const auto ref = assemble_inference_reference(p, pat, {1, 3}, 6);
  CHECK(ref.mask.all());
  CHECK(ref.row_map == std::vector<Index>{0, 1, 2, 3});
  CHECK(ref.col_map == std::vector<Index>{0, 1, 2, 3, 4, 6});
  REQUIRE(ref.target.size() == 2);
  CHECK(ref.target[0] == std::make_pair(Index{1}, Index{5}));
  CHECK_THROWS_AS(assemble_inference_reference(p, pat, {6}, 6), input_error);
}

TEST_CASE("reassembly places targets and averages shared cells") {
  Mask m = Mask::Constant(4, 4, true);
  m(3, 3) = false;
  Matrix v = Matrix::Constant(4, 4, 2.0);
  const auto p = make_panel(v, m);
  const auto pat = classify_pattern(p);
  const auto sub = assemble_single_period(p, pat, {3});
  Matrix est = Matrix::Constant(sub.rows(), sub.cols(), 9.0);

  std::vector<std::pair<const SubProblem*, const Matrix*>> inputs{{&sub, &est}};
  const auto out = reassemble(p, inputs);
  CHECK(out.completed(3, 3) == 9.0);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j)
      if (i != 3 || j != 3) CHECK(out.completed(i, j) == 2.0);

  // Two subproblems sharing an observed cell: fitted value is the mean.
  Matrix est_a = est, est_b = est;
  est_a(0, 0) = 1.0;
  est_b(0, 0) = 3.0;
  SubProblem sub_b = sub;
  sub_b.target.clear();  // only contributes fitted values
  std::vector<std::pair<const SubProblem*, const Matrix*>> two{{&sub, &est_a}, {&sub_b, &est_b}};
  const auto merged = reassemble(p, two);
  CHECK(merged.fitted(sub.row_map[0], sub.col_map[0]) == Catch::Approx(2.0));

  // Duplicate target coverage is an error.
  std::vector<std::pair<const SubProblem*, const Matrix*>> dup{{&sub, &est_a}, {&sub, &est_b}};
  CHECK_THROWS_WITH(reassemble(p, dup), Catch::Matchers::ContainsSubstring("more than once"));
  // Zero coverage too.
  std::vector<std::pair<const SubProblem*, const Matrix*>> none;
  CHECK_THROWS_WITH(reassemble(p, none), Catch::Matchers::ContainsSubstring("no subproblem"));
}

TEST_CASE("every missing entry lands in exactly one target across random patterns") {
  CounterRng rng(321);
  int checked = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Index n = 4 + static_cast<Index>(rng.next_below(10));
    const Index t = 4 + static_cast<Index>(rng.next_below(10));
    Mask m = Mask::Constant(n, t, true);
    if (rng.next_below(2) == 0) {
      const Index n0 = 1 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n - 2)));
      const Index t0 = 1 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(t - 2)));
      m = block_mask(n, t, n0, t0);
    } else {
      for (Index i = 1; i < n; ++i) {
        if (rng.next_below(2) == 0) continue;
        const Index a = 1 + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(t - 1)));
        for (Index s = a; s < t; ++s) m(i, s) = false;
      }
    }
    ObservedPanel p;
    try {
      p = panel_from_mask(m);
    } catch (const input_error&) {
      continue;
    }
    const auto pat = classify_pattern(p);
    if (pat.kind == PatternKind::Irregular) continue;
    const Index cap = 1 + static_cast<Index>(rng.next_below(4));
    const auto subs = build_completion_subproblems(p, pat, cap);

    Eigen::ArrayXXi covered = Eigen::ArrayXXi::Zero(n, t);
    for (const auto& sub : subs) {
      // Index maps round-trip: sub coordinates map to parent cells whose
      // value matches what was extracted.
      for (Index i = 0; i < sub.rows(); ++i)
        for (Index j = 0; j < sub.cols(); ++j) {
          CHECK(sub.values(i, j) ==
                p.values(sub.row_map[static_cast<std::size_t>(i)],
                         sub.col_map[static_cast<std::size_t>(j)]));
        }
      std::set<std::pair<Index, Index>> tset(sub.target.begin(), sub.target.end());
      for (Index i = 0; i < sub.rows(); ++i)
        for (Index j = 0; j < sub.cols(); ++j) {
          CHECK(sub.mask(i, j) == (tset.count({i, j}) == 0));
        }
      for (const auto& [i, j] : sub.target) {
        covered(sub.row_map[static_cast<std::size_t>(i)],
                sub.col_map[static_cast<std::size_t>(j)]) += 1;
        CHECK(static_cast<Index>(sub.target.size()) <= cap * sub.cols());
      }
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < t; ++j) {
        CHECK(covered(i, j) == (p.mask(i, j) ? 0 : 1));
      }
    ++checked;
  }
  // The generator must actually exercise a healthy number of patterns.
  CHECK(checked > 400);
}

TEST_CASE("fully observed panels produce no subproblems") {
  const auto p = panel_from_mask(Mask::Constant(5, 5, true));
  const auto pat = classify_pattern(p);
  CHECK(build_completion_subproblems(p, pat, 2).empty());
  const auto out = reassemble(p, {});
  CHECK(out.completed == p.values);
}

TEST_CASE("irregular patterns are rejected with the offending cell named") {
  Mask m = Mask::Constant(4, 5, true);
  m(2, 1) = false;
  m(3, 3) = false;
  const auto p = panel_from_mask(m);
  const auto pat = classify_pattern(p);
  REQUIRE(pat.kind == PatternKind::Irregular);
  CHECK_THROWS_WITH(build_completion_subproblems(p, pat, 2),
                    Catch::Matchers::ContainsSubstring("unit 2, period 1"));
}

TEST_CASE("default group cap follows the square-root rule") {
  CHECK(default_group_cap(200, 500) == 14);
  CHECK(default_group_cap(9, 100) == 3);
  CHECK(default_group_cap(1, 1) == 1);
}
