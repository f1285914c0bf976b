#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mnar/pattern.hpp"

namespace mnar {

// A submatrix of the parent panel with index maps back to it. `target`
// holds the sub-coordinates this subproblem must estimate. Completion
// subproblems have exactly their target masked out; a fully observed
// reference block (used for already-observed inference targets and factor
// estimation) carries an all-true mask.
struct SubProblem {
  Matrix values;
  Mask mask;
  std::vector<Index> row_map;  // sub row -> parent row
  std::vector<Index> col_map;  // sub col -> parent col
  std::vector<std::pair<Index, Index>> target;
  double lambda = 0.0;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  void validate() const {
    if (static_cast<Index>(row_map.size()) != values.rows() ||
        static_cast<Index>(col_map.size()) != values.cols()) {
      throw input_error("subproblem index map size mismatch");
    }
    std::set<Index> rs(row_map.begin(), row_map.end()), cs(col_map.begin(), col_map.end());
    if (rs.size() != row_map.size() || cs.size() != col_map.size()) {
      throw input_error("subproblem index maps must be injective");
    }
    std::set<std::pair<Index, Index>> tset(target.begin(), target.end());
    const bool reference = mask.all();
    for (Index i = 0; i < values.rows(); ++i)
      for (Index j = 0; j < values.cols(); ++j) {
        const bool is_target = tset.count({i, j}) > 0;
        if (!reference && mask(i, j) == is_target) {
          throw input_error("subproblem mask must miss exactly its target");
        }
      }
  }
};

struct GroupingPlan {
  std::vector<std::vector<Index>> groups;
  Index cap = 1;
};

// Contiguous chunks of size `cap` in ascending index order; the last chunk
// may be smaller.
inline GroupingPlan partition_missing(std::vector<Index> targets, Index cap) {
  if (cap < 1) throw input_error("partition_missing: cap must be >= 1");
  if (targets.empty()) throw input_error("partition_missing: empty target set");
  std::sort(targets.begin(), targets.end());
  GroupingPlan plan;
  plan.cap = cap;
  for (std::size_t i = 0; i < targets.size(); i += static_cast<std::size_t>(cap)) {
    const std::size_t end = std::min(targets.size(), i + static_cast<std::size_t>(cap));
    plan.groups.emplace_back(targets.begin() + static_cast<std::ptrdiff_t>(i),
                             targets.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

// Group size bound: the theory wants |G_l| small relative to min(N_0, T_0);
// the square-root rule keeps the subproblem count near-minimal within that.
inline Index default_group_cap(Index n0, Index t0) {
  return std::max<Index>(1, static_cast<Index>(std::sqrt(static_cast<double>(std::min(n0, t0)))));
}

namespace detail {

inline SubProblem extract_sub(const ObservedPanel& panel, const std::vector<Index>& rows,
                              const std::vector<Index>& cols,
                              const std::vector<std::pair<Index, Index>>& target_sub,
                              bool reference = false) {
  SubProblem sub;
  const Index n = static_cast<Index>(rows.size()), m = static_cast<Index>(cols.size());
  sub.values.resize(n, m);
  sub.mask.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      sub.values(i, j) = panel.values(rows[static_cast<std::size_t>(i)],
                                      cols[static_cast<std::size_t>(j)]);
      sub.mask(i, j) = panel.mask(rows[static_cast<std::size_t>(i)],
                                  cols[static_cast<std::size_t>(j)]);
    }
  sub.row_map = rows;
  sub.col_map = cols;
  sub.target = target_sub;
  if (!reference) {
    sub.validate();
  }
  return sub;
}

inline std::vector<Index> sorted_copy(std::vector<Index> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

// Single treated period (t0 = T-1 after permutation): rows are the n0
// observed units followed by the group, all T columns with the treated
// column last; target is group x treated period.
inline SubProblem assemble_single_period(const ObservedPanel& panel, const MissingPattern& pattern,
                                         const std::vector<Index>& group) {
  if (!pattern.is_block_family() || pattern.t0 != panel.periods() - 1) {
    throw pattern_error("assemble_single_period: pattern is not single-treated-period");
  }
  const Index t = pattern.col_order.back();
  std::vector<Index> rows = pattern.observed_rows();
  const std::set<Index> treated(pattern.row_order.begin() + pattern.n0, pattern.row_order.end());
  for (Index u : detail::sorted_copy(group)) {
    if (!treated.count(u)) {
      throw input_error("assemble_single_period: unit " + std::to_string(u) + " is not treated");
    }
    rows.push_back(u);
  }
  std::vector<Index> cols = pattern.observed_cols();
  cols.push_back(t);
  std::vector<std::pair<Index, Index>> target;
  for (Index i = pattern.n0; i < static_cast<Index>(rows.size()); ++i) {
    target.emplace_back(i, static_cast<Index>(cols.size()) - 1);
  }
  return detail::extract_sub(panel, rows, cols, target);
}

// General block pattern, one treated period at a time: rows are the n0
// observed units plus the group, columns the t0 observed periods plus t.
inline SubProblem assemble_block(const ObservedPanel& panel, const MissingPattern& pattern,
                                 const std::vector<Index>& group, Index t) {
  if (!pattern.is_block_family()) throw pattern_error("assemble_block: not a block pattern");
  const auto tc = pattern.treated_cols();
  if (std::find(tc.begin(), tc.end(), t) == tc.end()) {
    throw input_error("assemble_block: period " + std::to_string(t) + " is fully observed");
  }
  std::vector<Index> rows = pattern.observed_rows();
  const std::set<Index> treated(pattern.row_order.begin() + pattern.n0, pattern.row_order.end());
  for (Index u : detail::sorted_copy(group)) {
    if (!treated.count(u)) {
      throw input_error("assemble_block: unit " + std::to_string(u) + " is not treated");
    }
    rows.push_back(u);
  }
  std::vector<Index> cols = pattern.observed_cols();
  cols.push_back(t);
  std::vector<std::pair<Index, Index>> target;
  for (Index i = pattern.n0; i < static_cast<Index>(rows.size()); ++i) {
    target.emplace_back(i, static_cast<Index>(cols.size()) - 1);
  }
  return detail::extract_sub(panel, rows, cols, target);
}

// Staggered adoption band (d, d'): rows are the units untreated prior to
// T_{d'+1} plus the group (a subset of adoption group d), columns
// [0, T_d) followed by [T_{d'}, T_{d'+1}); the band is the target.
inline SubProblem assemble_staggered(const ObservedPanel& panel, const MissingPattern& pattern,
                                     Index d, Index d_prime, const std::vector<Index>& group) {
  if (pattern.kind != PatternKind::Staggered) {
    throw pattern_error("assemble_staggered: pattern is not staggered");
  }
  const Index dcount = static_cast<Index>(pattern.adoption_times.size());
  if (d < 0 || d_prime < d || d_prime >= dcount) {
    throw input_error("assemble_staggered: invalid (d, d') pair");
  }
  const std::set<Index> gd(pattern.adoption_groups[static_cast<std::size_t>(d)].begin(),
                           pattern.adoption_groups[static_cast<std::size_t>(d)].end());
  for (Index u : group)
    if (!gd.count(u)) {
      throw input_error("assemble_staggered: unit " + std::to_string(u) +
                        " is not in adoption group " + std::to_string(d));
    }
  const Index band_lo = pattern.adoption_times[static_cast<std::size_t>(d_prime)];
  const Index band_hi = d_prime + 1 < dcount
                            ? pattern.adoption_times[static_cast<std::size_t>(d_prime) + 1]
                            : panel.periods();
  std::vector<char> adopts_before(static_cast<std::size_t>(panel.units()), 0);
  for (Index e = 0; e <= d_prime; ++e)
    for (Index u : pattern.adoption_groups[static_cast<std::size_t>(e)])
      adopts_before[static_cast<std::size_t>(u)] = 1;
  std::vector<Index> rows;
  for (Index u = 0; u < panel.units(); ++u)
    if (!adopts_before[static_cast<std::size_t>(u)]) rows.push_back(u);
  if (rows.empty()) {
    throw pattern_error("assemble_staggered: no unit stays untreated through the band");
  }
  const Index n_obs = static_cast<Index>(rows.size());
  for (Index u : detail::sorted_copy(group)) rows.push_back(u);
  std::vector<Index> cols;
  for (Index s = 0; s < pattern.adoption_times[static_cast<std::size_t>(d)]; ++s)
    cols.push_back(s);
  const Index band_start = static_cast<Index>(cols.size());
  for (Index s = band_lo; s < band_hi; ++s) cols.push_back(s);
  std::vector<std::pair<Index, Index>> target;
  for (Index i = n_obs; i < static_cast<Index>(rows.size()); ++i)
    for (Index j = band_start; j < static_cast<Index>(cols.size()); ++j) target.emplace_back(i, j);
  return detail::extract_sub(panel, rows, cols, target);
}

// Inference subproblem for a group sharing one adoption time: rows are the
// units still untreated at t0 plus the group; columns are the group's
// pre-adoption periods plus the target period.
inline SubProblem assemble_inference(const ObservedPanel& panel, const MissingPattern& pattern,
                                     const std::vector<Index>& group, Index t0) {
  if (t0 < 0 || t0 >= panel.periods()) throw input_error("assemble_inference: t0 out of range");
  if (pattern.is_block_family()) {
    std::vector<Index> rows = pattern.observed_rows();
    const std::set<Index> treated(pattern.row_order.begin() + pattern.n0, pattern.row_order.end());
    for (Index u : detail::sorted_copy(group)) {
      if (!treated.count(u)) {
        throw input_error("assemble_inference: unit " + std::to_string(u) + " is fully observed");
      }
      rows.push_back(u);
    }
    const auto tc = pattern.treated_cols();
    if (std::find(tc.begin(), tc.end(), t0) == tc.end()) {
      throw input_error("assemble_inference: period " + std::to_string(t0) +
                        " is not in the missing range");
    }
    std::vector<Index> cols = pattern.observed_cols();
    cols.push_back(t0);
    std::vector<std::pair<Index, Index>> target;
    for (Index i = pattern.n0; i < static_cast<Index>(rows.size()); ++i)
      target.emplace_back(i, static_cast<Index>(cols.size()) - 1);
    return detail::extract_sub(panel, rows, cols, target);
  }
  if (pattern.kind != PatternKind::Staggered) {
    throw pattern_error("assemble_inference: unsupported pattern");
  }
  // All group members must share one adoption time with t0 in its range.
  Index adoption = -1;
  for (std::size_t dd = 0; dd < pattern.adoption_groups.size(); ++dd) {
    const auto& g = pattern.adoption_groups[dd];
    for (Index u : group) {
      if (std::find(g.begin(), g.end(), u) != g.end()) {
        const Index a = pattern.adoption_times[dd];
        if (adoption != -1 && adoption != a) {
          throw input_error("assemble_inference: mixed adoption times within the group");
        }
        adoption = a;
      }
    }
  }
  if (adoption == -1) throw input_error("assemble_inference: group has no treated unit");
  if (t0 < adoption) {
    throw input_error("assemble_inference: t0 precedes the group's adoption time");
  }
  std::vector<char> treated_by_t0(static_cast<std::size_t>(panel.units()), 0);
  for (std::size_t dd = 0; dd < pattern.adoption_groups.size(); ++dd) {
    if (pattern.adoption_times[dd] <= t0) {
      for (Index u : pattern.adoption_groups[dd]) treated_by_t0[static_cast<std::size_t>(u)] = 1;
    }
  }
  std::vector<Index> rows;
  for (Index u = 0; u < panel.units(); ++u)
    if (!treated_by_t0[static_cast<std::size_t>(u)]) rows.push_back(u);
  if (rows.empty()) throw pattern_error("assemble_inference: no unit is untreated at t0");
  const Index n_obs = static_cast<Index>(rows.size());
  for (Index u : detail::sorted_copy(group)) rows.push_back(u);
  std::vector<Index> cols;
  for (Index s = 0; s < adoption; ++s) cols.push_back(s);
  cols.push_back(t0);
  std::vector<std::pair<Index, Index>> target;
  for (Index i = n_obs; i < static_cast<Index>(rows.size()); ++i)
    target.emplace_back(i, static_cast<Index>(cols.size()) - 1);
  return detail::extract_sub(panel, rows, cols, target);
}

// Fully observed reference block for inference: the always-observed units
// over their untreated periods, with the target period's column appended
// when it lies outside them. Targets (possibly empty) are observed cells.
inline SubProblem assemble_inference_reference(const ObservedPanel& panel,
                                               const MissingPattern& pattern,
                                               const std::vector<Index>& group_in_observed,
                                               Index t0) {
  std::vector<Index> rows;
  std::vector<Index> cols;
  if (pattern.is_block_family() || pattern.kind == PatternKind::FullyObserved) {
    rows = pattern.observed_rows();
    cols = pattern.observed_cols();
    if (std::find(cols.begin(), cols.end(), t0) == cols.end()) cols.push_back(t0);
  } else if (pattern.kind == PatternKind::Staggered) {
    std::vector<char> treated_by_t0(static_cast<std::size_t>(panel.units()), 0);
    Index first_later_adoption = panel.periods();
    for (std::size_t dd = 0; dd < pattern.adoption_groups.size(); ++dd) {
      if (pattern.adoption_times[dd] <= t0) {
        for (Index u : pattern.adoption_groups[dd]) treated_by_t0[static_cast<std::size_t>(u)] = 1;
      } else {
        first_later_adoption = std::min(first_later_adoption, pattern.adoption_times[dd]);
      }
    }
    for (Index u = 0; u < panel.units(); ++u)
      if (!treated_by_t0[static_cast<std::size_t>(u)]) rows.push_back(u);
    for (Index s = 0; s < first_later_adoption; ++s) cols.push_back(s);
  } else {
    throw pattern_error("assemble_inference_reference: unsupported pattern");
  }
  if (rows.empty()) throw pattern_error("assemble_inference_reference: no observed units");
  std::set<Index> row_pos;
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos.insert(rows[i]);
  Index tcol = -1;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (cols[j] == t0) tcol = static_cast<Index>(j);
  if (tcol == -1) throw input_error("assemble_inference_reference: t0 not representable");
  std::vector<std::pair<Index, Index>> target;
  for (Index u : detail::sorted_copy(group_in_observed)) {
    auto it = std::find(rows.begin(), rows.end(), u);
    if (it == rows.end()) {
      throw input_error("assemble_inference_reference: unit " + std::to_string(u) +
                        " is not observed at t0");
    }
    target.emplace_back(static_cast<Index>(it - rows.begin()), tcol);
  }
  return detail::extract_sub(panel, rows, cols, target, /*reference=*/true);
}

struct ReassembledPanel {
  Matrix completed;  // observed values kept, missing filled from targets
  Matrix fitted;     // mean of all subproblem estimates where covered
};

// Places every subproblem's target estimate back into the parent. Each
// parent missing entry must be covered by exactly one target; cells the
// subproblems share (the observed O block) get the arithmetic mean of
// their estimates in `fitted`.
inline ReassembledPanel reassemble(
    const ObservedPanel& panel,
    const std::vector<std::pair<const SubProblem*, const Matrix*>>& sub_estimates) {
  const Index n = panel.units(), t = panel.periods();
  Eigen::ArrayXXi covered = Eigen::ArrayXXi::Zero(n, t);
  Matrix sum = Matrix::Zero(n, t);
  Eigen::ArrayXXi fit_count = Eigen::ArrayXXi::Zero(n, t);
  ReassembledPanel out;
  out.completed = panel.mask.select(panel.values, 0.0);
  for (const auto& [sub, est] : sub_estimates) {
    if (est->rows() != sub->rows() || est->cols() != sub->cols()) {
      throw input_error("reassemble: estimate shape mismatch");
    }
    std::set<std::pair<Index, Index>> tset(sub->target.begin(), sub->target.end());
    for (Index i = 0; i < sub->rows(); ++i)
      for (Index j = 0; j < sub->cols(); ++j) {
        const Index pi = sub->row_map[static_cast<std::size_t>(i)];
        const Index pj = sub->col_map[static_cast<std::size_t>(j)];
        sum(pi, pj) += (*est)(i, j);
        fit_count(pi, pj) += 1;
        if (tset.count({i, j})) {
          covered(pi, pj) += 1;
          out.completed(pi, pj) = (*est)(i, j);
        }
      }
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < t; ++j) {
      if (!panel.mask(i, j)) {
        if (covered(i, j) == 0) {
          throw input_error("reassemble: missing entry (" + std::to_string(i) + "," +
                            std::to_string(j) + ") covered by no subproblem");
        }
        if (covered(i, j) > 1) {
          throw input_error("reassemble: missing entry (" + std::to_string(i) + "," +
                            std::to_string(j) + ") covered more than once");
        }
      }
    }
  out.fitted = out.completed;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < t; ++j)
      if (fit_count(i, j) > 0) out.fitted(i, j) = sum(i, j) / fit_count(i, j);
  return out;
}

// Completion plan for every supported pattern; fully observed panels yield
// no subproblems and irregular ones are rejected naming the offending cell.
inline std::vector<SubProblem> build_completion_subproblems(const ObservedPanel& panel,
                                                            const MissingPattern& pattern,
                                                            Index cap) {
  if (cap < 1) throw input_error("group cap must be >= 1");
  std::vector<SubProblem> subs;
  switch (pattern.kind) {
    case PatternKind::FullyObserved:
      break;
    case PatternKind::SingleTreatedPeriod: {
      const auto plan = partition_missing(pattern.treated_rows(), cap);
      for (const auto& g : plan.groups) subs.push_back(assemble_single_period(panel, pattern, g));
      break;
    }
    case PatternKind::SingleTreatedUnit: {
      // Transposed roles: the single treated unit's missing periods are
      // grouped; each subproblem takes all units and the observed periods
      // plus one period group.
      const Index unit = pattern.row_order.back();
      const auto plan = partition_missing(pattern.treated_cols(), cap);
      for (const auto& g : plan.groups) {
        std::vector<Index> rows = pattern.observed_rows();
        rows.push_back(unit);
        std::vector<Index> cols = pattern.observed_cols();
        const Index band_start = static_cast<Index>(cols.size());
        for (Index s : g) cols.push_back(s);
        std::vector<std::pair<Index, Index>> target;
        for (Index j = band_start; j < static_cast<Index>(cols.size()); ++j)
          target.emplace_back(static_cast<Index>(rows.size()) - 1, j);
        subs.push_back(detail::extract_sub(panel, rows, cols, target));
      }
      break;
    }
    case PatternKind::Block: {
      const auto plan = partition_missing(pattern.treated_rows(), cap);
      for (Index t : pattern.treated_cols())
        for (const auto& g : plan.groups) subs.push_back(assemble_block(panel, pattern, g, t));
      break;
    }
    case PatternKind::Staggered: {
      const Index dcount = static_cast<Index>(pattern.adoption_times.size());
      for (Index d = 0; d < dcount; ++d) {
        const auto plan =
            partition_missing(pattern.adoption_groups[static_cast<std::size_t>(d)], cap);
        for (Index dp = d; dp < dcount; ++dp)
          for (const auto& g : plan.groups)
            subs.push_back(assemble_staggered(panel, pattern, d, dp, g));
      }
      break;
    }
    case PatternKind::Irregular: {
      const auto [i, j] = first_irregular_cell(panel.mask);
      throw pattern_error("unsupported irregular missing pattern; first offending cell is unit " +
                          std::to_string(i) + ", period " + std::to_string(j));
    }
  }
  return subs;
}

}  // namespace mnar
