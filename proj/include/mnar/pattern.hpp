#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "mnar/panel.hpp"

namespace mnar {

enum class PatternKind {
  FullyObserved,
  SingleTreatedPeriod,
  SingleTreatedUnit,
  Block,
  Staggered,
  Irregular,
};

inline const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::FullyObserved: return "fully_observed";
    case PatternKind::SingleTreatedPeriod: return "single_treated_period";
    case PatternKind::SingleTreatedUnit: return "single_treated_unit";
    case PatternKind::Block: return "block";
    case PatternKind::Staggered: return "staggered";
    case PatternKind::Irregular: return "irregular";
  }
  return "?";
}

// Exact description of a structured observation mask. For the block family
// the internal permutation (rows/columns sorted fully-observed first) is
// recorded in row_order/col_order; all indices elsewhere refer to the
// original panel. For staggered adoption, adoption_times[k] is the first
// missing period (0-based) of adoption_groups[k], ascending.
struct MissingPattern {
  PatternKind kind = PatternKind::Irregular;
  Index n0 = 0;  // always-observed units (block family)
  Index t0 = 0;  // always-observed periods (block family)
  std::vector<Index> row_order;  // canonical position -> original row
  std::vector<Index> col_order;  // canonical position -> original column
  std::vector<Index> adoption_times;
  std::vector<std::vector<Index>> adoption_groups;

  bool is_block_family() const {
    return kind == PatternKind::SingleTreatedPeriod || kind == PatternKind::SingleTreatedUnit ||
           kind == PatternKind::Block;
  }

  std::vector<Index> observed_rows() const {
    return {row_order.begin(), row_order.begin() + n0};
  }
  std::vector<Index> treated_rows() const { return {row_order.begin() + n0, row_order.end()}; }
  std::vector<Index> observed_cols() const {
    return {col_order.begin(), col_order.begin() + t0};
  }
  std::vector<Index> treated_cols() const { return {col_order.begin() + t0, col_order.end()}; }
};

// Rebuilds the mask a pattern describes; the classification contract is
// that this reproduces the classified mask bit-for-bit.
inline Mask regenerate_mask(const MissingPattern& p, Index n, Index t) {
  Mask m = Mask::Constant(n, t, true);
  switch (p.kind) {
    case PatternKind::FullyObserved:
      break;
    case PatternKind::SingleTreatedPeriod:
    case PatternKind::SingleTreatedUnit:
    case PatternKind::Block:
      for (Index ri = p.n0; ri < static_cast<Index>(p.row_order.size()); ++ri)
        for (Index ci = p.t0; ci < static_cast<Index>(p.col_order.size()); ++ci)
          m(p.row_order[ri], p.col_order[ci]) = false;
      break;
    case PatternKind::Staggered:
      for (std::size_t d = 0; d < p.adoption_groups.size(); ++d)
        for (Index i : p.adoption_groups[d])
          for (Index s = p.adoption_times[d]; s < t; ++s) m(i, s) = false;
      break;
    case PatternKind::Irregular:
      throw pattern_error("irregular pattern has no generating parameters");
  }
  return m;
}

// First missing cell with a later observation in the same row; only exists
// for masks that fail every structured classification.
inline std::pair<Index, Index> first_irregular_cell(const Mask& mask) {
  for (Index i = 0; i < mask.rows(); ++i) {
    Index last_obs = -1;
    for (Index s = mask.cols() - 1; s >= 0; --s) {
      if (mask(i, s)) {
        last_obs = s;
        break;
      }
    }
    for (Index s = 0; s < last_obs; ++s)
      if (!mask(i, s)) return {i, s};
  }
  return {-1, -1};
}

// Classifies a mask as the most specific supported pattern. Block detection
// sorts rows/columns by missing count, so block patterns need not arrive in
// canonical order; staggered adoption is judged in original time order.
inline MissingPattern classify_pattern(const ObservedPanel& panel) {
  const Mask& mask = panel.mask;
  const Index n = mask.rows(), t = mask.cols();
  MissingPattern out;

  if (mask.all()) {
    out.kind = PatternKind::FullyObserved;
    out.n0 = n;
    out.t0 = t;
    out.row_order.resize(static_cast<std::size_t>(n));
    out.col_order.resize(static_cast<std::size_t>(t));
    std::iota(out.row_order.begin(), out.row_order.end(), Index{0});
    std::iota(out.col_order.begin(), out.col_order.end(), Index{0});
    return out;
  }

  // Block family: missing cells form exactly (treated rows) x (treated cols).
  std::vector<Index> full_rows, holed_rows, full_cols, holed_cols;
  for (Index i = 0; i < n; ++i) {
    (mask.row(i).all() ? full_rows : holed_rows).push_back(i);
  }
  for (Index s = 0; s < t; ++s) {
    (mask.col(s).all() ? full_cols : holed_cols).push_back(s);
  }
  bool block = !holed_rows.empty() && !holed_cols.empty();
  if (block) {
    for (Index i : holed_rows) {
      for (Index s : full_cols) block = block && mask(i, s);
      for (Index s : holed_cols) block = block && !mask(i, s);
      if (!block) break;
    }
  }
  if (block) {
    out.n0 = static_cast<Index>(full_rows.size());
    out.t0 = static_cast<Index>(full_cols.size());
    out.row_order = full_rows;
    out.row_order.insert(out.row_order.end(), holed_rows.begin(), holed_rows.end());
    out.col_order = full_cols;
    out.col_order.insert(out.col_order.end(), holed_cols.begin(), holed_cols.end());
    if (out.t0 == t - 1) {
      out.kind = PatternKind::SingleTreatedPeriod;
    } else if (out.n0 == n - 1) {
      out.kind = PatternKind::SingleTreatedUnit;
    } else {
      out.kind = PatternKind::Block;
    }
    return out;
  }

  // Staggered adoption: each treated row is missing exactly from its
  // adoption period to the end.
  std::vector<std::vector<Index>> groups_by_time(static_cast<std::size_t>(t));
  bool staggered = true;
  for (Index i = 0; i < n && staggered; ++i) {
    Index first_missing = t;
    for (Index s = 0; s < t; ++s) {
      if (!mask(i, s)) {
        first_missing = s;
        break;
      }
    }
    if (first_missing == t) continue;  // never treated
    for (Index s = first_missing; s < t; ++s) staggered = staggered && !mask(i, s);
    if (staggered) groups_by_time[static_cast<std::size_t>(first_missing)].push_back(i);
  }
  if (staggered) {
    for (Index s = 0; s < t; ++s) {
      auto& g = groups_by_time[static_cast<std::size_t>(s)];
      if (!g.empty()) {
        out.adoption_times.push_back(s);
        out.adoption_groups.push_back(std::move(g));
      }
    }
    out.kind = PatternKind::Staggered;
    return out;
  }

  out.kind = PatternKind::Irregular;
  return out;
}

}  // namespace mnar
