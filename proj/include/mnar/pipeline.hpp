#pragma once

#include <utility>
#include <vector>

#include "mnar/debias.hpp"
#include "mnar/parallel.hpp"
#include "mnar/solver.hpp"
#include "mnar/subgroup.hpp"

namespace mnar {

struct CompletionOptions {
  Index rank = -1;             // -1: eigenvalue-ratio estimate on the observed block
  Index rank_max = 20;         // scan bound for the automatic rank
  Index group_cap = -1;        // -1: sqrt(min(N0, T0)) rule
  double lambda_c = 2.0;       // C in lambda = C sigma sqrt(max(n, m))
  double lambda_override = -1; // >= 0: fixed lambda for every subproblem
  SolverOptions solver;
  int threads = 0;
};

struct SubproblemReport {
  Index rows = 0, cols = 0, targets = 0;
  double lambda = 0.0;
  SolveDiagnostics diagnostics;
};

struct CompletionResult {
  Matrix completed;
  Matrix fitted;
  MissingPattern pattern;
  Index rank = 0;
  Index group_cap = 0;
  double sigma_initial = 0.0;
  double max_abs_missing_change = 0.0;  // max |completed - fitted| over missing cells
  std::vector<SubproblemReport> subproblems;
};

// Largest fully observed block of the panel: the observed rows x observed
// columns for the block family; for staggered adoption the never-treated
// units over all periods, falling back to the latest adopters over their
// pre-adoption span when every unit eventually adopts.
inline std::pair<std::vector<Index>, std::vector<Index>> observed_block_indices(
    const ObservedPanel& panel, const MissingPattern& pattern) {
  std::vector<Index> rows, cols;
  switch (pattern.kind) {
    case PatternKind::FullyObserved:
      for (Index i = 0; i < panel.units(); ++i) rows.push_back(i);
      for (Index s = 0; s < panel.periods(); ++s) cols.push_back(s);
      break;
    case PatternKind::SingleTreatedPeriod:
    case PatternKind::SingleTreatedUnit:
    case PatternKind::Block:
      rows = pattern.observed_rows();
      cols = pattern.observed_cols();
      break;
    case PatternKind::Staggered: {
      std::vector<char> adopts(static_cast<std::size_t>(panel.units()), 0);
      for (const auto& g : pattern.adoption_groups)
        for (Index u : g) adopts[static_cast<std::size_t>(u)] = 1;
      for (Index u = 0; u < panel.units(); ++u)
        if (!adopts[static_cast<std::size_t>(u)]) rows.push_back(u);
      Index horizon = panel.periods();
      if (rows.empty()) {
        horizon = pattern.adoption_times.back();
        for (Index u : pattern.adoption_groups.back()) rows.push_back(u);
        std::sort(rows.begin(), rows.end());
      }
      for (Index s = 0; s < horizon; ++s) cols.push_back(s);
      break;
    }
    case PatternKind::Irregular:
      throw pattern_error("irregular pattern has no observed block");
  }
  return {rows, cols};
}

inline Matrix extract_block(const ObservedPanel& panel, const std::vector<Index>& rows,
                            const std::vector<Index>& cols) {
  Matrix block(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) block(static_cast<Index>(i),
                                                        static_cast<Index>(j)) =
        panel.values(rows[i], cols[j]);
  return block;
}

// End-to-end completion: classify, group, solve each subproblem, debias,
// and reassemble. Observed entries are preserved in `completed`; `fitted`
// carries the averaged debiased fit over every covered cell.
inline CompletionResult complete_panel(const ObservedPanel& panel, const CompletionOptions& opts) {
  panel.validate();
  opts.solver.validate();
  CompletionResult out;
  out.pattern = classify_pattern(panel);

  if (out.pattern.kind == PatternKind::Irregular) {
    const auto [i, j] = first_irregular_cell(panel.mask);
    throw pattern_error("unsupported irregular missing pattern; first offending cell is unit " +
                        std::to_string(i) + ", period " + std::to_string(j));
  }

  const auto [brows, bcols] = observed_block_indices(panel, out.pattern);
  const Matrix block = extract_block(panel, brows, bcols);
  const Index bmin = std::min(block.rows(), block.cols());
  if (opts.rank > 0) {
    if (opts.rank > bmin) throw input_error("requested rank exceeds the observed block");
    out.rank = opts.rank;
  } else {
    out.rank = estimate_rank(block, std::min(opts.rank_max, bmin - 1));
  }
  out.sigma_initial = pilot_sigma(block, out.rank);
  out.group_cap = opts.group_cap > 0
                      ? opts.group_cap
                      : default_group_cap(static_cast<Index>(brows.size()),
                                          static_cast<Index>(bcols.size()));

  auto subs = build_completion_subproblems(panel, out.pattern, out.group_cap);
  std::vector<Matrix> estimates(subs.size());
  out.subproblems.resize(subs.size());
  parallel_for(
      subs.size(),
      [&](std::size_t k) {
        SubProblem& sub = subs[k];
        sub.lambda = opts.lambda_override >= 0.0
                         ? opts.lambda_override
                         : select_lambda(out.sigma_initial, sub.rows(), sub.cols(), opts.lambda_c);
        SolveDiagnostics diag;
        const Matrix fit = solve_nuclear(sub.values, sub.mask, sub.lambda, opts.solver, &diag);
        estimates[k] = debias_project(fit, sub.values, sub.mask, out.rank);
        out.subproblems[k] = {sub.rows(), sub.cols(), static_cast<Index>(sub.target.size()),
                              sub.lambda, diag};
      },
      opts.threads);

  std::vector<std::pair<const SubProblem*, const Matrix*>> pairs;
  pairs.reserve(subs.size());
  for (std::size_t k = 0; k < subs.size(); ++k) pairs.emplace_back(&subs[k], &estimates[k]);
  auto reassembled = reassemble(panel, pairs);
  out.completed = std::move(reassembled.completed);
  out.fitted = std::move(reassembled.fitted);
  for (Index i = 0; i < panel.units(); ++i)
    for (Index j = 0; j < panel.periods(); ++j)
      if (!panel.mask(i, j)) {
        out.max_abs_missing_change =
            std::max(out.max_abs_missing_change, std::abs(out.completed(i, j) - out.fitted(i, j)));
      }
  return out;
}

}  // namespace mnar
