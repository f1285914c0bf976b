#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "mnar/pipeline.hpp"
#include "mnar/rng.hpp"

namespace mnar {

struct GroupAverageInference {
  double estimate = 0.0;
  double variance = 0.0;
  double ci_lower = 0.0, ci_upper = 0.0;
  double row_component = 0.0, col_component = 0.0;
  double sigma_hat = 0.0;
  double level = 0.95;
  Index n_groups = 0;
};

// Residual RMS over a fully observed block against a fitted matrix.
inline double sigma_hat(const Matrix& block, const Matrix& fit) {
  if (block.rows() == 0 || block.cols() == 0) throw input_error("sigma_hat: empty block");
  if (block.rows() != fit.rows() || block.cols() != fit.cols()) {
    throw input_error("sigma_hat: shape mismatch");
  }
  return std::sqrt((block - fit).squaredNorm() /
                   static_cast<double>(block.rows() * block.cols()));
}

// Gaussian interval: estimate +/- z_{(1+level)/2} sqrt(variance).
inline std::pair<double, double> group_average_ci(double estimate, double variance, double level) {
  if (!(level > 0.0 && level < 1.0)) throw input_error("group_average_ci: level outside (0,1)");
  if (!(variance > 0.0)) throw input_error("group_average_ci: variance must be positive");
  const double z = inverse_normal_cdf(0.5 * (1.0 + level));
  const double half = z * std::sqrt(variance);
  return {estimate - half, estimate + half};
}

// One subproblem's contribution to the group-average variance: factor rows
// of the always-observed units, the group-mean factor row, column factors
// of the pre periods, and the target period's factor row.
struct VarianceFitInput {
  Matrix x_obs;        // n_obs x r, aligned across subproblems
  Vector x_group_mean; // r
  Matrix z_pre;        // t_pre x r
  Vector z_target;     // r
  double weight = 0.0; // |G_l| / |G|
};

namespace detail {

// Solve gram * x = b with a condition-number guard at 1e12.
inline Matrix guarded_gram_solve(const Matrix& gram, const Matrix& rhs) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw numeric_error("gram eigendecomposition failed");
  const auto& ev = eig.eigenvalues();
  const double lo = ev[0], hi = ev[ev.size() - 1];
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw numeric_error("singular factor Gram matrix (condition number above 1e12)");
  }
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         (eig.eigenvectors().transpose() * rhs);
}

inline Vector guarded_gram_solve(const Matrix& gram, const Vector& rhs) {
  return Vector(guarded_gram_solve(gram, Matrix(rhs)));
}

}  // namespace detail

struct VarianceComponents {
  double row_component = 0.0;
  double col_component = 0.0;
  double variance = 0.0;
};

// Feasible variance of a group-average estimate:
//   sigma^2 sum_{i<=N0} ( sum_l w_l xbar_l^T (X_l^T X_l)^{-1} x_{l,i} )^2
//   + (sigma^2/|G|) sum_l w_l z_{l,t0}^T (Z_l^T Z_l)^{-1} z_{l,t0},
// Grams over the observed units and each group's pre periods.
inline VarianceComponents variance_group_average(const std::vector<VarianceFitInput>& fits,
                                                 double sigma2, Index group_size) {
  if (fits.empty()) throw input_error("variance_group_average: no fits");
  if (group_size < 1) throw input_error("variance_group_average: empty group");
  const Index n_obs = fits.front().x_obs.rows();
  Vector row_accum = Vector::Zero(n_obs);
  VarianceComponents out;
  for (const auto& f : fits) {
    if (f.x_obs.rows() != n_obs) {
      throw input_error("variance_group_average: misaligned observed-unit factors");
    }
    const Matrix gram_x = f.x_obs.transpose() * f.x_obs;
    const Vector vx = detail::guarded_gram_solve(gram_x, f.x_group_mean);
    row_accum += f.weight * (f.x_obs * vx);
    const Matrix gram_z = f.z_pre.transpose() * f.z_pre;
    const Vector vz = detail::guarded_gram_solve(gram_z, f.z_target);
    out.col_component += f.weight * f.z_target.dot(vz);
  }
  out.row_component = sigma2 * row_accum.squaredNorm();
  out.col_component *= sigma2 / static_cast<double>(group_size);
  out.variance = out.row_component + out.col_component;
  return out;
}

struct InferenceOptions {
  Index rank = -1;
  Index rank_max = 20;
  Index group_cap = -1;
  double lambda_c = 2.0;
  double lambda_override = -1;
  double level = 0.95;
  SolverOptions solver;
  int threads = 0;
};

namespace detail {

struct InferenceSubFit {
  SubProblem sub;
  FactorPair factors;
  Matrix debiased;
  double weight = 0.0;
  bool reference = false;
};

// Assembles the always-observed block relevant for inference at t0: for the
// block family the observed rows x observed cols; for staggered adoption
// the units untreated at t0 over the periods all of them remain untreated.
inline std::pair<std::vector<Index>, std::vector<Index>> inference_block_indices(
    const ObservedPanel& panel, const MissingPattern& pattern, Index t0) {
  if (pattern.is_block_family() || pattern.kind == PatternKind::FullyObserved) {
    return {pattern.observed_rows(), pattern.observed_cols()};
  }
  if (pattern.kind != PatternKind::Staggered) {
    throw pattern_error("inference requires a block or staggered pattern");
  }
  std::vector<char> treated_by_t0(static_cast<std::size_t>(panel.units()), 0);
  Index horizon = panel.periods();
  for (std::size_t d = 0; d < pattern.adoption_groups.size(); ++d) {
    if (pattern.adoption_times[d] <= t0) {
      for (Index u : pattern.adoption_groups[d]) treated_by_t0[static_cast<std::size_t>(u)] = 1;
    } else {
      horizon = std::min(horizon, pattern.adoption_times[d]);
    }
  }
  std::vector<Index> rows, cols;
  for (Index u = 0; u < panel.units(); ++u)
    if (!treated_by_t0[static_cast<std::size_t>(u)]) rows.push_back(u);
  for (Index s = 0; s < horizon; ++s) cols.push_back(s);
  if (rows.empty()) throw pattern_error("no unit remains untreated at the target period");
  return {rows, cols};
}

}  // namespace detail

// Group-average inference for missing entries at one period: split the
// group by adoption time and the group cap, fit each subproblem, debias,
// average, and build the feasible variance with de-shrunken factors.
inline GroupAverageInference infer_group_average(const ObservedPanel& panel,
                                                 const MissingPattern& pattern,
                                                 std::vector<Index> group, Index t0,
                                                 const InferenceOptions& opts) {
  if (group.empty()) throw input_error("infer_group_average: empty group");
  if (t0 < 0 || t0 >= panel.periods()) throw input_error("infer_group_average: t0 out of range");
  std::sort(group.begin(), group.end());
  group.erase(std::unique(group.begin(), group.end()), group.end());
  for (Index u : group)
    if (u < 0 || u >= panel.units()) throw input_error("infer_group_average: unit out of range");

  const auto [obs_rows, obs_cols] = detail::inference_block_indices(panel, pattern, t0);
  const Matrix block = extract_block(panel, obs_rows, obs_cols);
  const Index bmin = std::min(block.rows(), block.cols());
  Index rank = opts.rank;
  if (rank <= 0) {
    rank = estimate_rank(block, std::min(opts.rank_max, bmin - 1));
  } else if (rank > bmin) {
    throw input_error("infer_group_average: rank exceeds the observed block");
  }
  const double sigma0 = pilot_sigma(block, rank);
  const Index cap = opts.group_cap > 0
                        ? opts.group_cap
                        : default_group_cap(static_cast<Index>(obs_rows.size()),
                                            static_cast<Index>(obs_cols.size()));

  // Split the group: observed units go to the reference block; missing ones
  // are grouped by adoption class, then capped.
  const std::set<Index> obs_set(obs_rows.begin(), obs_rows.end());
  std::vector<Index> group_observed;
  std::vector<std::vector<Index>> classes;
  if (pattern.is_block_family() || pattern.kind == PatternKind::FullyObserved) {
    std::vector<Index> missing;
    for (Index u : group) (obs_set.count(u) ? group_observed : missing).push_back(u);
    if (!missing.empty()) {
      for (auto& g : partition_missing(missing, cap).groups) classes.push_back(std::move(g));
    }
  } else {
    std::vector<std::vector<Index>> by_class(pattern.adoption_groups.size());
    for (Index u : group) {
      if (obs_set.count(u)) {
        group_observed.push_back(u);
        continue;
      }
      bool placed = false;
      for (std::size_t d = 0; d < pattern.adoption_groups.size() && !placed; ++d) {
        const auto& g = pattern.adoption_groups[d];
        if (std::find(g.begin(), g.end(), u) != g.end()) {
          by_class[d].push_back(u);
          placed = true;
        }
      }
      if (!placed) throw input_error("infer_group_average: unit neither observed nor treated");
    }
    for (auto& cls : by_class) {
      if (cls.empty()) continue;
      for (auto& g : partition_missing(cls, cap).groups) classes.push_back(std::move(g));
    }
  }

  const double inv_group = 1.0 / static_cast<double>(group.size());
  std::vector<detail::InferenceSubFit> fits;
  if (!group_observed.empty()) {
    detail::InferenceSubFit ref;
    ref.sub = assemble_inference_reference(panel, pattern, group_observed, t0);
    ref.weight = inv_group * static_cast<double>(group_observed.size());
    ref.reference = true;
    fits.push_back(std::move(ref));
  }
  for (const auto& cls : classes) {
    detail::InferenceSubFit f;
    f.sub = assemble_inference(panel, pattern, cls, t0);
    f.weight = inv_group * static_cast<double>(cls.size());
    fits.push_back(std::move(f));
  }

  parallel_for(
      fits.size(),
      [&](std::size_t k) {
        auto& f = fits[k];
        f.sub.lambda = opts.lambda_override >= 0.0
                           ? opts.lambda_override
                           : select_lambda(sigma0, f.sub.rows(), f.sub.cols(), opts.lambda_c);
        Matrix fit;
        if (f.sub.mask.all()) {
          fit = soft_threshold_svd(f.sub.values, f.sub.lambda);
        } else {
          fit = solve_nuclear(f.sub.values, f.sub.mask, f.sub.lambda, opts.solver);
        }
        f.debiased = debias_project(fit, f.sub.values, f.sub.mask, rank);
        f.factors = deshrink_factors(fit, f.sub.lambda, rank);
      },
      opts.threads);

  GroupAverageInference out;
  out.level = opts.level;
  out.n_groups = static_cast<Index>(fits.size());
  for (const auto& f : fits)
    for (const auto& [i, j] : f.sub.target) out.estimate += f.debiased(i, j) * inv_group;

  out.sigma_hat = sigma_hat(block, rank_r_project(block, rank));

  const Index n_obs = static_cast<Index>(obs_rows.size());
  std::vector<VarianceFitInput> vin;
  for (const auto& f : fits) {
    VarianceFitInput v;
    v.weight = f.weight;
    v.x_obs = f.factors.x_hat.topRows(n_obs);
    if (f.reference) {
      Vector mean = Vector::Zero(rank);
      for (const auto& [i, j] : f.sub.target) mean += f.factors.x_hat.row(i).transpose();
      v.x_group_mean = mean / static_cast<double>(f.sub.target.size());
      const Index tcol = f.sub.target.front().second;
      v.z_target = f.factors.z_hat.row(tcol).transpose();
      if (f.sub.cols() > static_cast<Index>(obs_cols.size())) {
        v.z_pre = f.factors.z_hat.topRows(f.sub.cols() - 1);  // appended target column
      } else {
        v.z_pre = f.factors.z_hat;  // target period lies inside the block
      }
    } else {
      Vector mean = Vector::Zero(rank);
      for (Index i = n_obs; i < f.sub.rows(); ++i) mean += f.factors.x_hat.row(i).transpose();
      v.x_group_mean = mean / static_cast<double>(f.sub.rows() - n_obs);
      v.z_pre = f.factors.z_hat.topRows(f.sub.cols() - 1);
      v.z_target = f.factors.z_hat.row(f.sub.cols() - 1).transpose();
    }
    vin.push_back(std::move(v));
  }
  const auto comps =
      variance_group_average(vin, out.sigma_hat * out.sigma_hat, static_cast<Index>(group.size()));
  out.row_component = comps.row_component;
  out.col_component = comps.col_component;
  out.variance = comps.variance;
  const auto [lo, hi] = group_average_ci(out.estimate, out.variance, opts.level);
  out.ci_lower = lo;
  out.ci_upper = hi;
  return out;
}

}  // namespace mnar
