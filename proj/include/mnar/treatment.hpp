#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mnar/inference.hpp"

namespace mnar {

// Covariate tensor: one N x T matrix per covariate.
struct CovariateSet {
  std::vector<Matrix> covariates;

  void validate(Index n, Index t) const {
    for (const auto& x : covariates)
      if (x.rows() != n || x.cols() != t) throw input_error("covariate shape mismatch");
  }
};

inline Matrix adjust_for_covariates(const Matrix& values, const CovariateSet& covs,
                                    const Vector& beta) {
  if (static_cast<std::size_t>(beta.size()) != covs.covariates.size()) {
    throw input_error("beta length does not match the number of covariates");
  }
  Matrix out = values;
  for (std::size_t p = 0; p < covs.covariates.size(); ++p) {
    out -= beta[static_cast<Index>(p)] * covs.covariates[p];
  }
  return out;
}

// Potential-outcome panel for treatment d: entry (i,t) observed iff t is
// prepilot (control outcomes for everyone) or i received treatment d in the
// pilot. Covariate adjustment is applied up front when beta is present.
inline std::pair<ObservedPanel, MissingPattern> build_treatment_panel(
    const ObservedPanel& base, const TreatmentAssignment& assignment, Index d,
    const CovariateSet& covs = {}, const Vector& beta = Vector()) {
  assignment.validate(base.units());
  if (d < 0 || d > assignment.treatment_count()) throw input_error("unknown treatment id");
  const Index t0 = assignment.pilot_start;
  if (t0 < 2 || t0 >= base.periods()) throw input_error("pilot_start out of range");
  Matrix values = beta.size() > 0 ? adjust_for_covariates(base.values, covs, beta) : base.values;
  Mask mask = base.mask;
  std::vector<char> in_d(static_cast<std::size_t>(base.units()), 0);
  for (Index u : assignment.groups[static_cast<std::size_t>(d)])
    in_d[static_cast<std::size_t>(u)] = 1;
  for (Index i = 0; i < base.units(); ++i)
    for (Index s = t0; s < base.periods(); ++s)
      if (!in_d[static_cast<std::size_t>(i)]) mask(i, s) = false;
  auto panel = make_panel(std::move(values), std::move(mask), base.unit_labels, base.time_labels);
  auto pattern = classify_pattern(panel);
  return {std::move(panel), std::move(pattern)};
}

struct TreatmentOptions {
  Index rank = -1;
  Index rank_max = 20;
  Index group_cap = -1;
  double lambda_c = 2.0;
  double lambda_override = -1;
  double level = 0.95;
  SolverOptions solver;
  int threads = 0;
};

// Effect estimates over the pilot periods for a query group:
// mu[d-1][k] is the effect of treatment d vs control at periods[k], theta
// its increment over treatment d-1.
struct EffectSeries {
  std::vector<Index> group;
  std::vector<Index> periods;
  std::vector<std::vector<double>> mu, theta, var_mu, var_theta;
};

// Per-cell effect estimates theta[d-1](u, k) with feasible variances for
// every treated unit u and pilot period k; input of the specification test.
struct CellEffects {
  std::vector<Index> units;
  std::vector<Index> periods;
  std::vector<Matrix> mu;
  std::vector<Matrix> theta;
  std::vector<Matrix> var_theta;
};

struct SpecTestResult {
  double statistic = 0.0;
  std::map<double, double> critical_values;  // keyed by confidence level
  std::map<double, bool> reject;
  int n_draws = 0;
};

namespace detail {

struct TreatSubFit {
  SubProblem sub;
  FactorPair factors;
  Matrix debiased;
  double weight = 0.0;   // |G_l| / |G|
  bool reference = false;
};

// All fits of one treatment's panel at one target period.
struct TreatFit {
  std::vector<TreatSubFit> fits;  // reference block first
  Index n_obs = 0;                // |I_delta|
  Index t_pre = 0;                // prepilot period count
  std::map<Index, double> estimate;

  const TreatSubFit& reference() const { return fits.front(); }

  // Factor row of unit u in the fit that contains it.
  Vector factor_row(Index u) const {
    for (const auto& f : fits) {
      for (std::size_t i = 0; i < f.sub.row_map.size(); ++i) {
        if (f.sub.row_map[i] == u) return f.factors.x_hat.row(static_cast<Index>(i)).transpose();
      }
    }
    throw input_error("unit " + std::to_string(u) + " missing from every fit");
  }

  // Gram of the observed-unit factor rows of the fit containing u.
  Matrix obs_gram_of(Index u) const {
    for (const auto& f : fits) {
      for (std::size_t i = 0; i < f.sub.row_map.size(); ++i) {
        if (f.sub.row_map[i] == u) {
          const Matrix x = f.factors.x_hat.topRows(n_obs);
          return x.transpose() * x;
        }
      }
    }
    throw input_error("unit " + std::to_string(u) + " missing from every fit");
  }

  Matrix z_pre() const { return reference().factors.z_hat.topRows(t_pre); }
  Vector z_target() const {
    return reference().factors.z_hat.row(reference().factors.z_hat.rows() - 1).transpose();
  }
};

// Row part of the treatment variance: sum over the observed units of the
// squared weighted combination of Gram-solved group-mean factor rows.
inline double treat_row_term(const TreatFit& fit) {
  Vector accum = Vector::Zero(fit.n_obs);
  for (const auto& f : fit.fits) {
    if (f.weight <= 0.0) continue;
    const Index r = f.factors.rank;
    const Matrix x = f.factors.x_hat.topRows(fit.n_obs);
    Vector mean = Vector::Zero(r);
    Index count = 0;
    if (f.reference) {
      for (const auto& [i, j] : f.sub.target) {
        mean += f.factors.x_hat.row(i).transpose();
        ++count;
      }
    } else {
      for (Index i = fit.n_obs; i < f.sub.rows(); ++i) {
        mean += f.factors.x_hat.row(i).transpose();
        ++count;
      }
    }
    mean /= static_cast<double>(count);
    accum += f.weight * (x * guarded_gram_solve(x.transpose() * x, mean));
  }
  return accum.squaredNorm();
}

}  // namespace detail

// Feasible variance of mean_G [m^(d) - m^(d')] at one period: row terms for
// both treatments, column terms from the reference fits, minus twice the
// cross-covariance bridged through the shared prepilot periods.
inline double effect_variance(const detail::TreatFit& fit_d, const detail::TreatFit& fit_dp,
                              Index group_size, double sigma2) {
  if (group_size < 1) throw input_error("effect_variance: empty group");
  const double rows = detail::treat_row_term(fit_d) + detail::treat_row_term(fit_dp);
  const Matrix zd = fit_d.z_pre(), zdp = fit_dp.z_pre();
  const Vector ad = detail::guarded_gram_solve(zd.transpose() * zd, fit_d.z_target());
  const Vector adp = detail::guarded_gram_solve(zdp.transpose() * zdp, fit_dp.z_target());
  const double col_d = fit_d.z_target().dot(ad);
  const double col_dp = fit_dp.z_target().dot(adp);
  const double cross = ad.dot((zd.transpose() * zdp) * adp);
  return sigma2 * rows +
         (sigma2 / static_cast<double>(group_size)) * (col_d + col_dp - 2.0 * cross);
}

// Orchestrates the per-treatment completion fits and all downstream
// inference for a multi-treatment panel. The regression coefficient beta is
// caller-supplied; its estimation error is negligible at the rates the
// effect estimates converge, so it is treated as known.
class TreatmentPipeline {
 public:
  TreatmentPipeline(const ObservedPanel& base, TreatmentAssignment assignment,
                    const CovariateSet& covs, const Vector& beta, TreatmentOptions opts)
      : assignment_(std::move(assignment)), opts_(std::move(opts)) {
    base.validate();
    assignment_.validate(base.units());
    covs.validate(base.units(), base.periods());
    opts_.solver.validate();
    t_pre_ = assignment_.pilot_start;
    if (t_pre_ < 2 || t_pre_ >= base.periods()) throw input_error("pilot_start out of range");
    const Index d_max = assignment_.treatment_count();
    panels_.reserve(static_cast<std::size_t>(d_max) + 1);
    for (Index d = 0; d <= d_max; ++d) {
      panels_.push_back(build_treatment_panel(base, assignment_, d, covs, beta));
    }
    // Prepilot block over all units: everyone's control outcome.
    for (Index i = 0; i < base.units(); ++i)
      for (Index s = 0; s < t_pre_; ++s)
        if (!base.mask(i, s)) throw input_error("prepilot block must be fully observed");
    prepilot_ = panels_[0].first.values.leftCols(t_pre_);
    const Index bmin = std::min(prepilot_.rows(), prepilot_.cols());
    rank_ = opts_.rank > 0 ? opts_.rank : estimate_rank(prepilot_, std::min(opts_.rank_max, bmin - 1));
    if (rank_ > bmin) throw input_error("rank exceeds the prepilot block");
    sigma0_ = pilot_sigma(prepilot_, rank_);
    sigma_hat_ = mnar::sigma_hat(prepilot_, rank_r_project(prepilot_, rank_));
  }

  Index rank() const { return rank_; }
  double noise_scale() const { return sigma_hat_; }
  Index pilot_start() const { return t_pre_; }
  Index treatment_count() const { return assignment_.treatment_count(); }
  const TreatmentAssignment& assignment() const { return assignment_; }

  std::vector<Index> treated_units() const {
    std::vector<Index> out;
    for (std::size_t d = 1; d < assignment_.groups.size(); ++d)
      out.insert(out.end(), assignment_.groups[d].begin(), assignment_.groups[d].end());
    std::sort(out.begin(), out.end());
    return out;
  }

  // Fits treatment delta's panel at period target for the query units.
  detail::TreatFit fit_at(Index delta, Index target, const std::vector<Index>& group) const {
    const auto& [panel, pattern] = panels_[static_cast<std::size_t>(delta)];
    if (target < t_pre_ || target >= panel.periods()) {
      throw input_error("target period must lie in the pilot range");
    }
    detail::TreatFit out;
    const auto& members = assignment_.groups[static_cast<std::size_t>(delta)];
    const std::set<Index> member_set(members.begin(), members.end());
    out.n_obs = static_cast<Index>(members.size());
    out.t_pre = t_pre_;
    std::vector<Index> g_obs, g_miss;
    for (Index u : group) (member_set.count(u) ? g_obs : g_miss).push_back(u);
    const double inv_group = group.empty() ? 0.0 : 1.0 / static_cast<double>(group.size());

    // Reference block: I_delta over the prepilot periods plus the target
    // column. Always built; it supplies the column factors of the variance.
    detail::TreatSubFit ref;
    {
      std::vector<Index> rows = members;
      std::sort(rows.begin(), rows.end());
      std::vector<Index> cols;
      for (Index s = 0; s < t_pre_; ++s) cols.push_back(s);
      cols.push_back(target);
      std::vector<std::pair<Index, Index>> target_cells;
      for (Index u : g_obs) {
        const auto it = std::lower_bound(rows.begin(), rows.end(), u);
        target_cells.emplace_back(static_cast<Index>(it - rows.begin()), t_pre_);
      }
      ref.sub = detail::extract_sub(panel, rows, cols, target_cells, /*reference=*/true);
    }
    ref.weight = inv_group * static_cast<double>(g_obs.size());
    ref.reference = true;
    out.fits.push_back(std::move(ref));
    if (!g_miss.empty()) {
      const Index cap = opts_.group_cap > 0 ? opts_.group_cap
                                            : default_group_cap(out.n_obs, t_pre_);
      for (const auto& chunk : partition_missing(g_miss, cap).groups) {
        detail::TreatSubFit f;
        f.sub = assemble_inference(panel, pattern, chunk, target);
        f.weight = inv_group * static_cast<double>(chunk.size());
        out.fits.push_back(std::move(f));
      }
    }
    for (auto& f : out.fits) {
      f.sub.lambda = opts_.lambda_override >= 0.0
                         ? opts_.lambda_override
                         : select_lambda(sigma0_, f.sub.rows(), f.sub.cols(), opts_.lambda_c);
      const Matrix fit = f.sub.mask.all()
                             ? soft_threshold_svd(f.sub.values, f.sub.lambda)
                             : solve_nuclear(f.sub.values, f.sub.mask, f.sub.lambda, opts_.solver);
      f.debiased = debias_project(fit, f.sub.values, f.sub.mask, rank_);
      f.factors = deshrink_factors(fit, f.sub.lambda, rank_);
      for (const auto& [i, j] : f.sub.target) {
        out.estimate[f.sub.row_map[static_cast<std::size_t>(i)]] = f.debiased(i, j);
      }
    }
    return out;
  }

  double effect_variance(const detail::TreatFit& fit_d, const detail::TreatFit& fit_dp,
                         Index group_size) const {
    return mnar::effect_variance(fit_d, fit_dp, group_size, sigma_hat_ * sigma_hat_);
  }

  // Window-average variance over periods S for theta^(d): per-period row
  // terms shrink by 1/|S|; the column part uses the window-mean factor
  // difference through reference fits spanning the whole window.
  double aggregate_window_variance(Index d, const std::vector<Index>& window,
                                   const std::vector<Index>& group) const {
    if (window.empty()) throw input_error("aggregate_window_variance: empty window");
    if (d < 1 || d > treatment_count()) throw input_error("unknown treatment id");
    const double s2 = sigma_hat_ * sigma_hat_;
    const double inv_s = 1.0 / static_cast<double>(window.size());
    double row = 0.0;
    for (Index t : window) {
      row += detail::treat_row_term(fit_at(d, t, group)) +
             detail::treat_row_term(fit_at(d - 1, t, group));
    }
    row *= inv_s * inv_s;

    const auto ref_d = window_reference(d, window);
    const auto ref_dp = window_reference(d - 1, window);
    const Matrix& zd = ref_d.first;
    const Matrix& zdp = ref_dp.first;
    const Vector zbar_d = ref_d.second, zbar_dp = ref_dp.second;
    const Vector ad = detail::guarded_gram_solve(zd.transpose() * zd, zbar_d);
    const Vector adp = detail::guarded_gram_solve(zdp.transpose() * zdp, zbar_dp);
    const double col = zbar_d.dot(ad) + zbar_dp.dot(adp) - 2.0 * ad.dot((zd.transpose() * zdp) * adp);
    return s2 * row + (s2 / static_cast<double>(group.size())) * col;
  }

  EffectSeries estimate_effects(const std::vector<Index>& group,
                                std::vector<Index> periods = {}) const {
    if (group.empty()) throw input_error("estimate_effects: empty group");
    if (periods.empty()) {
      for (Index t = t_pre_; t < panels_[0].first.periods(); ++t) periods.push_back(t);
    }
    const Index d_max = treatment_count();
    EffectSeries out;
    out.group = group;
    out.periods = periods;
    out.mu.assign(static_cast<std::size_t>(d_max), std::vector<double>(periods.size(), 0.0));
    out.theta = out.mu;
    out.var_mu = out.mu;
    out.var_theta = out.mu;
    parallel_for(
        periods.size(),
        [&](std::size_t k) {
          const Index t = periods[k];
          std::vector<detail::TreatFit> fits;
          fits.reserve(static_cast<std::size_t>(d_max) + 1);
          for (Index d = 0; d <= d_max; ++d) fits.push_back(fit_at(d, t, group));
          const double inv = 1.0 / static_cast<double>(group.size());
          for (Index d = 1; d <= d_max; ++d) {
            double mu = 0.0, theta = 0.0;
            for (Index u : group) {
              mu += (fits[static_cast<std::size_t>(d)].estimate.at(u) -
                     fits[0].estimate.at(u)) * inv;
              theta += (fits[static_cast<std::size_t>(d)].estimate.at(u) -
                        fits[static_cast<std::size_t>(d - 1)].estimate.at(u)) * inv;
            }
            out.mu[static_cast<std::size_t>(d - 1)][k] = mu;
            out.theta[static_cast<std::size_t>(d - 1)][k] = theta;
            out.var_mu[static_cast<std::size_t>(d - 1)][k] = effect_variance(
                fits[static_cast<std::size_t>(d)], fits[0], static_cast<Index>(group.size()));
            out.var_theta[static_cast<std::size_t>(d - 1)][k] =
                effect_variance(fits[static_cast<std::size_t>(d)],
                                fits[static_cast<std::size_t>(d - 1)],
                                static_cast<Index>(group.size()));
          }
        },
        opts_.threads);
    return out;
  }

  // Per-cell theta estimates and variances for every treated unit; the
  // row terms collapse to x^T Gram^{-1} x for singleton groups.
  CellEffects estimate_cell_effects(std::vector<Index> periods = {}) const {
    if (periods.empty()) {
      for (Index t = t_pre_; t < panels_[0].first.periods(); ++t) periods.push_back(t);
    }
    const Index d_max = treatment_count();
    CellEffects out;
    out.units = treated_units();
    out.periods = periods;
    const Index nu = static_cast<Index>(out.units.size());
    const Index np = static_cast<Index>(periods.size());
    out.theta.assign(static_cast<std::size_t>(d_max), Matrix::Zero(nu, np));
    out.mu = out.theta;
    out.var_theta = out.theta;
    parallel_for(
        periods.size(),
        [&](std::size_t k) {
          const Index t = periods[k];
          std::vector<detail::TreatFit> fits;
          for (Index d = 0; d <= d_max; ++d) fits.push_back(fit_at(d, t, out.units));
          std::vector<double> col_part(static_cast<std::size_t>(d_max));
          for (Index d = 1; d <= d_max; ++d) {
            const auto& fd = fits[static_cast<std::size_t>(d)];
            const auto& fdp = fits[static_cast<std::size_t>(d - 1)];
            const Matrix zd = fd.z_pre(), zdp = fdp.z_pre();
            const Vector ad = detail::guarded_gram_solve(zd.transpose() * zd, fd.z_target());
            const Vector adp = detail::guarded_gram_solve(zdp.transpose() * zdp, fdp.z_target());
            col_part[static_cast<std::size_t>(d - 1)] =
                fd.z_target().dot(ad) + fdp.z_target().dot(adp) -
                2.0 * ad.dot((zd.transpose() * zdp) * adp);
          }
          const double s2 = sigma_hat_ * sigma_hat_;
          for (Index ui = 0; ui < nu; ++ui) {
            const Index u = out.units[static_cast<std::size_t>(ui)];
            for (Index d = 1; d <= d_max; ++d) {
              const auto& fd = fits[static_cast<std::size_t>(d)];
              const auto& fdp = fits[static_cast<std::size_t>(d - 1)];
              out.theta[static_cast<std::size_t>(d - 1)](ui, static_cast<Index>(k)) =
                  fd.estimate.at(u) - fdp.estimate.at(u);
              out.mu[static_cast<std::size_t>(d - 1)](ui, static_cast<Index>(k)) =
                  fd.estimate.at(u) - fits[0].estimate.at(u);
              const Vector xd = fd.factor_row(u), xdp = fdp.factor_row(u);
              const double row =
                  xd.dot(detail::guarded_gram_solve(fd.obs_gram_of(u), xd)) +
                  xdp.dot(detail::guarded_gram_solve(fdp.obs_gram_of(u), xdp));
              out.var_theta[static_cast<std::size_t>(d - 1)](ui, static_cast<Index>(k)) =
                  s2 * (row + col_part[static_cast<std::size_t>(d - 1)]);
            }
          }
        },
        opts_.threads);
    return out;
  }

 private:
  // Reference fit over columns [0, T0) plus the whole window; returns the
  // prepilot Z rows and the window-mean target factor row.
  std::pair<Matrix, Vector> window_reference(Index delta, const std::vector<Index>& window) const {
    const auto& [panel, pattern] = panels_[static_cast<std::size_t>(delta)];
    std::vector<Index> rows = assignment_.groups[static_cast<std::size_t>(delta)];
    std::sort(rows.begin(), rows.end());
    std::vector<Index> cols;
    for (Index s = 0; s < t_pre_; ++s) cols.push_back(s);
    for (Index t : window) {
      if (t < t_pre_ || t >= panel.periods()) throw input_error("window period outside the pilot");
      cols.push_back(t);
    }
    const Matrix block = extract_block(panel, rows, cols);
    const double lam = opts_.lambda_override >= 0.0
                           ? opts_.lambda_override
                           : select_lambda(sigma0_, block.rows(), block.cols(), opts_.lambda_c);
    const auto factors = deshrink_factors(soft_threshold_svd(block, lam), lam, rank_);
    Vector zbar = Vector::Zero(rank_);
    for (Index j = t_pre_; j < static_cast<Index>(cols.size()); ++j) {
      zbar += factors.z_hat.row(j).transpose();
    }
    zbar /= static_cast<double>(window.size());
    return {factors.z_hat.topRows(t_pre_), zbar};
  }

  TreatmentAssignment assignment_;
  TreatmentOptions opts_;
  std::vector<std::pair<ObservedPanel, MissingPattern>> panels_;
  Matrix prepilot_;
  Index t_pre_ = 0;
  Index rank_ = 0;
  double sigma0_ = 0.0;
  double sigma_hat_ = 0.0;
};

inline EffectSeries estimate_effects(const ObservedPanel& base,
                                     const TreatmentAssignment& assignment,
                                     const std::vector<Index>& group,
                                     const TreatmentOptions& opts, const CovariateSet& covs = {},
                                     const Vector& beta = Vector(),
                                     const std::vector<Index>& periods = {}) {
  return TreatmentPipeline(base, assignment, covs, beta, opts).estimate_effects(group, periods);
}

// Time-averaged per-unit effects: row u of the result holds
// mean_t theta^(d)(u, t) for d = 1..D.
inline Matrix estimate_unit_effects(const CellEffects& cells) {
  if (cells.periods.empty()) throw input_error("estimate_unit_effects: no pilot periods");
  Matrix out(static_cast<Index>(cells.units.size()), static_cast<Index>(cells.theta.size()));
  for (std::size_t d = 0; d < cells.theta.size(); ++d) {
    out.col(static_cast<Index>(d)) = cells.theta[d].rowwise().mean();
  }
  return out;
}

// Max absolute t-ratio of the cells against per-treatment baselines, with
// critical values from a Gaussian multiplier bootstrap that redraws every
// standardized cell as an independent standard normal. Ignoring the
// cross-cell correlation makes the test approximate; draws are seeded.
inline SpecTestResult spec_test(const std::vector<Matrix>& theta,
                                const std::vector<Matrix>& var_theta,
                                const std::vector<double>& baseline, int n_draws,
                                std::uint64_t seed,
                                const std::vector<double>& levels = {0.90, 0.95, 0.99}) {
  if (theta.size() != var_theta.size() || theta.size() != baseline.size() || theta.empty()) {
    throw input_error("spec_test: mismatched inputs");
  }
  if (n_draws < 100) throw input_error("spec_test: need at least 100 bootstrap draws");
  SpecTestResult out;
  out.n_draws = n_draws;
  Index cells = 0;
  for (std::size_t d = 0; d < theta.size(); ++d) {
    if (theta[d].rows() != var_theta[d].rows() || theta[d].cols() != var_theta[d].cols()) {
      throw input_error("spec_test: shape mismatch");
    }
    for (Index i = 0; i < theta[d].rows(); ++i)
      for (Index j = 0; j < theta[d].cols(); ++j) {
        if (!(var_theta[d](i, j) > 0.0)) throw input_error("spec_test: nonpositive variance cell");
        out.statistic = std::max(out.statistic, std::abs(theta[d](i, j) - baseline[d]) /
                                                    std::sqrt(var_theta[d](i, j)));
      }
    cells += theta[d].size();
  }
  std::vector<double> draw_max(static_cast<std::size_t>(n_draws));
  parallel_for(static_cast<std::size_t>(n_draws), [&](std::size_t k) {
    CounterRng rng = CounterRng::substream(seed, k);
    double m = 0.0;
    for (Index c = 0; c < cells; ++c) m = std::max(m, std::abs(rng.next_normal()));
    draw_max[k] = m;
  });
  std::sort(draw_max.begin(), draw_max.end());
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw input_error("spec_test: level outside (0,1)");
    const auto pos = static_cast<std::size_t>(
        std::min<double>(std::ceil(level * n_draws), static_cast<double>(n_draws)) - 1);
    out.critical_values[level] = draw_max[pos];
    out.reject[level] = out.statistic > draw_max[pos];
  }
  return out;
}

// Two-way fixed-effects estimate of the per-treatment level shifts: OLS of
// the observed outcomes on treatment-by-pilot dummies after iterative
// demeaning of unit and time effects. Returns mu^(1..D); differences give
// the theta baselines for the specification test.
inline std::vector<double> two_way_fe_effects(const ObservedPanel& base,
                                              const TreatmentAssignment& assignment,
                                              const CovariateSet& covs = {},
                                              const Vector& beta = Vector()) {
  assignment.validate(base.units());
  const Index n = base.units(), t = base.periods();
  const Index d_max = assignment.treatment_count();
  Matrix y = beta.size() > 0 ? adjust_for_covariates(base.values, covs, beta) : base.values;
  std::vector<Matrix> cols(static_cast<std::size_t>(d_max), Matrix::Zero(n, t));
  for (Index d = 1; d <= d_max; ++d) {
    for (Index u : assignment.groups[static_cast<std::size_t>(d)])
      for (Index s = assignment.pilot_start; s < t; ++s)
        if (base.mask(u, s)) cols[static_cast<std::size_t>(d - 1)](u, s) = 1.0;
  }
  const Matrix w = base.mask.cast<double>();
  const Vector row_w = w.rowwise().sum(), col_w = w.colwise().sum().transpose();
  auto demean = [&](Matrix& m) {
    for (int pass = 0; pass < 100; ++pass) {
      double change = 0.0;
      const Vector rm = (m.cwiseProduct(w)).rowwise().sum().cwiseQuotient(row_w);
      m -= rm * Eigen::RowVectorXd::Ones(t);
      const Vector cm = (m.cwiseProduct(w)).colwise().sum().transpose().cwiseQuotient(col_w);
      m -= Eigen::VectorXd::Ones(n) * cm.transpose();
      change = rm.cwiseAbs().maxCoeff() + cm.cwiseAbs().maxCoeff();
      if (change < 1e-12) break;
    }
  };
  demean(y);
  for (auto& c : cols) demean(c);
  Matrix xtx(d_max, d_max);
  Vector xty(d_max);
  for (Index a = 0; a < d_max; ++a) {
    xty[a] = (cols[static_cast<std::size_t>(a)].cwiseProduct(y).cwiseProduct(w)).sum();
    for (Index b = 0; b <= a; ++b) {
      xtx(a, b) = xtx(b, a) = (cols[static_cast<std::size_t>(a)]
                                   .cwiseProduct(cols[static_cast<std::size_t>(b)])
                                   .cwiseProduct(w))
                                  .sum();
    }
  }
  const Vector mu = xtx.ldlt().solve(xty);
  return {mu.data(), mu.data() + mu.size()};
}

}  // namespace mnar
