#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mnar/treatment.hpp"

namespace mnar {

enum class SimDesign { staggered_basic, interactive_effects, tobacco_protocol };

inline const char* to_string(SimDesign d) {
  switch (d) {
    case SimDesign::staggered_basic: return "staggered_basic";
    case SimDesign::interactive_effects: return "interactive_effects";
    case SimDesign::tobacco_protocol: return "tobacco_protocol";
  }
  return "?";
}

// Synthetic designs. Defaults reproduce the reference experiments: a
// staggered-adoption panel with a never-adopting group of 200 and three
// groups of 100 adopting at periods 200/300/400 (0-based) over T=500, and a
// three-arm interactive-effects design with 250 units per arm and a
// 250+250 period split, rank 2 throughout.
struct SimConfig {
  SimDesign design = SimDesign::staggered_basic;
  Index rank = 2;
  double noise_sd = 1.0;

  // staggered_basic
  std::vector<Index> group_sizes = {200, 100, 100, 100};  // first group never adopts
  std::vector<Index> adoption_times = {200, 300, 400};    // 0-based first missing period
  Index periods = 500;
  std::vector<Vector> zeta_means;  // one mean per group
  Vector eta_mean;
  double zeta_sd = 1.0, eta_sd = 1.0;

  // interactive_effects
  std::vector<Index> arm_sizes = {250, 250, 250};  // I_0, I_1, I_2
  Index prepilot_periods = 250, pilot_periods = 250;
  Vector zeta_mean_interactive;
  std::vector<Vector> eta_means_by_treatment;  // one mean per treatment incl. control
  Vector beta;
  bool with_covariates = true;

  // harness
  int replications = 500;
  std::uint64_t seed = 20240501;
  int threads = 0;
  bool fix_target_unit = false;  // draw the target once instead of per replication
  Index group_cap = -1;
  double lambda_c = 2.0;
  Index fit_rank = -1;  // rank handed to the estimators; -1 uses cfg.rank
  SolverOptions solver;

  void fill_defaults() {
    const double r2 = std::sqrt(2.0);
    if (zeta_means.empty()) {
      zeta_means = {Vector::Constant(rank, 2.5 / r2), Vector::Constant(rank, 1.0 / r2),
                    Vector::Constant(rank, 1.5 / r2), Vector::Constant(rank, r2)};
    }
    if (eta_mean.size() == 0) eta_mean = Vector::Constant(rank, 1.0 / r2);
    if (zeta_mean_interactive.size() == 0) zeta_mean_interactive = Vector::Constant(rank, 1.0 / r2);
    if (eta_means_by_treatment.empty()) {
      eta_means_by_treatment = {Vector::Constant(rank, 1.0 / r2),
                                Vector::Constant(rank, 1.5 / r2), Vector::Constant(rank, r2)};
    }
    if (beta.size() == 0) {
      beta = Vector::Constant(2, 1.0);
    }
  }
};

struct StaggeredSample {
  ObservedPanel panel;
  Matrix truth;
  MissingPattern pattern;
};

// Staggered-adoption draw: truth = zeta eta^T with group-specific factor
// means, i.i.d. unit-variance noise, and suffix missingness per adoption
// time. Pure function of (cfg, seed, stream).
inline StaggeredSample gen_staggered(const SimConfig& cfg, std::uint64_t seed,
                                     std::uint64_t stream = 0) {
  SimConfig c = cfg;
  c.fill_defaults();
  if (c.group_sizes.size() != c.adoption_times.size() + 1) {
    throw input_error("gen_staggered: need one more group than adoption times");
  }
  CounterRng rng(seed, stream);
  Index n = 0;
  for (Index g : c.group_sizes) n += g;
  const Index t = c.periods, r = c.rank;
  Matrix zeta(n, r), eta(t, r);
  Index row = 0;
  for (std::size_t g = 0; g < c.group_sizes.size(); ++g) {
    for (Index i = 0; i < c.group_sizes[g]; ++i, ++row)
      for (Index k = 0; k < r; ++k) zeta(row, k) = c.zeta_means[g][k] + c.zeta_sd * rng.next_normal();
  }
  for (Index s = 0; s < t; ++s)
    for (Index k = 0; k < r; ++k) eta(s, k) = c.eta_mean[k] + c.eta_sd * rng.next_normal();
  StaggeredSample out;
  out.truth = zeta * eta.transpose();
  Matrix y = out.truth;
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s) y(i, s) += c.noise_sd * rng.next_normal();
  Mask mask = Mask::Constant(n, t, true);
  Index start = c.group_sizes[0];
  for (std::size_t d = 0; d < c.adoption_times.size(); ++d) {
    for (Index i = start; i < start + c.group_sizes[d + 1]; ++i)
      for (Index s = c.adoption_times[d]; s < t; ++s) mask(i, s) = false;
    start += c.group_sizes[d + 1];
  }
  out.panel = make_panel(std::move(y), std::move(mask));
  out.pattern = classify_pattern(out.panel);
  return out;
}

struct InteractiveSample {
  ObservedPanel base;  // realized outcomes, fully observed
  TreatmentAssignment assignment;
  CovariateSet covariates;
  Vector beta;
  std::vector<Matrix> truth;  // m^(d), d = 0..D; prepilot columns equal m^(0)
};

// Interactive-effects draw mimicking a multi-arm pilot: common unit factors,
// treatment-specific period factors in the pilot, two covariates (the
// second lives only in the pilot), and known beta.
inline InteractiveSample gen_interactive(const SimConfig& cfg, std::uint64_t seed,
                                         std::uint64_t stream = 0) {
  SimConfig c = cfg;
  c.fill_defaults();
  CounterRng rng(seed, stream);
  const Index arms = static_cast<Index>(c.arm_sizes.size());
  if (arms < 2) throw input_error("gen_interactive: need a control arm and >=1 treatment");
  if (static_cast<Index>(c.eta_means_by_treatment.size()) != arms) {
    throw input_error("gen_interactive: eta means must match the number of arms");
  }
  Index n = 0;
  for (Index a : c.arm_sizes) n += a;
  const Index t0 = c.prepilot_periods, t = t0 + c.pilot_periods, r = c.rank;
  Matrix zeta(n, r);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < r; ++k)
      zeta(i, k) = c.zeta_mean_interactive[k] + c.zeta_sd * rng.next_normal();
  // eta[d] spans all periods; pilot columns of arm d use its own draws.
  std::vector<Matrix> eta(static_cast<std::size_t>(arms), Matrix(t, r));
  for (Index s = 0; s < t; ++s)
    for (Index k = 0; k < r; ++k) eta[0](s, k) = c.eta_means_by_treatment[0][k] + rng.next_normal();
  for (Index d = 1; d < arms; ++d) {
    eta[static_cast<std::size_t>(d)].topRows(t0) = eta[0].topRows(t0);
    for (Index s = t0; s < t; ++s)
      for (Index k = 0; k < r; ++k)
        eta[static_cast<std::size_t>(d)](s, k) =
            c.eta_means_by_treatment[static_cast<std::size_t>(d)][k] + rng.next_normal();
  }
  InteractiveSample out;
  out.beta = c.beta;
  out.truth.reserve(static_cast<std::size_t>(arms));
  for (Index d = 0; d < arms; ++d)
    out.truth.push_back(zeta * eta[static_cast<std::size_t>(d)].transpose());
  out.assignment.pilot_start = t0;
  Index start = 0;
  for (Index a = 0; a < arms; ++a) {
    std::vector<Index> g;
    for (Index i = 0; i < c.arm_sizes[static_cast<std::size_t>(a)]; ++i) g.push_back(start + i);
    out.assignment.groups.push_back(std::move(g));
    start += c.arm_sizes[static_cast<std::size_t>(a)];
  }
  Matrix x1 = Matrix::Zero(n, t), x2 = Matrix::Zero(n, t);
  if (c.with_covariates) {
    for (Index i = 0; i < n; ++i)
      for (Index s = 0; s < t; ++s) x1(i, s) = rng.next_normal();
    for (Index i = 0; i < n; ++i)
      for (Index s = t0; s < t; ++s) x2(i, s) = rng.next_normal();
  }
  Matrix y(n, t);
  std::vector<Index> arm_of(static_cast<std::size_t>(n));
  for (Index a = 0; a < arms; ++a)
    for (Index u : out.assignment.groups[static_cast<std::size_t>(a)])
      arm_of[static_cast<std::size_t>(u)] = a;
  for (Index i = 0; i < n; ++i)
    for (Index s = 0; s < t; ++s) {
      const Index d = s < t0 ? 0 : arm_of[static_cast<std::size_t>(i)];
      y(i, s) = out.truth[static_cast<std::size_t>(d)](i, s) + c.noise_sd * rng.next_normal();
    }
  if (c.with_covariates) {
    y += c.beta[0] * x1 + c.beta[1] * x2;
    out.covariates.covariates = {std::move(x1), std::move(x2)};
  }
  out.base = make_panel(std::move(y), Mask::Constant(n, t, true));
  return out;
}

// Intervention protocol on a fully observed control matrix (years as
// columns): states are banded by the percentage change of their late-period
// mean over their early-period mean, and each band adopts at its scheduled
// years with a randomized early/late half split.
struct TobaccoProtocol {
  ObservedPanel panel;
  Matrix truth;
  std::vector<Index> category;  // 0 severe, 1 moderate, 2 mild, 3 good
};

inline TobaccoProtocol gen_tobacco_protocol(const Matrix& base, std::uint64_t seed,
                                            Index first_year = 1970, Index split_year = 1986,
                                            Index mid_year = 1991, Index late_year = 1996) {
  if (base.rows() < 4 || base.cols() < split_year - first_year + 2) {
    throw input_error("gen_tobacco_protocol: base matrix too small for the year layout");
  }
  const Index n = base.rows(), t = base.cols();
  const Index cut = split_year - first_year;
  TobaccoProtocol out;
  out.truth = base;
  out.category.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<Index>> bands(4);
  for (Index i = 0; i < n; ++i) {
    const double pre = base.row(i).head(cut).mean();
    const double post = base.row(i).tail(t - cut).mean();
    const double pct = 100.0 * (post - pre) / pre;
    Index band;
    if (pct > -10.0) {
      band = 0;  // severe: sales hardly reduced
    } else if (pct > -15.0) {
      band = 1;  // moderate
    } else if (pct > -20.0) {
      band = 2;  // mild
    } else {
      band = 3;  // good
    }
    out.category[static_cast<std::size_t>(i)] = band;
    bands[static_cast<std::size_t>(band)].push_back(i);
  }
  CounterRng rng(seed);
  Mask mask = Mask::Constant(n, t, true);
  auto adopt = [&](Index unit, Index year) {
    for (Index s = year - first_year; s < t; ++s) mask(unit, s) = false;
  };
  auto half_split = [&](std::vector<Index> units, Index early, Index late) {
    for (std::size_t k = units.size(); k > 1; --k) std::swap(units[k - 1], units[rng.next_below(k)]);
    const std::size_t half = (units.size() + 1) / 2;
    for (std::size_t k = 0; k < units.size(); ++k) {
      if (k < half) {
        adopt(units[k], early);
      } else if (late > 0) {
        adopt(units[k], late);
      }
    }
  };
  half_split(bands[0], split_year, mid_year);
  half_split(bands[1], mid_year, late_year);
  half_split(bands[2], late_year, 0);  // late half never adopts
  out.panel = make_panel(base, std::move(mask));
  return out;
}

// Deterministic rank-2 stand-in for the tobacco matrix: 38 states over
// 1970-2000 with engineered post/pre decay bands (6 severe, 6 moderate,
// 6 mild, the rest good).
inline Matrix tobacco_standin_matrix() {
  const Index n = 38, t = 31, cut = 16;
  Matrix base(n, t);
  for (Index i = 0; i < n; ++i) {
    double pct;
    if (i < 6) {
      pct = -5.0 - 0.5 * static_cast<double>(i);
    } else if (i < 12) {
      pct = -11.0 - 0.5 * static_cast<double>(i - 6);
    } else if (i < 18) {
      pct = -16.0 - 0.5 * static_cast<double>(i - 12);
    } else {
      pct = -22.0 - 0.5 * static_cast<double>(i - 18);
    }
    const double level = 80.0 + 2.0 * static_cast<double>(i);
    for (Index s = 0; s < t; ++s) base(i, s) = s < cut ? level : level * (1.0 + pct / 100.0);
  }
  return base;
}

struct RepRecord {
  int replication = 0;
  std::string target;
  double estimate = 0.0, truth = 0.0, variance = 0.0, std_error = 0.0;
  std::map<double, bool> covered;
  bool failed = false;
  std::string error;
};

struct ExperimentReport {
  std::map<std::string, double> rmse;
  std::map<std::string, std::map<double, double>> coverage;  // target -> level -> rate
  std::vector<RepRecord> records;
  double wall_seconds = 0.0;
};

namespace detail {

inline Index draw_staggered_target_unit(const SimConfig& cfg, CounterRng& rng) {
  // A unit of the second adoption group (the third group overall).
  const Index offset = cfg.group_sizes[0] + cfg.group_sizes[1];
  return offset + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(cfg.group_sizes[2])));
}

}  // namespace detail

// RMSE experiment on the staggered design: per replication, estimate the
// missing control outcome of a (by default re-drawn) unit of the second
// adoption group at the last period, with the subgroup pipeline and with
// the full-matrix nuclear-norm baseline.
inline ExperimentReport run_rmse_experiment(const SimConfig& cfg) {
  if (cfg.replications < 1) throw input_error("run_rmse_experiment: replications must be >= 1");
  SimConfig c = cfg;
  c.fill_defaults();
  const auto start_time = std::chrono::steady_clock::now();
  ExperimentReport report;
  const std::size_t reps = static_cast<std::size_t>(c.replications);
  std::vector<RepRecord> sub(reps), full(reps);
  parallel_for(
      reps,
      [&](std::size_t rep) {
        auto sample = gen_staggered(c, c.seed, rep);
        CounterRng pick = CounterRng::substream(c.seed ^ 0x7461726765746eULL,
                                                c.fix_target_unit ? 0 : rep);
        const Index unit = detail::draw_staggered_target_unit(c, pick);
        const Index t0 = sample.panel.periods() - 1;
        RepRecord rec;
        rec.replication = static_cast<int>(rep);
        rec.target = "subgroup";
        rec.truth = sample.truth(unit, t0);
        try {
          InferenceOptions iopts;
          iopts.rank = c.fit_rank > 0 ? c.fit_rank : c.rank;
          iopts.group_cap = c.group_cap;
          iopts.lambda_c = c.lambda_c;
          iopts.solver = c.solver;
          iopts.threads = 1;
          const auto inf =
              infer_group_average(sample.panel, sample.pattern, {unit}, t0, iopts);
          rec.estimate = inf.estimate;
          rec.variance = inf.variance;
          rec.std_error = (inf.estimate - rec.truth) / std::sqrt(inf.variance);
        } catch (const std::exception& e) {
          rec.failed = true;
          rec.error = e.what();
        }
        sub[rep] = rec;

        RepRecord base;
        base.replication = static_cast<int>(rep);
        base.target = "full_matrix";
        base.truth = rec.truth;
        try {
          const Index r = c.fit_rank > 0 ? c.fit_rank : c.rank;
          const auto [brows, bcols] = observed_block_indices(sample.panel, sample.pattern);
          const double sigma0 = pilot_sigma(extract_block(sample.panel, brows, bcols), r);
          const double lam = select_lambda(sigma0, sample.panel.units(),
                                           sample.panel.periods(), c.lambda_c);
          const Matrix fit =
              solve_nuclear(sample.panel.values, sample.panel.mask, lam, c.solver);
          base.estimate = fit(unit, t0);
        } catch (const std::exception& e) {
          base.failed = true;
          base.error = e.what();
        }
        full[rep] = base;
      },
      c.threads);
  auto fold = [&](const std::vector<RepRecord>& recs, const std::string& name) {
    double sum2 = 0.0;
    int ok = 0;
    for (const auto& r : recs) {
      report.records.push_back(r);
      if (r.failed) continue;
      sum2 += (r.estimate - r.truth) * (r.estimate - r.truth);
      ++ok;
    }
    report.rmse[name] = ok > 0 ? std::sqrt(sum2 / ok) : std::nan("");
  };
  fold(sub, "subgroup");
  fold(full, "full_matrix");
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

// Coverage experiment: staggered design covers the group-average CI of the
// drawn unit; the interactive design covers mu^(1), mu^(2), theta^(2) of a
// drawn unit of the last arm. Standardized errors are recorded for
// normality checks.
inline ExperimentReport run_coverage_experiment(const SimConfig& cfg,
                                                const std::vector<double>& levels) {
  if (cfg.replications < 1) throw input_error("run_coverage_experiment: replications must be >= 1");
  for (double lv : levels)
    if (!(lv > 0.0 && lv < 1.0)) throw input_error("coverage level outside (0,1)");
  SimConfig c = cfg;
  c.fill_defaults();
  const auto start_time = std::chrono::steady_clock::now();
  ExperimentReport report;
  const std::size_t reps = static_cast<std::size_t>(c.replications);
  std::vector<std::vector<RepRecord>> all(reps);
  parallel_for(
      reps,
      [&](std::size_t rep) {
        std::vector<RepRecord>& recs = all[rep];
        CounterRng pick = CounterRng::substream(c.seed ^ 0x7461726765746eULL,
                                                c.fix_target_unit ? 0 : rep);
        if (c.design == SimDesign::staggered_basic) {
          auto sample = gen_staggered(c, c.seed, rep);
          const Index unit = detail::draw_staggered_target_unit(c, pick);
          const Index t0 = sample.panel.periods() - 1;
          RepRecord rec;
          rec.replication = static_cast<int>(rep);
          rec.target = "group_average";
          rec.truth = sample.truth(unit, t0);
          try {
            InferenceOptions iopts;
            iopts.rank = c.fit_rank > 0 ? c.fit_rank : c.rank;
            iopts.group_cap = c.group_cap;
            iopts.lambda_c = c.lambda_c;
            iopts.solver = c.solver;
            iopts.threads = 1;
            const auto inf = infer_group_average(sample.panel, sample.pattern, {unit}, t0, iopts);
            rec.estimate = inf.estimate;
            rec.variance = inf.variance;
            rec.std_error = (inf.estimate - rec.truth) / std::sqrt(inf.variance);
            for (double lv : levels) {
              const auto [lo, hi] = group_average_ci(inf.estimate, inf.variance, lv);
              rec.covered[lv] = rec.truth >= lo && rec.truth <= hi;
            }
          } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
          }
          recs.push_back(rec);
          return;
        }
        if (c.design != SimDesign::interactive_effects) {
          throw input_error("coverage experiment supports staggered and interactive designs");
        }
        auto sample = gen_interactive(c, c.seed, rep);
        const auto& last_arm = sample.assignment.groups.back();
        const Index unit = last_arm[static_cast<std::size_t>(
            pick.next_below(static_cast<std::uint64_t>(last_arm.size())))];
        const Index t0 = sample.base.periods() - 1;
        try {
          TreatmentOptions topts;
          topts.rank = c.fit_rank > 0 ? c.fit_rank : c.rank;
          topts.group_cap = c.group_cap;
          topts.lambda_c = c.lambda_c;
          topts.solver = c.solver;
          topts.threads = 1;
          TreatmentPipeline pipe(sample.base, sample.assignment, sample.covariates, sample.beta,
                                 topts);
          const auto series = pipe.estimate_effects({unit}, {t0});
          auto push = [&](const std::string& name, double est, double var, double truth) {
            RepRecord rec;
            rec.replication = static_cast<int>(rep);
            rec.target = name;
            rec.estimate = est;
            rec.variance = var;
            rec.truth = truth;
            rec.std_error = (est - truth) / std::sqrt(var);
            for (double lv : levels) {
              const auto [lo, hi] = group_average_ci(est, var, lv);
              rec.covered[lv] = truth >= lo && truth <= hi;
            }
            recs.push_back(rec);
          };
          const double m0 = sample.truth[0](unit, t0);
          const double m1 = sample.truth[1](unit, t0);
          const double m2 = sample.truth[2](unit, t0);
          push("mu1", series.mu[0][0], series.var_mu[0][0], m1 - m0);
          push("mu2", series.mu[1][0], series.var_mu[1][0], m2 - m0);
          push("theta2", series.theta[1][0], series.var_theta[1][0], m2 - m1);
        } catch (const std::exception& e) {
          RepRecord rec;
          rec.replication = static_cast<int>(rep);
          rec.target = "mu1";
          rec.failed = true;
          rec.error = e.what();
          recs.push_back(rec);
        }
      },
      c.threads);
  std::map<std::string, std::map<double, std::pair<int, int>>> tally;  // hits, total
  for (const auto& recs : all)
    for (const auto& r : recs) {
      report.records.push_back(r);
      if (r.failed) continue;
      for (const auto& [lv, hit] : r.covered) {
        auto& cell = tally[r.target][lv];
        cell.first += hit ? 1 : 0;
        cell.second += 1;
      }
    }
  for (const auto& [target, by_level] : tally)
    for (const auto& [lv, cell] : by_level)
      report.coverage[target][lv] =
          cell.second > 0 ? static_cast<double>(cell.first) / cell.second : std::nan("");
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

// Kolmogorov-Smirnov distance of a sample against the standard normal and
// the asymptotic p-value of the two-sided test.
inline double ks_statistic_normal(std::vector<double> sample) {
  if (sample.empty()) throw input_error("ks_statistic_normal: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = normal_cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double ks_pvalue(double d, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace mnar
