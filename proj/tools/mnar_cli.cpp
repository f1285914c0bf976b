// Command-line front end: completion, group-average inference, treatment
// analysis, and the simulation harness, with reproducible run manifests.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mnar/inference.hpp"
#include "mnar/manifest.hpp"
#include "mnar/pipeline.hpp"
#include "mnar/simlab.hpp"
#include "mnar/treatment.hpp"
#include "mnar/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mnar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitPattern = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitInternal = 5;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int thread_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("MNAR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return hardware_threads();
}

ObservedPanel load_panel_file(const std::string& path, const std::string& format) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open input file: " + path);
  if (format == "wide") return load_panel_wide(in);
  if (format == "long") return load_panel_long(in);
  throw input_error("unknown format '" + format + "' (expected wide or long)");
}

Index label_index(const std::vector<std::string>& labels, const std::string& label,
                  const std::string& what) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<Index>(i);
  throw input_error("unknown " + what + " label '" + label + "'");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write output file: " + path.string());
  out << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::map<std::string, std::string>& inputs) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["library_version"] = version();
  m["inputs"] = json::object();
  for (const auto& [path, digest] : inputs) m["inputs"][path] = digest;
  m["created"] = iso_timestamp();
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json diagnostics_json(const CompletionResult& result) {
  json d;
  d["pattern"] = to_string(result.pattern.kind);
  d["rank"] = result.rank;
  d["group_cap"] = result.group_cap;
  d["sigma_initial"] = result.sigma_initial;
  d["n_subproblems"] = result.subproblems.size();
  d["max_abs_missing_change"] = result.max_abs_missing_change;
  d["subproblems"] = json::array();
  for (const auto& s : result.subproblems) {
    d["subproblems"].push_back(json{{"rows", s.rows},
                                    {"cols", s.cols},
                                    {"targets", s.targets},
                                    {"lambda", s.lambda},
                                    {"iterations", s.diagnostics.iterations},
                                    {"final_objective", s.diagnostics.final_objective},
                                    {"rel_change", s.diagnostics.rel_change},
                                    {"converged", s.diagnostics.converged}});
  }
  return d;
}

struct CompleteArgs {
  std::string input, format = "wide", rank = "auto", out;
  Index group_cap = -1;
  double lambda_c = 2.0;
  double lambda_override = -1;
  int threads = 0;
  std::uint64_t seed = 0;
};

int cmd_complete(const CompleteArgs& a) {
  fs::create_directories(a.out);
  auto panel = load_panel_file(a.input, a.format);
  CompletionOptions opts;
  if (a.rank != "auto") opts.rank = std::stol(a.rank);
  opts.group_cap = a.group_cap;
  opts.lambda_c = a.lambda_c;
  opts.lambda_override = a.lambda_override;
  opts.threads = thread_count(a.threads);
  const auto result = complete_panel(panel, opts);

  ObservedPanel completed = panel;
  completed.values = result.completed;
  completed.mask = Mask::Constant(panel.units(), panel.periods(), true);
  std::ofstream out_csv(fs::path(a.out) / "completed.csv");
  write_panel_wide(out_csv, completed);
  write_text(fs::path(a.out) / "diagnostics.json", diagnostics_json(result).dump(2) + "\n");
  json config{{"input", a.input},       {"format", a.format},
              {"rank", a.rank},         {"group_cap", a.group_cap},
              {"lambda_c", a.lambda_c}, {"lambda_override", a.lambda_override},
              {"threads", opts.threads}};
  write_manifest(a.out, "complete", config, a.seed, {{a.input, digest_file(a.input)}});
  std::cout << "completed " << panel.units() << "x" << panel.periods() << " panel ("
            << to_string(result.pattern.kind) << ", rank " << result.rank << ", "
            << result.subproblems.size() << " subproblems)\n";
  return kExitOk;
}

struct InferArgs {
  std::string input, format = "wide", group, period, rank = "auto", out;
  double level = 0.95;
  Index group_cap = -1;
  double lambda_c = 2.0;
  int threads = 0;
  std::uint64_t seed = 0;
};

int cmd_infer(const InferArgs& a) {
  fs::create_directories(a.out);
  auto panel = load_panel_file(a.input, a.format);
  const auto pattern = classify_pattern(panel);
  std::vector<Index> group;
  for (const auto& label : split_list(a.group))
    group.push_back(label_index(panel.unit_labels, label, "unit"));
  if (group.empty()) throw input_error("--group must name at least one unit");
  const Index t0 = label_index(panel.time_labels, a.period, "time");
  InferenceOptions opts;
  if (a.rank != "auto") opts.rank = std::stol(a.rank);
  opts.level = a.level;
  opts.group_cap = a.group_cap;
  opts.lambda_c = a.lambda_c;
  opts.threads = thread_count(a.threads);
  const auto inf = infer_group_average(panel, pattern, group, t0, opts);
  json r{{"estimate", inf.estimate},
         {"variance", inf.variance},
         {"ci", {inf.ci_lower, inf.ci_upper}},
         {"components", {{"row", inf.row_component}, {"col", inf.col_component}}},
         {"sigma_hat", inf.sigma_hat},
         {"level", inf.level},
         {"n_groups", inf.n_groups}};
  write_text(fs::path(a.out) / "inference.json", r.dump(2) + "\n");
  json config{{"input", a.input},   {"format", a.format},     {"group", a.group},
              {"period", a.period}, {"level", a.level},       {"rank", a.rank},
              {"group_cap", a.group_cap}, {"lambda_c", a.lambda_c}};
  write_manifest(a.out, "infer", config, a.seed, {{a.input, digest_file(a.input)}});
  std::cout << "estimate " << fmt17(inf.estimate) << "  ci [" << fmt17(inf.ci_lower) << ", "
            << fmt17(inf.ci_upper) << "] at level " << a.level << "\n";
  return kExitOk;
}

struct TreatArgs {
  std::string input, format = "long", assignment, beta_path, covariates, out;
  std::string pilot_start, rank = "auto", window;
  double level = 0.95;
  Index bonferroni = -1;
  Index group_cap = -1;
  double lambda_c = 2.0;
  int draws = 1000;
  int threads = 0;
  std::uint64_t seed = 1;
};

TreatmentAssignment load_assignment(const std::string& path, const ObservedPanel& panel,
                                    Index pilot_start) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open assignment file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty assignment file");
  auto header = mnar::detail::split_csv_line(line);
  if (header.size() != 2 || mnar::detail::trimmed(header[0]) != "unit" ||
      mnar::detail::trimmed(header[1]) != "treatment") {
    throw input_error("assignment file requires header 'unit,treatment'");
  }
  std::map<Index, std::vector<Index>> groups;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = mnar::detail::split_csv_line(line);
    if (cells.size() != 2) throw input_error("assignment row must have 2 cells: " + line);
    const Index u = label_index(panel.unit_labels, std::string(mnar::detail::trimmed(cells[0])),
                                "unit");
    const auto d = static_cast<Index>(
        mnar::detail::parse_number(mnar::detail::trimmed(cells[1]), "in assignment"));
    groups[d].push_back(u);
  }
  TreatmentAssignment out;
  out.pilot_start = pilot_start;
  Index expected = 0;
  for (const auto& [d, units] : groups) {
    if (d != expected++) throw input_error("treatment ids must be consecutive from 0");
    out.groups.push_back(units);
  }
  out.validate(panel.units());
  return out;
}

CovariateSet load_covariates(const std::string& path, const ObservedPanel& panel,
                             std::vector<std::string>& names) {
  CovariateSet covs;
  if (path.empty()) return covs;
  std::ifstream in(path);
  if (!in) throw input_error("cannot open covariates file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty covariates file");
  auto header = mnar::detail::split_csv_line(line);
  if (header.size() < 3 || mnar::detail::trimmed(header[0]) != "unit" ||
      mnar::detail::trimmed(header[1]) != "time") {
    throw input_error("covariates file requires header 'unit,time,<name>...'");
  }
  const std::size_t p = header.size() - 2;
  names.assign(header.begin() + 2, header.end());
  covs.covariates.assign(p, Matrix::Zero(panel.units(), panel.periods()));
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = mnar::detail::split_csv_line(line);
    if (cells.size() != header.size()) throw input_error("covariate row width mismatch: " + line);
    const Index u = label_index(panel.unit_labels, std::string(mnar::detail::trimmed(cells[0])),
                                "unit");
    const Index t = label_index(panel.time_labels, std::string(mnar::detail::trimmed(cells[1])),
                                "time");
    for (std::size_t k = 0; k < p; ++k) {
      covs.covariates[k](u, t) =
          mnar::detail::parse_number(mnar::detail::trimmed(cells[k + 2]), "in covariates");
    }
  }
  return covs;
}

Vector load_beta(const std::string& path) {
  if (path.empty()) return Vector();
  std::ifstream in(path);
  if (!in) throw input_error("cannot open beta file: " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw input_error("beta file is not valid JSON");
  if (j.is_object() && j.contains("beta")) j = j["beta"];
  if (!j.is_array()) throw input_error("beta JSON must be an array or {\"beta\": [...]}");
  Vector beta(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) beta[static_cast<Index>(i)] = j[i].get<double>();
  return beta;
}

int cmd_treat(const TreatArgs& a) {
  fs::create_directories(a.out);
  auto base = load_panel_file(a.input, a.format);
  if (a.pilot_start.empty()) throw input_error("--pilot-start is required");
  const Index t_pre = label_index(base.time_labels, a.pilot_start, "time");
  auto assignment = load_assignment(a.assignment, base, t_pre);
  std::vector<std::string> cov_names;
  auto covs = load_covariates(a.covariates, base, cov_names);
  const Vector beta = load_beta(a.beta_path);
  if (beta.size() == 0 && !covs.covariates.empty()) {
    throw input_error("--covariates requires --beta");
  }

  TreatmentOptions opts;
  if (a.rank != "auto") opts.rank = std::stol(a.rank);
  opts.group_cap = a.group_cap;
  opts.lambda_c = a.lambda_c;
  opts.level = a.level;
  opts.threads = thread_count(a.threads);
  TreatmentPipeline pipe(base, assignment, covs, beta, opts);

  const auto treated = pipe.treated_units();
  const auto series = pipe.estimate_effects(treated);
  std::ostringstream effects;
  effects << "d,t,mu,theta,var_mu,var_theta\n";
  for (std::size_t d = 0; d < series.mu.size(); ++d)
    for (std::size_t k = 0; k < series.periods.size(); ++k) {
      effects << (d + 1) << ','
              << base.time_labels[static_cast<std::size_t>(series.periods[k])] << ','
              << fmt17(series.mu[d][k]) << ',' << fmt17(series.theta[d][k]) << ','
              << fmt17(series.var_mu[d][k]) << ',' << fmt17(series.var_theta[d][k]) << '\n';
    }
  write_text(fs::path(a.out) / "effects.csv", effects.str());

  const auto cells = pipe.estimate_cell_effects();
  const auto fe_mu = two_way_fe_effects(base, assignment, covs, beta);
  std::vector<double> fe_theta(fe_mu.size());
  for (std::size_t d = 0; d < fe_mu.size(); ++d)
    fe_theta[d] = d == 0 ? fe_mu[0] : fe_mu[d] - fe_mu[d - 1];
  const auto ms_test = spec_test(cells.theta, cells.var_theta, fe_theta,
                                 a.draws, a.seed);
  json st;
  auto test_json = [](const SpecTestResult& r) {
    json j{{"statistic", r.statistic}, {"n_draws", r.n_draws}};
    for (const auto& [lv, cv] : r.critical_values) j["critical_values"][fmt17(lv)] = cv;
    for (const auto& [lv, rej] : r.reject) j["reject"][fmt17(lv)] = rej;
    return j;
  };
  st["model_specification"] = test_json(ms_test);
  st["model_specification"]["baseline_two_way_fe_theta"] = fe_theta;
  st["effect_invariance"] = json::object();
  for (std::size_t d = 0; d < cells.theta.size(); ++d) {
    const double grand_mean = cells.theta[d].mean();
    const auto inv_test = spec_test({cells.theta[d]}, {cells.var_theta[d]}, {grand_mean},
                                    a.draws, a.seed + 1 + d);
    st["effect_invariance"][std::to_string(d + 1)] = test_json(inv_test);
    st["effect_invariance"][std::to_string(d + 1)]["baseline_grand_mean"] = grand_mean;
  }
  write_text(fs::path(a.out) / "spec_test.json", st.dump(2) + "\n");

  // Per-unit time-averaged effects.
  const Matrix unit_means = estimate_unit_effects(cells);
  std::ostringstream unit_csv;
  unit_csv << "unit";
  for (std::size_t d = 1; d <= cells.theta.size(); ++d) unit_csv << ",theta" << d;
  unit_csv << '\n';
  for (Index i = 0; i < unit_means.rows(); ++i) {
    unit_csv << base.unit_labels[static_cast<std::size_t>(cells.units[static_cast<std::size_t>(i)])];
    for (Index d = 0; d < unit_means.cols(); ++d) unit_csv << ',' << fmt17(unit_means(i, d));
    unit_csv << '\n';
  }
  write_text(fs::path(a.out) / "unit_effects.csv", unit_csv.str());

  if (!a.window.empty()) {
    const std::string prefix = "weekly:";
    if (a.window.rfind(prefix, 0) != 0) {
      throw input_error("--window expects weekly:<k>");
    }
    const Index k = std::stol(a.window.substr(prefix.size()));
    if (k < 1) throw input_error("window length must be >= 1");
    std::vector<std::vector<Index>> windows;
    for (Index s = pipe.pilot_start(); s < base.periods(); s += k) {
      std::vector<Index> w;
      for (Index t = s; t < std::min(base.periods(), s + k); ++t) w.push_back(t);
      windows.push_back(std::move(w));
    }
    const Index n_tests = a.bonferroni > 0 ? a.bonferroni : static_cast<Index>(windows.size());
    const double z_uniform =
        inverse_normal_cdf(1.0 - (1.0 - a.level) / 2.0 / static_cast<double>(n_tests));
    std::ostringstream wcsv;
    wcsv << "d,window,t_start,t_end,theta_mean,variance,ci_lower,ci_upper\n";
    for (Index d = 1; d <= pipe.treatment_count(); ++d) {
      for (std::size_t w = 0; w < windows.size(); ++w) {
        double mean = 0.0;
        Index count = 0;
        std::map<Index, Index> period_pos;
        for (std::size_t kk = 0; kk < cells.periods.size(); ++kk)
          period_pos[cells.periods[kk]] = static_cast<Index>(kk);
        for (Index t : windows[w]) {
          mean += cells.theta[static_cast<std::size_t>(d - 1)].col(period_pos.at(t)).mean();
          ++count;
        }
        mean /= static_cast<double>(count);
        const double var = pipe.aggregate_window_variance(d, windows[w], treated);
        const double half = z_uniform * std::sqrt(var);
        wcsv << d << ',' << w << ','
             << base.time_labels[static_cast<std::size_t>(windows[w].front())] << ','
             << base.time_labels[static_cast<std::size_t>(windows[w].back())] << ','
             << fmt17(mean) << ',' << fmt17(var) << ',' << fmt17(mean - half) << ','
             << fmt17(mean + half) << '\n';
      }
    }
    write_text(fs::path(a.out) / "weekly_effects.csv", wcsv.str());
  }

  std::map<std::string, std::string> inputs{{a.input, digest_file(a.input)},
                                            {a.assignment, digest_file(a.assignment)}};
  if (!a.covariates.empty()) inputs[a.covariates] = digest_file(a.covariates);
  if (!a.beta_path.empty()) inputs[a.beta_path] = digest_file(a.beta_path);
  json config{{"input", a.input},         {"format", a.format},
              {"assignment", a.assignment}, {"covariates", a.covariates},
              {"beta", a.beta_path},      {"pilot_start", a.pilot_start},
              {"rank", a.rank},           {"level", a.level},
              {"window", a.window},       {"bonferroni", a.bonferroni},
              {"draws", a.draws},         {"group_cap", a.group_cap},
              {"lambda_c", a.lambda_c}};
  write_manifest(a.out, "treat", config, a.seed, inputs);
  std::cout << "treatment effects for " << treated.size() << " treated units over "
            << series.periods.size() << " pilot periods; spec-test statistic "
            << fmt17(ms_test.statistic) << "\n";
  return kExitOk;
}

struct SimArgs {
  std::string design = "staggered", preset = "paper", out;
  int reps = -1;
  std::uint64_t seed = 20240501;
  int threads = 0;
  double lambda_c = 2.0;
};

int cmd_simulate(const SimArgs& a) {
  fs::create_directories(a.out);
  SimConfig cfg;
  cfg.lambda_c = a.lambda_c;
  cfg.seed = a.seed;
  cfg.threads = thread_count(a.threads);
  if (a.preset == "ci") {
    cfg.group_sizes = {60, 30, 30, 30};
    cfg.adoption_times = {60, 90, 120};
    cfg.periods = 150;
    cfg.arm_sizes = {60, 60, 60};
    cfg.prepilot_periods = 60;
    cfg.pilot_periods = 60;
    cfg.replications = 200;
  } else if (a.preset == "paper") {
    cfg.replications = 1000;
  } else {
    throw input_error("unknown preset '" + a.preset + "' (expected paper or ci)");
  }
  if (a.reps >= 0) cfg.replications = a.reps;
  if (cfg.replications < 1) throw input_error("--reps must be >= 1");

  json summary{{"design", a.design}, {"preset", a.preset}, {"replications", cfg.replications},
               {"seed", cfg.seed},   {"levels", {0.90, 0.95, 0.99}}};
  std::ostringstream records;
  records << "replication,target,estimate,truth,variance,std_error,failed\n";
  auto dump_records = [&](const ExperimentReport& rep) {
    for (const auto& r : rep.records) {
      records << r.replication << ',' << r.target << ',' << fmt17(r.estimate) << ','
              << fmt17(r.truth) << ',' << fmt17(r.variance) << ',' << fmt17(r.std_error) << ','
              << (r.failed ? 1 : 0) << '\n';
    }
  };

  if (a.design == "staggered") {
    cfg.design = SimDesign::staggered_basic;
    const auto rmse = run_rmse_experiment(cfg);
    const auto cov = run_coverage_experiment(cfg, {0.90, 0.95, 0.99});
    for (const auto& [k, v] : rmse.rmse) summary["rmse"][k] = v;
    for (const auto& [target, by_level] : cov.coverage)
      for (const auto& [lv, rate] : by_level) summary["coverage"][target][fmt17(lv)] = rate;
    summary["wall_seconds"] = rmse.wall_seconds + cov.wall_seconds;
    dump_records(rmse);
    dump_records(cov);
  } else if (a.design == "interactive") {
    cfg.design = SimDesign::interactive_effects;
    const auto cov = run_coverage_experiment(cfg, {0.90, 0.95, 0.99});
    std::map<std::string, std::pair<double, int>> sq;
    for (const auto& r : cov.records) {
      if (r.failed) continue;
      auto& cell = sq[r.target];
      cell.first += (r.estimate - r.truth) * (r.estimate - r.truth);
      cell.second += 1;
    }
    for (const auto& [target, cell] : sq)
      summary["rmse"][target] = std::sqrt(cell.first / std::max(1, cell.second));
    for (const auto& [target, by_level] : cov.coverage)
      for (const auto& [lv, rate] : by_level) summary["coverage"][target][fmt17(lv)] = rate;
    summary["wall_seconds"] = cov.wall_seconds;
    dump_records(cov);
  } else if (a.design == "tobacco") {
    const Matrix base = tobacco_standin_matrix();
    const int reps = a.reps >= 0 ? a.reps : 10;
    if (reps < 1) throw input_error("--reps must be >= 1");
    double sum = 0.0, sum2 = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const auto prot = gen_tobacco_protocol(base, cfg.seed + static_cast<std::uint64_t>(rep));
      CompletionOptions opts;
      opts.rank = 2;
      opts.lambda_c = cfg.lambda_c;
      opts.threads = cfg.threads;
      const auto result = complete_panel(prot.panel, opts);
      double err2 = 0.0;
      int cells = 0;
      for (Index i = 0; i < prot.panel.units(); ++i)
        for (Index j = 0; j < prot.panel.periods(); ++j)
          if (!prot.panel.mask(i, j)) {
            err2 += (result.completed(i, j) - prot.truth(i, j)) *
                    (result.completed(i, j) - prot.truth(i, j));
            ++cells;
          }
      const double rmse = std::sqrt(err2 / std::max(1, cells));
      sum += rmse;
      sum2 += rmse * rmse;
      records << rep << ",tobacco_rmse," << fmt17(rmse) << ",0,0,0,0\n";
    }
    summary["replications"] = reps;
    summary["rmse"]["tobacco_protocol_mean"] = sum / reps;
    summary["rmse"]["tobacco_protocol_se"] =
        reps > 1 ? std::sqrt((sum2 / reps - (sum / reps) * (sum / reps)) / (reps - 1)) : 0.0;
  } else {
    throw input_error("unknown design '" + a.design + "' (expected staggered, interactive, tobacco)");
  }

  write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  write_text(fs::path(a.out) / "records.csv", records.str());
  json config{{"design", a.design}, {"preset", a.preset}, {"reps", cfg.replications},
              {"lambda_c", a.lambda_c}, {"threads", cfg.threads}};
  write_manifest(a.out, "simulate", config, cfg.seed, {});
  std::cout << "simulation '" << a.design << "' finished; summary written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix completion under structured missingness with debiased inference"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  CompleteArgs ca;
  auto* complete = app.add_subcommand("complete", "Complete a panel's missing entries");
  complete->add_option("--input", ca.input, "Panel CSV path")->required();
  complete->add_option("--format", ca.format, "Input format: wide or long (default wide)");
  complete->add_option("--rank", ca.rank, "Target rank or 'auto' (default auto)");
  complete->add_option("--group-cap", ca.group_cap,
                       "Max units per subgroup (default: sqrt rule)");
  complete->add_option("--lambda-c", ca.lambda_c, "Penalty constant C (default 2.0)");
  complete->add_option("--lambda", ca.lambda_override,
                       "Fixed penalty for every subproblem (overrides the rule)");
  complete->add_option("--threads", ca.threads, "Worker threads (default: all cores)");
  complete->add_option("--out", ca.out, "Output directory")->required();

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Confidence interval for a group average");
  infer->add_option("--input", ia.input, "Panel CSV path")->required();
  infer->add_option("--format", ia.format, "Input format: wide or long (default wide)");
  infer->add_option("--group", ia.group, "Comma-separated unit labels")->required();
  infer->add_option("--period", ia.period, "Target time label")->required();
  infer->add_option("--level", ia.level, "Confidence level in (0,1) (default 0.95)");
  infer->add_option("--rank", ia.rank, "Target rank or 'auto' (default auto)");
  infer->add_option("--group-cap", ia.group_cap, "Max units per subgroup (default: sqrt rule)");
  infer->add_option("--lambda-c", ia.lambda_c, "Penalty constant C (default 2.0)");
  infer->add_option("--threads", ia.threads, "Worker threads (default: all cores)");
  infer->add_option("--out", ia.out, "Output directory")->required();

  TreatArgs ta;
  auto* treat = app.add_subcommand("treat", "Multi-treatment effect estimation and tests");
  treat->add_option("--input", ta.input, "Outcomes CSV path")->required();
  treat->add_option("--format", ta.format, "Input format: long or wide (default long)");
  treat->add_option("--assignment", ta.assignment, "Assignment CSV (unit,treatment)")->required();
  treat->add_option("--pilot-start", ta.pilot_start, "Time label of the first pilot period")
      ->required();
  treat->add_option("--beta", ta.beta_path, "Coefficient JSON for covariate adjustment");
  treat->add_option("--covariates", ta.covariates, "Covariates CSV (unit,time,<name>...)");
  treat->add_option("--rank", ta.rank, "Target rank or 'auto' (default auto)");
  treat->add_option("--level", ta.level, "Confidence level (default 0.95)");
  treat->add_option("--window", ta.window, "Aggregation window, e.g. weekly:5");
  treat->add_option("--bonferroni", ta.bonferroni,
                    "Test count for the uniform critical value (default: window count)");
  treat->add_option("--draws", ta.draws, "Bootstrap draws for the spec test (default 1000)");
  treat->add_option("--seed", ta.seed, "Bootstrap seed (default 1)");
  treat->add_option("--group-cap", ta.group_cap, "Max units per subgroup (default: sqrt rule)");
  treat->add_option("--lambda-c", ta.lambda_c, "Penalty constant C (default 2.0)");
  treat->add_option("--threads", ta.threads, "Worker threads (default: all cores)");
  treat->add_option("--out", ta.out, "Output directory")->required();

  SimArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo RMSE and coverage experiments");
  simulate->add_option("--design", sa.design, "staggered, interactive, or tobacco");
  simulate->add_option("--reps", sa.reps, "Replications (default: preset value)");
  simulate->add_option("--seed", sa.seed, "Base seed (default 20240501)");
  simulate->add_option("--preset", sa.preset, "paper or ci (default paper)");
  simulate->add_option("--lambda-c", sa.lambda_c, "Penalty constant C (default 2.0)");
  simulate->add_option("--threads", sa.threads, "Worker threads (default: all cores)");
  simulate->add_option("--out", sa.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (complete->parsed()) return cmd_complete(ca);
    if (infer->parsed()) return cmd_infer(ia);
    if (treat->parsed()) return cmd_treat(ta);
    if (simulate->parsed()) return cmd_simulate(sa);
    return kExitInternal;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const pattern_error& e) {
    std::cerr << "pattern error: " << e.what() << "\n";
    return kExitPattern;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
