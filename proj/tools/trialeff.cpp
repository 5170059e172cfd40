// trialeff: analyze a trial dataset, run a simulation study, or compare
// variance ratios across analysis reports.
//
// Exit codes: 0 success, 1 input error, 2 numerical failure.

#include <glob.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trialeff/csv_io.hpp"
#include "trialeff/report/analysis_report.hpp"
#include "trialeff/report/comparison.hpp"
#include "trialeff/report/simulation_table.hpp"
#include "trialeff/simulation/config.hpp"
#include "trialeff/simulation/study.hpp"
#include "trialeff/util/parallel.hpp"

namespace {

using namespace trialeff;

constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

int exit_code(ErrorCode code) { return is_input_error(code) ? kExitInput : kExitNumerical; }

// `what` already starts with the error code name.
void diagnose(const std::string& what) { std::cerr << "trialeff: " << what << '\n'; }

// Writes to PATH, or to stdout when PATH is "-".
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_params, "cannot write " + path);
  fn(out);
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string data;
  std::string layout = "wide";
  std::string outcome = "continuous";
  std::vector<std::string> estimators{"all"};
  std::size_t boot = 10000;
  std::uint64_t seed = 1;
  std::size_t workers = default_workers();
  std::string structure = "unstructured";
  std::vector<std::string> ladder;
  double truncation = 0.025;
  double level = 0.95;
  bool star_visit1_baseline = true;
  std::string study;
  std::string out;
  std::string format = "json";
  bool coerce_monotone = false;
  bool timings = false;
};

void print_analysis_table(std::ostream& os, const AnalysisReport& rep) {
  using table_detail::fixed4;
  using table_detail::pad;
  os << "study " << rep.settings.study << ": N = " << rep.n << ", K = " << rep.visits << ", " << to_string(rep.outcome)
     << " outcome, arms " << rep.dropout.arm_size[0] << "/" << rep.dropout.arm_size[1] << '\n';
  os << "missing by visit (control/treated):";
  for (std::size_t t = 0; t < rep.visits; ++t)
    os << ' ' << rep.dropout.visit_labels[t] << '=' << fixed4(rep.dropout.missing[0][t]) << '/'
       << fixed4(rep.dropout.missing[1][t]);
  os << "\nbootstrap replicates " << rep.settings.boot << ", seed " << rep.settings.seed << "\n\n";
  os << std::string(12, ' ') << pad("delta", 10) << pad("VAR", 10) << pad("lower", 10) << pad("upper", 10)
     << pad("V ratio", 10) << "  structure\n";
  for (const auto& r : rep.results) {
    std::string name = to_string(r.kind);
    name.resize(12, ' ');
    os << name;
    if (!r.ok()) {
      os << "  failed: " << to_string(*r.error) << '\n';
      continue;
    }
    const double var = r.boot ? r.boot->variance : NAN;
    const double lo = r.boot ? r.boot->interval.lower : NAN, hi = r.boot ? r.boot->interval.upper : NAN;
    os << pad(fixed4(r.point->delta), 10) << pad(fixed4(var), 10) << pad(fixed4(lo), 10) << pad(fixed4(hi), 10)
       << pad(fixed4(r.variance_ratio), 10) << "  "
       << (r.point->covariance ? to_string(r.point->covariance->structure) : "-") << '\n';
    for (const auto& n : r.point->notes) os << "    note: " << n << '\n';
  }
  for (const auto& [k, why] : rep.excluded) os << "excluded " << to_string(k) << ": " << why << '\n';
}

int run_analyze(const AnalyzeArgs& a) {
  CsvOptions co;
  if (a.layout == "wide")
    co.layout = CsvLayout::wide_format;
  else if (a.layout == "long")
    co.layout = CsvLayout::long_format;
  else
    throw Error(ErrorCode::invalid_params, "--layout must be long or wide");
  if (a.outcome == "continuous")
    co.outcome_kind = OutcomeKind::continuous;
  else if (a.outcome == "binary")
    co.outcome_kind = OutcomeKind::binary;
  else
    throw Error(ErrorCode::invalid_params, "--outcome must be continuous or binary");
  if (a.format != "json" && a.format != "csv") throw Error(ErrorCode::invalid_params, "--format must be csv or json");
  co.coerce_monotone = a.coerce_monotone;

  AnalysisSettings s;
  s.study = a.study.empty() ? std::filesystem::path(a.data).stem().string() : a.study;
  s.boot = a.boot;
  s.seed = a.seed;
  s.workers = std::max<std::size_t>(1, a.workers);
  s.level = a.level;
  s.defaults.mmrm.structure = parse_structure(a.structure);
  s.defaults.mmrm.star_without_visit1_baseline = !a.star_visit1_baseline;
  if (!a.ladder.empty()) {
    s.defaults.glmm.ladder.clear();
    for (const auto& l : a.ladder) s.defaults.glmm.ladder.push_back(parse_structure(l));
  }
  s.defaults.tmle.truncation = a.truncation;
  const bool all = std::find(a.estimators.begin(), a.estimators.end(), "all") != a.estimators.end();
  if (!all) {
    std::set<EstimatorKind> seen;
    for (const auto& e : a.estimators) {
      const EstimatorKind k = parse_estimator(e);
      if (seen.insert(k).second) s.estimators.push_back(k);
    }
  }

  CsvLoadInfo info;
  const TrialDataset ds = load_csv(a.data, co, &info);
  if (info.discarded_values > 0)
    std::cerr << "trialeff: note: --coerce-monotone discarded " << info.discarded_values << " observed values\n";

  const AnalysisReport rep = run_analysis(ds, s);
  if (a.out == "-") {
    emit(a.out, [&](std::ostream& os) {
      if (a.format == "json")
        os << to_json(rep, a.timings).dump(2) << '\n';
      else
        write_analysis_csv(os, rep);
    });
  } else {
    print_analysis_table(std::cout, rep);
    if (!a.out.empty())
      emit(a.out, [&](std::ostream& os) {
        if (a.format == "json")
          os << to_json(rep, a.timings).dump(2) << '\n';
        else
          write_analysis_csv(os, rep);
      });
  }

  int code = 0;
  for (const auto& r : rep.results)
    if (!r.ok()) {
      diagnose(r.message);
      const int c = exit_code(*r.error);
      code = code == 0 ? c : std::min(code, c);
    }
  return code;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> boot;
  std::optional<std::uint64_t> seed;
  std::size_t workers = default_workers();
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  StudyConfig cfg = load_study_config(a.scenario);
  if (a.replicates) cfg.replicates = *a.replicates;
  if (a.boot) cfg.boot = *a.boot;
  if (a.seed) cfg.seed = *a.seed;
  const SourcePopulation src = build_source(cfg);
  const auto cells = cfg.scenarios();

  if (cfg.replicates == 0) {
    // Dry run: every cell must calibrate against the source pool.
    for (const auto& c : cells) {
      const TrialDataset& pool = src.pool(c.outcome);
      c.effect.validate(pool.visits());
      calibrate_dropout(c.dropout, pool, c.effect);
    }
    std::cout << a.scenario << ": " << cells.size() << " scenario cells valid (dry run)\n";
    return 0;
  }

  RunOptions ro;
  ro.replicates = cfg.replicates;
  ro.boot = cfg.boot;
  ro.seed = cfg.seed;
  ro.workers = std::max<std::size_t>(1, a.workers);

  std::ostringstream csv;
  write_simulation_csv_header(csv);
  print_study_header(std::cout, cfg.name, src.provenance, cfg.replicates, cfg.boot, BootstrapOptions{}.replicates);
  for (const auto& c : cells) {
    const ScenarioMetrics m = run_scenario(src, c, ro);
    print_scenario_block(std::cout, m);
    std::cout.flush();
    write_simulation_csv_rows(csv, cfg.name, m);
  }
  if (!a.out.empty()) emit(a.out, [&](std::ostream& os) { os << csv.str(); });
  return 0;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out = "-";
};

std::vector<std::string> expand_inputs(const std::vector<std::string>& patterns) {
  std::vector<std::string> paths;
  for (const auto& p : patterns) {
    glob_t g{};
    const int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (rc == GLOB_NOMATCH) throw Error(ErrorCode::invalid_params, "no input matches '" + p + "'");
    if (rc != 0 && rc != GLOB_NOMATCH) throw Error(ErrorCode::invalid_params, "cannot expand '" + p + "'");
  }
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  return paths;
}

int run_report(const ReportArgs& a) {
  std::vector<nlohmann::json> reports;
  for (const auto& p : expand_inputs(a.inputs)) reports.push_back(load_analysis_json(p));
  const auto rows = compare_reports(reports);
  emit(a.out, [&](std::ostream& os) { write_comparison_csv(os, rows); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-adjusted treatment effect estimation for longitudinal trials"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Estimate the treatment effect in a dataset with bootstrap inference");
  analyze->add_option("--data", an.data, "Trial CSV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--layout", an.layout, "long or wide")->check(CLI::IsMember({"long", "wide"}))->capture_default_str();
  analyze->add_option("--outcome", an.outcome, "continuous or binary")
      ->check(CLI::IsMember({"continuous", "binary"}))
      ->capture_default_str();
  analyze->add_option("--estimators", an.estimators, "Comma-separated list or 'all'")->delimiter(',')->capture_default_str();
  analyze->add_option("--boot", an.boot, "Bootstrap replicates (0: point estimates only)")->capture_default_str();
  analyze->add_option("--seed", an.seed, "Random seed")->capture_default_str();
  analyze->add_option("--workers", an.workers, "Worker threads")->capture_default_str();
  analyze->add_option("--structure", an.structure, "MMRM covariance structure")->capture_default_str();
  analyze->add_option("--ladder", an.ladder, "GLMM working-correlation ladder, comma-separated")->delimiter(',');
  analyze->add_option("--truncation", an.truncation, "TMLE probability floor")->capture_default_str();
  analyze->add_option("--level", an.level, "Confidence level")->capture_default_str();
  analyze->add_flag("!--no-visit1-baseline", an.star_visit1_baseline,
                    "MMRM*: drop the baseline terms at the first visit");
  analyze->add_option("--study", an.study, "Study ID (default: data file stem)");
  analyze->add_option("--out", an.out, "Report file ('-' for stdout instead of the table)");
  analyze->add_option("--format", an.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  analyze->add_flag("--coerce-monotone", an.coerce_monotone, "Drop observations after the first missing visit");
  analyze->add_flag("--timings", an.timings, "Include wall times in the JSON report");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study from a scenario file");
  simulate->add_option("--scenario", sim.scenario, "Scenario file")->required();
  simulate->add_option("--replicates", sim.replicates, "Override replicates (0: validate only)");
  simulate->add_option("--boot", sim.boot, "Override coverage bootstrap replicates (0: no coverage)");
  simulate->add_option("--seed", sim.seed, "Override seed");
  simulate->add_option("--workers", sim.workers, "Worker threads")->capture_default_str();
  simulate->add_option("--out", sim.out, "CSV output ('-' for stdout)");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Variance-ratio comparison across analysis reports");
  report->add_option("--inputs", rp.inputs, "Report JSON files or glob patterns")->required()->expected(1, -1);
  report->add_option("--out", rp.out, "CSV output ('-' for stdout)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*analyze) return run_analyze(an);
    if (*simulate) return run_simulate(sim);
    if (*report) return run_report(rp);
  } catch (const Error& e) {
    diagnose(e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "trialeff: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
