#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "trialeff/report/analysis_report.hpp"
#include "trialeff/report/comparison.hpp"
#include "trialeff/report/simulation_table.hpp"

using namespace trialeff;
using namespace trialeff::testing;

namespace {

AnalysisSettings settings(const std::string& study, std::size_t boot = 120) {
  AnalysisSettings s;
  s.study = study;
  s.boot = boot;
  s.seed = 3;
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int significant_digits(const std::string& s) {
  int n = 0;
  bool leading = true;
  for (char c : s) {
    if (c == 'e' || c == 'E') break;
    if (!std::isdigit(static_cast<unsigned char>(c))) continue;
    if (leading && c == '0') continue;
    leading = false;
    ++n;
  }
  return n;
}

std::string temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("trialeff_test_" + name);
  std::ofstream(path) << text;
  return path.string();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected trialeff::Error");
  return ErrorCode::invalid_params;
}

}  // namespace

TEST_CASE("analysis runs every applicable estimator", "[report][analysis]") {
  const TrialDataset cont = synthetic_dataset({.n = 120, .seed = 41});
  const AnalysisReport rep = run_analysis(cont, settings("cont"));
  REQUIRE(rep.results.size() == 4);
  CHECK(rep.results[0].kind == EstimatorKind::unadjusted);
  CHECK(rep.results[0].variance_ratio == 1.0);
  for (const auto& r : rep.results) {
    CHECK(r.ok());
    CHECK(r.variance_ratio > 0.0);
  }
  REQUIRE(rep.excluded.size() == 1);
  CHECK(rep.excluded[0].first == EstimatorKind::glmm);
  CHECK(rep.excluded[0].second == "not defined for continuous outcomes");
  CHECK_FALSE(rep.has_errors());

  const TrialDataset bin = synthetic_dataset({.kind = OutcomeKind::binary, .n = 200, .seed = 42});
  const AnalysisReport brep = run_analysis(bin, settings("bin"));
  REQUIRE(brep.results.size() == 3);
  CHECK(brep.results[1].kind == EstimatorKind::glmm);
  CHECK(brep.results[0].variance_ratio == 1.0);
  REQUIRE(brep.results[1].point->covariance);
}

TEST_CASE("explicitly requested estimators that cannot run are reported", "[report][analysis]") {
  const TrialDataset cont = synthetic_dataset({.n = 80, .seed = 43});
  AnalysisSettings s = settings("x", 0);
  s.estimators = {EstimatorKind::unadjusted, EstimatorKind::glmm};
  const AnalysisReport rep = run_analysis(cont, s);
  REQUIRE(rep.results.size() == 2);
  CHECK(rep.results[0].ok());
  CHECK(std::isnan(rep.results[0].variance_ratio));
  CHECK(rep.results[1].error == ErrorCode::incompatible_outcome);
  CHECK(rep.has_errors());
  const auto j = to_json(rep);
  REQUIRE(j["failures"].size() == 1);
  CHECK(j["failures"][0]["error"] == "IncompatibleOutcome");
  CHECK(j["estimators"][1]["status"] == "failed");
}

TEST_CASE("analysis json is deterministic and omits timings by default", "[report][json]") {
  const TrialDataset ds = synthetic_dataset({.n = 100, .seed = 44});
  AnalysisSettings s = settings("det", 80);
  const std::string a = to_json(run_analysis(ds, s)).dump(2);
  s.workers = 3;
  const std::string b = to_json(run_analysis(ds, s)).dump(2);
  CHECK(a == b);
  const auto j = nlohmann::json::parse(a);
  CHECK(j["schema"] == kAnalysisSchema);
  CHECK(j["schema_version"] == kAnalysisSchemaVersion);
  CHECK_FALSE(j["metadata"].contains("timings_seconds"));
  CHECK(j["settings"]["boot"] == 80);
  CHECK(j["dataset"]["n"] == 100);
  CHECK(to_json(run_analysis(ds, s), true)["metadata"].contains("timings_seconds"));
}

TEST_CASE("comparison rows are sorted by study and flag dominance", "[report][comparison]") {
  std::vector<nlohmann::json> reports;
  for (const std::string study : {"s3", "s1", "s2"})
    reports.push_back(to_json(run_analysis(synthetic_dataset({.n = 120, .seed = 45}), settings(study, 60))));
  const auto rows = compare_reports(reports);
  REQUIRE(rows.size() == 3 * 4);
  CHECK(rows.front().study == "s1");
  CHECK(rows.back().study == "s3");
  CHECK(rows[4].study == "s2");
  for (const auto& r : rows)
    if (r.estimator == "unadjusted") CHECK(r.variance_ratio == 1.0);

  nlohmann::json hand = {{"schema", kAnalysisSchema},
                         {"schema_version", kAnalysisSchemaVersion},
                         {"study", "h"},
                         {"estimators",
                          {{{"estimator", "unadjusted"}, {"status", "ok"}, {"variance_ratio", 1.0}},
                           {{"estimator", "tmle"}, {"status", "ok"}, {"variance_ratio", 1.3}}}}};
  CHECK(compare_reports({hand})[1].adjusted_dominant);
  hand["estimators"].push_back({{"estimator", "mmrm"}, {"status", "ok"}, {"variance_ratio", 0.9}});
  CHECK_FALSE(compare_reports({hand})[0].adjusted_dominant);

  std::ostringstream csv;
  write_comparison_csv(csv, compare_reports({hand}));
  CHECK(csv.str().starts_with("study,outcome,estimator,status,variance,variance_ratio,adjusted_dominant\n"));
}

TEST_CASE("report inputs are checked against the schema", "[report][comparison]") {
  const std::string good = temp_file(
      "good.json", to_json(run_analysis(synthetic_dataset({.n = 60, .seed = 46}), settings("g", 0))).dump());
  CHECK(load_analysis_json(good)["study"] == "g");
  CHECK(code_of([] { load_analysis_json(temp_file("other.json", R"({"schema": "other", "schema_version": 1})")); }) ==
        ErrorCode::schema_mismatch);
  CHECK(code_of([] {
          load_analysis_json(temp_file(
              "v2.json", R"({"schema": "trialeff-analysis", "schema_version": 2, "study": "x", "estimators": []})"));
        }) == ErrorCode::schema_mismatch);
  CHECK(code_of([] { load_analysis_json(temp_file("broken.json", "{not json")); }) == ErrorCode::malformed_file);
  CHECK(code_of([] { load_analysis_json("/nonexistent/report.json"); }) == ErrorCode::malformed_file);
}

TEST_CASE("csv numbers keep at least six significant digits", "[report][csv]") {
  CHECK(format_g(2.0) == "2.000000000");
  CHECK(format_g(NAN).empty());
  CHECK(significant_digits(format_g(1.0 / 3.0)) >= 6);
  CHECK(significant_digits(format_g(-1.234e-7)) >= 6);

  const AnalysisReport rep = run_analysis(synthetic_dataset({.n = 100, .seed = 47}), settings("digits", 60));
  std::ostringstream out;
  write_analysis_csv(out, rep);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  REQUIRE(header.size() == 12);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    REQUIRE(cells.size() == header.size());
    for (std::size_t c = 3; c <= 9; ++c) {
      INFO(header[c] << " = " << cells[c]);
      CHECK(significant_digits(cells[c]) >= 6);
    }
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("simulation table shows four decimals and the boot note", "[report][table]") {
  ScenarioMetrics m;
  m.effect = "zero";
  m.dropout = "mcar";
  m.n = 380;
  m.replicates = 10;
  m.missing = {std::vector<double>{0.05, 0.1, 0.15}, std::vector<double>{0.05, 0.1, 0.15}};
  m.missing_overall = {0.05, 0.1, 0.15};
  EstimatorMetrics e;
  e.kind = EstimatorKind::unadjusted;
  e.retained = 10;
  e.bias = 0.00123456;
  e.variance = 0.0126;
  e.mse = 0.0126;
  e.relative_mse = 1.0;
  e.coverage = 0.95;
  m.estimators.push_back(e);
  std::ostringstream out;
  print_scenario_block(out, m);
  const std::string text = out.str();
  for (const char* col : {"Bias", "VAR", "MSE", "RMSE", "CP"}) CHECK(text.find(col) != std::string::npos);
  CHECK(text.find("0.0012") != std::string::npos);
  CHECK(text.find("1.0000") != std::string::npos);

  std::ostringstream head;
  print_study_header(head, "study", "synthetic", 1000, 1000, 10000);
  CHECK(head.str().find("10000") != std::string::npos);
  CHECK(head.str().find("MSE(unadjusted) / MSE(estimator)") != std::string::npos);

  std::ostringstream csv;
  write_simulation_csv_header(csv);
  write_simulation_csv_rows(csv, "study", m);
  std::istringstream lines(csv.str());
  std::string h, row;
  std::getline(lines, h);
  std::getline(lines, row);
  CHECK(split(h).size() == split(row).size());
}
