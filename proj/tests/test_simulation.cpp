#include <catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

#include "support.hpp"
#include "trialeff/simulation/config.hpp"
#include "trialeff/simulation/study.hpp"

using namespace trialeff;

namespace {

SourcePopulation default_source(std::size_t size = 380, std::uint64_t seed = 7) {
  GeneratorParams p;
  p.size = size;
  p.seed = seed;
  return synthesize_source(p);
}

EffectProfile beneficial() {
  EffectProfile e;
  e.name = "beneficial";
  e.kind = EffectKind::beneficial;
  e.shifts = {1.0, 1.5, 2.0};
  e.flip_probabilities = {0.2, 0.25, 0.3};
  return e;
}

DropoutMechanism mcar() {
  DropoutMechanism d;
  d.name = "mcar";
  d.kind = DropoutKind::mcar;
  d.missing = {0.05, 0.10, 0.15};
  return d;
}

DropoutMechanism mar() {
  DropoutMechanism d;
  d.name = "mar";
  d.kind = DropoutKind::mar;
  d.arm_missing = {std::vector<double>{0.10, 0.15, 0.20}, std::vector<double>{0.05, 0.10, 0.15}};
  return d;
}

std::vector<double> final_values(const TrialDataset& ds) {
  std::vector<double> v;
  for (const auto& r : ds.records())
    if (r.observed(ds.visits() - 1)) v.push_back(*r.outcomes.back());
  return v;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  const double ne = double(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
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

std::string config_error(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_study_config(in, "test.cfg");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config_error);
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

const std::string kMinimal =
    "version = 1\n"
    "[study]\n"
    "replicates = 10\n"
    "[source]\n"
    "size = 100\n"
    "[effect zero]\n"
    "kind = zero\n"
    "[dropout none]\n"
    "kind = none\n";

}  // namespace

TEST_CASE("source synthesis is deterministic", "[simulation][source]") {
  const SourcePopulation a = default_source(), b = default_source();
  REQUIRE(a.continuous->size() == 380);
  for (std::size_t i = 0; i < 380; ++i) {
    CHECK((*a.continuous)[i].baseline == (*b.continuous)[i].baseline);
    CHECK((*a.continuous)[i].outcomes == (*b.continuous)[i].outcomes);
    CHECK((*a.binary)[i].outcomes == (*b.binary)[i].outcomes);
  }
  CHECK(dropout_summary(*a.continuous).overall.back() == 0.0);
  CHECK(a.continuous->visits() == 3);
}

TEST_CASE("source final-visit moments match the generator", "[simulation][source]") {
  const SourcePopulation src = default_source();
  const GeneratorParams p;
  const auto y = final_values(*src.continuous);
  const double n = static_cast<double>(y.size());
  const double m = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (n - 1.0));
  CHECK(std::abs(m - p.change_mean.back()) < 3.0 * p.change_sd.back() / std::sqrt(n));
  CHECK(std::abs(sd - p.change_sd.back()) < 3.0 * p.change_sd.back() / std::sqrt(2.0 * n));

  // Responders are subjects whose achieved value falls below the threshold.
  for (std::size_t i = 0; i < src.continuous->size(); ++i) {
    const double achieved = (*src.continuous)[i].baseline[kHba1cIndex] + *(*src.continuous)[i].outcomes.back();
    CHECK(*(*src.binary)[i].outcomes.back() == (achieved < p.binary_threshold ? 1.0 : 0.0));
  }
}

TEST_CASE("zero hba1c correlation decouples baseline and change", "[simulation][source]") {
  GeneratorParams p;
  p.size = 10000;
  p.seed = 3;
  p.hba1c_correlation = {0.0, 0.0, 0.0};
  const SourcePopulation src = synthesize_source(p);
  const TrialDataset& ds = *src.continuous;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (const auto& r : ds.records()) {
    const double x = r.baseline[kHba1cIndex], y = *r.outcomes.back();
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double n = static_cast<double>(ds.size());
  const double r = (sxy / n - sx * sy / (n * n)) / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  CHECK(std::abs(r) < 3.0 / std::sqrt(n));

  p.hba1c_correlation = {0.5, 0.5, 1.5};
  CHECK(code_of([&] { synthesize_source(p); }) == ErrorCode::invalid_params);
  GeneratorParams bad;
  bad.female_fraction = 1.0;
  CHECK(code_of([&] { synthesize_source(bad); }) == ErrorCode::invalid_params);
}

TEST_CASE("mcar hazards follow from the targets in closed form", "[simulation][dropout]") {
  const SourcePopulation src = default_source();
  const CalibratedDropout d = calibrate_dropout(mcar(), *src.continuous, EffectProfile{});
  REQUIRE(d.hazard.size() == 3);
  CHECK(d.hazard[0] == Catch::Approx(0.05).margin(1e-15));
  CHECK(d.hazard[1] == Catch::Approx(1.0 - 0.90 / 0.95).margin(1e-15));
  CHECK(d.hazard[2] == Catch::Approx(1.0 - 0.85 / 0.90).margin(1e-15));
  for (int a = 0; a < 2; ++a) {
    const auto m = expected_missing(*src.continuous, EffectProfile{}, d, a);
    CHECK(m[0] == Catch::Approx(0.05).margin(1e-12));
    CHECK(m[1] == Catch::Approx(0.10).margin(1e-12));
    CHECK(m[2] == Catch::Approx(0.15).margin(1e-12));
  }
}

TEST_CASE("mar intercepts hit the per-arm targets exactly", "[simulation][dropout]") {
  const SourcePopulation src = default_source();
  for (auto kind : {OutcomeKind::continuous, OutcomeKind::binary})
    for (const EffectProfile& e : {EffectProfile{}, beneficial()}) {
      const TrialDataset& pool = src.pool(kind);
      const CalibratedDropout d = calibrate_dropout(mar(), pool, e);
      CHECK(d.slope == (kind == OutcomeKind::binary ? -0.5 : 0.5));
      for (int a = 0; a < 2; ++a) {
        const auto m = expected_missing(pool, e, d, a);
        for (std::size_t t = 0; t < 3; ++t) CHECK(m[t] == Catch::Approx(mar().arm_missing[a][t]).margin(1e-9));
      }
    }
}

TEST_CASE("unreachable dropout targets are reported", "[simulation][dropout]") {
  const SourcePopulation src = default_source();
  DropoutMechanism steep = mar();
  steep.slope_continuous = 20.0;
  steep.arm_missing[0] = {0.10, 0.50, 0.99};
  CHECK(code_of([&] { calibrate_dropout(steep, *src.continuous, EffectProfile{}); }) ==
        ErrorCode::calibration_out_of_range);
  DropoutMechanism decreasing = mcar();
  decreasing.missing = {0.1, 0.05, 0.2};
  CHECK(code_of([&] { calibrate_dropout(decreasing, *src.continuous, EffectProfile{}); }) ==
        ErrorCode::invalid_params);
}

TEST_CASE("true effect oracle agrees with the exact value", "[simulation][oracle]") {
  const SourcePopulation src = default_source();
  const OracleResult cont = true_delta_oracle(*src.continuous, beneficial(), 200000, 5);
  CHECK(exact_true_delta(*src.continuous, beneficial()) == -2.0);
  CHECK(std::abs(cont.delta + 2.0) <= 3.0 * cont.mc_se + 1e-12);

  const OracleResult zero = true_delta_oracle(*src.continuous, EffectProfile{}, 200000, 5);
  CHECK(std::abs(zero.delta) <= 3.0 * zero.mc_se + 1e-12);

  double nonresponders = 0.0;
  for (const auto& r : src.binary->records()) nonresponders += *r.outcomes.back() == 0.0;
  const double expected = 0.3 * nonresponders / static_cast<double>(src.binary->size());
  CHECK(exact_true_delta(*src.binary, beneficial()) == Catch::Approx(expected).margin(1e-15));
  const OracleResult bin = true_delta_oracle(*src.binary, beneficial(), 200000, 5);
  CHECK(std::abs(bin.delta - expected) < 3.0 * bin.mc_se);
  CHECK(code_of([&] { true_delta_oracle(*src.binary, beneficial(), 1000, 5); }) == ErrorCode::invalid_params);
}

TEST_CASE("trials without dropout resample the pool", "[simulation][trial]") {
  const SourcePopulation src = default_source();
  const TrialDataset t = generate_trial(*src.continuous, 380, EffectProfile{}, CalibratedDropout{}, 9, 0);
  CHECK(t.size() == 380);
  CHECK(dropout_summary(t).overall == std::vector<double>{0.0, 0.0, 0.0});
  for (const auto& r : t.records()) {
    const auto hit = std::find_if(src.continuous->records().begin(), src.continuous->records().end(),
                                  [&](const ParticipantRecord& s) { return s.baseline == r.baseline; });
    REQUIRE(hit != src.continuous->records().end());
    CHECK(hit->outcomes == r.outcomes);
  }
  const TrialDataset again = generate_trial(*src.continuous, 380, EffectProfile{}, CalibratedDropout{}, 9, 0);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i].arm == again[i].arm);
}

TEST_CASE("treated and control outcomes are exchangeable under the null", "[simulation][trial]") {
  const SourcePopulation src = default_source();
  std::vector<double> y[2];
  for (std::uint64_t rep = 0; rep < 40; ++rep) {
    const TrialDataset t = generate_trial(*src.continuous, 380, EffectProfile{}, CalibratedDropout{}, 21, rep);
    for (const auto& r : t.records()) y[r.arm].push_back(*r.outcomes.back());
  }
  CHECK(ks_pvalue(y[0], y[1]) > 0.001);
}

TEST_CASE("metrics identities", "[simulation][metrics]") {
  CHECK(std::round(relative_mse(0.0126, 0.0085) * 100.0) / 100.0 == 1.48);
  std::vector<ReplicateValue> reps;
  Rng rng = make_rng(4, 4, 0);
  for (int i = 0; i < 500; ++i) {
    ReplicateValue v;
    if (i % 50 != 7) v.delta = 0.3 + 0.2 * standard_normal(rng);
    v.covered = uniform01(rng) < 0.9;
    reps.push_back(v);
  }
  const EstimatorMetrics m = summarize(EstimatorKind::tmle, reps, 0.25);
  CHECK(m.failed == 10);
  CHECK(m.retained == 490);
  CHECK(std::abs(m.mse - (m.variance + m.bias * m.bias)) < 1e-12);
  CHECK(m.coverage >= 0.0);
  CHECK(m.coverage <= 1.0);
}

TEST_CASE("run_scenario is deterministic across workers", "[simulation][study]") {
  const SourcePopulation src = default_source();
  ScenarioSpec spec;
  spec.outcome = OutcomeKind::continuous;
  spec.effect = beneficial();
  spec.dropout = mar();
  spec.n = 200;
  for (auto k : all_estimators(OutcomeKind::continuous)) {
    EstimatorSpec es;
    es.kind = k;
    spec.estimators.push_back(es);
  }
  RunOptions opt;
  opt.replicates = 12;
  opt.boot = 20;
  opt.seed = 5;
  const ScenarioMetrics a = run_scenario(src, spec, opt);
  opt.workers = 3;
  const ScenarioMetrics b = run_scenario(src, spec, opt);
  REQUIRE(a.estimators.size() == b.estimators.size());
  for (std::size_t e = 0; e < a.estimators.size(); ++e) {
    CHECK(a.estimators[e].mean == b.estimators[e].mean);
    CHECK(a.estimators[e].mse == b.estimators[e].mse);
    CHECK(a.estimators[e].coverage == b.estimators[e].coverage);
  }
  CHECK(a.missing_overall == b.missing_overall);
  CHECK(a.estimators.front().relative_mse == 1.0);
  CHECK(a.true_delta == -2.0);
}

TEST_CASE("complete data under the null gives unbiased estimators", "[simulation][study]") {
  const SourcePopulation src = default_source();
  for (auto kind : {OutcomeKind::continuous, OutcomeKind::binary}) {
    ScenarioSpec spec;
    spec.outcome = kind;
    for (auto k : all_estimators(kind)) {
      EstimatorSpec es;
      es.kind = k;
      spec.estimators.push_back(es);
    }
    RunOptions opt;
    opt.replicates = 1000;
    opt.seed = 8;
    opt.workers = default_workers();
    const ScenarioMetrics m = run_scenario(src, spec, opt);
    for (const auto& e : m.estimators) {
      INFO(to_string(e.kind));
      CHECK(e.failed == 0);
      CHECK(std::abs(e.bias) < 3.0 * e.bias_se);
      CHECK(std::abs(e.mse - (e.variance + e.bias * e.bias)) < 1e-12);
    }
  }
}

TEST_CASE("default scenario file loads", "[simulation][config]") {
  const StudyConfig cfg = load_study_config(std::string(TRIALEFF_SOURCE_DIR) + "/scenarios/diabetes_k3.cfg");
  CHECK(cfg.name == "diabetes_k3");
  CHECK(cfg.n == 380);
  CHECK(cfg.replicates == 1000);
  CHECK(cfg.outcomes == std::vector<OutcomeKind>{OutcomeKind::continuous, OutcomeKind::binary});
  CHECK(cfg.source.seed == 7);
  CHECK(cfg.source.visit_labels == std::vector<std::string>{"4", "12", "26"});
  REQUIRE(cfg.effects.size() == 2);
  CHECK(cfg.effects[1].shifts == std::vector<double>{1, 1.5, 2});
  CHECK(cfg.effects[1].flip_probabilities == std::vector<double>{0.2, 0.25, 0.3});
  REQUIRE(cfg.dropouts.size() == 2);
  CHECK(cfg.dropouts[0].missing == std::vector<double>{0.05, 0.10, 0.15});
  CHECK(cfg.dropouts[1].arm_missing[0] == std::vector<double>{0.10, 0.15, 0.20});
  CHECK(cfg.dropouts[1].arm_missing[1] == std::vector<double>{0.05, 0.10, 0.15});
  const SourcePopulation src = build_source(cfg);
  CHECK(src.continuous->size() == 380);
}

TEST_CASE("config errors carry file and line", "[simulation][config]") {
  std::istringstream ok(kMinimal);
  CHECK(parse_study_config(ok, "test.cfg").replicates == 10);

  CHECK(config_error("[study]\nn = 10\n").find("test.cfg:") != std::string::npos);
  CHECK(config_error("[study]\nn = 10\n").find("version") != std::string::npos);
  CHECK(config_error("version = 2\n").find("test.cfg:1:") != std::string::npos);

  std::string unknown = kMinimal;
  unknown.insert(unknown.find("replicates"), "colour = blue\n");
  const std::string u = config_error(unknown);
  CHECK(u.find("test.cfg:3:") != std::string::npos);
  CHECK(u.find("colour") != std::string::npos);

  std::string bad_number = kMinimal + "[effect b]\nkind = beneficial\nshifts = 1, x, 2\nflip_probabilities = 0.1, 0.1, 0.1\n";
  CHECK(config_error(bad_number).find("test.cfg:12:") != std::string::npos);

  std::string wrong_count = kMinimal + "[dropout m]\nkind = mcar\nmissing = 0.1, 0.2\n";
  CHECK(config_error(wrong_count).find("test.cfg:12:") != std::string::npos);

  std::string duplicate = kMinimal + "[study]\nn = 5\n";
  CHECK(config_error(duplicate).find("duplicate") != std::string::npos);

  std::string dup_key = kMinimal;
  dup_key.insert(dup_key.find("replicates"), "replicates = 3\n");
  CHECK(config_error(dup_key).find("test.cfg:4:") != std::string::npos);
}
