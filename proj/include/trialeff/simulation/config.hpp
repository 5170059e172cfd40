#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trialeff/csv_io.hpp"
#include "trialeff/estimators/estimators.hpp"
#include "trialeff/simulation/scenario.hpp"
#include "trialeff/simulation/source.hpp"
#include "trialeff/simulation/study.hpp"

namespace trialeff {

inline constexpr int kScenarioSchemaVersion = 1;

/// A simulation study read from a scenario file: one source population and
/// every (outcome, effect, dropout) combination of the listed blocks.
struct StudyConfig {
  std::string origin;
  std::string name = "study";
  std::size_t n = 380;
  std::vector<OutcomeKind> outcomes{OutcomeKind::continuous, OutcomeKind::binary};
  std::size_t replicates = 1000;
  std::size_t boot = 1000;
  std::uint64_t seed = 1;
  std::vector<EstimatorKind> estimators;  // empty: every applicable estimator
  EstimatorSpec estimator_defaults;
  GeneratorParams source;
  std::optional<std::string> source_file;  // completers CSV, relative to the scenario file
  CsvLayout source_layout = CsvLayout::wide_format;
  OutcomeKind source_outcome = OutcomeKind::continuous;
  std::vector<EffectProfile> effects;
  std::vector<DropoutMechanism> dropouts;

  /// Cells in reporting order: outcome, then effect, then dropout.
  std::vector<ScenarioSpec> scenarios() const {
    std::vector<ScenarioSpec> out;
    for (auto o : outcomes)
      for (const auto& e : effects)
        for (const auto& d : dropouts) {
          ScenarioSpec s;
          s.outcome = o;
          s.effect = e;
          s.dropout = d;
          s.n = n;
          const auto kinds = estimators.empty() ? all_estimators(o) : estimators;
          for (auto k : kinds) {
            if (!supports(k, o)) continue;
            EstimatorSpec spec = estimator_defaults;
            spec.kind = k;
            s.estimators.push_back(spec);
          }
          out.push_back(std::move(s));
        }
    return out;
  }
};

namespace config_detail {

struct Entry {
  std::string value;
  std::size_t line;
};

struct Section {
  std::string kind;  // "", "study", "source", "effect", "dropout"
  std::string label;
  std::size_t line = 0;
  std::map<std::string, Entry> entries;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Reader {
 public:
  Reader(const std::string& origin, const Section& sec) : origin_(origin), sec_(sec) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = sec_.entries.find(key);
    const std::size_t line = it != sec_.entries.end() ? it->second.line : sec_.line;
    std::string where = sec_.kind.empty() ? "" : "[" + sec_.kind + (sec_.label.empty() ? "" : " " + sec_.label) + "] ";
    throw Error(ErrorCode::config_error, origin_ + ":" + std::to_string(line) + ": " + where + key + ": " + msg);
  }

  bool has(const std::string& key) const { return sec_.entries.count(key) > 0; }

  std::string text(const std::string& key) const {
    used_.insert(key);
    return sec_.entries.at(key).value;
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) fail(key, "empty list item");
      out.push_back(item);
    }
    if (out.empty()) fail(key, "empty list");
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::size_t> count = std::nullopt) const {
    std::vector<double> out;
    for (const auto& s : list(key)) {
      const auto v = csv_detail::parse_number(s);
      if (!v || !std::isfinite(*v)) fail(key, "'" + s + "' is not a number");
      out.push_back(*v);
    }
    if (count && out.size() != *count)
      fail(key, "expected " + std::to_string(*count) + " values, got " + std::to_string(out.size()));
    return out;
  }

  double number(const std::string& key) const { return numbers(key, 1)[0]; }

  std::uint64_t integer(const std::string& key) const {
    const std::string s = trim(text(key));
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "'" + s + "' is not a non-negative integer");
    return v;
  }

  void reject_unknown() const {
    for (const auto& [k, e] : sec_.entries)
      if (!used_.count(k)) fail(k, "unknown key");
  }

 private:
  const std::string& origin_;
  const Section& sec_;
  mutable std::set<std::string> used_;
};

inline std::vector<Section> split_sections(std::istream& in, const std::string& origin) {
  std::vector<Section> out(1);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": unterminated section header");
      const std::string head = trim(line.substr(1, line.size() - 2));
      Section s;
      s.line = no;
      const auto sp = head.find_first_of(" \t");
      s.kind = head.substr(0, sp);
      s.label = sp == std::string::npos ? "" : trim(head.substr(sp));
      static const std::set<std::string> kinds{"study", "source", "effect", "dropout"};
      if (!kinds.count(s.kind))
        throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": unknown section '" + s.kind + "'");
      if ((s.kind == "effect" || s.kind == "dropout") && s.label.empty())
        throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": [" + s.kind + "] needs a name");
      out.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": empty key");
    auto& entries = out.back().entries;
    if (entries.count(key))
      throw Error(ErrorCode::config_error, origin + ":" + std::to_string(no) + ": duplicate key '" + key + "'");
    entries[key] = Entry{trim(line.substr(eq + 1)), no};
  }
  return out;
}

inline OutcomeKind parse_outcome_kind(const Reader& r, const std::string& key, const std::string& s) {
  if (s == "continuous") return OutcomeKind::continuous;
  if (s == "binary") return OutcomeKind::binary;
  r.fail(key, "expected continuous or binary, got '" + s + "'");
}

inline TruncatedNormal marginal(const Reader& r, const std::string& key) {
  const auto v = r.numbers(key, 4);
  if (!(v[1] > 0) || !(v[2] < v[3])) r.fail(key, "expected mean, sd > 0, lower < upper");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace config_detail

inline StudyConfig parse_study_config(std::istream& in, const std::string& origin) {
  using namespace config_detail;
  const auto sections = split_sections(in, origin);
  StudyConfig cfg;
  cfg.origin = origin;

  {
    Reader top(origin, sections[0]);
    if (!top.has("version")) top.fail("version", "missing schema version");
    if (top.integer("version") != kScenarioSchemaVersion)
      top.fail("version", "unsupported schema version (expected " + std::to_string(kScenarioSchemaVersion) + ")");
    top.reject_unknown();
  }

  bool have_study = false, have_source = false;
  std::set<std::string> effect_names, dropout_names;
  std::vector<std::size_t> effect_sections, dropout_sections;
  for (std::size_t i = 1; i < sections.size(); ++i) {
    const Section& sec = sections[i];
    Reader r(origin, sec);
    if (sec.kind == "study") {
      if (have_study) r.fail("study", "duplicate [study] section");
      have_study = true;
      if (r.has("name")) cfg.name = r.text("name");
      if (r.has("n")) {
        cfg.n = r.integer("n");
        if (cfg.n < 2) r.fail("n", "must be at least 2");
      }
      if (r.has("outcomes")) {
        cfg.outcomes.clear();
        for (const auto& s : r.list("outcomes")) cfg.outcomes.push_back(parse_outcome_kind(r, "outcomes", s));
      }
      if (r.has("replicates")) cfg.replicates = r.integer("replicates");
      if (r.has("boot")) cfg.boot = r.integer("boot");
      if (r.has("seed")) cfg.seed = r.integer("seed");
      if (r.has("estimators")) {
        const auto items = r.list("estimators");
        if (!(items.size() == 1 && items[0] == "all")) {
          for (const auto& s : items) {
            try {
              cfg.estimators.push_back(parse_estimator(s));
            } catch (const Error&) {
              r.fail("estimators", "unknown estimator '" + s + "'");
            }
          }
        }
      }
      if (r.has("mmrm_structure")) {
        try {
          cfg.estimator_defaults.mmrm.structure = parse_structure(r.text("mmrm_structure"));
        } catch (const Error&) {
          r.fail("mmrm_structure", "unknown covariance structure");
        }
      }
      if (r.has("mmrm_star_visit1_baseline")) {
        const std::string v = r.text("mmrm_star_visit1_baseline");
        if (v != "true" && v != "false") r.fail("mmrm_star_visit1_baseline", "expected true or false");
        cfg.estimator_defaults.mmrm.star_without_visit1_baseline = v == "false";
      }
      if (r.has("glmm_ladder")) {
        cfg.estimator_defaults.glmm.ladder.clear();
        for (const auto& s : r.list("glmm_ladder")) {
          try {
            cfg.estimator_defaults.glmm.ladder.push_back(parse_structure(s));
          } catch (const Error&) {
            r.fail("glmm_ladder", "unknown covariance structure '" + s + "'");
          }
        }
      }
      if (r.has("tmle_truncation")) {
        const double t = r.number("tmle_truncation");
        if (!(t > 0.0 && t <= 0.5)) r.fail("tmle_truncation", "must lie in (0, 0.5]");
        cfg.estimator_defaults.tmle.truncation = t;
      }
    } else if (sec.kind == "source") {
      if (have_source) r.fail("source", "duplicate [source] section");
      have_source = true;
      GeneratorParams& g = cfg.source;
      if (r.has("visits")) g.visit_labels = r.list("visits");
      const std::size_t k = g.visit_labels.size();
      if (r.has("size")) g.size = r.integer("size");
      if (r.has("seed")) g.seed = r.integer("seed");
      if (r.has("age")) g.age = marginal(r, "age");
      if (r.has("weight")) g.weight = marginal(r, "weight");
      if (r.has("hba1c")) g.hba1c = marginal(r, "hba1c");
      if (r.has("female_fraction")) g.female_fraction = r.number("female_fraction");
      if (r.has("latent_correlation")) g.latent_correlation = r.numbers("latent_correlation", 6);
      if (r.has("change_mean")) g.change_mean = r.numbers("change_mean", k);
      if (r.has("change_sd")) g.change_sd = r.numbers("change_sd", k);
      if (r.has("residual_correlation")) g.residual_correlation = r.numbers("residual_correlation", k * (k - 1) / 2);
      if (r.has("age_loading")) g.age_loading = r.numbers("age_loading", k);
      if (r.has("female_loading")) g.female_loading = r.numbers("female_loading", k);
      if (r.has("weight_loading")) g.weight_loading = r.numbers("weight_loading", k);
      if (r.has("hba1c_correlation")) g.hba1c_correlation = r.numbers("hba1c_correlation", k);
      if (r.has("binary_threshold")) g.binary_threshold = r.number("binary_threshold");
      if (r.has("file")) cfg.source_file = r.text("file");
      if (r.has("file_layout")) {
        const std::string v = r.text("file_layout");
        if (v != "wide" && v != "long") r.fail("file_layout", "expected wide or long");
        cfg.source_layout = v == "wide" ? CsvLayout::wide_format : CsvLayout::long_format;
      }
      if (r.has("file_outcome")) cfg.source_outcome = parse_outcome_kind(r, "file_outcome", r.text("file_outcome"));
      if (!cfg.source_file) {
        try {
          generator_model(g);
        } catch (const Error& e) {
          r.fail("source", e.message());
        }
      }
    } else if (sec.kind == "effect") {
      if (!effect_names.insert(sec.label).second) r.fail("effect", "duplicate effect '" + sec.label + "'");
      EffectProfile e;
      e.name = sec.label;
      if (!r.has("kind")) r.fail("kind", "missing (zero or beneficial)");
      const std::string kind = r.text("kind");
      if (kind == "zero") {
        e.kind = EffectKind::zero;
      } else if (kind == "beneficial") {
        e.kind = EffectKind::beneficial;
        if (!r.has("shifts")) r.fail("shifts", "required for a beneficial effect");
        if (!r.has("flip_probabilities")) r.fail("flip_probabilities", "required for a beneficial effect");
        e.shifts = r.numbers("shifts");
        e.flip_probabilities = r.numbers("flip_probabilities");
        for (double p : e.flip_probabilities)
          if (!(p >= 0.0 && p <= 1.0)) r.fail("flip_probabilities", "values must lie in [0, 1]");
      } else {
        r.fail("kind", "expected zero or beneficial, got '" + kind + "'");
      }
      cfg.effects.push_back(std::move(e));
      effect_sections.push_back(i);
    } else if (sec.kind == "dropout") {
      if (!dropout_names.insert(sec.label).second) r.fail("dropout", "duplicate dropout '" + sec.label + "'");
      DropoutMechanism d;
      d.name = sec.label;
      if (!r.has("kind")) r.fail("kind", "missing (none, mcar or mar)");
      const std::string kind = r.text("kind");
      if (kind == "none") {
        d.kind = DropoutKind::none;
      } else if (kind == "mcar") {
        d.kind = DropoutKind::mcar;
        if (!r.has("missing")) r.fail("missing", "required for mcar");
        d.missing = r.numbers("missing");
      } else if (kind == "mar") {
        d.kind = DropoutKind::mar;
        if (!r.has("missing_control")) r.fail("missing_control", "required for mar");
        if (!r.has("missing_treated")) r.fail("missing_treated", "required for mar");
        d.arm_missing[0] = r.numbers("missing_control");
        d.arm_missing[1] = r.numbers("missing_treated");
        if (r.has("slope_continuous")) d.slope_continuous = r.number("slope_continuous");
        if (r.has("slope_binary")) d.slope_binary = r.number("slope_binary");
        if (r.has("intercepts_control")) d.intercepts[0] = r.numbers("intercepts_control");
        if (r.has("intercepts_treated")) d.intercepts[1] = r.numbers("intercepts_treated");
      } else {
        r.fail("kind", "expected none, mcar or mar, got '" + kind + "'");
      }
      cfg.dropouts.push_back(std::move(d));
      dropout_sections.push_back(i);
    }
    r.reject_unknown();
  }
  auto fail_top = [&](const std::string& msg) { throw Error(ErrorCode::config_error, origin + ": " + msg); };
  if (cfg.effects.empty()) fail_top("no [effect NAME] section");
  if (cfg.dropouts.empty()) fail_top("no [dropout NAME] section");
  if (cfg.outcomes.empty()) fail_top("no outcome kinds");
  // Lengths depend on the visit count, known only once every section is read.
  const std::size_t k = cfg.source.visit_labels.size();
  auto validate = [&](const auto& item, std::size_t section, std::initializer_list<const char*> keys) {
    try {
      item.validate(k);
    } catch (const Error& err) {
      const Reader r(origin, sections[section]);
      const std::string msg = err.message();
      for (const char* key : keys)
        if (r.has(key) && msg.find(std::string(": ") + key) != std::string::npos) r.fail(key, msg);
      r.fail(sections[section].kind, msg);
    }
  };
  for (std::size_t i = 0; i < cfg.effects.size(); ++i)
    validate(cfg.effects[i], effect_sections[i], {"shifts", "flip_probabilities"});
  for (std::size_t i = 0; i < cfg.dropouts.size(); ++i)
    validate(cfg.dropouts[i], dropout_sections[i],
             {"missing_control", "missing_treated", "missing", "intercepts_control", "intercepts_treated"});
  return cfg;
}

inline StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_error, "cannot open scenario file '" + path + "'");
  return parse_study_config(in, path);
}

/// Source population for a study: the configured file, or the synthetic
/// generator. Relative file paths resolve against the scenario file.
inline SourcePopulation build_source(const StudyConfig& cfg) {
  if (!cfg.source_file) return synthesize_source(cfg.source);
  std::filesystem::path p(*cfg.source_file);
  if (p.is_relative() && !cfg.origin.empty()) p = std::filesystem::path(cfg.origin).parent_path() / p;
  CsvOptions opt;
  opt.layout = cfg.source_layout;
  opt.outcome_kind = cfg.source_outcome;
  return source_from_dataset(load_csv(p.string(), opt), "file(" + p.string() + ")");
}

}  // namespace trialeff
