#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phenopred/error.hpp"
#include "phenopred/numerics.hpp"
#include "phenopred/pipeline.hpp"
#include "phenopred/synthgen.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred::config {

// Flat "key = value" text. '#' starts a comment; blank lines are ignored.
class KeyValues {
 public:
  static KeyValues parse(const std::vector<std::string>& lines, const std::string& origin) {
    KeyValues kv;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string_view line = lines[i];
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = tsv::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(i + 1) + ": ";
      if (eq == std::string_view::npos) throw InputError(where + "expected 'key = value'");
      const std::string key(tsv::trim(line.substr(0, eq)));
      const std::string value(tsv::trim(line.substr(eq + 1)));
      if (key.empty()) throw InputError(where + "empty key");
      if (!kv.values_.emplace(key, value).second) throw InputError(where + "duplicate key '" + key + "'");
    }
    return kv;
  }

  static KeyValues load(const std::string& path) { return parse(tsv::read_lines(path), path); }

  // Applies "key=value" overrides (command-line flags win over the file).
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InputError("override must look like key=value, got '" + assignment + "'");
    set(std::string(tsv::trim(std::string_view(assignment).substr(0, eq))),
        std::string(tsv::trim(std::string_view(assignment).substr(eq + 1))));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  double real(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    auto r = tsv::parse_real(*v);
    if (!r) throw InputError("config key '" + key + "': not a real number: '" + *v + "'");
    return *r;
  }

  long long integer(const std::string& key, long long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    auto r = tsv::parse_int(*v);
    if (!r) throw InputError("config key '" + key + "': not an integer: '" + *v + "'");
    return *r;
  }

  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, _] : values_)
      if (!known.count(k)) throw InputError("unknown config key '" + k + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& item : tsv::split(s, ',')) {
    auto t = tsv::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

// "a,b,c" or "start:step:stop" (inclusive; stop reached within 1e-9 of a step).
inline std::vector<double> parse_real_axis(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    auto parts = tsv::split(text, ':');
    if (parts.size() != 3) throw InputError("config key '" + key + "': range must be start:step:stop");
    auto a = tsv::parse_real(parts[0]), s = tsv::parse_real(parts[1]), b = tsv::parse_real(parts[2]);
    if (!a || !s || !b || !(*s > 0) || *b < *a) throw InputError("config key '" + key + "': bad range '" + text + "'");
    const auto steps = static_cast<long long>(std::floor((*b - *a) / *s + 1e-9));
    for (long long i = 0; i <= steps; ++i) {
      // Snap to 12 significant decimals so 0.05 + 0.025 * i prints as written.
      const double v = *a + *s * static_cast<double>(i);
      out.push_back(std::round(v * 1e12) / 1e12);
    }
    return out;
  }
  for (const auto& item : split_list(text)) {
    auto v = tsv::parse_real(item);
    if (!v) throw InputError("config key '" + key + "': not a real number: '" + item + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw InputError("config key '" + key + "' is empty");
  return out;
}

// "a,b,c" or "lo:hi" (inclusive).
inline std::vector<int> parse_int_axis(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text.find(':') != std::string::npos) {
    auto parts = tsv::split(text, ':');
    auto lo = parts.size() == 2 ? tsv::parse_int(parts[0]) : std::nullopt;
    auto hi = parts.size() == 2 ? tsv::parse_int(parts[1]) : std::nullopt;
    if (!lo || !hi || *hi < *lo) throw InputError("config key '" + key + "': range must be lo:hi");
    for (long long v = *lo; v <= *hi; ++v) out.push_back(static_cast<int>(v));
    return out;
  }
  for (const auto& item : split_list(text)) {
    auto v = tsv::parse_int(item);
    if (!v) throw InputError("config key '" + key + "': not an integer: '" + item + "'");
    out.push_back(static_cast<int>(*v));
  }
  if (out.empty()) throw InputError("config key '" + key + "' is empty");
  return out;
}

// ---------------------------------------------------------------------------

struct RunConfig {
  std::string expression;
  std::string mapping;
  std::optional<std::string> term_names;
  std::optional<std::string> phenotypes;
  std::optional<std::string> symptoms;
  std::optional<std::string> labels;
  std::optional<std::string> planted_terms;
  std::string output = "phenopred_out";

  std::vector<std::string> phenotype_list;  // empty: every phenotype, sorted by name
  std::vector<pipeline::Stage> stages = {pipeline::Stage::GoStart, pipeline::Stage::GoMid, pipeline::Stage::GoEnd};
  pipeline::GridAxes axes = pipeline::default_axes();

  bool binary = true;  // run the binary-status analyses when labels exist
  std::vector<double> logistic_thresholds = {1.5, 2.0, 2.5, 3.0, 3.5};
  std::vector<int> logistic_components = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  int folds = 5;
  std::uint64_t seed = 1;
  double q = 0.2;
  double delta = 0.05;
  int jobs = 1;

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {
        "expression", "mapping",  "term_names", "phenotypes", "symptoms",  "labels",
        "planted_terms", "output", "phenotype_list", "stages", "thresholds", "components",
        "binary", "logistic_thresholds", "logistic_components", "folds", "seed", "q", "delta", "jobs"};
    return k;
  }

  static RunConfig from(const KeyValues& kv, const std::filesystem::path& base = {}) {
    kv.require_known(keys());
    RunConfig c;
    auto path = [&](const std::string& key) -> std::optional<std::string> {
      auto v = kv.get(key);
      if (!v) return std::nullopt;
      std::filesystem::path p(*v);
      if (p.is_relative() && !base.empty()) p = base / p;
      return p.lexically_normal().string();
    };
    auto req = [&](const std::string& key) {
      auto v = path(key);
      if (!v) throw InputError("config is missing '" + key + "'");
      return *v;
    };
    c.expression = req("expression");
    c.mapping = req("mapping");
    c.term_names = path("term_names");
    c.phenotypes = path("phenotypes");
    c.symptoms = path("symptoms");
    c.labels = path("labels");
    c.planted_terms = path("planted_terms");
    if (kv.has("output")) c.output = *kv.get("output");
    if (!c.phenotypes && !c.symptoms) throw InputError("config needs 'phenotypes' or 'symptoms'");
    if (c.phenotypes && c.symptoms) throw InputError("config must not set both 'phenotypes' and 'symptoms'");
    if (auto v = kv.get("phenotype_list")) c.phenotype_list = split_list(*v);
    if (auto v = kv.get("stages")) {
      c.stages.clear();
      for (const auto& s : split_list(*v)) {
        auto st = pipeline::parse_stage(s);
        if (!st) throw InputError("unknown stage '" + s + "' (GoStart, GoMid, GoEnd)");
        c.stages.push_back(*st);
      }
      if (c.stages.empty()) throw InputError("config key 'stages' is empty");
    }
    if (auto v = kv.get("thresholds")) c.axes.thresholds = parse_real_axis("thresholds", *v);
    if (auto v = kv.get("components")) c.axes.components = parse_int_axis("components", *v);
    if (auto v = kv.get("logistic_thresholds")) c.logistic_thresholds = parse_real_axis("logistic_thresholds", *v);
    if (auto v = kv.get("logistic_components")) c.logistic_components = parse_int_axis("logistic_components", *v);
    if (auto v = kv.get("binary")) {
      if (*v == "true" || *v == "1" || *v == "yes")
        c.binary = true;
      else if (*v == "false" || *v == "0" || *v == "no")
        c.binary = false;
      else
        throw InputError("config key 'binary' must be true or false");
    }
    c.folds = static_cast<int>(kv.integer("folds", 5));
    const auto seed = kv.integer("seed", 1);
    if (seed < 0) throw InputError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.q = kv.real("q", 0.2);
    c.delta = kv.real("delta", 0.05);
    c.jobs = static_cast<int>(kv.integer("jobs", 1));
    c.validate();
    return c;
  }

  void validate() const {
    for (double t : axes.thresholds)
      if (!(t > 0.0)) throw InputError("thresholds must be positive");
    for (int k : axes.components)
      if (k < 1) throw InputError("components must be at least 1");
    for (double t : logistic_thresholds)
      if (!(t > 0.0)) throw InputError("logistic thresholds must be positive");
    for (int k : logistic_components)
      if (k < 1) throw InputError("logistic components must be at least 1");
    if (folds < 2) throw InputError("folds must be at least 2");
    if (!(q > 0.0 && q <= 1.0)) throw InputError("q must be in (0, 1]");
    if (!(delta >= 0.0)) throw InputError("delta must be non-negative");
    if (jobs < 1) throw InputError("jobs must be at least 1");
  }
};

// Synthetic-bundle settings, same key=value format.
struct SynthRunConfig {
  synthgen::SynthConfig synth;
  std::string output = "synth_out";

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {"n_subjects",   "n_features", "n_terms",        "members_per_term",
                                            "n_planted_terms", "effect_weights", "noise_sd", "binary_overlap",
                                            "loading",      "n_phenotypes", "seed",         "output"};
    return k;
  }

  static SynthRunConfig from(const KeyValues& kv) {
    kv.require_known(keys());
    SynthRunConfig c;
    auto& s = c.synth;
    s.n_subjects = static_cast<int>(kv.integer("n_subjects", s.n_subjects));
    s.n_features = static_cast<int>(kv.integer("n_features", s.n_features));
    s.n_terms = static_cast<int>(kv.integer("n_terms", s.n_terms));
    s.members_per_term = static_cast<int>(kv.integer("members_per_term", s.members_per_term));
    s.n_planted_terms = static_cast<int>(kv.integer("n_planted_terms", s.n_planted_terms));
    if (auto v = kv.get("effect_weights")) s.effect_weights = parse_real_axis("effect_weights", *v);
    const bool explicit_noise = kv.has("noise_sd");
    s.noise_sd = kv.real("noise_sd", s.noise_sd);
    if (!explicit_noise) {
      // Oracle R^2 of 0.5: noise variance equals signal variance.
      double ss = 0.0;
      for (double w : s.weights()) ss += w * w;
      if (ss > 0) s.noise_sd = std::sqrt(ss);
      else s.noise_sd = 1.0;
    }
    s.binary_overlap = kv.real("binary_overlap", s.binary_overlap);
    s.loading = kv.real("loading", s.loading);
    s.n_phenotypes = static_cast<int>(kv.integer("n_phenotypes", s.n_phenotypes));
    const auto seed = kv.integer("seed", 1);
    if (seed < 0) throw InputError("seed must be non-negative");
    s.seed = static_cast<std::uint64_t>(seed);
    c.output = kv.get_or("output", c.output);
    s.validate();
    return c;
  }
};

}  // namespace phenopred::config
