#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phenopred/annotate.hpp"
#include "phenopred/error.hpp"
#include "phenopred/numerics.hpp"
#include "phenopred/pipeline.hpp"

namespace phenopred::consensus {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using pipeline::CVResult;
using pipeline::ModelSpec;
using pipeline::Stage;

// One phenotype definition analysed with one joint-coefficient stage.
struct Scenario {
  std::string phenotype;
  Stage stage = Stage::GoStart;

  std::string label() const { return phenotype + ":" + pipeline::to_string(stage); }
  bool operator==(const Scenario&) const = default;
};

inline Scenario make_scenario(std::string phenotype, Stage stage) {
  if (stage == Stage::GoEnd)
    throw InputError("GoEnd coefficients are marginal and cannot enter the consensus (scenario " + phenotype + ")");
  return {std::move(phenotype), stage};
}

// What the consensus layer needs from a fitted grid cell. Built from a
// CVResult or read back from a saved grid table.
struct ModelRecord {
  ModelSpec spec;
  std::size_t grid_index = 0;
  double predictive_correlation = 0.0;
  int degenerate_folds = 0;
  std::vector<std::string> term_ids;
  VectorXd term_coefs;
  annotate::CoefKind kind = annotate::CoefKind::joint;
};

inline ModelRecord to_record(const CVResult& r) {
  ModelRecord m;
  m.spec = r.spec;
  m.grid_index = r.grid_index;
  m.predictive_correlation = r.predictive_correlation;
  m.degenerate_folds = r.degenerate_folds;
  if (r.consolidated_term_coefs) {
    m.term_ids = r.consolidated_term_coefs->term_ids;
    m.term_coefs = r.consolidated_term_coefs->coefficients;
    m.kind = annotate::CoefKind::joint;
  } else if (r.marginal_term_coefs) {
    m.term_ids = r.marginal_term_coefs->term_ids;
    m.term_coefs = r.marginal_term_coefs->coefficients;
    m.kind = annotate::CoefKind::marginal;
  }
  return m;
}

inline std::vector<ModelRecord> to_records(const std::vector<CVResult>& results) {
  std::vector<ModelRecord> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(to_record(r));
  return out;
}

inline const VectorXd& joint_coefficients(const ModelRecord& m) {
  if (m.kind != annotate::CoefKind::joint)
    throw InputError("model " + m.spec.describe() + " has marginal coefficients; only joint ones are comparable");
  return m.term_coefs;
}

// ---------------------------------------------------------------------------

// Highest predictive correlation; ties go to fewer components, then the lower
// threshold, then the earlier entry.
inline std::size_t select_best(const std::vector<ModelRecord>& results) {
  if (results.empty()) throw InputError("select_best: no results");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& a = results[i];
    const auto& b = results[best];
    if (a.predictive_correlation != b.predictive_correlation) {
      if (a.predictive_correlation > b.predictive_correlation) best = i;
    } else if (a.spec.n_components != b.spec.n_components) {
      if (a.spec.n_components < b.spec.n_components) best = i;
    } else if (a.spec.threshold < b.spec.threshold) {
      best = i;
    }
  }
  return best;
}

struct CorrelationMatrix {
  MatrixXd values;
  std::vector<bool> zero_variance;  // per model
};

// Pearson correlation between full-length coefficient vectors. A constant
// vector correlates 0 with everything else (flagged); the diagonal is 1.
inline CorrelationMatrix pairwise_model_correlation(const std::vector<VectorXd>& coefs) {
  const auto m = static_cast<Index>(coefs.size());
  CorrelationMatrix out;
  out.values = MatrixXd::Identity(m, m);
  out.zero_variance.assign(coefs.size(), false);
  if (m == 0) return out;
  const Index t = coefs.front().size();
  for (const auto& c : coefs)
    if (c.size() != t) throw InputError("coefficient vectors must share one term universe");
  // r = <a,b> / sqrt(<a,a><b,b>) on centred vectors, so identical vectors give
  // exactly 1 (sqrt of a rounded square returns the original value).
  std::vector<VectorXd> centred(coefs.size());
  std::vector<double> ss(coefs.size());
  for (std::size_t i = 0; i < coefs.size(); ++i) {
    centred[i] = coefs[i].array() - coefs[i].mean();
    ss[i] = centred[i].dot(centred[i]);
    const double sd = t > 1 ? std::sqrt(ss[i] / static_cast<double>(t - 1)) : 0.0;
    if (!(sd >= numerics::kConstantSd)) out.zero_variance[i] = true;
  }
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j) {
      const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
      double r = 0.0;
      if (!out.zero_variance[a] && !out.zero_variance[b])
        r = std::clamp(centred[a].dot(centred[b]) / std::sqrt(ss[a] * ss[b]), -1.0, 1.0);
      out.values(i, j) = out.values(j, i) = r;
    }
  return out;
}

inline CorrelationMatrix pairwise_model_correlation(const std::vector<ModelRecord>& models) {
  std::vector<VectorXd> coefs;
  for (const auto& m : models) coefs.push_back(joint_coefficients(m));
  return pairwise_model_correlation(coefs);
}

// ---------------------------------------------------------------------------
// Alternate models: near-best per scenario, chosen jointly to maximise the
// mean pairwise coefficient correlation across scenarios.

enum class AltSearch { automatic, exhaustive, coordinate_ascent };

struct AltSelection {
  std::vector<std::size_t> chosen;                   // index into each scenario's results
  std::vector<std::size_t> best;                     // Best index per scenario
  std::vector<std::vector<std::size_t>> candidates;  // per scenario, ascending
  double objective = 0.0;                            // mean pairwise correlation of `chosen`
  double best_objective = 0.0;                       // same for the Best tuple
  bool exhaustive = false;
  int sweeps = 0;
};

inline constexpr double kMaxExhaustiveTuples = 1e6;

inline AltSelection select_alternate(const std::vector<std::vector<ModelRecord>>& scenarios, double delta,
                                     AltSearch mode = AltSearch::automatic) {
  if (scenarios.empty()) throw InputError("select_alternate: no scenarios");
  if (!(delta >= 0.0)) throw InputError("select_alternate: delta must be non-negative");
  const std::size_t s_count = scenarios.size();
  AltSelection sel;
  std::vector<std::vector<VectorXd>> unit(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    const auto& res = scenarios[s];
    if (res.empty()) throw InputError("select_alternate: scenario " + std::to_string(s) + " has no results");
    const auto b = select_best(res);
    sel.best.push_back(b);
    const double floor = res[b].predictive_correlation - delta;
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < res.size(); ++i)
      if (res[i].predictive_correlation >= floor) cand.push_back(i);
    if (cand.empty()) throw InputError("select_alternate: empty candidate set");
    for (auto i : cand) {
      const auto& c = joint_coefficients(res[i]);
      VectorXd u = c.array() - c.mean();
      const double norm = u.norm();
      const double sd = c.size() > 1 ? norm / std::sqrt(static_cast<double>(c.size() - 1)) : 0.0;
      unit[s].push_back(sd >= numerics::kConstantSd ? VectorXd(u / norm) : VectorXd(VectorXd::Zero(c.size())));
    }
    sel.candidates.push_back(std::move(cand));
  }

  // corr[s][t](a, b): correlation of candidate a of s with candidate b of t.
  std::vector<std::vector<MatrixXd>> corr(s_count, std::vector<MatrixXd>(s_count));
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t = s + 1; t < s_count; ++t) {
      MatrixXd m(static_cast<Index>(unit[s].size()), static_cast<Index>(unit[t].size()));
      for (std::size_t a = 0; a < unit[s].size(); ++a)
        for (std::size_t b = 0; b < unit[t].size(); ++b)
          m(static_cast<Index>(a), static_cast<Index>(b)) = unit[s][a].dot(unit[t][b]);
      corr[s][t] = m;
      corr[t][s] = m.transpose();
    }

  const double pairs = static_cast<double>(s_count * (s_count - 1) / 2);
  auto objective = [&](const std::vector<std::size_t>& pos) {
    if (s_count < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t s = 0; s < s_count; ++s)
      for (std::size_t t = s + 1; t < s_count; ++t)
        sum += corr[s][t](static_cast<Index>(pos[s]), static_cast<Index>(pos[t]));
    return sum / pairs;
  };

  std::vector<std::size_t> start(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    const auto& cand = sel.candidates[s];
    start[s] = static_cast<std::size_t>(std::find(cand.begin(), cand.end(), sel.best[s]) - cand.begin());
  }
  sel.best_objective = objective(start);

  double tuples = 1.0;
  for (const auto& c : sel.candidates) tuples *= static_cast<double>(c.size());
  const bool exhaustive =
      mode == AltSearch::exhaustive || (mode == AltSearch::automatic && tuples <= kMaxExhaustiveTuples);

  std::vector<std::size_t> pos;
  double best_val = 0.0;
  if (exhaustive) {
    sel.exhaustive = true;
    std::vector<std::size_t> cur(s_count, 0);
    pos = cur;
    best_val = objective(cur);
    while (true) {
      bool done = true;
      for (std::size_t s = s_count; s-- > 0;) {
        if (++cur[s] < sel.candidates[s].size()) {
          done = false;
          break;
        }
        cur[s] = 0;
      }
      if (done) break;
      const double v = objective(cur);
      if (v > best_val) {
        best_val = v;
        pos = cur;
      }
    }
  } else {
    pos = start;
    best_val = objective(pos);
    bool changed = true;
    while (changed) {
      changed = false;
      ++sel.sweeps;
      for (std::size_t s = 0; s < s_count; ++s) {
        // Only terms involving s change when s moves.
        auto partial = [&](std::size_t a) {
          double v = 0.0;
          for (std::size_t t = 0; t < s_count; ++t)
            if (t != s) v += corr[s][t](static_cast<Index>(a), static_cast<Index>(pos[t]));
          return v;
        };
        std::size_t arg = pos[s];
        double val = partial(arg);
        for (std::size_t a = 0; a < sel.candidates[s].size(); ++a) {
          const double v = partial(a);
          if (v > val) {
            val = v;
            arg = a;
          }
        }
        if (arg != pos[s]) {
          pos[s] = arg;
          changed = true;
        }
      }
    }
    best_val = objective(pos);
  }
  sel.objective = best_val;
  for (std::size_t s = 0; s < s_count; ++s) sel.chosen.push_back(sel.candidates[s][pos[s]]);
  return sel;
}

// ---------------------------------------------------------------------------
// Top-fraction term sets.

// floor(q * T), guarding against products like 0.29 * 100 = 28.999999999999996.
inline std::size_t top_capacity(double q, std::size_t term_count) {
  if (!(q > 0.0) || q > 1.0) throw InputError("top fraction must be in (0, 1]");
  return static_cast<std::size_t>(std::floor(q * static_cast<double>(term_count) + 1e-9));
}

// The floor(q*T) terms with the largest |coefficient|, ties by term id.
// Terms with coefficient exactly 0 are never included.
inline std::vector<std::string> top_fraction_terms(const VectorXd& coefs, const std::vector<std::string>& term_ids,
                                                   double q) {
  if (coefs.size() != static_cast<Index>(term_ids.size()))
    throw InputError("coefficient vector does not match term ids");
  const auto capacity = top_capacity(q, term_ids.size());
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < term_ids.size(); ++i)
    if (coefs(static_cast<Index>(i)) != 0.0) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(coefs(static_cast<Index>(a)));
    const double mb = std::abs(coefs(static_cast<Index>(b)));
    if (ma != mb) return ma > mb;
    return term_ids[a] < term_ids[b];
  });
  if (order.size() > capacity) order.resize(capacity);
  std::vector<std::string> out;
  for (auto i : order) out.push_back(term_ids[i]);
  return out;
}

inline std::vector<std::string> top_fraction_terms(const ModelRecord& m, double q) {
  return top_fraction_terms(joint_coefficients(m), m.term_ids, q);
}

// Counts |top_i ∩ top_j|; the diagonal is |top_i|.
inline Eigen::MatrixXi top_overlap(const std::vector<std::vector<std::string>>& tops) {
  const auto m = static_cast<Index>(tops.size());
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(m, m);
  std::vector<std::set<std::string>> sets;
  for (const auto& t : tops) sets.emplace_back(t.begin(), t.end());
  for (Index i = 0; i < m; ++i)
    for (Index j = i; j < m; ++j) {
      int c = 0;
      for (const auto& id : sets[static_cast<std::size_t>(i)]) c += sets[static_cast<std::size_t>(j)].count(id) ? 1 : 0;
      out(i, j) = out(j, i) = c;
    }
  return out;
}

struct CommonTerm {
  std::string id;
  std::string name;  // empty when unknown
};

// Terms in every model's top fraction, in term-id order.
inline std::vector<CommonTerm> common_terms(const std::vector<ModelRecord>& models, double q,
                                            const std::map<std::string, std::string>& names = {}) {
  if (models.size() < 2) throw InputError("common_terms needs at least 2 models");
  std::set<std::string> common;
  bool first = true;
  for (const auto& m : models) {
    auto top = top_fraction_terms(m, q);
    std::set<std::string> s(top.begin(), top.end());
    if (first) {
      common = std::move(s);
      first = false;
    } else {
      std::set<std::string> keep;
      std::set_intersection(common.begin(), common.end(), s.begin(), s.end(), std::inserter(keep, keep.end()));
      common = std::move(keep);
    }
  }
  std::vector<CommonTerm> out;
  for (const auto& id : common) {
    auto it = names.find(id);
    out.push_back({id, it == names.end() ? std::string() : it->second});
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class Role { Best, Alt };

inline std::string to_string(Role r) { return r == Role::Best ? "Best" : "Alt"; }

struct ReportModel {
  Scenario scenario;
  Role role = Role::Best;
  ModelRecord model;

  std::string label() const { return scenario.label() + ":" + to_string(role); }
};

struct ConsensusReport {
  double q = 0.2;
  double delta = 0.05;
  std::size_t term_count = 0;
  std::size_t capacity = 0;
  std::vector<ReportModel> models;  // Best then Alt, per scenario
  CorrelationMatrix coef_correlation;
  std::vector<ReportModel> alt_models;
  Eigen::MatrixXi top_overlap;
  std::vector<CommonTerm> common_terms;
  AltSelection selection;
};

inline ConsensusReport build_report(const std::vector<Scenario>& scenarios,
                                    const std::vector<std::vector<ModelRecord>>& results, double q, double delta,
                                    const std::map<std::string, std::string>& names = {},
                                    AltSearch mode = AltSearch::automatic) {
  if (scenarios.size() != results.size()) throw InputError("one result list per scenario is required");
  if (scenarios.empty()) throw InputError("consensus needs at least one scenario");
  for (const auto& sc : scenarios)
    if (sc.stage == Stage::GoEnd) throw InputError("GoEnd scenarios are excluded from the consensus");
  ConsensusReport rep;
  rep.q = q;
  rep.delta = delta;
  rep.selection = select_alternate(results, delta, mode);
  rep.term_count = results.front().front().term_ids.size();
  rep.capacity = top_capacity(q, rep.term_count);
  std::vector<ModelRecord> flat;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    rep.models.push_back({scenarios[s], Role::Best, results[s][rep.selection.best[s]]});
    rep.models.push_back({scenarios[s], Role::Alt, results[s][rep.selection.chosen[s]]});
    rep.alt_models.push_back(rep.models.back());
  }
  for (const auto& m : rep.models) flat.push_back(m.model);
  rep.coef_correlation = pairwise_model_correlation(flat);

  std::vector<std::vector<std::string>> tops;
  std::vector<ModelRecord> alts;
  for (const auto& m : rep.alt_models) {
    tops.push_back(top_fraction_terms(m.model, q));
    alts.push_back(m.model);
  }
  rep.top_overlap = top_overlap(tops);
  if (alts.size() >= 2) {
    rep.common_terms = common_terms(alts, q, names);
  } else {
    for (const auto& id : tops.front()) {
      auto it = names.find(id);
      rep.common_terms.push_back({id, it == names.end() ? std::string() : it->second});
    }
    std::sort(rep.common_terms.begin(), rep.common_terms.end(),
              [](const CommonTerm& a, const CommonTerm& b) { return a.id < b.id; });
  }
  return rep;
}

}  // namespace phenopred::consensus
