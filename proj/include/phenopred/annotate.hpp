#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "phenopred/domain_io.hpp"
#include "phenopred/error.hpp"
#include "phenopred/numerics.hpp"

namespace phenopred::annotate {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// A mapping bound to a dataset's feature order. Only terms with at least one
// member present in the dataset form the term universe; the rest are listed
// in `unusable_terms`, and absent member features in `coverage`.
struct ResolvedMapping {
  std::vector<std::string> term_ids;
  std::vector<std::vector<Index>> members;  // dataset column indices, mapping order
  std::vector<std::string> unusable_terms;
  MappingCoverage coverage;
  std::map<std::string, std::string> term_names;

  std::size_t size() const { return term_ids.size(); }
};

inline ResolvedMapping resolve(const TermMapping& mapping, const std::vector<std::string>& feature_ids) {
  const auto index = index_of(feature_ids);
  ResolvedMapping r;
  r.coverage = check_coverage(mapping, feature_ids);
  r.term_names = mapping.names();
  for (const auto& t : mapping.terms()) {
    std::vector<Index> cols;
    for (const auto& f : t.members) {
      auto it = index.find(f);
      if (it != index.end()) cols.push_back(static_cast<Index>(it->second));
    }
    if (cols.empty()) {
      r.unusable_terms.push_back(t.id);
      continue;
    }
    r.term_ids.push_back(t.id);
    r.members.push_back(std::move(cols));
  }
  return r;
}

// Which columns of a standardized feature matrix feed each term column.
struct TermAggregation {
  std::vector<Index> terms;                 // indices into the term universe
  std::vector<std::vector<Index>> members;  // per kept term
  std::vector<Index> dropped_terms;         // universe terms with no surviving member

  Index size() const { return static_cast<Index>(terms.size()); }

  // Term column = mean of its member columns.
  MatrixXd apply(const MatrixXd& standardized) const {
    MatrixXd out(standardized.rows(), size());
    for (std::size_t t = 0; t < terms.size(); ++t) {
      auto col = out.col(static_cast<Index>(t));
      col.setZero();
      for (Index f : members[t]) col += standardized.col(f);
      col /= static_cast<double>(members[t].size());
    }
    return out;
  }
};

// `keep_feature`, when given, restricts membership to flagged features.
inline TermAggregation plan_aggregation(const ResolvedMapping& mapping,
                                        const std::vector<bool>* keep_feature = nullptr) {
  TermAggregation plan;
  for (std::size_t t = 0; t < mapping.members.size(); ++t) {
    std::vector<Index> cols;
    for (Index f : mapping.members[t])
      if (!keep_feature || (*keep_feature)[static_cast<std::size_t>(f)]) cols.push_back(f);
    if (cols.empty()) {
      plan.dropped_terms.push_back(static_cast<Index>(t));
      continue;
    }
    plan.terms.push_back(static_cast<Index>(t));
    plan.members.push_back(std::move(cols));
  }
  return plan;
}

struct TermExpressionMatrix {
  std::vector<std::string> subject_ids;
  std::vector<std::string> term_ids;
  MatrixXd values;  // N x T
  std::vector<std::string> dropped_terms;
};

// Standardizes every feature over all subjects, then averages member columns
// per term. With `member_subset`, only listed features count as members.
inline TermExpressionMatrix aggregate_term_expression(
    const Dataset& dataset, const TermMapping& mapping,
    const std::optional<std::unordered_set<std::string>>& member_subset = std::nullopt) {
  const auto resolved = resolve(mapping, dataset.feature_ids);
  std::vector<bool> keep;
  if (member_subset) {
    keep.assign(dataset.feature_ids.size(), false);
    for (std::size_t j = 0; j < dataset.feature_ids.size(); ++j)
      keep[j] = member_subset->count(dataset.feature_ids[j]) > 0;
  }
  const auto plan = plan_aggregation(resolved, member_subset ? &keep : nullptr);
  TermExpressionMatrix out;
  out.subject_ids = dataset.subject_ids;
  out.dropped_terms = resolved.unusable_terms;
  for (Index t : plan.dropped_terms) out.dropped_terms.push_back(resolved.term_ids[static_cast<std::size_t>(t)]);
  if (plan.size() == 0) throw InputError("no term has a member feature after restriction");
  for (Index t : plan.terms) out.term_ids.push_back(resolved.term_ids[static_cast<std::size_t>(t)]);
  const auto z = numerics::standardize_columns(dataset.expression);
  out.values = plan.apply(z.matrix);
  return out;
}

enum class CoefKind { joint, marginal };

inline std::string to_string(CoefKind k) { return k == CoefKind::joint ? "joint" : "marginal"; }

struct TermCoefficients {
  std::vector<std::string> term_ids;
  VectorXd coefficients;
  CoefKind kind = CoefKind::joint;
};

// Marginal term coefficient = mean of member feature coefficients.
inline TermCoefficients project_gene_to_term_coefficients(const VectorXd& feature_coefs,
                                                          const ResolvedMapping& mapping) {
  TermCoefficients out;
  out.kind = CoefKind::marginal;
  out.term_ids = mapping.term_ids;
  out.coefficients.resize(static_cast<Index>(mapping.size()));
  for (std::size_t t = 0; t < mapping.size(); ++t) {
    double sum = 0.0;
    for (Index f : mapping.members[t]) {
      if (f >= feature_coefs.size())
        throw InputError("term '" + mapping.term_ids[t] + "' refers past the feature coefficient vector");
      sum += feature_coefs(f);
    }
    out.coefficients(static_cast<Index>(t)) = sum / static_cast<double>(mapping.members[t].size());
  }
  return out;
}

inline TermCoefficients project_gene_to_term_coefficients(const VectorXd& feature_coefs,
                                                          const std::vector<std::string>& feature_ids,
                                                          const TermMapping& mapping) {
  if (feature_coefs.size() != static_cast<Index>(feature_ids.size()))
    throw InputError("feature coefficient vector does not match feature ids");
  auto resolved = resolve(mapping, feature_ids);
  if (!resolved.unusable_terms.empty())
    throw InputError("term '" + resolved.unusable_terms.front() + "' has no member in the feature coefficients");
  return project_gene_to_term_coefficients(feature_coefs, resolved);
}

}  // namespace phenopred::annotate
