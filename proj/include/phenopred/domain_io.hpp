#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "phenopred/error.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred {

enum class Label { NF = 0, CFS = 1 };

inline std::string to_string(Label l) { return l == Label::CFS ? "CFS" : "NF"; }

inline std::optional<Label> parse_label(std::string_view s) {
  s = tsv::trim(s);
  if (s == "CFS") return Label::CFS;
  if (s == "NF") return Label::NF;
  return std::nullopt;
}

// Subjects are rows, features are columns throughout the library.
struct Dataset {
  std::vector<std::string> subject_ids;
  std::vector<std::string> feature_ids;
  Eigen::MatrixXd expression;
  std::map<std::string, Eigen::VectorXd> phenotypes;
  std::optional<std::vector<Label>> binary_labels;

  Eigen::Index n_subjects() const { return expression.rows(); }
  Eigen::Index n_features() const { return expression.cols(); }

  const Eigen::VectorXd& phenotype(const std::string& name) const {
    auto it = phenotypes.find(name);
    if (it == phenotypes.end()) throw InputError("unknown phenotype '" + name + "'");
    return it->second;
  }

  // Labels as a 0/1 vector (CFS = 1).
  Eigen::VectorXd label_vector() const {
    if (!binary_labels) throw InputError("dataset has no binary labels");
    Eigen::VectorXd y(static_cast<Eigen::Index>(binary_labels->size()));
    for (std::size_t i = 0; i < binary_labels->size(); ++i)
      y(static_cast<Eigen::Index>(i)) = (*binary_labels)[i] == Label::CFS ? 1.0 : 0.0;
    return y;
  }

  void validate() const {
    const auto n = expression.rows();
    if (n < 2) throw InputError("dataset needs at least 2 subjects");
    if (expression.cols() < 1) throw InputError("dataset needs at least 1 feature");
    if (static_cast<Eigen::Index>(subject_ids.size()) != n)
      throw InputError("subject id count does not match expression rows");
    if (static_cast<Eigen::Index>(feature_ids.size()) != expression.cols())
      throw InputError("feature id count does not match expression columns");
    if (!expression.allFinite()) throw InputError("expression contains non-finite values");
    check_unique(subject_ids, "subject");
    check_unique(feature_ids, "feature");
    for (const auto& [name, v] : phenotypes) {
      if (v.size() != n) throw InputError("phenotype '" + name + "' has wrong length");
      if (!v.allFinite()) throw InputError("phenotype '" + name + "' contains non-finite values");
    }
    if (binary_labels && static_cast<Eigen::Index>(binary_labels->size()) != n)
      throw InputError("label vector has wrong length");
  }

  static void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second) throw InputError(std::string("duplicate ") + what + " id '" + id + "'");
  }
};

inline std::unordered_map<std::string, std::size_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) idx.emplace(ids[i], i);
  return idx;
}

// ---------------------------------------------------------------------------
// Expression matrix: header row holds feature ids (first cell is a corner
// label), each following row is a subject id then one value per feature.

inline Dataset load_expression_tsv(const std::string& path) {
  auto lines = tsv::read_lines(path);
  while (!lines.empty() && tsv::is_blank(lines.back())) lines.pop_back();
  if (lines.empty()) throw InputError(path + ": empty expression file");

  Dataset ds;
  auto header = tsv::split(lines[0]);
  if (header.size() < 2) throw InputError(path + ":1: header needs at least one feature column");
  ds.feature_ids.assign(header.begin() + 1, header.end());
  for (std::size_t j = 0; j < ds.feature_ids.size(); ++j) {
    if (tsv::trim(ds.feature_ids[j]).empty())
      throw InputError(path + ":1: empty feature id in column " + std::to_string(j + 2));
  }
  {
    std::unordered_set<std::string> seen;
    for (const auto& f : ds.feature_ids)
      if (!seen.insert(f).second) throw InputError(path + ":1: duplicate feature id '" + f + "'");
  }

  const auto p = static_cast<Eigen::Index>(ds.feature_ids.size());
  std::vector<double> values;
  std::unordered_set<std::string> seen_subjects;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto lineno = std::to_string(li + 1);
    if (tsv::is_blank(lines[li])) throw InputError(path + ":" + lineno + ": blank line");
    auto fields = tsv::split(lines[li]);
    if (static_cast<Eigen::Index>(fields.size()) != p + 1)
      throw InputError(path + ":" + lineno + ": expected " + std::to_string(p + 1) + " fields, got " +
                       std::to_string(fields.size()));
    const auto& sid = fields[0];
    if (tsv::trim(sid).empty()) throw InputError(path + ":" + lineno + ": empty subject id");
    if (!seen_subjects.insert(sid).second)
      throw InputError(path + ":" + lineno + ": duplicate subject id '" + sid + "'");
    ds.subject_ids.push_back(sid);
    for (Eigen::Index j = 0; j < p; ++j) {
      auto v = tsv::parse_real(fields[static_cast<std::size_t>(j) + 1]);
      if (!v)
        throw InputError(path + ":" + lineno + ": subject '" + sid + "', feature '" +
                         ds.feature_ids[static_cast<std::size_t>(j)] + "': not a finite real: '" +
                         fields[static_cast<std::size_t>(j) + 1] + "'");
      values.push_back(*v);
    }
  }
  const auto n = static_cast<Eigen::Index>(ds.subject_ids.size());
  ds.expression = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), n, p);
  ds.validate();
  return ds;
}

inline void save_expression_tsv(const Dataset& ds, const std::string& path) {
  auto out = tsv::open_output(path);
  out << "subject_id";
  for (const auto& f : ds.feature_ids) out << '\t' << f;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.expression.rows(); ++i) {
    out << ds.subject_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.expression.cols(); ++j) out << '\t' << tsv::format_real(ds.expression(i, j));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Phenotype table: header "subject_id<TAB>name1<TAB>name2...". Rows are
// matched to the dataset by subject id; every dataset subject must appear.

inline std::map<std::string, Eigen::VectorXd> load_phenotypes_tsv(const std::string& path,
                                                                   const std::vector<std::string>& subject_ids) {
  auto lines = tsv::read_lines(path);
  while (!lines.empty() && tsv::is_blank(lines.back())) lines.pop_back();
  if (lines.empty()) throw InputError(path + ": empty phenotype file");
  auto header = tsv::split(lines[0]);
  if (header.size() < 2) throw InputError(path + ":1: header needs at least one phenotype column");
  const std::vector<std::string> names(header.begin() + 1, header.end());
  Dataset::check_unique(names, "phenotype");

  const auto index = index_of(subject_ids);
  const auto n = static_cast<Eigen::Index>(subject_ids.size());
  std::vector<Eigen::VectorXd> cols(names.size(), Eigen::VectorXd::Zero(n));
  std::vector<bool> filled(subject_ids.size(), false);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto lineno = std::to_string(li + 1);
    auto fields = tsv::split(lines[li]);
    if (fields.size() != header.size())
      throw InputError(path + ":" + lineno + ": expected " + std::to_string(header.size()) + " fields");
    auto it = index.find(fields[0]);
    if (it == index.end()) throw InputError(path + ":" + lineno + ": unknown subject '" + fields[0] + "'");
    if (filled[it->second]) throw InputError(path + ":" + lineno + ": duplicate subject '" + fields[0] + "'");
    filled[it->second] = true;
    for (std::size_t c = 0; c < names.size(); ++c) {
      auto v = tsv::parse_real(fields[c + 1]);
      if (!v)
        throw InputError(path + ":" + lineno + ": phenotype '" + names[c] + "': not a finite real: '" +
                         fields[c + 1] + "'");
      cols[c](static_cast<Eigen::Index>(it->second)) = *v;
    }
  }
  for (std::size_t i = 0; i < filled.size(); ++i)
    if (!filled[i]) throw InputError(path + ": no phenotype row for subject '" + subject_ids[i] + "'");

  std::map<std::string, Eigen::VectorXd> out;
  for (std::size_t c = 0; c < names.size(); ++c) out.emplace(names[c], std::move(cols[c]));
  return out;
}

inline void save_phenotypes_tsv(const std::vector<std::string>& subject_ids,
                                const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                                const std::string& path) {
  auto out = tsv::open_output(path);
  out << "subject_id";
  for (const auto& [name, _] : columns) out << '\t' << name;
  out << '\n';
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    out << subject_ids[i];
    for (const auto& [_, v] : columns) out << '\t' << tsv::format_real(v(static_cast<Eigen::Index>(i)));
    out << '\n';
  }
}

// Labels: "subject_id<TAB>label" with label in {CFS, NF}; header row required.
inline std::vector<Label> load_labels_tsv(const std::string& path, const std::vector<std::string>& subject_ids) {
  auto lines = tsv::read_lines(path);
  while (!lines.empty() && tsv::is_blank(lines.back())) lines.pop_back();
  if (lines.empty()) throw InputError(path + ": empty label file");
  const auto index = index_of(subject_ids);
  std::vector<std::optional<Label>> labels(subject_ids.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto lineno = std::to_string(li + 1);
    auto fields = tsv::split(lines[li]);
    if (fields.size() != 2) throw InputError(path + ":" + lineno + ": expected 2 fields");
    auto it = index.find(fields[0]);
    if (it == index.end()) throw InputError(path + ":" + lineno + ": unknown subject '" + fields[0] + "'");
    auto l = parse_label(fields[1]);
    if (!l) throw InputError(path + ":" + lineno + ": label must be CFS or NF, got '" + fields[1] + "'");
    if (labels[it->second]) throw InputError(path + ":" + lineno + ": duplicate subject '" + fields[0] + "'");
    labels[it->second] = *l;
  }
  std::vector<Label> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) throw InputError(path + ": no label for subject '" + subject_ids[i] + "'");
    out.push_back(*labels[i]);
  }
  return out;
}

inline void save_labels_tsv(const std::vector<std::string>& subject_ids, const std::vector<Label>& labels,
                            const std::string& path) {
  auto out = tsv::open_output(path);
  out << "subject_id\tlabel\n";
  for (std::size_t i = 0; i < subject_ids.size(); ++i) out << subject_ids[i] << '\t' << to_string(labels[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Term -> feature association. Terms and members keep first-seen order so
// every downstream iteration is deterministic.

class TermMapping {
 public:
  struct Term {
    std::string id;
    std::vector<std::string> members;
  };

  void add(const std::string& term, const std::string& feature) {
    auto [it, inserted] = index_.try_emplace(term, terms_.size());
    if (inserted) {
      terms_.push_back(Term{term, {}});
      member_sets_.emplace_back();
    }
    if (member_sets_[it->second].insert(feature).second) terms_[it->second].members.push_back(feature);
  }

  void set_name(const std::string& term, std::string name) { names_[term] = std::move(name); }

  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }
  const std::vector<Term>& terms() const { return terms_; }
  const Term& term(std::size_t i) const { return terms_.at(i); }
  bool contains(const std::string& term) const { return index_.count(term) > 0; }
  const Term& find(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) throw InputError("unknown term '" + term + "'");
    return terms_[it->second];
  }

  std::optional<std::string> name(const std::string& term) const {
    auto it = names_.find(term);
    if (it == names_.end()) return std::nullopt;
    return it->second;
  }
  const std::map<std::string, std::string>& names() const { return names_; }

  std::vector<std::string> term_ids() const {
    std::vector<std::string> ids;
    ids.reserve(terms_.size());
    for (const auto& t : terms_) ids.push_back(t.id);
    return ids;
  }

 private:
  std::vector<Term> terms_;
  std::vector<std::unordered_set<std::string>> member_sets_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::string> names_;
};

inline TermMapping load_term_mapping_tsv(const std::string& path) {
  auto lines = tsv::read_lines(path);
  TermMapping mapping;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (tsv::is_blank(lines[li])) continue;
    auto fields = tsv::split(lines[li]);
    if (fields.size() != 2 || tsv::trim(fields[0]).empty() || tsv::trim(fields[1]).empty())
      throw InputError(path + ":" + std::to_string(li + 1) + ": expected 'term<TAB>feature', got " +
                       std::to_string(fields.size()) + " field(s)");
    mapping.add(fields[0], fields[1]);
  }
  if (mapping.empty()) throw InputError(path + ": empty term mapping");
  return mapping;
}

inline void save_term_mapping_tsv(const TermMapping& mapping, const std::string& path) {
  auto out = tsv::open_output(path);
  for (const auto& t : mapping.terms())
    for (const auto& f : t.members) out << t.id << '\t' << f << '\n';
}

// Optional human-readable names: "term<TAB>name". Names for unknown terms are kept.
inline void load_term_names_tsv(const std::string& path, TermMapping& mapping) {
  auto lines = tsv::read_lines(path);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (tsv::is_blank(lines[li])) continue;
    auto fields = tsv::split(lines[li]);
    if (fields.size() != 2)
      throw InputError(path + ":" + std::to_string(li + 1) + ": expected 'term<TAB>name'");
    mapping.set_name(fields[0], fields[1]);
  }
}

inline void save_term_names_tsv(const TermMapping& mapping, const std::string& path) {
  auto out = tsv::open_output(path);
  for (const auto& [id, name] : mapping.names()) out << id << '\t' << name << '\n';
}

struct MappingCoverage {
  // term id -> member features that are not columns of the dataset
  std::vector<std::pair<std::string, std::vector<std::string>>> missing_features;
  // terms with no member present in the dataset
  std::vector<std::string> empty_terms;
  std::size_t usable_terms = 0;

  bool complete() const { return missing_features.empty(); }
};

inline MappingCoverage check_coverage(const TermMapping& mapping, const std::vector<std::string>& feature_ids) {
  const auto index = index_of(feature_ids);
  MappingCoverage cov;
  for (const auto& t : mapping.terms()) {
    std::vector<std::string> missing;
    for (const auto& f : t.members)
      if (!index.count(f)) missing.push_back(f);
    if (missing.size() == t.members.size())
      cov.empty_terms.push_back(t.id);
    else
      ++cov.usable_terms;
    if (!missing.empty()) cov.missing_features.emplace_back(t.id, std::move(missing));
  }
  return cov;
}

// ---------------------------------------------------------------------------

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // entries in 1..k

  std::size_t n() const { return assignment.size(); }

  std::vector<Eigen::Index> test_rows(int fold) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == fold) rows.push_back(static_cast<Eigen::Index>(i));
    return rows;
  }
  std::vector<Eigen::Index> train_rows(int fold) const {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != fold) rows.push_back(static_cast<Eigen::Index>(i));
    return rows;
  }
  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int f : assignment) ++sizes[static_cast<std::size_t>(f - 1)];
    return sizes;
  }
};

// Seeded shuffle of 0..N-1, then round-robin deal into k folds.
inline FoldAssignment make_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw InputError("fold count must be at least 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > n)
    throw InputError("fold count " + std::to_string(k) + " exceeds subject count " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  folds.assignment.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) folds.assignment[order[pos]] = static_cast<int>(pos % k) + 1;
  return folds;
}

}  // namespace phenopred
