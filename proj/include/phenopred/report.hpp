#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "phenopred/consensus.hpp"
#include "phenopred/domain_io.hpp"
#include "phenopred/error.hpp"
#include "phenopred/pipeline.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred::report {

using Eigen::Index;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Saved grid: one row per grid cell with its consolidated term coefficients.
// Numbers use the shortest round-trip form so a reload is bit-exact.

inline const std::vector<std::string>& grid_columns() {
  static const std::vector<std::string> cols = {"grid_index",   "stage",   "screen_stat", "threshold",
                                                "n_components", "family",  "phenotype",   "predictive_correlation",
                                                "degenerate_folds", "kind"};
  return cols;
}

inline void write_grid_table(const std::vector<consensus::ModelRecord>& models, const std::string& path) {
  if (models.empty()) throw InputError("no models to write");
  auto out = tsv::open_output(path);
  const auto& cols = grid_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "\t" : "") << cols[c];
  for (const auto& t : models.front().term_ids) out << '\t' << t;
  out << '\n';
  for (const auto& m : models) {
    out << m.grid_index << '\t' << pipeline::to_string(m.spec.stage) << '\t' << numerics::to_string(m.spec.screen_stat)
        << '\t' << tsv::format_real(m.spec.threshold) << '\t' << m.spec.n_components << '\t'
        << numerics::to_string(m.spec.family) << '\t' << m.spec.phenotype << '\t'
        << tsv::format_real(m.predictive_correlation) << '\t' << m.degenerate_folds << '\t'
        << annotate::to_string(m.kind);
    for (Index j = 0; j < m.term_coefs.size(); ++j) out << '\t' << tsv::format_real(m.term_coefs(j));
    out << '\n';
  }
}

inline std::vector<consensus::ModelRecord> read_grid_table(const std::string& path) {
  auto lines = tsv::read_lines(path);
  while (!lines.empty() && tsv::is_blank(lines.back())) lines.pop_back();
  if (lines.size() < 2) throw InputError(path + ": grid table has no rows");
  const auto header = tsv::split(lines[0]);
  const auto& cols = grid_columns();
  if (header.size() < cols.size() || !std::equal(cols.begin(), cols.end(), header.begin()))
    throw InputError(path + ":1: not a grid table header");
  const std::vector<std::string> terms(header.begin() + static_cast<std::ptrdiff_t>(cols.size()), header.end());

  std::vector<consensus::ModelRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = path + ":" + std::to_string(li + 1) + ": ";
    auto f = tsv::split(lines[li]);
    if (f.size() != header.size()) throw InputError(where + "wrong field count");
    consensus::ModelRecord m;
    auto gi = tsv::parse_int(f[0]);
    auto stage = pipeline::parse_stage(f[1]);
    auto thr = tsv::parse_real(f[3]);
    auto nc = tsv::parse_int(f[4]);
    auto pc = tsv::parse_real(f[7]);
    auto df = tsv::parse_int(f[8]);
    if (!gi || !stage || !thr || !nc || !pc || !df) throw InputError(where + "malformed grid row");
    if (f[2] != "pearson" && f[2] != "t_test") throw InputError(where + "unknown screen statistic '" + f[2] + "'");
    if (f[5] != "linear" && f[5] != "logistic") throw InputError(where + "unknown family '" + f[5] + "'");
    if (f[9] != "joint" && f[9] != "marginal") throw InputError(where + "unknown coefficient kind '" + f[9] + "'");
    m.grid_index = static_cast<std::size_t>(*gi);
    m.spec.stage = *stage;
    m.spec.screen_stat = f[2] == "pearson" ? numerics::ScreenStat::pearson : numerics::ScreenStat::t_test;
    m.spec.threshold = *thr;
    m.spec.n_components = static_cast<int>(*nc);
    m.spec.family = f[5] == "linear" ? numerics::Family::linear : numerics::Family::logistic;
    m.spec.phenotype = f[6];
    m.predictive_correlation = *pc;
    m.degenerate_folds = static_cast<int>(*df);
    m.kind = f[9] == "joint" ? annotate::CoefKind::joint : annotate::CoefKind::marginal;
    m.term_ids = terms;
    m.term_coefs.resize(static_cast<Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
      auto v = tsv::parse_real(f[cols.size() + j]);
      if (!v) throw InputError(where + "bad coefficient for term '" + terms[j] + "'");
      m.term_coefs(static_cast<Index>(j)) = *v;
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Per-cell summary without coefficients.
inline void write_model_summary(const std::vector<std::vector<consensus::ModelRecord>>& grids,
                                const std::string& path) {
  auto out = tsv::open_output(path);
  out << "phenotype\tstage\tgrid_index\tscreen_stat\tthreshold\tn_components\tfamily\tpredictive_correlation\t"
         "degenerate_folds\n";
  for (const auto& g : grids)
    for (const auto& m : g)
      out << m.spec.phenotype << '\t' << pipeline::to_string(m.spec.stage) << '\t' << m.grid_index << '\t'
          << numerics::to_string(m.spec.screen_stat) << '\t' << tsv::format_real(m.spec.threshold) << '\t'
          << m.spec.n_components << '\t' << numerics::to_string(m.spec.family) << '\t'
          << tsv::format_real(m.predictive_correlation) << '\t' << m.degenerate_folds << '\n';
}

// ---------------------------------------------------------------------------
// Consensus tables.

// Fixed-point text; values that round to zero print without a sign.
inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string spec_cell(const consensus::ModelRecord& m) {
  return "t=" + tsv::format_real(m.spec.threshold) + ";k=" + std::to_string(m.spec.n_components);
}

// Square coefficient-correlation matrix over Best and Alt models, then the
// model spec and predictive-correlation rows.
inline void write_coef_correlation(const consensus::ConsensusReport& rep, const std::string& path) {
  auto out = tsv::open_output(path);
  out << "model";
  for (const auto& m : rep.models) out << '\t' << m.label();
  out << '\n';
  const auto& v = rep.coef_correlation.values;
  for (std::size_t i = 0; i < rep.models.size(); ++i) {
    out << rep.models[i].label();
    for (std::size_t j = 0; j < rep.models.size(); ++j)
      out << '\t' << fixed(v(static_cast<Index>(i), static_cast<Index>(j)));
    out << '\n';
  }
  out << "spec";
  for (const auto& m : rep.models) out << '\t' << spec_cell(m.model);
  out << '\n';
  out << "predictive_correlation";
  for (const auto& m : rep.models) out << '\t' << fixed(m.model.predictive_correlation);
  out << '\n';
}

// Alt models: predictive correlation, pairwise coefficient correlation and
// top-fraction overlap counts.
inline void write_top_overlap(const consensus::ConsensusReport& rep, const std::string& path) {
  auto out = tsv::open_output(path);
  out << "# q=" << tsv::format_real(rep.q) << " terms=" << rep.term_count << " capacity=" << rep.capacity << '\n';
  out << "measure\tmodel";
  for (const auto& m : rep.alt_models) out << '\t' << m.label();
  out << '\n';
  out << "predictive_correlation\t-";
  for (const auto& m : rep.alt_models) out << '\t' << fixed(m.model.predictive_correlation);
  out << '\n';
  std::vector<consensus::ModelRecord> alts;
  for (const auto& m : rep.alt_models) alts.push_back(m.model);
  const auto corr = consensus::pairwise_model_correlation(alts);
  for (std::size_t i = 0; i < alts.size(); ++i) {
    out << "coef_correlation\t" << rep.alt_models[i].label();
    for (std::size_t j = 0; j < alts.size(); ++j)
      out << '\t' << fixed(corr.values(static_cast<Index>(i), static_cast<Index>(j)));
    out << '\n';
  }
  for (std::size_t i = 0; i < alts.size(); ++i) {
    out << "top_overlap\t" << rep.alt_models[i].label();
    for (std::size_t j = 0; j < alts.size(); ++j)
      out << '\t' << rep.top_overlap(static_cast<Index>(i), static_cast<Index>(j));
    out << '\n';
  }
}

inline void write_common_terms(const consensus::ConsensusReport& rep, const std::string& path) {
  auto out = tsv::open_output(path);
  out << "term_id\tterm_name\n";
  for (const auto& t : rep.common_terms) out << t.id << '\t' << t.name << '\n';
}

// ---------------------------------------------------------------------------

// Linear-interpolation quantile (R type 7) of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct FiveNumber {
  double min, q1, median, q3, max;
};

inline FiveNumber five_number(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5), quantile_sorted(values, 0.75),
          values.back()};
}

// Minimum / first quartile / median / third quartile / maximum per phenotype
// and label group.
inline void write_phenotype_summary(const Dataset& ds, const std::vector<std::string>& phenotypes,
                                    const std::string& path) {
  auto out = tsv::open_output(path);
  out << "phenotype\tgroup\tn\tmin\tq1\tmedian\tq3\tmax\n";
  for (const auto& name : phenotypes) {
    const auto& y = ds.phenotype(name);
    for (Label group : {Label::NF, Label::CFS}) {
      std::vector<double> v;
      for (std::size_t i = 0; i < ds.binary_labels->size(); ++i)
        if ((*ds.binary_labels)[i] == group) v.push_back(y(static_cast<Index>(i)));
      if (v.empty()) continue;
      const auto f = five_number(v);
      out << name << '\t' << to_string(group) << '\t' << v.size() << '\t' << fixed(f.min, 4) << '\t' << fixed(f.q1, 4)
          << '\t' << fixed(f.median, 4) << '\t' << fixed(f.q3, 4) << '\t' << fixed(f.max, 4) << '\n';
    }
  }
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace phenopred::report
