#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "phenopred/annotate.hpp"
#include "phenopred/domain_io.hpp"
#include "phenopred/error.hpp"
#include "phenopred/numerics.hpp"
#include "phenopred/tsv.hpp"

namespace phenopred::pipeline {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using numerics::Family;
using numerics::ScreenStat;

// Where term annotation enters: before screening, after screening, or only
// when interpreting the fitted feature-level model.
enum class Stage { GoStart, GoMid, GoEnd };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::GoStart: return "GoStart";
    case Stage::GoMid: return "GoMid";
    case Stage::GoEnd: return "GoEnd";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  s = tsv::trim(s);
  if (s == "GoStart") return Stage::GoStart;
  if (s == "GoMid") return Stage::GoMid;
  if (s == "GoEnd") return Stage::GoEnd;
  return std::nullopt;
}

struct ModelSpec {
  Stage stage = Stage::GoStart;
  ScreenStat screen_stat = ScreenStat::pearson;
  double threshold = 0.1;
  int n_components = 1;
  Family family = Family::linear;
  std::string phenotype;

  void validate() const {
    if (!(threshold > 0.0) || !std::isfinite(threshold))
      throw InputError("screening threshold must be positive, got " + tsv::format_real(threshold));
    if (n_components < 1) throw InputError("n_components must be at least 1");
    if (screen_stat == ScreenStat::t_test && family != Family::logistic)
      throw InputError("t-test screening requires the logistic family");
  }

  std::string describe() const {
    return to_string(stage) + "/" + numerics::to_string(screen_stat) + "/" + tsv::format_real(threshold) + "/" +
           std::to_string(n_components) + "/" + numerics::to_string(family) + "/" + phenotype;
  }
};

// ---------------------------------------------------------------------------
// Screening.

struct ScreenResult {
  std::vector<Index> selected;
  VectorXd statistics;
  Index degenerate_columns = 0;
};

// Keeps columns with |r| >= threshold (pearson) or t >= threshold (t_test).
// Constant columns never pass.
inline ScreenResult screen_features(const MatrixXd& train, const VectorXd& y_train, ScreenStat stat,
                                    double threshold) {
  ScreenResult r;
  r.statistics.resize(train.cols());
  for (Index j = 0; j < train.cols(); ++j) {
    const auto a = numerics::association_stat(train.col(j), y_train, stat);
    r.statistics(j) = a.value;
    if (a.degenerate) {
      ++r.degenerate_columns;
      continue;
    }
    if (std::abs(a.value) >= threshold) r.selected.push_back(j);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Per-fold state. Everything here is computed from training rows only; test
// rows are transformed with training parameters.

struct FoldInputs {
  std::vector<Index> train_rows;
  std::vector<Index> test_rows;
  std::shared_ptr<const numerics::Standardization> standardization;
  MatrixXd z_train;
  MatrixXd z_test;
  std::shared_ptr<const annotate::TermAggregation> all_terms;  // every universe term
  MatrixXd terms_train;
  MatrixXd terms_test;
};

inline MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) { return m(rows, Eigen::all); }
inline MatrixXd take_cols(const MatrixXd& m, const std::vector<Index>& cols) { return m(Eigen::all, cols); }
inline VectorXd take(const VectorXd& v, const std::vector<Index>& idx) { return v(idx); }

inline FoldInputs make_fold_inputs(const MatrixXd& expression, const annotate::ResolvedMapping& mapping,
                                   std::vector<Index> train_rows, std::vector<Index> test_rows) {
  FoldInputs in;
  in.train_rows = std::move(train_rows);
  in.test_rows = std::move(test_rows);
  const MatrixXd raw_train = take_rows(expression, in.train_rows);
  auto std_params = std::make_shared<numerics::Standardization>(numerics::fit_standardization(raw_train));
  in.z_train = std_params->apply(raw_train);
  in.z_test = std_params->apply(take_rows(expression, in.test_rows));
  in.standardization = std::move(std_params);
  auto plan = std::make_shared<annotate::TermAggregation>(annotate::plan_aggregation(mapping));
  in.terms_train = plan->apply(in.z_train);
  in.terms_test = plan->apply(in.z_test);
  in.all_terms = std::move(plan);
  return in;
}

// Screening + aggregation + full-rank PCA for one fold. Shared by every
// component count at the same (stage, statistic, threshold, response).
struct PreparedFold {
  Stage stage = Stage::GoStart;
  bool degenerate = false;
  std::string note;
  double train_mean = 0.0;
  VectorXd y_train;
  std::shared_ptr<const numerics::Standardization> standardization;
  std::shared_ptr<const annotate::TermAggregation> aggregation;
  std::shared_ptr<const std::vector<Index>> screened;       // columns passing the screen
  std::shared_ptr<const std::vector<Index>> model_columns;  // PCA input: universe terms, or features for GoEnd
  std::shared_ptr<const numerics::PCABasis> full_basis;
  MatrixXd scores_train;
  MatrixXd scores_test;
};

inline PreparedFold prepare_fold(const FoldInputs& in, const annotate::ResolvedMapping& mapping, Stage stage,
                                 ScreenStat stat, double threshold, const VectorXd& y_train) {
  PreparedFold p;
  p.stage = stage;
  p.y_train = y_train;
  p.train_mean = y_train.mean();
  p.standardization = in.standardization;

  MatrixXd x_train, x_test;
  std::vector<Index> model_cols;
  if (stage == Stage::GoStart) {
    auto screen = screen_features(in.terms_train, y_train, stat, threshold);
    model_cols = screen.selected;
    p.screened = std::make_shared<const std::vector<Index>>(screen.selected);
    p.aggregation = in.all_terms;
    if (!model_cols.empty()) {
      x_train = take_cols(in.terms_train, model_cols);
      x_test = take_cols(in.terms_test, model_cols);
    }
  } else {
    auto screen = screen_features(in.z_train, y_train, stat, threshold);
    p.screened = std::make_shared<const std::vector<Index>>(screen.selected);
    if (stage == Stage::GoMid) {
      std::vector<bool> keep(static_cast<std::size_t>(in.z_train.cols()), false);
      for (Index f : screen.selected) keep[static_cast<std::size_t>(f)] = true;
      auto plan = std::make_shared<annotate::TermAggregation>(annotate::plan_aggregation(mapping, &keep));
      model_cols = plan->terms;
      if (!model_cols.empty()) {
        x_train = plan->apply(in.z_train);
        x_test = plan->apply(in.z_test);
      }
      p.aggregation = std::move(plan);
    } else {
      model_cols = screen.selected;
      if (!model_cols.empty()) {
        x_train = take_cols(in.z_train, model_cols);
        x_test = take_cols(in.z_test, model_cols);
      }
    }
  }
  p.model_columns = std::make_shared<const std::vector<Index>>(std::move(model_cols));
  if (p.model_columns->empty()) {
    p.degenerate = true;
    p.note = "empty screen";
    return p;
  }
  auto basis = std::make_shared<numerics::PCABasis>(numerics::pca_full(x_train));
  if (basis->numerical_rank == 0) {
    p.degenerate = true;
    p.note = "screened block has zero rank";
    return p;
  }
  p.scores_train = basis->scores(x_train);
  p.scores_test = basis->scores(x_test);
  p.full_basis = std::move(basis);
  return p;
}

struct FoldFit {
  int fold = 0;
  Stage stage = Stage::GoStart;
  bool degenerate = false;
  std::string note;
  double train_mean = 0.0;
  Index effective_k = 0;
  std::shared_ptr<const numerics::Standardization> standardization;
  std::shared_ptr<const annotate::TermAggregation> aggregation;
  std::shared_ptr<const std::vector<Index>> screened;
  std::shared_ptr<const std::vector<Index>> model_columns;
  std::shared_ptr<const numerics::PCABasis> full_basis;
  numerics::RegressionFit regression;
  VectorXd coefficients;  // back-mapped onto model_columns: loadings * beta_pc

  // Leading effective_k components of the fold's PCA.
  numerics::PCABasis basis() const {
    if (!full_basis || effective_k < 1) return {};
    return numerics::truncate(*full_basis, effective_k);
  }

  // Predicts raw (unstandardized) expression rows.
  VectorXd predict(const MatrixXd& raw_rows) const {
    if (degenerate) return VectorXd::Constant(raw_rows.rows(), train_mean);
    const MatrixXd z = standardization->apply(raw_rows);
    MatrixXd x;
    if (stage == Stage::GoStart)
      x = take_cols(aggregation->apply(z), *model_columns);
    else if (stage == Stage::GoMid)
      x = aggregation->apply(z);
    else
      x = take_cols(z, *model_columns);
    const MatrixXd scores = (x.rowwise() - full_basis->column_means) * full_basis->loadings.leftCols(effective_k);
    return regression.predict(scores);
  }
};

// Fits one component count on a prepared fold. Returns the fit and writes
// the held-out predictions into `test_predictions`.
inline FoldFit finish_fold(const PreparedFold& p, int n_components, Family family, VectorXd& test_predictions) {
  FoldFit f;
  f.stage = p.stage;
  f.train_mean = p.train_mean;
  f.standardization = p.standardization;
  f.aggregation = p.aggregation;
  f.screened = p.screened;
  f.model_columns = p.model_columns;
  f.full_basis = p.full_basis;
  f.degenerate = p.degenerate;
  f.note = p.note;
  const Index n_test = p.scores_test.rows();
  auto fallback = [&](std::string why) {
    f.degenerate = true;
    f.note = std::move(why);
    f.effective_k = 0;
    f.coefficients = VectorXd::Zero(static_cast<Index>(p.model_columns ? p.model_columns->size() : 0));
    test_predictions = VectorXd::Constant(n_test, p.train_mean);
    return f;
  };
  if (p.degenerate) {
    test_predictions = VectorXd::Constant(test_predictions.size(), p.train_mean);
    f.coefficients = VectorXd::Zero(static_cast<Index>(p.model_columns ? p.model_columns->size() : 0));
    return f;
  }
  const Index n_train = p.scores_train.rows();
  const Index k = std::min<Index>({static_cast<Index>(n_components), p.full_basis->numerical_rank, n_train - 2});
  if (k < 1) return fallback("too few training rows for any component");
  f.effective_k = k;
  const MatrixXd s_train = p.scores_train.leftCols(k);
  try {
    f.regression = family == Family::linear ? numerics::fit_ols(s_train, p.y_train)
                                            : numerics::fit_logistic_irls(s_train, p.y_train);
  } catch (const InputError& e) {
    return fallback(e.what());
  }
  f.coefficients = p.full_basis->loadings.leftCols(k) * f.regression.coefficients.tail(k);
  test_predictions = f.regression.predict(p.scores_test.leftCols(k));
  return f;
}

// Standalone single-fold fit on `train_rows`.
inline FoldFit fit_fold(const Dataset& dataset, const TermMapping& mapping, const ModelSpec& spec,
                        const std::vector<Index>& train_rows) {
  spec.validate();
  const auto resolved = annotate::resolve(mapping, dataset.feature_ids);
  if (train_rows.size() < 3) throw InputError("fit_fold needs at least 3 training rows");
  const VectorXd y = spec.family == Family::logistic ? dataset.label_vector() : dataset.phenotype(spec.phenotype);
  auto in = make_fold_inputs(dataset.expression, resolved, train_rows, {});
  auto prep = prepare_fold(in, resolved, spec.stage, spec.screen_stat, spec.threshold, take(y, train_rows));
  VectorXd unused(0);
  return finish_fold(prep, spec.n_components, spec.family, unused);
}

// ---------------------------------------------------------------------------

struct CVResult {
  ModelSpec spec;
  std::size_t grid_index = 0;
  VectorXd oof_predictions;
  double predictive_correlation = 0.0;
  bool correlation_degenerate = false;
  int degenerate_folds = 0;
  std::vector<FoldFit> fold_fits;
  // Joint term coefficients (GoStart/GoMid), averaged over folds.
  std::optional<annotate::TermCoefficients> consolidated_term_coefs;
  // GoEnd: feature-space average, and its marginal term projection.
  std::optional<VectorXd> consolidated_feature_coefs;
  std::optional<annotate::TermCoefficients> marginal_term_coefs;
};

struct GridOptions {
  int jobs = 1;
  // Keep per-fold fits (regressions, back-mapped coefficients, shared bases).
  bool keep_fold_fits = true;
};

class CvEngine {
 public:
  CvEngine(const Dataset& dataset, annotate::ResolvedMapping mapping, FoldAssignment folds)
      : dataset_(dataset), mapping_(std::move(mapping)), folds_(std::move(folds)) {
    if (folds_.n() != static_cast<std::size_t>(dataset_.n_subjects()))
      throw InputError("fold assignment covers " + std::to_string(folds_.n()) + " subjects, dataset has " +
                       std::to_string(dataset_.n_subjects()));
    for (int f = 1; f <= folds_.k; ++f) {
      auto train = folds_.train_rows(f);
      auto test = folds_.test_rows(f);
      if (train.size() < 3 || test.empty()) continue;
      inputs_.push_back(make_fold_inputs(dataset_.expression, mapping_, std::move(train), std::move(test)));
      fold_ids_.push_back(f);
    }
    if (inputs_.size() < 2) throw InputError("fewer than 2 usable folds");
  }

  const annotate::ResolvedMapping& mapping() const { return mapping_; }
  const FoldAssignment& folds() const { return folds_; }
  const Dataset& dataset() const { return dataset_; }

  VectorXd response(const ModelSpec& spec) const {
    return spec.family == Family::logistic ? dataset_.label_vector() : dataset_.phenotype(spec.phenotype);
  }

  CVResult run(const ModelSpec& spec) const {
    spec.validate();
    auto res = run_group({&spec}, true);
    return std::move(res.front());
  }

  std::vector<CVResult> grid(const std::vector<ModelSpec>& specs, const GridOptions& opts = {}) const {
    if (specs.empty()) throw InputError("empty model grid");
    for (const auto& s : specs) s.validate();
    // Specs differing only in component count share screening and PCA.
    using Key = std::tuple<int, int, double, int, std::string>;
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      groups[{static_cast<int>(s.stage), static_cast<int>(s.screen_stat), s.threshold, static_cast<int>(s.family),
              s.phenotype}]
          .push_back(i);
    }
    std::vector<std::vector<std::size_t>> work;
    for (auto& [_, idx] : groups) work.push_back(std::move(idx));

    std::vector<std::optional<CVResult>> out(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t w = next++; w < work.size(); w = next++) {
        std::vector<const ModelSpec*> members;
        for (auto i : work[w]) members.push_back(&specs[i]);
        auto res = run_group(members, opts.keep_fold_fits);
        for (std::size_t m = 0; m < res.size(); ++m) {
          res[m].grid_index = work[w][m];
          out[work[w][m]] = std::move(res[m]);
        }
      }
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(work.size())));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    std::vector<CVResult> results;
    results.reserve(out.size());
    for (auto& r : out) results.push_back(std::move(*r));
    return results;
  }

 private:
  std::vector<CVResult> run_group(const std::vector<const ModelSpec*>& specs, bool keep_fits) const {
    const auto& head = *specs.front();
    const VectorXd y = response(head);
    const Index n = dataset_.n_subjects();
    std::vector<CVResult> results(specs.size());
    for (std::size_t m = 0; m < specs.size(); ++m) {
      results[m].spec = *specs[m];
      results[m].oof_predictions = VectorXd::Zero(n);
    }
    std::vector<std::vector<FoldFit>> fits(specs.size());
    for (std::size_t fi = 0; fi < inputs_.size(); ++fi) {
      const auto& in = inputs_[fi];
      const auto prep =
          prepare_fold(in, mapping_, head.stage, head.screen_stat, head.threshold, take(y, in.train_rows));
      for (std::size_t m = 0; m < specs.size(); ++m) {
        VectorXd pred(static_cast<Index>(in.test_rows.size()));
        auto fit = finish_fold(prep, specs[m]->n_components, specs[m]->family, pred);
        fit.fold = fold_ids_[fi];
        for (std::size_t r = 0; r < in.test_rows.size(); ++r)
          results[m].oof_predictions(in.test_rows[r]) = pred(static_cast<Index>(r));
        if (fit.degenerate) ++results[m].degenerate_folds;
        fits[m].push_back(std::move(fit));
      }
    }
    for (std::size_t m = 0; m < specs.size(); ++m) {
      auto& res = results[m];
      const auto corr = numerics::pearson(res.oof_predictions, y);
      res.predictive_correlation = corr.value;
      res.correlation_degenerate = corr.degenerate;
      consolidate(res, fits[m]);
      if (keep_fits) res.fold_fits = std::move(fits[m]);
    }
    return results;
  }

  // Per-term (or per-feature) mean of back-mapped fold coefficients; a
  // column not used in a fold contributes 0 for that fold.
  void consolidate(CVResult& res, const std::vector<FoldFit>& fits) const {
    const bool feature_space = res.spec.stage == Stage::GoEnd;
    const Index dim = feature_space ? dataset_.n_features() : static_cast<Index>(mapping_.size());
    VectorXd sum = VectorXd::Zero(dim);
    for (const auto& f : fits) {
      if (f.degenerate) continue;
      const auto& cols = *f.model_columns;
      for (std::size_t j = 0; j < cols.size(); ++j) sum(cols[j]) += f.coefficients(static_cast<Index>(j));
    }
    sum /= static_cast<double>(fits.size());
    if (feature_space) {
      res.marginal_term_coefs = annotate::project_gene_to_term_coefficients(sum, mapping_);
      res.consolidated_feature_coefs = std::move(sum);
    } else {
      annotate::TermCoefficients tc;
      tc.kind = annotate::CoefKind::joint;
      tc.term_ids = mapping_.term_ids;
      tc.coefficients = std::move(sum);
      res.consolidated_term_coefs = std::move(tc);
    }
  }

  const Dataset& dataset_;
  annotate::ResolvedMapping mapping_;
  FoldAssignment folds_;
  std::vector<FoldInputs> inputs_;
  std::vector<int> fold_ids_;
};

inline CVResult run_cv(const Dataset& dataset, const TermMapping& mapping, const ModelSpec& spec,
                       const FoldAssignment& folds) {
  CvEngine engine(dataset, annotate::resolve(mapping, dataset.feature_ids), folds);
  return engine.run(spec);
}

inline std::vector<CVResult> grid_search(const Dataset& dataset, const TermMapping& mapping,
                                         const std::vector<ModelSpec>& grid, const FoldAssignment& folds,
                                         const GridOptions& opts = {}) {
  CvEngine engine(dataset, annotate::resolve(mapping, dataset.feature_ids), folds);
  return engine.grid(grid, opts);
}

// ---------------------------------------------------------------------------
// Grid construction.

struct GridAxes {
  std::vector<double> thresholds;
  std::vector<int> components;
};

// 19 correlation cutoffs 0.05, 0.075, ..., 0.5 crossed with 1..54 components.
inline GridAxes default_axes() {
  GridAxes a;
  for (int i = 0; i <= 18; ++i) a.thresholds.push_back((50 + 25 * i) / 1000.0);
  for (int k = 1; k <= 54; ++k) a.components.push_back(k);
  return a;
}

inline std::vector<ModelSpec> make_grid(Stage stage, const std::string& phenotype, const GridAxes& axes,
                                        ScreenStat stat = ScreenStat::pearson, Family family = Family::linear) {
  std::vector<ModelSpec> grid;
  grid.reserve(axes.thresholds.size() * axes.components.size());
  for (double t : axes.thresholds)
    for (int k : axes.components) grid.push_back(ModelSpec{stage, stat, t, k, family, phenotype});
  return grid;
}

// ---------------------------------------------------------------------------
// Binary status from continuous predictions: CFS iff prediction > cutoff.

struct CutoffRule {
  enum class Kind { best_split, fixed };
  Kind kind = Kind::best_split;
  double value = 0.0;

  static CutoffRule best_split() { return {Kind::best_split, 0.0}; }
  static CutoffRule fixed(double c) { return {Kind::fixed, c}; }
};

struct ClassifyResult {
  double accuracy = 0.0;
  double cutoff = 0.0;
};

inline ClassifyResult threshold_classify(const VectorXd& predictions, const std::vector<Label>& labels,
                                         CutoffRule rule) {
  const auto n = static_cast<std::size_t>(predictions.size());
  if (labels.size() != n) throw InputError("prediction and label lengths differ");
  if (n == 0) throw InputError("no predictions to classify");
  const auto cfs = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::CFS));
  if (cfs == 0 || cfs == n) throw InputError("threshold classification needs both classes");

  auto accuracy_at = [&](double c) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
      correct += ((predictions(static_cast<Index>(i)) > c) == (labels[i] == Label::CFS)) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(n);
  };
  if (rule.kind == CutoffRule::Kind::fixed) return {accuracy_at(rule.value), rule.value};

  std::vector<double> sorted(predictions.data(), predictions.data() + predictions.size());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  // Candidates: below everything, each midpoint, at the top (nothing above).
  std::vector<double> cuts;
  cuts.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cuts.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  cuts.push_back(sorted.back());
  ClassifyResult best{-1.0, 0.0};
  for (double c : cuts) {
    const double acc = accuracy_at(c);
    if (acc > best.accuracy) best = {acc, c};
  }
  return best;
}

}  // namespace phenopred::pipeline
