#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "phenopred/error.hpp"

namespace phenopred::numerics {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Columns whose sample sd falls below this are treated as constant.
inline constexpr double kConstantSd = 1e-12;

// ---------------------------------------------------------------------------
// Column standardization (sample sd, N-1 denominator).

struct Standardization {
  RowVectorXd means;
  RowVectorXd sds;
  std::vector<bool> constant;

  Index size() const { return means.size(); }

  // Applies the stored offsets/scales; constant columns map to zero.
  MatrixXd apply(const MatrixXd& m) const {
    MatrixXd out(m.rows(), m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
      if (constant[static_cast<std::size_t>(j)])
        out.col(j).setZero();
      else
        out.col(j) = (m.col(j).array() - means(j)) / sds(j);
    }
    return out;
  }
};

inline Standardization fit_standardization(const MatrixXd& m) {
  if (m.rows() < 2) throw InputError("standardization needs at least 2 rows");
  const auto n = static_cast<double>(m.rows());
  Standardization s;
  s.means = m.colwise().mean();
  s.sds.resize(m.cols());
  s.constant.assign(static_cast<std::size_t>(m.cols()), false);
  for (Index j = 0; j < m.cols(); ++j) {
    const double ss = (m.col(j).array() - s.means(j)).square().sum();
    s.sds(j) = std::sqrt(ss / (n - 1.0));
    if (!(s.sds(j) >= kConstantSd)) s.constant[static_cast<std::size_t>(j)] = true;
  }
  return s;
}

struct Standardized {
  MatrixXd matrix;
  Standardization params;
};

inline Standardized standardize_columns(const MatrixXd& m) {
  auto params = fit_standardization(m);
  auto out = params.apply(m);
  return {std::move(out), std::move(params)};
}

// ---------------------------------------------------------------------------
// PCA through the thin SVD of the centered matrix.

struct PCABasis {
  MatrixXd loadings;           // p' x k, orthonormal columns
  VectorXd singular_values;    // k values, non-increasing
  RowVectorXd column_means;    // centering offsets
  Index requested_k = 0;
  Index numerical_rank = 0;

  Index k() const { return loadings.cols(); }

  MatrixXd scores(const MatrixXd& x) const { return (x.rowwise() - column_means) * loadings; }
};

// Every numerically non-zero component, with loadings sign-fixed so the first
// non-zero entry of each column is positive.
inline PCABasis pca_full(const MatrixXd& x) {
  if (x.rows() < 2 || x.cols() < 1) throw InputError("PCA needs at least 2 rows and 1 column");
  PCABasis basis;
  basis.column_means = x.colwise().mean();
  const MatrixXd centered = x.rowwise() - basis.column_means;
  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? sv(0) * static_cast<double>(std::max(x.rows(), x.cols())) *
                                            std::numeric_limits<double>::epsilon()
                                      : 0.0;
  Index rank = 0;
  // Centering removes one degree of freedom.
  const Index max_rank = std::min(x.rows() - 1, x.cols());
  while (rank < std::min<Index>(sv.size(), max_rank) && sv(rank) > cutoff && sv(rank) > 0.0) ++rank;
  basis.numerical_rank = rank;
  basis.requested_k = rank;
  basis.singular_values = sv.head(rank);
  basis.loadings = svd.matrixV().leftCols(rank);
  for (Index j = 0; j < rank; ++j) {
    for (Index i = 0; i < basis.loadings.rows(); ++i) {
      const double v = basis.loadings(i, j);
      if (std::abs(v) > 1e-12) {
        if (v < 0) basis.loadings.col(j) = -basis.loadings.col(j);
        break;
      }
    }
  }
  return basis;
}

// Keeps the leading min(k, rank) components.
inline PCABasis truncate(const PCABasis& full, Index k) {
  if (k < 1) throw InputError("component count must be at least 1, got " + std::to_string(k));
  PCABasis b;
  const Index keep = std::min(k, full.numerical_rank);
  b.loadings = full.loadings.leftCols(keep);
  b.singular_values = full.singular_values.head(keep);
  b.column_means = full.column_means;
  b.requested_k = k;
  b.numerical_rank = full.numerical_rank;
  return b;
}

inline PCABasis pca_svd(const MatrixXd& x, Index k) {
  if (k < 1) throw InputError("component count must be at least 1, got " + std::to_string(k));
  return truncate(pca_full(x), k);
}

// ---------------------------------------------------------------------------
// Regression.

enum class Family { linear, logistic };

inline std::string to_string(Family f) { return f == Family::linear ? "linear" : "logistic"; }

struct RegressionFit {
  VectorXd coefficients;  // intercept first; dropped columns hold 0
  Family family = Family::linear;
  bool converged = true;
  bool separation = false;
  int iterations = 0;
  std::vector<Index> dropped_columns;  // design indices (0 = intercept)
  std::vector<double> loglik_trace;    // logistic only, one entry per accepted iterate

  VectorXd linear_predictor(const MatrixXd& scores) const {
    VectorXd eta = VectorXd::Constant(scores.rows(), coefficients(0));
    if (scores.cols() > 0) eta += scores * coefficients.tail(coefficients.size() - 1);
    return eta;
  }

  VectorXd predict(const MatrixXd& scores) const {
    VectorXd eta = linear_predictor(scores);
    if (family == Family::logistic) eta = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    return eta;
  }
};

inline MatrixXd design_matrix(const MatrixXd& scores) {
  MatrixXd x(scores.rows(), scores.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(scores.cols()) = scores;
  return x;
}

// Scans design columns left to right and keeps each one that is not (to
// relative tolerance `tol`) in the span of those already kept.
inline std::vector<Index> independent_columns(const MatrixXd& x, double tol) {
  std::vector<Index> kept;
  MatrixXd q(x.rows(), 0);
  for (Index c = 0; c < x.cols(); ++c) {
    const double norm = x.col(c).norm();
    if (norm == 0.0) continue;
    VectorXd r = x.col(c);
    for (int pass = 0; pass < 2 && q.cols() > 0; ++pass) r -= q * (q.transpose() * r);
    const double rn = r.norm();
    if (rn <= tol * norm) continue;
    q.conservativeResize(Eigen::NoChange, q.cols() + 1);
    q.col(q.cols() - 1) = r / rn;
    kept.push_back(c);
  }
  return kept;
}

inline std::vector<Index> complement(const std::vector<Index>& kept, Index total) {
  std::vector<Index> out;
  std::size_t j = 0;
  for (Index c = 0; c < total; ++c) {
    if (j < kept.size() && kept[j] == c)
      ++j;
    else
      out.push_back(c);
  }
  return out;
}

inline std::string describe_columns(const std::vector<Index>& cols) {
  std::string s;
  for (auto c : cols) {
    if (!s.empty()) s += ", ";
    s += c == 0 ? std::string("intercept") : "score column " + std::to_string(c);
  }
  return s;
}

struct OlsOptions {
  // Throw on rank deficiency instead of dropping dependent columns.
  bool strict = false;
  double rank_tol = 1e-10;
};

inline RegressionFit fit_ols(const MatrixXd& scores, const VectorXd& y, const OlsOptions& opts = {}) {
  const Index n = scores.rows();
  const Index k = scores.cols();
  if (y.size() != n) throw InputError("response length does not match score rows");
  if (n <= k + 1)
    throw InputError("OLS needs more rows than design columns (" + std::to_string(n) + " rows, " +
                     std::to_string(k + 1) + " columns)");
  const MatrixXd x = design_matrix(scores);
  const auto kept = independent_columns(x, opts.rank_tol);
  RegressionFit fit;
  fit.family = Family::linear;
  fit.dropped_columns = complement(kept, x.cols());
  if (!fit.dropped_columns.empty() && opts.strict)
    throw InputError("rank-deficient design: dependent " + describe_columns(fit.dropped_columns));

  MatrixXd xk(n, static_cast<Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) xk.col(static_cast<Index>(j)) = x.col(kept[j]);
  const VectorXd beta = xk.householderQr().solve(y);
  fit.coefficients = VectorXd::Zero(k + 1);
  for (std::size_t j = 0; j < kept.size(); ++j) fit.coefficients(kept[j]) = beta(static_cast<Index>(j));
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

// log(1 + exp(e)) without overflow.
inline double softplus(double e) { return e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)); }

inline double logistic_loglik(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
  const VectorXd eta = design * beta;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll;
}

inline VectorXd logistic_gradient(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
  const VectorXd eta = design * beta;
  const VectorXd p = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  return design.transpose() * (y - p);
}

struct LogisticOptions {
  int max_iter = 50;
  double tol = 1e-8;
  double separation_cap = 1e4;
  double rank_tol = 1e-10;
};

// Newton-Raphson (IRLS) with step halving, so the log-likelihood never
// decreases between accepted iterates.
inline RegressionFit fit_logistic_irls(const MatrixXd& scores, const VectorXd& y, const LogisticOptions& opts = {}) {
  const Index n = scores.rows();
  const Index k = scores.cols();
  if (y.size() != n) throw InputError("response length does not match score rows");
  Index ones = 0;
  for (Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw InputError("logistic response must be 0/1");
    if (y(i) == 1.0) ++ones;
  }
  if (ones == 0 || ones == n) throw InputError("logistic response needs both classes");

  const MatrixXd full = design_matrix(scores);
  const auto kept = independent_columns(full, opts.rank_tol);
  MatrixXd x(n, static_cast<Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) x.col(static_cast<Index>(j)) = full.col(kept[j]);

  RegressionFit fit;
  fit.family = Family::logistic;
  fit.dropped_columns = complement(kept, full.cols());
  fit.converged = false;

  VectorXd beta = VectorXd::Zero(x.cols());
  double ll = logistic_loglik(x, y, beta);
  fit.loglik_trace.push_back(ll);
  VectorXd grad = logistic_gradient(x, y, beta);

  for (int it = 0; it < opts.max_iter; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= opts.tol) break;
    const VectorXd eta = x * beta;
    VectorXd w(n);
    for (Index i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = p * (1.0 - p);
    }
    const MatrixXd h = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<MatrixXd> ldlt(h);
    if (ldlt.info() != Eigen::Success) break;
    const VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    VectorXd candidate;
    double cand_ll = ll;
    for (int halvings = 0; halvings < 40; ++halvings, t *= 0.5) {
      candidate = beta + t * step;
      cand_ll = logistic_loglik(x, y, candidate);
      if (std::isfinite(cand_ll) && cand_ll >= ll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    beta = candidate;
    ll = cand_ll;
    fit.loglik_trace.push_back(ll);
    fit.iterations = it + 1;
    grad = logistic_gradient(x, y, beta);
    if (beta.norm() > opts.separation_cap) {
      fit.separation = true;
      break;
    }
  }

  // A finite iterate that classifies every observation strictly correctly
  // means the classes are completely separable and no finite MLE exists.
  if (!fit.separation) {
    const VectorXd eta = x * beta;
    bool all_correct = true;
    for (Index i = 0; i < n && all_correct; ++i) all_correct = (y(i) == 1.0) ? eta(i) > 0.0 : eta(i) < 0.0;
    fit.separation = all_correct;
  }
  fit.converged = !fit.separation && grad.lpNorm<Eigen::Infinity>() <= opts.tol;

  fit.coefficients = VectorXd::Zero(k + 1);
  for (std::size_t j = 0; j < kept.size(); ++j) fit.coefficients(kept[j]) = beta(static_cast<Index>(j));
  return fit;
}

// ---------------------------------------------------------------------------
// Association statistics used for screening.

enum class ScreenStat { pearson, t_test };

inline std::string to_string(ScreenStat s) { return s == ScreenStat::pearson ? "pearson" : "t_test"; }

struct Association {
  double value = 0.0;
  bool degenerate = false;  // constant input; value forced to 0
};

inline Association pearson(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size()) throw InputError("pearson: length mismatch");
  if (x.size() < 3) throw InputError("pearson needs at least 3 observations");
  const double n1 = static_cast<double>(x.size()) - 1.0;
  const VectorXd xc = x.array() - x.mean();
  const VectorXd yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (!(std::sqrt(sxx / n1) >= kConstantSd) || !(std::sqrt(syy / n1) >= kConstantSd)) return {0.0, true};
  const double r = xc.dot(yc) / std::sqrt(sxx * syy);
  return {std::clamp(r, -1.0, 1.0), false};
}

// |two-sample t| with pooled variance; y must be 0/1.
inline Association pooled_t(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size()) throw InputError("t-test: length mismatch");
  double s0 = 0, s1 = 0;
  Index n0 = 0, n1 = 0;
  for (Index i = 0; i < x.size(); ++i) {
    if (y(i) == 1.0) {
      s1 += x(i);
      ++n1;
    } else if (y(i) == 0.0) {
      s0 += x(i);
      ++n0;
    } else {
      throw InputError("t-test needs a 0/1 response");
    }
  }
  if (n0 < 2 || n1 < 2) throw InputError("t-test needs at least 2 observations per class");
  const double m0 = s0 / static_cast<double>(n0);
  const double m1 = s1 / static_cast<double>(n1);
  double ss0 = 0, ss1 = 0;
  for (Index i = 0; i < x.size(); ++i) {
    if (y(i) == 1.0)
      ss1 += (x(i) - m1) * (x(i) - m1);
    else
      ss0 += (x(i) - m0) * (x(i) - m0);
  }
  const double xm = x.mean();
  const double sd_all = std::sqrt((x.array() - xm).square().sum() / static_cast<double>(x.size() - 1));
  if (!(sd_all >= kConstantSd)) return {0.0, true};
  const double pooled = (ss0 + ss1) / static_cast<double>(n0 + n1 - 2);
  if (!(pooled > 0.0)) return {0.0, true};
  const double se = std::sqrt(pooled * (1.0 / static_cast<double>(n0) + 1.0 / static_cast<double>(n1)));
  return {std::abs(m1 - m0) / se, false};
}

inline Association association_stat(const VectorXd& x, const VectorXd& y, ScreenStat stat) {
  if (x.size() < 3) throw InputError("association needs at least 3 observations");
  return stat == ScreenStat::pearson ? pearson(x, y) : pooled_t(x, y);
}

}  // namespace phenopred::numerics
