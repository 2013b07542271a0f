#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "phenopred/domain_io.hpp"
#include "phenopred/error.hpp"

namespace phenopred::synthgen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SynthConfig {
  int n_subjects = 80;
  int n_features = 1000;
  int n_terms = 200;
  int members_per_term = 5;
  int n_planted_terms = 10;
  // One weight per planted term; a single value is broadcast; empty means 1.
  std::vector<double> effect_weights;
  // Default gives an oracle R^2 of 0.5 for ten unit weights.
  double noise_sd = std::sqrt(10.0);
  double binary_overlap = 0.3;
  // Member feature = loading * term latent + sqrt(1 - loading^2) * own noise.
  double loading = 0.7;
  int n_phenotypes = 2;
  std::uint64_t seed = 1;

  std::vector<double> weights() const {
    if (effect_weights.empty()) return std::vector<double>(static_cast<std::size_t>(n_planted_terms), 1.0);
    if (effect_weights.size() == 1)
      return std::vector<double>(static_cast<std::size_t>(n_planted_terms), effect_weights.front());
    return effect_weights;
  }

  void validate() const {
    if (n_subjects < 2) throw InputError("n_subjects must be at least 2");
    if (n_features < 1 || n_terms < 1 || members_per_term < 1)
      throw InputError("n_features, n_terms and members_per_term must be positive");
    if (static_cast<long long>(members_per_term) * n_terms > n_features)
      throw InputError("infeasible membership: " + std::to_string(n_terms) + " terms x " +
                       std::to_string(members_per_term) + " members exceeds " + std::to_string(n_features) +
                       " features");
    if (n_planted_terms < 0 || n_planted_terms > n_terms)
      throw InputError("n_planted_terms must be in 0..n_terms");
    if (!effect_weights.empty() && effect_weights.size() != 1 &&
        effect_weights.size() != static_cast<std::size_t>(n_planted_terms))
      throw InputError("effect_weights needs 1 or n_planted_terms values");
    if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) throw InputError("noise_sd must be positive");
    if (!(binary_overlap >= 0.0 && binary_overlap <= 1.0)) throw InputError("binary_overlap must be in [0, 1]");
    if (!(loading > 0.0 && loading <= 1.0)) throw InputError("loading must be in (0, 1]");
    if (n_phenotypes < 1) throw InputError("n_phenotypes must be at least 1");
  }
};

struct SynthBundle {
  Dataset dataset;
  TermMapping mapping;
  std::vector<std::string> planted_terms;  // sorted
  MatrixXd term_latents;                   // N x n_terms
  VectorXd signal;                         // noiseless phenotype
};

inline std::string padded(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

inline int digits(int n) { return static_cast<int>(std::to_string(std::max(n, 1)).size()); }

inline std::string phenotype_name(int r) { return "P" + std::to_string(r + 1); }

inline SynthBundle generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = cfg.n_subjects;
  const Index p = cfg.n_features;
  const Index t_count = cfg.n_terms;

  SynthBundle b;
  auto& ds = b.dataset;
  for (int i = 0; i < cfg.n_subjects; ++i) ds.subject_ids.push_back(padded("S", i + 1, digits(cfg.n_subjects)));
  for (int j = 0; j < cfg.n_features; ++j) ds.feature_ids.push_back(padded("G", j + 1, digits(cfg.n_features)));
  std::vector<std::string> term_ids;
  for (int t = 0; t < cfg.n_terms; ++t) term_ids.push_back(padded("T", t + 1, digits(cfg.n_terms)));

  // Disjoint member blocks over a shuffled feature order.
  std::vector<Index> feature_order(static_cast<std::size_t>(p));
  std::iota(feature_order.begin(), feature_order.end(), Index{0});
  std::shuffle(feature_order.begin(), feature_order.end(), rng);
  std::vector<int> term_of(static_cast<std::size_t>(p), -1);
  for (int t = 0; t < cfg.n_terms; ++t) {
    std::vector<Index> members(feature_order.begin() + t * cfg.members_per_term,
                               feature_order.begin() + (t + 1) * cfg.members_per_term);
    std::sort(members.begin(), members.end());
    for (Index f : members) {
      term_of[static_cast<std::size_t>(f)] = t;
      b.mapping.add(term_ids[static_cast<std::size_t>(t)], ds.feature_ids[static_cast<std::size_t>(f)]);
    }
    b.mapping.set_name(term_ids[static_cast<std::size_t>(t)], "synthetic function " + std::to_string(t + 1));
  }

  std::vector<Index> term_order(static_cast<std::size_t>(t_count));
  std::iota(term_order.begin(), term_order.end(), Index{0});
  std::shuffle(term_order.begin(), term_order.end(), rng);
  std::vector<Index> planted(term_order.begin(), term_order.begin() + cfg.n_planted_terms);
  std::sort(planted.begin(), planted.end());
  for (Index t : planted) b.planted_terms.push_back(term_ids[static_cast<std::size_t>(t)]);

  b.term_latents.resize(n, t_count);
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < t_count; ++t) b.term_latents(i, t) = normal(rng);

  const double own = std::sqrt(std::max(0.0, 1.0 - cfg.loading * cfg.loading));
  ds.expression.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) {
      const double e = normal(rng);
      const int t = term_of[static_cast<std::size_t>(j)];
      ds.expression(i, j) = t < 0 ? e : cfg.loading * b.term_latents(i, t) + own * e;
    }

  const auto w = cfg.weights();
  b.signal = VectorXd::Zero(n);
  for (std::size_t k = 0; k < planted.size(); ++k) b.signal += w[k] * b.term_latents.col(planted[k]);
  for (int r = 0; r < cfg.n_phenotypes; ++r) {
    VectorXd y = b.signal;
    for (Index i = 0; i < n; ++i) y(i) += cfg.noise_sd * normal(rng);
    ds.phenotypes.emplace(phenotype_name(r), std::move(y));
  }

  // Labels: the upper half of a noisy copy of the first phenotype is CFS.
  const VectorXd& y0 = ds.phenotypes.at(phenotype_name(0));
  const double mean = y0.mean();
  const double sd = std::sqrt((y0.array() - mean).square().sum() / static_cast<double>(n - 1));
  VectorXd noisy(n);
  for (Index i = 0; i < n; ++i) {
    const double s = sd > 0 ? (y0(i) - mean) / sd : 0.0;
    noisy(i) = (1.0 - cfg.binary_overlap) * s + cfg.binary_overlap * normal(rng);
  }
  std::vector<Index> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), Index{0});
  std::stable_sort(rank.begin(), rank.end(), [&](Index a, Index c) { return noisy(a) < noisy(c); });
  std::vector<Label> labels(static_cast<std::size_t>(n), Label::NF);
  for (Index pos = n - n / 2; pos < n; ++pos) labels[static_cast<std::size_t>(rank[static_cast<std::size_t>(pos)])] = Label::CFS;
  ds.binary_labels = std::move(labels);
  ds.validate();
  return b;
}

}  // namespace phenopred::synthgen
