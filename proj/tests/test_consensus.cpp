#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "phenopred/consensus.hpp"

using namespace phenopred;
using namespace phenopred::consensus;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("T" + std::to_string(100 + i));
  return out;
}

ModelRecord record(const VectorXd& coefs, double pc, int k = 1, double t = 0.1, std::size_t idx = 0) {
  ModelRecord m;
  m.spec = {Stage::GoStart, numerics::ScreenStat::pearson, t, k, numerics::Family::linear, "P"};
  m.grid_index = idx;
  m.predictive_correlation = pc;
  m.term_ids = ids(static_cast<std::size_t>(coefs.size()));
  m.term_coefs = coefs;
  return m;
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::vector<std::vector<ModelRecord>> random_instance(std::mt19937_64& rng, std::size_t scenarios,
                                                      std::size_t candidates, Index dim) {
  std::vector<std::vector<ModelRecord>> s(scenarios);
  for (auto& list : s)
    for (std::size_t c = 0; c < candidates; ++c)
      list.push_back(record(oracle::random_vector(dim, rng), 0.5 - 0.001 * static_cast<double>(c), 1, 0.1, c));
  return s;
}

}  // namespace

TEST(SelectBest, Examples) {
  EXPECT_EQ(select_best({record(vec({1, 2}), 0.3)}), 0u);
  EXPECT_EQ(select_best({record(vec({1, 2}), 0.2), record(vec({1, 2}), 0.39), record(vec({1, 2}), 0.1)}), 1u);
  EXPECT_EQ(select_best({record(vec({1, 2}), 0.4, 5), record(vec({1, 2}), 0.4, 2)}), 1u);
  EXPECT_EQ(select_best({record(vec({1, 2}), 0.4, 2, 0.3), record(vec({1, 2}), 0.4, 2, 0.1)}), 1u);
}

TEST(Correlation, SelfNegationAndHandOracle) {
  std::vector<VectorXd> v = {vec({1, 2, 3, 4}), vec({-1, -2, -3, -4}), vec({2, 0, 1, 5}), vec({0.5, 0.5, 0.5, 0.5})};
  auto c = pairwise_model_correlation(v);
  EXPECT_EQ(c.values(0, 0), 1.0);
  EXPECT_EQ(c.values(0, 1), -1.0);
  EXPECT_NEAR(c.values(0, 2), oracle::pearson({1, 2, 3, 4}, {2, 0, 1, 5}), 1e-12);
  EXPECT_NEAR(c.values(1, 2), oracle::pearson({-1, -2, -3, -4}, {2, 0, 1, 5}), 1e-12);
  EXPECT_EQ(c.values(0, 3), 0.0);
  EXPECT_TRUE(c.zero_variance[3]);
  EXPECT_FALSE(c.zero_variance[0]);
  EXPECT_EQ(c.values, c.values.transpose());
}

TEST(Correlation, DuplicatesAreExactlyOne) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 500; ++rep) {
    const VectorXd v = oracle::random_vector(2 + static_cast<Index>(rng() % 900), rng) * std::exp(static_cast<double>(rng() % 20) - 10.0);
    auto c = pairwise_model_correlation(std::vector<VectorXd>{v, v, VectorXd(-v)});
    ASSERT_EQ(c.values(0, 1), 1.0);
    ASSERT_EQ(c.values(0, 2), -1.0);
  }
}

TEST(Correlation, MarginalCoefficientsRejected) {
  auto m = record(vec({1, 2, 3}), 0.1);
  m.kind = annotate::CoefKind::marginal;
  EXPECT_THROW(pairwise_model_correlation(std::vector<ModelRecord>{m, m}), InputError);
}

TEST(TopFraction, CapacityAndRanking) {
  EXPECT_EQ(top_capacity(0.2, 781), 156u);
  EXPECT_EQ(top_capacity(0.29, 100), 29u);
  EXPECT_EQ(top_fraction_terms(VectorXd::Zero(10), ids(10), 0.5).size(), 0u);
  EXPECT_EQ(top_fraction_terms(vec({3, -2, 1, 0}), {"a", "b", "c", "d"}, 0.5),
            (std::vector<std::string>{"a", "b"}));
  // Zero coefficients never fill the capacity.
  EXPECT_EQ(top_fraction_terms(vec({0, 5, 0, 0}), {"a", "b", "c", "d"}, 1.0), (std::vector<std::string>{"b"}));
  // Ties at the boundary go to the lower term id.
  auto t = top_fraction_terms(vec({1, 2, 1, 1}), {"d", "a", "b", "c"}, 0.5);
  std::sort(t.begin(), t.end());
  EXPECT_EQ(t, (std::vector<std::string>{"a", "b"}));
  EXPECT_THROW(top_fraction_terms(vec({1}), {"a"}, 0.0), InputError);
}

TEST(TopFraction, ScaleInvariant) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd c = oracle::random_vector(50, rng);
    auto a = top_fraction_terms(c, ids(50), 0.2);
    auto b = top_fraction_terms(VectorXd(c * 3.7), ids(50), 0.2);
    EXPECT_EQ(a, b);
  }
}

TEST(CommonTerms, IdenticalAndDisjoint) {
  auto a = record(vec({5, 4, 0, 0, 1, 0}), 0.2);
  auto ct = common_terms({a, a, a}, 0.5);
  ASSERT_EQ(ct.size(), 3u);
  EXPECT_EQ(ct[0].id, "T100");
  EXPECT_EQ(ct[1].id, "T101");
  EXPECT_EQ(ct[2].id, "T104");
  auto b = record(vec({0, 0, 3, 3, 0, 2}), 0.2);
  EXPECT_TRUE(common_terms({a, b}, 0.5).empty());
}

TEST(CommonTerms, NamesAttached) {
  auto a = record(vec({5, 0, 0, 0}), 0.2);
  auto ct = common_terms({a, a}, 0.25, {{"T100", "fatigue response"}});
  ASSERT_EQ(ct.size(), 1u);
  EXPECT_EQ(ct[0].name, "fatigue response");
}

TEST(CommonTerms, AddingAModelNeverEnlarges) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<ModelRecord> models;
    std::size_t prev = 1000;
    for (int m = 0; m < 5; ++m) {
      models.push_back(record(oracle::random_vector(40, rng), 0.1));
      if (models.size() < 2) continue;
      const auto n = common_terms(models, 0.4).size();
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(SelectAlternate, ZeroDeltaCollapsesToBest) {
  std::mt19937_64 rng(5);
  auto inst = random_instance(rng, 3, 4, 12);
  auto sel = select_alternate(inst, 0.0);
  EXPECT_EQ(sel.chosen, sel.best);
  EXPECT_EQ(sel.objective, sel.best_objective);
}

TEST(SelectAlternate, PlantedDuplicateChosen) {
  std::mt19937_64 rng(6);
  auto inst = random_instance(rng, 2, 4, 12);
  const VectorXd shared = oracle::random_vector(12, rng);
  inst[0][2].term_coefs = shared;
  inst[1][3].term_coefs = 2.0 * shared;
  // A single coordinate move from the Best tuple cannot reach the pair, so
  // only the exhaustive path is held to this.
  for (auto mode : {AltSearch::automatic, AltSearch::exhaustive}) {
    auto sel = select_alternate(inst, 0.01, mode);
    EXPECT_EQ(sel.chosen, (std::vector<std::size_t>{2, 3}));
    EXPECT_NEAR(sel.objective, 1.0, 1e-12);
  }
}

TEST(SelectAlternate, AscentNeverWorseThanBestTuple) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    auto inst = random_instance(rng, 4, 6, 10);
    auto sel = select_alternate(inst, 0.1, AltSearch::coordinate_ascent);
    EXPECT_GE(sel.objective, sel.best_objective - 1e-15);
  }
}

TEST(SelectAlternate, CandidatesWithinDelta) {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng, 2, 5, 8);
  inst[0][4].predictive_correlation = 0.1;
  auto sel = select_alternate(inst, 0.0025);
  EXPECT_EQ(sel.candidates[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_alternate({}, 0.1), InputError);
  EXPECT_THROW(select_alternate(inst, -1.0), InputError);
}

// Coordinate ascent against the exhaustive oracle on a planted toy instance:
// each scenario's candidates are noisy versions of one of four shared
// directions, so a consistent tuple exists.
TEST(SelectAlternate, AscentMatchesExhaustiveOnPlantedToy) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<VectorXd> dirs;
  for (int d = 0; d < 4; ++d) dirs.push_back(oracle::random_vector(20, rng));
  std::vector<std::vector<ModelRecord>> inst(3);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 4; ++c)
      inst[s].push_back(record(dirs[c] + 0.3 * oracle::random_vector(20, rng), 0.5 - 0.001 * c, 1, 0.1, c));
  auto ex = select_alternate(inst, 0.1, AltSearch::exhaustive);
  auto ca = select_alternate(inst, 0.1, AltSearch::coordinate_ascent);
  EXPECT_TRUE(ex.exhaustive);
  EXPECT_FALSE(ca.exhaustive);
  EXPECT_EQ(ex.chosen, ca.chosen);
  EXPECT_NEAR(ex.objective, ca.objective, 1e-12);
}

TEST(Report, Invariants) {
  std::mt19937_64 rng(10);
  std::vector<Scenario> sc = {make_scenario("A", Stage::GoStart), make_scenario("A", Stage::GoMid),
                              make_scenario("B", Stage::GoStart)};
  auto inst = random_instance(rng, 3, 5, 30);
  auto rep = build_report(sc, inst, 0.2, 0.003);
  ASSERT_EQ(rep.models.size(), 6u);
  ASSERT_EQ(rep.alt_models.size(), 3u);
  EXPECT_EQ(rep.capacity, 6u);
  const auto& c = rep.coef_correlation.values;
  for (Index i = 0; i < c.rows(); ++i) {
    EXPECT_NEAR(c(i, i), 1.0, 1e-12);
    for (Index j = 0; j < c.cols(); ++j) {
      EXPECT_EQ(c(i, j), c(j, i));
      EXPECT_LE(std::abs(c(i, j)), 1.0);
    }
  }
  for (Index i = 0; i < rep.top_overlap.rows(); ++i)
    for (Index j = 0; j < rep.top_overlap.cols(); ++j)
      EXPECT_LE(static_cast<std::size_t>(rep.top_overlap(i, j)), rep.capacity);
  EXPECT_GE(rep.selection.objective, rep.selection.best_objective - 1e-15);
  EXPECT_EQ(rep.models[0].label(), "A:GoStart:Best");
  EXPECT_EQ(rep.models[1].label(), "A:GoStart:Alt");
}

TEST(Report, DuplicatedModel) {
  std::mt19937_64 rng(11);
  auto m = record(oracle::random_vector(781, rng), 0.3);
  auto rep = build_report({make_scenario("A", Stage::GoStart), make_scenario("B", Stage::GoMid)}, {{m}, {m}}, 0.2,
                          0.05);
  EXPECT_EQ(rep.capacity, 156u);
  EXPECT_EQ(rep.coef_correlation.values(1, 3), 1.0);
  EXPECT_EQ(rep.top_overlap(0, 1), 156);
  EXPECT_EQ(rep.common_terms.size(), 156u);
}

TEST(Report, GoEndExcluded) {
  EXPECT_THROW(make_scenario("A", Stage::GoEnd), InputError);
}
