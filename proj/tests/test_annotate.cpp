#include <gtest/gtest.h>

#include "oracles.hpp"
#include "phenopred/annotate.hpp"

using namespace phenopred;
using namespace phenopred::annotate;

namespace {

Dataset small_dataset() {
  std::mt19937_64 rng(3);
  Dataset ds;
  ds.subject_ids = {"s1", "s2", "s3", "s4", "s5"};
  ds.feature_ids = {"g1", "g2", "g3", "g4"};
  ds.expression = oracle::random_matrix(5, 4, rng);
  return ds;
}

double zscore(const Dataset& ds, Index i, Index j) {
  auto col = oracle::to_vec(ds.expression.col(j));
  const double m = oracle::mean(col);
  double ss = 0;
  for (double v : col) ss += (v - m) * (v - m);
  return (col[static_cast<std::size_t>(i)] - m) / std::sqrt(ss / (col.size() - 1.0));
}

}  // namespace

TEST(Resolve, UsableAndUnusableTerms) {
  TermMapping m;
  m.add("T1", "g2");
  m.add("T1", "gZ");
  m.add("T2", "gQ");
  m.add("T3", "g1");
  auto r = resolve(m, {"g1", "g2"});
  EXPECT_EQ(r.term_ids, (std::vector<std::string>{"T1", "T3"}));
  EXPECT_EQ(r.members[0], (std::vector<Index>{1}));
  EXPECT_EQ(r.unusable_terms, (std::vector<std::string>{"T2"}));
  EXPECT_FALSE(r.coverage.complete());
}

TEST(Aggregate, MeanOfStandardizedMembers) {
  auto ds = small_dataset();
  TermMapping m;
  m.add("A", "g1");
  m.add("A", "g3");
  m.add("B", "g4");
  auto t = aggregate_term_expression(ds, m);
  ASSERT_EQ(t.term_ids, (std::vector<std::string>{"A", "B"}));
  for (Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(t.values(i, 0), 0.5 * (zscore(ds, i, 0) + zscore(ds, i, 2)), 1e-12);
    EXPECT_NEAR(t.values(i, 1), zscore(ds, i, 3), 1e-12);
  }
}

TEST(Aggregate, RestrictedSubset) {
  auto ds = small_dataset();
  TermMapping m;
  m.add("A", "g1");
  m.add("A", "g3");
  m.add("B", "g4");
  auto t = aggregate_term_expression(ds, m, std::unordered_set<std::string>{"g3"});
  ASSERT_EQ(t.term_ids, (std::vector<std::string>{"A"}));
  EXPECT_EQ(t.dropped_terms, (std::vector<std::string>{"B"}));
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(t.values(i, 0), zscore(ds, i, 2), 1e-12);
  EXPECT_THROW(aggregate_term_expression(ds, m, std::unordered_set<std::string>{"g2"}), InputError);
}

TEST(Aggregate, IdentityMappingReproducesStandardizedMatrix) {
  auto ds = small_dataset();
  TermMapping m;
  for (const auto& f : ds.feature_ids) m.add("T_" + f, f);
  auto t = aggregate_term_expression(ds, m);
  const auto z = numerics::standardize_columns(ds.expression).matrix;
  EXPECT_TRUE((t.values.array() == z.array()).all());
}

TEST(Project, MeanOfMemberCoefficients) {
  TermMapping m;
  m.add("A", "g1");
  m.add("A", "g2");
  m.add("B", "g3");
  m.add("C", "g1");
  m.add("C", "g3");
  VectorXd c(3);
  c << 1.0, 3.0, -4.0;
  auto tc = project_gene_to_term_coefficients(c, {"g1", "g2", "g3"}, m);
  EXPECT_EQ(tc.kind, CoefKind::marginal);
  EXPECT_EQ(tc.coefficients(0), 2.0);
  EXPECT_EQ(tc.coefficients(1), -4.0);
  EXPECT_EQ(tc.coefficients(2), -1.5);
  EXPECT_THROW(project_gene_to_term_coefficients(c, {"g1", "g2"}, m), InputError);
}
