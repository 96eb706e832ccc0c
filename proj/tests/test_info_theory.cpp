#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "seed/info_theory.hpp"

using namespace seed;
using namespace seed::info;

namespace {

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

// I(Z;Y) = H(Z) + H(Y) - H(Z,Y), computed independently of the library path.
double mi_by_entropy(const JointDistribution& j) {
  return entropy(j.z_marginal()) + entropy(j.y_marginal()) - entropy(j.table);
}

JointDistribution transpose(const JointDistribution& j) {
  JointDistribution t;
  t.n_labels = j.z_values.size();
  for (std::size_t y = 0; y < j.n_labels; ++y) {
    t.z_values.push_back({static_cast<int>(y)});
    for (std::size_t z = 0; z < j.z_values.size(); ++z) t.table.push_back(j.p(z, y));
  }
  return t;
}

JointDistribution copy_label() {
  JointDistribution j;
  j.n_labels = 2;
  j.z_values = {{0}, {1}};
  j.table = {0.5, 0.0, 0.0, 0.5};
  return j;
}

JointDistribution independent() {
  JointDistribution j;
  j.n_labels = 2;
  j.z_values = {{0}, {1}, {2}};
  const double pz[3] = {0.2, 0.5, 0.3};
  for (double p : pz) {
    j.table.push_back(p * 0.5);
    j.table.push_back(p * 0.5);
  }
  return j;
}

}  // namespace

TEST(MutualInformation, Examples) {
  EXPECT_NEAR(mutual_information(independent()), 0.0, 1e-15);
  EXPECT_NEAR(mutual_information(copy_label()), 1.0, 1e-15);
  EXPECT_NEAR(mutual_information(label_copies_first_time()), 1.0, 1e-15);
}

TEST(MutualInformation, MatchesEntropyOracleAndIsSymmetric) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto j = random_joint(rng, 1 + t % 2, 2 + t % 2, 2 + t % 3);
    const double mi = mutual_information(j);
    EXPECT_GE(mi, 0.0);
    EXPECT_NEAR(mi, mi_by_entropy(j), 1e-12);
    EXPECT_NEAR(mi, mutual_information(transpose(j)), 1e-12);
  }
}

TEST(MutualInformation, InvalidDistribution) {
  auto j = copy_label();
  j.table[0] = 0.6;
  EXPECT_THROW(mutual_information(j), ContractError);
  j.table = {0.5, -0.1, 0.1, 0.5};
  EXPECT_THROW(mutual_information(j), ContractError);
  j.table = {1.0};
  EXPECT_THROW(bayes_risk(j), ContractError);
}

TEST(BayesRisk, Examples) {
  EXPECT_NEAR(bayes_risk(copy_label()), 0.0, 1e-15);
  EXPECT_NEAR(bayes_risk(independent()), 0.5, 1e-15);
  const auto added = pushforward(label_copies_first_time(), add_map());
  EXPECT_NEAR(bayes_risk(added), 0.25, 1e-15);
}

TEST(BayesRisk, BoundedByChance) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t labels = 2 + t % 3;
    const auto r = bayes_risk(random_joint(rng, 1, 3, labels));
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0 - 1.0 / static_cast<double>(labels) + 1e-12);
  }
}

TEST(Pushforward, IdentityAndMerging) {
  const auto j = label_copies_first_time();
  const auto same = pushforward(j, [](std::span<const int> z) { return Symbol(z.begin(), z.end()); });
  EXPECT_EQ(same.z_values, j.z_values);
  EXPECT_EQ(same.table, j.table);
  const auto sum = pushforward(j, add_map());
  EXPECT_EQ(sum.z_values, (std::vector<Symbol>{{0}, {1}, {2}}));
  EXPECT_EQ(sum.table, (std::vector<double>{0.25, 0.0, 0.25, 0.25, 0.0, 0.25}));
}

TEST(Fusions, LabelCopyExample) {
  const auto j = label_copies_first_time();
  const auto add = dpi_audit(j, Fusion::add);
  const auto sub = dpi_audit(j, Fusion::subtract);
  const auto cat = dpi_audit(j, Fusion::concat_reduce);
  EXPECT_NEAR(add.mi_after, 0.5, 1e-12);
  EXPECT_NEAR(sub.mi_after, 0.5, 1e-12);
  EXPECT_NEAR(add.risk_after, 0.25, 1e-12);
  for (const auto& r : {add, sub, cat}) {
    EXPECT_TRUE(r.inequality_holds);
    EXPECT_TRUE(r.strict);
  }
  const auto swap = dpi_audit(j, Fusion::permutation, ExchangeMask{{1}, ExchangeAxis::channel, 0});
  EXPECT_NEAR(swap.mi_after, 1.0, 1e-12);
  EXPECT_FALSE(swap.strict);
}

TEST(Fusions, PermutationInvarianceOverRandomJoints) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t d = 1 + t % 3;
    const auto j = random_joint(rng, d, 2, 2 + t % 2);
    ExchangeMask mask{std::vector<std::uint8_t>(d), ExchangeAxis::channel, 0};
    for (auto& e : mask.epsilon) e = static_cast<std::uint8_t>(rng() & 1U);
    const auto r = dpi_audit(j, Fusion::permutation, mask);
    EXPECT_NEAR(r.mi_after, r.mi_before, 1e-12);
    EXPECT_NEAR(r.risk_after, r.risk_before, 1e-12);
  }
}

TEST(Fusions, DataProcessingInequality) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const auto j = random_joint(rng, 1 + t % 2, 2 + t % 2, 2);
    for (auto f : {Fusion::add, Fusion::subtract, Fusion::concat_reduce})
      ASSERT_TRUE(dpi_audit(j, f).inequality_holds) << to_string(f) << " trial " << t;
  }
}

TEST(Fusions, ConcatReduceRankMustShrink) {
  const auto j = label_copies_first_time();
  EXPECT_THROW(dpi_audit(j, Fusion::concat_reduce, {}, 2), ContractError);
}
