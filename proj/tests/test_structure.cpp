#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "abda/structure.hpp"
#include "expect_code.hpp"
#include "support.hpp"

using namespace abda;

namespace {

Dataset pairs(std::size_t n, bool dependent, Rng& rng) {
  Dataset data({"a", "b"}, {MetaType::Continuous, MetaType::Continuous}, n);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z(rng);
    data.set(i, 0, a);
    data.set(i, 1, dependent ? std::sin(2.0 * a) + 0.1 * z(rng) : z(rng));
  }
  return data;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(Copula, AverageRanksAndMissing) {
  const std::vector<double> col{3.0, 1.0, 2.0, 2.0, 9.0};
  const std::vector<std::uint8_t> obs{1, 1, 1, 1, 0};
  const auto u = copula_transform(col, obs);
  EXPECT_DOUBLE_EQ(u[1], 0.25);
  EXPECT_DOUBLE_EQ(u[2], u[3]);
  EXPECT_DOUBLE_EQ(u[2], 0.625);
  EXPECT_DOUBLE_EQ(u[0], 1.0);
  EXPECT_DOUBLE_EQ(u[4], 0.5);
}

TEST(Rdc, SeparatesDependentFromIndependent) {
  Rng rng(1);
  StructureConfig cfg;
  const auto dep = pairs(1000, true, rng);
  const auto ind = pairs(1000, false, rng);
  const auto c0 = dep.observed_column(0);
  const auto c1 = dep.observed_column(1);
  const auto i0 = ind.observed_column(0);
  const auto i1 = ind.observed_column(1);
  const double r_dep = rdc(c0, c1, {}, cfg, rng);
  const double r_ind = rdc(i0, i1, {}, cfg, rng);
  EXPECT_GT(r_dep, 0.8);
  EXPECT_LT(r_ind, 0.3);
  EXPECT_GE(r_ind, 0.0);
}

TEST(Rdc, InvariantToMonotoneTransform) {
  Rng rng(2);
  StructureConfig cfg;
  const auto dep = pairs(500, true, rng);
  auto a = dep.observed_column(0);
  const auto b = dep.observed_column(1);
  auto expa = a;
  for (double& x : expa) x = std::exp(x);
  Rng r1(7);
  Rng r2(7);
  EXPECT_NEAR(rdc(a, b, {}, cfg, r1), rdc(expa, b, {}, cfg, r2), 1e-9);
}

TEST(Rdc, TooFewRowsGivesZero) {
  Rng rng(3);
  StructureConfig cfg;
  const std::vector<double> a{1, 2, 3};
  EXPECT_EQ(rdc(a, a, {}, cfg, rng), 0.0);
}

TEST(SplitColumns, GroupsDependentFeatures) {
  Rng rng(4);
  Dataset data({"a", "b", "c"}, {MetaType::Continuous, MetaType::Continuous, MetaType::Continuous}, 800);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < 800; ++i) {
    const double a = z(rng);
    data.set(i, 0, a);
    data.set(i, 1, a * a + 0.05 * z(rng));
    data.set(i, 2, z(rng));
  }
  StructureConfig cfg;
  const auto groups = split_columns(data, Slice{iota_vec(800), {0, 1, 2}}, cfg, rng);
  ASSERT_EQ(groups.size(), 2u);
  std::set<std::vector<std::size_t>> got(groups.begin(), groups.end());
  EXPECT_TRUE(got.count({0, 1}));
  EXPECT_TRUE(got.count({2}));
}

TEST(ClusterRows, RecoversTwoClusters) {
  Rng rng(5);
  const auto data = fixture::two_clusters(400, 3, rng);
  StructureConfig cfg;
  const auto split = cluster_rows(data, Slice{iota_vec(400), {0, 1, 2}}, cfg, rng);
  ASSERT_TRUE(split.has_value());
  const auto& a = split->first;
  ASSERT_FALSE(a.empty());
  const std::size_t parity = a[0] % 2;
  for (std::size_t r : a) EXPECT_EQ(r % 2, parity);
  EXPECT_EQ(a.size() + split->second.size(), 400u);
}

TEST(LearnStructure, IndependentColumnsFactorize) {
  Rng rng(6);
  Dataset data({"a", "b", "c"}, {MetaType::Continuous, MetaType::Continuous, MetaType::Discrete}, 600);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < 600; ++i) {
    data.set(i, 0, z(rng));
    data.set(i, 1, z(rng));
    data.set(i, 2, static_cast<double>(rng() % 4));
  }
  StructureConfig cfg;
  const auto learned = learn_structure(data, cfg);
  EXPECT_TRUE(learned.spn.validate().ok());
  EXPECT_TRUE(learned.spn.is_product(learned.spn.root()));
  EXPECT_EQ(learned.spn.num_sums(), 0u);
}

TEST(LearnStructure, ClusteredDataGetsSums) {
  Rng rng(7);
  const auto data = fixture::two_clusters(600, 4, rng);
  StructureConfig cfg;
  cfg.seed = 3;
  const auto learned = learn_structure(data, cfg);
  ASSERT_TRUE(learned.spn.validate().ok());
  EXPECT_GT(learned.spn.num_sums(), 0u);
  ASSERT_EQ(learned.weights.log_weights.size(), learned.spn.num_sums());
  for (std::size_t s = 0; s < learned.spn.num_sums(); ++s) {
    const auto& w = learned.weights.log_weights[s];
    EXPECT_NEAR(std::exp(w[0]) + std::exp(w[1]), 1.0, 1e-12);
    // sum weights are the fractions of the parent's rows
    const NodeId id = learned.spn.sum_node(s);
    const auto& ch = std::get<SumNode>(learned.spn.node(id)).children;
    const double n = static_cast<double>(learned.node_rows[id.value].size());
    EXPECT_NEAR(std::exp(w[0]), learned.node_rows[ch[0].value].size() / n, 1e-12);
  }
  EXPECT_EQ(learned.node_rows[learned.spn.root().value].size(), 600u);
}

TEST(LearnStructure, LeavesRespectMinimumSlice) {
  Rng rng(8);
  const auto data = fixture::two_clusters(500, 3, rng);
  StructureConfig cfg;
  cfg.min_instances_fraction = 0.2;
  cfg.rdc_threshold = 0.1;
  const auto learned = learn_structure(data, cfg);
  ASSERT_TRUE(learned.spn.validate().ok());
  // every inner node that was split held at least m*N rows
  for (std::size_t i = 0; i < learned.spn.size(); ++i) {
    const NodeId id{static_cast<std::uint32_t>(i)};
    if (learned.spn.is_sum(id)) EXPECT_GE(learned.node_rows[i].size(), 100u);
  }
}

TEST(LearnStructure, DeterministicForSeed) {
  Rng rng(9);
  const auto data = fixture::two_clusters(300, 3, rng);
  StructureConfig cfg;
  cfg.seed = 11;
  const auto a = learn_structure(data, cfg);
  const auto b = learn_structure(data, cfg);
  ASSERT_EQ(a.spn.size(), b.spn.size());
  EXPECT_EQ(a.node_rows, b.node_rows);
}

TEST(LearnStructure, RejectsBadConfig) {
  Rng rng(10);
  const auto data = fixture::two_clusters(50, 2, rng);
  StructureConfig cfg;
  cfg.rdc_threshold = 1.5;
  EXPECT_CODE(learn_structure(data, cfg), ErrorCode::InvalidArgument);
  cfg = {};
  cfg.min_instances_fraction = 0.0;
  EXPECT_CODE(learn_structure(data, cfg), ErrorCode::InvalidArgument);
}
