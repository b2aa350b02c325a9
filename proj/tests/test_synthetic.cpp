#include <gtest/gtest.h>

#include <map>
#include <set>

#include "abda/synthetic.hpp"
#include "expect_code.hpp"
#include "support.hpp"

using namespace abda;

TEST(Generate, ShapesAndTypes) {
  SynthConfig cfg;
  cfg.rows = 500;
  cfg.features = 5;
  cfg.seed = 1;
  const auto s = generate(cfg);
  EXPECT_EQ(s.data.rows(), 500u);
  EXPECT_EQ(s.data.cols(), 5u);
  EXPECT_TRUE(s.truth.spn.validate().ok());
  ASSERT_EQ(s.truth.types.size(), 5u);
  for (std::size_t d = 0; d < 5; ++d) {
    const bool continuous = s.data.meta(d) == MetaType::Continuous;
    const StatType t = s.truth.types[d];
    EXPECT_EQ(continuous, t == StatType::Real || t == StatType::Pos);
    double total = 0.0;
    for (std::size_t k = 0; k < kNumKinds; ++k) {
      total += s.truth.kind_weights[d][k];
      if (s.truth.kind_weights[d][k] > 0) EXPECT_EQ(stat_type_of(static_cast<Kind>(k)), t);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const auto tv = s.truth.type_vector(d);
    EXPECT_EQ(tv[static_cast<std::size_t>(t)], 1.0);
  }
  EXPECT_EQ(s.data.provenance.size(), 1u);
}

TEST(Generate, ValuesInSupportOfTheirType) {
  SynthConfig cfg;
  cfg.rows = 800;
  cfg.seed = 2;
  const auto s = generate(cfg);
  for (std::size_t d = 0; d < s.data.cols(); ++d) {
    for (std::size_t n = 0; n < s.data.rows(); ++n) {
      const double x = s.data.value(n, d);
      switch (s.truth.types[d]) {
        case StatType::Pos: EXPECT_GE(x, 0.0); break;
        case StatType::Num: EXPECT_TRUE(is_integral(x) && x >= 0); break;
        case StatType::Nom: EXPECT_TRUE(is_integral(x) && x >= 0 && x < 15); break;
        default: break;
      }
    }
  }
}

TEST(Generate, TruthExplainsItsData) {
  SynthConfig cfg;
  cfg.rows = 600;
  cfg.seed = 3;
  const auto s = generate(cfg);
  EXPECT_TRUE(std::isfinite(mean_loglik(s.truth.spn, s.truth.params, s.data)));
  for (const auto& lw : s.truth.params.sums.log_weights) {
    EXPECT_NEAR(std::exp(lw[0]) + std::exp(lw[1]), 1.0, 1e-12);
  }
}

TEST(Generate, PartitionLabelsFollowSumChoices) {
  SynthConfig cfg;
  cfg.rows = 1000;
  cfg.seed = 4;
  const auto s = generate(cfg);
  ASSERT_EQ(s.truth.partition.size(), 1000u);
  std::set<std::size_t> labels(s.truth.partition.begin(), s.truth.partition.end());
  if (s.truth.spn.num_sums() == 0) {
    EXPECT_EQ(labels.size(), 1u);
  } else {
    EXPECT_GE(labels.size(), 2u);
  }
  // each block holds at least one row and there are no more blocks than rows
  EXPECT_LE(labels.size(), 1000u);
}

TEST(Generate, RowSplitsOnlyGiveOneBlockPerSumBranch) {
  SynthConfig cfg;
  cfg.rows = 1000;
  cfg.theta_split = 0.0;
  cfg.seed = 5;
  const auto s = generate(cfg);
  std::set<std::size_t> labels(s.truth.partition.begin(), s.truth.partition.end());
  // a binary tree of row splits has one more block than it has sums
  EXPECT_GT(s.truth.spn.num_sums(), 0u);
  EXPECT_EQ(labels.size(), s.truth.spn.num_sums() + 1);
  std::map<std::size_t, std::size_t> sizes;
  for (auto l : s.truth.partition) ++sizes[l];
  // a block keeps splitting until it holds fewer than 10% of the rows
  for (const auto& [label, count] : sizes) EXPECT_LT(count, 100u);
}

TEST(Generate, DeterministicForSeed) {
  SynthConfig cfg;
  cfg.rows = 300;
  cfg.seed = 6;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  EXPECT_EQ(dataset_hash(a.data), dataset_hash(b.data));
  cfg.seed = 7;
  EXPECT_NE(dataset_hash(generate(cfg).data), dataset_hash(a.data));
}

TEST(Holdout, DisjointAndComplete) {
  SynthConfig cfg;
  cfg.rows = 1000;
  cfg.seed = 8;
  const auto s = generate(cfg);
  Rng rng(9);
  const std::vector<double> fr{0.7, 0.1, 0.2};
  const auto parts = holdout_split(s.data, fr, rng);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].rows(), 700u);
  EXPECT_EQ(parts[1].rows(), 100u);
  EXPECT_EQ(parts[2].rows(), 200u);
  const std::vector<double> bad{0.5, 0.2};
  EXPECT_CODE(holdout_split(s.data, bad, rng), ErrorCode::BadFractions);
  const std::vector<double> neg{1.2, -0.2};
  EXPECT_CODE(holdout_split(s.data, neg, rng), ErrorCode::BadFractions);
}

TEST(InjectMissing, RateAndBookkeeping) {
  SynthConfig cfg;
  cfg.rows = 2000;
  cfg.seed = 10;
  const auto s = generate(cfg);
  Rng rng(11);
  const auto masked = inject_missing(s.data, 0.1, rng);
  const double cells = 2000.0 * s.data.cols();
  EXPECT_NEAR(masked.removed.size() / cells, 0.1, 4 * std::sqrt(0.09 / cells));
  EXPECT_EQ(masked.data.missing_count(), masked.removed.size());
  for (const auto& c : masked.removed) {
    EXPECT_FALSE(masked.data.observed(c.row, c.feature));
    EXPECT_EQ(c.value, s.data.value(c.row, c.feature));
  }
  EXPECT_CODE(inject_missing(s.data, 1.0, rng), ErrorCode::InvalidArgument);
}
