#include <gtest/gtest.h>

#include <sstream>

#include "abda/gibbs.hpp"
#include "abda/inference.hpp"
#include "expect_code.hpp"
#include "support.hpp"

using namespace abda;

namespace {

struct Setup {
  Dataset data;
  LearnedStructure learned;
  std::vector<Dictionary> dicts;
};

Setup make_setup(std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  Setup s{fixture::two_clusters(rows, 3, rng), {}, {}};
  for (std::size_t n = 0; n < rows; n += 7) s.data.set_missing(n, n % 3);
  StructureConfig sc;
  sc.seed = seed;
  s.learned = learn_structure(s.data, sc);
  s.dicts = build_dictionaries(s.data, PriorConfig{});
  return s;
}

// Statistics rebuilt from the state's assignments.
std::vector<std::vector<std::vector<SufficientStats>>> recount(const GibbsState& st, const Dataset& data) {
  std::vector<std::vector<std::vector<SufficientStats>>> out(st.features);
  for (std::size_t d = 0; d < st.features; ++d) {
    out[d].resize(st.specs[d].size());
    for (std::size_t j = 0; j < st.specs[d].size(); ++j) {
      for (const auto& spec : st.specs[d][j]) out[d][j].push_back(empty_stats(spec));
    }
  }
  for (std::size_t n = 0; n < st.rows; ++n) {
    for (std::size_t d = 0; d < st.features; ++d) {
      if (!data.observed(n, d)) {
        EXPECT_EQ(st.component(n, d), -1);
        continue;
      }
      out[d][st.leaf_slot(n, d)][static_cast<std::size_t>(st.component(n, d))].add(data.value(n, d));
    }
  }
  return out;
}

void expect_stats_near(const std::vector<std::vector<std::vector<SufficientStats>>>& a,
                       const std::vector<std::vector<std::vector<SufficientStats>>>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    for (std::size_t j = 0; j < a[d].size(); ++j) {
      for (std::size_t l = 0; l < a[d][j].size(); ++l) {
        EXPECT_EQ(a[d][j][l].count, b[d][j][l].count);
        EXPECT_NEAR(a[d][j][l].sum, b[d][j][l].sum, 1e-8 * (1 + std::abs(b[d][j][l].sum)));
        EXPECT_NEAR(a[d][j][l].sum_sq, b[d][j][l].sum_sq, 1e-8 * (1 + std::abs(b[d][j][l].sum_sq)));
        EXPECT_EQ(a[d][j][l].category_counts, b[d][j][l].category_counts);
      }
    }
  }
}

}  // namespace

TEST(Init, AssignmentsAreConsistent) {
  auto s = make_setup(200, 1);
  GibbsConfig cfg;
  Rng rng(2);
  const auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  expect_stats_near(st.stats, recount(st, s.data));
  for (std::size_t n = 0; n < st.rows; ++n) {
    const auto tree = st.tree(n);
    const auto reached = reached_nodes(s.learned.spn, tree);
    for (std::size_t d = 0; d < st.features; ++d) {
      EXPECT_TRUE(reached[s.learned.spn.leaves_by_feature(d)[tree.leaf_slots[d]].value]);
    }
  }
}

TEST(Init, FollowsStructurePartition) {
  auto s = make_setup(200, 3);
  ASSERT_GT(s.learned.spn.num_sums(), 0u);
  GibbsConfig cfg;
  Rng rng(4);
  const auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  for (std::size_t d = 0; d < st.features; ++d) {
    const auto& leaves = s.learned.spn.leaves_by_feature(d);
    for (std::size_t j = 0; j < leaves.size(); ++j) {
      for (std::size_t n : s.learned.node_rows[leaves[j].value]) EXPECT_EQ(st.leaf_slot(n, d), j);
    }
  }
}

TEST(Sweep, CountsMatchAssignments) {
  auto s = make_setup(300, 5);
  GibbsConfig cfg;
  Rng rng(6);
  auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  for (int it = 0; it < 5; ++it) {
    const double ll = sweep(st, s.learned.spn, s.data, cfg, rng);
    EXPECT_TRUE(std::isfinite(ll));
    expect_stats_near(st.stats, recount(st, s.data));
    for (const auto& counts : st.edge_counts) {
      double total = 0.0;
      for (double c : counts) total += c;
      EXPECT_EQ(total, 300.0);
    }
    EXPECT_EQ(st.node_row_counts[s.learned.spn.root().value], 300u);
  }
}

TEST(Sweep, ParametersStayValid) {
  auto s = make_setup(300, 7);
  GibbsConfig cfg;
  Rng rng(8);
  auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  for (int it = 0; it < 10; ++it) sweep(st, s.learned.spn, s.data, cfg, rng);
  for (const auto& per_feature : st.params.leaves) {
    for (const auto& mix : per_feature) {
      double total = 0.0;
      for (std::size_t l = 0; l < mix.components.size(); ++l) {
        EXPECT_TRUE(valid_params(mix.components[l]));
        total += std::exp(mix.log_weights[l]);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
  for (const auto& lw : st.params.sums.log_weights) {
    double total = 0.0;
    for (double w : lw) total += std::exp(w);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Sweep, FrozenLeavesDoNotMove) {
  auto s = make_setup(150, 9);
  GibbsConfig cfg;
  cfg.freeze_leaves = true;
  Rng rng(10);
  auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  const auto before = st.params.leaves;
  for (int it = 0; it < 3; ++it) sweep(st, s.learned.spn, s.data, cfg, rng);
  for (std::size_t d = 0; d < before.size(); ++d) {
    for (std::size_t j = 0; j < before[d].size(); ++j) {
      EXPECT_EQ(before[d][j].log_weights, st.params.leaves[d][j].log_weights);
      EXPECT_EQ(before[d][j].components, st.params.leaves[d][j].components);
    }
  }
}

TEST(Sweep, ThreadedRunKeepsInvariants) {
  auto s = make_setup(300, 11);
  GibbsConfig cfg;
  cfg.threads = 3;
  Rng rng(12);
  auto st = init_state(s.learned.spn, s.data, s.dicts, cfg, rng, &s.learned.weights, &s.learned.node_rows);
  for (int it = 0; it < 3; ++it) sweep(st, s.learned.spn, s.data, cfg, rng);
  expect_stats_near(st.stats, recount(st, s.data));
}

TEST(Exactness, RowAssignmentsMatchEnumeratedPosterior) {
  const auto r = fixture::gibbs_exactness(20000, 5, 13);
  EXPECT_GT(r.p_value, 0.001) << "chi2 " << r.statistic << " on " << r.dof << " dof";
}

TEST(Run, DrawCountAndTrace) {
  auto s = make_setup(120, 14);
  GibbsConfig cfg;
  cfg.iterations = 20;
  cfg.burn_in = 10;
  cfg.thinning = 3;
  cfg.seed = 15;
  const auto res = run(s.learned.spn, s.data, s.dicts, cfg, &s.learned.weights, &s.learned.node_rows);
  EXPECT_EQ(res.draws.size(), 4u);  // iterations 10, 13, 16, 19
  EXPECT_EQ(res.draws.front().iteration, 10u);
  EXPECT_EQ(res.trace.size(), 20u);
  for (const auto& t : res.trace) EXPECT_TRUE(std::isfinite(t.mean_loglik));
  // a draw's likelihood is that of its own parameters
  EXPECT_NEAR(res.draws.back().train_loglik, mean_loglik(s.learned.spn, res.draws.back().params, s.data), 1e-9);
  std::ostringstream os;
  write_trace_csv(os, res.trace);
  EXPECT_EQ(os.str().rfind("iteration,mean_loglik,seconds\n", 0), 0u);
}

TEST(Run, SameSeedSameDraws) {
  auto s = make_setup(120, 16);
  GibbsConfig cfg;
  cfg.iterations = 15;
  cfg.burn_in = 5;
  cfg.seed = 17;
  const auto a = run(s.learned.spn, s.data, s.dicts, cfg, &s.learned.weights, &s.learned.node_rows);
  const auto b = run(s.learned.spn, s.data, s.dicts, cfg, &s.learned.weights, &s.learned.node_rows);
  ASSERT_EQ(a.draws.size(), b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    EXPECT_EQ(a.draws[i].train_loglik, b.draws[i].train_loglik);
    EXPECT_EQ(a.draws[i].params.sums.log_weights, b.draws[i].params.sums.log_weights);
  }
}

TEST(Run, LikelihoodImprovesFromStart) {
  auto s = make_setup(400, 18);
  GibbsConfig cfg;
  cfg.iterations = 60;
  cfg.burn_in = 30;
  cfg.seed = 19;
  const auto res = run(s.learned.spn, s.data, s.dicts, cfg, &s.learned.weights, &s.learned.node_rows);
  EXPECT_GE(res.trace.back().mean_loglik, res.trace.front().mean_loglik - 0.5);
}

TEST(Sparsity, FractionInUnitInterval) {
  auto s = make_setup(200, 20);
  GibbsConfig cfg;
  cfg.iterations = 10;
  cfg.burn_in = 5;
  const auto res = run(s.learned.spn, s.data, s.dicts, cfg, &s.learned.weights, &s.learned.node_rows);
  const double sp = structure_sparsity(res.state, s.learned.spn);
  EXPECT_GT(sp, 0.0);
  EXPECT_LE(sp, 1.0);
}

TEST(Config, RejectsBadSettings) {
  GibbsConfig cfg;
  cfg.burn_in = cfg.iterations;
  EXPECT_CODE(cfg.check(), ErrorCode::InvalidArgument);
  cfg = {};
  cfg.gamma = 0.0;
  EXPECT_CODE(cfg.check(), ErrorCode::InvalidArgument);
  cfg = {};
  cfg.thinning = 0;
  EXPECT_CODE(cfg.check(), ErrorCode::InvalidArgument);
}

TEST(Init, RejectsUnsupportedValue) {
  auto s = make_setup(60, 21);
  s.dicts[0] = {ComponentSpec{Kind::Exponential, GammaPrior{1, 1}}};
  GibbsConfig cfg;
  Rng rng(1);
  EXPECT_CODE(init_state(s.learned.spn, s.data, s.dicts, cfg, rng), ErrorCode::InvalidData);
}
