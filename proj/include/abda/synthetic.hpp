#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"
#include "abda/spn.hpp"

namespace abda {

struct SynthConfig {
  std::size_t rows = 2000;
  std::size_t features = 4;
  double theta_split = 0.8;  // probability of attempting a column split
  double split_a = 4.0;      // Beta prior of the per-split cluster probability
  double split_b = 5.0;
  double min_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Generating model and labels of a synthetic dataset. Every rate is a
/// shape/rate parameter.
struct GroundTruth {
  Spn spn;
  SpnParams params;
  std::vector<StatType> types;                           // per feature
  std::vector<std::array<double, kNumKinds>> kind_weights;  // fraction of rows per generating kind
  std::vector<std::size_t> partition;                    // per row
  std::string rate_convention = "shape/rate";

  std::array<double, kNumStatTypes> type_vector(std::size_t d) const {
    std::array<double, kNumStatTypes> v{};
    v[static_cast<std::size_t>(types[d])] = 1.0;
    return v;
  }

  /// Kind generating the most rows of feature d.
  Kind majority_kind(std::size_t d) const {
    const auto& w = kind_weights[d];
    return static_cast<Kind>(std::max_element(w.begin(), w.end()) - w.begin());
  }
};

struct SynthData {
  Dataset data;
  GroundTruth truth;
};

namespace detail {

inline Distribution draw_synthetic_leaf(StatType type, Rng& rng) {
  switch (type) {
    case StatType::Real: {
      const double var = 10.0 / sample_gamma(10.0, 1.0, rng);
      const double mu = std::normal_distribution<double>(0.0, std::sqrt(30.0 * var))(rng);
      return Gaussian{mu, var};
    }
    case StatType::Pos: {
      if (std::bernoulli_distribution(0.5)(rng)) {
        const double shape = std::uniform_real_distribution<double>(5.0, 25.0)(rng);
        return GammaFixedShape{shape, sample_gamma(10.0, 10.0, rng)};
      }
      return Exponential{sample_gamma(20.0, 5.0, rng)};
    }
    case StatType::Num: return Poisson{sample_gamma(100.0, 10.0, rng)};
    case StatType::Nom:
    case StatType::Bin: {
      const auto k = std::uniform_int_distribution<std::size_t>(5, 15)(rng);
      return Categorical{sample_dirichlet(std::vector<double>(k, 10.0), rng)};
    }
  }
  return Gaussian{};
}

struct SynthBuilder {
  const SynthConfig& cfg;
  Rng& rng;
  const std::vector<StatType>& types;
  std::vector<double>& values;  // rows x features
  Spn spn;
  std::vector<std::vector<double>> sum_weights;
  std::vector<std::vector<LeafMixture>> leaves;
  std::vector<std::array<double, kNumKinds>> kind_rows;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> row_paths;
  std::size_t min_rows = 1;

  NodeId leaf(const std::vector<std::size_t>& rows, std::size_t d) {
    const Distribution dist = draw_synthetic_leaf(types[d], rng);
    for (std::size_t n : rows) values[n * cfg.features + d] = sample(dist, rng);
    kind_rows[d][static_cast<std::size_t>(kind_of(dist))] += static_cast<double>(rows.size());
    leaves[d].push_back(LeafMixture{{dist}, {0.0}});
    return spn.add_leaf(d);
  }

  NodeId build(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
    if (rows.size() < min_rows || rows.size() < 2) {
      if (cols.size() == 1) return leaf(rows, cols[0]);
      std::vector<NodeId> ch;
      for (std::size_t d : cols) ch.push_back(leaf(rows, d));
      return spn.add_product(std::move(ch));
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (true) {
      const double p = sample_beta(cfg.split_a, cfg.split_b, rng);
      if (cols.size() > 1 && unif(rng) < cfg.theta_split) {
        std::vector<std::size_t> a;
        std::vector<std::size_t> b;
        for (std::size_t d : cols) (unif(rng) < p ? a : b).push_back(d);
        if (a.empty() || b.empty()) continue;  // degenerate column split
        const NodeId ca = build(rows, a);
        const NodeId cb = build(rows, b);
        return spn.add_product({ca, cb});
      }
      std::vector<std::size_t> a;
      std::vector<std::size_t> b;
      for (std::size_t n : rows) (unif(rng) < p ? a : b).push_back(n);
      if (a.empty() || b.empty()) continue;
      const NodeId ca = build(a, cols);
      const NodeId cb = build(b, cols);
      const NodeId s = spn.add_sum({ca, cb});
      const auto w = static_cast<std::uint32_t>(sum_weights.size());
      sum_weights.push_back({p, 1.0 - p});
      for (std::size_t n : a) row_paths[n].emplace_back(w, 0);
      for (std::size_t n : b) row_paths[n].emplace_back(w, 1);
      return s;
    }
  }
};

}  // namespace detail

/// Random guillotine partitioning of an N x D matrix into a generating SPN,
/// with per-feature statistical types and leaf parameters drawn from fixed
/// priors, followed by top-down sampling of the data.
inline SynthData generate(const SynthConfig& cfg) {
  if (cfg.rows == 0 || cfg.features == 0) throw Error(ErrorCode::InvalidArgument, "synthetic data needs rows and features");
  if (!(cfg.theta_split >= 0.0 && cfg.theta_split <= 1.0)) throw Error(ErrorCode::InvalidArgument, "theta_split must lie in [0,1]");
  Rng rng(cfg.seed);
  std::vector<StatType> types(cfg.features);
  const std::array<StatType, 4> choices{StatType::Real, StatType::Pos, StatType::Num, StatType::Nom};
  for (auto& t : types) t = choices[std::uniform_int_distribution<std::size_t>(0, 3)(rng)];

  std::vector<double> values(cfg.rows * cfg.features, 0.0);
  detail::SynthBuilder b{cfg, rng, types, values, Spn(cfg.features), {}, {}, {}, {}, 1};
  b.leaves.resize(cfg.features);
  b.kind_rows.resize(cfg.features);
  b.row_paths.resize(cfg.rows);
  b.min_rows = static_cast<std::size_t>(std::ceil(cfg.min_fraction * static_cast<double>(cfg.rows)));
  std::vector<std::size_t> rows(cfg.rows);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::size_t> cols(cfg.features);
  std::iota(cols.begin(), cols.end(), 0);
  const NodeId root = b.build(rows, cols);
  b.spn.set_root(root);

  SynthData out;
  std::vector<std::string> names;
  std::vector<MetaType> meta;
  for (std::size_t d = 0; d < cfg.features; ++d) {
    names.push_back("x" + std::to_string(d));
    meta.push_back(types[d] == StatType::Real || types[d] == StatType::Pos ? MetaType::Continuous : MetaType::Discrete);
  }
  out.data = Dataset(names, meta, 0);
  for (std::size_t n = 0; n < cfg.rows; ++n) {
    out.data.push_row(std::span<const double>(values.data() + n * cfg.features, cfg.features));
  }
  out.data.provenance.push_back("# synthetic rows=" + std::to_string(cfg.rows) + " features=" +
                                std::to_string(cfg.features) + " seed=" + std::to_string(cfg.seed));

  GroundTruth& gt = out.truth;
  gt.spn = std::move(b.spn);
  gt.params.leaves = std::move(b.leaves);
  gt.params.sums.concentration = 1.0;
  for (const auto& w : b.sum_weights) gt.params.sums.log_weights.push_back({std::log(w[0]), std::log(w[1])});
  gt.types = types;
  gt.kind_weights = b.kind_rows;
  for (auto& w : gt.kind_weights) {
    for (double& v : w) v /= static_cast<double>(cfg.rows);
  }
  std::map<std::vector<std::pair<std::uint32_t, std::uint32_t>>, std::size_t> labels;
  gt.partition.resize(cfg.rows);
  for (std::size_t n = 0; n < cfg.rows; ++n) {
    auto it = labels.try_emplace(b.row_paths[n], labels.size()).first;
    gt.partition[n] = it->second;
  }
  return out;
}

/// Seeded disjoint split of the rows by the given fractions.
inline std::vector<Dataset> holdout_split(const Dataset& data, std::span<const double> fractions, Rng& rng) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error(ErrorCode::BadFractions, "fractions must be non-negative");
    total += f;
  }
  if (fractions.empty() || std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::BadFractions, "fractions must sum to 1");
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Dataset> out;
  std::size_t start = 0;
  double cum = 0.0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cum += fractions[k];
    const std::size_t end = k + 1 == fractions.size()
                                ? data.rows()
                                : std::min(data.rows(), static_cast<std::size_t>(std::llround(cum * static_cast<double>(data.rows()))));
    out.push_back(data.subset(std::span<const std::size_t>(idx.data() + start, end - start)));
    start = end;
  }
  return out;
}

struct MaskedCell {
  std::size_t row = 0;
  std::size_t feature = 0;
  double value = 0.0;
};

struct MaskedData {
  Dataset data;
  std::vector<MaskedCell> removed;
};

/// Removes each observed cell independently with probability `fraction`.
inline MaskedData inject_missing(const Dataset& data, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must lie in [0,1)");
  MaskedData out{data, {}};
  std::bernoulli_distribution drop(fraction);
  for (std::size_t n = 0; n < data.rows(); ++n) {
    for (std::size_t d = 0; d < data.cols(); ++d) {
      if (!data.observed(n, d)) continue;
      if (drop(rng)) {
        out.removed.push_back({n, d, data.value(n, d)});
        out.data.set_missing(n, d);
      }
    }
  }
  return out;
}

}  // namespace abda
