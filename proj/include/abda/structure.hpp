#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/math.hpp"
#include "abda/spn.hpp"

namespace abda {

struct StructureConfig {
  double rdc_threshold = 0.3;
  double min_instances_fraction = 0.1;
  std::size_t rdc_features = 20;
  double rdc_scale = 1.0 / 6.0;
  std::size_t kmeans_restarts = 10;
  std::size_t kmeans_max_iter = 100;
  std::uint64_t seed = 0;

  void check() const {
    if (!(rdc_threshold > 0.0 && rdc_threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "rdc threshold must lie in (0,1)");
    if (!(min_instances_fraction > 0.0 && min_instances_fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "min instances fraction must lie in (0,1]");
    }
    if (rdc_features == 0) throw Error(ErrorCode::InvalidArgument, "rdc needs at least one random feature");
    if (!(rdc_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "rdc scale must be positive");
    if (kmeans_restarts == 0 || kmeans_max_iter == 0) throw Error(ErrorCode::InvalidArgument, "k-means needs restarts and iterations");
  }
};

/// Empirical CDF values rank/n with average ranks for ties. Missing cells
/// get 0.5 and do not take part in the ranking.
inline std::vector<double> copula_transform(std::span<const double> column, std::span<const std::uint8_t> observed) {
  const std::size_t n = column.size();
  std::vector<std::size_t> idx;
  idx.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (observed.empty() || observed[i]) idx.push_back(i);
  }
  if (idx.empty()) throw Error(ErrorCode::AllMissing, "column has no observed cells");
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
  std::vector<double> out(n, 0.5);
  const double m = static_cast<double>(idx.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && column[idx[j + 1]] == column[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) out[idx[t]] = avg_rank / m;
    i = j + 1;
  }
  return out;
}

namespace detail {

// sin(s / 2 * [u, 1] W) for W ~ N(0, 1)^(2 x k), then centered.
inline Eigen::MatrixXd rdc_features(std::span<const double> u, std::size_t k, double s, Rng& rng) {
  const Eigen::Index n = static_cast<Eigen::Index>(u.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(static_cast<Eigen::Index>(k));
  Eigen::VectorXd b(static_cast<Eigen::Index>(k));
  const double scale = s / 2.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    w[j] = scale * normal(rng);
    b[j] = scale * normal(rng);
  }
  Eigen::MatrixXd f(n, w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) f(i, j) = std::sin(w[j] * u[static_cast<std::size_t>(i)] + b[j]);
  }
  f.rowwise() -= f.colwise().mean();
  return f;
}

// Orthonormal basis of the column space, dropping numerically dependent
// directions.
inline Eigen::MatrixXd column_basis(const Eigen::MatrixXd& f) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(f);
  qr.setThreshold(1e-10);
  const Eigen::Index r = qr.rank();
  if (r == 0) return Eigen::MatrixXd(f.rows(), 0);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(f.rows(), r);
  return q;
}

}  // namespace detail

/// Randomized dependence coefficient between two columns on their jointly
/// observed rows: largest canonical correlation between random sine
/// projections of the copula transforms. Returns 0 below max(10, k) rows.
inline double rdc(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> joint_observed,
                  const StructureConfig& cfg, Rng& rng) {
  std::vector<double> xa;
  std::vector<double> xb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (joint_observed.empty() || joint_observed[i]) {
      xa.push_back(a[i]);
      xb.push_back(b[i]);
    }
  }
  if (xa.size() < std::max<std::size_t>(10, cfg.rdc_features)) return 0.0;
  const auto ua = copula_transform(xa, {});
  const auto ub = copula_transform(xb, {});
  const auto fa = detail::rdc_features(ua, cfg.rdc_features, cfg.rdc_scale, rng);
  const auto fb = detail::rdc_features(ub, cfg.rdc_features, cfg.rdc_scale, rng);
  const auto qa = detail::column_basis(fa);
  const auto qb = detail::column_basis(fb);
  if (qa.cols() == 0 || qb.cols() == 0) return 0.0;
  const Eigen::MatrixXd cross = qa.transpose() * qb;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  const double top = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return std::clamp(top, 0.0, 1.0);
}

/// A data partition: rows x features.
struct Slice {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> features;
};

/// Connected components of the graph linking features with rdc >= threshold.
inline std::vector<std::vector<std::size_t>> split_columns(const Dataset& data, const Slice& slice,
                                                           const StructureConfig& cfg, Rng& rng) {
  const std::size_t f = slice.features.size();
  std::vector<std::vector<double>> cols(f);
  std::vector<std::vector<std::uint8_t>> masks(f);
  for (std::size_t i = 0; i < f; ++i) {
    cols[i].reserve(slice.rows.size());
    masks[i].reserve(slice.rows.size());
    for (std::size_t n : slice.rows) {
      cols[i].push_back(data.value(n, slice.features[i]));
      masks[i].push_back(data.observed(n, slice.features[i]) ? 1 : 0);
    }
  }
  std::vector<std::size_t> parent(f);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::uint8_t> joint(slice.rows.size());
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = i + 1; j < f; ++j) {
      for (std::size_t r = 0; r < joint.size(); ++r) joint[r] = masks[i][r] & masks[j][r];
      const double c = rdc(cols[i], cols[j], joint, cfg, rng);
      if (c >= cfg.rdc_threshold) parent[find(i)] = find(j);
    }
  }
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> group_of(f, SIZE_MAX);
  for (std::size_t i = 0; i < f; ++i) {
    const std::size_t r = find(i);
    if (group_of[r] == SIZE_MAX) {
      group_of[r] = groups.size();
      groups.emplace_back();
    }
    groups[group_of[r]].push_back(slice.features[i]);
  }
  return groups;
}

/// 2-means on the slice's copula matrix (missing cells at 0.5). Returns the
/// two row groups, or nothing when a cluster comes out empty.
inline std::optional<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> cluster_rows(
    const Dataset& data, const Slice& slice, const StructureConfig& cfg, Rng& rng) {
  const std::size_t n = slice.rows.size();
  const std::size_t f = slice.features.size();
  if (n < 2) return std::nullopt;
  std::vector<double> x(n * f);
  {
    std::vector<double> col(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t j = 0; j < f; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = data.value(slice.rows[i], slice.features[j]);
        mask[i] = data.observed(slice.rows[i], slice.features[j]) ? 1 : 0;
      }
      const bool any = std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
      std::vector<double> u = any ? copula_transform(col, mask) : std::vector<double>(n, 0.5);
      for (std::size_t i = 0; i < n; ++i) x[i * f + j] = u[i];
    }
  }
  auto dist2 = [&](std::size_t i, const std::vector<double>& c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = x[i * f + j] - c[j];
      acc += d * d;
    }
    return acc;
  };

  std::vector<std::uint8_t> best_assign;
  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> assign(n);
  std::vector<double> d0(n);
  for (std::size_t restart = 0; restart < cfg.kmeans_restarts; ++restart) {
    // k-means++ seeding
    std::array<std::vector<double>, 2> centers;
    const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    centers[0].assign(x.begin() + static_cast<std::ptrdiff_t>(first * f),
                      x.begin() + static_cast<std::ptrdiff_t>((first + 1) * f));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += d0[i] = dist2(i, centers[0]);
    if (total <= 0.0) return std::nullopt;  // every row identical
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t second = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d0[i];
      if (u < 0.0 && d0[i] > 0.0) {
        second = i;
        break;
      }
    }
    while (d0[second] <= 0.0) --second;
    centers[1].assign(x.begin() + static_cast<std::ptrdiff_t>(second * f),
                      x.begin() + static_cast<std::ptrdiff_t>((second + 1) * f));

    double inertia = 0.0;
    for (std::size_t iter = 0; iter < cfg.kmeans_max_iter; ++iter) {
      bool changed = iter == 0;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = dist2(i, centers[0]);
        const double b = dist2(i, centers[1]);
        const std::uint8_t k = b < a ? 1 : 0;
        inertia += std::min(a, b);
        if (assign[i] != k) changed = true;
        assign[i] = k;
      }
      if (!changed) break;
      std::array<std::size_t, 2> count{0, 0};
      centers[0].assign(f, 0.0);
      centers[1].assign(f, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        ++count[assign[i]];
        for (std::size_t j = 0; j < f; ++j) centers[assign[i]][j] += x[i * f + j];
      }
      if (count[0] == 0 || count[1] == 0) break;
      for (int k = 0; k < 2; ++k) {
        for (double& c : centers[k]) c /= static_cast<double>(count[k]);
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_assign = assign;
    }
  }
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) (best_assign[i] ? out.second : out.first).push_back(slice.rows[i]);
  if (out.first.empty() || out.second.empty()) return std::nullopt;
  return out;
}

/// Learned structure plus the initial sum weights (cluster proportions)
/// and the rows each node's slice held, indexed by NodeId.
struct LearnedStructure {
  Spn spn;
  SumWeights weights;
  std::vector<std::vector<std::size_t>> node_rows;
};

namespace detail {

struct StructureBuilder {
  const Dataset& data;
  const StructureConfig& cfg;
  Spn spn;
  std::vector<std::vector<double>> proportions;
  std::size_t min_rows;
  std::vector<std::vector<std::size_t>> node_rows;

  NodeId record(NodeId id, const std::vector<std::size_t>& rows) {
    if (node_rows.size() <= id.value) node_rows.resize(id.value + 1);
    node_rows[id.value] = rows;
    return id;
  }

  NodeId leaves(const Slice& s) {
    if (s.features.size() == 1) return record(spn.add_leaf(s.features[0]), s.rows);
    std::vector<NodeId> children;
    for (std::size_t d : s.features) children.push_back(record(spn.add_leaf(d), s.rows));
    return record(spn.add_product(std::move(children)), s.rows);
  }

  NodeId learn(const Slice& s, std::uint64_t seed, bool try_columns) {
    if (s.features.size() == 1 || s.rows.size() < min_rows) return leaves(s);
    Rng rng(seed);
    if (try_columns) {
      auto groups = split_columns(data, s, cfg, rng);
      if (groups.size() > 1) {
        std::vector<NodeId> children;
        for (std::size_t i = 0; i < groups.size(); ++i) {
          children.push_back(learn(Slice{s.rows, groups[i]}, mix_seed(seed, i), false));
        }
        return record(spn.add_product(std::move(children)), s.rows);
      }
    }
    if (auto clusters = cluster_rows(data, s, cfg, rng)) {
      const double n = static_cast<double>(s.rows.size());
      std::vector<double> w{static_cast<double>(clusters->first.size()) / n,
                            static_cast<double>(clusters->second.size()) / n};
      NodeId a = learn(Slice{std::move(clusters->first), s.features}, mix_seed(seed, 0), true);
      NodeId b = learn(Slice{std::move(clusters->second), s.features}, mix_seed(seed, 1), true);
      const NodeId sum = record(spn.add_sum({a, b}), s.rows);
      proportions.push_back(std::move(w));
      return sum;
    }
    if (!try_columns) {
      // clustering failed right after a column split: test columns once more
      auto groups = split_columns(data, s, cfg, rng);
      if (groups.size() > 1) {
        std::vector<NodeId> children;
        for (std::size_t i = 0; i < groups.size(); ++i) {
          children.push_back(learn(Slice{s.rows, groups[i]}, mix_seed(seed, i), false));
        }
        return record(spn.add_product(std::move(children)), s.rows);
      }
    }
    return leaves(s);
  }
};

}  // namespace detail

/// LearnSPN-style recursive partitioning. Slices with one feature or fewer
/// than m*N rows become leaves; otherwise a column split (product) is tried
/// before a 2-way row clustering (sum). A slice that admits neither is fully
/// factorized.
inline LearnedStructure learn_structure(const Dataset& data, const StructureConfig& cfg) {
  cfg.check();
  if (data.cols() == 0 || data.rows() == 0) throw Error(ErrorCode::InvalidData, "empty dataset");
  const auto min_rows = static_cast<std::size_t>(
      std::ceil(cfg.min_instances_fraction * static_cast<double>(data.rows())));
  detail::StructureBuilder b{data, cfg, Spn(data.cols()), {}, min_rows, {}};
  Slice all;
  all.rows.resize(data.rows());
  std::iota(all.rows.begin(), all.rows.end(), 0);
  all.features.resize(data.cols());
  std::iota(all.features.begin(), all.features.end(), 0);
  const NodeId root = b.learn(all, cfg.seed, true);
  b.spn.set_root(root);
  b.node_rows.resize(b.spn.size());
  LearnedStructure out{std::move(b.spn), {}, std::move(b.node_rows)};
  out.weights.log_weights.resize(b.proportions.size());
  for (std::size_t s = 0; s < b.proportions.size(); ++s) {
    for (double p : b.proportions[s]) out.weights.log_weights[s].push_back(std::log(p));
  }
  return out;
}

}  // namespace abda
