#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/inference.hpp"
#include "abda/likelihoods.hpp"
#include "abda/spn.hpp"

namespace abda {

/// Event lo <= X^feature < hi extracted from one leaf component.
struct IntervalPattern {
  std::size_t feature = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t leaf_slot = 0;
  std::size_t component = 0;
  Kind kind = Kind::Gaussian;
  double mass_at_source = 0.0;  // component mass of the interval
  double leaf_mass = 0.0;       // leaf-mixture mass of the interval
  NodeId leaf;
};

struct CompositePattern {
  std::vector<std::size_t> atoms;  // indices into the atom list, ascending
  double support = 0.0;
  NodeId anchor;                   // lowest common ancestor of the source leaves
  std::vector<NodeId> path;        // root ... anchor
};

struct MiningConfig {
  double lambda = 0.9;
  double theta = 0.9;
  double support_floor = 0.05;
  std::size_t max_arity = 4;
  double weight_floor = 0.1;  // minimum posterior-mean component weight
};

namespace detail {

// Posterior-mean parameters of one leaf component over the draws.
inline Distribution mean_component(const Model& m, std::size_t d, std::size_t j, std::size_t l) {
  const double n = static_cast<double>(m.draws.size());
  Distribution acc = m.draws.front().params.leaf(d, j).components[l];
  std::visit(
      [&](auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          a = {0.0, 0.0};
          for (const auto& dr : m.draws) {
            const auto& g = std::get<Gaussian>(dr.params.leaf(d, j).components[l]);
            a.mean += g.mean / n;
            a.variance += g.variance / n;
          }
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          a.rate = 0.0;
          for (const auto& dr : m.draws) a.rate += std::get<GammaFixedShape>(dr.params.leaf(d, j).components[l]).rate / n;
        } else if constexpr (std::is_same_v<T, Exponential> || std::is_same_v<T, Poisson>) {
          a.rate = 0.0;
          for (const auto& dr : m.draws) a.rate += std::get<T>(dr.params.leaf(d, j).components[l]).rate / n;
        } else if constexpr (std::is_same_v<T, Geometric> || std::is_same_v<T, Bernoulli>) {
          a.success = 0.0;
          for (const auto& dr : m.draws) a.success += std::get<T>(dr.params.leaf(d, j).components[l]).success / n;
        } else {
          std::fill(a.probs.begin(), a.probs.end(), 0.0);
          for (const auto& dr : m.draws) {
            const auto& c = std::get<Categorical>(dr.params.leaf(d, j).components[l]);
            for (std::size_t i = 0; i < a.probs.size(); ++i) a.probs[i] += c.probs[i] / n;
          }
        }
      },
      acc);
  return acc;
}

inline double mean_weight(const Model& m, std::size_t d, std::size_t j, std::size_t l) {
  double acc = 0.0;
  for (const auto& dr : m.draws) acc += std::exp(dr.params.leaf(d, j).log_weights[l]);
  return acc / static_cast<double>(m.draws.size());
}

inline double mixture_interval_log_mass(const LeafMixture& mix, double lo, double hi) {
  double acc = kNegInf;
  for (std::size_t l = 0; l < mix.components.size(); ++l) {
    if (mix.log_weights[l] == kNegInf) continue;
    acc = log_add(acc, mix.log_weights[l] + interval_log_mass(mix.components[l], lo, hi));
  }
  return acc;
}

}  // namespace detail

/// Central lambda-intervals of every leaf component whose posterior-mean
/// weight reaches the floor, under posterior-mean parameters. Discrete
/// intervals are integer aligned and hold at least lambda of the mass.
inline std::vector<IntervalPattern> extract_atoms(const Model& m, double lambda, double weight_floor = 0.1) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in (0,1)");
  if (m.draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
  std::vector<IntervalPattern> atoms;
  const double p_lo = (1.0 - lambda) / 2.0;
  const double p_hi = (1.0 + lambda) / 2.0;
  for (std::size_t d = 0; d < m.num_features(); ++d) {
    for (std::size_t j = 0; j < m.spn.leaves_by_feature(d).size(); ++j) {
      const std::size_t L = m.draws.front().params.leaf(d, j).components.size();
      LeafMixture mean_leaf;
      for (std::size_t l = 0; l < L; ++l) {
        mean_leaf.components.push_back(detail::mean_component(m, d, j, l));
        mean_leaf.log_weights.push_back(std::log(detail::mean_weight(m, d, j, l)));
      }
      for (std::size_t l = 0; l < L; ++l) {
        if (std::exp(mean_leaf.log_weights[l]) < weight_floor) continue;
        const Distribution& dist = mean_leaf.components[l];
        IntervalPattern a;
        a.feature = d;
        a.leaf_slot = j;
        a.component = l;
        a.kind = kind_of(dist);
        a.leaf = m.spn.leaves_by_feature(d)[j];
        a.lo = quantile(dist, p_lo);
        a.hi = quantile(dist, p_hi);
        if (is_discrete(a.kind)) a.hi += 1.0;
        if (!(a.lo < a.hi)) continue;
        a.mass_at_source = std::exp(interval_log_mass(dist, a.lo, a.hi));
        a.leaf_mass = std::exp(detail::mixture_interval_log_mass(mean_leaf, a.lo, a.hi));
        atoms.push_back(a);
      }
    }
  }
  return atoms;
}

/// Probability of a conjunction of interval events under the model: leaves
/// of constrained features are replaced by their interval mass, all others
/// by 1, and the result is averaged over the draws. Features must differ.
inline double pattern_support(const Model& m, const std::vector<IntervalPattern>& pattern) {
  if (m.draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
  std::vector<int> seen(m.num_features(), 0);
  for (const auto& p : pattern) {
    if (p.feature >= m.num_features() || seen[p.feature]++) {
      throw Error(ErrorCode::InvalidArgument, "pattern features must be distinct and in range");
    }
  }
  std::vector<double> overrides(m.spn.size(), 0.0);
  std::vector<double> scratch;
  double acc = 0.0;
  for (const auto& dr : m.draws) {
    for (const auto& p : pattern) {
      const auto& leaves = m.spn.leaves_by_feature(p.feature);
      for (std::size_t j = 0; j < leaves.size(); ++j) {
        overrides[leaves[j].value] = detail::mixture_interval_log_mass(dr.params.leaf(p.feature, j), p.lo, p.hi);
      }
    }
    acc += std::exp(eval_with_leaf_overrides(m.spn, dr.params.sums, overrides, scratch));
  }
  return std::min(1.0, acc / static_cast<double>(m.draws.size()));
}

namespace detail {

// Lowest common ancestor in a tree-shaped network (first parent in a DAG).
struct Ancestry {
  std::vector<std::vector<NodeId>> paths;  // root ... node, per node id

  explicit Ancestry(const Spn& spn) : paths(spn.size()) {
    const auto parent = spn.parents();
    const auto& order = spn.evaluation_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto& p = parent[it->value];
      paths[it->value] = p ? paths[p->value] : std::vector<NodeId>{};
      paths[it->value].push_back(*it);
    }
  }

  NodeId lca(NodeId a, NodeId b) const {
    const auto& pa = paths[a.value];
    const auto& pb = paths[b.value];
    std::size_t i = 0;
    while (i + 1 < pa.size() && i + 1 < pb.size() && pa[i + 1] == pb[i + 1]) ++i;
    return pa[i];
  }
};

}  // namespace detail

/// Apriori-style levelwise mining. Atoms pass when their leaf-mixture mass
/// reaches theta; composites combine atoms whose source leaves pairwise
/// meet at product nodes; candidates under the support floor are pruned.
/// Returns composites of arity >= 2 (atoms alone when max_arity is 1),
/// ranked by support, then by atom indices.
inline std::vector<CompositePattern> mine(const Model& m, const std::vector<IntervalPattern>& atoms,
                                          const MiningConfig& cfg) {
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) throw Error(ErrorCode::InvalidArgument, "theta must lie in (0,1)");
  if (cfg.max_arity == 0) throw Error(ErrorCode::InvalidArgument, "max arity must be at least 1");
  const detail::Ancestry anc(m.spn);
  auto support_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<IntervalPattern> p;
    for (std::size_t i : idx) p.push_back(atoms[i]);
    return pattern_support(m, p);
  };
  auto compatible = [&](std::size_t a, std::size_t b) {
    return m.spn.is_product(anc.lca(atoms[a].leaf, atoms[b].leaf));
  };

  std::map<std::vector<std::size_t>, double> frequent;
  std::vector<std::vector<std::size_t>> level;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].leaf_mass < cfg.theta) continue;
    const double s = support_of({i});
    if (s < cfg.support_floor) continue;
    frequent[{i}] = s;
    level.push_back({i});
  }
  std::vector<CompositePattern> out;
  auto emit = [&](const std::vector<std::size_t>& idx, double s) {
    CompositePattern c;
    c.atoms = idx;
    c.support = s;
    c.anchor = atoms[idx[0]].leaf;
    for (std::size_t k = 1; k < idx.size(); ++k) c.anchor = anc.lca(c.anchor, atoms[idx[k]].leaf);
    c.path = anc.paths[c.anchor.value];
    out.push_back(std::move(c));
  };
  if (cfg.max_arity == 1) {
    for (const auto& idx : level) emit(idx, frequent[idx]);
  }
  for (std::size_t k = 2; k <= cfg.max_arity && !level.empty(); ++k) {
    std::vector<std::vector<std::size_t>> next;
    for (std::size_t a = 0; a < level.size(); ++a) {
      for (std::size_t b = a + 1; b < level.size(); ++b) {
        if (!std::equal(level[a].begin(), level[a].end() - 1, level[b].begin())) continue;
        const std::size_t x = level[a].back();
        const std::size_t y = level[b].back();
        if (x >= y) continue;
        bool ok = true;
        for (std::size_t i : level[a]) ok = ok && compatible(i, y);
        if (!ok) continue;
        std::vector<std::size_t> cand = level[a];
        cand.push_back(y);
        // every (k-1)-subset must be frequent
        double min_sub = 1.0;
        for (std::size_t drop = 0; drop < cand.size() && ok; ++drop) {
          std::vector<std::size_t> sub;
          for (std::size_t t = 0; t < cand.size(); ++t) {
            if (t != drop) sub.push_back(cand[t]);
          }
          const auto it = frequent.find(sub);
          if (it == frequent.end()) {
            ok = false;
          } else {
            min_sub = std::min(min_sub, it->second);
          }
        }
        if (!ok) continue;
        const double s = support_of(cand);
        if (s > min_sub + 1e-9) {
          throw Error(ErrorCode::InvalidModel, "support increased under conjunction");
        }
        if (s < cfg.support_floor) continue;
        frequent[cand] = s;
        next.push_back(cand);
        emit(cand, s);
      }
    }
    level = std::move(next);
  }
  std::stable_sort(out.begin(), out.end(), [](const CompositePattern& a, const CompositePattern& b) {
    if (a.support != b.support) return a.support > b.support;
    return a.atoms < b.atoms;
  });
  return out;
}

inline std::vector<CompositePattern> mine(const Model& m, const MiningConfig& cfg) {
  return mine(m, extract_atoms(m, cfg.lambda, cfg.weight_floor), cfg);
}

/// supp(antecedent and consequent) / supp(antecedent).
inline double confidence(const Model& m, const std::vector<IntervalPattern>& antecedent,
                         const std::vector<IntervalPattern>& consequent) {
  std::vector<IntervalPattern> all = antecedent;
  all.insert(all.end(), consequent.begin(), consequent.end());
  const double a = pattern_support(m, antecedent);
  if (!(a > 0.0)) return 0.0;
  return pattern_support(m, all) / a;
}

namespace detail {

inline std::string fmt_bound(double v, bool discrete) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  if (discrete) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3f", v);
  }
  return buf;
}

}  // namespace detail

/// "lo ≤ Name < hi" for one atom.
inline std::string format_atom(const IntervalPattern& a, const std::vector<std::string>& names) {
  const bool discrete = is_discrete(a.kind);
  return detail::fmt_bound(a.lo, discrete) + " ≤ " + names[a.feature] + " < " + detail::fmt_bound(a.hi, discrete);
}

/// Atoms joined by "∧" followed by "(supp=...)".
inline std::string format_pattern(const CompositePattern& c, const std::vector<IntervalPattern>& atoms,
                                  const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < c.atoms.size(); ++i) {
    if (i) s += " ∧ ";
    s += format_atom(atoms[c.atoms[i]], names);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " (supp=%.3f)", c.support);
  return s + buf;
}

inline void write_patterns_csv(std::ostream& out, const std::vector<CompositePattern>& pats,
                               const std::vector<IntervalPattern>& atoms, const std::vector<std::string>& names) {
  out << "rank,support,arity,anchor,path,pattern\n";
  for (std::size_t r = 0; r < pats.size(); ++r) {
    const auto& c = pats[r];
    std::string path;
    for (std::size_t i = 0; i < c.path.size(); ++i) path += (i ? ">" : "") + std::to_string(c.path[i].value);
    std::string text;
    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      if (i) text += " & ";
      const auto& a = atoms[c.atoms[i]];
      text += format_double(a.lo) + " <= " + names[a.feature] + " < " + format_double(a.hi);
    }
    out << r + 1 << ',' << format_double(c.support) << ',' << c.atoms.size() << ',' << c.anchor.value << ',' << path
        << ",\"" << text << "\"\n";
  }
}

/// One node of the partition hierarchy with the rows decoded into it.
struct PartitionNode {
  NodeId id;
  std::string type;  // sum, product or leaf
  std::vector<NodeId> path;
  std::size_t rows = 0;
  struct FeatureSummary {
    std::size_t feature = 0;
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
  };
  std::vector<FeatureSummary> summary;  // features in the node's scope
};

/// Rows are routed through the decoded (max-product) tree of the
/// highest-likelihood draw; every reached node reports its row count and a
/// summary of the observed cells in its scope.
inline std::vector<PartitionNode> partition_report(const Model& m, const Dataset& data) {
  const SpnParams& params = m.best_draw().params;
  const detail::Ancestry anc(m.spn);
  const std::size_t size = m.spn.size();
  std::vector<std::size_t> count(size, 0);
  std::vector<std::vector<double>> sum(size), lo(size), hi(size);
  std::vector<std::vector<std::size_t>> obs(size);
  for (std::size_t n = 0; n < data.rows(); ++n) {
    const RowView row = row_of(data, n);
    const auto reached = reached_nodes(m.spn, mpe_complete(m.spn, params, row).tree);
    for (NodeId id : m.spn.evaluation_order()) {
      if (!reached[id.value]) continue;
      ++count[id.value];
      const auto& sc = m.spn.scope(id);
      if (sum[id.value].empty()) {
        sum[id.value].assign(sc.size(), 0.0);
        lo[id.value].assign(sc.size(), std::numeric_limits<double>::infinity());
        hi[id.value].assign(sc.size(), -std::numeric_limits<double>::infinity());
        obs[id.value].assign(sc.size(), 0);
      }
      for (std::size_t i = 0; i < sc.size(); ++i) {
        if (!row.is_observed(sc[i])) continue;
        const double x = row.values[sc[i]];
        sum[id.value][i] += x;
        lo[id.value][i] = std::min(lo[id.value][i], x);
        hi[id.value][i] = std::max(hi[id.value][i], x);
        ++obs[id.value][i];
      }
    }
  }
  std::vector<PartitionNode> out;
  const auto& order = m.spn.evaluation_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    PartitionNode p;
    p.id = *it;
    p.type = m.spn.is_sum(*it) ? "sum" : m.spn.is_product(*it) ? "product" : "leaf";
    p.path = anc.paths[it->value];
    p.rows = count[it->value];
    const auto& sc = m.spn.scope(*it);
    for (std::size_t i = 0; i < sc.size() && !sum[it->value].empty(); ++i) {
      PartitionNode::FeatureSummary f;
      f.feature = sc[i];
      f.count = obs[it->value][i];
      if (f.count) {
        f.mean = sum[it->value][i] / static_cast<double>(f.count);
        f.min = lo[it->value][i];
        f.max = hi[it->value][i];
      }
      p.summary.push_back(f);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace abda
