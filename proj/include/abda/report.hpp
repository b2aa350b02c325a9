#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/inference.hpp"
#include "abda/model_io.hpp"
#include "abda/patterns.hpp"

namespace abda {

struct DensityGrid {
  std::size_t feature = 0;
  std::vector<double> x;
  std::vector<double> marginal;                  // posterior predictive marginal
  std::vector<NodeId> leaves;                    // one column per partition of the feature
  std::vector<std::vector<double>> per_leaf;     // [leaf][point], best draw
};

/// Marginal density of feature d on a grid spanning the training range
/// (integers for discrete features), together with the density of every
/// leaf of d under the highest-likelihood draw.
inline DensityGrid density_grid(const Model& m, std::size_t d, std::size_t points = 200) {
  if (d >= m.num_features()) throw Error(ErrorCode::InvalidArgument, "feature out of range");
  DensityGrid g;
  g.feature = d;
  const auto& st = m.train_stats[d];
  if (m.meta[d] == MetaType::Discrete) {
    for (double v = std::floor(st.min); v <= std::ceil(st.max); v += 1.0) g.x.push_back(v);
  } else {
    const double pad = st.max > st.min ? 0.1 * (st.max - st.min) : 1.0;
    const double lo = st.min - pad;
    const double hi = st.max + pad;
    const std::size_t n = std::max<std::size_t>(points, 2);
    for (std::size_t i = 0; i < n; ++i) g.x.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  std::vector<double> values(m.num_features(), 0.0);
  std::vector<std::uint8_t> mask(m.num_features(), 0);
  mask[d] = 1;
  std::vector<double> scratch;
  std::vector<double> per_draw;
  const auto& best = m.best_draw().params;
  g.leaves = m.spn.leaves_by_feature(d);
  g.per_leaf.assign(g.leaves.size(), {});
  for (double x : g.x) {
    values[d] = x;
    g.marginal.push_back(std::exp(predictive_log_density(m, RowView{values, mask}, scratch, per_draw)));
    for (std::size_t j = 0; j < g.leaves.size(); ++j) g.per_leaf[j].push_back(std::exp(leaf_log_value(best.leaf(d, j), x)));
  }
  return g;
}

/// Long format: feature,x,curve,density with curve "marginal" or "leaf<id>".
inline void write_density_csv(std::ostream& out, const Model& m, std::size_t points = 200) {
  out << "feature,x,curve,density\n";
  for (std::size_t d = 0; d < m.num_features(); ++d) {
    const auto g = density_grid(m, d, points);
    for (std::size_t i = 0; i < g.x.size(); ++i) {
      out << m.feature_names[d] << ',' << format_double(g.x[i]) << ",marginal," << format_double(g.marginal[i]) << '\n';
      for (std::size_t j = 0; j < g.leaves.size(); ++j) {
        out << m.feature_names[d] << ',' << format_double(g.x[i]) << ",leaf" << g.leaves[j].value << ','
            << format_double(g.per_leaf[j][i]) << '\n';
      }
    }
  }
}

inline void write_types_csv(std::ostream& out, const Model& m) {
  out << "feature,top_kind,top_type";
  for (std::size_t t = 0; t < kNumStatTypes; ++t) out << ",p_" << to_string(static_cast<StatType>(t));
  for (std::size_t k = 0; k < kNumKinds; ++k) out << ",p_" << to_string(static_cast<Kind>(k));
  out << '\n';
  for (std::size_t d = 0; d < m.num_features(); ++d) {
    const auto tp = type_posterior(m, d);
    out << m.feature_names[d] << ',' << to_string(tp.top_kind()) << ',' << to_string(tp.top_type());
    for (std::size_t t = 0; t < kNumStatTypes; ++t) out << ',' << format_double(tp.type_prob[t]);
    for (std::size_t k = 0; k < kNumKinds; ++k) {
      double p = 0.0;
      for (std::size_t i = 0; i < tp.kinds.size(); ++i) {
        if (static_cast<std::size_t>(tp.kinds[i]) == k) p += tp.kind_prob[i];
      }
      out << ',' << format_double(p);
    }
    out << '\n';
  }
}

/// Markdown summary: types, partition tree and top patterns. The density
/// grids go to a separate CSV named in the report.
inline void write_report(std::ostream& out, const Model& m, const Dataset& data, const std::string& density_csv_name,
                         const MiningConfig& mining = {}, std::size_t top_patterns = 10) {
  char buf[256];
  out << "# Model report\n\n";
  out << "- rows: " << data.rows() << "\n- features: " << m.num_features() << "\n- nodes: " << m.spn.size()
      << "\n- posterior draws: " << m.draws.size() << "\n- seed: " << m.seed
      << "\n- dataset hash: " << hex64(m.dataset_hash) << "\n- config hash: " << hex64(config_hash(m)) << '\n';
  if (dataset_hash(data) != m.dataset_hash) out << "- note: data differs from the training data\n";
  std::snprintf(buf, sizeof buf, "- structure sparsity: %.3f\n", m.sparsity);
  out << buf;
  std::snprintf(buf, sizeof buf, "- mean log-likelihood: %.4f\n\n", mean_test_loglik(m, data));
  out << buf;

  out << "## Feature types\n\n| feature | meta | kind | type | p(type) |\n|---|---|---|---|---|\n";
  for (std::size_t d = 0; d < m.num_features(); ++d) {
    const auto tp = type_posterior(m, d);
    std::snprintf(buf, sizeof buf, "%.3f", tp.type_prob[static_cast<std::size_t>(tp.top_type())]);
    out << "| " << m.feature_names[d] << " | " << to_string(m.meta[d]) << " | " << to_string(tp.top_kind()) << " | "
        << to_string(tp.top_type()) << " | " << buf << " |\n";
  }

  out << "\n## Marginal densities\n\nGrids in `" << density_csv_name
      << "` (columns feature, x, curve, density; one curve per leaf).\n\n";

  out << "## Partition tree\n\n";
  auto nodes = partition_report(m, data);
  std::sort(nodes.begin(), nodes.end(), [](const PartitionNode& a, const PartitionNode& b) { return a.path < b.path; });
  for (const auto& p : nodes) {
    out << std::string(2 * (p.path.size() - 1), ' ') << "- " << p.type << ' ' << p.id.value << " (" << p.rows
        << " rows)";
    if (p.type == "leaf" && !p.summary.empty() && p.summary[0].count > 0) {
      const auto& f = p.summary[0];
      std::snprintf(buf, sizeof buf, ": %s mean %.3f in [%.3f, %.3f]", m.feature_names[f.feature].c_str(), f.mean,
                    f.min, f.max);
      out << buf;
    }
    out << '\n';
  }

  out << "\n## Top patterns\n\n";
  const auto atoms = extract_atoms(m, mining.lambda, mining.weight_floor);
  const auto pats = mine(m, atoms, mining);
  if (pats.empty()) out << "No pattern reaches the thresholds.\n";
  for (std::size_t i = 0; i < pats.size() && i < top_patterns; ++i) {
    out << i + 1 << ". " << format_pattern(pats[i], atoms, m.feature_names) << '\n';
  }
}

}  // namespace abda
