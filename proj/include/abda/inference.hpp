#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/gibbs.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"
#include "abda/spn.hpp"
#include "abda/structure.hpp"

namespace abda {

/// A fitted model: structure, dictionaries, retained posterior draws and the
/// settings that produced them.
struct Model {
  std::vector<std::string> feature_names;
  std::vector<MetaType> meta;
  std::vector<FeatureStats> train_stats;
  Spn spn;
  std::vector<Dictionary> dictionaries;
  LeafSpecs leaf_specs;
  std::vector<PosteriorDraw> draws;
  SpnParams final_params;
  std::vector<std::size_t> node_row_counts;
  std::vector<double> trace;  // mean train log-likelihood per iteration
  double sparsity = 1.0;
  StructureConfig structure_config;
  GibbsConfig gibbs_config;
  PriorConfig prior_config;
  std::uint64_t dataset_hash = 0;
  std::uint64_t seed = 0;  // seed the run was requested with

  std::size_t num_features() const { return spn.num_features(); }

  /// Draw with the highest mean train log-likelihood (first on ties).
  const PosteriorDraw& best_draw() const {
    if (draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
    std::size_t best = 0;
    for (std::size_t i = 1; i < draws.size(); ++i) {
      if (draws[i].train_loglik > draws[best].train_loglik) best = i;
    }
    return draws[best];
  }
};

struct FitOptions {
  StructureConfig structure;
  GibbsConfig gibbs;
  PriorConfig priors;
  bool init_from_structure = true;
};

inline std::vector<Dictionary> build_dictionaries(const Dataset& data, const PriorConfig& priors) {
  std::vector<Dictionary> out;
  for (std::size_t d = 0; d < data.cols(); ++d) {
    const auto stats = compute_feature_stats(data.observed_column(d));
    if (stats.count == 0) throw Error(ErrorCode::EmptyColumn, "column '" + data.name(d) + "' has no observed cells");
    out.push_back(default_dictionary(data.meta(d), stats, priors));
  }
  return out;
}

/// Structure learning followed by Gibbs sampling.
inline Model fit(const Dataset& data, const FitOptions& opt) {
  opt.gibbs.check();
  Model m;
  m.feature_names = data.names();
  m.meta = data.meta_types();
  m.train_stats = feature_stats(data);
  m.dictionaries = build_dictionaries(data, opt.priors);
  m.structure_config = opt.structure;
  m.gibbs_config = opt.gibbs;
  m.prior_config = opt.priors;
  m.dataset_hash = dataset_hash(data);
  m.seed = opt.gibbs.seed;
  LearnedStructure learned = learn_structure(data, opt.structure);
  m.spn = std::move(learned.spn);
  learned.weights.concentration = opt.gibbs.gamma;
  GibbsResult res = run(m.spn, data, m.dictionaries, opt.gibbs, &learned.weights,
                        opt.init_from_structure ? &learned.node_rows : nullptr);
  m.leaf_specs = res.state.specs;
  m.final_params = res.state.params;
  m.node_row_counts = res.state.node_row_counts;
  m.sparsity = structure_sparsity(res.state, m.spn);
  m.draws = std::move(res.draws);
  for (const auto& t : res.trace) m.trace.push_back(t.mean_loglik);
  return m;
}

inline RowView row_of(const Dataset& data, std::size_t n) { return {data.row_values(n), data.row_mask(n)}; }

/// Posterior-predictive log density: log-mean-exp of log S(x^o) over draws.
inline double predictive_log_density(const Model& m, RowView row, std::vector<double>& scratch,
                                     std::vector<double>& per_draw) {
  if (m.draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
  per_draw.resize(m.draws.size());
  for (std::size_t i = 0; i < m.draws.size(); ++i) per_draw[i] = log_density(m.spn, m.draws[i].params, row, scratch);
  return log_mean_exp(per_draw);
}

inline double predictive_log_density(const Model& m, RowView row) {
  std::vector<double> scratch;
  std::vector<double> per_draw;
  return predictive_log_density(m, row, scratch, per_draw);
}

/// Mean over rows of the posterior-predictive log density.
inline double mean_test_loglik(const Model& m, const Dataset& data) {
  std::vector<double> scratch;
  std::vector<double> per_draw;
  double acc = 0.0;
  for (std::size_t n = 0; n < data.rows(); ++n) acc += predictive_log_density(m, row_of(data, n), scratch, per_draw);
  return data.rows() ? acc / static_cast<double>(data.rows()) : 0.0;
}

enum class ImputeMode { MapSample, McAverage };

/// Completes the unobserved cells of `row`. MapSample decodes with the
/// highest-likelihood draw; McAverage averages decodes over all draws
/// (continuous) or takes the most frequent value (discrete, ties to the
/// smallest value).
inline std::vector<double> impute(const Model& m, RowView row, ImputeMode mode = ImputeMode::MapSample) {
  if (m.draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
  const std::size_t D = m.num_features();
  bool any_missing = false;
  for (std::size_t d = 0; d < D; ++d) any_missing = any_missing || !row.is_observed(d);
  if (!any_missing) return {row.values.begin(), row.values.end()};
  if (mode == ImputeMode::MapSample) return mpe_complete(m.spn, m.best_draw().params, row).values;

  std::vector<double> sum(D, 0.0);
  std::vector<std::map<double, std::size_t>> votes(D);
  for (const auto& draw : m.draws) {
    const auto completed = mpe_complete(m.spn, draw.params, row).values;
    for (std::size_t d = 0; d < D; ++d) {
      if (row.is_observed(d)) continue;
      if (m.meta[d] == MetaType::Continuous) {
        sum[d] += completed[d];
      } else {
        ++votes[d][completed[d]];
      }
    }
  }
  std::vector<double> out(row.values.begin(), row.values.end());
  for (std::size_t d = 0; d < D; ++d) {
    if (row.is_observed(d)) continue;
    if (m.meta[d] == MetaType::Continuous) {
      out[d] = sum[d] / static_cast<double>(m.draws.size());
    } else {
      std::size_t top = 0;
      for (const auto& [v, c] : votes[d]) {
        if (c > top) {
          top = c;
          out[d] = v;
        }
      }
    }
  }
  return out;
}

inline Dataset impute_dataset(const Model& m, const Dataset& data, ImputeMode mode = ImputeMode::MapSample) {
  Dataset out(data.names(), data.meta_types(), 0);
  out.provenance = data.provenance;
  for (std::size_t n = 0; n < data.rows(); ++n) out.push_row(impute(m, row_of(data, n), mode));
  return out;
}

/// Mean per-entry log-probability of the true values of the missing cells,
/// with every other cell marginalized (joint marginal of the missing set).
/// `truth` holds the full row; `missing` marks the cells to score.
inline double missing_entry_loglik(const Model& m, std::span<const double> truth, std::span<const std::uint8_t> missing) {
  std::vector<std::uint8_t> mask(missing.size());
  std::size_t count = 0;
  for (std::size_t d = 0; d < missing.size(); ++d) {
    mask[d] = missing[d] ? 1 : 0;
    count += mask[d];
  }
  if (count == 0) throw Error(ErrorCode::NoMissing, "row has no missing cells to score");
  const double joint = predictive_log_density(m, RowView{truth, mask});
  return joint / static_cast<double>(count);
}

struct AnomalyScore {
  std::size_t row = 0;
  double score = 0.0;  // -log p(x_n)
  std::vector<std::pair<std::uint32_t, std::uint32_t>> path;  // (sum node, chosen child position), root first
};

/// Sum nodes on the decoded tree of a row under `params`, root first.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> partition_path(const Spn& spn, const SpnParams& params,
                                                                           RowView row) {
  const MpeResult mpe = mpe_complete(spn, params, row);
  const auto reached = reached_nodes(spn, mpe.tree);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> path;
  const auto& order = spn.evaluation_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!reached[it->value]) continue;
    if (const auto* sum = std::get_if<SumNode>(&spn.node(*it))) {
      path.emplace_back(it->value, mpe.tree.choice[sum->weight_index]);
    }
  }
  return path;
}

/// Negative posterior-predictive log-likelihood per row, sorted descending.
inline std::vector<AnomalyScore> anomaly_scores(const Model& m, const Dataset& data, bool with_paths = true) {
  std::vector<AnomalyScore> out(data.rows());
  std::vector<double> scratch;
  std::vector<double> per_draw;
  const SpnParams* best = with_paths ? &m.best_draw().params : nullptr;
  for (std::size_t n = 0; n < data.rows(); ++n) {
    out[n].row = n;
    out[n].score = -predictive_log_density(m, row_of(data, n), scratch, per_draw);
    if (best) out[n].path = partition_path(m.spn, *best, row_of(data, n));
  }
  std::stable_sort(out.begin(), out.end(), [](const AnomalyScore& a, const AnomalyScore& b) { return a.score > b.score; });
  return out;
}

struct TypePosterior {
  std::size_t feature = 0;
  std::vector<Kind> kinds;  // dictionary order
  std::vector<double> kind_prob;
  std::vector<double> kind_se;
  std::array<double, kNumStatTypes> type_prob{};
  std::array<double, kNumStatTypes> type_se{};

  /// Most likely kind; ties go to the earlier dictionary entry.
  Kind top_kind() const {
    return kinds[static_cast<std::size_t>(std::max_element(kind_prob.begin(), kind_prob.end()) - kind_prob.begin())];
  }
  StatType top_type() const {
    return static_cast<StatType>(std::max_element(type_prob.begin(), type_prob.end()) - type_prob.begin());
  }
};

/// p(T^d = t | X): per draw, the network evaluated with leaves of other
/// features at 1 and leaves of d at their total weight on kind t, averaged
/// over draws.
inline TypePosterior type_posterior(const Model& m, std::size_t d) {
  if (m.draws.empty()) throw Error(ErrorCode::NoPosterior, "model has no posterior draws");
  if (d >= m.num_features()) throw Error(ErrorCode::InvalidArgument, "feature index out of range");
  TypePosterior tp;
  tp.feature = d;
  for (const auto& spec : m.dictionaries[d]) {
    if (std::find(tp.kinds.begin(), tp.kinds.end(), spec.kind) == tp.kinds.end()) tp.kinds.push_back(spec.kind);
  }
  const std::size_t K = tp.kinds.size();
  std::vector<double> sum(K, 0.0);
  std::vector<double> sum_sq(K, 0.0);
  std::array<double, kNumStatTypes> tsum{};
  std::array<double, kNumStatTypes> tsum_sq{};
  std::vector<double> overrides(m.spn.size(), 0.0);
  std::vector<double> scratch;
  std::vector<double> p(K);
  for (const auto& draw : m.draws) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < m.spn.leaves_by_feature(d).size(); ++j) {
        const auto& mix = draw.params.leaf(d, j);
        double acc = kNegInf;
        for (std::size_t l = 0; l < mix.components.size(); ++l) {
          if (kind_of(mix.components[l]) == tp.kinds[k]) acc = log_add(acc, mix.log_weights[l]);
        }
        overrides[m.spn.leaves_by_feature(d)[j].value] = acc;
      }
      p[k] = std::exp(eval_with_leaf_overrides(m.spn, draw.params.sums, overrides, scratch));
    }
    // renormalize away rounding so each draw sits on the simplex
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    std::array<double, kNumStatTypes> t{};
    for (std::size_t k = 0; k < K; ++k) {
      p[k] /= total;
      sum[k] += p[k];
      sum_sq[k] += p[k] * p[k];
      t[static_cast<std::size_t>(stat_type_of(tp.kinds[k]))] += p[k];
    }
    for (std::size_t i = 0; i < kNumStatTypes; ++i) {
      tsum[i] += t[i];
      tsum_sq[i] += t[i] * t[i];
    }
  }
  const double n = static_cast<double>(m.draws.size());
  auto se = [n](double s, double s2) {
    if (n < 2) return 0.0;
    const double mean = s / n;
    return std::sqrt(std::max(0.0, (s2 / n - mean * mean) * n / (n - 1)) / n);
  };
  tp.kind_prob.resize(K);
  tp.kind_se.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    tp.kind_prob[k] = sum[k] / n;
    tp.kind_se[k] = se(sum[k], sum_sq[k]);
  }
  for (std::size_t i = 0; i < kNumStatTypes; ++i) {
    tp.type_prob[i] = tsum[i] / n;
    tp.type_se[i] = se(tsum[i], tsum_sq[i]);
  }
  return tp;
}

/// RMSE of one feature divided by its range.
inline double nrmse(std::span<const double> imputed, std::span<const double> truth, double range) {
  if (!(range > 0.0)) throw Error(ErrorCode::ZeroRange, "feature range is zero");
  if (imputed.size() != truth.size()) throw Error(ErrorCode::InvalidArgument, "length mismatch");
  if (imputed.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    const double e = imputed[i] - truth[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(imputed.size())) / range;
}

/// Rank-based area under the ROC curve; higher scores mean positive.
inline double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "length mismatch");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "both classes are required");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[idx[t]]) rank_sum += avg;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "length mismatch");
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error(ErrorCode::InvalidArgument, "cosine similarity of a zero vector");
  return ab / std::sqrt(aa * bb);
}

}  // namespace abda
