#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <thread>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"
#include "abda/spn.hpp"

namespace abda {

struct GibbsConfig {
  std::size_t iterations = 200;
  std::size_t burn_in = 100;
  std::size_t thinning = 1;
  double gamma = 10.0;  // sum-weight Dirichlet concentration
  double alpha = 0.1;   // leaf-weight Dirichlet concentration
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool freeze_leaves = false;  // keep eta and w at their initial values

  void check() const {
    if (iterations == 0) throw Error(ErrorCode::InvalidArgument, "iterations must be positive");
    if (burn_in >= iterations) throw Error(ErrorCode::InvalidArgument, "burn-in must be smaller than iterations");
    if (thinning == 0) throw Error(ErrorCode::InvalidArgument, "thinning must be positive");
    if (!(gamma > 0.0) || !(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "Dirichlet concentrations must be positive");
    if (threads == 0) throw Error(ErrorCode::InvalidArgument, "threads must be positive");
  }
};

/// Per-leaf copies of the feature dictionaries; Gamma shapes are fixed per
/// leaf component at initialization. Indexed [feature][leaf slot][component].
using LeafSpecs = std::vector<std::vector<Dictionary>>;

/// Optional structure-learning side information for initialization: rows
/// that each node's slice held, indexed by NodeId.
using NodeRows = std::vector<std::vector<std::size_t>>;

struct GibbsState {
  SpnParams params;
  LeafSpecs specs;
  std::size_t rows = 0;
  std::size_t features = 0;
  std::size_t sums = 0;
  std::vector<std::uint32_t> leaf_slots;     // rows x features
  std::vector<std::uint32_t> sum_choice;     // rows x sums
  std::vector<std::uint8_t> sum_attached;    // rows x sums
  std::vector<std::int32_t> components;      // rows x features, -1 if missing
  std::vector<std::vector<std::vector<SufficientStats>>> stats;  // [d][j][l]
  std::vector<std::vector<double>> edge_counts;                  // [sum][child]
  std::vector<std::size_t> node_row_counts;                      // rows whose tree reaches the node

  std::uint32_t leaf_slot(std::size_t n, std::size_t d) const { return leaf_slots[n * features + d]; }
  std::int32_t component(std::size_t n, std::size_t d) const { return components[n * features + d]; }

  InducedTree tree(std::size_t n) const {
    InducedTree t;
    t.choice.assign(sum_choice.begin() + static_cast<std::ptrdiff_t>(n * sums),
                    sum_choice.begin() + static_cast<std::ptrdiff_t>((n + 1) * sums));
    t.attached.assign(sum_attached.begin() + static_cast<std::ptrdiff_t>(n * sums),
                      sum_attached.begin() + static_cast<std::ptrdiff_t>((n + 1) * sums));
    t.leaf_slots.assign(leaf_slots.begin() + static_cast<std::ptrdiff_t>(n * features),
                        leaf_slots.begin() + static_cast<std::ptrdiff_t>((n + 1) * features));
    return t;
  }
};

struct TraceEntry {
  std::size_t iteration = 0;
  double mean_loglik = 0.0;
  double seconds = 0.0;
};

/// One retained draw of (Omega, w, eta) with its mean train log-likelihood.
struct PosteriorDraw {
  std::size_t iteration = 0;
  double train_loglik = 0.0;
  SpnParams params;
};

struct GibbsResult {
  std::vector<PosteriorDraw> draws;
  std::vector<TraceEntry> trace;
  GibbsState state;
};

namespace detail {

inline void merge_stats(SufficientStats& into, const SufficientStats& from) {
  into.count += from.count;
  into.sum += from.sum;
  into.sum_sq += from.sum_sq;
  for (std::size_t i = 0; i < into.category_counts.size(); ++i) into.category_counts[i] += from.category_counts[i];
}

inline std::vector<std::vector<std::vector<SufficientStats>>> empty_leaf_stats(const LeafSpecs& specs) {
  std::vector<std::vector<std::vector<SufficientStats>>> out(specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    out[d].resize(specs[d].size());
    for (std::size_t j = 0; j < specs[d].size(); ++j) {
      for (const auto& spec : specs[d][j]) out[d][j].push_back(empty_stats(spec));
    }
  }
  return out;
}

inline std::vector<std::vector<double>> zero_edge_counts(const Spn& spn) {
  std::vector<std::vector<double>> out(spn.num_sums());
  for (std::size_t s = 0; s < spn.num_sums(); ++s) {
    out[s].assign(std::get<SumNode>(spn.node(spn.sum_node(s))).children.size(), 0.0);
  }
  return out;
}

// Row-level scratch and accumulators; one per worker.
struct SweepWorker {
  std::vector<double> values;
  std::vector<std::uint8_t> reached;
  std::vector<double> comp_log;
  InducedTree tree;
  std::vector<std::vector<std::vector<SufficientStats>>> stats;
  std::vector<std::vector<double>> edge_counts;
  std::vector<std::size_t> node_row_counts;
  double loglik = 0.0;
};

}  // namespace detail

/// Resamples (Z_n, s_n) for rows [begin, end) and accumulates counts.
inline void sweep_rows(const Spn& spn, const Dataset& data, GibbsState& state, std::size_t begin, std::size_t end,
                       Rng& rng, detail::SweepWorker& w) {
  const std::size_t D = state.features;
  const std::size_t S = state.sums;
  for (std::size_t n = begin; n < end; ++n) {
    const RowView row{data.row_values(n), data.row_mask(n)};
    evaluate_nodes(spn, state.params, row, w.values);
    const double root = w.values[spn.root().value];
    if (!std::isfinite(root)) {
      // locate the offending leaf for the diagnostic
      std::size_t bad = spn.root().value;
      for (NodeId id : spn.evaluation_order()) {
        if (!std::isfinite(w.values[id.value])) {
          bad = id.value;
          break;
        }
      }
      throw Error(ErrorCode::NonFiniteLikelihood,
                  "row " + std::to_string(n) + " has non-finite likelihood at node " + std::to_string(bad));
    }
    w.loglik += root;
    sample_induced_tree(spn, state.params.sums, w.values, rng, w.tree, w.reached);
    for (std::size_t s = 0; s < S; ++s) {
      state.sum_choice[n * S + s] = w.tree.choice[s];
      state.sum_attached[n * S + s] = w.tree.attached[s];
      w.edge_counts[s][w.tree.choice[s]] += 1.0;
    }
    for (NodeId id : spn.evaluation_order()) {
      if (w.reached[id.value]) ++w.node_row_counts[id.value];
    }
    for (std::size_t d = 0; d < D; ++d) {
      const std::uint32_t j = w.tree.leaf_slots[d];
      state.leaf_slots[n * D + d] = j;
      if (!row.is_observed(d)) {
        state.components[n * D + d] = -1;
        continue;
      }
      const double x = row.values[d];
      const LeafMixture& mix = state.params.leaf(d, j);
      w.comp_log.resize(mix.components.size());
      for (std::size_t l = 0; l < mix.components.size(); ++l) {
        w.comp_log[l] = mix.log_weights[l] == kNegInf ? kNegInf : mix.log_weights[l] + log_pdf(mix.components[l], x);
      }
      const std::size_t l = sample_log_categorical(w.comp_log, rng);
      state.components[n * D + d] = static_cast<std::int32_t>(l);
      w.stats[d][j][l].add(x);
    }
  }
}

/// Draws eta, w and Omega from their conditionals given the counts in state.
inline void resample_parameters(const Spn& spn, GibbsState& state, const GibbsConfig& cfg, Rng& rng) {
  if (!cfg.freeze_leaves) {
    for (std::size_t d = 0; d < state.features; ++d) {
      for (std::size_t j = 0; j < state.specs[d].size(); ++j) {
        auto& mix = state.params.leaves[d][j];
        for (std::size_t l = 0; l < mix.components.size(); ++l) {
          mix.components[l] = posterior_sample(state.specs[d][j][l], state.stats[d][j][l], rng);
        }
      }
    }
    std::vector<double> conc;
    for (std::size_t d = 0; d < state.features; ++d) {
      for (std::size_t j = 0; j < state.specs[d].size(); ++j) {
        auto& mix = state.params.leaves[d][j];
        conc.assign(mix.components.size(), cfg.alpha);
        for (std::size_t l = 0; l < conc.size(); ++l) conc[l] += state.stats[d][j][l].count;
        mix.log_weights = sample_log_dirichlet(conc, rng);
      }
    }
  }
  std::vector<double> conc;
  for (std::size_t s = 0; s < spn.num_sums(); ++s) {
    conc = state.edge_counts[s];
    for (double& c : conc) c += cfg.gamma;
    state.params.sums.log_weights[s] = sample_log_dirichlet(conc, rng);
  }
  state.params.sums.concentration = cfg.gamma;
}

/// One Gibbs scan: all (Z_n, s_n), then eta, w, Omega. Returns the mean
/// log-likelihood of the rows under the parameters the sweep started from.
inline double sweep(GibbsState& state, const Spn& spn, const Dataset& data, const GibbsConfig& cfg, Rng& rng) {
  const std::size_t N = state.rows;
  const std::size_t T = std::max<std::size_t>(1, std::min(cfg.threads, N));
  std::vector<detail::SweepWorker> workers(T);
  for (auto& w : workers) {
    w.values.resize(spn.size());
    w.stats = detail::empty_leaf_stats(state.specs);
    w.edge_counts = detail::zero_edge_counts(spn);
    w.node_row_counts.assign(spn.size(), 0);
  }
  if (T == 1) {
    sweep_rows(spn, data, state, 0, N, rng, workers[0]);
  } else {
    std::vector<std::uint64_t> seeds(T);
    const std::uint64_t base = rng();
    for (std::size_t t = 0; t < T; ++t) seeds[t] = mix_seed(base, t);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(T);
    for (std::size_t t = 0; t < T; ++t) {
      pool.emplace_back([&, t] {
        try {
          Rng local(seeds[t]);
          sweep_rows(spn, data, state, N * t / T, N * (t + 1) / T, local, workers[t]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t t = 1; t < T; ++t) {
      auto& w = workers[t];
      for (std::size_t d = 0; d < w.stats.size(); ++d) {
        for (std::size_t j = 0; j < w.stats[d].size(); ++j) {
          for (std::size_t l = 0; l < w.stats[d][j].size(); ++l) detail::merge_stats(workers[0].stats[d][j][l], w.stats[d][j][l]);
        }
      }
      for (std::size_t s = 0; s < w.edge_counts.size(); ++s) {
        for (std::size_t c = 0; c < w.edge_counts[s].size(); ++c) workers[0].edge_counts[s][c] += w.edge_counts[s][c];
      }
      for (std::size_t i = 0; i < w.node_row_counts.size(); ++i) workers[0].node_row_counts[i] += w.node_row_counts[i];
      workers[0].loglik += w.loglik;
    }
  }
  state.stats = std::move(workers[0].stats);
  state.edge_counts = std::move(workers[0].edge_counts);
  state.node_row_counts = std::move(workers[0].node_row_counts);
  resample_parameters(spn, state, cfg, rng);
  return N ? workers[0].loglik / static_cast<double>(N) : 0.0;
}

/// Builds per-leaf specs, sets Gamma shapes by moments, assigns initial
/// trees and components, and draws eta from the resulting posteriors.
/// With `node_rows`, initial trees follow the structure-learning partition
/// (sums a row's slice never reached are drawn from the prior); without, all
/// trees are prior draws.
inline GibbsState init_state(const Spn& spn, const Dataset& data, const std::vector<Dictionary>& dictionaries,
                             const GibbsConfig& cfg, Rng& rng, const SumWeights* initial_weights = nullptr,
                             const NodeRows* node_rows = nullptr) {
  cfg.check();
  if (!spn.validate().ok()) throw Error(ErrorCode::InvalidModel, "structure fails validation");
  if (data.cols() != spn.num_features() || dictionaries.size() != spn.num_features()) {
    throw Error(ErrorCode::InvalidArgument, "data, structure and dictionaries disagree on the feature count");
  }
  const std::size_t N = data.rows();
  const std::size_t D = data.cols();
  const std::size_t S = spn.num_sums();
  GibbsState st;
  st.rows = N;
  st.features = D;
  st.sums = S;
  st.params.sums = initial_weights ? *initial_weights : uniform_sum_weights(spn, cfg.gamma);
  st.params.sums.concentration = cfg.gamma;
  if (st.params.sums.log_weights.size() != S) throw Error(ErrorCode::InvalidArgument, "initial sum weights do not match");

  // initial trees
  st.leaf_slots.assign(N * D, 0);
  st.sum_choice.assign(N * S, 0);
  st.sum_attached.assign(N * S, 0);
  {
    std::vector<double> zeros(spn.size(), 0.0);
    InducedTree tree;
    std::vector<std::uint8_t> reached;
    for (std::size_t n = 0; n < N; ++n) {
      sample_induced_tree(spn, st.params.sums, zeros, rng, tree, reached);
      for (std::size_t s = 0; s < S; ++s) {
        st.sum_choice[n * S + s] = tree.choice[s];
        st.sum_attached[n * S + s] = 0;
      }
      for (std::size_t d = 0; d < D; ++d) st.leaf_slots[n * D + d] = tree.leaf_slots[d];
    }
    if (node_rows) {
      for (std::size_t s = 0; s < S; ++s) {
        const auto& sum = std::get<SumNode>(spn.node(spn.sum_node(s)));
        for (std::size_t c = 0; c < sum.children.size(); ++c) {
          for (std::size_t n : (*node_rows)[sum.children[c].value]) {
            st.sum_choice[n * S + s] = static_cast<std::uint32_t>(c);
            st.sum_attached[n * S + s] = 1;
          }
        }
      }
      for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t j = 0; j < spn.leaves_by_feature(d).size(); ++j) {
          for (std::size_t n : (*node_rows)[spn.leaves_by_feature(d)[j].value]) {
            st.leaf_slots[n * D + d] = static_cast<std::uint32_t>(j);
          }
        }
      }
    } else {
      for (std::size_t n = 0; n < N; ++n) {
        const auto reached = reached_nodes(spn, st.tree(n));
        for (std::size_t s = 0; s < S; ++s) st.sum_attached[n * S + s] = reached[spn.sum_node(s).value];
      }
    }
  }

  // per-leaf specs with moment-matched Gamma shapes
  st.specs.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t J = spn.leaves_by_feature(d).size();
    std::vector<std::vector<double>> assigned(J);
    for (std::size_t n = 0; n < N; ++n) {
      if (data.observed(n, d)) assigned[st.leaf_slots[n * D + d]].push_back(data.value(n, d));
    }
    st.specs[d].assign(J, dictionaries[d]);
    for (std::size_t j = 0; j < J; ++j) {
      for (auto& spec : st.specs[d][j]) {
        if (spec.kind == Kind::Gamma) spec.gamma_shape = moment_matched_shape(assigned[j]);
      }
    }
  }

  // uniform s over the components whose support holds the value
  st.components.assign(N * D, -1);
  st.stats = detail::empty_leaf_stats(st.specs);
  std::vector<std::size_t> ok;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      if (!data.observed(n, d)) continue;
      const double x = data.value(n, d);
      const std::uint32_t j = st.leaf_slots[n * D + d];
      ok.clear();
      for (std::size_t l = 0; l < st.specs[d][j].size(); ++l) {
        if (spec_supports(st.specs[d][j][l], x)) ok.push_back(l);
      }
      if (ok.empty()) {
        throw Error(ErrorCode::InvalidData, "row " + std::to_string(n) + ", feature " + std::to_string(d) +
                                                ": value outside every dictionary entry");
      }
      const std::size_t l = ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)];
      st.components[n * D + d] = static_cast<std::int32_t>(l);
      st.stats[d][j][l].add(x);
    }
  }

  st.params.leaves.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t J = st.specs[d].size();
    st.params.leaves[d].resize(J);
    for (std::size_t j = 0; j < J; ++j) {
      auto& mix = st.params.leaves[d][j];
      const std::size_t L = st.specs[d][j].size();
      mix.log_weights.assign(L, -std::log(static_cast<double>(L)));
      mix.components.clear();
      for (std::size_t l = 0; l < L; ++l) mix.components.push_back(posterior_sample(st.specs[d][j][l], st.stats[d][j][l], rng));
    }
  }
  st.edge_counts = detail::zero_edge_counts(spn);
  st.node_row_counts.assign(spn.size(), 0);
  return st;
}

/// Mean log-likelihood of the data rows under `params`.
inline double mean_loglik(const Spn& spn, const SpnParams& params, const Dataset& data) {
  std::vector<double> scratch(spn.size());
  double acc = 0.0;
  for (std::size_t n = 0; n < data.rows(); ++n) {
    acc += log_density(spn, params, RowView{data.row_values(n), data.row_mask(n)}, scratch);
  }
  return data.rows() ? acc / static_cast<double>(data.rows()) : 0.0;
}

/// Runs `iterations` sweeps from `state`, retaining draws after burn-in at
/// the thinning stride. Each trace entry holds the mean train log-likelihood
/// of the parameters produced by that iteration.
inline GibbsResult run_from(GibbsState state, const Spn& spn, const Dataset& data, const GibbsConfig& cfg, Rng& rng) {
  cfg.check();
  GibbsResult out;
  out.trace.reserve(cfg.iterations);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  bool pending = false;  // last retained draw awaits its likelihood
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const double incoming = sweep(state, spn, data, cfg, rng);
    if (it > 0) {
      out.trace.back().mean_loglik = incoming;
      if (pending) out.draws.back().train_loglik = incoming;
    }
    out.trace.push_back({it, 0.0, std::chrono::duration<double>(clock::now() - start).count()});
    pending = it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thinning == 0;
    if (pending) out.draws.push_back({it, 0.0, state.params});
  }
  const double last = mean_loglik(spn, state.params, data);
  out.trace.back().mean_loglik = last;
  if (pending) out.draws.back().train_loglik = last;
  out.state = std::move(state);
  return out;
}

inline GibbsResult run(const Spn& spn, const Dataset& data, const std::vector<Dictionary>& dictionaries,
                       const GibbsConfig& cfg, const SumWeights* initial_weights = nullptr,
                       const NodeRows* node_rows = nullptr) {
  Rng rng(cfg.seed);
  GibbsState state = init_state(spn, data, dictionaries, cfg, rng, initial_weights, node_rows);
  return run_from(std::move(state), spn, data, cfg, rng);
}

/// Fraction of product nodes reached by at least one row plus leaf
/// components holding at least one observed cell, over all of them.
inline double structure_sparsity(const GibbsState& state, const Spn& spn) {
  std::size_t total = 0;
  std::size_t relevant = 0;
  for (NodeId id : spn.evaluation_order()) {
    if (!spn.is_product(id)) continue;
    ++total;
    if (state.node_row_counts.size() > id.value && state.node_row_counts[id.value] > 0) ++relevant;
  }
  for (const auto& per_feature : state.stats) {
    for (const auto& per_leaf : per_feature) {
      for (const auto& s : per_leaf) {
        ++total;
        if (s.count > 0) ++relevant;
      }
    }
  }
  return total ? static_cast<double>(relevant) / static_cast<double>(total) : 1.0;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  out << "iteration,mean_loglik,seconds\n";
  for (const auto& t : trace) {
    out << t.iteration << ',' << format_double(t.mean_loglik) << ',' << format_double(t.seconds) << '\n';
  }
}

}  // namespace abda
