#pragma once

// Shared fixtures for the unit tests and the acceptance binary: random valid
// networks, random parameters and rows, and a brute-force reference density
// that expands the network into its induced trees without touching the
// library's evaluator.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "abda/abda.hpp"

namespace abda::fixture {

struct RandomNet {
  Spn spn;
  std::vector<MetaType> meta;
};

namespace detail {

inline NodeId grow(Spn& spn, const std::vector<std::size_t>& scope, int depth, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (scope.size() == 1) {
    if (depth > 0 && u(rng) < 0.3) {
      const std::size_t k = 2 + rng() % 2;
      std::vector<NodeId> ch;
      for (std::size_t i = 0; i < k; ++i) ch.push_back(spn.add_leaf(scope[0]));
      return spn.add_sum(ch);
    }
    return spn.add_leaf(scope[0]);
  }
  if (depth > 0 && u(rng) < 0.45) {
    const std::size_t k = 2 + rng() % 2;
    std::vector<NodeId> ch;
    for (std::size_t i = 0; i < k; ++i) ch.push_back(grow(spn, scope, depth - 1, rng));
    return spn.add_sum(ch);
  }
  std::vector<std::size_t> shuffled = scope;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t parts = std::min<std::size_t>(shuffled.size(), 2 + rng() % 2);
  std::vector<std::vector<std::size_t>> groups(parts);
  for (std::size_t i = 0; i < shuffled.size(); ++i) groups[i < parts ? i : rng() % parts].push_back(shuffled[i]);
  std::vector<NodeId> ch;
  for (auto& g : groups) {
    std::sort(g.begin(), g.end());
    ch.push_back(grow(spn, g, depth - 1, rng));
  }
  return spn.add_product(ch);
}

}  // namespace detail

/// Induced trees as (log weight, leaf per feature), by direct expansion.
struct OracleTree {
  double log_weight = 0.0;
  std::map<std::size_t, NodeId> leaves;
};

inline std::vector<OracleTree> expand(const Spn& spn, const SumWeights& sums, NodeId id) {
  const Node& node = spn.node(id);
  if (const auto* leaf = std::get_if<LeafNode>(&node)) {
    OracleTree t;
    t.leaves[leaf->feature] = id;
    return {t};
  }
  if (const auto* sum = std::get_if<SumNode>(&node)) {
    std::vector<OracleTree> out;
    for (std::size_t i = 0; i < sum->children.size(); ++i) {
      for (auto t : expand(spn, sums, sum->children[i])) {
        t.log_weight += sums.log_weights[sum->weight_index][i];
        out.push_back(std::move(t));
      }
    }
    return out;
  }
  std::vector<OracleTree> acc{OracleTree{}};
  for (NodeId c : std::get<ProductNode>(node).children) {
    const auto sub = expand(spn, sums, c);
    std::vector<OracleTree> next;
    for (const auto& a : acc) {
      for (const auto& b : sub) {
        OracleTree t = a;
        t.log_weight += b.log_weight;
        t.leaves.insert(b.leaves.begin(), b.leaves.end());
        next.push_back(std::move(t));
      }
    }
    acc = std::move(next);
  }
  return acc;
}

/// Random valid network over `features` features with at most `max_trees`
/// induced trees (and at least two).
inline RandomNet random_net(std::size_t features, std::size_t max_trees, Rng& rng) {
  while (true) {
    RandomNet net;
    net.spn = Spn(features);
    std::vector<std::size_t> scope(features);
    for (std::size_t d = 0; d < features; ++d) scope[d] = d;
    net.spn.set_root(detail::grow(net.spn, scope, 4, rng));
    const auto trees = expand(net.spn, uniform_sum_weights(net.spn), net.spn.root()).size();
    if (trees < 2 || trees > max_trees) continue;
    for (std::size_t d = 0; d < features; ++d) {
      net.meta.push_back(rng() % 2 ? MetaType::Continuous : MetaType::Discrete);
    }
    return net;
  }
}

inline constexpr std::size_t kCategories = 6;

inline Distribution random_component(Kind k, Rng& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  switch (k) {
    case Kind::Gaussian: return Gaussian{std::normal_distribution<double>(2.0, 1.0)(rng), u(rng)};
    case Kind::Gamma: return GammaFixedShape{u(rng), u(rng)};
    case Kind::Exponential: return Exponential{u(rng)};
    case Kind::Poisson: return Poisson{u(rng)};
    case Kind::Geometric: return Geometric{std::uniform_real_distribution<double>(0.2, 0.8)(rng), 0.0};
    case Kind::Bernoulli: return Bernoulli{0.4};
    case Kind::Categorical: return Categorical{sample_dirichlet(std::vector<double>(kCategories, 1.0), rng)};
  }
  return Gaussian{};
}

/// Random weights and leaf mixtures; continuous leaves mix Gaussian, Gamma
/// and Exponential, discrete ones Poisson, Geometric and Categorical.
inline SpnParams random_params(const RandomNet& net, Rng& rng) {
  SpnParams p;
  p.sums.log_weights.resize(net.spn.num_sums());
  for (std::size_t s = 0; s < net.spn.num_sums(); ++s) {
    const auto k = std::get<SumNode>(net.spn.node(net.spn.sum_node(s))).children.size();
    p.sums.log_weights[s] = sample_log_dirichlet(std::vector<double>(k, 1.0), rng);
  }
  p.leaves.resize(net.spn.num_features());
  for (std::size_t d = 0; d < net.spn.num_features(); ++d) {
    const bool cont = net.meta[d] == MetaType::Continuous;
    const std::vector<Kind> pool = cont ? std::vector<Kind>{Kind::Gaussian, Kind::Gamma, Kind::Exponential}
                                        : std::vector<Kind>{Kind::Poisson, Kind::Geometric, Kind::Categorical};
    for (std::size_t j = 0; j < net.spn.leaves_by_feature(d).size(); ++j) {
      LeafMixture mix;
      const std::size_t L = 1 + rng() % 3;
      for (std::size_t l = 0; l < L; ++l) mix.components.push_back(random_component(pool[(j + l) % 3], rng));
      mix.log_weights = sample_log_dirichlet(std::vector<double>(L, 1.0), rng);
      p.leaves[d].push_back(std::move(mix));
    }
  }
  return p;
}

/// Row inside every component's support, with cells missing at rate 0.2.
inline void random_row(const RandomNet& net, Rng& rng, std::vector<double>& values, std::vector<std::uint8_t>& mask) {
  const std::size_t D = net.spn.num_features();
  values.assign(D, 0.0);
  mask.assign(D, 1);
  std::uniform_real_distribution<double> u(0.05, 6.0);
  for (std::size_t d = 0; d < D; ++d) {
    values[d] = net.meta[d] == MetaType::Continuous ? u(rng) : static_cast<double>(rng() % kCategories);
    if (rng() % 5 == 0) mask[d] = 0;
  }
}

inline double oracle_leaf(const LeafMixture& mix, double x) {
  double m = kNegInf;
  std::vector<double> terms;
  for (std::size_t l = 0; l < mix.components.size(); ++l) {
    terms.push_back(mix.log_weights[l] + log_pdf(mix.components[l], x));
    m = std::max(m, terms.back());
  }
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// log p(row) as a sum over all induced trees of weight times leaf products.
inline double oracle_log_density(const Spn& spn, const SpnParams& params, RowView row) {
  std::vector<double> terms;
  for (const auto& t : expand(spn, params.sums, spn.root())) {
    double v = t.log_weight;
    for (const auto& [d, leaf] : t.leaves) {
      if (!row.is_observed(d)) continue;
      v += oracle_leaf(params.leaf(d, std::get<LeafNode>(spn.node(leaf)).leaf_slot), row.values[d]);
    }
    terms.push_back(v);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// Two well separated clusters over `features` mixed columns.
inline Dataset two_clusters(std::size_t rows, std::size_t features, Rng& rng) {
  std::vector<std::string> names;
  std::vector<MetaType> meta;
  for (std::size_t d = 0; d < features; ++d) {
    names.push_back("f" + std::to_string(d));
    meta.push_back(d % 3 == 2 ? MetaType::Discrete : MetaType::Continuous);
  }
  Dataset data(names, meta, rows);
  for (std::size_t n = 0; n < rows; ++n) {
    const bool second = n % 2 == 1;
    for (std::size_t d = 0; d < features; ++d) {
      if (meta[d] == MetaType::Discrete) {
        data.set(n, d, static_cast<double>(std::poisson_distribution<int>(second ? 12.0 : 3.0)(rng)));
      } else {
        data.set(n, d, std::normal_distribution<double>(second ? 5.0 : -5.0, 1.0)(rng));
      }
    }
  }
  return data;
}

/// One moment of one posterior parameter: Monte-Carlo estimate, closed form
/// and the Monte-Carlo standard error of the estimate.
struct MomentCheck {
  std::string what;
  double estimate = 0.0;
  double exact = 0.0;
  double se = 0.0;

  bool within(double k) const { return std::abs(estimate - exact) <= k * se; }
};

namespace detail {

// Mean and variance of `draws` against closed forms; the variance error uses
// the sample fourth central moment.
inline void moment_pair(const std::string& name, const std::vector<double>& draws, double mean, double var,
                        std::vector<MomentCheck>& out) {
  const double n = static_cast<double>(draws.size());
  double m = 0.0;
  for (double x : draws) m += x;
  m /= n;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : draws) {
    const double c = (x - m) * (x - m);
    m2 += c;
    m4 += c * c;
  }
  m2 /= n;
  m4 /= n;
  out.push_back({name + " mean", m, mean, std::sqrt(var / n)});
  out.push_back({name + " variance", m2, var, std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)});
}

}  // namespace detail

/// Prior and data for the conjugacy checks of one kind. Continuous data sit
/// on a grid of quarters so every partial sum is exact in floating point.
struct ConjugateCase {
  ComponentSpec spec;
  std::vector<double> data;
};

inline ConjugateCase conjugate_case(Kind k, Rng& rng) {
  ConjugateCase c;
  c.spec.kind = k;
  std::uniform_int_distribution<int> q(1, 24);
  auto quarters = [&](int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(q(rng) / 4.0);
    return v;
  };
  switch (k) {
    case Kind::Gaussian:
      c.spec.prior = NormalInverseGamma::from_moments(1.5, 2.0, 3.0, 2.0);
      c.data = quarters(20);
      break;
    case Kind::Gamma:
      c.spec.prior = GammaPrior{2.0, 1.0};
      c.spec.gamma_shape = 3.0;
      c.data = quarters(15);
      break;
    case Kind::Exponential:
      c.spec.prior = GammaPrior{2.0, 1.0};
      c.data = quarters(15);
      break;
    case Kind::Poisson:
      c.spec.prior = GammaPrior{1.5, 0.5};
      for (int i = 0; i < 15; ++i) c.data.push_back(static_cast<double>(rng() % 9));
      break;
    case Kind::Geometric:
      c.spec.prior = BetaPrior{1.5, 2.0};
      c.spec.geometric_origin = 1.0;
      for (int i = 0; i < 15; ++i) c.data.push_back(1.0 + static_cast<double>(rng() % 6));
      break;
    case Kind::Bernoulli:
      c.spec.prior = BetaPrior{2.0, 1.0};
      for (int i = 0; i < 15; ++i) c.data.push_back(static_cast<double>(rng() % 2));
      break;
    case Kind::Categorical:
      c.spec.prior = DirichletPrior{{1.0, 2.0, 0.5, 1.0}};
      for (int i = 0; i < 15; ++i) c.data.push_back(static_cast<double>(rng() % 4));
      break;
  }
  return c;
}

/// Draws `draws` posterior samples for the case and compares their first two
/// moments with the textbook conjugate posterior written out from the raw data.
inline std::vector<MomentCheck> conjugate_moments(const ConjugateCase& c, std::size_t draws, Rng& rng) {
  const auto stats = summarize(c.spec, c.data);
  const double n = static_cast<double>(c.data.size());
  double sx = 0.0;
  double sxx = 0.0;
  for (double x : c.data) {
    sx += x;
    sxx += x * x;
  }
  std::vector<MomentCheck> out;
  std::vector<std::vector<double>> cols(4);
  for (std::size_t i = 0; i < draws; ++i) {
    const Distribution d = posterior_sample(c.spec, stats, rng);
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Gaussian>) {
            cols[0].push_back(p.mean);
            cols[1].push_back(p.variance);
          } else if constexpr (std::is_same_v<T, GammaFixedShape> || std::is_same_v<T, Exponential> ||
                               std::is_same_v<T, Poisson>) {
            cols[0].push_back(p.rate);
          } else if constexpr (std::is_same_v<T, Geometric> || std::is_same_v<T, Bernoulli>) {
            cols[0].push_back(p.success);
          } else {
            for (std::size_t j = 0; j < 4; ++j) cols[j].push_back(p.probs[j]);
          }
        },
        d);
  }
  auto gamma_post = [&](const std::string& name, double a, double b) {
    detail::moment_pair(name, cols[0], a / b, a / (b * b), out);
  };
  auto beta_post = [&](double a, double b) {
    const double s = a + b;
    detail::moment_pair("success", cols[0], a / s, a * b / (s * s * (s + 1.0)), out);
  };
  switch (c.spec.kind) {
    case Kind::Gaussian: {
      const auto& p = std::get<NormalInverseGamma>(c.spec.prior);
      const double m0 = p.mean();
      const double v0 = p.v();
      const double a0 = p.shape;
      const double b0 = p.scale();
      const double vn = 1.0 / (1.0 / v0 + n);
      const double mn = vn * (m0 / v0 + sx);
      const double an = a0 + n / 2.0;
      const double bn = b0 + 0.5 * (m0 * m0 / v0 + sxx - mn * mn / vn);
      detail::moment_pair("mu", cols[0], mn, vn * bn / (an - 1.0), out);
      detail::moment_pair("sigma2", cols[1], bn / (an - 1.0),
                          bn * bn / ((an - 1.0) * (an - 1.0) * (an - 2.0)), out);
      break;
    }
    case Kind::Gamma: {
      const auto& p = std::get<GammaPrior>(c.spec.prior);
      gamma_post("rate", p.shape + n * c.spec.gamma_shape, p.rate + sx);
      break;
    }
    case Kind::Exponential: {
      const auto& p = std::get<GammaPrior>(c.spec.prior);
      gamma_post("rate", p.shape + n, p.rate + sx);
      break;
    }
    case Kind::Poisson: {
      const auto& p = std::get<GammaPrior>(c.spec.prior);
      gamma_post("rate", p.shape + sx, p.rate + n);
      break;
    }
    case Kind::Geometric: {
      const auto& p = std::get<BetaPrior>(c.spec.prior);
      beta_post(p.a + n, p.b + sx - n * c.spec.geometric_origin);
      break;
    }
    case Kind::Bernoulli: {
      const auto& p = std::get<BetaPrior>(c.spec.prior);
      beta_post(p.a + sx, p.b + n - sx);
      break;
    }
    case Kind::Categorical: {
      std::vector<double> alpha = std::get<DirichletPrior>(c.spec.prior).concentration;
      for (double x : c.data) alpha[static_cast<std::size_t>(x)] += 1.0;
      double a0 = 0.0;
      for (double a : alpha) a0 += a;
      for (std::size_t j = 0; j < 4; ++j) {
        detail::moment_pair("p" + std::to_string(j), cols[j], alpha[j] / a0,
                            alpha[j] * (a0 - alpha[j]) / (a0 * a0 * (a0 + 1.0)), out);
      }
      break;
    }
  }
  return out;
}

/// Hyper-parameters as a flat list for exact comparison.
inline std::vector<double> prior_fields(const Prior& p) {
  return std::visit(
      [](const auto& h) -> std::vector<double> {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, NormalInverseGamma>) {
          return {h.center, h.precision, h.weighted_offset, h.shape, h.energy};
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          return {h.shape, h.rate};
        } else if constexpr (std::is_same_v<T, BetaPrior>) {
          return {h.a, h.b};
        } else {
          return h.concentration;
        }
      },
      p);
}

/// Hyper-parameters after one batch update and after one-point updates.
inline std::pair<std::vector<double>, std::vector<double>> batch_and_sequential(const ConjugateCase& c) {
  const auto batch = prior_fields(posterior_hyper(c.spec, summarize(c.spec, c.data)));
  ComponentSpec running = c.spec;
  for (double x : c.data) {
    const std::vector<double> one{x};
    running.prior = posterior_hyper(running, summarize(running, one));
  }
  return {batch, prior_fields(running.prior)};
}

/// Quick fit of the two-cluster fixture.
inline Model small_model(std::size_t rows, std::size_t features, std::uint64_t seed, std::size_t iterations = 60) {
  Rng rng(seed);
  const Dataset data = two_clusters(rows, features, rng);
  FitOptions opt;
  opt.structure.seed = seed;
  opt.gibbs.seed = seed + 1;
  opt.gibbs.iterations = iterations;
  opt.gibbs.burn_in = iterations / 2;
  return fit(data, opt);
}

/// Chi-square comparison of the sampler's joint assignment of rows to the
/// two children of a root sum against the enumerated posterior, with leaf
/// parameters held fixed and the sum weights integrated out.
struct ExactnessResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 0.0;
  std::size_t samples = 0;
  std::vector<double> exact;
  std::vector<double> observed;
};

inline ExactnessResult gibbs_exactness(std::size_t sweeps, std::size_t thin, std::uint64_t seed) {
  const std::vector<double> xs{-0.5, 0.2, 1.0, -1.5};
  const std::size_t N = xs.size();
  const std::vector<Gaussian> comp{{-1.0, 1.0}, {1.0, 1.5}};
  const double gamma = 2.0;

  Spn spn(1);
  const NodeId a = spn.add_leaf(0);
  const NodeId b = spn.add_leaf(0);
  spn.set_root(spn.add_sum({a, b}));
  Dataset data({"x"}, {MetaType::Continuous}, N);
  for (std::size_t n = 0; n < N; ++n) data.set(n, 0, xs[n]);

  // p(z | x) proportional to prod f_z(x) * B(gamma + counts) / B(gamma)
  const std::size_t states = std::size_t{1} << N;
  std::vector<double> logp(states);
  for (std::size_t z = 0; z < states; ++z) {
    double lp = 0.0;
    double c1 = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t k = (z >> n) & 1U;
      c1 += static_cast<double>(k);
      lp += log_pdf(comp[k], xs[n]);
    }
    const double c0 = static_cast<double>(N) - c1;
    lp += std::lgamma(gamma + c0) + std::lgamma(gamma + c1) - std::lgamma(2.0 * gamma + static_cast<double>(N));
    logp[z] = lp;
  }
  const double norm = log_sum_exp(logp);

  GibbsConfig cfg;
  cfg.gamma = gamma;
  cfg.freeze_leaves = true;
  cfg.iterations = 2;
  cfg.burn_in = 1;
  Rng rng(seed);
  const std::vector<Dictionary> dicts{{ComponentSpec{Kind::Gaussian, NormalInverseGamma::from_moments(0, 10, 2, 1)}}};
  GibbsState st = init_state(spn, data, dicts, cfg, rng);
  for (std::size_t j = 0; j < 2; ++j) st.params.leaves[0][j] = LeafMixture{{comp[j]}, {0.0}};
  const std::size_t sum_index = std::get<SumNode>(spn.node(spn.root())).weight_index;

  ExactnessResult r;
  r.observed.assign(states, 0.0);
  const std::size_t warmup = 100;
  for (std::size_t t = 0; t < sweeps + warmup; ++t) {
    sweep(st, spn, data, cfg, rng);
    if (t < warmup || (t - warmup) % thin != 0) continue;
    std::size_t z = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const NodeId child = std::get<SumNode>(spn.node(spn.root())).children[st.sum_choice[n * st.sums + sum_index]];
      if (child.value == b.value) z |= std::size_t{1} << n;
    }
    r.observed[z] += 1.0;
    ++r.samples;
  }
  for (std::size_t z = 0; z < states; ++z) {
    const double e = std::exp(logp[z] - norm) * static_cast<double>(r.samples);
    r.exact.push_back(e);
    r.statistic += (r.observed[z] - e) * (r.observed[z] - e) / e;
  }
  r.dof = states - 1;
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(r.dof)), r.statistic));
  return r;
}

}  // namespace abda::fixture
