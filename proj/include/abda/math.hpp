#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace abda {

using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

/// Max-shifted log-sum-exp; an empty or all -inf input yields -inf.
inline double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

inline double log_mean_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

/// Draws an index with probability proportional to exp(log_weights[i]).
/// -inf entries are never selected. Returns 0 when every entry is -inf.
inline std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  double hi = kNegInf;
  for (double v : log_weights) hi = std::max(hi, v);
  if (hi == kNegInf) return 0;
  double total = 0.0;
  for (double v : log_weights) total += std::exp(v - hi);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  std::size_t last_valid = 0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    if (log_weights[i] == kNegInf) continue;
    last_valid = i;
    u -= std::exp(log_weights[i] - hi);
    if (u < 0.0) return i;
  }
  return last_valid;
}

/// log of a Gamma(shape, 1) draw, stable for tiny shapes:
/// G(a) = G(a + 1) * U^(1/a).
inline double sample_log_gamma(double shape, Rng& rng) {
  if (shape >= 1.0) {
    return std::log(std::gamma_distribution<double>(shape, 1.0)(rng));
  }
  const double g = std::gamma_distribution<double>(shape + 1.0, 1.0)(rng);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  while (u == 0.0) u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return std::log(g) + std::log(u) / shape;
}

/// Gamma(shape, rate) draw.
inline double sample_gamma(double shape, double rate, Rng& rng) {
  return std::exp(sample_log_gamma(shape, rng)) / rate;
}

inline double sample_beta(double a, double b, Rng& rng) {
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  const double hi = std::max(la, lb);
  const double ea = std::exp(la - hi);
  const double eb = std::exp(lb - hi);
  return ea / (ea + eb);
}

/// Dirichlet draw returned as log-probabilities. Zero concentrations yield -inf.
inline std::vector<double> sample_log_dirichlet(std::span<const double> concentration, Rng& rng) {
  std::vector<double> out(concentration.size(), kNegInf);
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    if (concentration[i] > 0.0) out[i] = sample_log_gamma(concentration[i], rng);
  }
  const double norm = log_sum_exp(out);
  for (double& v : out) {
    if (v != kNegInf) v -= norm;
  }
  return out;
}

inline std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng) {
  auto out = sample_log_dirichlet(concentration, rng);
  for (double& v : out) v = std::exp(v);
  return out;
}

/// log(k!) with a table for small k; thread-safe (no glibc signgam writes).
inline double log_factorial(double k) {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    t[0] = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] + std::log(static_cast<double>(i));
    return t;
  }();
  if (k < static_cast<double>(table.size())) return table[static_cast<std::size_t>(k)];
  return boost::math::lgamma(k + 1.0);
}

inline double log_gamma_fn(double x) { return boost::math::lgamma(x); }

inline bool is_integral(double x) { return std::isfinite(x) && std::floor(x) == x; }

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace abda
