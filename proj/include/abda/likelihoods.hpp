#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "abda/error.hpp"
#include "abda/math.hpp"

namespace abda {

enum class MetaType { Continuous, Discrete };

enum class StatType { Real, Pos, Num, Nom, Bin };
inline constexpr std::size_t kNumStatTypes = 5;

enum class Kind { Gaussian, Gamma, Exponential, Categorical, Poisson, Geometric, Bernoulli };
inline constexpr std::size_t kNumKinds = 7;

constexpr std::string_view to_string(MetaType m) {
  return m == MetaType::Continuous ? "C" : "D";
}

constexpr std::string_view to_string(StatType t) {
  switch (t) {
    case StatType::Real: return "REAL";
    case StatType::Pos: return "POS";
    case StatType::Num: return "NUM";
    case StatType::Nom: return "NOM";
    case StatType::Bin: return "BIN";
  }
  return "?";
}

constexpr std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::Gaussian: return "Gaussian";
    case Kind::Gamma: return "Gamma";
    case Kind::Exponential: return "Exponential";
    case Kind::Categorical: return "Categorical";
    case Kind::Poisson: return "Poisson";
    case Kind::Geometric: return "Geometric";
    case Kind::Bernoulli: return "Bernoulli";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kNumKinds; ++i) {
    const auto k = static_cast<Kind>(i);
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline std::optional<StatType> parse_stat_type(std::string_view s) {
  for (std::size_t i = 0; i < kNumStatTypes; ++i) {
    const auto t = static_cast<StatType>(i);
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

constexpr StatType stat_type_of(Kind k) {
  switch (k) {
    case Kind::Gaussian: return StatType::Real;
    case Kind::Gamma:
    case Kind::Exponential: return StatType::Pos;
    case Kind::Poisson:
    case Kind::Geometric: return StatType::Num;
    case Kind::Categorical: return StatType::Nom;
    case Kind::Bernoulli: return StatType::Bin;
  }
  return StatType::Real;
}

constexpr bool is_discrete(Kind k) {
  return k == Kind::Categorical || k == Kind::Poisson || k == Kind::Geometric ||
         k == Kind::Bernoulli;
}

// ---------------------------------------------------------------------------
// Parametric families. Alternative order in Distribution matches Kind.

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;

  bool operator==(const Gaussian&) const = default;
};

/// Gamma with a shape fixed at initialization and a free rate.
struct GammaFixedShape {
  double shape = 2.0;
  double rate = 1.0;

  bool operator==(const GammaFixedShape&) const = default;
};

struct Exponential {
  double rate = 1.0;

  bool operator==(const Exponential&) const = default;
};

/// Categories are the integers 0..K-1.
struct Categorical {
  std::vector<double> probs;

  bool operator==(const Categorical&) const = default;
};

struct Poisson {
  double rate = 1.0;

  bool operator==(const Poisson&) const = default;
};

/// Support {origin, origin + 1, ...}; pmf p (1 - p)^(x - origin).
struct Geometric {
  double success = 0.5;
  double origin = 1.0;

  bool operator==(const Geometric&) const = default;
};

struct Bernoulli {
  double success = 0.5;

  bool operator==(const Bernoulli&) const = default;
};

using Distribution =
    std::variant<Gaussian, GammaFixedShape, Exponential, Categorical, Poisson, Geometric, Bernoulli>;

inline Kind kind_of(const Distribution& d) { return static_cast<Kind>(d.index()); }

// ---------------------------------------------------------------------------
// Conjugate priors.

/// Normal-Inverse-Gamma N(mu | m, sigma^2 V) IG(sigma^2 | a, b), held in
/// additive coordinates around a fixed center so that conjugate updates are
/// plain sums of sufficient statistics.
struct NormalInverseGamma {
  double center = 0.0;
  double precision = 1.0;        // 1 / V
  double weighted_offset = 0.0;  // precision * (m - center)
  double shape = 1.0;            // a
  double energy = 1.0;           // b + weighted_offset^2 / (2 precision)

  static NormalInverseGamma from_moments(double mean, double v, double a, double b) {
    NormalInverseGamma p;
    p.center = mean;
    p.precision = 1.0 / v;
    p.weighted_offset = 0.0;
    p.shape = a;
    p.energy = b;
    return p;
  }

  double mean() const { return center + weighted_offset / precision; }
  double v() const { return 1.0 / precision; }
  double scale() const {
    return energy - weighted_offset * weighted_offset / (2.0 * precision);
  }
};

/// Gamma(shape, rate) prior on a positive rate parameter.
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct DirichletPrior {
  std::vector<double> concentration;
};

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};

using Prior = std::variant<NormalInverseGamma, GammaPrior, DirichletPrior, BetaPrior>;

/// One entry of a feature's likelihood dictionary.
struct ComponentSpec {
  Kind kind = Kind::Gaussian;
  Prior prior = NormalInverseGamma{};
  double gamma_shape = 2.0;       // GammaFixedShape only
  double geometric_origin = 1.0;  // Geometric only
};

using Dictionary = std::vector<ComponentSpec>;

// ---------------------------------------------------------------------------
// Support and density.

inline bool in_support(const Distribution& dist, double x) {
  if (!std::isfinite(x)) return false;
  switch (kind_of(dist)) {
    case Kind::Gaussian: return true;
    case Kind::Gamma: return x > 0.0;
    case Kind::Exponential: return x >= 0.0;
    case Kind::Categorical:
      return is_integral(x) && x >= 0.0 &&
             x < static_cast<double>(std::get<Categorical>(dist).probs.size());
    case Kind::Poisson: return is_integral(x) && x >= 0.0;
    case Kind::Geometric: return is_integral(x) && x >= std::get<Geometric>(dist).origin;
    case Kind::Bernoulli: return x == 0.0 || x == 1.0;
  }
  return false;
}

/// Exact log density (continuous) or log mass (discrete); -inf outside support.
inline double log_pdf(const Distribution& dist, double x) {
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (!in_support(dist, x)) return kNegInf;
  return std::visit(
      [x](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          const double z = x - d.mean;
          return -0.5 * (kLogTwoPi + std::log(d.variance) + z * z / d.variance);
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return d.shape * std::log(d.rate) - log_gamma_fn(d.shape) +
                 (d.shape - 1.0) * std::log(x) - d.rate * x;
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return std::log(d.rate) - d.rate * x;
        } else if constexpr (std::is_same_v<T, Categorical>) {
          return std::log(d.probs[static_cast<std::size_t>(x)]);
        } else if constexpr (std::is_same_v<T, Poisson>) {
          if (x == 0.0) return -d.rate;
          return x * std::log(d.rate) - d.rate - log_factorial(x);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          const double k = x - d.origin;
          return std::log(d.success) + (k == 0.0 ? 0.0 : k * std::log1p(-d.success));
        } else {
          return std::log(x == 1.0 ? d.success : 1.0 - d.success);
        }
      },
      dist);
}

/// P(X <= x).
inline double cdf(const Distribution& dist, double x) {
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  return std::visit(
      [x](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return 0.5 * std::erfc(-(x - d.mean) / std::sqrt(2.0 * d.variance));
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          if (x <= 0.0) return 0.0;
          if (std::isinf(x)) return 1.0;
          return boost::math::gamma_p(d.shape, d.rate * x);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          if (x <= 0.0) return 0.0;
          return -std::expm1(-d.rate * x);
        } else if constexpr (std::is_same_v<T, Categorical>) {
          if (x < 0.0) return 0.0;
          const double k = std::floor(x);
          if (k >= static_cast<double>(d.probs.size()) - 1.0) return 1.0;
          double acc = 0.0;
          for (std::size_t i = 0; i <= static_cast<std::size_t>(k); ++i) acc += d.probs[i];
          return std::min(acc, 1.0);
        } else if constexpr (std::is_same_v<T, Poisson>) {
          if (x < 0.0) return 0.0;
          if (std::isinf(x)) return 1.0;
          return boost::math::gamma_q(std::floor(x) + 1.0, d.rate);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          if (x < d.origin) return 0.0;
          if (std::isinf(x)) return 1.0;
          const double trials = std::floor(x) - d.origin + 1.0;
          return -std::expm1(trials * std::log1p(-d.success));
        } else {
          if (x < 0.0) return 0.0;
          if (x < 1.0) return 1.0 - d.success;
          return 1.0;
        }
      },
      dist);
}

/// P(X > x), computed without cancellation where the family allows.
inline double survival(const Distribution& dist, double x) {
  return std::visit(
      [&dist, x](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return 0.5 * std::erfc((x - d.mean) / std::sqrt(2.0 * d.variance));
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          if (x <= 0.0) return 1.0;
          if (std::isinf(x)) return 0.0;
          return boost::math::gamma_q(d.shape, d.rate * x);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          if (x <= 0.0) return 1.0;
          return std::exp(-d.rate * x);
        } else if constexpr (std::is_same_v<T, Poisson>) {
          if (x < 0.0) return 1.0;
          if (std::isinf(x)) return 0.0;
          return boost::math::gamma_p(std::floor(x) + 1.0, d.rate);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          if (x < d.origin) return 1.0;
          if (std::isinf(x)) return 0.0;
          const double trials = std::floor(x) - d.origin + 1.0;
          return std::exp(trials * std::log1p(-d.success));
        } else {
          return 1.0 - cdf(dist, x);
        }
      },
      dist);
}

/// log P(lo <= X < hi). Discrete kinds use integer points k with lo <= k < hi.
inline double interval_log_mass(const Distribution& dist, double lo, double hi) {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi) {
    throw Error(ErrorCode::InvalidInterval, "interval bounds must satisfy lo <= hi");
  }
  double mass = 0.0;
  if (is_discrete(kind_of(dist))) {
    if (lo == hi) return kNegInf;
    // integer points in [lo, hi) are ceil(lo) .. ceil(hi) - 1
    const double upper = std::isinf(hi) ? hi : std::ceil(hi) - 1.0;
    const double lower = std::isinf(lo) ? lo : std::ceil(lo) - 1.0;
    if (upper <= lower) return kNegInf;
    const double f_hi = std::isinf(upper) ? 1.0 : cdf(dist, upper);
    const double f_lo = std::isinf(lower) ? 0.0 : cdf(dist, lower);
    if (f_lo > 0.5) {
      const double s_lo = survival(dist, lower);
      const double s_hi = std::isinf(upper) ? 0.0 : survival(dist, upper);
      mass = s_lo - s_hi;
    } else {
      mass = f_hi - f_lo;
    }
  } else {
    if (lo == hi) throw Error(ErrorCode::InvalidInterval, "empty continuous interval");
    const double f_lo = std::isinf(lo) ? 0.0 : cdf(dist, lo);
    if (f_lo > 0.5) {
      const double s_hi = std::isinf(hi) ? 0.0 : survival(dist, hi);
      mass = survival(dist, lo) - s_hi;
    } else {
      const double f_hi = std::isinf(hi) ? 1.0 : cdf(dist, hi);
      mass = f_hi - f_lo;
    }
  }
  if (!(mass > 0.0)) return kNegInf;
  return std::log(std::min(mass, 1.0));
}

namespace detail {

// Smallest integer k >= start with cdf(k) >= p.
inline double discrete_quantile_scan(const Distribution& dist, double start, double p) {
  if (cdf(dist, start) >= p) return start;
  double step = 1.0;
  double lo = start;
  double hi = start + step;
  while (cdf(dist, hi) < p) {
    lo = hi;
    step *= 2.0;
    hi = start + step;
  }
  // invariant: cdf(lo) < p <= cdf(hi)
  while (hi - lo > 1.0) {
    const double mid = std::floor(lo + (hi - lo) / 2.0);
    if (cdf(dist, mid) >= p) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace detail

/// Smallest x with P(X <= x) >= p, for p in (0, 1).
inline double quantile(const Distribution& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0,1)");
  return std::visit(
      [&dist, p](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return boost::math::quantile(boost::math::normal(d.mean, std::sqrt(d.variance)), p);
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return boost::math::quantile(boost::math::gamma_distribution<>(d.shape, 1.0 / d.rate), p);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return -std::log1p(-p) / d.rate;
        } else if constexpr (std::is_same_v<T, Categorical>) {
          double acc = 0.0;
          for (std::size_t i = 0; i < d.probs.size(); ++i) {
            acc += d.probs[i];
            if (acc >= p) return static_cast<double>(i);
          }
          return static_cast<double>(d.probs.size() - 1);
        } else if constexpr (std::is_same_v<T, Poisson>) {
          return detail::discrete_quantile_scan(dist, 0.0, p);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return detail::discrete_quantile_scan(dist, d.origin, p);
        } else {
          return p <= 1.0 - d.success ? 0.0 : 1.0;
        }
      },
      dist);
}

/// Point of maximal density. Gamma with shape < 1 has an unbounded density
/// at zero; its mean stands in for the mode there.
inline double mode(const Distribution& dist) {
  return std::visit(
      [](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return d.mean;
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return d.shape >= 1.0 ? (d.shape - 1.0) / d.rate : d.shape / d.rate;
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Categorical>) {
          return static_cast<double>(std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin());
        } else if constexpr (std::is_same_v<T, Poisson>) {
          return std::max(0.0, std::ceil(d.rate) - 1.0);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return d.origin;
        } else {
          return d.success > 0.5 ? 1.0 : 0.0;
        }
      },
      dist);
}

inline double mean(const Distribution& dist) {
  return std::visit(
      [](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return d.mean;
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return d.shape / d.rate;
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return 1.0 / d.rate;
        } else if constexpr (std::is_same_v<T, Categorical>) {
          double acc = 0.0;
          for (std::size_t i = 0; i < d.probs.size(); ++i) acc += static_cast<double>(i) * d.probs[i];
          return acc;
        } else if constexpr (std::is_same_v<T, Poisson>) {
          return d.rate;
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return d.origin + (1.0 - d.success) / d.success;
        } else {
          return d.success;
        }
      },
      dist);
}

inline double sample(const Distribution& dist, Rng& rng) {
  return std::visit(
      [&rng](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return std::normal_distribution<double>(d.mean, std::sqrt(d.variance))(rng);
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return sample_gamma(d.shape, d.rate, rng);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return std::exponential_distribution<double>(d.rate)(rng);
        } else if constexpr (std::is_same_v<T, Categorical>) {
          double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
          for (std::size_t i = 0; i < d.probs.size(); ++i) {
            u -= d.probs[i];
            if (u < 0.0) return static_cast<double>(i);
          }
          return static_cast<double>(d.probs.size() - 1);
        } else if constexpr (std::is_same_v<T, Poisson>) {
          return static_cast<double>(std::poisson_distribution<long long>(d.rate)(rng));
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return d.origin + static_cast<double>(std::geometric_distribution<long long>(d.success)(rng));
        } else {
          return std::bernoulli_distribution(d.success)(rng) ? 1.0 : 0.0;
        }
      },
      dist);
}

/// Checks positivity and simplex invariants of a parameter value.
inline bool valid_params(const Distribution& dist) {
  return std::visit(
      [](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
        auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
        if constexpr (std::is_same_v<T, Gaussian>) {
          return std::isfinite(d.mean) && pos(d.variance);
        } else if constexpr (std::is_same_v<T, GammaFixedShape>) {
          return pos(d.shape) && pos(d.rate);
        } else if constexpr (std::is_same_v<T, Exponential> || std::is_same_v<T, Poisson>) {
          return pos(d.rate);
        } else if constexpr (std::is_same_v<T, Categorical>) {
          if (d.probs.empty()) return false;
          double total = 0.0;
          for (double p : d.probs) {
            if (!(p >= 0.0 && p <= 1.0)) return false;
            total += p;
          }
          return std::abs(total - 1.0) < 1e-9;
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return open_unit(d.success);
        } else {
          return open_unit(d.success);
        }
      },
      dist);
}

// ---------------------------------------------------------------------------
// Sufficient statistics and conjugate updates.

/// Additive sufficient statistics. Gaussian components accumulate x - shift,
/// where shift is the center of their prior.
struct SufficientStats {
  double count = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
  double shift = 0.0;
  std::vector<double> category_counts;

  void add(double x) {
    count += 1.0;
    const double d = x - shift;
    sum += d;
    sum_sq += d * d;
    if (!category_counts.empty()) category_counts[static_cast<std::size_t>(x)] += 1.0;
  }

  bool operator==(const SufficientStats&) const = default;
};

inline SufficientStats empty_stats(const ComponentSpec& spec) {
  SufficientStats s;
  if (spec.kind == Kind::Gaussian) s.shift = std::get<NormalInverseGamma>(spec.prior).center;
  if (spec.kind == Kind::Categorical) {
    s.category_counts.assign(std::get<DirichletPrior>(spec.prior).concentration.size(), 0.0);
  }
  return s;
}

/// Support check against a dictionary entry (before any parameters exist).
inline bool spec_supports(const ComponentSpec& spec, double x) {
  if (!std::isfinite(x)) return false;
  switch (spec.kind) {
    case Kind::Gaussian: return true;
    case Kind::Gamma: return x > 0.0;
    case Kind::Exponential: return x >= 0.0;
    case Kind::Categorical:
      return is_integral(x) && x >= 0.0 &&
             x < static_cast<double>(std::get<DirichletPrior>(spec.prior).concentration.size());
    case Kind::Poisson: return is_integral(x) && x >= 0.0;
    case Kind::Geometric: return is_integral(x) && x >= spec.geometric_origin;
    case Kind::Bernoulli: return x == 0.0 || x == 1.0;
  }
  return false;
}

inline SufficientStats summarize(const ComponentSpec& spec, std::span<const double> data) {
  SufficientStats s = empty_stats(spec);
  for (double x : data) {
    if (!spec_supports(spec, x)) {
      throw Error(ErrorCode::InvalidData,
                  "value " + std::to_string(x) + " outside the support of " + std::string(to_string(spec.kind)));
    }
    s.add(x);
  }
  return s;
}

/// Posterior hyper-parameters given additive statistics. Feeding the result
/// back in as the prior performs a sequential update.
inline Prior posterior_hyper(const ComponentSpec& spec, const SufficientStats& s) {
  switch (spec.kind) {
    case Kind::Gaussian: {
      auto p = std::get<NormalInverseGamma>(spec.prior);
      p.precision += s.count;
      p.weighted_offset += s.sum;
      p.shape += 0.5 * s.count;
      p.energy += 0.5 * s.sum_sq;
      return p;
    }
    case Kind::Gamma: {
      auto p = std::get<GammaPrior>(spec.prior);
      p.shape += s.count * spec.gamma_shape;
      p.rate += s.sum;
      return p;
    }
    case Kind::Exponential: {
      auto p = std::get<GammaPrior>(spec.prior);
      p.shape += s.count;
      p.rate += s.sum;
      return p;
    }
    case Kind::Poisson: {
      auto p = std::get<GammaPrior>(spec.prior);
      p.shape += s.sum;
      p.rate += s.count;
      return p;
    }
    case Kind::Geometric: {
      auto p = std::get<BetaPrior>(spec.prior);
      p.a += s.count;
      p.b += s.sum - s.count * spec.geometric_origin;
      return p;
    }
    case Kind::Bernoulli: {
      auto p = std::get<BetaPrior>(spec.prior);
      p.a += s.sum;
      p.b += s.count - s.sum;
      return p;
    }
    case Kind::Categorical: {
      auto p = std::get<DirichletPrior>(spec.prior);
      for (std::size_t i = 0; i < p.concentration.size() && i < s.category_counts.size(); ++i) {
        p.concentration[i] += s.category_counts[i];
      }
      return p;
    }
  }
  return spec.prior;
}

namespace detail {

inline double positive(double v) { return std::max(v, std::numeric_limits<double>::min()); }

inline double open_unit(double v) {
  return std::clamp(v, std::numeric_limits<double>::min(), 1.0 - std::numeric_limits<double>::epsilon() / 2.0);
}

}  // namespace detail

/// Draws parameters for spec.kind from the hyper-parameters in `hyper`.
inline Distribution sample_parameters(const ComponentSpec& spec, const Prior& hyper, Rng& rng) {
  switch (spec.kind) {
    case Kind::Gaussian: {
      const auto& p = std::get<NormalInverseGamma>(hyper);
      const double var = detail::positive(p.scale() / std::exp(sample_log_gamma(p.shape, rng)));
      const double mu = std::normal_distribution<double>(p.mean(), std::sqrt(var * p.v()))(rng);
      return Gaussian{mu, var};
    }
    case Kind::Gamma: {
      const auto& p = std::get<GammaPrior>(hyper);
      return GammaFixedShape{spec.gamma_shape, detail::positive(sample_gamma(p.shape, p.rate, rng))};
    }
    case Kind::Exponential: {
      const auto& p = std::get<GammaPrior>(hyper);
      return Exponential{detail::positive(sample_gamma(p.shape, p.rate, rng))};
    }
    case Kind::Poisson: {
      const auto& p = std::get<GammaPrior>(hyper);
      return Poisson{detail::positive(sample_gamma(p.shape, p.rate, rng))};
    }
    case Kind::Geometric: {
      const auto& p = std::get<BetaPrior>(hyper);
      return Geometric{detail::open_unit(sample_beta(p.a, p.b, rng)), spec.geometric_origin};
    }
    case Kind::Bernoulli: {
      const auto& p = std::get<BetaPrior>(hyper);
      return Bernoulli{detail::open_unit(sample_beta(p.a, p.b, rng))};
    }
    case Kind::Categorical: {
      const auto& p = std::get<DirichletPrior>(hyper);
      return Categorical{sample_dirichlet(p.concentration, rng)};
    }
  }
  return Gaussian{};
}

inline Distribution posterior_sample(const ComponentSpec& spec, const SufficientStats& stats, Rng& rng) {
  return sample_parameters(spec, posterior_hyper(spec, stats), rng);
}

inline Distribution posterior_sample(const ComponentSpec& spec, std::span<const double> data, Rng& rng) {
  return posterior_sample(spec, summarize(spec, data), rng);
}

// ---------------------------------------------------------------------------
// Dictionaries.

/// Summary of the observed cells of one column.
struct FeatureStats {
  std::size_t count = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t cardinality = 0;
  bool binary = false;  // every observed value is 0 or 1
};

inline FeatureStats compute_feature_stats(std::span<const double> observed_values) {
  FeatureStats s;
  s.count = observed_values.size();
  if (s.count == 0) return s;
  s.min = *std::min_element(observed_values.begin(), observed_values.end());
  s.max = *std::max_element(observed_values.begin(), observed_values.end());
  double m = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : observed_values) {
    ++n;
    const double delta = x - m;
    m += delta / static_cast<double>(n);
    m2 += delta * (x - m);
  }
  s.mean = m;
  s.variance = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  std::vector<double> sorted(observed_values.begin(), observed_values.end());
  std::sort(sorted.begin(), sorted.end());
  s.cardinality = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  s.binary = std::all_of(observed_values.begin(), observed_values.end(),
                         [](double x) { return x == 0.0 || x == 1.0; });
  return s;
}

/// Inference-time prior hyper-parameters; the Gaussian mean and scale come
/// from the column itself.
struct PriorConfig {
  double nig_v0 = 10.0;
  double nig_a0 = 2.0;
  double gamma_a0 = 1.0;
  double gamma_b0 = 1.0;
  double dirichlet = 1.0;
  double beta_a = 1.0;
  double beta_b = 1.0;
};

inline Dictionary default_dictionary(MetaType meta, const FeatureStats& stats, const PriorConfig& cfg = {}) {
  if (stats.count == 0) throw Error(ErrorCode::EmptyColumn, "column has no observed cells");
  Dictionary dict;
  const GammaPrior rate_prior{cfg.gamma_a0, cfg.gamma_b0};
  if (meta == MetaType::Continuous) {
    const double scale = stats.variance > 0.0 ? stats.variance : 1.0;
    dict.push_back({Kind::Gaussian, NormalInverseGamma::from_moments(stats.mean, cfg.nig_v0, cfg.nig_a0, scale)});
    if (stats.min > 0.0) {
      dict.push_back({Kind::Gamma, rate_prior});
      dict.push_back({Kind::Exponential, rate_prior});
    }
    return dict;
  }
  if (stats.min < 0.0) {
    throw Error(ErrorCode::InvalidData, "discrete columns must be non-negative integers");
  }
  if (stats.binary) {
    dict.push_back({Kind::Bernoulli, BetaPrior{cfg.beta_a, cfg.beta_b}});
    return dict;
  }
  dict.push_back({Kind::Poisson, rate_prior});
  ComponentSpec geo{Kind::Geometric, BetaPrior{cfg.beta_a, cfg.beta_b}};
  geo.geometric_origin = stats.min >= 1.0 ? 1.0 : 0.0;
  dict.push_back(geo);
  const auto k = static_cast<std::size_t>(stats.max) + 1;
  dict.push_back({Kind::Categorical, DirichletPrior{std::vector<double>(k, cfg.dirichlet)}});
  return dict;
}

/// Method-of-moments Gamma shape, clamped to [0.1, 100]; 2 for fewer than two points.
inline double moment_matched_shape(std::span<const double> data) {
  if (data.size() < 2) return 2.0;
  const FeatureStats s = compute_feature_stats(data);
  if (!(s.variance > 0.0) || !(s.mean > 0.0)) return 2.0;
  return std::clamp(s.mean * s.mean / s.variance, 0.1, 100.0);
}

}  // namespace abda
