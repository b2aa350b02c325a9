#pragma once

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "abda/dataset.hpp"
#include "abda/inference.hpp"
#include "abda/synthetic.hpp"

namespace abda {

struct SynthEvalOptions {
  FitOptions fit;
  std::vector<double> rdc_grid{0.1, 0.3, 0.5};
};

struct FeatureEval {
  std::size_t feature = 0;
  StatType true_type = StatType::Real;
  Kind true_kind = Kind::Gaussian;
  StatType top_type = StatType::Real;
  Kind top_kind = Kind::Gaussian;
  std::array<double, kNumStatTypes> type_prob{};
  std::array<double, kNumKinds> kind_prob{};
  double type_cosine = 0.0;
  double kind_cosine = 0.0;
};

struct SynthEval {
  double chosen_rdc = 0.0;
  double valid_loglik = 0.0;
  double test_loglik = 0.0;
  double oracle_loglik = 0.0;
  std::vector<FeatureEval> features;
  Model model;

  /// |model - generating model| mean test log-likelihood, per feature.
  double loglik_gap_per_feature() const {
    return std::abs(test_loglik - oracle_loglik) / static_cast<double>(features.size());
  }
};

/// Fits one model per RDC threshold on `train`, keeps the one with the best
/// validation log-likelihood, and compares it with the generating model.
inline SynthEval evaluate_synthetic(const Dataset& train, const Dataset& valid, const Dataset& test,
                                    const GroundTruth& truth, const SynthEvalOptions& opt) {
  if (opt.rdc_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty RDC grid");
  SynthEval out;
  bool have = false;
  for (double rho : opt.rdc_grid) {
    FitOptions fo = opt.fit;
    fo.structure.rdc_threshold = rho;
    Model m = fit(train, fo);
    const double v = mean_test_loglik(m, valid);
    if (!have || v > out.valid_loglik) {
      out.valid_loglik = v;
      out.chosen_rdc = rho;
      out.model = std::move(m);
      have = true;
    }
  }
  out.test_loglik = mean_test_loglik(out.model, test);
  out.oracle_loglik = mean_loglik(truth.spn, truth.params, test);
  for (std::size_t d = 0; d < train.cols(); ++d) {
    const TypePosterior tp = type_posterior(out.model, d);
    FeatureEval f;
    f.feature = d;
    f.true_type = truth.types[d];
    f.true_kind = truth.majority_kind(d);
    f.top_type = tp.top_type();
    f.top_kind = tp.top_kind();
    f.type_prob = tp.type_prob;
    for (std::size_t i = 0; i < tp.kinds.size(); ++i) f.kind_prob[static_cast<std::size_t>(tp.kinds[i])] += tp.kind_prob[i];
    const auto tv = truth.type_vector(d);
    f.type_cosine = cosine_similarity(f.type_prob, tv);
    f.kind_cosine = cosine_similarity(f.kind_prob, truth.kind_weights[d]);
    out.features.push_back(f);
  }
  return out;
}

/// Confusion counts [true][predicted] over many evaluations.
struct Confusion {
  std::array<std::array<std::size_t, kNumKinds>, kNumKinds> kinds{};
  std::array<std::array<std::size_t, kNumStatTypes>, kNumStatTypes> types{};

  void add(const FeatureEval& f) {
    ++kinds[static_cast<std::size_t>(f.true_kind)][static_cast<std::size_t>(f.top_kind)];
    ++types[static_cast<std::size_t>(f.true_type)][static_cast<std::size_t>(f.top_type)];
  }

  /// Fraction of features with true kind k whose top kind is k; -1 if none.
  double kind_accuracy(Kind k) const {
    const auto& row = kinds[static_cast<std::size_t>(k)];
    std::size_t total = 0;
    for (auto c : row) total += c;
    return total ? static_cast<double>(row[static_cast<std::size_t>(k)]) / static_cast<double>(total) : -1.0;
  }
};

inline void write_feature_evals_csv(std::ostream& out, const std::vector<FeatureEval>& evals) {
  out << "feature,true_type,true_kind,top_type,top_kind,type_cosine,kind_cosine";
  for (std::size_t t = 0; t < kNumStatTypes; ++t) out << ",p_" << to_string(static_cast<StatType>(t));
  out << '\n';
  for (const auto& f : evals) {
    out << f.feature << ',' << to_string(f.true_type) << ',' << to_string(f.true_kind) << ',' << to_string(f.top_type)
        << ',' << to_string(f.top_kind) << ',' << format_double(f.type_cosine) << ',' << format_double(f.kind_cosine);
    for (double p : f.type_prob) out << ',' << format_double(p);
    out << '\n';
  }
}

inline void write_confusion_md(std::ostream& out, const Confusion& c) {
  out << "| true \\ predicted |";
  for (std::size_t k = 0; k < kNumKinds; ++k) out << ' ' << to_string(static_cast<Kind>(k)) << " |";
  out << "\n|---|";
  for (std::size_t k = 0; k < kNumKinds; ++k) out << "---|";
  out << '\n';
  for (std::size_t t = 0; t < kNumKinds; ++t) {
    out << "| " << to_string(static_cast<Kind>(t)) << " |";
    for (std::size_t k = 0; k < kNumKinds; ++k) out << ' ' << c.kinds[t][k] << " |";
    out << '\n';
  }
  out << "\n| true \\ predicted |";
  for (std::size_t k = 0; k < kNumStatTypes; ++k) out << ' ' << to_string(static_cast<StatType>(k)) << " |";
  out << "\n|---|";
  for (std::size_t k = 0; k < kNumStatTypes; ++k) out << "---|";
  out << '\n';
  for (std::size_t t = 0; t < kNumStatTypes; ++t) {
    out << "| " << to_string(static_cast<StatType>(t)) << " |";
    for (std::size_t k = 0; k < kNumStatTypes; ++k) out << ' ' << c.types[t][k] << " |";
    out << '\n';
  }
}

}  // namespace abda
