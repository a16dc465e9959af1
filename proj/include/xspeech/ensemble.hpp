#pragma once

// F1-macro weighted fusion of several models' predictions.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xspeech/error.hpp"
#include "xspeech/labels.hpp"
#include "xspeech/log.hpp"
#include "xspeech/metrics.hpp"
#include "xspeech/probability.hpp"

namespace xspeech {

class FusionError : public Error {
 public:
  using Error::Error;
};

/// Member model id -> weight (its dev-split F1-macro).
using EnsembleWeights = std::map<std::string, double>;

inline void validate_weights(const EnsembleWeights& weights) {
  if (weights.size() < 2) throw DataError("an ensemble needs at least 2 members, got " + std::to_string(weights.size()));
  for (const auto& [model, w] : weights) {
    if (!(w > 0.0)) throw DataError("member '" + model + "' has non-positive weight");
  }
}

/// Weight of each model is its F1-macro on the shared dev predictions.
inline EnsembleWeights compute_weights(const std::map<std::string, EvalReport>& dev_reports) {
  EnsembleWeights weights;
  for (const auto& [model, report] : dev_reports) {
    if (!(report.f1_macro > 0.0)) {
      throw DataError("model '" + model + "' has F1-macro 0 on the dev split; it cannot be weighted");
    }
    weights[model] = report.f1_macro;
  }
  validate_weights(weights);
  return weights;
}

namespace detail {

inline ClassLabel argmax_lowest(const std::array<double, 3>& score) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (score[c] > score[best]) best = c;
  }
  return static_cast<ClassLabel>(best);
}

}  // namespace detail

/// Sums each member's weight onto the class it predicted. Members with no
/// prediction (absent or nullopt) abstain.
inline ClassLabel vote_weighted(const std::map<std::string, std::optional<ClassLabel>>& predictions,
                                const EnsembleWeights& weights) {
  std::array<double, 3> score{};
  bool any = false;
  for (const auto& [model, weight] : weights) {
    auto it = predictions.find(model);
    if (it == predictions.end() || !it->second) {
      log().warn("ensemble member '{}' abstains (no parsed label)", model);
      continue;
    }
    score[code_of(*it->second)] += weight;
    any = true;
  }
  if (!any) throw FusionError("every ensemble member abstained");
  return detail::argmax_lowest(score);
}

/// Weighted mean of the members' class distributions.
inline ClassDistribution prob_weighted_mean(const std::map<std::string, std::optional<ClassDistribution>>& distributions,
                                            const EnsembleWeights& weights) {
  std::array<double, 3> sum{};
  double total = 0.0;
  for (const auto& [model, weight] : weights) {
    auto it = distributions.find(model);
    if (it == distributions.end() || !it->second) {
      log().warn("ensemble member '{}' abstains (no class distribution)", model);
      continue;
    }
    for (int c = 0; c < kNumClasses; ++c) sum[c] += weight * it->second->p[c];
    total += weight;
  }
  if (total <= 0.0) throw FusionError("every ensemble member abstained");
  ClassDistribution mean;
  for (int c = 0; c < kNumClasses; ++c) mean.p[c] = sum[c] / total;
  return mean;
}

inline ClassLabel prob_weighted(const std::map<std::string, std::optional<ClassDistribution>>& distributions,
                                const EnsembleWeights& weights) {
  return predicted_label(prob_weighted_mean(distributions, weights));
}

enum class FusionRule { Vote, Prob };

inline FusionRule parse_rule(std::string_view name) {
  if (name == "vote") return FusionRule::Vote;
  if (name == "prob") return FusionRule::Prob;
  throw DataError("unknown ensemble rule '" + std::string(name) + "' (expected vote or prob)");
}

inline std::string_view rule_name(FusionRule r) { return r == FusionRule::Vote ? "vote" : "prob"; }

}  // namespace xspeech
