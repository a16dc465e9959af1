#pragma once

// Class probabilities from the logprobs at the label token.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "xspeech/error.hpp"
#include "xspeech/labels.hpp"
#include "xspeech/logprobs.hpp"
#include "xspeech/promptkit.hpp"

namespace xspeech {

/// Raised when a response has a label but no usable label-token logprobs.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// Mass given to a class whose digit is absent from the top-K list.
inline constexpr double kMissingClassMass = 1e-10;

/// p[c] indexed by class code; sums to 1.
struct ClassDistribution {
  std::array<double, 3> p{1.0 / 3, 1.0 / 3, 1.0 / 3};

  double operator[](ClassLabel c) const { return p[code_of(c)]; }

  bool valid(double tol = 1e-9) const {
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
  }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

/// Argmax; ties go to the lowest class code.
inline ClassLabel predicted_label(const ClassDistribution& dist) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (dist.p[c] > dist.p[best]) best = c;
  }
  return static_cast<ClassLabel>(best);
}

namespace detail {

inline std::string_view trim_token(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Index of the token holding the label digit: the token that covers the
/// standalone digit found in the concatenated token text (last one for
/// JustifyThenLabel, first for DirectLabel).
inline std::size_t locate_label_position(std::span<const TokenLogprob> tokens, PromptStyle style) {
  std::string text;
  for (const auto& t : tokens) text += t.token;
  const auto pos = find_standalone_digit(text, style == PromptStyle::JustifyThenLabel);
  if (!pos) throw ExtractionError("no token carries a standalone label digit");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    offset += tokens[i].token.size();
    if (*pos < offset) return i;
  }
  throw ExtractionError("label digit offset outside the token stream");
}

/// For each class, the best logprob among alternatives whose
/// whitespace-trimmed surface form is that class's digit, exponentiated.
/// Absent classes get kMissingClassMass; the masses are then normalised.
inline ClassDistribution class_distribution(std::span<const std::pair<std::string, double>> alternatives) {
  std::array<double, 3> best{};
  std::array<bool, 3> seen{};
  for (const auto& [token, logprob] : alternatives) {
    const auto surface = detail::trim_token(token);
    if (surface.size() != 1) continue;
    const auto label = label_from_digit(surface[0]);
    if (!label) continue;
    const int c = code_of(*label);
    if (!seen[c] || logprob > best[c]) best[c] = logprob;
    seen[c] = true;
  }
  if (!seen[0] && !seen[1] && !seen[2]) throw ExtractionError("none of the class digits is among the top-K alternatives");

  std::array<double, 3> mass{};
  double total = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    mass[c] = seen[c] ? std::exp(best[c]) : kMissingClassMass;
    total += mass[c];
  }
  ClassDistribution dist;
  for (int c = 0; c < kNumClasses; ++c) dist.p[c] = mass[c] / total;
  return dist;
}

/// Distribution at the label position of a parsed response. The sampled
/// token itself counts as one of the alternatives.
inline ClassDistribution extract_distribution(std::span<const TokenLogprob> tokens, PromptStyle style) {
  const auto& at = tokens[locate_label_position(tokens, style)];
  std::vector<std::pair<std::string, double>> candidates = at.alternatives;
  candidates.emplace_back(at.token, at.logprob);
  return class_distribution(candidates);
}

}  // namespace xspeech
