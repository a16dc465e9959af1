#pragma once

#include <string>
#include <utility>
#include <vector>

namespace xspeech {

/// One generated token with its log probability and the top-K alternatives
/// at that position (descending by logprob).
struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> alternatives;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

}  // namespace xspeech
