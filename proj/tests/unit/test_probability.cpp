#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/oracles.hpp"
#include "xspeech/probability.hpp"

namespace xspeech {
namespace {

using Alts = std::vector<std::pair<std::string, double>>;

TokenLogprob tok(std::string t) { return TokenLogprob{std::move(t), 0.0, {}}; }

TEST(LocateLabel, SingleToken) {
  std::vector<TokenLogprob> tokens{tok("0")};
  EXPECT_EQ(locate_label_position(tokens, PromptStyle::DirectLabel), 0u);
}

TEST(LocateLabel, DigitAfterMarker) {
  std::vector<TokenLogprob> tokens{tok("\xe2\x80\xa6"), tok("Label"), tok(":"), tok(" 1")};
  EXPECT_EQ(locate_label_position(tokens, PromptStyle::JustifyThenLabel), 3u);
}

TEST(LocateLabel, EmbeddedDigitIsExtractionError) {
  std::vector<TokenLogprob> tokens{tok("2024")};
  EXPECT_THROW(locate_label_position(tokens, PromptStyle::DirectLabel), ExtractionError);
  std::vector<TokenLogprob> split_number{tok("20"), tok("2")};
  EXPECT_THROW(locate_label_position(split_number, PromptStyle::JustifyThenLabel), ExtractionError);
}

TEST(LocateLabel, LastForJustifyFirstForDirect) {
  std::vector<TokenLogprob> tokens{tok("1"), tok(" or"), tok(" 2")};
  EXPECT_EQ(locate_label_position(tokens, PromptStyle::JustifyThenLabel), 2u);
  EXPECT_EQ(locate_label_position(tokens, PromptStyle::DirectLabel), 0u);
}

TEST(ClassDistribution, EqualLogprobsAreUniform) {
  const Alts alts{{"0", -1.0}, {"1", -1.0}, {"2", -1.0}};
  const auto d = class_distribution(alts);
  for (double p : d.p) EXPECT_NEAR(p, 1.0 / 3, 1e-12);
}

TEST(ClassDistribution, RenormalisesTopK) {
  const Alts alts{{"0", std::log(0.7)}, {"1", std::log(0.2)}, {"2", std::log(0.05)}};
  const auto d = class_distribution(alts);
  EXPECT_NEAR(d.p[0], 0.73684, 1e-5);
  EXPECT_NEAR(d.p[1], 0.21053, 1e-5);
  EXPECT_NEAR(d.p[2], 0.05263, 1e-5);
}

TEST(ClassDistribution, BestVariantWinsAndMissingClassFloored) {
  const Alts alts{{"0", std::log(0.9)}, {" 0", std::log(0.05)}, {"1", std::log(0.05)}, {"The", std::log(0.01)}};
  const auto d = class_distribution(alts);
  EXPECT_NEAR(d.p[0], 0.9 / (0.95 + 1e-10), 1e-12);
  EXPECT_NEAR(d.p[0], 0.9474, 1e-4);
  EXPECT_NEAR(d.p[1], 0.0526, 1e-4);
  EXPECT_NEAR(d.p[2], 1e-10 / 0.95, 1e-15);
}

TEST(ClassDistribution, WhitespaceVariantsMapToSameClass) {
  for (const std::string variant : {"0", " 0", "0\n", "\t0 "}) {
    const Alts alts{{variant, std::log(0.6)}, {"1", std::log(0.3)}, {"2", std::log(0.1)}};
    EXPECT_NEAR(class_distribution(alts).p[0], 0.6, 1e-12) << variant;
  }
}

TEST(ClassDistribution, AllMissingIsExtractionError) {
  const Alts alts{{"yes", -0.1}, {"10", -1.0}};
  EXPECT_THROW(class_distribution(alts), ExtractionError);
}

TEST(PredictedLabel, ArgmaxWithLowestCodeTieBreak) {
  EXPECT_EQ(predicted_label({{0.2, 0.5, 0.3}}), ClassLabel::Exclusionary);
  EXPECT_EQ(predicted_label({{0.4, 0.4, 0.2}}), ClassLabel::Derogatory);
  EXPECT_EQ(predicted_label({{1.0 / 3, 1.0 / 3, 1.0 / 3}}), ClassLabel::Derogatory);
  EXPECT_EQ(predicted_label({{0.1, 0.45, 0.45}}), ClassLabel::Exclusionary);
}

TEST(ClassDistribution, PropertiesOnRandomTopK) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lp(-12.0, 0.0);
  std::uniform_real_distribution<double> shift(-5.0, 5.0);
  for (int trial = 0; trial < 5000; ++trial) {
    std::array<double, 3> logprobs{lp(rng), lp(rng), lp(rng)};
    Alts alts;
    for (int c = 0; c < 3; ++c) alts.emplace_back(std::to_string(c), logprobs[c]);
    alts.emplace_back("x", lp(rng));
    std::shuffle(alts.begin(), alts.end(), rng);
    const auto d = class_distribution(alts);
    EXPECT_TRUE(d.valid(1e-9));

    const auto expected = oracle::renormalise(logprobs);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(d.p[c], expected[c], 1e-9);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (logprobs[a] > logprobs[b]) {
          EXPECT_GT(d.p[a], d.p[b]);
        }
      }
    }

    const double k = shift(rng);
    Alts shifted;
    for (int c = 0; c < 3; ++c) shifted.emplace_back(std::to_string(c), logprobs[c] + k);
    const auto ds = class_distribution(shifted);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(ds.p[c], d.p[c], 1e-9);
    EXPECT_EQ(predicted_label(ds), predicted_label(d));
  }
}

TEST(ExtractDistribution, IncludesSampledToken) {
  std::vector<TokenLogprob> tokens{{" 2", std::log(0.5), {{" 0", std::log(0.3)}, {" 1", std::log(0.2)}}}};
  const auto d = extract_distribution(tokens, PromptStyle::JustifyThenLabel);
  EXPECT_NEAR(d.p[2], 0.5, 1e-12);
  EXPECT_NEAR(d.p[0], 0.3, 1e-12);
}

}  // namespace
}  // namespace xspeech
