#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "test_support.hpp"
#include "xspeech/metrics.hpp"

namespace xspeech {
namespace {

using testing::matches_golden;

struct Fixture {
  std::map<std::string, ParsedOutput> preds;
  std::map<std::string, ClassLabel> golds;
};

ParsedOutput parsed(int code) {
  if (code < 0) return ParsedOutput{};
  return ParsedOutput{static_cast<ClassLabel>(code), std::nullopt, ParseStatus::Parsed};
}

Fixture make(const std::vector<int>& gold, const std::vector<int>& pred) {
  Fixture f;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto id = "s" + std::to_string(100 + i);
    f.golds[id] = static_cast<ClassLabel>(gold[i]);
    f.preds[id] = parsed(pred[i]);
  }
  return f;
}

TEST(Confusion, HandTally) {
  const auto f = make({0, 0, 1, 2}, {0, 1, 1, 2});
  const auto cm = confusion(f.preds, f.golds);
  ConfusionMatrix expected;
  expected.counts[0][0] = 1;
  expected.counts[1][0] = 1;
  expected.counts[1][1] = 1;
  expected.counts[2][2] = 1;
  EXPECT_EQ(cm, expected);
  EXPECT_EQ(cm.total(), 4);
}

TEST(Confusion, AllUnparsedGoesToUnparsedRow) {
  const auto f = make({0, 1, 2, 2}, {-1, -1, -1, -1});
  const auto cm = confusion(f.preds, f.golds);
  EXPECT_EQ(cm.counts[3], (std::array<long, 3>{1, 1, 2}));
  for (int r = 0; r < 3; ++r) EXPECT_EQ(cm.counts[r], (std::array<long, 3>{0, 0, 0}));
}

TEST(Confusion, PerfectIsDiagonal) {
  const auto f = make({0, 1, 2, 1}, {0, 1, 2, 1});
  const auto cm = confusion(f.preds, f.golds);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r != c) { EXPECT_EQ(cm.counts[r][c], 0); }
    }
  }
}

TEST(Confusion, IdMismatchListsBothSides) {
  auto f = make({0, 1}, {0, 1});
  f.preds["extra"] = parsed(0);
  f.golds["missing"] = ClassLabel::Dangerous;
  try {
    confusion(f.preds, f.golds);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("extra"), std::string::npos);
    EXPECT_NE(msg.find("missing"), std::string::npos);
  }
}

TEST(F1Scores, HandComputed) {
  const auto f = make({0, 0, 1, 2}, {0, 1, 1, 2});
  const auto r = evaluate(f.preds, f.golds);
  EXPECT_NEAR(r.per_class_f1[0], 2.0 / 3, 1e-4);
  EXPECT_NEAR(r.per_class_f1[1], 2.0 / 3, 1e-4);
  EXPECT_NEAR(r.per_class_f1[2], 1.0, 1e-12);
  EXPECT_NEAR(r.f1_macro, 0.7778, 1e-4);
  EXPECT_EQ(r.n, 4);
  EXPECT_EQ(r.unparsed_count, 0);
}

TEST(F1Scores, Perfect) {
  const auto f = make({0, 1, 2}, {0, 1, 2});
  const auto r = evaluate(f.preds, f.golds);
  for (double v : r.per_class_f1) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.f1_macro, 1.0);
}

TEST(F1Scores, ReferenceMacros) {
  // Per-class F1 from two reference result columns.
  EXPECT_NEAR(report_from_per_class({0.7145, 0.3661, 0.4855}).f1_macro * 100, 52.20, 0.02);
  EXPECT_NEAR(report_from_per_class({0.7485, 0.5237, 0.8133}).f1_macro * 100, 69.52, 0.02);
}

TEST(F1Scores, ZeroOverZeroIsZero) {
  // Class 2 never appears as gold or prediction.
  const auto f = make({0, 1}, {0, 1});
  const auto r = evaluate(f.preds, f.golds);
  EXPECT_EQ(r.per_class_f1[2], 0.0);
  EXPECT_NEAR(r.f1_macro, 2.0 / 3, 1e-12);
}

TEST(F1Scores, EmptyMatrixRejected) { EXPECT_THROW(f1_scores(ConfusionMatrix{}), DataError); }

TEST(F1Scores, UnparsedCountsAsFalseNegativeOnly) {
  const auto f = make({0, 0, 1}, {0, -1, 1});
  const auto r = evaluate(f.preds, f.golds);
  EXPECT_NEAR(r.per_class_f1[0], 2.0 / 3, 1e-12);  // P=1, R=1/2
  EXPECT_EQ(r.per_class_f1[1], 1.0);
  EXPECT_EQ(r.unparsed_count, 1);
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, bool allow_unparsed) {
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(rng() % (allow_unparsed ? 4 : 3)) - (allow_unparsed ? 1 : 0);
  return out;
}

TEST(F1Scores, MatchesBruteForceOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    const auto gold = random_labels(rng, n, false);
    const auto pred = random_labels(rng, n, true);
    const auto f = make(gold, pred);
    const auto r = evaluate(f.preds, f.golds);
    const auto o = oracle::f1(gold, pred);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.per_class_f1[c], o.per_class[c], 1e-9);
    EXPECT_NEAR(r.f1_macro, o.macro, 1e-9);
    EXPECT_NEAR(r.f1_macro, (r.per_class_f1[0] + r.per_class_f1[1] + r.per_class_f1[2]) / 3, 1e-9);
  }
}

TEST(F1Scores, UnparsedNeverIncreasesAnyF1) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const auto gold = random_labels(rng, n, false);
    auto pred = random_labels(rng, n, true);
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] == gold[i]) correct.push_back(i);
    }
    if (correct.empty()) continue;
    const auto before = evaluate(make(gold, pred).preds, make(gold, pred).golds);
    pred[correct[rng() % correct.size()]] = -1;
    const auto f = make(gold, pred);
    const auto after = evaluate(f.preds, f.golds);
    for (int c = 0; c < 3; ++c) EXPECT_LE(after.per_class_f1[c], before.per_class_f1[c] + 1e-15);
    EXPECT_LE(after.f1_macro, before.f1_macro + 1e-15);
  }
}

TEST(Agreement, IdenticalMaps) {
  const auto f = make({0, 1, 2, 0}, {0, 1, 2, 0});
  const auto a = agreement(f.preds, f.preds, f.golds);
  EXPECT_EQ(a.agreement_rate, 1.0);
  EXPECT_EQ(a.error_overlap, 1.0);
}

TEST(Agreement, DisjointErrors) {
  const std::vector<int> gold(10, 0);
  std::vector<int> pa(10, 0), pb(10, 0);
  pa[0] = pa[1] = 1;
  pb[2] = pb[3] = 2;
  pb[4] = -1;
  const auto a = agreement(make(gold, pa).preds, make(gold, pb).preds, make(gold, pa).golds);
  EXPECT_EQ(a.error_overlap, 0.0);
  EXPECT_NEAR(a.agreement_rate, 5.0 / 10, 1e-12);
}

TEST(Agreement, JaccardOfErrorSets) {
  // errors {a,b,c} vs {b,c,d}
  const std::vector<int> gold{0, 0, 0, 0, 0};
  const std::vector<int> pa{1, 1, 1, 0, 0};
  const std::vector<int> pb{0, 1, 2, 1, 0};
  const auto a = agreement(make(gold, pa).preds, make(gold, pb).preds, make(gold, pa).golds);
  EXPECT_NEAR(a.error_overlap, 0.5, 1e-12);
  EXPECT_NEAR(a.agreement_rate, 2.0 / 5, 1e-12);
}

TEST(Agreement, Symmetric) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    const auto gold = random_labels(rng, n, false);
    const auto fa = make(gold, random_labels(rng, n, true));
    const auto fb = make(gold, random_labels(rng, n, true));
    const auto ab = agreement(fa.preds, fb.preds, fa.golds);
    const auto ba = agreement(fb.preds, fa.preds, fa.golds);
    EXPECT_EQ(ab.agreement_rate, ba.agreement_rate);
    EXPECT_EQ(ab.error_overlap, ba.error_overlap);
  }
}

TEST(RenderReport, ReferenceCells) {
  const auto text = render_report({{"gpt-4o", report_from_per_class({0.7145, 0.3661, 0.4855})}}, ReportFormat::Csv);
  EXPECT_EQ(text,
            "Label,gpt-4o\n"
            "Derogatory,71.45\n"
            "Exclusionary,36.61\n"
            "Dangerous,48.55\n"
            "F1-macro,52.20\n");
}

TEST(RenderReport, AllOnes) {
  const auto text = render_report({{"perfect", report_from_per_class({1.0, 1.0, 1.0})}}, ReportFormat::Markdown);
  EXPECT_EQ(text,
            "| Label | perfect |\n"
            "|---|---:|\n"
            "| Derogatory | 100.00 |\n"
            "| Exclusionary | 100.00 |\n"
            "| Dangerous | 100.00 |\n"
            "| F1-macro | 100.00 |\n");
}

TEST(RenderReport, TwoRunsGolden) {
  const auto f = make({0, 0, 1, 2, 2, 1}, {0, 1, 1, 2, -1, 1});
  const std::vector<std::pair<std::string, EvalReport>> reports{
      {"run-a", evaluate(f.preds, f.golds)}, {"run|b", report_from_per_class({0.7118, 0.4940, 0.7556})}};
  EXPECT_TRUE(matches_golden("report_two_runs.md", render_report(reports, ReportFormat::Markdown)));
  EXPECT_TRUE(matches_golden("report_two_runs.csv", render_report(reports, ReportFormat::Csv)));
}

TEST(EvalReportJson, RoundTrip) {
  const auto f = make({0, 0, 1, 2, 2}, {0, 1, 1, -1, 2});
  const auto r = evaluate(f.preds, f.golds);
  const auto back = eval_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.per_class_f1, r.per_class_f1);
  EXPECT_EQ(back.f1_macro, r.f1_macro);
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.n, r.n);
  EXPECT_EQ(back.unparsed_count, r.unparsed_count);
}

TEST(ConfusionCsv, Layout) {
  const auto f = make({0, 1, 2}, {0, -1, 1});
  std::ostringstream out;
  write_confusion_csv(out, confusion(f.preds, f.golds));
  EXPECT_EQ(out.str(),
            "predicted,derogatory,exclusionary,dangerous\n"
            "derogatory,1,0,0\n"
            "exclusionary,0,0,1\n"
            "dangerous,0,0,0\n"
            "unparsed,0,1,0\n");
}

}  // namespace
}  // namespace xspeech
