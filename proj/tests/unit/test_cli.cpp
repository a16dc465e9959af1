#include <gtest/gtest.h>

#include "e2e_pipeline.hpp"

namespace xspeech {
namespace {

using testing::fixtures_dir;
using testing::matches_golden;
using testing::read_file;
using testing::ScratchDir;

std::string corpus30() { return (fixtures_dir() / "corpus30.csv").string(); }

TEST(CliSplit, DeterministicAndStratified) {
  ScratchDir dir;
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "7", "--out", (dir / "a").string()}), 0);
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "7", "--out", (dir / "b").string()}), 0);
  const auto a = read_file(dir / "a" / "assignment.csv");
  EXPECT_EQ(a, read_file(dir / "b" / "assignment.csv"));
  EXPECT_EQ(read_file(dir / "a" / "split.json"), read_file(dir / "b" / "split.json"));
  const auto assignment = read_assignment_csv(dir / "a" / "assignment.csv");
  EXPECT_EQ(assignment.entries.size(), 30u);  // two duplicate rows dropped
  for (const auto& c : assignment.counts()) EXPECT_EQ(c, (SplitCounts{6, 2, 2}));

  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "8", "--out", (dir / "c").string()}), 0);
  EXPECT_NE(a, read_file(dir / "c" / "assignment.csv"));
}

TEST(CliSplit, QuotaFile) {
  ScratchDir dir;
  testing::write_file(dir / "q.json",
                      R"({"derogatory":[5,3,2],"exclusionary":[4,4,2],"dangerous":[10,0,0]})");
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--quotas", (dir / "q.json").string(), "--out",
                      (dir / "s").string()}),
            0);
  const auto counts = read_assignment_csv(dir / "s" / "assignment.csv").counts();
  EXPECT_EQ(counts[0], (SplitCounts{5, 3, 2}));
  EXPECT_EQ(counts[2], (SplitCounts{10, 0, 0}));
}

TEST(CliConfig, FileSuppliesDefaultsFlagsWin) {
  ScratchDir dir;
  testing::write_file(dir / "exp.toml", "[split]\ncorpus = \"" + corpus30() + "\"\nseed = 7\nout = \"" +
                                            (dir / "from-config").string() + "\"\n");
  const auto config = (dir / "exp.toml").string();
  ASSERT_EQ(cli::run({"--config", config, "split"}), 0);
  ASSERT_EQ(cli::run({"--config", config, "split", "--out", (dir / "flag").string()}), 0);
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "7", "--out", (dir / "plain").string()}), 0);
  const auto plain = read_file(dir / "plain" / "assignment.csv");
  EXPECT_EQ(read_file(dir / "from-config" / "assignment.csv"), plain);
  EXPECT_EQ(read_file(dir / "flag" / "assignment.csv"), plain);
}

TEST(CliSplit, CustomDelimiterAndColumns) {
  ScratchDir dir;
  testing::write_file(dir / "c.txt", "id;post;cls\n1;first post;0\n2;second post;1\n3;third post;2\n4;fourth post;0\n");
  ASSERT_EQ(cli::run({"split", "--corpus", (dir / "c.txt").string(), "--delimiter", ";", "--text-column", "post",
                      "--label-column", "cls", "--fractions", "1", "0", "0", "--out", (dir / "s").string()}),
            0);
  EXPECT_EQ(read_assignment_csv(dir / "s" / "assignment.csv").entries.size(), 4u);
  EXPECT_NE(cli::run({"split", "--corpus", (dir / "c.txt").string(), "--delimiter", ";;", "--out",
                      (dir / "t").string()}),
            0);
}

TEST(CliErrors, BadInputsExitNonZero) {
  ScratchDir dir;
  EXPECT_NE(cli::run({"split", "--corpus", (dir / "missing.csv").string(), "--out", (dir / "o").string()}), 0);
  EXPECT_NE(cli::run({"split", "--corpus", corpus30()}), 0);  // --out is required
  EXPECT_NE(cli::run({"split", "--corpus", corpus30(), "--fractions", "0.5", "0.5", "0.5", "--out",
                      (dir / "o").string()}),
            0);
  EXPECT_NE(cli::run({"nonsense"}), 0);
  EXPECT_NE(cli::run({"report", "--format", "markdown"}), 0);
}

TEST(CliEnsemble, OneMemberIsAnError) {
  ScratchDir dir;
  MockLlmServer server(testing::e2e_script());
  server.start();
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "7", "--out", (dir / "split").string()}), 0);
  const auto assignment = (dir / "split" / "assignment.csv").string();
  ASSERT_EQ(cli::run({"infer", "--corpus", corpus30(), "--assignment", assignment, "--split", "dev", "--style",
                      "direct", "--model", "mock-alpha", "--base-url", server.base_url(), "--api-key", "e2e-key",
                      "--cache-dir", (dir / "cache").string(), "--run-dir", (dir / "run").string()}),
            0);
  ASSERT_EQ(cli::run({"eval", "--run", (dir / "run").string(), "--assignment", assignment}), 0);
  EXPECT_NE(cli::run({"ensemble", "--member", (dir / "run").string(), "--dev-report",
                      (dir / "run" / "report.json").string(), "--out", (dir / "ens").string()}),
            0);
  EXPECT_FALSE(std::filesystem::exists(dir / "ens" / "records.jsonl"));
}

TEST(CliInfer, WrongKeyFailsRun) {
  ScratchDir dir;
  MockLlmServer server(testing::e2e_script());
  server.start();
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--out", (dir / "split").string()}), 0);
  EXPECT_NE(cli::run({"infer", "--corpus", corpus30(), "--assignment", (dir / "split" / "assignment.csv").string(),
                      "--model", "mock-alpha", "--base-url", server.base_url(), "--api-key", "nope", "--no-cache", "--limit", "1",
                      "--run-dir", (dir / "run").string()}),
            0);
  EXPECT_EQ(server.mock().stats().requests, 4);  // 401s are not retried; 4th failure exceeds the budget of 3
}

TEST(CliPipeline, GoldenReportAndOfflineRerun) {
  ScratchDir dir;
  MockLlmServer server(testing::e2e_script());
  server.start();
  const auto first = testing::run_pipeline(server, dir / "one", dir / "cache");
  ASSERT_TRUE(first.ok) << first.failed_step;
  EXPECT_EQ(first.infer_requests, 4 * 12);
  const auto second = testing::run_pipeline(server, dir / "two", dir / "cache");
  ASSERT_TRUE(second.ok) << second.failed_step;
  EXPECT_EQ(second.infer_requests, 0);

  const auto md = read_file(first.report_md);
  EXPECT_EQ(md, read_file(second.report_md));
  EXPECT_EQ(read_file(first.report_csv), read_file(second.report_csv));
  EXPECT_TRUE(matches_golden("e2e_report.md", md));
  EXPECT_TRUE(matches_golden("e2e_report.csv", read_file(first.report_csv)));

  // A fused run reads like any other run.
  const auto fused = cli::load_run(dir / "one" / "runs" / "ensemble-prob");
  EXPECT_EQ(fused.records.size(), 6u);
  for (const auto& r : fused.records) EXPECT_TRUE(r.distribution);
}

TEST(CliPipeline, TrainsetExports) {
  ScratchDir dir;
  MockLlmServer server(testing::e2e_script());
  server.start();
  ASSERT_EQ(cli::run({"split", "--corpus", corpus30(), "--seed", "7", "--out", (dir / "split").string()}), 0);
  const auto assignment = (dir / "split" / "assignment.csv").string();
  ASSERT_EQ(cli::run({"export-sft", "--corpus", corpus30(), "--assignment", assignment, "--out",
                      (dir / "sft.jsonl").string()}),
            0);
  EXPECT_EQ(read_sft_jsonl(dir / "sft.jsonl").size(), 18u);
  EXPECT_NE(read_file(dir / "sft.jsonl.manifest.json").find("\"xspeech-sft/1\""), std::string::npos);

  // Justifications come from a justify-style run over the train split.
  ASSERT_EQ(cli::run({"infer", "--corpus", corpus30(), "--assignment", assignment, "--split", "train", "--style",
                      "justify", "--model", "mock-alpha", "--base-url", server.base_url(), "--api-key", "e2e-key",
                      "--cache-dir", (dir / "cache").string(), "--run-dir", (dir / "train-run").string()}),
            0);
  ASSERT_EQ(cli::run({"export-sft", "--corpus", corpus30(), "--assignment", assignment, "--variant",
                      "with-justification", "--justifications-run", (dir / "train-run").string(), "--out",
                      (dir / "sft_j.jsonl").string()}),
            0);
  for (const auto& r : read_sft_jsonl(dir / "sft_j.jsonl")) {
    EXPECT_NE(r.completion.find('\n'), std::string::npos);
  }
  EXPECT_NE(cli::run({"export-sft", "--corpus", corpus30(), "--assignment", assignment, "--variant",
                      "with-justification", "--out", (dir / "none.jsonl").string()}),
            0);

  ASSERT_EQ(cli::run({"infer", "--corpus", corpus30(), "--assignment", assignment, "--split", "dev", "--style",
                      "direct", "--model", "mock-bravo", "--base-url", server.base_url(), "--api-key", "e2e-key",
                      "--logprobs", "--cache-dir", (dir / "cache").string(), "--run-dir", (dir / "dev-run").string()}),
            0);
  ASSERT_EQ(cli::run({"build-dpo", "--run", (dir / "dev-run").string(), "--corpus", corpus30(), "--assignment",
                      assignment, "--out", (dir / "dpo.jsonl").string()}),
            0);
  const auto pairs = read_dpo_jsonl(dir / "dpo.jsonl");
  EXPECT_EQ(pairs.size(), 6u);
  for (const auto& p : pairs) EXPECT_NE(p.chosen, p.rejected);

  testing::write_file(dir / "other.json", to_json(TemplateSet{"x", "sys", "{text}", "{text}"}).dump());
  EXPECT_NE(cli::run({"build-dpo", "--run", (dir / "dev-run").string(), "--corpus", corpus30(), "--assignment",
                      assignment, "--templates", (dir / "other.json").string(), "--out", (dir / "x.jsonl").string()}),
            0);
}

TEST(CliReport, AgreementCsv) {
  ScratchDir dir;
  MockLlmServer server(testing::e2e_script());
  server.start();
  ASSERT_TRUE(testing::run_pipeline(server, dir / "w", dir / "cache").ok);
  const auto runs = dir / "w" / "runs";
  ASSERT_EQ(cli::run({"report", "--run", "a=" + (runs / "mock-alpha-test").string(), "--run",
                      "b=" + (runs / "mock-bravo-test").string(), "--agreement-out", (dir / "agree.csv").string(),
                      "--assignment", (dir / "w" / "split" / "assignment.csv").string(), "--out",
                      (dir / "r.md").string()}),
            0);
  const auto text = read_file(dir / "agree.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "run_a,run_b,agreement_rate,error_overlap");
  EXPECT_NE(text.find("a,a,1.000000,1.000000"), std::string::npos);
}

}  // namespace
}  // namespace xspeech
