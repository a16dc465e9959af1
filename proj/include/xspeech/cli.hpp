#pragma once

// The xspeech command line: split, infer, export-sft, build-dpo, eval,
// ensemble, report and mock-llm over a flat run-directory layout.
//
//   runs/<name>/manifest.json   what produced the records
//   runs/<name>/records.jsonl   one InferenceRecord per line
//   runs/<name>/report.json     written by `eval`

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "xspeech/corpus.hpp"
#include "xspeech/ensemble.hpp"
#include "xspeech/error.hpp"
#include "xspeech/llm_client.hpp"
#include "xspeech/log.hpp"
#include "xspeech/metrics.hpp"
#include "xspeech/mock_server.hpp"
#include "xspeech/promptkit.hpp"
#include "xspeech/records.hpp"
#include "xspeech/trainsets.hpp"

namespace xspeech::cli {

namespace fs = std::filesystem;

inline constexpr const char* kRunSchema = "xspeech-run/1";

/// Advisory exclusive lock on <dir>/.lock for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("run directory " + dir.string() + " is in use by another xspeech process");
    }
  }
  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out.flush()) throw Error("write failed: " + path.string());
}

inline std::string pretty(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

/// Writes a manifest, keeping the previous "created" stamp when nothing
/// else changed so that reruns leave the file byte-identical.
inline void write_manifest(const fs::path& dir, nlohmann::ordered_json manifest) {
  const auto path = dir / "manifest.json";
  std::string created = utc_timestamp();
  if (fs::exists(path)) {
    try {
      auto old = nlohmann::ordered_json::parse(std::ifstream(path, std::ios::binary));
      const auto old_created = old.value("created", std::string{});
      old.erase("created");
      if (old == manifest && !old_created.empty()) created = old_created;
    } catch (const nlohmann::json::exception&) {
    }
  }
  manifest["created"] = created;
  write_text_file(path, pretty(manifest));
}

struct Run {
  fs::path dir;
  nlohmann::json manifest;
  std::vector<InferenceRecord> records;
};

inline Run load_run(const fs::path& dir) {
  Run run{dir, read_json_file(dir / "manifest.json"), read_records(dir / "records.jsonl")};
  if (run.manifest.value("schema", std::string{}) != kRunSchema) {
    throw DataError(dir.string() + ": manifest schema is not " + std::string(kRunSchema));
  }
  const auto expected = run.manifest.value("record_count", static_cast<std::size_t>(0));
  if (expected != run.records.size()) {
    throw DataError(dir.string() + ": manifest promises " + std::to_string(expected) + " records, found " +
                    std::to_string(run.records.size()));
  }
  return run;
}

inline TemplateSet templates_from(const std::string& path) {
  return path.empty() ? default_templates() : load_templates(path);
}

inline std::vector<Sample> load_dedup(const std::string& path, const CorpusSchema& schema) {
  const auto raw = load_corpus(path, schema);
  auto samples = dedup(raw);
  log().info("{}: {} rows, {} after dedup", path, raw.size(), samples.size());
  return samples;
}

/// NAME=PATH, or PATH alone (name = last path component).
inline std::pair<std::string, fs::path> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
  fs::path p(arg);
  auto name = p.filename().string();
  if (name.empty() || name == "report.json") name = p.parent_path().filename().string();
  return {name, p};
}

// ---------------------------------------------------------------------------

struct SplitOptions {
  std::string corpus;
  CorpusSchema schema;
  std::vector<double> fractions{0.64, 0.16, 0.20};
  std::uint64_t seed = 0;
  std::string quotas;
  std::string out;
};

inline void cmd_split(const SplitOptions& o) {
  SplitConfig config;
  if (!o.quotas.empty()) {
    auto j = read_json_file(o.quotas);
    config = split_config_from_json(j.contains("quotas") ? j : nlohmann::json{{"quotas", j}});
  }
  if (o.fractions.size() != 3) throw DataError("--fractions takes exactly three values");
  std::copy(o.fractions.begin(), o.fractions.end(), config.fractions.begin());
  config.seed = o.seed;
  config.validate();

  const auto samples = load_dedup(o.corpus, o.schema);
  const auto assignment = stratified_split(samples, config);

  const fs::path out(o.out);
  DirectoryLock lock(out);
  std::ostringstream csv_out;
  write_assignment_csv(csv_out, assignment);
  write_text_file(out / "assignment.csv", csv_out.str());

  nlohmann::ordered_json sidecar;
  sidecar["config"] = to_json(config);
  sidecar["samples"] = samples.size();
  nlohmann::ordered_json counts;
  const auto per_class = assignment.counts();
  for (auto label : kAllLabels) {
    const auto& c = per_class[code_of(label)];
    counts[std::string(name_of(label))] = {{"train", c[0]}, {"dev", c[1]}, {"test", c[2]}};
  }
  const auto totals = assignment.split_totals();
  counts["total"] = {{"train", totals[0]}, {"dev", totals[1]}, {"test", totals[2]}};
  sidecar["counts"] = counts;
  write_text_file(out / "split.json", pretty(sidecar));
  log().info("split totals train={} dev={} test={}", totals[0], totals[1], totals[2]);
}

struct InferOptions {
  std::string corpus;
  CorpusSchema schema;
  std::string assignment;
  std::string split = "test";
  std::string style = "justify";
  std::string model;
  std::string base_url;
  std::string api_key;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  int top_logprobs = 20;
  bool logprobs = false;
  std::size_t limit = 4;
  std::string cache_dir = "cache";
  bool no_cache = false;
  std::string templates;
  std::string run_dir;
  double max_failure_rate = 0.5;
  int max_attempts = 5;
  long retry_base_ms = 1000;
  long timeout_s = 120;
};

inline void cmd_infer(const InferOptions& o) {
  const auto style = parse_style(o.style);
  const auto split = parse_split(o.split);
  const auto templates = templates_from(o.templates);
  const auto corpus = load_dedup(o.corpus, o.schema);
  const auto assignment = read_assignment_csv(o.assignment);
  const auto samples = select_split(corpus, assignment, split);

  ModelEndpoint endpoint;
  endpoint.model_id = o.model;
  endpoint.base_url = o.base_url;
  endpoint.api_key = o.api_key;
  endpoint.params = default_params(style);
  if (o.temperature) endpoint.params.temperature = *o.temperature;
  if (o.max_tokens) endpoint.params.max_tokens = *o.max_tokens;
  endpoint.params.logprobs = o.logprobs;
  endpoint.params.top_logprobs = o.top_logprobs;
  endpoint.timeout = std::chrono::seconds(o.timeout_s);

  RetryPolicy policy;
  policy.max_attempts = o.max_attempts;
  policy.base_delay = std::chrono::milliseconds(o.retry_base_ms);
  LlmClient client(std::make_shared<HttplibTransport>(), policy);
  std::optional<ResponseCache> cache;
  if (!o.no_cache) cache.emplace(o.cache_dir);

  const fs::path dir(o.run_dir);
  DirectoryLock lock(dir);
  BatchOptions batch{o.limit, o.logprobs, o.max_failure_rate};
  const auto records = run_batch(client, cache ? &*cache : nullptr, endpoint, samples, style, templates, batch);

  write_records(dir / "records.jsonl", records);
  nlohmann::ordered_json m;
  m["schema"] = kRunSchema;
  m["kind"] = "inference";
  m["model_id"] = endpoint.model_id;
  m["style"] = style_name(style);
  m["split"] = split_name(split);
  m["template_hash"] = templates.hash();
  m["template_version"] = templates.version;
  m["decoding"] = {{"temperature", endpoint.params.temperature},
                   {"max_tokens", endpoint.params.max_tokens},
                   {"logprobs", endpoint.params.logprobs},
                   {"top_logprobs", endpoint.params.top_logprobs}};
  m["split_size"] = samples.size();
  m["record_count"] = records.size();
  m["skipped"] = nlohmann::ordered_json::array();
  std::size_t unparsed = 0;
  for (const auto& r : records) unparsed += r.status == ParseStatus::Unparsed;
  m["unparsed"] = unparsed;
  write_manifest(dir, m);
  log().info("{}: {} records ({} unparsed) -> {}", endpoint.model_id, records.size(), unparsed, dir.string());
}

struct EvalOptions {
  std::string run;
  std::string assignment;
  std::string split;
};

inline EvalReport cmd_eval(const EvalOptions& o) {
  const fs::path dir(o.run);
  DirectoryLock lock(dir);
  const auto run = load_run(dir);
  const auto split = parse_split(o.split.empty() ? run.manifest.value("split", std::string("test")) : o.split);
  const auto golds = read_assignment_csv(o.assignment).golds(split);
  const auto report = evaluate(predictions_of(run.records), golds);
  write_text_file(dir / "report.json", pretty(to_json(report)));
  std::ostringstream cm;
  write_confusion_csv(cm, report.confusion);
  write_text_file(dir / "confusion.csv", cm.str());
  log().info("{}: F1-macro {} over {} samples", dir.string(), percent_cell(report.f1_macro), report.n);
  return report;
}

struct EnsembleOptions {
  std::vector<std::string> members;
  std::vector<std::string> dev_reports;
  std::string rule = "vote";
  std::string out;
};

inline void cmd_ensemble(const EnsembleOptions& o) {
  if (o.members.size() < 2) throw DataError("an ensemble needs at least 2 member runs, got " + std::to_string(o.members.size()));
  if (o.dev_reports.size() != o.members.size()) {
    throw DataError("give one --dev-report per --member (" + std::to_string(o.members.size()) + " members, " +
                    std::to_string(o.dev_reports.size()) + " reports)");
  }
  const auto rule = parse_rule(o.rule);

  std::vector<std::string> keys;
  std::vector<Run> runs;
  std::map<std::string, EvalReport> dev;
  for (std::size_t i = 0; i < o.members.size(); ++i) {
    auto run = load_run(o.members[i]);
    auto key = run.manifest.value("model_id", std::string{});
    if (key.empty() || dev.contains(key)) key = fs::path(o.members[i]).filename().string();
    if (dev.contains(key)) throw DataError("duplicate ensemble member '" + key + "'");
    dev[key] = eval_report_from_json(read_json_file(o.dev_reports[i]));
    keys.push_back(key);
    runs.push_back(std::move(run));
  }
  const auto weights = compute_weights(dev);

  std::vector<std::map<std::string, const InferenceRecord*>> by_id(runs.size());
  for (std::size_t m = 0; m < runs.size(); ++m) {
    for (const auto& r : runs[m].records) by_id[m][r.sample_id] = &r;
  }
  for (std::size_t m = 1; m < runs.size(); ++m) {
    detail::require_same_ids(by_id[0], by_id[m], keys[0], keys[m]);
  }

  std::vector<InferenceRecord> fused;
  for (const auto& base : runs[0].records) {
    InferenceRecord rec;
    rec.sample_id = base.sample_id;
    Sha256 fp;
    fp.update(rule_name(rule));
    std::map<std::string, std::optional<ClassLabel>> labels;
    std::map<std::string, std::optional<ClassDistribution>> dists;
    for (std::size_t m = 0; m < runs.size(); ++m) {
      const auto* r = by_id[m].at(base.sample_id);
      labels[keys[m]] = r->label;
      dists[keys[m]] = r->distribution;
      fp.update("\x1f").update(r->fingerprint);
    }
    rec.fingerprint = fp.hex();
    try {
      if (rule == FusionRule::Vote) {
        rec.label = vote_weighted(labels, weights);
      } else {
        const auto mean = prob_weighted_mean(dists, weights);
        rec.label = predicted_label(mean);
        rec.distribution = mean;
      }
      rec.status = ParseStatus::Parsed;
    } catch (const FusionError& e) {
      rec.error = e.what();
    }
    fused.push_back(std::move(rec));
  }

  const fs::path dir(o.out);
  DirectoryLock lock(dir);
  write_records(dir / "records.jsonl", fused);

  nlohmann::ordered_json spec;
  spec["rule"] = rule_name(rule);
  auto members = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < runs.size(); ++m) {
    members.push_back({{"model_id", keys[m]}, {"run", o.members[m]}, {"dev_report", o.dev_reports[m]},
                       {"weight", weights.at(keys[m])}});
  }
  spec["members"] = members;
  write_text_file(dir / "ensemble.json", pretty(spec));

  nlohmann::ordered_json m;
  m["schema"] = kRunSchema;
  m["kind"] = "ensemble";
  m["model_id"] = "ensemble-" + std::string(rule_name(rule));
  m["style"] = runs[0].manifest.value("style", std::string{});
  m["split"] = runs[0].manifest.value("split", std::string{});
  m["template_hash"] = runs[0].manifest.value("template_hash", std::string{});
  m["ensemble"] = spec;
  m["split_size"] = fused.size();
  m["record_count"] = fused.size();
  m["skipped"] = nlohmann::ordered_json::array();
  write_manifest(dir, m);
}

struct ReportOptions {
  std::vector<std::string> reports;
  std::vector<std::string> runs;
  std::string format = "markdown";
  std::string out;
  std::string agreement_out;
  std::string assignment;
};

inline void cmd_report(const ReportOptions& o) {
  std::vector<std::pair<std::string, EvalReport>> columns;
  for (const auto& arg : o.runs) {
    auto [name, dir] = named_path(arg);
    columns.emplace_back(name, eval_report_from_json(read_json_file(dir / "report.json")));
  }
  for (const auto& arg : o.reports) {
    auto [name, path] = named_path(arg);
    columns.emplace_back(name, eval_report_from_json(read_json_file(path)));
  }
  if (columns.empty()) throw DataError("report needs at least one --run or --report");
  const auto format = parse_format(o.format);
  const auto text = render_report(columns, format);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(o.out, text);
  }

  if (!o.agreement_out.empty()) {
    if (o.assignment.empty()) throw DataError("--agreement-out needs --assignment for gold labels");
    if (o.runs.size() < 2) throw DataError("--agreement-out needs at least two --run entries");
    const auto assignment = read_assignment_csv(o.assignment);
    std::vector<std::string> names;
    std::vector<std::map<std::string, ParsedOutput>> preds;
    std::string split;
    for (const auto& arg : o.runs) {
      auto [name, dir] = named_path(arg);
      auto run = load_run(dir);
      split = run.manifest.value("split", std::string("test"));
      names.push_back(name);
      preds.push_back(predictions_of(run.records));
    }
    const auto golds = assignment.golds(parse_split(split));
    std::ostringstream out;
    std::vector<std::string> header{"run_a", "run_b", "agreement_rate", "error_overlap"};
    csv::write_row(out, header);
    for (std::size_t a = 0; a < names.size(); ++a) {
      for (std::size_t b = 0; b < names.size(); ++b) {
        const auto ag = agreement(preds[a], preds[b], golds);
        csv::write_row(out, {names[a], names[b], fmt::format("{:.6f}", ag.agreement_rate),
                             fmt::format("{:.6f}", ag.error_overlap)});
      }
    }
    write_text_file(o.agreement_out, out.str());
  }
}

struct ExportSftOptions {
  std::string corpus;
  CorpusSchema schema;
  std::string assignment;
  std::string split = "train";
  std::string variant = "label-only";
  std::string justifications_run;
  std::string justifications_csv;
  std::string templates;
  std::string out;
};

inline void cmd_export_sft(const ExportSftOptions& o) {
  const auto variant = parse_variant(o.variant);
  const auto split = parse_split(o.split);
  const auto templates = templates_from(o.templates);
  const auto samples = select_split(load_dedup(o.corpus, o.schema), read_assignment_csv(o.assignment), split);

  std::map<std::string, std::string> justifications;
  if (!o.justifications_run.empty()) {
    for (const auto& r : load_run(o.justifications_run).records) {
      if (r.justification) justifications[r.sample_id] = *r.justification;
    }
  }
  if (!o.justifications_csv.empty()) {
    std::ifstream in(o.justifications_csv, std::ios::binary);
    if (!in) throw DataError("cannot open " + o.justifications_csv);
    auto rows = csv::read(in, ',');
    if (rows.empty()) throw DataError(o.justifications_csv + ": empty file");
    const auto id_col = detail::column_index(rows[0].cells, "sample_id", o.justifications_csv);
    const auto j_col = detail::column_index(rows[0].cells, "justification", o.justifications_csv);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].cells.size() > std::max(id_col, j_col)) justifications[rows[r].cells[id_col]] = rows[r].cells[j_col];
    }
  }

  const auto records = build_sft_records(samples, variant, justifications, templates);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_jsonl(out, records);
  TrainsetManifest m{kSftSchema, std::string(split_name(split)), templates.hash(), std::string(variant_name(variant)),
                     "", records.size(), {}};
  write_text_file(fs::path(o.out + ".manifest.json"), pretty(to_json(m)));
}

struct BuildDpoOptions {
  std::string run;
  std::string corpus;
  CorpusSchema schema;
  std::string assignment;
  std::string templates;
  std::string out;
};

inline void cmd_build_dpo(const BuildDpoOptions& o) {
  const auto run = load_run(o.run);
  const auto templates = templates_from(o.templates);
  if (run.manifest.value("template_hash", std::string{}) != templates.hash()) {
    throw DataError(o.run + " was produced with a different template set (hash mismatch)");
  }
  const auto style = parse_style(run.manifest.value("style", std::string("direct")));
  const auto split = parse_split(run.manifest.value("split", std::string("dev")));
  const auto assignment = read_assignment_csv(o.assignment);
  const auto samples = select_split(load_dedup(o.corpus, o.schema), assignment, split);

  std::map<std::string, std::vector<Message>> prompts;
  for (const auto& s : samples) prompts[s.id] = render_prompt(style, s.text, templates);
  const auto mined = mine_dpo_pairs(run.records, assignment.golds(split), prompts);
  if (!mined.skipped.empty()) log().warn("{} record(s) without a distribution were skipped", mined.skipped.size());

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_jsonl(out, mined.pairs);
  TrainsetManifest m{kDpoSchema, std::string(split_name(split)), templates.hash(), "",
                     run.manifest.value("model_id", std::string{}), mined.pairs.size(), mined.skipped};
  write_text_file(fs::path(o.out + ".manifest.json"), pretty(to_json(m)));
}

struct MockOptions {
  std::string script;
  std::string host = "127.0.0.1";
  int port = 8080;
};

inline void cmd_mock_llm(const MockOptions& o) {
  MockLlmServer server(read_json_file(o.script));
  log().info("mock LLM listening on http://{}:{}", o.host, o.port);
  server.serve(o.host, o.port);
}

// ---------------------------------------------------------------------------

inline void add_corpus_options(CLI::App* cmd, std::string& corpus, CorpusSchema& schema, bool required = true) {
  auto* opt = cmd->add_option("--corpus", corpus, "Labelled corpus (CSV or TSV with header)");
  if (required) opt->required();
  cmd->add_option("--text-column", schema.text_column, "Column holding the text")->capture_default_str();
  cmd->add_option("--label-column", schema.label_column, "Column holding the label")->capture_default_str();
  cmd->add_option_function<std::string>(
      "--delimiter",
      [&schema](const std::string& d) {
        if (d == "tab" || d == "\\t") {
          schema.delimiter = '\t';
        } else if (d.size() == 1) {
          schema.delimiter = d[0];
        } else {
          throw CLI::ValidationError("--delimiter", "expected one character or 'tab'");
        }
      },
      "Field delimiter (default: tab for .tsv, comma otherwise)");
}

/// Parses and runs one command line. Returns the process exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"xspeech: extreme-speech classification experiments against OpenAI-compatible endpoints"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with defaults for any option; command-line flags win");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SplitOptions split;
  auto* split_cmd = app.add_subcommand("split", "Deduplicate the corpus and write a stratified train/dev/test split");
  add_corpus_options(split_cmd, split.corpus, split.schema);
  split_cmd->add_option("--fractions", split.fractions, "train dev test fractions")->expected(3)->capture_default_str();
  split_cmd->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--quotas", split.quotas, "JSON file with exact per-class split counts");
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Classify one split with a model endpoint");
  add_corpus_options(infer_cmd, infer.corpus, infer.schema);
  infer_cmd->add_option("--assignment", infer.assignment, "assignment.csv written by `split`")->required();
  infer_cmd->add_option("--split", infer.split, "train, dev or test")->capture_default_str();
  infer_cmd->add_option("--style", infer.style, "direct or justify")->capture_default_str();
  infer_cmd->add_option("--model", infer.model, "Model id sent to the endpoint")->required();
  infer_cmd->add_option("--base-url", infer.base_url, "Endpoint base URL (POSTs to <base>/v1/chat/completions)")->required();
  infer_cmd->add_option("--api-key", infer.api_key, "Overrides $XSPEECH_API_KEY");
  infer_cmd->add_option("--temperature", infer.temperature, "Sampling temperature (default 0)");
  infer_cmd->add_option("--max-tokens", infer.max_tokens, "Output token cap (default 4 direct / 256 justify)");
  infer_cmd->add_option("--top-logprobs", infer.top_logprobs, "Alternatives per token")->capture_default_str();
  infer_cmd->add_flag("--logprobs", infer.logprobs, "Request logprobs and attach class distributions");
  infer_cmd->add_option("--limit", infer.limit, "Max requests in flight")->capture_default_str()->check(CLI::PositiveNumber);
  infer_cmd->add_option("--cache-dir", infer.cache_dir, "Response cache directory")->capture_default_str();
  infer_cmd->add_flag("--no-cache", infer.no_cache, "Bypass the response cache");
  infer_cmd->add_option("--templates", infer.templates, "Template set JSON (default: built-in)");
  infer_cmd->add_option("--run-dir", infer.run_dir, "Output run directory")->required();
  infer_cmd->add_option("--max-failure-rate", infer.max_failure_rate, "Abort above this failed fraction")->capture_default_str();
  infer_cmd->add_option("--max-attempts", infer.max_attempts, "Attempts per request")->capture_default_str();
  infer_cmd->add_option("--retry-base-ms", infer.retry_base_ms, "First backoff delay")->capture_default_str();
  infer_cmd->add_option("--timeout", infer.timeout_s, "Per-request timeout in seconds")->capture_default_str();

  ExportSftOptions sft;
  auto* sft_cmd = app.add_subcommand("export-sft", "Write an SFT dataset (JSONL) for one split");
  add_corpus_options(sft_cmd, sft.corpus, sft.schema);
  sft_cmd->add_option("--assignment", sft.assignment, "assignment.csv written by `split`")->required();
  sft_cmd->add_option("--split", sft.split, "Split to export")->capture_default_str();
  sft_cmd->add_option("--variant", sft.variant, "label-only or with-justification")->capture_default_str();
  sft_cmd->add_option("--justifications-run", sft.justifications_run, "Justify-style run supplying justifications");
  sft_cmd->add_option("--justifications", sft.justifications_csv, "CSV with sample_id,justification");
  sft_cmd->add_option("--templates", sft.templates, "Template set JSON");
  sft_cmd->add_option("--out", sft.out, "Output JSONL path")->required();

  BuildDpoOptions dpo;
  auto* dpo_cmd = app.add_subcommand("build-dpo", "Mine DPO preference pairs from a dev-split run with logprobs");
  dpo_cmd->add_option("--run", dpo.run, "Run directory (dev split, with distributions)")->required();
  add_corpus_options(dpo_cmd, dpo.corpus, dpo.schema);
  dpo_cmd->add_option("--assignment", dpo.assignment, "assignment.csv written by `split`")->required();
  dpo_cmd->add_option("--templates", dpo.templates, "Template set JSON used for the run");
  dpo_cmd->add_option("--out", dpo.out, "Output JSONL path")->required();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a run against the gold labels of its split");
  eval_cmd->add_option("--run", eval.run, "Run directory")->required();
  eval_cmd->add_option("--assignment", eval.assignment, "assignment.csv written by `split`")->required();
  eval_cmd->add_option("--split", eval.split, "Override the split named in the manifest");

  EnsembleOptions ens;
  auto* ens_cmd = app.add_subcommand("ensemble", "Fuse member runs weighted by their dev F1-macro");
  ens_cmd->add_option("--member", ens.members, "Member run directory (repeat)")->required();
  ens_cmd->add_option("--dev-report", ens.dev_reports, "Dev-split report.json per member, same order")->required();
  ens_cmd->add_option("--rule", ens.rule, "vote or prob")->capture_default_str();
  ens_cmd->add_option("--out", ens.out, "Output run directory")->required();

  ReportOptions rep;
  auto* rep_cmd = app.add_subcommand("report", "Render F1 tables from evaluated runs");
  rep_cmd->add_option("--run", rep.runs, "[NAME=]run directory with report.json (repeat)");
  rep_cmd->add_option("--report", rep.reports, "[NAME=]report.json (repeat)");
  rep_cmd->add_option("--format", rep.format, "markdown or csv")->capture_default_str();
  rep_cmd->add_option("--out", rep.out, "Output file (default: stdout)");
  rep_cmd->add_option("--agreement-out", rep.agreement_out, "Pairwise agreement CSV over the --run entries");
  rep_cmd->add_option("--assignment", rep.assignment, "assignment.csv (for --agreement-out)");

  MockOptions mock;
  auto* mock_cmd = app.add_subcommand("mock-llm", "Serve the scripted mock chat-completions endpoint");
  mock_cmd->add_option("--script", mock.script, "Mock script JSON")->required();
  mock_cmd->add_option("--host", mock.host)->capture_default_str();
  mock_cmd->add_option("--port", mock.port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cerr, std::cerr);
  }
  if (verbose) log().set_level(spdlog::level::debug);

  try {
    if (*split_cmd) cmd_split(split);
    else if (*infer_cmd) cmd_infer(infer);
    else if (*sft_cmd) cmd_export_sft(sft);
    else if (*dpo_cmd) cmd_build_dpo(dpo);
    else if (*eval_cmd) cmd_eval(eval);
    else if (*ens_cmd) cmd_ensemble(ens);
    else if (*rep_cmd) cmd_report(rep);
    else if (*mock_cmd) cmd_mock_llm(mock);
  } catch (const std::exception& e) {
    log().error("{}", e.what());
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"xspeech"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace xspeech::cli
