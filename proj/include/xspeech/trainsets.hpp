#pragma once

// Trainer-ready SFT and DPO datasets as JSON lines.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "xspeech/corpus.hpp"
#include "xspeech/error.hpp"
#include "xspeech/log.hpp"
#include "xspeech/probability.hpp"
#include "xspeech/promptkit.hpp"
#include "xspeech/records.hpp"

namespace xspeech {

enum class SftVariant { LabelOnly, WithJustification };

inline std::string_view variant_name(SftVariant v) {
  return v == SftVariant::LabelOnly ? "label-only" : "with-justification";
}

inline SftVariant parse_variant(std::string_view name) {
  if (name == "label-only") return SftVariant::LabelOnly;
  if (name == "with-justification") return SftVariant::WithJustification;
  throw DataError("unknown SFT variant '" + std::string(name) + "' (expected label-only or with-justification)");
}

/// Prompt style whose instructions match the completions of a variant.
inline PromptStyle style_for(SftVariant v) {
  return v == SftVariant::LabelOnly ? PromptStyle::DirectLabel : PromptStyle::JustifyThenLabel;
}

struct SftRecord {
  std::vector<Message> messages;
  std::string completion;

  friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

struct PreferencePair {
  std::vector<Message> prompt;
  std::string chosen;
  std::string rejected;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

/// Completion is the gold digit alone, or the justification, a newline and
/// the gold digit.
inline std::vector<SftRecord> build_sft_records(const std::vector<Sample>& samples, SftVariant variant,
                                                const std::map<std::string, std::string>& justifications = {},
                                                const TemplateSet& templates = default_templates()) {
  if (samples.empty()) throw DataError("cannot build SFT records from an empty split");
  if (variant == SftVariant::WithJustification) {
    std::vector<std::string> missing;
    for (const auto& s : samples) {
      auto it = justifications.find(s.id);
      if (it == justifications.end() || it->second.find_first_not_of(" \t\r\n") == std::string::npos) {
        missing.push_back(s.id);
      }
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " sample(s) have no justification:";
      for (const auto& id : missing) msg += " " + id;
      throw DataError(msg);
    }
  }
  std::vector<SftRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    SftRecord r{render_prompt(style_for(variant), s.text, templates), digit_string(s.gold)};
    if (variant == SftVariant::WithJustification) r.completion = justifications.at(s.id) + "\n" + r.completion;
    out.push_back(std::move(r));
  }
  return out;
}

/// Highest-probability class other than gold; ties go to the lowest code.
inline ClassLabel hardest_negative(ClassLabel gold, const ClassDistribution& dist) {
  int best = -1;
  for (int c = 0; c < kNumClasses; ++c) {
    if (c == code_of(gold)) continue;
    if (best < 0 || dist.p[c] > dist.p[best]) best = c;
  }
  return static_cast<ClassLabel>(best);
}

struct MinedPairs {
  std::vector<PreferencePair> pairs;
  /// Sample ids whose record had no distribution.
  std::vector<std::string> skipped;
};

/// One pair per record: chosen is the gold digit, rejected the most probable
/// wrong class. Records without a distribution are skipped and reported.
inline MinedPairs mine_dpo_pairs(const std::vector<InferenceRecord>& records,
                                 const std::map<std::string, ClassLabel>& golds,
                                 const std::map<std::string, std::vector<Message>>& prompts) {
  MinedPairs out;
  for (const auto& r : records) {
    auto gold = golds.find(r.sample_id);
    if (gold == golds.end()) throw DataError("no gold label for sample " + r.sample_id);
    if (!r.distribution) {
      log().warn("sample {} has no class distribution; no preference pair", r.sample_id);
      out.skipped.push_back(r.sample_id);
      continue;
    }
    auto prompt = prompts.find(r.sample_id);
    if (prompt == prompts.end()) throw DataError("no prompt for sample " + r.sample_id);
    out.pairs.push_back(PreferencePair{prompt->second, digit_string(gold->second),
                                       digit_string(hardest_negative(gold->second, *r.distribution))});
  }
  return out;
}

inline nlohmann::ordered_json to_json(const SftRecord& r) {
  nlohmann::ordered_json j;
  j["messages"] = to_json(r.messages);
  j["completion"] = r.completion;
  return j;
}

inline nlohmann::ordered_json to_json(const PreferencePair& p) {
  nlohmann::ordered_json j;
  j["prompt"] = to_json(p.prompt);
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  return j;
}

/// One compact JSON object per line, LF-terminated. No records, no bytes.
template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& item : items) out << dump_line(to_json(item));
  if (!out.flush()) throw Error("write failed: " + path.string());
}

inline std::vector<SftRecord> read_sft_jsonl(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    out.push_back({messages_from_json(j.at("messages")), j.at("completion").get<std::string>()});
  });
  return out;
}

inline std::vector<PreferencePair> read_dpo_jsonl(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) {
    out.push_back({messages_from_json(j.at("prompt")), j.at("chosen").get<std::string>(),
                   j.at("rejected").get<std::string>()});
  });
  return out;
}

inline constexpr const char* kSftSchema = "xspeech-sft/1";
inline constexpr const char* kDpoSchema = "xspeech-dpo/1";

struct TrainsetManifest {
  std::string schema;
  std::string source_split;
  std::string template_hash;
  std::string variant;       // SFT only
  std::string mining_model;  // DPO only
  std::size_t count = 0;
  std::vector<std::string> skipped;
};

inline nlohmann::ordered_json to_json(const TrainsetManifest& m) {
  nlohmann::ordered_json j;
  j["schema"] = m.schema;
  j["source_split"] = m.source_split;
  j["template_hash"] = m.template_hash;
  if (!m.variant.empty()) j["variant"] = m.variant;
  if (!m.mining_model.empty()) j["mining_model"] = m.mining_model;
  j["count"] = m.count;
  j["skipped"] = m.skipped;
  return j;
}

}  // namespace xspeech
