#pragma once

// Per-sample inference records and run manifests.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "xspeech/error.hpp"
#include "xspeech/labels.hpp"
#include "xspeech/probability.hpp"
#include "xspeech/promptkit.hpp"

namespace xspeech {

struct InferenceRecord {
  std::string sample_id;
  std::string raw_text;
  ParseStatus status = ParseStatus::Unparsed;
  std::optional<ClassLabel> label;
  std::optional<std::string> justification;
  std::optional<ClassDistribution> distribution;
  std::string fingerprint;
  /// Transport or extraction problem attached to this sample, if any.
  std::optional<std::string> error;

  ParsedOutput parsed() const { return ParsedOutput{label, justification, status}; }

  /// label present <=> Parsed, distribution present => label present.
  bool consistent() const {
    if (label.has_value() != (status == ParseStatus::Parsed)) return false;
    if (distribution && !label) return false;
    return !distribution || distribution->valid();
  }

  friend bool operator==(const InferenceRecord&, const InferenceRecord&) = default;
};

inline nlohmann::ordered_json to_json(const InferenceRecord& r) {
  nlohmann::ordered_json j;
  j["sample_id"] = r.sample_id;
  j["parse_status"] = r.status == ParseStatus::Parsed ? "parsed" : "unparsed";
  j["label"] = r.label ? nlohmann::ordered_json(code_of(*r.label)) : nlohmann::ordered_json(nullptr);
  j["justification"] = r.justification ? nlohmann::ordered_json(*r.justification) : nlohmann::ordered_json(nullptr);
  if (r.distribution) {
    j["distribution"] = {r.distribution->p[0], r.distribution->p[1], r.distribution->p[2]};
  } else {
    j["distribution"] = nullptr;
  }
  j["raw_text"] = r.raw_text;
  j["fingerprint"] = r.fingerprint;
  j["error"] = r.error ? nlohmann::ordered_json(*r.error) : nlohmann::ordered_json(nullptr);
  return j;
}

inline InferenceRecord record_from_json(const nlohmann::json& j) {
  InferenceRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  const auto status = j.at("parse_status").get<std::string>();
  if (status == "parsed") {
    r.status = ParseStatus::Parsed;
  } else if (status == "unparsed") {
    r.status = ParseStatus::Unparsed;
  } else {
    throw DataError("unknown parse_status '" + status + "'");
  }
  if (!j.at("label").is_null()) {
    r.label = label_from_code(j.at("label").get<int>());
    if (!r.label) throw DataError("record " + r.sample_id + ": label code out of range");
  }
  if (!j.at("justification").is_null()) r.justification = j.at("justification").get<std::string>();
  if (!j.at("distribution").is_null()) {
    const auto& d = j.at("distribution");
    if (d.size() != 3) throw DataError("record " + r.sample_id + ": distribution must have 3 entries");
    ClassDistribution dist;
    for (std::size_t c = 0; c < 3; ++c) dist.p[c] = d[c].get<double>();
    r.distribution = dist;
  }
  r.raw_text = j.at("raw_text").get<std::string>();
  r.fingerprint = j.at("fingerprint").get<std::string>();
  if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  if (!r.consistent()) throw DataError("record " + r.sample_id + " violates label/status/distribution invariants");
  return r;
}

inline std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) + "\n";
}

inline void write_records(const std::filesystem::path& path, const std::vector<InferenceRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << dump_line(to_json(r));
  if (!out.flush()) throw Error("write failed: " + path.string());
}

/// Reads a JSON-lines file, calling `fn` per non-empty line.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

inline std::vector<InferenceRecord> read_records(const std::filesystem::path& path) {
  std::vector<InferenceRecord> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) { out.push_back(record_from_json(j)); });
  return out;
}

/// Parsed outputs keyed by sample id.
inline std::map<std::string, ParsedOutput> predictions_of(const std::vector<InferenceRecord>& records) {
  std::map<std::string, ParsedOutput> out;
  for (const auto& r : records) {
    if (!out.emplace(r.sample_id, r.parsed()).second) throw DataError("duplicate record for sample " + r.sample_id);
  }
  return out;
}

}  // namespace xspeech
