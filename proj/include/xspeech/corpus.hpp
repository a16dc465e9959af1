#pragma once

// Corpus ingest, deduplication and stratified train/dev/test splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "xspeech/csv.hpp"
#include "xspeech/error.hpp"
#include "xspeech/hashing.hpp"
#include "xspeech/labels.hpp"
#include "xspeech/random.hpp"

namespace xspeech {

struct Sample {
  std::string id;
  std::string text;
  ClassLabel gold;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Content-derived id: first 128 bits of SHA-256 over the text bytes, a 0x1F
/// separator and the ASCII label digit, as lowercase hex.
inline std::string make_sample_id(std::string_view text, ClassLabel gold) {
  const char tail[2] = {'\x1f', digit_of(gold)};
  return Sha256().update(text).update(std::string_view(tail, 2)).hex().substr(0, 32);
}

inline Sample make_sample(std::string text, ClassLabel gold) {
  auto id = make_sample_id(text, gold);
  return Sample{std::move(id), std::move(text), gold};
}

struct CorpusSchema {
  std::string text_column = "text";
  std::string label_column = "label";
  /// '\0' picks tab for .tsv files and comma otherwise.
  char delimiter = '\0';
};

namespace detail {

inline bool valid_utf8(const std::string& s) {
  try {
    (void)nlohmann::json(s).dump();
    return true;
  } catch (const nlohmann::json::type_error&) {
    return false;
  }
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                                const std::string& path) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError(path + ": header has no column named '" + name + "'");
}

}  // namespace detail

/// Reads a delimited file with a header row. Rows are numbered from 1,
/// counting data rows only, in error messages.
inline std::vector<Sample> load_corpus(const std::filesystem::path& path, const CorpusSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  char delim = schema.delimiter;
  if (delim == '\0') delim = path.extension() == ".tsv" ? '\t' : ',';

  auto rows = csv::read(in, delim);
  if (rows.empty()) throw DataError(path.string() + ": missing header row");
  const auto& header = rows.front().cells;
  const auto text_col = detail::column_index(header, schema.text_column, path.string());
  const auto label_col = detail::column_index(header, schema.label_column, path.string());

  std::vector<Sample> samples;
  samples.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    const std::string where = path.string() + ": row " + std::to_string(r) + " (line " +
                              std::to_string(rows[r].line) + ")";
    if (cells.size() <= std::max(text_col, label_col)) throw DataError(where + ": too few columns");
    const std::string& text = cells[text_col];
    if (detail::is_blank(text)) throw DataError(where + ": empty text field");
    if (!detail::valid_utf8(text)) throw DataError(where + ": text is not valid UTF-8");
    auto label = parse_label_cell(cells[label_col]);
    if (!label) throw DataError(where + ": unknown label value '" + cells[label_col] + "'");
    samples.push_back(make_sample(text, *label));
  }
  return samples;
}

/// First occurrence of each (text, gold) pair wins; order is preserved.
inline std::vector<Sample> dedup(const std::vector<Sample>& samples) {
  std::set<std::pair<std::string_view, ClassLabel>> seen;
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (seen.emplace(s.text, s.gold).second) out.push_back(s);
  }
  return out;
}

enum class SplitTag : int { Train = 0, Dev = 1, Test = 2 };
inline constexpr std::array<SplitTag, 3> kAllSplits{SplitTag::Train, SplitTag::Dev, SplitTag::Test};

inline std::string_view split_name(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Dev: return "dev";
    case SplitTag::Test: return "test";
  }
  return "?";
}

inline SplitTag parse_split(std::string_view name) {
  for (auto tag : kAllSplits) {
    if (name == split_name(tag)) return tag;
  }
  throw DataError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

/// Exact per-split counts for one class, indexed by SplitTag.
using SplitCounts = std::array<std::size_t, 3>;

struct SplitConfig {
  std::array<double, 3> fractions{0.64, 0.16, 0.20};
  std::uint64_t seed = 0;
  std::optional<std::map<ClassLabel, SplitCounts>> quotas;

  void validate() const {
    double sum = 0.0;
    for (double f : fractions) {
      if (!(f >= 0.0)) throw DataError("split fractions must be non-negative");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "split fractions sum to " << sum << ", expected 1";
      throw DataError(msg.str());
    }
  }
};

inline nlohmann::ordered_json to_json(const SplitConfig& config) {
  nlohmann::ordered_json j;
  j["fractions"] = {{"train", config.fractions[0]}, {"dev", config.fractions[1]}, {"test", config.fractions[2]}};
  j["seed"] = config.seed;
  if (config.quotas) {
    nlohmann::ordered_json q = nlohmann::ordered_json::object();
    for (const auto& [label, counts] : *config.quotas) {
      q[std::string(name_of(label))] = {{"train", counts[0]}, {"dev", counts[1]}, {"test", counts[2]}};
    }
    j["quotas"] = q;
  } else {
    j["quotas"] = nullptr;
  }
  return j;
}

/// Accepts the sidecar layout written by to_json. Quotas may be keyed by
/// class name or code.
inline SplitConfig split_config_from_json(const nlohmann::json& j) {
  SplitConfig config;
  try {
    if (j.contains("fractions")) {
      const auto& f = j.at("fractions");
      if (f.is_array()) {
        if (f.size() != 3) throw DataError("fractions array must have 3 entries");
        for (std::size_t i = 0; i < 3; ++i) config.fractions[i] = f[i].get<double>();
      } else {
        for (auto tag : kAllSplits) {
          config.fractions[static_cast<int>(tag)] = f.at(std::string(split_name(tag))).get<double>();
        }
      }
    }
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("quotas") && !j.at("quotas").is_null()) {
      std::map<ClassLabel, SplitCounts> quotas;
      for (const auto& [key, value] : j.at("quotas").items()) {
        auto label = parse_label_cell(key);
        if (!label) throw DataError("quota for unknown class '" + key + "'");
        SplitCounts counts{};
        if (value.is_array()) {
          if (value.size() != 3) throw DataError("quota for '" + key + "' must have 3 entries");
          for (std::size_t i = 0; i < 3; ++i) counts[i] = value[i].get<std::size_t>();
        } else {
          for (auto tag : kAllSplits) {
            counts[static_cast<int>(tag)] = value.at(std::string(split_name(tag))).get<std::size_t>();
          }
        }
        quotas[*label] = counts;
      }
      config.quotas = std::move(quotas);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split config: ") + e.what());
  }
  config.validate();
  return config;
}

/// Largest-remainder apportionment of n items over the split fractions.
/// Leftover items go to the largest fractional parts, earlier split first
/// on ties. Products within 1e-9 of an integer are snapped to it.
inline SplitCounts largest_remainder_counts(std::size_t n, const std::array<double, 3>& fractions) {
  SplitCounts counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    double exact = fractions[i] * static_cast<double>(n);
    const double nearest = std::round(exact);
    if (std::abs(exact - nearest) < 1e-9) exact = nearest;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n && k < 3; ++k, ++assigned) ++counts[order[k]];
  return counts;
}

struct AssignmentEntry {
  std::string sample_id;
  SplitTag split;
  ClassLabel gold;

  friend bool operator==(const AssignmentEntry&, const AssignmentEntry&) = default;
};

/// Split membership of every corpus sample, in corpus order.
struct SplitAssignment {
  std::vector<AssignmentEntry> entries;

  /// Per-class, per-split counts: result[class][split].
  std::array<SplitCounts, 3> counts() const {
    std::array<SplitCounts, 3> out{};
    for (const auto& e : entries) ++out[code_of(e.gold)][static_cast<int>(e.split)];
    return out;
  }

  SplitCounts split_totals() const {
    SplitCounts out{};
    for (const auto& e : entries) ++out[static_cast<int>(e.split)];
    return out;
  }

  /// Gold labels of one split, keyed by sample id.
  std::map<std::string, ClassLabel> golds(SplitTag split) const {
    std::map<std::string, ClassLabel> out;
    for (const auto& e : entries) {
      if (e.split == split) out.emplace(e.sample_id, e.gold);
    }
    return out;
  }

  std::vector<std::string> ids(SplitTag split) const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
      if (e.split == split) out.push_back(e.sample_id);
    }
    return out;
  }

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Seed of the shuffle stream for one class.
inline std::uint64_t class_stream_seed(std::uint64_t seed, ClassLabel label) {
  return seed ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(code_of(label) + 1));
}

/// Per class: sort member ids, Fisher-Yates them with a SplitMix64 stream
/// seeded from (seed, class), then hand out the first count[train] to Train,
/// the next count[dev] to Dev and the rest to Test. Counts come from the
/// quotas when present, otherwise from largest-remainder rounding.
inline SplitAssignment stratified_split(const std::vector<Sample>& samples, const SplitConfig& config) {
  config.validate();

  std::array<std::vector<std::string>, 3> by_class;
  for (const auto& s : samples) by_class[code_of(s.gold)].push_back(s.id);

  if (config.quotas) {
    for (const auto& [label, quota] : *config.quotas) {
      const std::size_t want = quota[0] + quota[1] + quota[2];
      const std::size_t have = by_class[code_of(label)].size();
      if (want != have) {
        throw DataError("quota for class '" + std::string(name_of(label)) + "' sums to " + std::to_string(want) +
                        " but the corpus has " + std::to_string(have) + " samples of that class");
      }
    }
    for (auto label : kAllLabels) {
      if (!by_class[code_of(label)].empty() && !config.quotas->contains(label)) {
        throw DataError("quotas given but class '" + std::string(name_of(label)) + "' has no quota");
      }
    }
  }

  const auto non_empty_splits = static_cast<std::size_t>(
      std::count_if(config.fractions.begin(), config.fractions.end(), [](double f) { return f > 0.0; }));

  std::unordered_map<std::string, SplitTag> tag_of;
  tag_of.reserve(samples.size());
  for (auto label : kAllLabels) {
    auto& ids = by_class[code_of(label)];
    if (ids.empty()) continue;
    SplitCounts counts;
    if (config.quotas) {
      counts = config.quotas->at(label);
    } else {
      if (ids.size() < non_empty_splits) {
        throw DataError("class '" + std::string(name_of(label)) + "' has " + std::to_string(ids.size()) +
                        " samples, fewer than the " + std::to_string(non_empty_splits) + " non-empty splits");
      }
      counts = largest_remainder_counts(ids.size(), config.fractions);
    }
    std::sort(ids.begin(), ids.end());
    SplitMix64 rng(class_stream_seed(config.seed, label));
    seeded_shuffle(ids, rng);
    std::size_t pos = 0;
    for (auto tag : kAllSplits) {
      for (std::size_t k = 0; k < counts[static_cast<int>(tag)]; ++k) tag_of[ids[pos++]] = tag;
    }
  }

  SplitAssignment out;
  out.entries.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = tag_of.find(s.id);
    if (it == tag_of.end()) throw DataError("sample " + s.id + " appears more than once; dedup the corpus first");
    out.entries.push_back({s.id, it->second, s.gold});
    tag_of.erase(it);
  }
  return out;
}

/// Writes "sample_id,split,label" rows in corpus order.
inline void write_assignment_csv(std::ostream& out, const SplitAssignment& assignment) {
  csv::write_row(out, {"sample_id", "split", "label"});
  for (const auto& e : assignment.entries) {
    csv::write_row(out, {e.sample_id, std::string(split_name(e.split)), std::string(name_of(e.gold))});
  }
}

inline SplitAssignment read_assignment_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open split file " + path.string());
  auto rows = csv::read(in, ',');
  if (rows.empty()) throw DataError(path.string() + ": empty split file");
  const auto& header = rows.front().cells;
  const auto id_col = detail::column_index(header, "sample_id", path.string());
  const auto split_col = detail::column_index(header, "split", path.string());
  const auto label_col = detail::column_index(header, "label", path.string());
  SplitAssignment out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r].cells;
    const std::string where = path.string() + ": row " + std::to_string(r);
    if (cells.size() <= std::max({id_col, split_col, label_col})) throw DataError(where + ": too few columns");
    auto label = parse_label_cell(cells[label_col]);
    if (!label) throw DataError(where + ": unknown label value '" + cells[label_col] + "'");
    if (!seen.insert(cells[id_col]).second) throw DataError(where + ": duplicate sample id " + cells[id_col]);
    out.entries.push_back({cells[id_col], parse_split(cells[split_col]), *label});
  }
  return out;
}

/// Corpus samples belonging to one split, in corpus order.
inline std::vector<Sample> select_split(const std::vector<Sample>& corpus, const SplitAssignment& assignment,
                                        SplitTag split) {
  std::set<std::string> wanted;
  for (const auto& e : assignment.entries) {
    if (e.split == split) wanted.insert(e.sample_id);
  }
  std::vector<Sample> out;
  for (const auto& s : corpus) {
    if (wanted.erase(s.id)) out.push_back(s);
  }
  if (!wanted.empty()) {
    throw DataError(std::to_string(wanted.size()) + " sample id(s) of split '" + std::string(split_name(split)) +
                    "' are not in the corpus, first: " + *wanted.begin());
  }
  return out;
}

}  // namespace xspeech
