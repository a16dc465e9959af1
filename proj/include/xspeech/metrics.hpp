#pragma once

// Confusion matrices, per-class F1 / F1-macro, agreement between models and
// report tables.

#include <array>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "xspeech/csv.hpp"
#include "xspeech/error.hpp"
#include "xspeech/labels.hpp"
#include "xspeech/promptkit.hpp"

namespace xspeech {

/// Rows: predicted class 0..2, then the Unparsed row. Columns: gold class.
struct ConfusionMatrix {
  static constexpr int kUnparsedRow = 3;
  std::array<std::array<long, 3>, 4> counts{};

  long total() const {
    long n = 0;
    for (const auto& row : counts) {
      for (long v : row) n += v;
    }
    return n;
  }

  long at(int predicted_row, ClassLabel gold) const { return counts[predicted_row][code_of(gold)]; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalReport {
  std::array<double, 3> per_class_f1{};
  double f1_macro = 0.0;
  ConfusionMatrix confusion;
  long n = 0;
  long unparsed_count = 0;
};

namespace detail {

template <typename A, typename B>
void require_same_ids(const std::map<std::string, A>& a, const std::map<std::string, B>& b, std::string_view what_a,
                      std::string_view what_b) {
  std::vector<std::string> only_a, only_b;
  for (const auto& [id, _] : a) {
    if (!b.contains(id)) only_a.push_back(id);
  }
  for (const auto& [id, _] : b) {
    if (!a.contains(id)) only_b.push_back(id);
  }
  if (only_a.empty() && only_b.empty()) return;
  std::string msg = "sample ids differ:";
  if (!only_a.empty()) {
    msg += " only in " + std::string(what_a) + " (" + std::to_string(only_a.size()) + "):";
    for (const auto& id : only_a) msg += " " + id;
    msg += ";";
  }
  if (!only_b.empty()) {
    msg += " only in " + std::string(what_b) + " (" + std::to_string(only_b.size()) + "):";
    for (const auto& id : only_b) msg += " " + id;
  }
  throw DataError(msg);
}

}  // namespace detail

inline ConfusionMatrix confusion(const std::map<std::string, ParsedOutput>& preds,
                                 const std::map<std::string, ClassLabel>& golds) {
  detail::require_same_ids(preds, golds, "predictions", "gold labels");
  ConfusionMatrix cm;
  for (const auto& [id, pred] : preds) {
    const int row = pred.label ? code_of(*pred.label) : ConfusionMatrix::kUnparsedRow;
    ++cm.counts[row][code_of(golds.at(id))];
  }
  return cm;
}

inline double macro_f1(std::span<const double, 3> per_class) {
  return (per_class[0] + per_class[1] + per_class[2]) / 3.0;
}

/// Per-class precision/recall/F1 with 0/0 taken as 0. Unparsed counts are
/// false negatives of their gold class and false positives of none.
inline EvalReport f1_scores(const ConfusionMatrix& cm) {
  EvalReport report;
  report.confusion = cm;
  report.n = cm.total();
  if (report.n <= 0) throw DataError("cannot score an empty confusion matrix");
  for (long v : cm.counts[ConfusionMatrix::kUnparsedRow]) report.unparsed_count += v;

  for (int c = 0; c < kNumClasses; ++c) {
    const double tp = static_cast<double>(cm.counts[c][c]);
    double fp = 0.0, fn = 0.0;
    for (int g = 0; g < kNumClasses; ++g) {
      if (g != c) fp += static_cast<double>(cm.counts[c][g]);
    }
    for (int r = 0; r < 4; ++r) {
      if (r != c) fn += static_cast<double>(cm.counts[r][c]);
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    report.per_class_f1[c] = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  report.f1_macro = macro_f1(report.per_class_f1);
  return report;
}

inline EvalReport evaluate(const std::map<std::string, ParsedOutput>& preds,
                           const std::map<std::string, ClassLabel>& golds) {
  return f1_scores(confusion(preds, golds));
}

/// Report carrying only externally reported per-class scores (fractions, not
/// percent), e.g. to render reference columns next to measured ones.
inline EvalReport report_from_per_class(const std::array<double, 3>& per_class) {
  EvalReport r;
  r.per_class_f1 = per_class;
  r.f1_macro = macro_f1(r.per_class_f1);
  return r;
}

struct Agreement {
  double agreement_rate = 0.0;
  double error_overlap = 0.0;
};

/// Share of samples on which both models output the same thing (Unparsed
/// counts as its own answer), and the Jaccard index of their error sets
/// (1 when neither model errs).
inline Agreement agreement(const std::map<std::string, ParsedOutput>& a, const std::map<std::string, ParsedOutput>& b,
                           const std::map<std::string, ClassLabel>& golds) {
  detail::require_same_ids(a, b, "first run", "second run");
  detail::require_same_ids(a, golds, "runs", "gold labels");
  if (a.empty()) throw DataError("cannot compute agreement over zero samples");
  long same = 0;
  std::set<std::string> errors_a, errors_b;
  for (const auto& [id, pa] : a) {
    const auto& pb = b.at(id);
    if (pa.label == pb.label) ++same;
    const auto gold = golds.at(id);
    if (pa.label != gold) errors_a.insert(id);
    if (pb.label != gold) errors_b.insert(id);
  }
  Agreement out;
  out.agreement_rate = static_cast<double>(same) / static_cast<double>(a.size());
  std::size_t inter = 0;
  for (const auto& id : errors_a) inter += errors_b.count(id);
  const std::size_t uni = errors_a.size() + errors_b.size() - inter;
  out.error_overlap = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  return out;
}

inline nlohmann::ordered_json to_json(const ConfusionMatrix& cm) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return rows;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["per_class_f1"] = {{"derogatory", r.per_class_f1[0]},
                       {"exclusionary", r.per_class_f1[1]},
                       {"dangerous", r.per_class_f1[2]}};
  j["f1_macro"] = r.f1_macro;
  j["n"] = r.n;
  j["unparsed_count"] = r.unparsed_count;
  j["confusion"] = to_json(r.confusion);
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    for (auto label : kAllLabels) r.per_class_f1[code_of(label)] = j.at("per_class_f1").at(std::string(name_of(label)));
    r.f1_macro = j.at("f1_macro").get<double>();
    r.n = j.at("n").get<long>();
    r.unparsed_count = j.at("unparsed_count").get<long>();
    const auto& rows = j.at("confusion");
    if (rows.size() != 4) throw DataError("confusion matrix must have 4 rows");
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t c = 0; c < 3; ++c) r.confusion.counts[i][c] = rows.at(i).at(c).get<long>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

/// "predicted,derogatory,exclusionary,dangerous" then one row per predicted
/// class and the unparsed row.
inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  csv::write_row(out, {"predicted", "derogatory", "exclusionary", "dangerous"});
  for (int r = 0; r < 4; ++r) {
    std::vector<std::string> row{r < 3 ? std::string(name_of(static_cast<ClassLabel>(r))) : "unparsed"};
    for (long v : cm.counts[r]) row.push_back(std::to_string(v));
    csv::write_row(out, row);
  }
}

enum class ReportFormat { Markdown, Csv };

inline ReportFormat parse_format(std::string_view name) {
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  if (name == "csv") return ReportFormat::Csv;
  throw DataError("unknown report format '" + std::string(name) + "' (expected markdown or csv)");
}

inline std::string percent_cell(double f1) { return fmt::format("{:.2f}", f1 * 100.0); }

/// One column per run, in the given order; rows are the three classes and
/// F1-macro, as percentages with two decimals.
inline std::string render_report(const std::vector<std::pair<std::string, EvalReport>>& reports, ReportFormat format) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (auto label : kAllLabels) {
    std::vector<std::string> cells;
    for (const auto& [_, r] : reports) cells.push_back(percent_cell(r.per_class_f1[code_of(label)]));
    rows.emplace_back(std::string(title_of(label)), std::move(cells));
  }
  std::vector<std::string> macro;
  for (const auto& [_, r] : reports) macro.push_back(percent_cell(r.f1_macro));
  rows.emplace_back("F1-macro", std::move(macro));

  std::string out;
  if (format == ReportFormat::Csv) {
    std::vector<std::string> header{"Label"};
    for (const auto& [name, _] : reports) header.push_back(name);
    auto line = [](const std::vector<std::string>& cells) {
      std::string s;
      for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + csv::escape(cells[i]);
      return s + "\n";
    };
    out += line(header);
    for (auto& [title, cells] : rows) {
      cells.insert(cells.begin(), title);
      out += line(cells);
    }
    return out;
  }

  auto md_escape = [](const std::string& s) {
    std::string e;
    for (char c : s) {
      if (c == '|') e += '\\';
      e += c;
    }
    return e;
  };
  out += "| Label |";
  for (const auto& [name, _] : reports) out += " " + md_escape(name) + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < reports.size(); ++i) out += "---:|";
  out += "\n";
  for (const auto& [title, cells] : rows) {
    out += "| " + title + " |";
    for (const auto& c : cells) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

}  // namespace xspeech
