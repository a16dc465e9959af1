#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "xspeech/error.hpp"

namespace xspeech {

/// The three extreme-speech classes. The numeric codes are the label
/// digits the models are asked to emit.
enum class ClassLabel : int { Derogatory = 0, Exclusionary = 1, Dangerous = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassLabel, kNumClasses> kAllLabels{
    ClassLabel::Derogatory, ClassLabel::Exclusionary, ClassLabel::Dangerous};

inline constexpr int code_of(ClassLabel label) { return static_cast<int>(label); }

/// Digit character for a label, e.g. '2' for Dangerous.
inline constexpr char digit_of(ClassLabel label) {
  return static_cast<char>('0' + code_of(label));
}

inline std::string digit_string(ClassLabel label) { return std::string(1, digit_of(label)); }

inline std::string_view name_of(ClassLabel label) {
  switch (label) {
    case ClassLabel::Derogatory: return "derogatory";
    case ClassLabel::Exclusionary: return "exclusionary";
    case ClassLabel::Dangerous: return "dangerous";
  }
  return "?";
}

/// Capitalized row title used in report tables.
inline std::string_view title_of(ClassLabel label) {
  switch (label) {
    case ClassLabel::Derogatory: return "Derogatory";
    case ClassLabel::Exclusionary: return "Exclusionary";
    case ClassLabel::Dangerous: return "Dangerous";
  }
  return "?";
}

inline std::optional<ClassLabel> label_from_code(int code) {
  if (code < 0 || code >= kNumClasses) return std::nullopt;
  return static_cast<ClassLabel>(code);
}

inline std::optional<ClassLabel> label_from_digit(char c) {
  if (c < '0' || c > '2') return std::nullopt;
  return static_cast<ClassLabel>(c - '0');
}

/// Strict name lookup: only the three canonical lowercase names.
inline int encode_label(std::string_view name) {
  for (auto label : kAllLabels) {
    if (name == name_of(label)) return code_of(label);
  }
  throw DataError("unknown class name '" + std::string(name) + "'");
}

inline std::string decode_label(int code) {
  auto label = label_from_code(code);
  if (!label) throw DataError("class code out of range: " + std::to_string(code));
  return std::string(name_of(*label));
}

namespace detail {

inline std::string lower_trimmed(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

/// Lenient parse for corpus label cells: codes "0"/"1"/"2", canonical names in
/// any case, and the long forms ("Derogatory extreme speech",
/// "Dangerous speech").
inline std::optional<ClassLabel> parse_label_cell(std::string_view cell) {
  const std::string v = detail::lower_trimmed(cell);
  if (v.size() == 1) return label_from_digit(v[0]);
  for (auto label : kAllLabels) {
    const std::string name(name_of(label));
    if (v == name || v == name + " speech" || v == name + " extreme speech") return label;
  }
  return std::nullopt;
}

}  // namespace xspeech
