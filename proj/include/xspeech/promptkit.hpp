#pragma once

// Prompt rendering for the two zero-shot styles and parsing of model
// answers back into labels and justifications.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "xspeech/error.hpp"
#include "xspeech/hashing.hpp"
#include "xspeech/labels.hpp"

namespace xspeech {

enum class PromptStyle { DirectLabel, JustifyThenLabel };

inline std::string_view style_name(PromptStyle style) {
  return style == PromptStyle::DirectLabel ? "direct" : "justify";
}

inline PromptStyle parse_style(std::string_view name) {
  if (name == "direct" || name == "DirectLabel") return PromptStyle::DirectLabel;
  if (name == "justify" || name == "JustifyThenLabel") return PromptStyle::JustifyThenLabel;
  throw DataError("unknown prompt style '" + std::string(name) + "' (expected direct or justify)");
}

enum class Role { System, User, Assistant };

inline std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

inline Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw DataError("unknown message role '" + std::string(name) + "'");
}

struct Message {
  Role role;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

inline nlohmann::ordered_json to_json(const std::vector<Message>& messages) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : messages) arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  return arr;
}

inline std::vector<Message> messages_from_json(const nlohmann::json& arr) {
  std::vector<Message> out;
  for (const auto& m : arr) {
    out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  }
  return out;
}

inline constexpr std::string_view kTextPlaceholder = "{text}";

/// System prompt plus one user template per style. User templates carry a
/// single {text} placeholder.
struct TemplateSet {
  std::string version;
  std::string system;
  std::string user_direct;
  std::string user_justify;

  const std::string& user_for(PromptStyle style) const {
    return style == PromptStyle::DirectLabel ? user_direct : user_justify;
  }

  /// SHA-256 over the canonical JSON of the three template strings.
  std::string hash() const {
    nlohmann::ordered_json j{{"system", system}, {"user_direct", user_direct}, {"user_justify", user_justify}};
    return sha256_hex(j.dump());
  }

  friend bool operator==(const TemplateSet&, const TemplateSet&) = default;
};

inline TemplateSet default_templates() {
  TemplateSet t;
  t.version = "xspeech-templates/1";
  t.system =
      "You are a content moderation assistant. You classify extreme speech collected from Indian "
      "social media into exactly one of three categories.\n"
      "\n"
      "Categories:\n"
      "0 - Derogatory extreme speech: rude, insulting or demeaning talk directed at a community, "
      "a person, a group or an institution. Sometimes used to push back against social norms or "
      "those in power.\n"
      "1 - Exclusionary extreme speech: talk that shuts a group or community out, frequently "
      "through jokes that make shutting them out feel ordinary.\n"
      "2 - Dangerous speech: talk that may incite or lead to violence or bodily harm.";
  t.user_direct =
      "Classify the following text.\n"
      "\n"
      "Text:\n"
      "{text}\n"
      "\n"
      "Answer with only the digit of the category (0, 1 or 2) and nothing else.";
  t.user_justify =
      "Classify the following text.\n"
      "\n"
      "Text:\n"
      "{text}\n"
      "\n"
      "First write a short justification of your decision. Then, on a final line by itself, write "
      "only the digit of the category (0, 1 or 2).";
  return t;
}

inline TemplateSet load_templates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open template file " + path.string());
  TemplateSet t;
  try {
    auto j = nlohmann::json::parse(in);
    t.version = j.value("version", std::string{});
    t.system = j.at("system").get<std::string>();
    t.user_direct = j.at("user_direct").get<std::string>();
    t.user_justify = j.at("user_justify").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return t;
}

inline nlohmann::ordered_json to_json(const TemplateSet& t) {
  return {{"version", t.version}, {"system", t.system}, {"user_direct", t.user_direct},
          {"user_justify", t.user_justify}};
}

/// System + user messages for one sample. The sample text is substituted
/// into the single {text} slot and nowhere else.
inline std::vector<Message> render_prompt(PromptStyle style, std::string_view text,
                                          const TemplateSet& templates = default_templates()) {
  const std::string& user = templates.user_for(style);
  const auto pos = user.find(kTextPlaceholder);
  if (pos == std::string::npos) {
    throw DataError("user template for style '" + std::string(style_name(style)) + "' has no {text} placeholder");
  }
  if (user.find(kTextPlaceholder, pos + 1) != std::string::npos) {
    throw DataError("user template for style '" + std::string(style_name(style)) +
                    "' has more than one {text} placeholder");
  }
  if (text.empty()) throw DataError("cannot render a prompt for empty text");
  std::string content = user.substr(0, pos);
  content.append(text);
  content.append(user, pos + kTextPlaceholder.size());

  std::vector<Message> out;
  if (!templates.system.empty()) out.push_back({Role::System, templates.system});
  out.push_back({Role::User, std::move(content)});
  return out;
}

/// The assistant turn a perfectly compliant DirectLabel answer consists of.
inline std::string render_assistant_completion(ClassLabel label) { return digit_string(label); }

enum class ParseStatus { Parsed, Unparsed };

struct ParsedOutput {
  std::optional<ClassLabel> label;
  std::optional<std::string> justification;
  ParseStatus status = ParseStatus::Unparsed;

  bool parsed() const { return status == ParseStatus::Parsed; }

  friend bool operator==(const ParsedOutput&, const ParsedOutput&) = default;
};

namespace detail {

inline bool ascii_alnum(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::isalnum(u) != 0;
}

inline bool is_trim_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && (std::isspace(u) != 0 || std::ispunct(u) != 0);
}

inline std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Offset of the last (or first) 0/1/2 digit bounded on both sides by a
/// non-alphanumeric character or the string edge.
inline std::optional<std::size_t> find_standalone_digit(std::string_view s, bool last = true) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '2') continue;
    const bool left_ok = i == 0 || !detail::ascii_alnum(s[i - 1]);
    const bool right_ok = i + 1 == s.size() || !detail::ascii_alnum(s[i + 1]);
    if (left_ok && right_ok) {
      found = i;
      if (!last) break;
    }
  }
  return found;
}

namespace detail {

// Drops a trailing "Label:"-style marker left in front of the final digit.
inline std::string_view strip_label_marker(std::string_view s) {
  static constexpr std::string_view kSeparators = ":-=*#([\"'`";
  auto strip_tail = [](std::string_view v) {
    while (!v.empty() && (std::isspace(static_cast<unsigned char>(v.back())) ||
                          kSeparators.find(v.back()) != std::string_view::npos)) {
      v.remove_suffix(1);
    }
    return v;
  };
  static constexpr std::string_view kMarkers[] = {"predicted label", "final answer", "final label",
                                                  "category",        "answer",       "label",
                                                  "class"};
  std::string_view tail = strip_tail(s);
  for (auto marker : kMarkers) {
    if (tail.size() < marker.size()) continue;
    const auto start = tail.size() - marker.size();
    bool match = true;
    for (std::size_t k = 0; k < marker.size() && match; ++k) {
      match = std::tolower(static_cast<unsigned char>(tail[start + k])) == marker[k];
    }
    if (match && (start == 0 || !ascii_alnum(tail[start - 1]))) {
      return trim_ws(strip_tail(tail.substr(0, start)));
    }
  }
  return trim_ws(s);
}

}  // namespace detail

/// Never throws. DirectLabel accepts a lone digit once surrounding
/// whitespace and punctuation are removed. JustifyThenLabel takes the last
/// standalone digit as the label and the text before it as justification.
inline ParsedOutput parse_output(std::string_view raw, PromptStyle style) noexcept {
  ParsedOutput out;
  if (style == PromptStyle::DirectLabel) {
    std::string_view v = raw;
    while (!v.empty() && detail::is_trim_char(v.front())) v.remove_prefix(1);
    while (!v.empty() && detail::is_trim_char(v.back())) v.remove_suffix(1);
    if (v.size() == 1) out.label = label_from_digit(v[0]);
  } else {
    if (auto pos = find_standalone_digit(raw)) {
      out.label = label_from_digit(raw[*pos]);
      const auto justification = detail::strip_label_marker(raw.substr(0, *pos));
      if (!justification.empty()) {
        try {
          out.justification = std::string(justification);
        } catch (...) {
          out.justification.reset();
        }
      }
    }
  }
  out.status = out.label ? ParseStatus::Parsed : ParseStatus::Unparsed;
  return out;
}

}  // namespace xspeech
