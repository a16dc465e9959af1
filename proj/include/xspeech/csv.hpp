#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "xspeech/error.hpp"

namespace xspeech::csv {

struct Row {
  std::vector<std::string> cells;
  std::size_t line = 0;  // 1-based physical line the row starts on
};

/// RFC 4180 reader: quoted fields may contain the delimiter, doubled quotes
/// and line breaks. CRLF is accepted. Blank lines are skipped.
inline std::vector<Row> read(std::istream& in, char delim) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.cells.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.cells.size() == 1 && row.cells[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = Row{};
    row.line = line;
  };

  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\r' && in.peek() == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field starting on line " + std::to_string(row.line));
  if (field_started || !field.empty() || !row.cells.empty()) end_row();
  return rows;
}

inline std::string escape(std::string_view cell, char delim = ',') {
  const bool needs_quotes = cell.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string_view::npos;
  if (!needs_quotes) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells, char delim = ',') {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.put(delim);
    out << escape(cells[i], delim);
  }
  out.put('\n');
}

}  // namespace xspeech::csv
