#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expertadapt/core/errors.hpp"

namespace expertadapt::report {

enum class TableFormat { markdown, csv, json };

inline TableFormat table_format_from_string(const std::string& s) {
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  throw ConfigError("unknown table format: " + s);
}

struct RenderCell {
  double value = 0.0;
  int decimals = 2;
  bool bold = false;       // best group for the column
  bool underline = false;  // significantly better than the paired counterpart
  bool flagged = false;    // value involved a degenerate significance test
};

struct RenderTable {
  std::string title;
  std::string row_header;             // label of the leading column
  std::vector<std::string> columns;   // metric column headings
  std::vector<std::string> row_labels;
  std::vector<std::vector<RenderCell>> cells;  // [row][column]
  std::vector<std::string> notes;     // free-form footnotes
};

namespace table_detail {

inline std::string format_value(const RenderCell& c) {
  return detail::strprintf("%.*f", c.decimals, c.value);
}

inline void check_shape(const RenderTable& t) {
  if (t.cells.size() != t.row_labels.size())
    throw DataError("table: row label / cell row count mismatch");
  for (const auto& row : t.cells)
    if (row.size() != t.columns.size())
      throw DataError("table: cell column count mismatch");
}

inline std::string emit_markdown(const RenderTable& t) {
  std::string out;
  if (!t.title.empty()) out += "### " + t.title + "\n\n";
  out += "| " + t.row_header + " |";
  for (const auto& c : t.columns) out += " " + c + " |";
  out += "\n|";
  for (size_t i = 0; i < t.columns.size() + 1; ++i) out += " --- |";
  out += "\n";
  for (size_t r = 0; r < t.cells.size(); ++r) {
    out += "| " + t.row_labels[r] + " |";
    for (const auto& cell : t.cells[r]) {
      std::string v = format_value(cell);
      if (cell.underline) v = "<u>" + v + "</u>";
      if (cell.bold) v = "**" + v + "**";
      if (cell.flagged) v += " (*)";
      out += " " + v + " |";
    }
    out += "\n";
  }
  for (const auto& n : t.notes) out += "\n_" + n + "_\n";
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline std::string emit_csv(const RenderTable& t) {
  std::string out = csv_escape(t.row_header);
  for (const auto& c : t.columns) out += "," + csv_escape(c);
  out += "\n";
  for (size_t r = 0; r < t.cells.size(); ++r) {
    out += csv_escape(t.row_labels[r]);
    for (const auto& cell : t.cells[r]) out += "," + format_value(cell);
    out += "\n";
  }
  return out;
}

inline std::string emit_json(const RenderTable& t) {
  nlohmann::json j;
  j["title"] = t.title;
  j["row_header"] = t.row_header;
  j["columns"] = t.columns;
  j["rows"] = nlohmann::json::array();
  for (size_t r = 0; r < t.cells.size(); ++r) {
    nlohmann::json row;
    row["label"] = t.row_labels[r];
    row["cells"] = nlohmann::json::array();
    for (const auto& cell : t.cells[r]) {
      nlohmann::json jc;
      jc["value"] = nlohmann::json::parse(format_value(cell));
      jc["bold"] = cell.bold;
      jc["underline"] = cell.underline;
      jc["flagged"] = cell.flagged;
      row["cells"].push_back(jc);
    }
    j["rows"].push_back(row);
  }
  j["notes"] = t.notes;
  return j.dump(2) + "\n";
}

}  // namespace table_detail

/// Renders a table to a byte-stable string. Values are fixed-precision; in
/// markdown bold is `**v**` and the counterpart marker is `<u>v</u>`; JSON
/// carries the flags explicitly; CSV holds the plain numbers only.
inline std::string emit_table(const RenderTable& t, TableFormat format) {
  table_detail::check_shape(t);
  switch (format) {
    case TableFormat::markdown:
      return table_detail::emit_markdown(t);
    case TableFormat::csv:
      return table_detail::emit_csv(t);
    case TableFormat::json:
      return table_detail::emit_json(t);
  }
  throw ConfigError("unknown table format");
}

}  // namespace expertadapt::report
