#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scope3::csv {

/// One parsed data row together with the 1-based physical line it started on.
struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

/// RFC 4180-style comma-separated table with a mandatory header row.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column index by (case-sensitive) name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index by name; throws ParseError naming the source if absent.
  std::size_t require_column(std::string_view name) const;
};

/// Parses `text`; `source` is used in error messages only. A UTF-8 BOM is
/// skipped. Throws ParseError on an unterminated quote or a ragged row.
Table parse(std::string_view text, std::string source);

Table read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);

std::string format_row(const std::vector<std::string>& fields);

std::string read_text(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view contents);

}  // namespace scope3::csv
