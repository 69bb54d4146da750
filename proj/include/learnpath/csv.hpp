#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace learnpath::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> cells;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a header column, or npos.
  std::size_t column(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// RFC 4180 style: comma separated, double-quote quoting with "" escapes,
// quoted cells may contain newlines. Blank lines are skipped.
Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

// Quotes a cell only when it needs quoting.
std::string escape(std::string_view cell);

}  // namespace learnpath::csv
