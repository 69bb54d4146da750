#include "learnpath/csv.hpp"

#include "learnpath/error.hpp"

#include <fstream>
#include <sstream>

namespace learnpath {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidCorrectIndex: return "InvalidCorrectIndex";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::SkippedNotRatable: return "SkippedNotRatable";
    case ErrorCode::UnknownQuestion: return "UnknownQuestion";
    case ErrorCode::UnknownUser: return "UnknownUser";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::DanglingArcEndpoint: return "DanglingArcEndpoint";
    case ErrorCode::EmptyConceptLabel: return "EmptyConceptLabel";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::Stuck: return "Stuck";
    case ErrorCode::ConceptExhausted: return "ConceptExhausted";
    case ErrorCode::PoolExhausted: return "PoolExhausted";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::MixedLabelTypes: return "MixedLabelTypes";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyEstimates: return "EmptyEstimates";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return npos;
}

Table parse(std::string_view text) {
  Table table;
  std::vector<std::string> cells;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  std::size_t row_start_line = 1;

  auto finish_row = [&] {
    cells.push_back(std::move(cell));
    cell.clear();
    bool blank = !row_has_content && cells.size() == 1 && cells.front().empty();
    if (!blank) {
      if (table.header.empty() && table.rows.empty()) {
        table.header = std::move(cells);
        for (auto& h : table.header) h = trim(h);
        // Strip a UTF-8 byte order mark from the first header cell.
        if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
          table.header[0].erase(0, 3);
        }
      } else {
        table.rows.push_back(Row{row_start_line, std::move(cells)});
      }
    }
    cells.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        cells.push_back(std::move(cell));
        cell.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        finish_row();
        ++line;
        row_start_line = line;
        break;
      default:
        cell.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(row_start_line) + ": unterminated quoted cell");
  }
  if (row_has_content || !cell.empty()) finish_row();
  return table;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    auto piece = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view text) {
  const char* ws = " \t\r\n";
  auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(ws);
  return std::string(text.substr(first, last - first + 1));
}

std::string escape(std::string_view cell) {
  if (cell.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace csv
}  // namespace learnpath
