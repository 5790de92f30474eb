#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "versetopics/error.hpp"
#include "versetopics/text.hpp"

namespace versetopics {

/// A delimited text table: header plus rows, each row tagged with its
/// 1-based source line so errors can point at the offending record.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::string source;

  /// Index of a required column; throws InputError naming the file.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw InputError(source + ": missing column '" + std::string(name) + "'");
  }

  bool has_column(std::string_view name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }

  std::string where(std::size_t row) const { return source + ":" + std::to_string(line_numbers[row]); }
};

/// Delimiter chosen by extension: `.tsv`/`.tab` are tab-separated, anything
/// else comma-separated.
inline char delimiter_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".tsv" || ext == ".tab") ? '\t' : ',';
}

namespace detail {

inline std::vector<std::string> parse_record(std::string_view line, char delim, const std::string& where) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw InputError(where + ": unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace detail

inline Table parse_table(std::istream& in, char delim, std::string source) {
  Table table;
  table.source = std::move(source);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (text::trim(line).empty()) continue;
    auto fields = detail::parse_record(line, delim, table.source + ":" + std::to_string(line_no));
    if (!have_header) {
      for (auto& f : fields) f = std::string(text::trim(f));
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError(table.source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw InputError(table.source + ": empty file");
  return table;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_table(in, delimiter_for(path), path.string());
}

/// Field for a delimited writer: quoted only when it contains the delimiter,
/// a double quote, or a line break.
inline std::string quote_field(std::string_view field, char delim = ',') {
  if (field.find_first_of(std::string{delim} + "\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Line-oriented CSV builder: UTF-8, LF endings, no trailing delimiter.
class CsvWriter {
 public:
  explicit CsvWriter(char delim = ',') : delim_{delim} {}

  CsvWriter& row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_.push_back(delim_);
      out_ += quote_field(fields[i], delim_);
    }
    out_.push_back('\n');
    return *this;
  }

  const std::string& str() const noexcept { return out_; }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + path.string());
    f << out_;
  }

 private:
  char delim_;
  std::string out_;
};

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path.string());
  f << content;
}

}  // namespace versetopics
