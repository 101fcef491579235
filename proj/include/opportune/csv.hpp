#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "opportune/errors.hpp"
#include "opportune/value.hpp"

namespace opportune {
namespace csv {

// Splits one record. Quoted fields may contain commas and doubled quotes;
// embedded newlines are not supported (records are line-delimited).
inline std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline bool parse_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  // Reject strtod extensions (inf, nan, hex); those read as text.
  for (char c : s) {
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' ||
          c == '.' || c == 'e' || c == 'E'))
      return false;
  }
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + s.size()) return false;
  *out = v;
  return true;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataLoadError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Lazily parsed CSV: the header is read eagerly, rows on demand. Used both
// for full ingestion and for prefix/suffix reads that stop early.
class CsvFile {
public:
  explicit CsvFile(const std::string& path) : lines_(read_lines(path)) {
    if (lines_.empty()) throw DataLoadError("empty csv file: " + path);
    header_ = split_record(lines_[0]);
    if (header_.empty()) throw DataLoadError("csv header has no columns: " + path);
    // Column typing: numeric unless some non-empty cell fails to parse.
    numeric_.assign(header_.size(), true);
    for (std::size_t r = 1; r < lines_.size(); ++r) {
      if (lines_[r].empty()) continue;
      std::vector<std::string> f = split_record(lines_[r]);
      if (f.size() != header_.size())
        throw DataLoadError("row " + std::to_string(r) + " has " +
                            std::to_string(f.size()) + " fields, expected " +
                            std::to_string(header_.size()));
      double tmp;
      for (std::size_t c = 0; c < f.size(); ++c)
        if (!f[c].empty() && !parse_double(f[c], &tmp)) numeric_[c] = false;
      row_lines_.push_back(r);
    }
  }

  const std::vector<std::string>& header() const { return header_; }
  std::size_t row_count() const { return row_lines_.size(); }
  bool column_is_numeric(std::size_t c) const { return numeric_[c]; }

  DataTable empty_table() const {
    DataTable t;
    for (std::size_t c = 0; c < header_.size(); ++c)
      t.add_column(header_[c],
                   numeric_[c] ? ColumnData::floats() : ColumnData::texts());
    t.rows = 0;
    return t;
  }

  // Appends rows [begin, end) to a table previously produced by empty_table.
  void append_rows(DataTable* t, std::size_t begin, std::size_t end) const {
    for (std::size_t r = begin; r < end; ++r) {
      std::vector<std::string> f = split_record(lines_[row_lines_[r]]);
      for (std::size_t c = 0; c < f.size(); ++c) {
        if (f[c].empty()) {
          t->cols[c].push_null();
        } else if (numeric_[c]) {
          double v = 0;
          parse_double(f[c], &v);
          t->cols[c].push_num(v);
        } else {
          t->cols[c].push_text(f[c]);
        }
      }
    }
    t->rows += end - begin;
  }

private:
  std::vector<std::string> lines_;
  std::vector<std::string> header_;
  std::vector<bool> numeric_;
  std::vector<std::size_t> row_lines_;  // line index of each data row
};

inline DataTable read_table(const std::string& path) {
  CsvFile f(path);
  DataTable t = f.empty_table();
  f.append_rows(&t, 0, f.row_count());
  return t;
}

// Row count without building the table; cheap enough to run at plan time.
inline std::size_t peek_row_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataLoadError("cannot open " + path);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") ++lines;
  }
  return lines == 0 ? 0 : lines - 1;
}

inline std::string quote_field(const std::string& s) {
  bool needs = s.find_first_of(",\"\n") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline void write_table(const DataTable& t, std::ostream& out) {
  for (std::size_t c = 0; c < t.names.size(); ++c) {
    if (c) out << ',';
    out << quote_field(t.names[c]);
  }
  out << '\n';
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      if (c) out << ',';
      const ColumnData& col = t.cols[c];
      if (!col.is_null(r))
        out << (col.is_text() ? quote_field(col.text(r)) : format_number(col.num(r)));
    }
    out << '\n';
  }
}

}  // namespace csv
}  // namespace opportune
