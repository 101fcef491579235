#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "opportune/errors.hpp"
#include "opportune/ops.hpp"

namespace opportune {

// A column is homogeneous: every cell is float64-or-null or string-or-null.
class ColumnData {
public:
  static ColumnData floats() { return ColumnData(false); }
  static ColumnData texts() { return ColumnData(true); }

  bool is_text() const { return is_text_; }
  std::size_t size() const { return is_text_ ? texts_.size() : nums_.size(); }

  void push_num(std::optional<double> v) { nums_.push_back(v); }
  void push_text(std::optional<std::string> v) { texts_.push_back(std::move(v)); }
  void push_null() {
    if (is_text_) texts_.push_back(std::nullopt);
    else nums_.push_back(std::nullopt);
  }

  bool is_null(std::size_t i) const {
    return is_text_ ? !texts_[i].has_value() : !nums_[i].has_value();
  }
  double num(std::size_t i) const { return *nums_[i]; }
  const std::string& text(std::size_t i) const { return *texts_[i]; }
  const std::optional<double>& num_opt(std::size_t i) const { return nums_[i]; }
  const std::optional<std::string>& text_opt(std::size_t i) const { return texts_[i]; }

  std::size_t non_null_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i)
      if (!is_null(i)) ++n;
    return n;
  }

  void append_cell(const ColumnData& src, std::size_t i) {
    if (src.is_text_ != is_text_) throw TypeMismatch("column tag changed mid-append");
    if (is_text_) texts_.push_back(src.texts_[i]);
    else nums_.push_back(src.nums_[i]);
  }

  std::string cell_repr(std::size_t i) const {
    if (is_null(i)) return "null";
    return is_text_ ? text(i) : format_number(num(i));
  }

  bool operator==(const ColumnData& o) const {
    return is_text_ == o.is_text_ && nums_ == o.nums_ && texts_ == o.texts_;
  }

  std::size_t byte_size() const {
    // 8 bytes per numeric slot, string payload bytes, plus a null bitmap.
    std::size_t n = size();
    std::size_t bytes = (n + 7) / 8;
    if (is_text_) {
      for (const auto& t : texts_) bytes += t ? t->size() : 0;
    } else {
      bytes += 8 * n;
    }
    return bytes;
  }

private:
  explicit ColumnData(bool text) : is_text_(text) {}
  bool is_text_ = false;
  std::vector<std::optional<double>> nums_;
  std::vector<std::optional<std::string>> texts_;
};

// One-dimensional result (a pandas-style series). `index` is empty for
// positional series; aggregates label entries with the originating column
// or group key.
struct Series {
  std::vector<std::string> index;
  ColumnData data = ColumnData::floats();

  std::size_t size() const { return data.size(); }
  bool operator==(const Series& o) const { return index == o.index && data == o.data; }
};

struct DataTable {
  std::vector<std::string> names;
  std::vector<ColumnData> cols;
  std::size_t rows = 0;

  const ColumnData* find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &cols[i];
    return nullptr;
  }
  const ColumnData& column(const std::string& name) const {
    const ColumnData* c = find(name);
    if (!c) throw MissingColumn(name);
    return *c;
  }
  void add_column(std::string name, ColumnData col) {
    if (!cols.empty() && col.size() != rows)
      throw TypeMismatch("column length differs from table row count");
    rows = col.size();
    names.push_back(std::move(name));
    cols.push_back(std::move(col));
  }
  bool operator==(const DataTable& o) const {
    return names == o.names && rows == o.rows && cols == o.cols;
  }
};

struct Scalar {
  std::optional<double> num;
  std::optional<std::string> text;

  static Scalar of(double v) { return Scalar{v, std::nullopt}; }
  static Scalar of(std::string v) { return Scalar{std::nullopt, std::move(v)}; }
  static Scalar null() { return Scalar{}; }
  bool is_null() const { return !num && !text; }
  bool operator==(const Scalar& o) const { return num == o.num && text == o.text; }
};

using Value = std::variant<Scalar, Series, DataTable>;

inline bool value_equal(const Value& a, const Value& b) { return a == b; }

inline std::size_t value_rows(const Value& v) {
  if (const auto* t = std::get_if<DataTable>(&v)) return t->rows;
  if (const auto* s = std::get_if<Series>(&v)) return s->size();
  return 1;
}

// Estimated in-memory footprint; drives cache accounting, not allocation.
inline std::size_t value_size_bytes(const Value& v) {
  if (const auto* t = std::get_if<DataTable>(&v)) {
    std::size_t bytes = 0;
    for (const auto& name : t->names) bytes += name.size();
    for (const auto& c : t->cols) bytes += c.byte_size();
    return bytes < 16 ? 16 : bytes;
  }
  if (const auto* s = std::get_if<Series>(&v)) {
    std::size_t bytes = s->data.byte_size();
    for (const auto& label : s->index) bytes += label.size();
    return bytes < 16 ? 16 : bytes;
  }
  const auto& sc = std::get<Scalar>(v);
  return 16 + (sc.text ? sc.text->size() : 0);
}

// Compact one-line description for logs and the REPL.
inline std::string value_preview(const Value& v, std::size_t max_rows = 10) {
  if (const auto* sc = std::get_if<Scalar>(&v)) {
    if (sc->is_null()) return "null";
    return sc->num ? format_number(*sc->num) : "'" + *sc->text + "'";
  }
  if (const auto* s = std::get_if<Series>(&v)) {
    std::string out = "series[" + std::to_string(s->size()) + "]{";
    std::size_t shown = s->size() < max_rows ? s->size() : max_rows;
    for (std::size_t i = 0; i < shown; ++i) {
      if (i) out += ", ";
      if (!s->index.empty()) out += s->index[i] + ": ";
      out += s->data.cell_repr(i);
    }
    if (shown < s->size()) out += ", ...";
    return out + "}";
  }
  const auto& t = std::get<DataTable>(v);
  std::string out = "table[" + std::to_string(t.rows) + " rows x " +
                    std::to_string(t.names.size()) + " cols]{";
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    if (i) out += ", ";
    out += t.names[i];
  }
  return out + "}";
}

}  // namespace opportune
