#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "opportune/behavior.hpp"
#include "opportune/cost.hpp"
#include "opportune/csv.hpp"
#include "opportune/dag.hpp"
#include "opportune/errors.hpp"
#include "opportune/value.hpp"

namespace opportune {

struct EvalOptions {
  std::string base_dir;  // read_csv paths resolve against this when relative

  std::string resolve(const std::string& path) const {
    if (base_dir.empty() || path.empty() || path.front() == '/') return path;
    return base_dir + "/" + path;
  }
};

namespace detail {

inline double arg_num(const std::vector<Arg>& args, std::size_t i) {
  return std::get<double>(args.at(i));
}
inline const std::string& arg_str(const std::vector<Arg>& args, std::size_t i) {
  return std::get<std::string>(args.at(i));
}

inline bool cmp_num(double a, CmpOp op, double b) {
  switch (op) {
    case CmpOp::Lt: return a < b;
    case CmpOp::Le: return a <= b;
    case CmpOp::Gt: return a > b;
    case CmpOp::Ge: return a >= b;
    case CmpOp::Eq: return a == b;
    case CmpOp::Ne: return a != b;
  }
  return false;
}
inline bool cmp_text(const std::string& a, CmpOp op, const std::string& b) {
  switch (op) {
    case CmpOp::Lt: return a < b;
    case CmpOp::Le: return a <= b;
    case CmpOp::Gt: return a > b;
    case CmpOp::Ge: return a >= b;
    case CmpOp::Eq: return a == b;
    case CmpOp::Ne: return a != b;
  }
  return false;
}

// Comparisons with null are false.
inline std::vector<bool> filter_mask(const ColumnData& pred, CmpOp op, const Arg& lit,
                                     std::size_t begin, std::size_t end) {
  std::vector<bool> mask(end - begin, false);
  if (!pred.is_text()) {
    const double* b = std::get_if<double>(&lit);
    if (!b) throw TypeMismatch("numeric predicate compared with a string literal");
    for (std::size_t i = begin; i < end; ++i)
      if (!pred.is_null(i)) mask[i - begin] = cmp_num(pred.num(i), op, *b);
  } else {
    const std::string* b = std::get_if<std::string>(&lit);
    if (!b) throw TypeMismatch("text predicate compared with a numeric literal");
    for (std::size_t i = begin; i < end; ++i)
      if (!pred.is_null(i)) mask[i - begin] = cmp_text(pred.text(i), op, *b);
  }
  return mask;
}

inline ColumnData slice_column(const ColumnData& c, std::size_t begin, std::size_t end) {
  ColumnData out = c.is_text() ? ColumnData::texts() : ColumnData::floats();
  for (std::size_t i = begin; i < end; ++i) out.append_cell(c, i);
  return out;
}

inline DataTable slice_table(const DataTable& t, std::size_t begin, std::size_t end) {
  DataTable out;
  for (std::size_t c = 0; c < t.cols.size(); ++c)
    out.add_column(t.names[c], slice_column(t.cols[c], begin, end));
  out.rows = end - begin;
  out.names = t.names;
  return out;
}

inline Series slice_series(const Series& s, std::size_t begin, std::size_t end) {
  Series out;
  out.data = slice_column(s.data, begin, end);
  if (!s.index.empty())
    out.index.assign(s.index.begin() + begin, s.index.begin() + end);
  return out;
}

inline Value slice_value(const Value& v, std::size_t begin, std::size_t end) {
  if (const auto* t = std::get_if<DataTable>(&v)) return slice_table(*t, begin, end);
  if (const auto* s = std::get_if<Series>(&v)) return slice_series(*s, begin, end);
  throw TypeMismatch("cannot slice a scalar");
}

inline void fill_column(ColumnData& c, const Scalar& fill) {
  if (fill.is_null()) return;
  if (!c.is_text() && fill.num) {
    ColumnData out = ColumnData::floats();
    for (std::size_t i = 0; i < c.size(); ++i)
      out.push_num(c.is_null(i) ? *fill.num : c.num(i));
    c = std::move(out);
  } else if (c.is_text() && fill.text) {
    ColumnData out = ColumnData::texts();
    for (std::size_t i = 0; i < c.size(); ++i)
      out.push_text(c.is_null(i) ? *fill.text : c.text(i));
    c = std::move(out);
  }
}

struct MeanAccum {
  double sum = 0;
  std::size_t count = 0;
  void add(const ColumnData& c, std::size_t begin, std::size_t end) {
    if (c.is_text()) throw TypeMismatch("mean/sum over a text column");
    for (std::size_t i = begin; i < end; ++i) {
      if (!c.is_null(i)) {
        sum += c.num(i);
        ++count;
      }
    }
  }
};

struct CountsAccum {
  std::map<double, std::size_t> nums;
  std::map<std::string, std::size_t> texts;
  void add(const ColumnData& c, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (c.is_null(i)) continue;
      if (c.is_text()) ++texts[c.text(i)];
      else ++nums[c.num(i)];
    }
  }
  void merge(const CountsAccum& o) {
    for (const auto& [k, v] : o.nums) nums[k] += v;
    for (const auto& [k, v] : o.texts) texts[k] += v;
  }
  // Descending count, ascending value.
  Series to_series() const {
    std::vector<std::pair<std::string, std::size_t>> items;
    for (const auto& [k, v] : nums) items.emplace_back(format_number(k), v);
    for (const auto& [k, v] : texts) items.emplace_back(k, v);
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Series out;
    out.data = ColumnData::floats();
    for (const auto& [label, count] : items) {
      out.index.push_back(label);
      out.data.push_num(static_cast<double>(count));
    }
    return out;
  }
};

inline void append_table(DataTable& dst, const DataTable& blk) {
  if (dst.names.empty()) {
    dst = blk;
    return;
  }
  for (std::size_t c = 0; c < dst.cols.size(); ++c)
    for (std::size_t i = 0; i < blk.rows; ++i)
      dst.cols[c].append_cell(blk.cols[c], i);
  dst.rows += blk.rows;
}

inline void append_series(Series& dst, const Series& blk) {
  for (std::size_t i = 0; i < blk.data.size(); ++i)
    dst.data.append_cell(blk.data, i);
  dst.index.insert(dst.index.end(), blk.index.begin(), blk.index.end());
}

inline void append_value(Value& dst, const Value& blk) {
  if (auto* t = std::get_if<DataTable>(&dst)) {
    append_table(*t, std::get<DataTable>(blk));
    return;
  }
  append_series(std::get<Series>(dst), std::get<Series>(blk));
}

inline const DataTable& as_table(const Value& v, const char* what) {
  const auto* t = std::get_if<DataTable>(&v);
  if (!t) throw TypeMismatch(std::string(what) + " requires a table input");
  return *t;
}
inline const Series& as_series(const Value& v, const char* what) {
  const auto* s = std::get_if<Series>(&v);
  if (!s) throw TypeMismatch(std::string(what) + " requires a series input");
  return *s;
}

}  // namespace detail

// Reference semantics for every operator: a pure function from input values to
// the output value. Partitioned execution must agree with this exactly.
inline Value eval_operator(OpKind kind, const std::vector<Arg>& args,
                           const std::vector<const Value*>& inputs,
                           const EvalOptions& opts = {}) {
  using namespace detail;
  switch (kind) {
    case OpKind::ReadCsv:
      return csv::read_table(opts.resolve(arg_str(args, 0)));

    case OpKind::Literal: {
      if (const double* d = std::get_if<double>(&args.at(0))) return Scalar::of(*d);
      return Scalar::of(std::get<std::string>(args.at(0)));
    }

    case OpKind::Assign:
      return *inputs.at(0);

    case OpKind::SelectColumn: {
      const DataTable& t = as_table(*inputs.at(0), "column select");
      Series s;
      s.data = t.column(arg_str(args, 0));
      return s;
    }

    case OpKind::Filter: {
      const Value& base = *inputs.at(0);
      const Series& pred = as_series(*inputs.at(1), "filter predicate");
      CmpOp op = std::get<CmpOp>(args.at(0));
      std::size_t n = value_rows(base);
      if (pred.size() != n)
        throw TypeMismatch("filter predicate length does not match input rows");
      std::vector<bool> mask = filter_mask(pred.data, op, args.at(1), 0, pred.size());
      if (const auto* t = std::get_if<DataTable>(&base)) {
        DataTable out;
        out.names = t->names;
        for (const auto& c : t->cols) {
          ColumnData col = c.is_text() ? ColumnData::texts() : ColumnData::floats();
          for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) col.append_cell(c, i);
          out.cols.push_back(std::move(col));
        }
        out.rows = out.cols.empty() ? 0 : out.cols[0].size();
        return out;
      }
      const Series& s = as_series(base, "filter");
      Series out;
      out.data = s.data.is_text() ? ColumnData::texts() : ColumnData::floats();
      for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) {
          out.data.append_cell(s.data, i);
          if (!s.index.empty()) out.index.push_back(s.index[i]);
        }
      }
      return out;
    }

    case OpKind::Fillna: {
      const Value& base = *inputs.at(0);
      const auto* fill = std::get_if<Scalar>(inputs.at(1));
      if (!fill) throw TypeMismatch("fill value must be a scalar");
      if (const auto* t = std::get_if<DataTable>(&base)) {
        DataTable out = *t;
        for (auto& c : out.cols) fill_column(c, *fill);
        return out;
      }
      if (const auto* s = std::get_if<Series>(&base)) {
        if (!s->data.is_text() && fill->text)
          throw TypeMismatch("filling a numeric series with a string");
        if (s->data.is_text() && fill->num)
          throw TypeMismatch("filling a text series with a number");
        Series out = *s;
        fill_column(out.data, *fill);
        return out;
      }
      throw TypeMismatch("fillna requires a table or series");
    }

    case OpKind::Mean:
    case OpKind::Sum: {
      bool is_mean = kind == OpKind::Mean;
      const Value& base = *inputs.at(0);
      if (const auto* s = std::get_if<Series>(&base)) {
        MeanAccum acc;
        acc.add(s->data, 0, s->size());
        if (is_mean) {
          if (acc.count == 0) throw EmptyAggregate("mean of an all-null series");
          return Scalar::of(acc.sum / static_cast<double>(acc.count));
        }
        return Scalar::of(acc.sum);
      }
      const DataTable& t = as_table(base, "mean/sum");
      Series out;
      out.data = ColumnData::floats();
      for (std::size_t c = 0; c < t.cols.size(); ++c) {
        if (t.cols[c].is_text()) continue;
        MeanAccum acc;
        acc.add(t.cols[c], 0, t.rows);
        out.index.push_back(t.names[c]);
        if (!is_mean)
          out.data.push_num(acc.sum);
        else if (acc.count)
          out.data.push_num(acc.sum / static_cast<double>(acc.count));
        else
          out.data.push_null();
      }
      if (out.index.empty()) throw EmptyAggregate("table has no numeric columns");
      return out;
    }

    case OpKind::ValueCounts: {
      const Series& s = as_series(*inputs.at(0), "value_counts");
      CountsAccum acc;
      acc.add(s.data, 0, s.size());
      return acc.to_series();
    }

    case OpKind::Head:
    case OpKind::Tail: {
      std::size_t k = static_cast<std::size_t>(arg_num(args, 0));
      const Value& base = *inputs.at(0);
      std::size_t n = value_rows(base);
      if (std::holds_alternative<Scalar>(base))
        throw TypeMismatch("head/tail requires a table or series");
      std::size_t take = std::min(k, n);
      return kind == OpKind::Head ? detail::slice_value(base, 0, take)
                                  : detail::slice_value(base, n - take, n);
    }

    case OpKind::SortValues: {
      const Value& base = *inputs.at(0);
      const ColumnData* key = nullptr;
      std::size_t n = value_rows(base);
      if (const auto* t = std::get_if<DataTable>(&base)) {
        if (args.empty())
          throw TypeMismatch("sort_values on a table requires a column name");
        key = &t->column(arg_str(args, 0));
      } else {
        key = &as_series(base, "sort_values").data;
      }
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        bool na = key->is_null(a), nb = key->is_null(b);
        if (na || nb) return !na && nb;  // nulls last
        if (key->is_text()) return key->text(a) < key->text(b);
        return key->num(a) < key->num(b);
      });
      if (const auto* t = std::get_if<DataTable>(&base)) {
        DataTable out;
        out.names = t->names;
        for (const auto& c : t->cols) {
          ColumnData col = c.is_text() ? ColumnData::texts() : ColumnData::floats();
          for (std::size_t i : order) col.append_cell(c, i);
          out.cols.push_back(std::move(col));
        }
        out.rows = n;
        return out;
      }
      const Series& s = std::get<Series>(base);
      Series out;
      out.data = s.data.is_text() ? ColumnData::texts() : ColumnData::floats();
      for (std::size_t i : order) {
        out.data.append_cell(s.data, i);
        if (!s.index.empty()) out.index.push_back(s.index[i]);
      }
      return out;
    }

    case OpKind::GroupbyMean: {
      const DataTable& t = as_table(*inputs.at(0), "groupby_mean");
      const std::string& key_name = arg_str(args, 0);
      const ColumnData& key = t.column(key_name);
      // Ordered groups over non-null keys.
      std::map<std::string, std::vector<std::size_t>> text_groups;
      std::map<double, std::vector<std::size_t>> num_groups;
      for (std::size_t i = 0; i < t.rows; ++i) {
        if (key.is_null(i)) continue;
        if (key.is_text()) text_groups[key.text(i)].push_back(i);
        else num_groups[key.num(i)].push_back(i);
      }
      DataTable out;
      ColumnData key_col = key.is_text() ? ColumnData::texts() : ColumnData::floats();
      std::vector<std::vector<std::size_t>> groups;
      if (key.is_text()) {
        for (auto& [k, rows] : text_groups) {
          key_col.push_text(k);
          groups.push_back(std::move(rows));
        }
      } else {
        for (auto& [k, rows] : num_groups) {
          key_col.push_num(k);
          groups.push_back(std::move(rows));
        }
      }
      out.add_column(key_name, std::move(key_col));
      for (std::size_t c = 0; c < t.cols.size(); ++c) {
        if (t.names[c] == key_name || t.cols[c].is_text()) continue;
        ColumnData col = ColumnData::floats();
        for (const auto& rows : groups) {
          double sum = 0;
          std::size_t count = 0;
          for (std::size_t i : rows) {
            if (!t.cols[c].is_null(i)) {
              sum += t.cols[c].num(i);
              ++count;
            }
          }
          if (count) col.push_num(sum / static_cast<double>(count));
          else col.push_null();
        }
        out.names.push_back(t.names[c]);
        out.cols.push_back(std::move(col));
      }
      return out;
    }

    case OpKind::DropColumnsBelowThreshold: {
      const DataTable& t = as_table(*inputs.at(0), "drop_columns_below_threshold");
      double frac = arg_num(args, 0);
      DataTable out;
      for (std::size_t c = 0; c < t.cols.size(); ++c) {
        double present = t.rows == 0
                             ? 1.0
                             : static_cast<double>(t.cols[c].non_null_count()) /
                                   static_cast<double>(t.rows);
        if (present >= frac) out.add_column(t.names[c], t.cols[c]);
      }
      out.rows = t.rows;
      if (out.cols.empty()) out.names.clear();
      return out;
    }

    case OpKind::Columns: {
      const DataTable& t = as_table(*inputs.at(0), "columns");
      Series s;
      s.data = ColumnData::texts();
      for (const auto& name : t.names) s.data.push_text(name);
      return s;
    }
  }
  throw Error("unhandled operator kind");
}

// --- partitioned execution ---

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const RowRange&) const = default;
};

struct PartitionPlan {
  std::vector<RowRange> ranges;
  std::size_t k = 5;
  std::size_t row_count = 0;
};

inline PartitionPlan single_range_plan(std::size_t row_count, std::size_t k = 5) {
  PartitionPlan p;
  p.k = k;
  p.row_count = row_count;
  if (row_count > 0) p.ranges.push_back({0, row_count});
  return p;
}

// Uneven partitioning: dedicated top-K and bottom-K ranges for partial-result
// queries, and a middle section of eight base chunks. A chunk whose predicted
// start offset (execution time prorated by rows) lands within +-10% of a
// think-time quartile is split in half, so checkpoints are finer exactly where
// an interaction is likely to arrive.
inline PartitionPlan make_partition_plan(std::size_t row_count, std::size_t k,
                                         double est_exec_seconds,
                                         const ThinkTimeModel& think) {
  PartitionPlan plan;
  plan.k = k;
  plan.row_count = row_count;
  if (row_count == 0) return plan;

  std::size_t top = std::min(k, row_count);
  plan.ranges.push_back({0, top});
  if (top == row_count) return plan;

  std::size_t bottom_start = std::max(top, row_count - std::min(k, row_count - top));
  const double quartiles[3] = {think.p25(), think.p50(), think.p75()};

  if (bottom_start > top) {
    std::size_t middle = bottom_start - top;
    std::size_t base = (middle + 7) / 8;
    for (std::size_t start = top; start < bottom_start;) {
      std::size_t end = std::min(start + base, bottom_start);
      double offset = est_exec_seconds * static_cast<double>(start) /
                      static_cast<double>(row_count);
      bool near_quartile = false;
      for (double q : quartiles)
        if (q > 0 && std::fabs(offset - q) <= 0.10 * q) near_quartile = true;
      if (near_quartile && end - start >= 2) {
        std::size_t mid = start + (end - start + 1) / 2;
        plan.ranges.push_back({start, mid});
        plan.ranges.push_back({mid, end});
      } else {
        plan.ranges.push_back({start, end});
      }
      start = end;
    }
  }
  plan.ranges.push_back({bottom_start, row_count});
  return plan;
}

inline bool is_row_partitionable(OpKind k) {
  switch (k) {
    case OpKind::ReadCsv:
    case OpKind::SelectColumn:
    case OpKind::Filter:
    case OpKind::Fillna:
    case OpKind::Mean:
    case OpKind::Sum:
    case OpKind::ValueCounts:
    case OpKind::DropColumnsBelowThreshold:
      return true;
    default:
      return false;
  }
}

// Incremental execution of one operator over a partition plan. Aggregate state
// is carried sequentially across ranges so the merged result is bit-identical
// to eval_operator on the whole input. compute_range is pure with respect to
// committed state; a computed-but-uncommitted range can be dropped, which is
// what preemption does to in-flight work.
class OperatorRun {
public:
  OperatorRun(OpKind kind, std::vector<Arg> args, std::vector<Value> inputs,
              PartitionPlan plan, EvalOptions opts = {})
      : kind_(kind),
        args_(std::move(args)),
        inputs_(std::move(inputs)),
        plan_(std::move(plan)),
        opts_(std::move(opts)) {
    if (kind_ == OpKind::ReadCsv) {
      csv_ = std::make_unique<csv::CsvFile>(opts_.resolve(detail::arg_str(args_, 0)));
      table_out_ = csv_->empty_table();
    } else if (is_row_partitionable(kind_)) {
      init_partitionable();
    }
  }

  OpKind kind() const { return kind_; }
  const PartitionPlan& plan() const { return plan_; }
  std::size_t range_count() const { return plan_.ranges.size(); }
  std::size_t completed() const { return completed_; }
  bool done() const { return completed_ >= range_count(); }

  struct RangePartial {
    std::size_t index = 0;
    // exactly one is meaningful, depending on the operator
    std::optional<DataTable> rows_block;
    std::optional<Series> series_block;
    std::vector<detail::MeanAccum> accum_snapshot;
    std::optional<detail::CountsAccum> counts_delta;
    std::vector<std::size_t> null_counts_delta;
    std::optional<Value> whole_result;
  };

  RangePartial compute_range(std::size_t idx) const {
    if (idx != completed_) throw Error("ranges must be processed in order");
    const RowRange r = plan_.ranges.at(idx);
    RangePartial out;
    out.index = idx;
    try {
      compute_range_impl(r, out);
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " (in range [" + std::to_string(r.begin) +
                  ", " + std::to_string(r.end) + "))");
    }
    return out;
  }

  void commit(RangePartial&& partial) {
    if (partial.index != completed_) throw Error("commit out of order");
    if (partial.rows_block) detail::append_table(table_out_, *partial.rows_block);
    if (partial.series_block) detail::append_series(series_out_, *partial.series_block);
    if (!partial.accum_snapshot.empty()) accums_ = std::move(partial.accum_snapshot);
    if (partial.counts_delta) counts_.merge(*partial.counts_delta);
    if (!partial.null_counts_delta.empty()) {
      if (null_counts_.empty()) null_counts_.assign(partial.null_counts_delta.size(), 0);
      for (std::size_t i = 0; i < null_counts_.size(); ++i)
        null_counts_[i] += partial.null_counts_delta[i];
    }
    if (partial.whole_result) whole_ = std::move(partial.whole_result);
    ++completed_;
  }

  Value finish() const {
    if (!done()) throw Error("finish before all ranges completed");
    switch (kind_) {
      case OpKind::ReadCsv:
        return table_out_;
      case OpKind::SelectColumn:
      case OpKind::Filter:
      case OpKind::Fillna:
        if (output_is_series_) return series_out_;
        return table_out_;
      case OpKind::Mean:
      case OpKind::Sum:
        return finish_aggregate();
      case OpKind::ValueCounts:
        return counts_.to_series();
      case OpKind::DropColumnsBelowThreshold:
        return finish_drop_columns();
      default:
        if (whole_) return *whole_;
        // zero-row single-range plans never ran a range; evaluate directly
        return eval_whole();
    }
  }

private:
  void init_partitionable() {
    switch (kind_) {
      case OpKind::SelectColumn: {
        output_is_series_ = true;
        const DataTable& t = detail::as_table(inputs_.at(0), "column select");
        const ColumnData& c = t.column(detail::arg_str(args_, 0));
        series_out_.data = c.is_text() ? ColumnData::texts() : ColumnData::floats();
        break;
      }
      case OpKind::Filter:
      case OpKind::Fillna: {
        const Value& base = inputs_.at(0);
        if (const auto* s = std::get_if<Series>(&base)) {
          output_is_series_ = true;
          series_out_.data =
              s->data.is_text() ? ColumnData::texts() : ColumnData::floats();
        } else {
          const DataTable& t = detail::as_table(base, op_name(kind_));
          table_out_.names = t.names;
          for (const auto& c : t.cols)
            table_out_.cols.push_back(c.is_text() ? ColumnData::texts()
                                                  : ColumnData::floats());
          table_out_.rows = 0;
        }
        break;
      }
      case OpKind::Mean:
      case OpKind::Sum: {
        const Value& base = inputs_.at(0);
        if (std::get_if<Series>(&base)) {
          accums_.assign(1, {});
        } else {
          const DataTable& t = detail::as_table(base, "mean/sum");
          std::size_t numeric = 0;
          for (const auto& c : t.cols)
            if (!c.is_text()) ++numeric;
          accums_.assign(numeric, {});
        }
        break;
      }
      default:
        break;
    }
  }

  void compute_range_impl(RowRange r, RangePartial& out) const {
    using namespace detail;
    switch (kind_) {
      case OpKind::ReadCsv: {
        DataTable blk = csv_->empty_table();
        csv_->append_rows(&blk, r.begin, r.end);
        out.rows_block = std::move(blk);
        return;
      }
      case OpKind::SelectColumn: {
        const DataTable& t = as_table(inputs_.at(0), "column select");
        const ColumnData& c = t.column(arg_str(args_, 0));
        Series blk;
        blk.data = slice_column(c, r.begin, r.end);
        out.series_block = std::move(blk);
        return;
      }
      case OpKind::Filter: {
        const Value& base = inputs_.at(0);
        const Series& pred = as_series(inputs_.at(1), "filter predicate");
        if (pred.size() != value_rows(base))
          throw TypeMismatch("filter predicate length does not match input rows");
        std::vector<bool> mask =
            filter_mask(pred.data, std::get<CmpOp>(args_.at(0)), args_.at(1),
                        r.begin, r.end);
        if (const auto* t = std::get_if<DataTable>(&base)) {
          DataTable blk;
          blk.names = t->names;
          for (const auto& c : t->cols) {
            ColumnData col = c.is_text() ? ColumnData::texts() : ColumnData::floats();
            for (std::size_t i = r.begin; i < r.end; ++i)
              if (mask[i - r.begin]) col.append_cell(c, i);
            blk.cols.push_back(std::move(col));
          }
          blk.rows = blk.cols.empty() ? 0 : blk.cols[0].size();
          out.rows_block = std::move(blk);
        } else {
          const Series& s = as_series(base, "filter");
          Series blk;
          blk.data = s.data.is_text() ? ColumnData::texts() : ColumnData::floats();
          for (std::size_t i = r.begin; i < r.end; ++i) {
            if (mask[i - r.begin]) {
              blk.data.append_cell(s.data, i);
              if (!s.index.empty()) blk.index.push_back(s.index[i]);
            }
          }
          out.series_block = std::move(blk);
        }
        return;
      }
      case OpKind::Fillna: {
        const auto* fill = std::get_if<Scalar>(&inputs_.at(1));
        if (!fill) throw TypeMismatch("fill value must be a scalar");
        const Value& base = inputs_.at(0);
        if (const auto* t = std::get_if<DataTable>(&base)) {
          DataTable blk = slice_table(*t, r.begin, r.end);
          for (auto& c : blk.cols) fill_column(c, *fill);
          out.rows_block = std::move(blk);
        } else {
          const Series& s = as_series(base, "fillna");
          if (!s.data.is_text() && fill->text)
            throw TypeMismatch("filling a numeric series with a string");
          if (s.data.is_text() && fill->num)
            throw TypeMismatch("filling a text series with a number");
          Series blk = slice_series(s, r.begin, r.end);
          fill_column(blk.data, *fill);
          out.series_block = std::move(blk);
        }
        return;
      }
      case OpKind::Mean:
      case OpKind::Sum: {
        // continue sequentially from the committed accumulators
        std::vector<MeanAccum> snap = accums_;
        const Value& base = inputs_.at(0);
        if (const auto* s = std::get_if<Series>(&base)) {
          snap.at(0).add(s->data, r.begin, r.end);
        } else {
          const DataTable& t = as_table(base, "mean/sum");
          std::size_t slot = 0;
          for (const auto& c : t.cols) {
            if (c.is_text()) continue;
            snap.at(slot++).add(c, r.begin, r.end);
          }
        }
        out.accum_snapshot = std::move(snap);
        return;
      }
      case OpKind::ValueCounts: {
        const Series& s = as_series(inputs_.at(0), "value_counts");
        CountsAccum delta;
        delta.add(s.data, r.begin, r.end);
        out.counts_delta = std::move(delta);
        return;
      }
      case OpKind::DropColumnsBelowThreshold: {
        const DataTable& t = as_table(inputs_.at(0), "drop_columns_below_threshold");
        std::vector<std::size_t> delta(t.cols.size(), 0);
        for (std::size_t c = 0; c < t.cols.size(); ++c)
          for (std::size_t i = r.begin; i < r.end; ++i)
            if (t.cols[c].is_null(i)) ++delta[c];
        // report as null counts; sized even when all zero
        if (delta.empty()) delta.assign(1, 0);
        out.null_counts_delta = std::move(delta);
        return;
      }
      default:
        out.whole_result = eval_whole();
        return;
    }
  }

  Value eval_whole() const {
    std::vector<const Value*> ptrs;
    ptrs.reserve(inputs_.size());
    for (const Value& v : inputs_) ptrs.push_back(&v);
    return eval_operator(kind_, args_, ptrs, opts_);
  }

  Value finish_aggregate() const {
    const Value& base = inputs_.at(0);
    bool is_mean = kind_ == OpKind::Mean;
    if (std::get_if<Series>(&base)) {
      const detail::MeanAccum& a = accums_.at(0);
      if (is_mean) {
        if (a.count == 0) throw EmptyAggregate("mean of an all-null series");
        return Scalar::of(a.sum / static_cast<double>(a.count));
      }
      return Scalar::of(a.sum);
    }
    const DataTable& t = std::get<DataTable>(base);
    Series out;
    out.data = ColumnData::floats();
    std::size_t slot = 0;
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      if (t.cols[c].is_text()) continue;
      const detail::MeanAccum& a = accums_.at(slot++);
      out.index.push_back(t.names[c]);
      if (is_mean) {
        if (a.count) out.data.push_num(a.sum / static_cast<double>(a.count));
        else out.data.push_null();
      } else {
        out.data.push_num(a.sum);
      }
    }
    if (out.index.empty()) throw EmptyAggregate("table has no numeric columns");
    return out;
  }

  Value finish_drop_columns() const {
    const DataTable& t = std::get<DataTable>(inputs_.at(0));
    double frac = detail::arg_num(args_, 0);
    DataTable out;
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      std::size_t nulls = c < null_counts_.size() ? null_counts_[c] : 0;
      double present = t.rows == 0 ? 1.0
                                   : 1.0 - static_cast<double>(nulls) /
                                               static_cast<double>(t.rows);
      if (present >= frac) out.add_column(t.names[c], t.cols[c]);
    }
    out.rows = t.rows;
    if (out.cols.empty()) out.names.clear();
    return out;
  }

  OpKind kind_;
  std::vector<Arg> args_;
  std::vector<Value> inputs_;
  PartitionPlan plan_;
  EvalOptions opts_;
  std::unique_ptr<csv::CsvFile> csv_;

  std::size_t completed_ = 0;
  bool output_is_series_ = false;
  DataTable table_out_;
  Series series_out_;
  std::vector<detail::MeanAccum> accums_;
  detail::CountsAccum counts_;
  std::vector<std::size_t> null_counts_;
  std::optional<Value> whole_;
};

// Resumable state after preemption: the run keeps every committed range.
struct Checkpoint {
  NodeId node = 0;
  std::shared_ptr<OperatorRun> run;

  std::size_t completed() const { return run->completed(); }
  const PartitionPlan& plan() const { return run->plan(); }
};

struct ExecOutcome {
  std::optional<Value> result;            // set when completed
  std::optional<Checkpoint> checkpoint;   // set when preempted
  bool preempted() const { return checkpoint.has_value(); }
};

// Drives a run to completion unless the preempt signal is raised. The signal
// is consulted at range boundaries: before starting a range (so no new range
// begins after the signal) and after computing one (so work that was in
// flight when the signal arrived is dropped rather than committed).
inline ExecOutcome execute_partitioned(NodeId node, std::shared_ptr<OperatorRun> run,
                                       const std::atomic<bool>& preempt_signal) {
  while (!run->done()) {
    if (preempt_signal.load(std::memory_order_relaxed))
      return {std::nullopt, Checkpoint{node, run}};
    auto partial = run->compute_range(run->completed());
    if (preempt_signal.load(std::memory_order_relaxed))
      return {std::nullopt, Checkpoint{node, run}};
    run->commit(std::move(partial));
  }
  return {run->finish(), std::nullopt};
}

inline ExecOutcome execute_partitioned(OpKind kind, std::vector<Arg> args,
                                       std::vector<Value> inputs, PartitionPlan plan,
                                       const std::atomic<bool>& preempt_signal,
                                       const EvalOptions& opts = {}, NodeId node = 0) {
  auto run = std::make_shared<OperatorRun>(kind, std::move(args), std::move(inputs),
                                           std::move(plan), opts);
  return execute_partitioned(node, std::move(run), preempt_signal);
}

inline ExecOutcome resume(const Checkpoint& cp, const std::atomic<bool>& preempt_signal) {
  return execute_partitioned(cp.node, cp.run, preempt_signal);
}

// --- partial-result fast paths ---

struct FastPathResult {
  Value value;
  double virtual_cost = 0;
  std::size_t rows_touched = 0;
};

// Supplies already-materialized values; null when a node's result is absent.
using ValueResolver = std::function<const Value*(NodeId)>;

namespace detail {

struct FastPathPlan {
  std::vector<NodeId> steps;        // outermost first, interaction excluded
  NodeId base = 0;                  // available value or a csv source
  bool base_is_csv = false;
};

// Predicate chains the row-wise pipeline can recompute per slice: column
// selects (possibly aliased) rooted at the filter's own input.
inline bool slice_computable_predicate(const OperatorDag& dag, NodeId pred,
                                       NodeId input) {
  pred = dag.resolve(pred);
  while (true) {
    const OperatorNode& n = dag.node(pred);
    if (n.kind == OpKind::Assign) {
      pred = dag.resolve(n.deps[0]);
      continue;
    }
    if (n.kind == OpKind::SelectColumn) return dag.resolve(n.deps[0]) == input;
    return false;
  }
}

inline std::optional<FastPathPlan> plan_row_pipeline(const OperatorDag& dag,
                                                     NodeId start,
                                                     const ValueResolver& available) {
  FastPathPlan plan;
  NodeId cur = dag.resolve(start);
  while (true) {
    if (const Value* v = available(cur)) {
      if (std::holds_alternative<Scalar>(*v)) return std::nullopt;
      plan.base = cur;
      break;
    }
    const OperatorNode& n = dag.node(cur);
    bool at_base = false;
    switch (n.kind) {
      case OpKind::ReadCsv:
        plan.base = cur;
        plan.base_is_csv = true;
        at_base = true;
        break;
      case OpKind::Assign:
      case OpKind::SelectColumn:
        plan.steps.push_back(cur);
        cur = dag.resolve(n.deps[0]);
        break;
      case OpKind::Fillna: {
        NodeId fill = dag.resolve(n.deps[1]);
        bool fill_ready = available(fill) != nullptr ||
                          dag.node(fill).kind == OpKind::Literal;
        if (!fill_ready) return std::nullopt;
        plan.steps.push_back(cur);
        cur = dag.resolve(n.deps[0]);
        break;
      }
      case OpKind::Filter:
        plan.steps.push_back(cur);
        cur = dag.resolve(n.deps[0]);
        break;
      default:
        return std::nullopt;
    }
    if (at_base) break;
  }

  // Validate filters now that the base is known. A materialized predicate is
  // indexed by the filter's input rows; slicing it by base coordinates is only
  // sound when no inner filter changed the row count in between.
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const OperatorNode& n = dag.node(plan.steps[i]);
    if (n.kind != OpKind::Filter) continue;
    if (slice_computable_predicate(dag, n.deps[1], dag.resolve(n.deps[0]))) continue;
    if (!available(dag.resolve(n.deps[1]))) return std::nullopt;
    for (std::size_t j = i + 1; j < plan.steps.size(); ++j)
      if (dag.node(plan.steps[j]).kind == OpKind::Filter) return std::nullopt;
  }
  return plan;
}

}  // namespace detail

// Answers head/tail by running its row-wise critical path over a growing
// prefix (suffix for tail) of the base rows, stopping as soon as K output rows
// exist. Returns nothing when an operator on the path is blocking or not
// row-wise; callers then fall back to full execution.
inline std::optional<FastPathResult> partial_result_fast_path(
    const OperatorDag& dag, NodeId interaction, const CostModel& model,
    const ValueResolver& available, const EvalOptions& opts = {}) {
  const OperatorNode& inter = dag.node(dag.resolve(interaction));
  if (inter.kind != OpKind::Head && inter.kind != OpKind::Tail) return std::nullopt;
  bool is_head = inter.kind == OpKind::Head;
  std::size_t k = static_cast<std::size_t>(std::get<double>(inter.args.at(0)));

  auto plan = detail::plan_row_pipeline(dag, inter.deps[0], available);
  if (!plan) return std::nullopt;

  std::unique_ptr<csv::CsvFile> file;
  const Value* base_value = nullptr;
  std::size_t base_rows = 0;
  if (plan->base_is_csv) {
    const OperatorNode& src = dag.node(plan->base);
    file = std::make_unique<csv::CsvFile>(
        opts.resolve(std::get<std::string>(src.args.at(0))));
    base_rows = file->row_count();
  } else {
    base_value = available(plan->base);
    base_rows = value_rows(*base_value);
  }

  FastPathResult out;
  // fixed overheads are paid once per operator on the path
  out.virtual_cost += model.fixed_seconds(inter.kind);
  if (plan->base_is_csv) out.virtual_cost += model.fixed_seconds(OpKind::ReadCsv);
  for (NodeId s : plan->steps) out.virtual_cost += model.fixed_seconds(dag.node(s).kind);

  auto transform_slice = [&](Value slice, std::size_t begin, std::size_t end) {
    // innermost step last in plan->steps
    for (auto it = plan->steps.rbegin(); it != plan->steps.rend(); ++it) {
      const OperatorNode& n = dag.node(*it);
      out.virtual_cost += model.per_row_seconds(n.kind) *
                          static_cast<double>(value_rows(slice));
      switch (n.kind) {
        case OpKind::Assign:
          break;
        case OpKind::SelectColumn:
          slice = eval_operator(n.kind, n.args, {&slice}, opts);
          break;
        case OpKind::Fillna: {
          NodeId fid = dag.resolve(n.deps[1]);
          Value fill = available(fid)
                           ? *available(fid)
                           : eval_operator(OpKind::Literal, dag.node(fid).args, {});
          slice = eval_operator(n.kind, n.args, {&slice, &fill}, opts);
          break;
        }
        case OpKind::Filter: {
          NodeId pid = dag.resolve(n.deps[1]);
          Value pred;
          if (detail::slice_computable_predicate(dag, pid, dag.resolve(n.deps[0]))) {
            // select (possibly aliased) over the same input slice
            NodeId sel = pid;
            while (dag.node(sel).kind == OpKind::Assign)
              sel = dag.resolve(dag.node(sel).deps[0]);
            pred = eval_operator(OpKind::SelectColumn, dag.node(sel).args, {&slice},
                                 opts);
          } else {
            pred = detail::slice_value(*available(pid), begin, end);
          }
          slice = eval_operator(n.kind, n.args, {&slice, &pred}, opts);
          break;
        }
        default:
          throw Error("unexpected fast-path step");
      }
    }
    return slice;
  };

  auto base_slice = [&](std::size_t begin, std::size_t end) -> Value {
    out.rows_touched += end - begin;
    if (plan->base_is_csv) {
      out.virtual_cost += model.per_row_seconds(OpKind::ReadCsv) *
                          static_cast<double>(end - begin);
      DataTable t = file->empty_table();
      file->append_rows(&t, begin, end);
      return t;
    }
    return detail::slice_value(*base_value, begin, end);
  };

  std::optional<Value> collected;
  std::size_t collected_rows = 0;
  std::size_t block = k == 0 ? 1 : k;
  std::size_t done = 0;  // rows consumed from the front (head) or back (tail)
  while (done < base_rows && collected_rows < k) {
    std::size_t take = std::min(block, base_rows - done);
    std::size_t begin = is_head ? done : base_rows - done - take;
    std::size_t end = begin + take;
    Value blk = transform_slice(base_slice(begin, end), begin, end);
    if (!collected) {
      collected = std::move(blk);
    } else if (is_head) {
      detail::append_value(*collected, blk);
    } else {
      detail::append_value(blk, *collected);
      collected = std::move(blk);
    }
    collected_rows = value_rows(*collected);
    done += take;
    block *= 2;
  }

  if (!collected) {
    // empty base: evaluate head/tail of an empty transform
    collected = transform_slice(base_slice(0, 0), 0, 0);
    collected_rows = 0;
  }
  std::size_t take = std::min(k, collected_rows);
  out.value = is_head ? detail::slice_value(*collected, 0, take)
                      : detail::slice_value(*collected, collected_rows - take,
                                            collected_rows);
  return out;
}

// Answers a `columns` interaction from schema alone: walks through operators
// that cannot change the column set and reads the header of the csv source
// (or the names of an already-materialized table). Data-dependent schema
// (drop_columns_below_threshold, groupby, select) disqualifies the path.
inline std::optional<FastPathResult> columns_fast_path(const OperatorDag& dag,
                                                       NodeId interaction,
                                                       const CostModel& model,
                                                       const ValueResolver& available,
                                                       const EvalOptions& opts = {}) {
  const OperatorNode& inter = dag.node(dag.resolve(interaction));
  if (inter.kind != OpKind::Columns) return std::nullopt;
  NodeId cur = dag.resolve(inter.deps[0]);
  while (true) {
    if (const Value* v = available(cur)) {
      const auto* t = std::get_if<DataTable>(v);
      if (!t) return std::nullopt;
      Series s;
      s.data = ColumnData::texts();
      for (const auto& name : t->names) s.data.push_text(name);
      return FastPathResult{s, model.fixed_seconds(OpKind::Columns), 0};
    }
    const OperatorNode& n = dag.node(cur);
    switch (n.kind) {
      case OpKind::ReadCsv: {
        csv::CsvFile file(opts.resolve(std::get<std::string>(n.args.at(0))));
        Series s;
        s.data = ColumnData::texts();
        for (const auto& name : file.header()) s.data.push_text(name);
        return FastPathResult{s, model.fixed_seconds(OpKind::Columns), 0};
      }
      case OpKind::Filter:
      case OpKind::Fillna:
      case OpKind::SortValues:
      case OpKind::Head:
      case OpKind::Tail:
      case OpKind::Assign:
        cur = dag.resolve(n.deps[0]);
        break;
      default:
        return std::nullopt;
    }
  }
}

}  // namespace opportune
