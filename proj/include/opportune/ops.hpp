#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace opportune {

enum class OpKind : std::uint8_t {
  ReadCsv,
  SelectColumn,
  Filter,
  Fillna,
  Mean,
  Sum,
  ValueCounts,
  Head,
  Tail,
  SortValues,
  GroupbyMean,
  DropColumnsBelowThreshold,
  Columns,
  Assign,
  Literal,
};

inline constexpr std::size_t kOpKindCount = 15;

inline constexpr std::array<const char*, kOpKindCount> kOpNames = {
    "read_csv",    "select_column", "filter",       "fillna",
    "mean",        "sum",           "value_counts", "head",
    "tail",        "sort_values",   "groupby_mean", "drop_columns_below_threshold",
    "columns",     "assign",        "literal",
};

inline const char* op_name(OpKind k) { return kOpNames[static_cast<std::size_t>(k)]; }

// Interactions are the operators whose results are displayed to the user.
inline bool is_interaction_kind(OpKind k) {
  switch (k) {
    case OpKind::Head:
    case OpKind::Tail:
    case OpKind::ValueCounts:
    case OpKind::Columns:
      return true;
    default:
      return false;
  }
}

// Method names callable in the DSL (read_csv is a free function, select/filter
// use bracket syntax, literal and assign are produced by lowering).
inline std::optional<OpKind> method_op(std::string_view name) {
  if (name == "fillna") return OpKind::Fillna;
  if (name == "mean") return OpKind::Mean;
  if (name == "sum") return OpKind::Sum;
  if (name == "value_counts") return OpKind::ValueCounts;
  if (name == "head") return OpKind::Head;
  if (name == "tail") return OpKind::Tail;
  if (name == "sort_values") return OpKind::SortValues;
  if (name == "groupby_mean") return OpKind::GroupbyMean;
  if (name == "drop_columns_below_threshold") return OpKind::DropColumnsBelowThreshold;
  if (name == "columns") return OpKind::Columns;
  return std::nullopt;
}

enum class CmpOp : std::uint8_t { Lt, Le, Gt, Ge, Eq, Ne };

inline const char* cmp_text(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
  }
  return "?";
}

// Literal operator arguments: numbers, strings, comparison operators.
using Arg = std::variant<double, std::string, CmpOp>;

// Shortest round-trip decimal form, shared by the canonical printer and reports.
inline std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string arg_text(const Arg& a) {
  if (const double* d = std::get_if<double>(&a)) return format_number(*d);
  if (const std::string* s = std::get_if<std::string>(&a)) return "'" + *s + "'";
  return cmp_text(std::get<CmpOp>(a));
}

// Canonical code for one operator given the canonical code of its inputs.
// Depends only on (kind, args, input code), never on node identity, so that
// structurally identical subtrees print identically.
inline std::string canonical_fragment(OpKind kind, const std::vector<Arg>& args,
                                      const std::vector<std::string>& inputs) {
  switch (kind) {
    case OpKind::ReadCsv:
      return std::string("read_csv(") + arg_text(args.at(0)) + ")";
    case OpKind::SelectColumn:
      return inputs.at(0) + "[" + arg_text(args.at(0)) + "]";
    case OpKind::Filter:
      return inputs.at(0) + "[" + inputs.at(1) + " " + arg_text(args.at(0)) +
             " " + arg_text(args.at(1)) + "]";
    case OpKind::Literal:
      return arg_text(args.at(0));
    case OpKind::Assign:
      return inputs.at(0);
    default: {
      std::string out = inputs.at(0) + "." + op_name(kind) + "(";
      bool first = true;
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        if (!first) out += ", ";
        out += inputs[i];
        first = false;
      }
      for (const Arg& a : args) {
        if (!first) out += ", ";
        out += arg_text(a);
        first = false;
      }
      return out + ")";
    }
  }
}

}  // namespace opportune
