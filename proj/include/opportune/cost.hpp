#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "opportune/dag.hpp"

namespace opportune {

using NodeSet = std::unordered_set<NodeId>;

// Linear per-operator cost model in virtual time: fixed overhead plus a
// per-input-row rate. Rates are configurable; the defaults put csv ingestion
// far above everything else, matching interactive workloads where the initial
// load dominates.
struct CostModel {
  std::array<double, kOpKindCount> per_row_us{};  // virtual microseconds per input row
  std::array<double, kOpKindCount> fixed_ms{};    // virtual milliseconds per execution
  bool use_observed = true;
  double default_filter_selectivity = 0.5;

  static CostModel defaults() {
    CostModel m;
    auto set = [&](OpKind k, double us) { m.per_row_us[static_cast<std::size_t>(k)] = us; };
    m.fixed_ms.fill(1.0);
    set(OpKind::ReadCsv, 18.5);
    set(OpKind::SelectColumn, 0.5);
    set(OpKind::Filter, 0.5);
    set(OpKind::Fillna, 2.0);
    set(OpKind::Mean, 1.0);
    set(OpKind::Sum, 1.0);
    set(OpKind::ValueCounts, 3.0);
    set(OpKind::SortValues, 5.0);
    set(OpKind::GroupbyMean, 4.0);
    set(OpKind::DropColumnsBelowThreshold, 2.0);
    // head/tail/columns/assign/literal touch no meaningful row volume
    return m;
  }

  double per_row_seconds(OpKind k) const {
    return per_row_us[static_cast<std::size_t>(k)] * 1e-6;
  }
  double fixed_seconds(OpKind k) const {
    return fixed_ms[static_cast<std::size_t>(k)] * 1e-3;
  }
};

// Estimated output row count, used to size downstream inputs before anything
// has run. Observed values (recorded after execution) take precedence.
inline double estimate_output_rows(const CostModel& m, const OperatorDag& dag, NodeId id) {
  const OperatorNode& n = dag.node(dag.resolve(id));
  if (n.observed_rows) return static_cast<double>(*n.observed_rows);
  auto dep_rows = [&](std::size_t i) {
    return estimate_output_rows(m, dag, n.deps[i]);
  };
  switch (n.kind) {
    case OpKind::ReadCsv:
      return 0.0;  // unknown until the file is inspected
    case OpKind::Literal:
      return 1.0;
    case OpKind::Filter: {
      double sel = n.observed_selectivity.value_or(m.default_filter_selectivity);
      return dep_rows(0) * sel;
    }
    case OpKind::Head:
    case OpKind::Tail: {
      double k = n.args.empty() ? 5.0 : std::get<double>(n.args[0]);
      return std::min(dep_rows(0), k);
    }
    case OpKind::Mean:
    case OpKind::Sum:
    case OpKind::Columns:
      return 1.0;
    case OpKind::ValueCounts:
    case OpKind::GroupbyMean:
      return std::max(1.0, dep_rows(0) * 0.5);
    default:
      return n.deps.empty() ? 0.0 : dep_rows(0);
  }
}

inline double estimate_input_rows(const CostModel& m, const OperatorDag& dag, NodeId id) {
  const OperatorNode& n = dag.node(dag.resolve(id));
  if (n.kind == OpKind::ReadCsv)
    return n.observed_rows ? static_cast<double>(*n.observed_rows) : 0.0;
  if (n.deps.empty()) return 0.0;
  return estimate_output_rows(m, dag, n.deps[0]);
}

// Virtual duration of executing one operator.
inline double estimate_cost(const CostModel& m, const OperatorDag& dag, NodeId id) {
  const OperatorNode& n = dag.node(dag.resolve(id));
  if (m.use_observed && n.observed_cost) return *n.observed_cost;
  return m.fixed_seconds(n.kind) + m.per_row_seconds(n.kind) * estimate_input_rows(m, dag, id);
}

namespace detail {

// Unavailable ancestor closure: walks backwards from `id`, not descending
// through nodes whose results are already present (executed or cached).
// Returns ids in ascending order so sums are reproducible.
inline std::vector<NodeId> needed_set(const OperatorDag& dag, NodeId id,
                                      const NodeSet& cached,
                                      const NodeSet* treat_missing) {
  auto available = [&](NodeId n) {
    if (treat_missing && treat_missing->count(n)) return false;
    return dag.node(n).state == NodeState::Executed || cached.count(n) > 0;
  };
  NodeId root = dag.resolve(id);
  if (available(root)) return {};
  std::vector<bool> seen(dag.size(), false);
  std::vector<NodeId> stack = {root};
  seen[root] = true;
  std::vector<NodeId> out;
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    out.push_back(cur);
    for (NodeId d : dag.node(cur).deps) {
      NodeId r = dag.resolve(d);
      if (!seen[r] && !available(r)) {
        seen[r] = true;
        stack.push_back(r);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Cost of producing `id`'s result right now: zero when the result is already
// available, otherwise the summed estimates of the node and every unavailable
// ancestor it transitively needs (counted once each).
inline double delivery_cost(const CostModel& m, const OperatorDag& dag, NodeId id,
                            const NodeSet& cached) {
  double total = 0;
  for (NodeId n : detail::needed_set(dag, id, cached, nullptr))
    total += estimate_cost(m, dag, n);
  return total;
}

// Cost of rebuilding a cached entry if it were discarded, with every other
// cached result still present.
inline double recompute_cost(const CostModel& m, const OperatorDag& dag, NodeId id,
                             const NodeSet& cached) {
  NodeSet missing = {dag.resolve(id)};
  double total = 0;
  for (NodeId n : detail::needed_set(dag, id, cached, &missing))
    total += estimate_cost(m, dag, n);
  return total;
}

}  // namespace opportune
