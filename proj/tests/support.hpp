#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "opportune/opportune.hpp"

namespace testsupport {

using opportune::NodeId;
using Rng = std::mt19937_64;

inline std::size_t below(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}
inline double unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::string fixture(const std::string& name) {
  return std::string(FIXTURE_DIR) + "/" + name;
}

// Random mixed-type table: numeric columns a/b (b has nulls), low-cardinality
// text column cat (with nulls).
inline opportune::DataTable random_table(Rng& rng, std::size_t max_rows,
                                         double null_rate = 0.2) {
  using namespace opportune;
  std::size_t rows = below(rng, max_rows + 1);
  ColumnData a = ColumnData::floats();
  ColumnData b = ColumnData::floats();
  ColumnData cat = ColumnData::texts();
  static const char* kCats[3] = {"x", "y", "z"};
  for (std::size_t i = 0; i < rows; ++i) {
    a.push_num(std::floor(unit(rng) * 1000) / 10);
    if (unit(rng) < null_rate) b.push_null();
    else b.push_num(std::floor(unit(rng) * 200) - 100);
    if (unit(rng) < null_rate) cat.push_null();
    else cat.push_text(kCats[below(rng, 3)]);
  }
  DataTable t;
  t.add_column("a", std::move(a));
  t.add_column("b", std::move(b));
  t.add_column("cat", std::move(cat));
  t.rows = rows;
  return t;
}

inline void mark_executed(opportune::OperatorDag& dag, NodeId id) {
  using opportune::NodeState;
  dag.set_state(id, NodeState::Running);
  dag.set_state(id, NodeState::Executed);
}

// Synthetic DAG with random shape, random executed subsets and random costs
// (injected through observed_cost). Returns the ids in creation order.
inline std::vector<NodeId> random_dag(Rng& rng, opportune::OperatorDag& dag,
                                      std::size_t max_nodes,
                                      double executed_rate = 0.3) {
  using namespace opportune;
  std::size_t n = 1 + below(rng, max_nodes);
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<NodeId> deps;
    if (!ids.empty()) {
      std::size_t ndeps = below(rng, std::min<std::size_t>(3, ids.size()) + 1);
      std::vector<NodeId> pool = ids;
      std::shuffle(pool.begin(), pool.end(), rng);
      deps.assign(pool.begin(), pool.begin() + ndeps);
      std::sort(deps.begin(), deps.end());
      deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    }
    OpKind kind = deps.empty() ? OpKind::ReadCsv : OpKind::Fillna;
    NodeId id = dag.add_node(kind, {std::string("n") + std::to_string(i)}, deps);
    dag.node_mut(id).observed_cost = 0.5 + std::floor(unit(rng) * 100) / 10;
    ids.push_back(id);
  }
  // executed subsets are arbitrary: availability formulas must not assume
  // closure under dependencies
  for (NodeId id : ids)
    if (unit(rng) < executed_rate) mark_executed(dag, id);
  return ids;
}

// Brute-force reflexive backward reachability, ignoring availability.
inline std::vector<NodeId> oracle_ancestors(const opportune::OperatorDag& dag,
                                            NodeId root) {
  std::vector<NodeId> out;
  std::vector<bool> seen(dag.size(), false);
  std::vector<NodeId> frontier = {dag.resolve(root)};
  seen[frontier[0]] = true;
  while (!frontier.empty()) {
    NodeId cur = frontier.back();
    frontier.pop_back();
    out.push_back(cur);
    for (NodeId d : dag.node(cur).deps) {
      NodeId r = dag.resolve(d);
      if (!seen[r]) {
        seen[r] = true;
        frontier.push_back(r);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Definitional delivery cost: zero when available, otherwise the sum of
// estimates over the unavailable ancestor closure that stops at available
// nodes. Written against the definition, not the library traversal.
inline double oracle_delivery(const opportune::CostModel& model,
                              const opportune::OperatorDag& dag, NodeId id,
                              const opportune::NodeSet& cached,
                              const opportune::NodeSet& treat_missing = {}) {
  using namespace opportune;
  auto available = [&](NodeId n) {
    if (treat_missing.count(n)) return false;
    return dag.node(n).state == NodeState::Executed || cached.count(n) > 0;
  };
  NodeId root = dag.resolve(id);
  if (available(root)) return 0.0;
  std::map<NodeId, bool> needed;
  std::vector<NodeId> frontier = {root};
  needed[root] = true;
  while (!frontier.empty()) {
    NodeId cur = frontier.back();
    frontier.pop_back();
    for (NodeId d : dag.node(cur).deps) {
      NodeId r = dag.resolve(d);
      if (!available(r) && !needed.count(r)) {
        needed[r] = true;
        frontier.push_back(r);
      }
    }
  }
  double total = 0;
  for (const auto& [n, flag] : needed) total += estimate_cost(model, dag, n);
  return total;
}

// Forward closure (successors of a source, source included), by definition.
inline std::vector<NodeId> oracle_successors(const opportune::OperatorDag& dag,
                                             NodeId source) {
  std::vector<NodeId> out;
  std::vector<bool> in(dag.size(), false);
  in[source] = true;
  bool grew = true;
  while (grew) {
    grew = false;
    for (NodeId id : dag.live_ids()) {
      if (in[id]) continue;
      for (NodeId d : dag.node(id).deps) {
        if (in[dag.resolve(d)]) {
          in[id] = true;
          grew = true;
          break;
        }
      }
    }
  }
  for (NodeId id : dag.live_ids())
    if (in[id]) out.push_back(id);
  return out;
}

}  // namespace testsupport
