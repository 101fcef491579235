#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "opportune/dsl.hpp"
#include "opportune/errors.hpp"
#include "opportune/ops.hpp"

namespace opportune {

using NodeId = std::uint32_t;

enum class NodeState : std::uint8_t { Pending, Running, Preempted, Executed };

inline const char* state_name(NodeState s) {
  switch (s) {
    case NodeState::Pending: return "pending";
    case NodeState::Running: return "running";
    case NodeState::Preempted: return "preempted";
    case NodeState::Executed: return "executed";
  }
  return "?";
}

struct OperatorNode {
  NodeId id = 0;
  std::string name;  // SSA: kind name + global per-kind counter
  OpKind kind = OpKind::Literal;
  std::vector<Arg> args;
  std::vector<NodeId> deps;  // always smaller ids; the graph is acyclic by construction
  std::string canonical_code;
  NodeState state = NodeState::Pending;
  bool is_interaction = false;
  std::optional<double> observed_cost;        // virtual seconds, set after execution
  std::optional<double> observed_selectivity; // filters only
  std::optional<std::size_t> observed_rows;   // output rows once known
  std::optional<NodeId> merged_into;          // set when absorbed by CSE

  bool live() const { return !merged_into.has_value(); }
};

// Single-writer operator graph. Lowering, state transitions and CSE require
// exclusive access; the read-only analyses below may run on a snapshot.
class OperatorDag {
public:
  const OperatorNode& node(NodeId id) const {
    if (id >= nodes_.size()) throw UnknownNode(id);
    return nodes_[id];
  }
  OperatorNode& node_mut(NodeId id) {
    if (id >= nodes_.size()) throw UnknownNode(id);
    return nodes_[id];
  }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  // Follows merge links to the surviving node.
  NodeId resolve(NodeId id) const {
    if (id >= nodes_.size()) throw UnknownNode(id);
    while (nodes_[id].merged_into) id = *nodes_[id].merged_into;
    return id;
  }

  NodeId add_node(OpKind kind, std::vector<Arg> args, std::vector<NodeId> deps) {
    OperatorNode n;
    n.id = static_cast<NodeId>(nodes_.size());
    for (NodeId d : deps) {
      if (d >= n.id) throw UnknownNode(d);
    }
    n.kind = kind;
    n.args = std::move(args);
    n.deps = std::move(deps);
    n.is_interaction = is_interaction_kind(kind);
    n.name = std::string(op_name(kind)) + "_" +
             std::to_string(kind_counters_[static_cast<std::size_t>(kind)]++);
    std::vector<std::string> input_code;
    input_code.reserve(n.deps.size());
    for (NodeId d : n.deps) input_code.push_back(nodes_[d].canonical_code);
    n.canonical_code = canonical_fragment(kind, n.args, input_code);
    if (n.is_interaction) interaction_log_.push_back(n.id);
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  void set_state(NodeId id, NodeState next) {
    OperatorNode& n = node_mut(id);
    bool ok = (n.state == NodeState::Pending && next == NodeState::Running) ||
              (n.state == NodeState::Running &&
               (next == NodeState::Preempted || next == NodeState::Executed)) ||
              (n.state == NodeState::Preempted && next == NodeState::Running);
    if (!ok)
      throw Error(std::string("illegal state transition ") + state_name(n.state) +
                  " -> " + state_name(next) + " on " + n.name);
    n.state = next;
  }

  // Uncaching a materialized result puts its node back in the runnable pool:
  // the work must be redone before the value can be served again.
  void reset_to_pending(NodeId id) { node_mut(id).state = NodeState::Pending; }

  void bind(const std::string& name, NodeId id) {
    node(id);
    bindings_[name] = id;
  }
  std::optional<NodeId> lookup(const std::string& name) const {
    auto it = bindings_.find(name);
    if (it == bindings_.end()) return std::nullopt;
    return resolve(it->second);
  }
  const std::map<std::string, NodeId>& bindings() const { return bindings_; }

  const std::vector<NodeId>& interaction_log() const { return interaction_log_; }

  std::vector<NodeId> live_ids() const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.live()) out.push_back(n.id);
    return out;
  }

  // --- internal hooks used by CSE ---
  void rewrite_edges(const std::map<NodeId, NodeId>& merges) {
    auto chase = [&](NodeId id) {
      while (true) {
        auto it = merges.find(id);
        if (it == merges.end()) return id;
        id = it->second;
      }
    };
    for (auto& n : nodes_) {
      if (!n.live()) continue;
      for (NodeId& d : n.deps) d = chase(d);
    }
    for (auto& [name, id] : bindings_) id = chase(id);
    for (NodeId& id : interaction_log_) id = chase(id);
  }

private:
  std::vector<OperatorNode> nodes_;
  std::map<std::string, NodeId> bindings_;
  std::vector<NodeId> interaction_log_;
  std::array<std::uint32_t, kOpKindCount> kind_counters_{};
};

// Lowers parsed statements into the graph. Every operator occurrence becomes a
// fresh node; plain `y = x` aliases become identity nodes. Returns the ids of
// newly added nodes in creation order.
inline std::vector<NodeId> lower_to_dag(const std::vector<Statement>& statements,
                                        OperatorDag& dag) {
  std::vector<NodeId> added;

  auto lower_expr = [&](auto&& self, const Expr& e) -> NodeId {
    if (e.tag == Expr::Tag::Var) {
      std::optional<NodeId> id = dag.lookup(e.var);
      if (!id) throw UnboundVariable(e.var);
      return *id;
    }
    std::vector<NodeId> deps;
    deps.reserve(e.children.size());
    for (const auto& c : e.children) deps.push_back(self(self, *c));
    NodeId id = dag.add_node(e.op, e.args, std::move(deps));
    added.push_back(id);
    return id;
  };

  for (const Statement& st : statements) {
    NodeId id;
    if (st.expr->tag == Expr::Tag::Var) {
      std::optional<NodeId> ref = dag.lookup(st.expr->var);
      if (!ref) throw UnboundVariable(st.expr->var);
      if (!st.target) continue;  // bare reference, nothing to add
      id = dag.add_node(OpKind::Assign, {}, {*ref});
      added.push_back(id);
    } else {
      id = lower_expr(lower_expr, *st.expr);
    }
    if (st.target) dag.bind(*st.target, id);
  }
  return added;
}

// Ancestor closure of `id` (itself included), topologically ordered. Node ids
// are creation-ordered and edges only point backwards, so ascending id order
// is a topological order.
inline std::vector<NodeId> critical_path(const OperatorDag& dag, NodeId id) {
  NodeId root = dag.resolve(id);
  std::vector<bool> seen(dag.size(), false);
  std::vector<NodeId> stack = {root};
  seen[root] = true;
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    for (NodeId d : dag.node(cur).deps) {
      NodeId r = dag.resolve(d);
      if (!seen[r]) {
        seen[r] = true;
        stack.push_back(r);
      }
    }
  }
  std::vector<NodeId> out;
  for (NodeId i = 0; i < dag.size(); ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

// Merges structurally identical operators (same kind, same literal args, same
// post-merge inputs — equivalently, identical canonical code). The smallest id
// survives; edges, bindings and the interaction log are rewritten. A survivor
// is executed if any merged member was. Idempotent.
inline std::map<NodeId, NodeId> eliminate_common_subexpressions(OperatorDag& dag) {
  std::map<NodeId, NodeId> merges;
  std::map<std::string, NodeId> by_key;

  auto chase = [&](NodeId id) {
    while (true) {
      auto it = merges.find(id);
      if (it == merges.end()) return id;
      id = it->second;
    }
  };

  // Walk in creation order (sources outward): by the time a node is visited,
  // its inputs are already canonicalized, so one pass suffices.
  for (NodeId id = 0; id < dag.size(); ++id) {
    const OperatorNode& n = dag.node(id);
    if (!n.live()) continue;
    std::string key = std::to_string(static_cast<int>(n.kind)) + "|";
    for (const Arg& a : n.args) key += arg_text(a) + "|";
    for (NodeId d : n.deps) key += std::to_string(chase(d)) + ",";
    auto [it, inserted] = by_key.try_emplace(key, id);
    if (inserted) continue;
    NodeId survivor = it->second;
    merges[id] = survivor;
    OperatorNode& absorbed = dag.node_mut(id);
    OperatorNode& kept = dag.node_mut(survivor);
    absorbed.merged_into = survivor;
    if (absorbed.state == NodeState::Executed) kept.state = NodeState::Executed;
    if (!kept.observed_cost) kept.observed_cost = absorbed.observed_cost;
    if (!kept.observed_rows) kept.observed_rows = absorbed.observed_rows;
    if (!kept.observed_selectivity)
      kept.observed_selectivity = absorbed.observed_selectivity;
  }
  dag.rewrite_edges(merges);
  return merges;
}

// Pending operators whose inputs are all executed: the schedulable frontier.
inline std::vector<NodeId> source_operators(const OperatorDag& dag) {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < dag.size(); ++id) {
    const OperatorNode& n = dag.node(id);
    if (!n.live() || n.state != NodeState::Pending) continue;
    bool ready = true;
    for (NodeId d : n.deps) {
      if (dag.node(dag.resolve(d)).state != NodeState::Executed) {
        ready = false;
        break;
      }
    }
    if (ready) out.push_back(id);
  }
  return out;
}

inline std::string to_graphviz(const OperatorDag& dag) {
  std::string out = "digraph operators {\n  rankdir=BT;\n";
  for (NodeId id = 0; id < dag.size(); ++id) {
    const OperatorNode& n = dag.node(id);
    if (!n.live()) continue;
    out += "  " + n.name + " [label=\"" + n.name + "\\n" + op_name(n.kind) +
           "\\n" + state_name(n.state) + "\"";
    if (n.is_interaction) out += ", shape=oval, style=filled, fillcolor=palegreen";
    else out += ", shape=box";
    out += "];\n";
  }
  for (NodeId id = 0; id < dag.size(); ++id) {
    const OperatorNode& n = dag.node(id);
    if (!n.live()) continue;
    for (NodeId d : n.deps)
      out += "  " + n.name + " -> " + dag.node(dag.resolve(d)).name + ";\n";
  }
  return out + "}\n";
}

}  // namespace opportune
