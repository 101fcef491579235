#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "opportune/cost.hpp"
#include "opportune/dag.hpp"
#include "opportune/errors.hpp"
#include "opportune/value.hpp"

namespace opportune {

struct CacheEntry {
  NodeId node = 0;
  Value value;
  std::size_t bytes = 0;        // m_i
  std::uint64_t last_reuse = 0; // t_i
};

struct GcEvent {
  NodeId node = 0;
  double score = 0;
  std::size_t bytes = 0;
};

// Budgeted store of materialized operator results. Reuse recency follows an
// LRU-style counter: every reuse bumps a global counter T and stamps the
// entry, so reuse probability is 1/(T+1-t_i). Eviction discards the entry
// with the lowest score p_i * m_i / k_i, where k_i is the cost of rebuilding
// the entry against whatever else is still cached. Collection triggers when
// occupancy crosses a fraction of the budget (80% by default).
class CacheStore {
public:
  explicit CacheStore(std::size_t budget_bytes, double gc_threshold = 0.8,
                      bool evict_highest = false)
      : budget_(budget_bytes),
        gc_threshold_(gc_threshold),
        evict_highest_(evict_highest) {}

  std::size_t budget_bytes() const { return budget_; }
  double gc_threshold() const { return gc_threshold_; }
  std::size_t total_bytes() const { return total_; }
  std::uint64_t reuse_counter() const { return counter_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<NodeId, CacheEntry>& entries() const { return entries_; }

  bool contains(NodeId id) const { return entries_.count(id) > 0; }

  const Value* peek(NodeId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second.value;
  }

  void touch(NodeId id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotCached(id);
    it->second.last_reuse = ++counter_;
  }

  const Value& get_and_touch(NodeId id) {
    touch(id);
    return entries_.at(id).value;
  }

  double reuse_probability(NodeId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotCached(id);
    return 1.0 / static_cast<double>(counter_ + 1 - it->second.last_reuse);
  }

  double eviction_score(NodeId id, const CostModel& model,
                        const OperatorDag& dag) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotCached(id);
    double k = recompute_cost(model, dag, id, cached_ids());
    return reuse_probability(id) * static_cast<double>(it->second.bytes) / k;
  }

  NodeSet cached_ids() const {
    NodeSet out;
    for (const auto& [id, entry] : entries_) out.insert(id);
    return out;
  }

  // Stores a freshly materialized result, then collects down to the trigger
  // fraction of the budget. The new entry and anything pinned by an in-flight
  // critical path are never victims; recompute costs are refreshed against the
  // shrinking residual cache before each eviction. Evicted nodes return to
  // Pending: their results must be recomputed before they can be served again.
  std::vector<GcEvent> insert_with_gc(NodeId id, Value value, const CostModel& model,
                                      OperatorDag& dag, const NodeSet& pinned = {}) {
    std::size_t bytes = value_size_bytes(value);
    if (bytes > budget_) throw UncacheableResult(bytes, budget_);
    auto it = entries_.find(id);
    if (it != entries_.end()) total_ -= it->second.bytes;
    entries_[id] = CacheEntry{id, std::move(value), bytes, counter_};
    total_ += bytes;

    std::vector<GcEvent> events;
    double trigger = gc_threshold_ * static_cast<double>(budget_);
    while (static_cast<double>(total_) > trigger) {
      std::optional<NodeId> victim;
      double victim_score = 0;
      for (const auto& [nid, entry] : entries_) {  // ascending id: stable ties
        if (nid == id || pinned.count(nid)) continue;
        double score = eviction_score(nid, model, dag);
        bool better = !victim.has_value() ||
                      (evict_highest_ ? score > victim_score : score < victim_score);
        if (better) {
          victim = nid;
          victim_score = score;
        }
      }
      if (!victim) {
        if (total_ > budget_)
          throw BudgetExhausted("pinned entries occupy " + std::to_string(total_) +
                                " of " + std::to_string(budget_) + " bytes");
        break;
      }
      events.push_back({*victim, victim_score, entries_.at(*victim).bytes});
      total_ -= entries_.at(*victim).bytes;
      entries_.erase(*victim);
      dag.reset_to_pending(*victim);
    }
    return events;
  }

  // Test/inspection helper: drop one entry outside a GC cycle.
  void erase(NodeId id, OperatorDag& dag) {
    auto it = entries_.find(id);
    if (it == entries_.end()) return;
    total_ -= it->second.bytes;
    entries_.erase(it);
    dag.reset_to_pending(id);
  }

private:
  std::map<NodeId, CacheEntry> entries_;
  std::uint64_t counter_ = 0;  // T
  std::size_t total_ = 0;
  std::size_t budget_;
  double gc_threshold_;
  bool evict_highest_;
};

}  // namespace opportune
