#pragma once

#include <algorithm>
#include <atomic>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "opportune/behavior.hpp"
#include "opportune/cache.hpp"
#include "opportune/cost.hpp"
#include "opportune/csv.hpp"
#include "opportune/dag.hpp"
#include "opportune/engine.hpp"
#include "opportune/errors.hpp"

namespace opportune {

struct SchedulerConfig {
  std::size_t partition_k = 5;
  bool transitive_successors = true;  // utility sums over all successors, not just children
  bool speculate = true;
  EvalOptions eval;
};

struct SchedMetrics {
  double synchronous_wait = 0;   // time the user spent blocked on results
  double background_work = 0;    // virtual cost executed during think time
  double wasted_work = 0;        // in-flight range progress discarded by preemption
  double max_range_cost = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t preemptions = 0;
  std::uint64_t fast_paths = 0;
};

struct InteractionSummary {
  NodeId node = 0;
  std::string name;
  double arrival = 0;
  double latency = 0;
  double path_remaining_cost = 0;  // unexecuted critical-path estimate at arrival
  std::size_t path_len = 0;
  bool fast_path = false;
};

// Opportunistic scheduler under a virtual clock. Interactions execute their
// critical path immediately, preempting whatever runs in the background;
// think-time windows drain background work picked by utility. One background
// operator is in flight at a time, advancing one partition range per step so
// a preemption can only ever discard the range in progress.
class Scheduler {
public:
  Scheduler(OperatorDag& dag, CacheStore& cache, CostModel model,
            ThinkTimeModel& think, InteractionProbabilityProvider prob = {},
            SchedulerConfig config = {})
      : dag_(dag),
        cache_(cache),
        model_(std::move(model)),
        think_(think),
        prob_(std::move(prob)),
        config_(std::move(config)) {}

  double clock() const { return clock_; }
  const SchedMetrics& metrics() const { return metrics_; }
  const CostModel& cost_model() const { return model_; }
  const SchedulerConfig& config() const { return config_; }
  InteractionProbabilityProvider& probability_provider() { return prob_; }

  // Call after lowering (and CSE) so sources get sized and new filters can
  // trigger speculative materialization of their inputs.
  void register_new_nodes(const std::vector<NodeId>& ids) {
    for (NodeId raw : ids) {
      NodeId id = dag_.resolve(raw);
      OperatorNode& n = dag_.node_mut(id);
      if (n.kind == OpKind::ReadCsv && !n.observed_rows) {
        n.observed_rows = csv::peek_row_count(
            config_.eval.resolve(std::get<std::string>(n.args.at(0))));
      }
      if (config_.speculate && n.kind == OpKind::Filter && n.live())
        maybe_speculate(id);
    }
  }

  // Benefit of executing a runnable source now: the probability-weighted
  // delivery cost it removes from itself and its downstream operators.
  double utility(NodeId source) const {
    NodeId id = dag_.resolve(source);
    std::vector<NodeId> sources = source_operators(dag_);
    if (std::find(sources.begin(), sources.end(), id) == sources.end())
      throw NotASource(dag_.node(id).name);
    NodeSet cached = cache_.cached_ids();
    double total = 0;
    for (NodeId j : influenced_set(id))
      total += delivery_cost(model_, dag_, j, cached) * prob_.probability(dag_, j);
    return total;
  }

  std::optional<NodeId> pick_next() const {
    std::optional<NodeId> best;
    double best_utility = 0;
    for (NodeId s : source_operators(dag_)) {
      if (failed_.count(s)) continue;
      double u = utility(s);
      if (!best || u > best_utility) {  // ties keep the smallest id
        best = s;
        best_utility = u;
      }
    }
    return best;
  }

  enum class Speculation { Materialize, Skip };

  // Materialize a filter's input ahead of need, but only when the predicted
  // think gap is long enough to hide the materialization.
  Speculation maybe_speculate(NodeId filter_node) {
    NodeId id = dag_.resolve(filter_node);
    const OperatorNode& n = dag_.node(id);
    if (n.kind != OpKind::Filter) throw Error("speculation applies to filters");
    NodeId input = dag_.resolve(n.deps[0]);
    if (cache_.contains(input)) return Speculation::Skip;
    double materialization = delivery_cost(model_, dag_, input, cache_.cached_ids());
    if (think_.predict() <= materialization) return Speculation::Skip;
    if (std::find(speculative_.begin(), speculative_.end(), input) ==
        speculative_.end())
      speculative_.push_back(input);
    return Speculation::Materialize;
  }

  // Executes the interaction's critical path now. Any background range in
  // flight is abandoned (that partial progress is the only loss); executed
  // and cached ancestors are skipped with a recency touch; head/tail/columns
  // take their partial-result routes when the path shape allows.
  Value on_interaction(NodeId raw, InteractionSummary* summary = nullptr) {
    NodeId id = dag_.resolve(raw);
    const OperatorNode& inter = dag_.node(id);
    if (!inter.is_interaction)
      throw Error("not an interaction: " + inter.name);

    double arrival = clock_;
    preempt_background();

    std::vector<NodeId> path = critical_path(dag_, id);
    NodeSet pin(path.begin(), path.end());
    double remaining = 0;
    for (NodeId n : path)
      if (!available(n)) remaining += remaining_cost(n);

    InteractionSummary rec;
    rec.node = id;
    rec.name = inter.name;
    rec.arrival = arrival;
    rec.path_remaining_cost = remaining;
    rec.path_len = path.size();

    Value result;
    try {
      result = deliver(id, path, pin, &rec);
    } catch (const Error& e) {
      std::string chain;
      for (NodeId n : path) {
        if (!chain.empty()) chain += " -> ";
        chain += dag_.node(n).name;
      }
      throw Error(std::string(e.what()) + " [critical path: " + chain + "]");
    }

    rec.latency = clock_ - arrival;
    metrics_.synchronous_wait += rec.latency;
    if (summary) *summary = rec;
    return result;
  }

  // Drains background work for one think window. Work advances one range at
  // a time; a range that does not fit the window stays in progress and either
  // continues in the next window or is discarded by a preemption.
  void run_think_time(double seconds) {
    double window_end = clock_ + seconds;
    while (window_end - clock_ > kEps) {
      if (!slot_) {
        choose_background();
        if (!slot_) break;  // nothing runnable: stay idle
      }
      double remaining = slot_->step_cost() - slot_->range_elapsed;
      if (clock_ + remaining <= window_end + kEps) {
        clock_ += remaining;
        metrics_.background_work += slot_->step_cost();
        commit_background_step();
      } else {
        slot_->range_elapsed += window_end - clock_;
        clock_ = window_end;
      }
    }
    if (window_end > clock_) clock_ = window_end;
  }

  bool background_idle() const { return !slot_ && !paused_; }

  struct BackgroundStatus {
    NodeId node = 0;
    std::size_t ranges_done = 0;
    std::size_t range_count = 0;
    double range_elapsed = 0;
    bool paused = false;
  };

  std::optional<BackgroundStatus> background_status() const {
    const auto& s = slot_ ? slot_ : paused_;
    if (!s) return std::nullopt;
    return BackgroundStatus{s->node, s->steps_done, s->step_costs.size(),
                            s->range_elapsed, !slot_.has_value()};
  }

  bool fully_executed() const {
    for (NodeId id : dag_.live_ids())
      if (dag_.node(id).state != NodeState::Executed) return false;
    return true;
  }

  SchedMetrics& metrics_mut() { return metrics_; }

  const Value* cached_value(NodeId id) const { return cache_.peek(dag_.resolve(id)); }

private:
  static constexpr double kEps = 1e-9;

  struct Slot {
    NodeId node = 0;
    std::shared_ptr<OperatorRun> run;
    std::vector<double> step_costs;  // aligned with plan ranges (>= 1 entry)
    std::size_t steps_done = 0;
    double range_elapsed = 0;
    double total_cost = 0;

    double step_cost() const { return step_costs.at(steps_done); }
    bool last_step() const { return steps_done + 1 >= step_costs.size(); }
  };

  bool available(NodeId id) const {
    NodeId r = dag_.resolve(id);
    return dag_.node(r).state == NodeState::Executed || cache_.contains(r);
  }

  // Cost still unpaid for a node, honoring a paused partial run.
  double remaining_cost(NodeId id) const {
    if (paused_ && paused_->node == id) {
      double rest = 0;
      for (std::size_t i = paused_->steps_done; i < paused_->step_costs.size(); ++i)
        rest += paused_->step_costs[i];
      return rest;
    }
    return estimate_cost(model_, dag_, id);
  }

  std::vector<NodeId> influenced_set(NodeId source) const {
    std::vector<NodeId> live = dag_.live_ids();
    std::vector<NodeId> out = {source};
    if (!config_.transitive_successors) {
      for (NodeId id : live) {
        const OperatorNode& n = dag_.node(id);
        for (NodeId d : n.deps)
          if (dag_.resolve(d) == source) {
            out.push_back(id);
            break;
          }
      }
      return out;
    }
    std::unordered_set<NodeId> seen = {source};
    bool grew = true;
    while (grew) {
      grew = false;
      for (NodeId id : live) {
        if (seen.count(id)) continue;
        for (NodeId d : dag_.node(id).deps) {
          if (seen.count(dag_.resolve(d))) {
            seen.insert(id);
            out.push_back(id);
            grew = true;
            break;
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<Value> gather_inputs(NodeId id, bool touch) {
    const OperatorNode& n = dag_.node(id);
    std::vector<Value> inputs;
    inputs.reserve(n.deps.size());
    for (NodeId d : n.deps) {
      NodeId r = dag_.resolve(d);
      const Value* v = cache_.peek(r);
      if (!v) throw Error("input value missing for " + dag_.node(r).name);
      if (touch) cache_.touch(r);
      inputs.push_back(*v);
    }
    return inputs;
  }

  Slot make_slot(NodeId id) {
    const OperatorNode& n = dag_.node(id);
    std::vector<Value> inputs = gather_inputs(id, /*touch=*/true);
    std::size_t rows = 0;
    if (n.kind == OpKind::ReadCsv) {
      rows = n.observed_rows.value_or(0);
    } else if (!inputs.empty()) {
      const Value& v = inputs[0];
      rows = std::holds_alternative<Scalar>(v) ? 0 : value_rows(v);
    }
    PartitionPlan plan;
    if (is_row_partitionable(n.kind)) {
      double est = estimate_cost(model_, dag_, id);
      plan = make_partition_plan(rows, config_.partition_k, est, think_);
    } else {
      plan = single_range_plan(rows, config_.partition_k);
    }

    Slot slot;
    slot.node = id;
    slot.run = std::make_shared<OperatorRun>(n.kind, n.args, std::move(inputs),
                                             plan, config_.eval);
    double fixed = model_.fixed_seconds(n.kind);
    double rate = model_.per_row_seconds(n.kind);
    if (plan.ranges.empty()) {
      slot.step_costs = {fixed};
    } else {
      for (const RowRange& r : plan.ranges)
        slot.step_costs.push_back(rate * static_cast<double>(r.size()));
      slot.step_costs[0] += fixed;
    }
    for (double c : slot.step_costs) {
      slot.total_cost += c;
      metrics_.max_range_cost = std::max(metrics_.max_range_cost, c);
    }
    return slot;
  }

  void choose_background() {
    if (paused_) {
      if (dag_.node(paused_->node).state != NodeState::Preempted) {
        paused_.reset();  // superseded: the path executed it synchronously
      } else {
        slot_ = std::move(paused_);
        paused_.reset();
        dag_.set_state(slot_->node, NodeState::Running);
        return;
      }
    }
    while (!speculative_.empty()) {
      NodeId target = dag_.resolve(speculative_.front());
      if (!dag_.node(target).live() || available(target) || failed_.count(target)) {
        speculative_.pop_front();
        continue;
      }
      // run the target's chain bottom-up
      for (NodeId n : critical_path(dag_, target)) {
        if (available(n) || failed_.count(n)) continue;
        if (dag_.node(n).state != NodeState::Pending) continue;
        bool ready = true;
        for (NodeId d : dag_.node(n).deps)
          if (!available(dag_.resolve(d))) ready = false;
        if (ready && start_background(n)) return;
        break;  // chain blocked; fall through to utility order
      }
      break;
    }
    if (!slot_) {
      if (std::optional<NodeId> next = pick_next()) start_background(*next);
    }
  }

  bool start_background(NodeId id) {
    try {
      Slot slot = make_slot(id);
      dag_.set_state(id, NodeState::Running);
      slot_ = std::move(slot);
      return true;
    } catch (const Error&) {
      failed_.insert(id);  // sync execution will surface the error if needed
      return false;
    }
  }

  void commit_background_step() {
    slot_->range_elapsed = 0;
    if (!slot_->run->done()) {
      auto partial = slot_->run->compute_range(slot_->run->completed());
      slot_->run->commit(std::move(partial));
    }
    ++slot_->steps_done;
    if (slot_->steps_done >= slot_->step_costs.size()) finalize_background();
  }

  void finalize_background() {
    NodeId id = slot_->node;
    try {
      Value result = slot_->run->finish();
      record_execution(id, slot_->total_cost, result);
      cache_insert(id, std::move(result), {});
      dag_.set_state(id, NodeState::Executed);
    } catch (const UncacheableResult&) {
      // cannot hold the result: undo and leave it for synchronous execution
      dag_.node_mut(id).state = NodeState::Pending;
      failed_.insert(id);
    } catch (const Error&) {
      dag_.node_mut(id).state = NodeState::Pending;
      failed_.insert(id);
    }
    slot_.reset();
  }

  void preempt_background() {
    if (!slot_) return;
    ++metrics_.preemptions;
    if (slot_->range_elapsed > 0) {
      metrics_.wasted_work += slot_->range_elapsed;
      slot_->range_elapsed = 0;
    }
    dag_.set_state(slot_->node, NodeState::Preempted);
    paused_ = std::move(slot_);
    slot_.reset();
  }

  void cache_insert(NodeId id, Value value, const NodeSet& pinned) {
    auto events = cache_.insert_with_gc(id, std::move(value), model_, dag_, pinned);
    metrics_.evictions += events.size();
    for (const GcEvent& e : events) gc_log_.push_back(e);
  }

  void record_execution(NodeId id, double cost, const Value& result) {
    OperatorNode& n = dag_.node_mut(id);
    n.observed_cost = cost;
    n.observed_rows = std::holds_alternative<Scalar>(result) ? 1 : value_rows(result);
    if (n.kind == OpKind::Filter) {
      NodeId input = dag_.resolve(n.deps[0]);
      double in_rows = static_cast<double>(
          dag_.node(input).observed_rows.value_or(0));
      if (in_rows > 0)
        n.observed_selectivity = static_cast<double>(*n.observed_rows) / in_rows;
    }
  }

  // Executes one path node synchronously, resuming a paused partial run when
  // the preempted node happens to sit on this critical path.
  void execute_node_sync(NodeId id, const NodeSet& pin) {
    std::shared_ptr<OperatorRun> run;
    double cost = 0;
    double total_cost = 0;
    if (paused_ && paused_->node == id) {
      run = paused_->run;
      for (std::size_t i = paused_->steps_done; i < paused_->step_costs.size(); ++i)
        cost += paused_->step_costs[i];
      total_cost = paused_->total_cost;
      dag_.set_state(id, NodeState::Running);
      paused_.reset();
    } else {
      Slot slot = make_slot(id);
      run = slot.run;
      cost = slot.total_cost;
      total_cost = slot.total_cost;
      dag_.set_state(id, NodeState::Running);
    }
    while (!run->done()) run->commit(run->compute_range(run->completed()));
    Value result = run->finish();
    clock_ += cost;
    record_execution(id, total_cost, result);
    cache_insert(id, std::move(result), pin);
    dag_.set_state(id, NodeState::Executed);
  }

  Value deliver(NodeId id, const std::vector<NodeId>& path, const NodeSet& pin,
                InteractionSummary* rec) {
    const OperatorNode& inter = dag_.node(id);

    if (cache_.contains(id)) {
      // re-display of a known result: only the delivery overhead is paid
      clock_ += model_.fixed_seconds(inter.kind);
      for (NodeId n : path)
        if (cache_.contains(n)) {
          cache_.touch(n);
          ++metrics_.cache_hits;
        }
      return *cache_.peek(id);
    }
    if (dag_.node(id).state == NodeState::Executed)
      dag_.reset_to_pending(id);  // result was lost; recompute below

    ValueResolver resolver = [this](NodeId n) { return cache_.peek(dag_.resolve(n)); };
    std::optional<FastPathResult> fast =
        partial_result_fast_path(dag_, id, model_, resolver, config_.eval);
    if (!fast) fast = columns_fast_path(dag_, id, model_, resolver, config_.eval);
    if (fast) {
      clock_ += fast->virtual_cost;
      for (NodeId n : path)
        if (cache_.contains(n)) {
          cache_.touch(n);
          ++metrics_.cache_hits;
        }
      dag_.set_state(id, NodeState::Running);
      record_execution(id, fast->virtual_cost, fast->value);
      Value result = fast->value;
      cache_insert(id, std::move(fast->value), {id});
      dag_.set_state(id, NodeState::Executed);
      ++metrics_.fast_paths;
      rec->fast_path = true;
      return result;
    }

    for (NodeId n : path) {
      if (available(n)) {
        if (cache_.contains(n)) {
          cache_.touch(n);
          ++metrics_.cache_hits;
        }
        continue;
      }
      execute_node_sync(n, pin);
      ++metrics_.cache_misses;
    }
    const Value* v = cache_.peek(id);
    if (!v) throw Error("interaction result missing after execution");
    return *v;
  }

  OperatorDag& dag_;
  CacheStore& cache_;
  CostModel model_;
  ThinkTimeModel& think_;
  InteractionProbabilityProvider prob_;
  SchedulerConfig config_;

  double clock_ = 0;
  SchedMetrics metrics_;
  std::optional<Slot> slot_;
  std::optional<Slot> paused_;
  std::deque<NodeId> speculative_;
  std::unordered_set<NodeId> failed_;
  std::vector<GcEvent> gc_log_;

public:
  const std::vector<GcEvent>& gc_log() const { return gc_log_; }
};

}  // namespace opportune
