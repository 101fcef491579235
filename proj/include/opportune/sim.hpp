#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "opportune/behavior.hpp"
#include "opportune/cache.hpp"
#include "opportune/csv.hpp"
#include "opportune/dag.hpp"
#include "opportune/dsl.hpp"
#include "opportune/engine.hpp"
#include "opportune/errors.hpp"
#include "opportune/sched.hpp"

namespace opportune {

enum class ClockMode { Virtual, Wall };

struct Config {
  std::string base_dir;  // data paths in cells resolve against this
  std::size_t budget_bytes = 256ull << 20;
  double gc_threshold = 0.8;
  bool evict_highest = false;
  CostModel cost = CostModel::defaults();
  std::size_t partition_k = 5;
  std::uint64_t seed = 0;
  std::vector<double> prior = ThinkTimeModel::default_prior();
  bool transitive_successors = true;
  bool speculate = true;
  ClockMode clock = ClockMode::Virtual;
};

struct TraceEvent {
  double think = 0;   // gap before this cell is submitted
  std::string cell;
};

struct SessionTrace {
  std::string data_path;
  std::uint64_t seed = 0;
  std::vector<TraceEvent> events;
};

enum class Mode { Opportunistic, Eager };

inline const char* mode_name(Mode m) {
  return m == Mode::Opportunistic ? "opportunistic" : "eager";
}

struct CellRecord {
  std::size_t index = 0;
  std::string source;
  double sync_wait = 0;
  std::vector<std::string> new_nodes;
  std::string error;  // empty when the cell succeeded
};

struct InteractionRecord {
  std::size_t ordinal = 0;
  std::string node;
  double arrival = 0;
  double latency = 0;
  double wait_at_delivery = 0;  // cumulative synchronous wait when delivered
  double path_remaining_cost = 0;
  std::size_t path_len = 0;
  bool fast_path = false;
  std::string result_preview;
};

struct ReportTotals {
  double synchronous_wait = 0;
  double background_work = 0;
  double wasted_work = 0;
  double total_elapsed = 0;
  double first_output_wait = 0;
  double max_range_cost = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t preemptions = 0;
  std::uint64_t fast_paths = 0;
  std::uint64_t interactions = 0;
};

struct Report {
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<CellRecord> cells;
  std::vector<InteractionRecord> interactions;
  std::vector<Value> interaction_values;  // in-memory only, for comparisons
  ReportTotals totals;
};

// --- trace (de)serialization: one JSON object per line, header first ---

inline SessionTrace parse_trace(std::istream& in) {
  SessionTrace trace;
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TraceParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (header) {
      if (!j.contains("data"))
        throw TraceParseError("header line must carry a \"data\" path");
      trace.data_path = j["data"].get<std::string>();
      trace.seed = j.value("seed", std::uint64_t{0});
      header = false;
      continue;
    }
    TraceEvent ev;
    ev.think = j.value("think", 0.0);
    if (ev.think < 0)
      throw TraceParseError("line " + std::to_string(line_no) + ": negative think time");
    if (!j.contains("cell"))
      throw TraceParseError("line " + std::to_string(line_no) + ": missing \"cell\"");
    ev.cell = j["cell"].get<std::string>();
    parse_cell(ev.cell);  // cells must parse; surface errors at load time
    trace.events.push_back(std::move(ev));
  }
  if (header) throw TraceParseError("empty trace: missing header line");
  return trace;
}

inline SessionTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceParseError("cannot open trace file: " + path);
  try {
    return parse_trace(in);
  } catch (const TraceParseError& e) {
    throw TraceParseError(path + ": " + e.what());
  }
}

inline std::string serialize_trace(const SessionTrace& trace) {
  std::string out;
  nlohmann::json header;
  header["data"] = trace.data_path;
  header["seed"] = trace.seed;
  out += header.dump() + "\n";
  for (const TraceEvent& ev : trace.events) {
    nlohmann::json j;
    j["think"] = ev.think;
    j["cell"] = ev.cell;
    out += j.dump() + "\n";
  }
  return out;
}

// --- replay ---

namespace detail {

inline double eager_node_cost(const CostModel& model, const OperatorDag& dag,
                              NodeId id, const std::map<NodeId, Value>& values) {
  const OperatorNode& n = dag.node(id);
  double rows = 0;
  if (n.kind == OpKind::ReadCsv) {
    rows = static_cast<double>(n.observed_rows.value_or(0));
  } else if (!n.deps.empty()) {
    const Value& v = values.at(dag.resolve(n.deps[0]));
    rows = std::holds_alternative<Scalar>(v) ? 0 : static_cast<double>(value_rows(v));
  }
  return model.fixed_seconds(n.kind) + model.per_row_seconds(n.kind) * rows;
}

}  // namespace detail

// Replays a session under a virtual clock. Opportunistic mode defers
// everything except interaction critical paths and drains background work
// during the think gaps; eager mode executes every statement synchronously at
// submission, which is the baseline both for results and for latency.
inline Report run_trace(const SessionTrace& trace, const Config& config, Mode mode) {
  Report rep;
  rep.mode = mode_name(mode);
  rep.seed = trace.seed;

  if (mode == Mode::Opportunistic) {
    OperatorDag dag;
    CacheStore cache(config.budget_bytes, config.gc_threshold, config.evict_highest);
    ThinkTimeModel think(config.prior);
    SchedulerConfig scfg;
    scfg.partition_k = config.partition_k;
    scfg.transitive_successors = config.transitive_successors;
    scfg.speculate = config.speculate;
    scfg.eval.base_dir = config.base_dir;
    Scheduler sched(dag, cache, config.cost, think, {}, scfg);

    for (std::size_t i = 0; i < trace.events.size(); ++i) {
      const TraceEvent& ev = trace.events[i];
      if (ev.think > 0) {
        sched.run_think_time(ev.think);
        think.observe(ev.think);
      }
      CellRecord cell;
      cell.index = i;
      cell.source = ev.cell;
      double cell_start = sched.clock();
      try {
        std::vector<Statement> stmts = parse_cell(ev.cell);
        std::vector<NodeId> added = lower_to_dag(stmts, dag);
        eliminate_common_subexpressions(dag);
        std::vector<NodeId> resolved;
        resolved.reserve(added.size());
        for (NodeId id : added) {
          resolved.push_back(dag.resolve(id));
          cell.new_nodes.push_back(dag.node(id).name);
        }
        sched.register_new_nodes(resolved);
        for (std::size_t s = 0; s < added.size(); ++s) {
          if (!is_interaction_kind(dag.node(added[s]).kind)) continue;
          InteractionSummary summary;
          Value result = sched.on_interaction(dag.resolve(added[s]), &summary);
          InteractionRecord ir;
          ir.ordinal = rep.interactions.size();
          ir.node = summary.name;
          ir.arrival = summary.arrival;
          ir.latency = summary.latency;
          ir.path_remaining_cost = summary.path_remaining_cost;
          ir.path_len = summary.path_len;
          ir.fast_path = summary.fast_path;
          ir.result_preview = value_preview(result);
          ir.wait_at_delivery = sched.metrics().synchronous_wait;
          if (rep.interactions.empty())
            rep.totals.first_output_wait = ir.wait_at_delivery;
          rep.interactions.push_back(ir);
          rep.interaction_values.push_back(std::move(result));
        }
      } catch (const UncacheableResult&) {
        throw;
      } catch (const BudgetExhausted&) {
        throw;
      } catch (const TraceParseError&) {
        throw;
      } catch (const DataLoadError&) {
        throw;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      cell.sync_wait = sched.clock() - cell_start;
      rep.cells.push_back(std::move(cell));
    }

    const SchedMetrics& m = sched.metrics();
    rep.totals.synchronous_wait = m.synchronous_wait;
    rep.totals.background_work = m.background_work;
    rep.totals.wasted_work = m.wasted_work;
    rep.totals.max_range_cost = m.max_range_cost;
    rep.totals.cache_hits = m.cache_hits;
    rep.totals.cache_misses = m.cache_misses;
    rep.totals.evictions = m.evictions;
    rep.totals.preemptions = m.preemptions;
    rep.totals.fast_paths = m.fast_paths;
    rep.totals.total_elapsed = sched.clock();
    rep.totals.interactions = rep.interactions.size();
    return rep;
  }

  // eager baseline: every statement runs synchronously, no reuse across
  // duplicated work, no background execution
  OperatorDag dag;
  std::map<NodeId, Value> values;
  EvalOptions opts{config.base_dir};
  double clock = 0;
  double sync_total = 0;

  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& ev = trace.events[i];
    clock += ev.think;
    CellRecord cell;
    cell.index = i;
    cell.source = ev.cell;
    double cell_arrival = clock;
    double sync_at_cell_start = sync_total;
    try {
      std::vector<Statement> stmts = parse_cell(ev.cell);
      std::vector<NodeId> added = lower_to_dag(stmts, dag);
      for (NodeId id : added) {
        OperatorNode& n = dag.node_mut(id);
        cell.new_nodes.push_back(n.name);
        if (n.kind == OpKind::ReadCsv)
          n.observed_rows =
              csv::peek_row_count(opts.resolve(std::get<std::string>(n.args.at(0))));
        std::vector<const Value*> inputs;
        for (NodeId d : n.deps) inputs.push_back(&values.at(dag.resolve(d)));
        Value result = eval_operator(n.kind, n.args, inputs, opts);
        double cost = detail::eager_node_cost(config.cost, dag, id, values);
        clock += cost;
        sync_total += cost;
        dag.set_state(id, NodeState::Running);
        dag.set_state(id, NodeState::Executed);
        if (n.is_interaction) {
          InteractionRecord ir;
          ir.ordinal = rep.interactions.size();
          ir.node = n.name;
          ir.arrival = cell_arrival;
          ir.latency = clock - cell_arrival;
          ir.wait_at_delivery = sync_total;
          ir.path_len = critical_path(dag, id).size();
          ir.result_preview = value_preview(result);
          if (rep.interactions.empty())
            rep.totals.first_output_wait = ir.wait_at_delivery;
          rep.interactions.push_back(ir);
          rep.interaction_values.push_back(result);
        }
        values[id] = std::move(result);
      }
    } catch (const TraceParseError&) {
      throw;
    } catch (const DataLoadError&) {
      throw;
    } catch (const Error& e) {
      cell.error = e.what();
    }
    cell.sync_wait = sync_total - sync_at_cell_start;
    rep.cells.push_back(std::move(cell));
  }
  rep.totals.synchronous_wait = sync_total;
  rep.totals.total_elapsed = clock;
  rep.totals.interactions = rep.interactions.size();
  return rep;
}

struct CompareOutcome {
  Report opportunistic;
  Report eager;
  std::vector<double> wait_deltas;  // eager wait_at_delivery - opportunistic
  bool results_match = true;
};

// Runs both modes and confirms every interaction produced identical results.
// A mismatch is a transparency violation and therefore fatal.
inline CompareOutcome compare_modes(const SessionTrace& trace, const Config& config) {
  CompareOutcome out;
  out.opportunistic = run_trace(trace, config, Mode::Opportunistic);
  out.eager = run_trace(trace, config, Mode::Eager);
  if (out.opportunistic.interaction_values.size() !=
      out.eager.interaction_values.size())
    throw ResultMismatch("interaction counts differ: " +
                         std::to_string(out.opportunistic.interaction_values.size()) +
                         " vs " + std::to_string(out.eager.interaction_values.size()));
  for (std::size_t i = 0; i < out.eager.interaction_values.size(); ++i) {
    if (!value_equal(out.opportunistic.interaction_values[i],
                     out.eager.interaction_values[i]))
      throw ResultMismatch("interaction #" + std::to_string(i) + " (" +
                           out.eager.interactions[i].node + ") differs");
    out.wait_deltas.push_back(out.eager.interactions[i].wait_at_delivery -
                              out.opportunistic.interactions[i].wait_at_delivery);
  }
  return out;
}

// --- workload generation ---

namespace detail {

class SplitRng {
public:
  explicit SplitRng(std::uint64_t seed) : rng_(seed) {}
  std::uint64_t next() { return rng_(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
  std::mt19937_64 rng_;
};

}  // namespace detail

// Deterministic synthetic dataset: numeric columns with varying null density,
// a low-cardinality text column, and a mostly-null note column.
inline void write_synthetic_csv(const std::string& path, std::size_t rows,
                                std::uint64_t seed) {
  detail::SplitRng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::ofstream out(path);
  if (!out) throw DataLoadError("cannot write " + path);
  out << "c0,c1,c2,cat,note\n";
  static const char* kCats[4] = {"alpha", "beta", "gamma", "delta"};
  for (std::size_t r = 0; r < rows; ++r) {
    out << format_number(std::floor(rng.uniform(0, 100) * 100) / 100) << ',';
    if (rng.unit() < 0.3) out << ',';
    else out << format_number(std::floor(rng.uniform(-50, 50) * 10) / 10) << ',';
    out << format_number(static_cast<double>(rng.below(1000))) << ',';
    out << kCats[rng.below(4)] << ',';
    if (rng.unit() >= 0.6) out << "note" << rng.below(10);
    out << '\n';
  }
}

// Seeded session generator. Sessions are either "tidy" (every operator feeds
// the next interaction) or "messy" (unrelated work is interleaved before
// interactions), in roughly equal shares; think gaps are drawn from the
// think-time model by inverse-CDF sampling.
inline SessionTrace generate_random_trace(std::uint64_t seed, std::size_t n_cells,
                                          const ThinkTimeModel& think,
                                          const std::string& data_path = "synth.csv") {
  detail::SplitRng rng(seed);
  SessionTrace trace;
  trace.seed = seed;
  trace.data_path = data_path;
  if (n_cells == 0) return trace;

  bool messy = rng.unit() < 0.5;
  auto gap = [&]() { return std::floor(think.quantile(rng.unit()) * 100) / 100; };

  trace.events.push_back({0.0, "data = read_csv('" + data_path + "')"});
  std::string chain = "data";
  int var_counter = 0;
  int unrelated_counter = 0;

  auto chain_transform = [&]() {
    std::string next = "v" + std::to_string(var_counter++);
    std::string cell;
    switch (rng.below(4)) {
      case 0:
        cell = next + " = " + chain + ".fillna(" +
               format_number(std::floor(rng.uniform(0, 9) * 10) / 10) + ")";
        break;
      case 1:
        cell = next + " = " + chain + "[" + chain + "['c0'] > " +
               format_number(std::floor(rng.uniform(5, 90))) + "]";
        break;
      case 2:
        cell = next + " = " + chain + ".sort_values('c0')";
        break;
      default:
        cell = next + " = " + chain + ".drop_columns_below_threshold(0.25)";
        break;
    }
    chain = next;
    return cell;
  };

  auto unrelated_op = [&]() {
    std::string name = "u" + std::to_string(unrelated_counter++);
    switch (rng.below(3)) {
      case 0: return name + " = data.sort_values('c2')";
      case 1: return name + " = data['c2'].mean()";
      default: return name + " = data.fillna(1).sum()";
    }
  };

  auto interaction = [&]() -> std::string {
    switch (rng.below(4)) {
      case 0: return chain + ".head()";
      case 1: return chain + ".tail(" + std::to_string(3 + rng.below(5)) + ")";
      case 2: return chain + "['cat'].value_counts()";
      default: return chain + ".columns()";
    }
  };

  bool seeded_unrelated = false;
  while (trace.events.size() < n_cells) {
    std::string cell;
    if (messy && !seeded_unrelated) {
      cell = unrelated_op();
      seeded_unrelated = true;
    } else {
      switch (rng.below(3)) {
        case 0: cell = chain_transform(); break;
        case 1: cell = messy && rng.unit() < 0.5 ? unrelated_op() : chain_transform(); break;
        default: cell = interaction(); break;
      }
    }
    trace.events.push_back({gap(), std::move(cell)});
  }
  return trace;
}

// Per-kind frequency heuristic for interaction prediction: across sessions,
// how often did this operator kind show up before some interaction.
inline std::unordered_map<OpKind, double> kind_interaction_frequencies(
    const std::vector<SessionTrace>& traces) {
  std::unordered_map<OpKind, std::size_t> appears, preceded;
  for (const SessionTrace& t : traces) {
    OperatorDag dag;
    for (const TraceEvent& ev : t.events) lower_to_dag(parse_cell(ev.cell), dag);
    std::map<OpKind, NodeId> first_seen;
    for (NodeId id = 0; id < dag.size(); ++id) {
      OpKind k = dag.node(id).kind;
      if (!first_seen.count(k)) first_seen[k] = id;
    }
    for (const auto& [kind, first] : first_seen) {
      ++appears[kind];
      for (NodeId inter : dag.interaction_log()) {
        if (inter > first) {
          ++preceded[kind];
          break;
        }
      }
    }
  }
  std::unordered_map<OpKind, double> out;
  for (const auto& [kind, count] : appears)
    out[kind] = static_cast<double>(preceded[kind]) / static_cast<double>(count);
  return out;
}

// --- report serialization ---

inline nlohmann::json report_to_json(const Report& rep) {
  nlohmann::json j;
  j["mode"] = rep.mode;
  j["seed"] = rep.seed;
  j["cells"] = nlohmann::json::array();
  for (const CellRecord& c : rep.cells) {
    nlohmann::json cj;
    cj["index"] = c.index;
    cj["source"] = c.source;
    cj["sync_wait"] = c.sync_wait;
    cj["new_nodes"] = c.new_nodes;
    if (!c.error.empty()) cj["error"] = c.error;
    j["cells"].push_back(cj);
  }
  j["interactions"] = nlohmann::json::array();
  for (const InteractionRecord& r : rep.interactions) {
    nlohmann::json rj;
    rj["ordinal"] = r.ordinal;
    rj["node"] = r.node;
    rj["arrival"] = r.arrival;
    rj["latency"] = r.latency;
    rj["wait_at_delivery"] = r.wait_at_delivery;
    rj["path_remaining_cost"] = r.path_remaining_cost;
    rj["path_len"] = r.path_len;
    rj["fast_path"] = r.fast_path;
    rj["result"] = r.result_preview;
    j["interactions"].push_back(rj);
  }
  nlohmann::json t;
  t["synchronous_wait"] = rep.totals.synchronous_wait;
  t["background_work"] = rep.totals.background_work;
  t["wasted_work"] = rep.totals.wasted_work;
  t["total_elapsed"] = rep.totals.total_elapsed;
  t["first_output_wait"] = rep.totals.first_output_wait;
  t["max_range_cost"] = rep.totals.max_range_cost;
  t["cache_hits"] = rep.totals.cache_hits;
  t["cache_misses"] = rep.totals.cache_misses;
  t["evictions"] = rep.totals.evictions;
  t["preemptions"] = rep.totals.preemptions;
  t["fast_paths"] = rep.totals.fast_paths;
  t["interactions"] = rep.totals.interactions;
  j["totals"] = t;
  return j;
}

inline std::string report_to_csv(const Report& rep) {
  std::string out =
      "ordinal,node,arrival,latency,wait_at_delivery,path_len,fast_path,result\n";
  for (const InteractionRecord& r : rep.interactions) {
    out += std::to_string(r.ordinal) + "," + r.node + "," + format_number(r.arrival) +
           "," + format_number(r.latency) + "," + format_number(r.wait_at_delivery) +
           "," + std::to_string(r.path_len) + "," + (r.fast_path ? "1" : "0") + "," +
           csv::quote_field(r.result_preview) + "\n";
  }
  return out;
}

}  // namespace opportune
