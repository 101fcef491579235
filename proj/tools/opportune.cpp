// Command-line front end: trace replay (`run`), static DAG inspection
// (`analyze`), an interactive session (`repl`), and workload generation
// (`gen-trace`). Exit codes: 0 ok, 1 internal error, 2 usage or I/O error,
// 3 cache budget violation, 4 result mismatch between modes.

#include <poll.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "opportune/opportune.hpp"

namespace fs = std::filesystem;
using namespace opportune;

namespace {

int log_level() {
  const char* env = std::getenv("OPPORTUNE_LOG");
  return env ? std::atoi(env) : 0;
}

void logv(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << "[opportune] " << msg << "\n";
}

std::optional<OpKind> kind_by_name(const std::string& name) {
  for (std::size_t i = 0; i < kOpKindCount; ++i)
    if (name == kOpNames[i]) return static_cast<OpKind>(i);
  return std::nullopt;
}

// --coeff read_csv=18500 style overrides
void apply_overrides(CostModel& model, const std::vector<std::string>& coeffs,
                     const std::vector<std::string>& fixed) {
  auto parse = [](const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("expected kind=value, got: " + spec);
    auto kind = kind_by_name(spec.substr(0, eq));
    if (!kind) throw CLI::ValidationError("unknown operator kind: " + spec);
    return std::make_pair(*kind, std::stod(spec.substr(eq + 1)));
  };
  for (const auto& s : coeffs) {
    auto [k, v] = parse(s);
    model.per_row_us[static_cast<std::size_t>(k)] = v;
  }
  for (const auto& s : fixed) {
    auto [k, v] = parse(s);
    model.fixed_ms[static_cast<std::size_t>(k)] = v;
  }
}

struct CommonFlags {
  std::size_t mem_budget = 256ull << 20;
  double gc_threshold = 0.8;
  bool evict_highest = false;
  std::size_t partition_k = 5;
  std::uint64_t seed = 0;
  std::string prior_path;
  std::string base_dir;
  std::vector<std::string> coeffs;
  std::vector<std::string> fixed_ms;
  bool no_speculate = false;

  void attach(CLI::App* app) {
    app->add_option("--mem-budget", mem_budget, "cache budget in bytes");
    app->add_option("--gc-threshold", gc_threshold, "gc trigger fraction (0,1]")
        ->check(CLI::Range(0.0001, 1.0));
    app->add_flag("--evict-highest", evict_highest,
                  "evict the highest score instead of the lowest");
    app->add_option("--partition-k", partition_k, "partial-result row count")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
    app->add_option("--seed", seed, "seed recorded in reports");
    app->add_option("--prior", prior_path, "think-time prior sample file");
    app->add_option("--base-dir", base_dir,
                    "directory data paths resolve against (default: trace dir)");
    app->add_option("--coeff", coeffs, "per-row cost override, kind=us_per_row")
        ->take_all();
    app->add_option("--fixed-ms", fixed_ms, "fixed cost override, kind=ms")
        ->take_all();
    app->add_flag("--no-speculate", no_speculate,
                  "disable speculative materialization of filter inputs");
  }

  Config to_config(const std::string& trace_path) const {
    Config cfg;
    cfg.budget_bytes = mem_budget;
    cfg.gc_threshold = gc_threshold;
    cfg.evict_highest = evict_highest;
    cfg.partition_k = partition_k;
    cfg.seed = seed;
    cfg.speculate = !no_speculate;
    apply_overrides(cfg.cost, coeffs, fixed_ms);
    if (!prior_path.empty()) {
      std::ifstream in(prior_path);
      if (!in) throw DataLoadError("cannot open prior sample file: " + prior_path);
      std::vector<double> samples;
      std::string line;
      while (std::getline(in, line))
        if (!line.empty()) samples.push_back(std::stod(line));
      if (samples.empty()) throw DataLoadError("prior sample file is empty: " + prior_path);
      cfg.prior = std::move(samples);
    }
    if (!base_dir.empty())
      cfg.base_dir = base_dir;
    else if (!trace_path.empty())
      cfg.base_dir = fs::path(trace_path).parent_path().string();
    return cfg;
  }
};

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataLoadError("cannot write " + path.string());
  out << contents;
}

void print_latency_table(const Report& rep) {
  std::printf("%-4s %-16s %12s %12s %14s %s\n", "#", "interaction", "arrival",
              "latency", "wait@delivery", "fast");
  for (const InteractionRecord& r : rep.interactions)
    std::printf("%-4zu %-16s %12.4f %12.4f %14.4f %s\n", r.ordinal, r.node.c_str(),
                r.arrival, r.latency, r.wait_at_delivery, r.fast_path ? "yes" : "");
  std::printf("totals: sync_wait=%.4fs background=%.4fs wasted=%.4fs "
              "hits=%llu misses=%llu evictions=%llu preemptions=%llu\n",
              rep.totals.synchronous_wait, rep.totals.background_work,
              rep.totals.wasted_work,
              static_cast<unsigned long long>(rep.totals.cache_hits),
              static_cast<unsigned long long>(rep.totals.cache_misses),
              static_cast<unsigned long long>(rep.totals.evictions),
              static_cast<unsigned long long>(rep.totals.preemptions));
}

int cmd_run(const std::string& trace_path, const CommonFlags& flags, bool compare,
            const std::string& mode_str, const std::string& out_dir) {
  SessionTrace trace = load_trace(trace_path);
  Config cfg = flags.to_config(trace_path);
  fs::create_directories(out_dir);

  if (compare) {
    CompareOutcome out = compare_modes(trace, cfg);
    write_file(fs::path(out_dir) / "report.json", report_to_json(out.opportunistic).dump(2) + "\n");
    write_file(fs::path(out_dir) / "report.csv", report_to_csv(out.opportunistic));
    write_file(fs::path(out_dir) / "eager_report.json", report_to_json(out.eager).dump(2) + "\n");
    write_file(fs::path(out_dir) / "eager_report.csv", report_to_csv(out.eager));
    std::printf("== opportunistic ==\n");
    print_latency_table(out.opportunistic);
    std::printf("== eager ==\n");
    print_latency_table(out.eager);
    std::printf("== per-interaction wait deltas (eager - opportunistic) ==\n");
    for (std::size_t i = 0; i < out.wait_deltas.size(); ++i)
      std::printf("  #%zu %-16s %+.4fs\n", i, out.eager.interactions[i].node.c_str(),
                  out.wait_deltas[i]);
    double saved = out.eager.totals.synchronous_wait - out.opportunistic.totals.synchronous_wait;
    double pct = out.eager.totals.synchronous_wait > 0
                     ? 100.0 * saved / out.eager.totals.synchronous_wait
                     : 0.0;
    std::printf("synchronous wait saved: %.4fs (%.1f%%), results identical: %s\n",
                saved, pct, out.results_match ? "yes" : "NO");
    return 0;
  }

  Mode mode = mode_str == "eager" ? Mode::Eager : Mode::Opportunistic;
  Report rep = run_trace(trace, cfg, mode);
  write_file(fs::path(out_dir) / "report.json", report_to_json(rep).dump(2) + "\n");
  write_file(fs::path(out_dir) / "report.csv", report_to_csv(rep));
  print_latency_table(rep);
  return 0;
}

int cmd_analyze(const std::string& trace_path, const std::string& dot_path) {
  SessionTrace trace = load_trace(trace_path);
  OperatorDag dag;
  for (const TraceEvent& ev : trace.events)
    lower_to_dag(parse_cell(ev.cell), dag);
  auto merges = eliminate_common_subexpressions(dag);

  std::printf("%-5s %-22s %-28s %-11s %-5s %s\n", "id", "name", "kind", "deps",
              "inter", "code");
  for (NodeId id = 0; id < dag.size(); ++id) {
    const OperatorNode& n = dag.node(id);
    if (!n.live()) continue;
    std::string deps;
    for (NodeId d : n.deps) {
      if (!deps.empty()) deps += ",";
      deps += std::to_string(dag.resolve(d));
    }
    std::printf("%-5u %-22s %-28s %-11s %-5s %s\n", n.id, n.name.c_str(),
                op_name(n.kind), deps.c_str(), n.is_interaction ? "yes" : "",
                n.canonical_code.c_str());
  }

  std::printf("\ncse merges (absorbed -> survivor):\n");
  if (merges.empty()) std::printf("  none\n");
  for (const auto& [absorbed, survivor] : merges)
    std::printf("  %s -> %s\n", dag.node(absorbed).name.c_str(),
                dag.node(survivor).name.c_str());

  std::printf("\ninteraction critical paths:\n");
  for (NodeId inter : dag.interaction_log()) {
    NodeId r = dag.resolve(inter);
    std::string path;
    for (NodeId n : critical_path(dag, r)) {
      if (!path.empty()) path += " -> ";
      path += dag.node(n).name;
    }
    std::printf("  %s: %s\n", dag.node(r).name.c_str(), path.c_str());
  }

  if (!dot_path.empty()) {
    write_file(dot_path, to_graphviz(dag));
    std::printf("\nwrote %s\n", dot_path.c_str());
  }
  return 0;
}

int cmd_gen_trace(std::uint64_t seed, std::size_t cells, const std::string& out_path,
                  const std::string& data_name, std::size_t rows) {
  ThinkTimeModel think;
  SessionTrace trace = generate_random_trace(seed, cells, think, data_name);
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  fs::path data_file = out.parent_path() / data_name;
  if (!fs::exists(data_file)) {
    write_synthetic_csv(data_file.string(), rows, seed);
    std::printf("wrote %s (%zu rows)\n", data_file.string().c_str(), rows);
  }
  write_file(out, serialize_trace(trace));
  std::printf("wrote %s (%zu cells, seed %llu)\n", out_path.c_str(),
              trace.events.size(), static_cast<unsigned long long>(seed));
  return 0;
}

// --- repl ---

void print_cache_table(const CacheStore& cache, const CostModel& model,
                       const OperatorDag& dag) {
  std::printf("%-5s %-22s %12s %8s %12s %12s\n", "id", "name", "m(bytes)", "t",
              "k(s)", "score");
  for (const auto& [id, entry] : cache.entries()) {
    double k = recompute_cost(model, dag, id, cache.cached_ids());
    std::printf("%-5u %-22s %12zu %8llu %12.4f %12.4f\n", id,
                dag.node(id).name.c_str(), entry.bytes,
                static_cast<unsigned long long>(entry.last_reuse), k,
                cache.eviction_score(id, model, dag));
  }
  std::printf("total %zu / budget %zu bytes, T=%llu\n", cache.total_bytes(),
              cache.budget_bytes(),
              static_cast<unsigned long long>(cache.reuse_counter()));
}

void print_metrics(const SchedMetrics& m) {
  std::printf("sync_wait=%.4fs background=%.4fs wasted=%.4fs hits=%llu misses=%llu "
              "evictions=%llu preemptions=%llu fast_paths=%llu\n",
              m.synchronous_wait, m.background_work, m.wasted_work,
              static_cast<unsigned long long>(m.cache_hits),
              static_cast<unsigned long long>(m.cache_misses),
              static_cast<unsigned long long>(m.evictions),
              static_cast<unsigned long long>(m.preemptions),
              static_cast<unsigned long long>(m.fast_paths));
}

// Wall-clock background worker: computes ranges on value snapshots and hands
// results back over a queue; the repl thread owns the dag and cache and
// applies every mutation itself.
struct WallWorker {
  struct Job {
    std::uint64_t epoch = 0;
    NodeId node = 0;
    std::shared_ptr<OperatorRun> run;
  };
  struct Done {
    std::uint64_t epoch = 0;
    NodeId node = 0;
    std::shared_ptr<OperatorRun> run;
    bool completed = false;
    std::string error;
  };

  std::mutex mu;
  std::condition_variable cv;
  std::optional<Job> pending;
  std::deque<Done> results;
  std::atomic<bool> preempt{false};
  std::atomic<bool> quit{false};
  std::thread thread;

  void start() {
    thread = std::thread([this] { loop(); });
  }
  void stop() {
    {
      std::lock_guard<std::mutex> lock(mu);
      quit = true;
    }
    cv.notify_all();
    if (thread.joinable()) thread.join();
  }
  void submit(Job job) {
    {
      std::lock_guard<std::mutex> lock(mu);
      pending = std::move(job);
    }
    cv.notify_all();
  }
  std::optional<Done> poll_result() {
    std::lock_guard<std::mutex> lock(mu);
    if (results.empty()) return std::nullopt;
    Done d = std::move(results.front());
    results.pop_front();
    return d;
  }

  void loop() {
    for (;;) {
      Job job;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [this] { return pending.has_value() || quit; });
        if (quit) return;
        job = std::move(*pending);
        pending.reset();
      }
      Done done;
      done.epoch = job.epoch;
      done.node = job.node;
      done.run = job.run;
      try {
        ExecOutcome outcome = execute_partitioned(job.node, job.run, preempt);
        done.completed = !outcome.preempted();
      } catch (const Error& e) {
        done.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        results.push_back(std::move(done));
      }
    }
  }
};

int cmd_repl(const std::string& data_path, const CommonFlags& flags,
             const std::string& clock_mode) {
  Config cfg = flags.to_config("");
  if (cfg.base_dir.empty()) cfg.base_dir = ".";
  OperatorDag dag;
  CacheStore cache(cfg.budget_bytes, cfg.gc_threshold, cfg.evict_highest);
  ThinkTimeModel think(cfg.prior);
  SchedulerConfig scfg;
  scfg.partition_k = cfg.partition_k;
  scfg.speculate = cfg.speculate;
  scfg.eval.base_dir = cfg.base_dir;
  Scheduler sched(dag, cache, cfg.cost, think, {}, scfg);

  bool wall = clock_mode == "wall";
  WallWorker worker;
  std::uint64_t epoch = 0;
  std::optional<WallWorker::Job> inflight;
  if (wall) worker.start();

  auto apply_done = [&](const WallWorker::Done& d) {
    if (d.epoch != epoch) return;  // stale result from before a preemption
    inflight.reset();
    if (!d.error.empty()) {
      logv(1, "background " + dag.node(d.node).name + " failed: " + d.error);
      dag.node_mut(d.node).state = NodeState::Pending;
      return;
    }
    if (!d.completed) {
      dag.set_state(d.node, NodeState::Preempted);
      return;
    }
    try {
      Value result = d.run->finish();
      cache.insert_with_gc(d.node, std::move(result), cfg.cost, dag);
      dag.set_state(d.node, NodeState::Executed);
      logv(1, "background finished " + dag.node(d.node).name);
    } catch (const Error& e) {
      logv(1, std::string("background finalize failed: ") + e.what());
      dag.node_mut(d.node).state = NodeState::Pending;
    }
  };

  auto launch_background = [&]() {
    if (!wall || inflight) return;
    std::optional<NodeId> next = sched.pick_next();
    if (!next) return;
    const OperatorNode& n = dag.node(*next);
    std::vector<Value> inputs;
    for (NodeId dep : n.deps) {
      const Value* v = cache.peek(dag.resolve(dep));
      if (!v) return;
      inputs.push_back(*v);
    }
    std::size_t rows = 0;
    if (n.kind == OpKind::ReadCsv) rows = n.observed_rows.value_or(0);
    else if (!inputs.empty() && !std::holds_alternative<Scalar>(inputs[0]))
      rows = value_rows(inputs[0]);
    PartitionPlan plan =
        is_row_partitionable(n.kind)
            ? make_partition_plan(rows, cfg.partition_k,
                                  estimate_cost(cfg.cost, dag, *next), think)
            : single_range_plan(rows, cfg.partition_k);
    auto run = std::make_shared<OperatorRun>(n.kind, n.args, std::move(inputs), plan,
                                             scfg.eval);
    WallWorker::Job job{++epoch, *next, run};
    dag.set_state(*next, NodeState::Running);
    inflight = job;
    worker.preempt = false;
    worker.submit(std::move(job));
  };

  // Preload the dataset as `data` so sessions can start immediately.
  if (!data_path.empty()) {
    try {
      auto stmts = parse_cell("data = read_csv('" + data_path + "')");
      auto added = lower_to_dag(stmts, dag);
      sched.register_new_nodes(added);
      std::printf("bound 'data' to %s (deferred)\n", data_path.c_str());
    } catch (const Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      if (wall) worker.stop();
      return 2;
    }
  }

  std::printf("interactive session (%s clock). DSL lines run operators; "
              ":dag :cache :metrics%s :quit inspect state.\n",
              wall ? "wall" : "virtual", wall ? "" : " :think N");

  auto read_line = [&](std::string& line) -> bool {
    if (!wall) {
      std::printf(">> ");
      std::fflush(stdout);
      return static_cast<bool>(std::getline(std::cin, line));
    }
    // poll stdin so background completions are applied between inputs
    std::printf(">> ");
    std::fflush(stdout);
    std::string buf;
    for (;;) {
      struct pollfd pfd = {0, POLLIN, 0};
      int rc = ::poll(&pfd, 1, 25);
      while (auto d = worker.poll_result()) apply_done(*d);
      launch_background();
      if (rc > 0) {
        char c;
        ssize_t n = ::read(0, &c, 1);
        if (n <= 0) return false;
        if (c == '\n') {
          line = buf;
          return true;
        }
        buf += c;
      }
    }
  };

  std::string line;
  auto session_start = std::chrono::steady_clock::now();
  double last_wall = 0;
  while (read_line(line)) {
    if (line.empty()) continue;
    if (line == ":quit" || line == ":q") break;
    if (line == ":dag") {
      for (NodeId id : dag.live_ids()) {
        const OperatorNode& n = dag.node(id);
        std::printf("%-5u %-22s %-11s %s\n", n.id, n.name.c_str(),
                    state_name(n.state), n.canonical_code.c_str());
      }
      continue;
    }
    if (line == ":cache") {
      print_cache_table(cache, cfg.cost, dag);
      continue;
    }
    if (line == ":metrics") {
      print_metrics(sched.metrics());
      continue;
    }
    if (line.rfind(":think ", 0) == 0) {
      if (wall) {
        std::printf("(:think applies to the virtual clock only)\n");
        continue;
      }
      double gap = std::atof(line.c_str() + 7);
      sched.run_think_time(gap);
      think.observe(gap);
      std::printf("advanced %.3fs of think time\n", gap);
      continue;
    }
    try {
      double now_wall = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - session_start)
                            .count();
      if (!wall) {
        // piped/typed idle gaps become virtual think time
        double gap = now_wall - last_wall;
        if (gap > 0.05) {
          sched.run_think_time(gap);
          think.observe(gap);
        }
      }
      last_wall = now_wall;

      auto stmts = parse_cell(line);
      auto added = lower_to_dag(stmts, dag);
      eliminate_common_subexpressions(dag);
      std::vector<NodeId> resolved;
      for (NodeId id : added) resolved.push_back(dag.resolve(id));
      sched.register_new_nodes(resolved);
      for (NodeId raw : added) {
        if (!is_interaction_kind(dag.node(raw).kind)) continue;
        NodeId id = dag.resolve(raw);
        if (wall) {
          worker.preempt = true;
          ++epoch;  // stale pending results will be dropped
          while (auto d = worker.poll_result()) apply_done(*d);
          if (inflight) {
            dag.set_state(inflight->node, NodeState::Preempted);
            inflight.reset();
          }
          auto t0 = std::chrono::steady_clock::now();
          InteractionSummary summary;
          Value result = sched.on_interaction(id, &summary);
          double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
          std::printf("%s  [%.2f wall ms]\n", value_preview(result, 10).c_str(), ms);
          worker.preempt = false;
        } else {
          InteractionSummary summary;
          Value result = sched.on_interaction(id, &summary);
          std::printf("%s  [%.1f virtual ms%s]\n", value_preview(result, 10).c_str(),
                      summary.latency * 1e3, summary.fast_path ? ", fast path" : "");
        }
      }
      if (wall) launch_background();
    } catch (const Error& e) {
      std::printf("error: %s\n", e.what());
    }
  }
  if (wall) {
    worker.preempt = true;
    worker.stop();
  }
  std::printf("bye\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opportunistic evaluation for interactive dataframe sessions"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "replay a session trace");
  std::string trace_path, out_dir = ".", mode_str = "opportunistic";
  bool compare = false;
  CommonFlags run_flags;
  run->add_option("--trace", trace_path, "trace file (jsonl)")->required();
  run->add_flag("--compare", compare, "run both modes and diff them");
  run->add_option("--mode", mode_str, "opportunistic|eager")
      ->check(CLI::IsMember({"opportunistic", "eager"}));
  run->add_option("--out-dir", out_dir, "where report files go");
  run_flags.attach(run);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "lower a trace and inspect the DAG");
  std::string analyze_trace, dot_path;
  analyze->add_option("--trace", analyze_trace, "trace file (jsonl)")->required();
  analyze->add_option("--dot", dot_path, "write a graphviz file");

  // repl
  auto* repl = app.add_subcommand("repl", "interactive session");
  std::string repl_data, repl_clock = "virtual";
  CommonFlags repl_flags;
  repl->add_option("--data", repl_data, "csv preloaded as 'data'");
  repl->add_option("--clock", repl_clock, "virtual|wall")
      ->check(CLI::IsMember({"virtual", "wall"}));
  repl_flags.attach(repl);

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "generate a synthetic session");
  std::uint64_t gen_seed = 42;
  std::size_t gen_cells = 12, gen_rows = 2000;
  std::string gen_out = "trace.jsonl", gen_data = "synth.csv";
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--cells", gen_cells, "number of cells");
  gen->add_option("--out", gen_out, "trace output path");
  gen->add_option("--data", gen_data, "dataset file name (written next to the trace)");
  gen->add_option("--rows", gen_rows, "synthetic dataset rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(trace_path, run_flags, compare, mode_str, out_dir);
    if (analyze->parsed()) return cmd_analyze(analyze_trace, dot_path);
    if (repl->parsed()) return cmd_repl(repl_data, repl_flags, repl_clock);
    if (gen->parsed()) return cmd_gen_trace(gen_seed, gen_cells, gen_out, gen_data, gen_rows);
  } catch (const UncacheableResult& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const BudgetExhausted& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ResultMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const TraceParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataLoadError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const SyntaxError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 2;
}
