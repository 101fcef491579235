#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "support.hpp"

using namespace opportune;
using testsupport::mark_executed;
using testsupport::Rng;

namespace {

// Numeric-only csv written to /tmp for engine-backed scheduler runs.
std::string write_csv(const std::string& name, std::size_t rows) {
  std::string path = "/tmp/opportune_sched_" + name + ".csv";
  std::ofstream out(path);
  out << "a,b\n";
  for (std::size_t i = 0; i < rows; ++i)
    out << (i % 97) << "," << (i % 13 == 0 ? std::string() : std::to_string(i % 7))
        << "\n";
  return path;
}

struct Fixture {
  OperatorDag dag;
  CacheStore cache;
  ThinkTimeModel think;
  Scheduler sched;

  explicit Fixture(CostModel model = CostModel::defaults(),
                   std::vector<double> prior = {20.0},
                   SchedulerConfig cfg = {})
      : cache(256ull << 20, 0.8), think(std::move(prior)),
        sched(dag, cache, model, think, {}, cfg) {}

  std::vector<NodeId> cell(const std::string& text) {
    auto added = lower_to_dag(parse_cell(text), dag);
    eliminate_common_subexpressions(dag);
    std::vector<NodeId> resolved;
    for (NodeId id : added) resolved.push_back(dag.resolve(id));
    sched.register_new_nodes(resolved);
    return resolved;
  }
};

// Synthetic scheduler over an injected-cost dag (no files touched).
struct Synthetic {
  OperatorDag dag;
  CacheStore cache{256ull << 20, 0.8};
  ThinkTimeModel think{std::vector<double>{20.0}};
  Scheduler sched{dag, cache, CostModel::defaults(), think};

  NodeId node(double cost, std::vector<NodeId> deps) {
    NodeId id = dag.add_node(deps.empty() ? OpKind::ReadCsv : OpKind::Fillna,
                             {std::string("n" + std::to_string(dag.size()))},
                             std::move(deps));
    dag.node_mut(id).observed_cost = cost;
    return id;
  }
};

}  // namespace

TEST_CASE("utility: chain arithmetic with uniform probabilities") {
  Synthetic s;
  NodeId a = s.node(5, {});
  NodeId b = s.node(10, {a});
  NodeId c = s.node(20, {b});
  (void)c;
  // delivery: a=5, b=15, c=35
  CHECK(s.sched.utility(a) == 55.0);
  CHECK_THROWS_AS(s.sched.utility(b), NotASource);
}

TEST_CASE("utility: zero-probability successors contribute nothing") {
  Synthetic s;
  NodeId a = s.node(5, {});
  NodeId b = s.node(10, {a});
  NodeId c = s.node(20, {b});
  s.sched.probability_provider().set(a, 0.0);
  s.sched.probability_provider().set(b, 0.0);
  s.sched.probability_provider().set(c, 1.0);
  CHECK(s.sched.utility(a) == 35.0);
}

TEST_CASE("utility: brute-force successor enumeration on random dags") {
  Rng rng(321);
  for (int round = 0; round < 300; ++round) {
    Synthetic s;
    auto ids = testsupport::random_dag(rng, s.dag, 10);
    NodeSet cached;
    for (NodeId id : ids)
      if (testsupport::unit(rng) < 0.25) cached.insert(id);
    // probabilities in [0,1], some zero
    for (NodeId id : ids)
      s.sched.probability_provider().set(
          id, testsupport::unit(rng) < 0.3 ? 0.0
                                           : std::floor(testsupport::unit(rng) * 8) / 8);
    for (NodeId id : ids)
      if (cached.count(id)) s.cache.insert_with_gc(id, Scalar::of(1.0),
                                                   s.sched.cost_model(), s.dag);
    for (NodeId src : source_operators(s.dag)) {
      double expected = 0;
      for (NodeId j : testsupport::oracle_successors(s.dag, src))
        expected += testsupport::oracle_delivery(s.sched.cost_model(), s.dag, j,
                                                 s.cache.cached_ids()) *
                    s.sched.probability_provider().probability(s.dag, j);
      CHECK(s.sched.utility(src) == expected);
    }
  }
}

TEST_CASE("pick_next: argmax with smallest-id ties") {
  Synthetic two;
  // chain one: 5 -> 10 -> 20 (utility 55); chain two: 10 -> 20 (utility 40)
  NodeId s1 = two.node(5, {});
  NodeId b1 = two.node(10, {s1});
  NodeId c1 = two.node(20, {b1});
  NodeId s2 = two.node(10, {});
  NodeId b2 = two.node(20, {s2});
  (void)c1;
  (void)b2;
  CHECK(two.sched.utility(s1) == 55.0);
  CHECK(two.sched.utility(s2) == 40.0);
  CHECK(two.sched.pick_next() == s1);

  Synthetic tie;
  NodeId t1 = tie.node(7, {});
  NodeId t2 = tie.node(7, {});
  (void)t2;
  CHECK(tie.sched.pick_next() == t1);

  Synthetic done;
  NodeId only = done.node(1, {});
  mark_executed(done.dag, only);
  CHECK_FALSE(done.sched.pick_next().has_value());
}

TEST_CASE("pick_next: exhaustive oracle over random dags") {
  Rng rng(777);
  for (int round = 0; round < 300; ++round) {
    Synthetic s;
    auto ids = testsupport::random_dag(rng, s.dag, 10);
    (void)ids;
    auto sources = source_operators(s.dag);
    auto picked = s.sched.pick_next();
    if (sources.empty()) {
      CHECK_FALSE(picked.has_value());
      continue;
    }
    NodeId best = sources[0];
    double best_u = s.sched.utility(best);
    for (NodeId src : sources) {
      double u = s.sched.utility(src);
      if (u > best_u) {
        best = src;
        best_u = u;
      }
    }
    CHECK(picked == best);
  }
}

TEST_CASE("pick_next: invariant under positive cost scaling") {
  Rng rng(55);
  for (int round = 0; round < 60; ++round) {
    // costs must come from the model for scaling to matter
    OperatorDag dag;
    NodeId read1 = dag.add_node(OpKind::ReadCsv, {std::string("f1")}, {});
    NodeId read2 = dag.add_node(OpKind::ReadCsv, {std::string("f2")}, {});
    dag.node_mut(read1).observed_rows = 100 + testsupport::below(rng, 5000);
    dag.node_mut(read2).observed_rows = 100 + testsupport::below(rng, 5000);
    NodeId m1 = dag.add_node(OpKind::Mean, {}, {read1});
    NodeId s2 = dag.add_node(OpKind::SortValues, {std::string("a")}, {read2});
    (void)m1;
    (void)s2;

    CacheStore cache(1 << 20, 0.8);
    ThinkTimeModel think(std::vector<double>{20.0});
    CostModel base = CostModel::defaults();
    base.use_observed = false;
    Scheduler sched_base(dag, cache, base, think);
    auto pick1 = sched_base.pick_next();

    double k = 0.25 + testsupport::unit(rng) * 10;
    CostModel scaled = base;
    for (auto& c : scaled.per_row_us) c *= k;
    for (auto& f : scaled.fixed_ms) f *= k;
    Scheduler sched_scaled(dag, cache, scaled, think);
    CHECK(sched_scaled.pick_next() == pick1);
  }
}

TEST_CASE("executing the picked source never raises another delivery cost") {
  Rng rng(4242);
  for (int round = 0; round < 100; ++round) {
    Synthetic s;
    auto ids = testsupport::random_dag(rng, s.dag, 10, /*executed_rate=*/0.0);
    auto picked = s.sched.pick_next();
    REQUIRE(picked.has_value());
    std::vector<double> before;
    for (NodeId id : ids)
      before.push_back(delivery_cost(s.sched.cost_model(), s.dag, id,
                                     s.cache.cached_ids()));
    mark_executed(s.dag, *picked);
    s.cache.insert_with_gc(*picked, Scalar::of(1.0), s.sched.cost_model(), s.dag);
    for (std::size_t i = 0; i < ids.size(); ++i)
      CHECK(delivery_cost(s.sched.cost_model(), s.dag, ids[i],
                          s.cache.cached_ids()) <= before[i]);
  }
}

TEST_CASE("run_think_time: zero window changes nothing") {
  std::string path = write_csv("zero", 200);
  Fixture fx;
  fx.cell("data = read_csv('" + path + "')");
  fx.sched.run_think_time(0.0);
  CHECK(fx.sched.clock() == 0.0);
  CHECK(fx.cache.size() == 0);
  CHECK(fx.dag.node(0).state == NodeState::Pending);
  std::remove(path.c_str());
}

TEST_CASE("run_think_time: enough budget executes the whole graph") {
  std::string path = write_csv("full", 500);
  Fixture fx;
  fx.cell("data = read_csv('" + path + "')");
  fx.cell("c = data.fillna(0)");
  fx.cell("m = c.mean()");
  double total = 0;  // sum-of-estimates oracle
  for (NodeId id : fx.dag.live_ids())
    total += estimate_cost(fx.sched.cost_model(), fx.dag, id);
  fx.sched.run_think_time(total + 1.0);
  CHECK(fx.sched.fully_executed());
  CHECK(fx.sched.metrics().background_work > 0);

  // a fresh interaction over materialized state costs only its own overhead
  auto ids = fx.cell("c.head()");
  InteractionSummary rec;
  fx.sched.on_interaction(ids[0], &rec);
  CHECK_THAT(rec.latency, Catch::Matchers::WithinAbs(
                              fx.sched.cost_model().fixed_seconds(OpKind::Head),
                              1e-12));
  CHECK(rec.fast_path);
  std::remove(path.c_str());
}

TEST_CASE("run_think_time: window expiring mid-plan checkpoints at ranges") {
  std::string path = write_csv("ranges", 1000);
  CostModel model = CostModel::defaults();
  model.per_row_us[static_cast<std::size_t>(OpKind::ReadCsv)] = 10000;  // 10ms/row
  Fixture fx(model, {1000.0});  // think quantiles far away: plain 8-chunk middle
  fx.cell("data = read_csv('" + path + "')");
  // plan: [0,5) then 124-row middles; costs 0.051s then 1.24s each
  double window = 0.051 + 1.24 * 3 + 0.4;  // ends inside the 4th middle range
  fx.sched.run_think_time(window);
  auto st = fx.sched.background_status();
  REQUIRE(st.has_value());
  CHECK(st->node == 0);
  CHECK(st->ranges_done == 4);  // top-k + 3 middles committed
  CHECK_THAT(st->range_elapsed, Catch::Matchers::WithinAbs(0.4, 1e-9));
  CHECK(fx.sched.clock() == window);

  // a later window resumes the in-flight range without losing progress
  fx.sched.run_think_time(1.24 - 0.4);
  auto st2 = fx.sched.background_status();
  REQUIRE(st2.has_value());
  CHECK(st2->ranges_done == 5);
  CHECK(st2->range_elapsed == 0.0);
  CHECK(fx.sched.metrics().wasted_work == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("on_interaction: preemption discards only in-flight range progress") {
  std::string path = write_csv("preempt", 1000);
  CostModel model = CostModel::defaults();
  model.per_row_us[static_cast<std::size_t>(OpKind::ReadCsv)] = 10000;
  Fixture fx(model, {1000.0});
  fx.cell("data = read_csv('" + path + "')");
  fx.sched.run_think_time(0.051 + 1.24 + 0.6);  // mid second middle range
  auto ids = fx.cell("data.head()");

  InteractionSummary rec;
  fx.sched.on_interaction(ids[0], &rec);
  const SchedMetrics& m = fx.sched.metrics();
  CHECK(m.preemptions == 1);
  CHECK_THAT(m.wasted_work, Catch::Matchers::WithinAbs(0.6, 1e-9));
  // head is answered from the csv prefix: only the touched rows are paid for
  CHECK(rec.fast_path);
  CHECK(rec.latency < 0.2);
  CHECK(rec.latency <= rec.path_remaining_cost + m.max_range_cost + 0.010);

  // the preempted ingest resumes at the next think window and finishes
  auto st = fx.sched.background_status();
  REQUIRE(st.has_value());
  CHECK(st->paused);
  CHECK(st->ranges_done == 1);
  fx.sched.run_think_time(60.0);
  CHECK(fx.dag.node(0).state == NodeState::Executed);
  std::remove(path.c_str());
}

TEST_CASE("on_interaction: think-time precomputation shrinks the path") {
  std::string path = write_csv("fig", 400);
  Fixture fx;
  fx.cell("data = read_csv('" + path + "')");
  fx.cell("A = data['a'].fillna(data.mean().mean())\n"
          "B = data['b'].fillna(data.mean().mean())");
  // window sized by estimates: read + selects + means, not the fills
  double window = 0;
  for (NodeId id : fx.dag.live_ids()) {
    OpKind k = fx.dag.node(id).kind;
    if (k == OpKind::ReadCsv || k == OpKind::SelectColumn || k == OpKind::Mean)
      window += estimate_cost(fx.sched.cost_model(), fx.dag, id);
  }
  fx.sched.run_think_time(window + 1e-6);
  NodeId fill_a = *fx.dag.lookup("A");
  CHECK(fx.dag.node(fill_a).state == NodeState::Pending);

  auto ids = fx.cell("A.value_counts()");
  double expected = estimate_cost(fx.sched.cost_model(), fx.dag, fill_a) +
                    estimate_cost(fx.sched.cost_model(), fx.dag, ids[0]);
  InteractionSummary rec;
  fx.sched.on_interaction(ids[0], &rec);
  CHECK(fx.sched.metrics().cache_misses == 2);  // fillna_0 and value_counts_0
  CHECK_THAT(rec.latency, Catch::Matchers::WithinRel(expected, 1e-9));
  std::remove(path.c_str());
}

TEST_CASE("maybe_speculate: threshold rule on predicted think time") {
  Synthetic s;
  NodeId input = s.node(5.0, {});  // materialization cost 5s
  NodeId sel = s.node(0.1, {input});
  NodeId filt = s.dag.add_node(OpKind::Filter, {CmpOp::Gt, 1.0}, {input, sel});
  s.dag.node_mut(filt).observed_cost = 0.1;
  // flat prior of 20s: 20 > 5 -> materialize
  CHECK(s.sched.maybe_speculate(filt) == Scheduler::Speculation::Materialize);

  Synthetic slow;
  NodeId input2 = slow.node(5.0, {});
  NodeId sel2 = slow.node(0.1, {input2});
  NodeId filt2 = slow.dag.add_node(OpKind::Filter, {CmpOp::Gt, 1.0}, {input2, sel2});
  slow.dag.node_mut(filt2).observed_cost = 0.1;
  for (int i = 0; i < 2000; ++i) slow.think.observe(2.0);  // predicted ~2s < 5s
  CHECK(slow.sched.maybe_speculate(filt2) == Scheduler::Speculation::Skip);
}

TEST_CASE("maybe_speculate: materialized input jumps the utility queue") {
  std::string big = write_csv("spec_big", 3000);
  std::string small = write_csv("spec_small", 300);
  Fixture fx;
  fx.cell("big = read_csv('" + big + "')");
  fx.cell("small = read_csv('" + small + "')");
  fx.cell("bigsum = big.fillna(0)");
  // utility prefers the big chain; the filter's input lives on the small one
  fx.cell("c = small.fillna(1)");
  auto filt = fx.cell("f = c[c['a'] > 50]");
  (void)filt;

  NodeId c_node = *fx.dag.lookup("c");
  double bring_up = 0;  // the whole chain below c, fill literal included
  for (NodeId id : critical_path(fx.dag, c_node))
    bring_up += estimate_cost(fx.sched.cost_model(), fx.dag, id);
  fx.sched.run_think_time(bring_up + 1e-6);
  // speculation pulled the filter input ahead of the higher-utility big chain
  CHECK(fx.cache.contains(c_node));
  CHECK(fx.dag.node(*fx.dag.lookup("big")).state != NodeState::Executed);
  std::remove(big.c_str());
  std::remove(small.c_str());
}

TEST_CASE("speculation pays off when the filter constant changes") {
  std::string path = write_csv("respec", 2000);

  auto run_session = [&](bool warm_input) {
    Fixture fx;
    fx.cell("data = read_csv('" + path + "')");
    fx.cell("c = data.fillna(0)");
    fx.cell("f = c[c['a'] > 10]");
    if (warm_input) {
      double bring_up = 0;
      for (NodeId id : critical_path(fx.dag, *fx.dag.lookup("c")))
        bring_up += estimate_cost(fx.sched.cost_model(), fx.dag, id);
      fx.sched.run_think_time(bring_up + 1e-6);
    }
    auto ids = fx.cell("g = c[c['a'] > 77]\ng.tail()");
    InteractionSummary rec;
    fx.sched.on_interaction(ids.back(), &rec);
    return rec.latency;
  };

  double warm = run_session(true);
  double cold = run_session(false);
  CHECK(warm < cold);
  std::remove(path.c_str());
}
