#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdio>
#include <fstream>

#include "support.hpp"

using namespace opportune;
using testsupport::Rng;

namespace {

Series num_series(std::vector<std::optional<double>> vals) {
  Series s;
  s.data = ColumnData::floats();
  for (auto& v : vals) s.data.push_num(v);
  return s;
}

Series text_series(std::vector<std::optional<std::string>> vals) {
  Series s;
  s.data = ColumnData::texts();
  for (auto& v : vals) s.data.push_text(std::move(v));
  return s;
}

Value eval1(OpKind kind, std::vector<Arg> args, const Value& in) {
  return eval_operator(kind, args, {&in});
}

}  // namespace

TEST_CASE("eval: arithmetic aggregates skip nulls") {
  Value s = num_series({1, 2, 3});
  CHECK(std::get<Scalar>(eval1(OpKind::Mean, {}, s)).num == 2.0);
  Value withnull = num_series({1, std::nullopt, 3});
  CHECK(std::get<Scalar>(eval1(OpKind::Mean, {}, withnull)).num == 2.0);
  CHECK(std::get<Scalar>(eval1(OpKind::Sum, {}, withnull)).num == 4.0);
  Value allnull = num_series({std::nullopt, std::nullopt});
  CHECK_THROWS_AS(eval1(OpKind::Mean, {}, allnull), EmptyAggregate);
  CHECK(std::get<Scalar>(eval1(OpKind::Sum, {}, allnull)).num == 0.0);
}

TEST_CASE("eval: value_counts orders by count desc then value asc") {
  Value s = text_series({"a", "b", "a"});
  Series out = std::get<Series>(eval1(OpKind::ValueCounts, {}, s));
  CHECK(out.index == std::vector<std::string>{"a", "b"});
  CHECK(out.data.num(0) == 2.0);
  CHECK(out.data.num(1) == 1.0);

  Value ties = num_series({3, 1, 3, 1, 2, std::nullopt});
  Series t = std::get<Series>(eval1(OpKind::ValueCounts, {}, ties));
  CHECK(t.index == std::vector<std::string>{"1", "3", "2"});  // nulls excluded
}

TEST_CASE("eval: fillna is definitional") {
  Value s = num_series({1, std::nullopt, 3});
  Value fill = Scalar::of(2.0);
  Series out = std::get<Series>(eval_operator(OpKind::Fillna, {}, {&s, &fill}));
  CHECK(out.data.num(1) == 2.0);
  Value text_fill = Scalar::of(std::string("x"));
  CHECK_THROWS_AS(eval_operator(OpKind::Fillna, {}, {&s, &text_fill}), TypeMismatch);
}

TEST_CASE("eval: filter compares and treats nulls as false") {
  DataTable t;
  ColumnData a = ColumnData::floats();
  for (auto v : {1.0, 5.0, 9.0}) a.push_num(v);
  t.add_column("a", a);
  Value tv = t;
  Value pred = num_series({1, std::nullopt, 9});
  Value out = eval_operator(OpKind::Filter, {CmpOp::Gt, 2.0}, {&tv, &pred});
  CHECK(std::get<DataTable>(out).rows == 1);
  CHECK(std::get<DataTable>(out).cols[0].num(0) == 9.0);

  Value short_pred = num_series({1});
  CHECK_THROWS_AS(eval_operator(OpKind::Filter, {CmpOp::Gt, 2.0}, {&tv, &short_pred}),
                  TypeMismatch);
}

TEST_CASE("eval: drop_columns_below_threshold keeps by non-null fraction") {
  DataTable t;
  ColumnData full = ColumnData::floats();
  ColumnData holey = ColumnData::floats();
  for (int i = 0; i < 10; ++i) {
    full.push_num(i);
    if (i < 7) holey.push_null();
    else holey.push_num(i);
  }
  t.add_column("full", full);
  t.add_column("holey", holey);
  Value out = eval1(OpKind::DropColumnsBelowThreshold, {0.8}, Value(t));
  CHECK(std::get<DataTable>(out).names == std::vector<std::string>{"full"});
  Value loose = eval1(OpKind::DropColumnsBelowThreshold, {0.3}, Value(t));
  CHECK(std::get<DataTable>(loose).names == std::vector<std::string>{"full", "holey"});
}

TEST_CASE("eval: sort_values is stable with nulls last") {
  Value s = num_series({3, std::nullopt, 1, 2});
  Series out = std::get<Series>(eval1(OpKind::SortValues, {}, s));
  CHECK(out.data.num(0) == 1.0);
  CHECK(out.data.num(1) == 2.0);
  CHECK(out.data.num(2) == 3.0);
  CHECK(out.data.is_null(3));

  DataTable t;
  ColumnData k = ColumnData::texts();
  for (auto v : {"b", "a", "b"}) k.push_text(std::string(v));
  ColumnData payload = ColumnData::floats();
  for (auto v : {1.0, 2.0, 3.0}) payload.push_num(v);
  t.add_column("k", k);
  t.add_column("p", payload);
  Value sorted = eval1(OpKind::SortValues, {std::string("k")}, Value(t));
  const DataTable& st = std::get<DataTable>(sorted);
  CHECK(st.cols[1].num(0) == 2.0);
  CHECK(st.cols[1].num(1) == 1.0);  // stable: first "b" keeps its order
  CHECK(st.cols[1].num(2) == 3.0);
  CHECK_THROWS_AS(eval1(OpKind::SortValues, {}, Value(t)), TypeMismatch);
}

TEST_CASE("eval: groupby_mean groups sorted keys, key column excluded") {
  DataTable t;
  ColumnData k = ColumnData::texts();
  ColumnData v = ColumnData::floats();
  for (auto [key, val] : std::vector<std::pair<const char*, double>>{
           {"b", 4}, {"a", 1}, {"b", 6}, {"a", 3}}) {
    k.push_text(std::string(key));
    v.push_num(val);
  }
  t.add_column("k", k);
  t.add_column("v", v);
  Value out = eval1(OpKind::GroupbyMean, {std::string("k")}, Value(t));
  const DataTable& g = std::get<DataTable>(out);
  REQUIRE(g.names == std::vector<std::string>{"k", "v"});
  CHECK(g.cols[0].text(0) == "a");
  CHECK(g.cols[1].num(0) == 2.0);
  CHECK(g.cols[0].text(1) == "b");
  CHECK(g.cols[1].num(1) == 5.0);
}

TEST_CASE("eval: head, tail, columns, missing column error") {
  DataTable t;
  ColumnData a = ColumnData::floats();
  for (int i = 0; i < 10; ++i) a.push_num(i);
  t.add_column("a", a);
  Value tv = t;
  CHECK(std::get<DataTable>(eval1(OpKind::Head, {3.0}, tv)).rows == 3);
  DataTable tail = std::get<DataTable>(eval1(OpKind::Tail, {4.0}, tv));
  CHECK(tail.cols[0].num(0) == 6.0);
  Series cols = std::get<Series>(eval1(OpKind::Columns, {}, tv));
  CHECK(cols.data.text(0) == "a");
  CHECK_THROWS_AS(eval1(OpKind::SelectColumn, {std::string("ghost")}, tv),
                  MissingColumn);
}

TEST_CASE("csv: ingestion types columns and reads nulls") {
  std::string path = "/tmp/opportune_csv_test.csv";
  {
    std::ofstream out(path);
    out << "num,text,\"quoted,name\"\n1.5,hello,a\n,\"wor\"\"ld\",b\n2,5x,c\n";
  }
  DataTable t = csv::read_table(path);
  REQUIRE(t.names == std::vector<std::string>{"num", "text", "quoted,name"});
  CHECK_FALSE(t.cols[0].is_text());
  CHECK(t.cols[0].is_null(1));
  CHECK(t.cols[1].is_text());  // "5x" forces text typing
  CHECK(t.cols[1].text(1) == "wor\"ld");
  CHECK(csv::peek_row_count(path) == 3);
  std::remove(path.c_str());
}

TEST_CASE("partition plan: degenerate and worked examples") {
  ThinkTimeModel flat(std::vector<double>{20.0});

  PartitionPlan tiny = make_partition_plan(8, 5, 1.0, flat);
  REQUIRE(tiny.ranges.size() == 2);
  CHECK(tiny.ranges[0] == RowRange{0, 5});
  CHECK(tiny.ranges[1] == RowRange{5, 8});

  CHECK(make_partition_plan(0, 5, 1.0, flat).ranges.empty());

  // median think 20s against a 40s operator: the chunk near half the rows
  // (start offset 40*501/1000 ~ 20s) splits, everything else stays whole
  PartitionPlan p = make_partition_plan(1000, 5, 40.0, flat);
  std::vector<RowRange> expected = {{0, 5},     {5, 129},   {129, 253},
                                    {253, 377}, {377, 501}, {501, 563},
                                    {563, 625}, {625, 749}, {749, 873},
                                    {873, 995}, {995, 1000}};
  CHECK(p.ranges == expected);

  // hand-evaluated sizing for 100 rows and a think model far from any offset
  ThinkTimeModel far(std::vector<double>{1000.0});
  PartitionPlan q = make_partition_plan(100, 5, 1.0, far);
  std::vector<RowRange> expected_q = {{0, 5},   {5, 17},  {17, 29}, {29, 41},
                                      {41, 53}, {53, 65}, {65, 77}, {77, 89},
                                      {89, 95}, {95, 100}};
  CHECK(q.ranges == expected_q);
}

TEST_CASE("partition plan invariants: exact disjoint cover") {
  Rng rng(11);
  ThinkTimeModel think;
  for (int round = 0; round < 300; ++round) {
    std::size_t rows = testsupport::below(rng, 5000);
    std::size_t k = 1 + testsupport::below(rng, 20);
    double est = 0.1 + testsupport::unit(rng) * 60;
    PartitionPlan p = make_partition_plan(rows, k, est, think);
    std::size_t cursor = 0;
    for (const RowRange& r : p.ranges) {
      CHECK(r.begin == cursor);
      CHECK(r.end > r.begin);
      cursor = r.end;
    }
    CHECK(cursor == rows);
    if (rows > 0) CHECK(p.ranges[0].size() == std::min(k, rows));
  }
}

namespace {

struct OpCase {
  OpKind kind;
  std::vector<Arg> args;
  std::vector<Value> inputs;
};

// Partitionable operator instances over a random table.
std::vector<OpCase> partitionable_cases(Rng& rng) {
  DataTable t = testsupport::random_table(rng, 400);
  Value tv = t;
  Series pred;
  pred.data = t.cols[0];
  std::vector<OpCase> cases;
  cases.push_back({OpKind::SelectColumn, {std::string("a")}, {tv}});
  cases.push_back({OpKind::Filter, {CmpOp::Gt, 40.0}, {tv, Value(pred)}});
  cases.push_back({OpKind::Fillna, {}, {tv, Value(Scalar::of(7.0))}});
  cases.push_back({OpKind::Mean, {}, {tv}});
  cases.push_back({OpKind::Sum, {}, {Value(pred)}});
  Series cat;
  cat.data = t.cols[2];
  cases.push_back({OpKind::ValueCounts, {}, {Value(cat)}});
  cases.push_back({OpKind::DropColumnsBelowThreshold, {0.7}, {tv}});
  return cases;
}

Value run_unpartitioned(const OpCase& c) {
  std::vector<const Value*> ptrs;
  for (const Value& v : c.inputs) ptrs.push_back(&v);
  return eval_operator(c.kind, c.args, ptrs);
}

}  // namespace

TEST_CASE("partition transparency: merged output equals unpartitioned output") {
  Rng rng(23);
  ThinkTimeModel think;
  std::atomic<bool> never{false};
  for (int round = 0; round < 40; ++round) {
    for (OpCase& c : partitionable_cases(rng)) {
      Value expected = run_unpartitioned(c);
      std::size_t rows = value_rows(c.inputs[0]);
      PartitionPlan plan = make_partition_plan(
          rows, 1 + testsupport::below(rng, 8), 0.1 + testsupport::unit(rng) * 50,
          think);
      ExecOutcome out = execute_partitioned(c.kind, c.args, c.inputs, plan, never);
      REQUIRE(out.result.has_value());
      CHECK(value_equal(*out.result, expected));
    }
  }
}

TEST_CASE("preempt/resume transparency under random interruption points") {
  Rng rng(31);
  ThinkTimeModel think;
  for (int round = 0; round < 25; ++round) {
    for (OpCase& c : partitionable_cases(rng)) {
      Value expected = run_unpartitioned(c);
      std::size_t rows = value_rows(c.inputs[0]);
      PartitionPlan plan = make_partition_plan(rows, 5, 10.0, think);
      auto run = std::make_shared<OperatorRun>(c.kind, c.args, c.inputs, plan);
      std::optional<Checkpoint> cp = Checkpoint{0, run};
      int interruptions = static_cast<int>(testsupport::below(rng, 4));
      for (int i = 0; i < interruptions && cp; ++i) {
        std::atomic<bool> flag{true};  // raised before/while the next range runs
        std::size_t completed_before = cp->completed();
        ExecOutcome out = resume(*cp, flag);
        if (out.result) {
          CHECK(value_equal(*out.result, expected));
          cp.reset();
          break;
        }
        cp = out.checkpoint;
        CHECK(cp->completed() == completed_before);
      }
      if (cp) {
        std::atomic<bool> never{false};
        ExecOutcome out = resume(*cp, never);
        REQUIRE(out.result.has_value());
        CHECK(value_equal(*out.result, expected));
      }
    }
  }
}

TEST_CASE("preemption drops exactly the in-flight range") {
  // 10-range plan; the signal is raised while range index 3 is computing
  ColumnData a = ColumnData::floats();
  for (int i = 0; i < 100; ++i) a.push_num(i);
  DataTable t;
  t.add_column("a", a);
  PartitionPlan plan;
  plan.row_count = 100;
  for (std::size_t i = 0; i < 10; ++i) plan.ranges.push_back({i * 10, (i + 1) * 10});

  auto run = std::make_shared<OperatorRun>(OpKind::SelectColumn,
                                           std::vector<Arg>{std::string("a")},
                                           std::vector<Value>{Value(t)}, plan);
  std::atomic<bool> flag{false};
  for (int i = 0; i < 3; ++i) run->commit(run->compute_range(run->completed()));
  auto inflight = run->compute_range(3);  // work happens...
  flag = true;                            // ...signal arrives mid-range
  ExecOutcome out = execute_partitioned(0, run, flag);
  REQUIRE(out.preempted());
  CHECK(out.checkpoint->completed() == 3);  // the in-flight range is discarded

  std::atomic<bool> never{false};
  ExecOutcome fin = resume(*out.checkpoint, never);
  REQUIRE(fin.result.has_value());
  CHECK(std::get<Series>(*fin.result).size() == 100);
}

TEST_CASE("blocking operators run as a single preemptible unit") {
  Rng rng(5);
  DataTable t = testsupport::random_table(rng, 200);
  PartitionPlan plan = single_range_plan(t.rows);
  if (t.rows > 0) CHECK(plan.ranges.size() == 1);
  std::atomic<bool> never{false};
  ExecOutcome out =
      execute_partitioned(OpKind::SortValues, {std::string("a")}, {Value(t)}, plan,
                          never);
  REQUIRE(out.result.has_value());
  Value direct = eval1(OpKind::SortValues, {std::string("a")}, Value(t));
  CHECK(value_equal(*out.result, direct));
}

namespace {

// Lower a pipeline, cache selected values, and resolve through this map.
struct FastFixture {
  OperatorDag dag;
  std::map<NodeId, Value> values;

  ValueResolver resolver() {
    return [this](NodeId id) -> const Value* {
      auto it = values.find(dag.resolve(id));
      return it == values.end() ? nullptr : &it->second;
    };
  }
};

}  // namespace

TEST_CASE("fast path: head over select touches almost nothing") {
  FastFixture fx;
  lower_to_dag(parse_cell("data = read_csv('big')"), fx.dag);
  auto ids = lower_to_dag(parse_cell("data['a'].head()"), fx.dag);

  ColumnData a = ColumnData::floats();
  const std::size_t kRows = 1000000;
  for (std::size_t i = 0; i < kRows; ++i) a.push_num(static_cast<double>(i));
  DataTable big;
  big.add_column("a", std::move(a));
  fx.values[*fx.dag.lookup("data")] = big;

  CostModel model = CostModel::defaults();
  auto fast = partial_result_fast_path(fx.dag, ids[1], model, fx.resolver());
  REQUIRE(fast.has_value());
  CHECK(fast->rows_touched * 100 <= kRows);  // >= 99% of rows untouched
  Series out = std::get<Series>(fast->value);
  REQUIRE(out.size() == 5);
  CHECK(out.data.num(4) == 4.0);
}

TEST_CASE("fast path: selective filter grows the prefix but stays exact") {
  FastFixture fx;
  lower_to_dag(parse_cell("data = read_csv('big')"), fx.dag);
  auto ids = lower_to_dag(parse_cell("data[data['a'] == 999].head()"), fx.dag);

  // selectivity 0.001: one match per thousand rows
  ColumnData a = ColumnData::floats();
  const std::size_t kRows = 10000;
  for (std::size_t i = 0; i < kRows; ++i) a.push_num(static_cast<double>(i % 1000));
  DataTable big;
  big.add_column("a", std::move(a));
  Value tv = big;
  Value pred = eval_operator(OpKind::SelectColumn, {std::string("a")}, {&tv});
  Value filtered = eval_operator(OpKind::Filter, {CmpOp::Eq, 999.0}, {&tv, &pred});
  Value baseline = eval_operator(OpKind::Head, {5.0}, {&filtered});
  fx.values[*fx.dag.lookup("data")] = std::move(big);

  CostModel model = CostModel::defaults();
  auto fast = partial_result_fast_path(fx.dag, ids.back(), model, fx.resolver());
  REQUIRE(fast.has_value());
  CHECK(value_equal(fast->value, baseline));
  CHECK(fast->rows_touched > 1000);  // had to widen well past the first ranges
}

TEST_CASE("fast path: tail equals full pipeline, csv source included") {
  std::string path = "/tmp/opportune_fast_tail.csv";
  {
    std::ofstream out(path);
    out << "a,b\n";
    for (int i = 0; i < 500; ++i) out << i << "," << (i % 7) << "\n";
  }
  FastFixture fx;
  lower_to_dag(parse_cell("data = read_csv('" + path + "')"), fx.dag);
  auto ids = lower_to_dag(parse_cell("data[data['b'] > 3].tail(7)"), fx.dag);

  Value full_table = csv::read_table(path);
  Value pred = eval_operator(OpKind::SelectColumn, {std::string("b")}, {&full_table});
  Value filtered =
      eval_operator(OpKind::Filter, {CmpOp::Gt, 3.0}, {&full_table, &pred});
  Value baseline = eval_operator(OpKind::Tail, {7.0}, {&filtered});

  CostModel model = CostModel::defaults();
  auto fast = partial_result_fast_path(fx.dag, ids.back(), model, fx.resolver());
  REQUIRE(fast.has_value());
  CHECK(value_equal(fast->value, baseline));
  CHECK(fast->rows_touched < 500);
  std::remove(path.c_str());
}

TEST_CASE("fast path: blocking operator on the path falls back") {
  FastFixture fx;
  lower_to_dag(parse_cell("data = read_csv('big')"), fx.dag);
  auto ids = lower_to_dag(parse_cell("data.sort_values('a').head()"), fx.dag);
  Rng rng(3);
  fx.values[*fx.dag.lookup("data")] = testsupport::random_table(rng, 50);
  CostModel model = CostModel::defaults();
  CHECK_FALSE(
      partial_result_fast_path(fx.dag, ids.back(), model, fx.resolver()).has_value());
}

TEST_CASE("fast path: columns served from schema, data-dependent schema refused") {
  std::string path = "/tmp/opportune_fast_cols.csv";
  {
    std::ofstream out(path);
    out << "x,y,z\n1,2,3\n";
  }
  FastFixture fx;
  lower_to_dag(parse_cell("data = read_csv('" + path + "')"), fx.dag);
  auto ok = lower_to_dag(parse_cell("data[data['x'] > 0].columns()"), fx.dag);
  CostModel model = CostModel::defaults();
  auto fast = columns_fast_path(fx.dag, ok.back(), model, fx.resolver());
  REQUIRE(fast.has_value());
  const Series& names = std::get<Series>(fast->value);
  REQUIRE(names.size() == 3);
  CHECK(names.data.text(0) == "x");

  auto refused = lower_to_dag(
      parse_cell("data.drop_columns_below_threshold(0.8).columns()"), fx.dag);
  CHECK_FALSE(
      columns_fast_path(fx.dag, refused.back(), model, fx.resolver()).has_value());
  std::remove(path.c_str());
}
