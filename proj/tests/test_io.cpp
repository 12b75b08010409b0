#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "rmot/diagnostics.hpp"
#include "rmot/io.hpp"
#include "rmot/oracle.hpp"
#include "support.hpp"

using namespace rmot;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_problem(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / ("rmot_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("single-cell problem round-trips") {
  const auto p1 = parse_problem(
      R"({"name": "cell", "description": "one entry", "shape": [1, 1],
          "marginals": [[1.0], [1.0]], "cost": [0.25]})");
  const auto dir = scratch_dir();
  save_problem(p1, dir / "cell.json");
  const auto p2 = load_problem(dir / "cell.json");
  CHECK(p2.name == "cell");
  CHECK(p2.description == "one entry");
  CHECK(p2.shape() == p1.shape());
  CHECK(p2.cost[0] == 0.25);
  CHECK(p2.marginals[1][0] == 1.0);
  CHECK(dump_problem(p2) == dump_problem(p1));
}

TEST_CASE("random problems round-trip bit for bit") {
  const auto inst = rmot::testing::random_instance({3, 4, 2}, 5);
  Problem p;
  p.name = "random";
  p.cost = inst.cost;
  p.marginals = inst.marginals;
  const auto q = parse_problem(dump_problem(p));
  for (std::size_t f = 0; f < p.cost.size(); ++f) CHECK(q.cost[f] == p.cost[f]);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < p.marginals[k].size(); ++j) CHECK(q.marginals[k][j] == p.marginals[k][j]);
}

TEST_CASE("marginal validation names the failing field") {
  const auto bad_sum = error_of(
      R"({"shape": [2, 2], "marginals": [[0.5, 0.5], [0.4, 0.5]], "cost": [0, 1, 1, 0]})");
  CHECK(bad_sum.find("marginal 1") != std::string::npos);
  CHECK(bad_sum.find("0.9") != std::string::npos);

  const auto zero = error_of(
      R"({"shape": [2, 2], "marginals": [[0.0, 1.0], [0.5, 0.5]], "cost": [0, 1, 1, 0]})");
  CHECK(zero.find("marginal 0 entry 0") != std::string::npos);

  const auto negative = error_of(
      R"({"shape": [2, 2], "marginals": [[0.5, 0.5], [-0.5, 1.5]], "cost": [0, 1, 1, 0]})");
  CHECK(negative.find("marginal 1 entry 0") != std::string::npos);

  const auto count = error_of(R"({"shape": [2, 2], "marginals": [[0.5, 0.5]], "cost": [0, 1, 1, 0]})");
  CHECK(count.find("marginals") != std::string::npos);

  const auto length = error_of(
      R"({"shape": [2, 3], "marginals": [[0.5, 0.5], [0.5, 0.5]], "cost": [0, 1, 1, 0, 0, 0]})");
  CHECK(length.find("marginal 1") != std::string::npos);
}

TEST_CASE("near-unit marginals are renormalized") {
  const auto p = parse_problem(
      R"({"shape": [2, 2], "marginals": [[0.5, 0.5000000005], [0.5, 0.5]], "cost": [0, 1, 1, 0]})");
  CHECK(std::abs(p.marginals[0][0] + p.marginals[0][1] - 1.0) <= 1e-15);
  CHECK(p.marginals[0][1] > p.marginals[0][0]);
}

TEST_CASE("cost validation") {
  CHECK(error_of(R"({"shape": [2, 2], "cost": [0, -1, 1, 0]})").find("cost entry 1") != std::string::npos);
  CHECK(error_of(R"({"shape": [2, 2], "cost": [0, 1, 1]})").find("cost") != std::string::npos);
  CHECK(error_of(R"({"shape": [2, 2], "cost": {"generator": "nope"}})").find("nope") != std::string::npos);
  CHECK(error_of(R"({"cost": [0, 1]})").find("shape") != std::string::npos);
  CHECK(error_of(R"({"shape": [2], "cost": [0, 1]})").find("shape") != std::string::npos);
  CHECK(error_of(R"({"shape": [2, 2], "cost": [0, 1, 1, )").find("parse error") != std::string::npos);
  CHECK_THROWS_AS(load_problem("/nonexistent/problem.json"), IoError);
}

TEST_CASE("generators") {
  const auto toy = parse_problem(R"({"cost": {"generator": "symmetric-toy"}})");
  CHECK(toy.shape() == Shape({2, 2}));
  const double want[] = {0, 1, 1, 0};
  for (std::size_t f = 0; f < 4; ++f) CHECK(toy.cost[f] == want[f]);
  for (const auto& h : toy.marginals) CHECK(h[0] == 0.5);
  CHECK(dump_problem(toy).find("symmetric-toy") != std::string::npos);

  const auto r1 = parse_problem(
      R"({"shape": [3, 4], "marginals": "uniform", "cost": {"generator": "random-uniform", "seed": 9, "scale": 2.5}})");
  const auto r2 = parse_problem(dump_problem(r1));
  for (std::size_t f = 0; f < 12; ++f) {
    CHECK(r1.cost[f] == r2.cost[f]);
    CHECK(r1.cost[f] >= 0.0);
    CHECK(r1.cost[f] < 2.5);
  }
  const auto other = random_uniform_cost(Shape({3, 4}), 10, 2.5);
  CHECK(other[0] != r1.cost[0]);
}

TEST_CASE("17 significant digits reload exactly") {
  CHECK(std::strtod(format_double(0.1).c_str(), nullptr) == 0.1);
  CHECK(format_double(std::nan("")).empty());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::bit_cast<double>(rng() & 0x7FEFFFFFFFFFFFFFULL);
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
}

TEST_CASE("trace serialization") {
  std::ostringstream empty;
  write_trace(empty, {});
  CHECK(empty.str() == std::string(kTraceHeader) + "\n");

  const auto inst = rmot::testing::random_instance({4, 3}, 8);
  const auto star = reference_solution(inst.cost, inst.marginals, 0.5);
  SolveOptions opts;
  opts.reference_plan = &star;
  const auto sol = solve(inst.cost, inst.marginals, rmot::testing::config(0.5, {2}, 1e-8), opts);
  std::stringstream ss;
  write_trace(ss, sol.trace);
  const auto back = read_trace(ss);
  REQUIRE(back.size() == sol.trace.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto &a = back.rows[i], &b = sol.trace.rows[i];
    CHECK(a.t == b.t);
    CHECK(a.axis == b.axis);
    CHECK(a.batch_size == b.batch_size);
    CHECK(std::bit_cast<std::uint64_t>(a.stopping_metric) == std::bit_cast<std::uint64_t>(b.stopping_metric));
    CHECK(a.objective == b.objective);
    CHECK(a.kl_to_opt == b.kl_to_opt);
    CHECK(a.wall_time_ns == b.wall_time_ns);
    if (b.axis) {
      CHECK(a.block_distance == b.block_distance);
    } else {
      CHECK(std::isnan(a.block_distance));
    }
  }

  std::istringstream wrong("t,k\n");
  CHECK_THROWS_AS(read_trace(wrong), ValidationError);
  std::istringstream short_row(std::string(kTraceHeader) + "\n1,2,3\n");
  CHECK_THROWS_AS(read_trace(short_row), ValidationError);
}

TEST_CASE("run records round-trip losslessly") {
  const auto inst = rmot::testing::random_instance({3, 3}, 4);
  Problem p;
  p.name = "rr";
  p.cost = inst.cost;
  p.marginals = inst.marginals;
  const auto star = reference_solution(inst.cost, inst.marginals, 1.0);
  SolveOptions opts;
  opts.reference_plan = &star;
  const auto cfg = rmot::testing::config(1.0, {2}, 1e-9);
  const auto sol = solve(p.cost, p.marginals, cfg, opts);
  RunRecord r = make_record(p, cfg, *cfg.max_iter, sol);
  CHECK(r.b_tau == 4);
  CHECK(r.normalized_cycles == double(sol.iterations) / 4.0);
  r.verdict = analyze_trace(sol.trace, AnalysisParams::from(cfg, p.shape(), p.cost.max_abs()));
  r.trace_path = "trace.csv";
  CHECK(parse_record(dump_record(r)) == r);

  r.verdict.reset();
  CHECK(parse_record(dump_record(r)) == r);
  CHECK_THROWS_AS(parse_record("{}"), ValidationError);
}

TEST_CASE("write outputs") {
  const auto dir = scratch_dir();
  ConvergenceTrace t;
  TraceRow row;
  row.t = 0;
  row.stopping_metric = 0.5;
  t.rows.push_back(row);
  RunRecord r;
  r.problem_name = "x";
  r.shape = {2, 2};
  r.tau = {1, 1};
  r.potentials.vectors = {{0.0, 0.0}, {0.0, 0.0}};
  write_outputs(r, t, {dir / "rec.json", dir / "trace.csv"});
  const auto back = load_record(dir / "rec.json");
  CHECK(back.trace_path == (dir / "trace.csv").string());
  CHECK(load_trace(dir / "trace.csv").size() == 1);

  try {
    write_outputs(r, t, {std::nullopt, fs::path("/nonexistent_dir/trace.csv")});
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent_dir/trace.csv") != std::string::npos);
  }
}

TEST_CASE("symmetric toy trace matches the committed fixture") {
  const auto toy = symmetric_toy_problem();
  SolveOptions opts;
  opts.record_timing = false;
  SolverConfig cfg;
  cfg.eta = 1.0;
  cfg.tau = {2, 2};
  cfg.epsilon = 1e-10;
  const auto sol = solve(toy.cost, toy.marginals, cfg, opts);
  std::ostringstream ss;
  write_trace(ss, sol.trace);
  CHECK(ss.str() == slurp(fs::path(RMOT_FIXTURE_DIR) / "symmetric_toy_tau22.csv"));
}
