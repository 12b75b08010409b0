#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rmot/bregman.hpp"
#include "rmot/io.hpp"
#include "rmot/oracle.hpp"
#include "rmot/solver.hpp"
#include "support.hpp"

using namespace rmot;
using rmot::testing::config;
using rmot::testing::marginal_with_kl;

namespace {

/// A state whose per-component KL values against `targets` equal `d`.
SolverState state_with_gains(const std::vector<Histogram>& targets,
                             const std::vector<std::vector<double>>& d) {
  SolverState s;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    std::vector<double> r(targets[k].size());
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = d[k][j] == 0.0 ? targets[k][j] : marginal_with_kl(targets[k][j], d[k][j]);
    }
    s.marginals.push_back(std::move(r));
    s.potentials.vectors.emplace_back(targets[k].size(), 0.0);
  }
  return s;
}

DenseTensor symmetric_cost() {
  return DenseTensor(Shape({2, 2}), std::vector<double>{0, 1, 1, 0});
}

const std::vector<Histogram> kUniform22{Histogram::uniform(2), Histogram::uniform(2)};

}  // namespace

TEST_CASE("greedy selection picks the largest block gain") {
  const std::vector<Histogram> a{Histogram::uniform(2), Histogram::uniform(2)};
  const auto s = state_with_gains(a, {{0.1, 0.3}, {0.2, 0.05}});
  const std::vector<std::size_t> tau{1, 1};
  const auto choice = greedy_select(s, a, tau);
  CHECK(choice.block.axis == 0);
  CHECK(choice.block.indices == std::vector<std::size_t>{1});
  CHECK(choice.value == doctest::Approx(0.3).epsilon(1e-12));

  const std::vector<std::size_t> tau2{2, 2};
  const auto both = greedy_select(s, a, tau2);
  CHECK(both.block.axis == 0);
  CHECK(both.value == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("greedy ties go to the smallest axis and indices") {
  const std::vector<Histogram> one{Histogram({1.0}), Histogram({1.0})};
  const auto s = state_with_gains(one, {{0.2}, {0.2}});
  const std::vector<std::size_t> tau{1, 1};
  const auto choice = greedy_select(s, one, tau);
  CHECK(choice.block.axis == 0);
  CHECK(choice.block.indices == std::vector<std::size_t>{0});

  const std::vector<Histogram> a{Histogram::uniform(3), Histogram::uniform(3)};
  const auto feasible = state_with_gains(a, {{0, 0, 0}, {0, 0, 0}});
  const std::vector<std::size_t> tau2{2, 2};
  const auto zero = greedy_select(feasible, a, tau2);
  CHECK(zero.block.axis == 0);
  CHECK(zero.block.indices == std::vector<std::size_t>{0, 1});
  CHECK(zero.value == 0.0);
}

TEST_CASE("stopping metric modes") {
  SolverState s;
  s.marginals = {{0.4, 0.6}, {0.45, 0.55}};
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kMax) == doctest::Approx(0.2));
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kSum) == doctest::Approx(0.3));

  s.marginals = {{0.5, 0.5}, {0.35, 0.65}};
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kMax) == doctest::Approx(0.3));
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kSum) == doctest::Approx(0.3));

  s.marginals = {{0.5, 0.5}, {0.5, 0.5}};
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kMax) == 0.0);
  CHECK(stopping_metric(s, kUniform22, StoppingMode::kSum) == 0.0);
}

TEST_CASE("zero cost converges immediately to the product measure") {
  const auto inst = rmot::testing::random_instance({3, 4, 2}, 4);
  const DenseTensor zero(inst.cost.shape(), 0.0);
  const auto sol = solve(zero, inst.marginals, config(1.0, {2}, 1e-12));
  CHECK(sol.status == SolveStatus::kConverged);
  CHECK(sol.iterations == 0);
  CHECK(sol.trace.size() == 1);
  const auto pm = product_measure(inst.marginals);
  for (std::size_t f = 0; f < pm.size(); ++f) CHECK(sol.plan[f] == doctest::Approx(pm[f]).epsilon(1e-15));
}

TEST_CASE("symmetric instance matches the reference for every batch size") {
  const auto cost = symmetric_cost();
  const auto star = reference_solution(cost, kUniform22, 1.0);
  for (auto variant : {Variant::kGreedyBatch, Variant::kGreedyFull, Variant::kCyclicFull}) {
    for (std::size_t tau : {1, 2}) {
      const auto sol = solve(cost, kUniform22, config(1.0, {tau}, 1e-12, variant));
      CHECK(sol.status == SolveStatus::kConverged);
      CHECK(rmot::testing::l1(sol.plan, star) <= 1e-8);
    }
  }
}

TEST_CASE("a step makes the chosen block feasible") {
  const auto inst = rmot::testing::random_instance({4, 3, 5}, 33);
  const SolverContext ctx(inst.cost, inst.marginals, 0.5);
  SolverState s = initial_state(ctx);
  const std::vector<std::size_t> tau{2, 2, 2};
  for (int i = 0; i < 30; ++i) {
    const auto choice = greedy_select(s, inst.marginals, tau);
    step(s, choice.block, ctx);
    const auto r = marginal(ctx.plan(s.potentials), choice.block.axis);
    for (std::size_t j : choice.block.indices) {
      CHECK(std::abs(r[j] - inst.marginals[choice.block.axis][j]) <= 1e-12);
    }
  }
  CHECK(s.t == 30);
}

TEST_CASE("incremental marginals track the scratch marginals") {
  const auto inst = rmot::testing::random_instance({5, 5, 5}, 77);
  const SolverContext ctx(inst.cost, inst.marginals, 0.5);
  SolverState s = initial_state(ctx);
  const std::vector<std::size_t> tau{2, 2, 2};
  for (int i = 0; i < 1000; ++i) step(s, greedy_select(s, inst.marginals, tau).block, ctx);
  const auto fresh = scratch_marginals(s, ctx);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(s.marginals[k][j] - fresh[k][j]) <= 1e-10 * std::abs(fresh[k][j]));
    }
  }
}

TEST_CASE("plan equals the explicit parameterization") {
  const auto inst = rmot::testing::random_instance({3, 4}, 12);
  const auto sol = solve(inst.cost, inst.marginals, config(0.4, {1}, 1e-6));
  const auto want = rmot::testing::naive_plan(inst.cost, 0.4, sol.potentials, inst.marginals);
  for (std::size_t f = 0; f < want.size(); ++f) CHECK(sol.plan[f] == doctest::Approx(want[f]).epsilon(1e-13));
}

TEST_CASE("full-batch variants agree on two marginals") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto inst = rmot::testing::random_instance({6, 4}, seed);
    const auto g = solve(inst.cost, inst.marginals, config(0.5, {}, 1e-13, Variant::kGreedyFull));
    const auto c = solve(inst.cost, inst.marginals, config(0.5, {}, 1e-13, Variant::kCyclicFull));
    CHECK(g.status == SolveStatus::kConverged);
    CHECK(c.status == SolveStatus::kConverged);
    CHECK(rmot::testing::l1(g.plan, c.plan) <= 1e-9);
  }
}

TEST_CASE("unit batches on two marginals replay Greenkhorn") {
  // Direct transcription: explicit matrix, row and column sums recomputed
  // every step, rho(a, r) = r - a + a log(a / r), rows before columns.
  const auto inst = rmot::testing::random_instance({5, 4}, 41);
  const double eta = 0.6;
  const std::size_t n1 = 5, n2 = 4;
  const auto sol = solve(inst.cost, inst.marginals, config(eta, {1, 1}, 1e-8));
  REQUIRE(sol.status == SolveStatus::kConverged);

  std::vector<double> P(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      P[i * n2 + j] = std::exp(-inst.cost[i * n2 + j] / eta) * inst.marginals[0][i] *
                      inst.marginals[1][j];
  auto rho = [](double a, double r) { return r - a + a * std::log(a / r); };

  for (std::size_t t = 0; t + 1 < sol.trace.size(); ++t) {
    std::vector<double> row(n1, 0.0), col(n2, 0.0);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        row[i] += P[i * n2 + j];
        col[j] += P[i * n2 + j];
      }
    std::size_t best_axis = 0, best_index = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n1; ++i)
      if (rho(inst.marginals[0][i], row[i]) > best) best = rho(inst.marginals[0][i], row[i]), best_axis = 0, best_index = i;
    for (std::size_t j = 0; j < n2; ++j)
      if (rho(inst.marginals[1][j], col[j]) > best) best = rho(inst.marginals[1][j], col[j]), best_axis = 1, best_index = j;

    const auto& rec = sol.trace.rows[t];
    REQUIRE(rec.axis.has_value());
    CHECK(*rec.axis == best_axis);
    CHECK(rec.batch == std::vector<std::size_t>{best_index});
    CHECK(rec.block_distance == doctest::Approx(best).epsilon(1e-9));

    if (best_axis == 0) {
      const double s = inst.marginals[0][best_index] / row[best_index];
      for (std::size_t j = 0; j < n2; ++j) P[best_index * n2 + j] *= s;
    } else {
      const double s = inst.marginals[1][best_index] / col[best_index];
      for (std::size_t i = 0; i < n1; ++i) P[i * n2 + best_index] *= s;
    }
  }
  for (std::size_t f = 0; f < P.size(); ++f) CHECK(sol.plan[f] == doctest::Approx(P[f]).epsilon(1e-10));
}

TEST_CASE("cyclic variant visits marginals round robin") {
  const auto inst = rmot::testing::random_instance({3, 4, 2}, 9);
  const auto sol = solve(inst.cost, inst.marginals, config(1.0, {}, 1e-10, Variant::kCyclicFull));
  REQUIRE(sol.trace.size() > 4);
  for (std::size_t t = 0; t + 1 < sol.trace.size(); ++t) {
    CHECK(*sol.trace.rows[t].axis == t % 3);
    CHECK(sol.trace.rows[t].batch_size == inst.cost.shape().dim(t % 3));
  }
}

TEST_CASE("iteration cap stops the run") {
  const auto inst = rmot::testing::random_instance({6, 6}, 5);
  const auto sol = solve(inst.cost, inst.marginals, config(0.2, {1}, 1e-14, Variant::kGreedyBatch, 3));
  CHECK(sol.status == SolveStatus::kMaxIter);
  CHECK(sol.iterations == 3);
  CHECK(sol.trace.size() == 4);
  CHECK_FALSE(sol.trace.rows.back().axis.has_value());
  CHECK(sol.final_metric == sol.trace.rows.back().stopping_metric);
}

TEST_CASE("periodic refresh leaves the iterates unchanged up to rounding") {
  const auto inst = rmot::testing::random_instance({4, 4, 4}, 14);
  auto cfg = config(0.5, {2}, 1e-10);
  const auto plain = solve(inst.cost, inst.marginals, cfg);
  cfg.refresh_every = 7;
  const auto refreshed = solve(inst.cost, inst.marginals, cfg);
  CHECK(refreshed.status == SolveStatus::kConverged);
  CHECK(rmot::testing::l1(plain.plan, refreshed.plan) <= 1e-9);
}

TEST_CASE("config validation") {
  const auto inst = rmot::testing::random_instance({3, 3, 3}, 1);
  CHECK_THROWS_AS(solve(inst.cost, inst.marginals, config(0.0, {1}, 1e-6)), InvalidArgument);
  CHECK_THROWS_AS(solve(inst.cost, inst.marginals, config(1.0, {1, 2}, 1e-6)), InvalidArgument);
  CHECK_THROWS_AS(solve(inst.cost, inst.marginals, config(1.0, {0}, 1e-6)), InvalidArgument);
  CHECK_THROWS_AS(solve(inst.cost, inst.marginals, config(1.0, {1}, 0.0)), InvalidArgument);
  // No closed-form bound for m = 3 with partial batches.
  CHECK_THROWS_AS(solve(inst.cost, inst.marginals, config(1.0, {1}, 1e-6, Variant::kGreedyBatch, std::nullopt)),
                  InvalidArgument);
  CHECK_NOTHROW(solve(inst.cost, inst.marginals, config(1.0, {1}, 1e-6, Variant::kGreedyFull, std::nullopt)));
}

TEST_CASE("batch sizes broadcast and clip") {
  Shape s({3, 5, 2});
  SolverConfig c;
  c.tau = {4};
  CHECK(effective_batch_sizes(c, s) == std::vector<std::size_t>{3, 4, 2});
  c.tau = {1, 2, 1};
  const auto tau = effective_batch_sizes(c, s);
  CHECK(tau == std::vector<std::size_t>{1, 2, 1});
  CHECK(batch_count(tau, s) == 3 + 3 + 2);
  c.variant = Variant::kCyclicFull;
  CHECK(effective_batch_sizes(c, s) == std::vector<std::size_t>{3, 5, 2});
}

TEST_CASE("default iteration cap is ten times the bound") {
  Shape s({4, 4});
  SolverConfig c;
  c.eta = 1.0;
  c.epsilon = 0.125;
  c.variant = Variant::kGreedyFull;
  // 1 + 8 * 5 / 0.125 = 321 is tighter than the bi-marginal bound.
  CHECK(*default_max_iter(c, s, 1.0) == 3210);
  c.variant = Variant::kGreedyBatch;
  c.tau = {1};
  CHECK(*default_max_iter(c, s, 1.0) == 10 * (2 + 4 * 15 * 5 * 8));
  c.tau = {2};
  CHECK_FALSE(default_max_iter(c, Shape({4, 4, 4}), 1.0).has_value());
}

TEST_CASE("underflowed slices refuse to start") {
  auto prev = set_warning_handler([](const std::string&) {});
  const DenseTensor cost(Shape({2, 2}), std::vector<double>{2000, 2000, 0, 0});
  CHECK_THROWS_AS(solve(cost, kUniform22, config(1.0, {1}, 1e-6)), NumericalBreakdown);
  set_warning_handler(prev);
}

TEST_CASE("identical inputs give byte-identical traces") {
  const auto inst = rmot::testing::random_instance({4, 5, 3}, 6);
  SolveOptions opts;
  opts.record_timing = false;
  std::string text[2];
  for (auto& out : text) {
    const auto sol = solve(inst.cost, inst.marginals, config(0.5, {2, 1, 3}, 1e-9), opts);
    std::ostringstream ss;
    write_trace(ss, sol.trace);
    out = ss.str();
  }
  CHECK(text[0] == text[1]);
  CHECK(text[0].size() > 1000);
}

TEST_CASE("per-step work grows linearly in the batch size") {
  const auto inst = rmot::testing::random_instance({40, 40, 40}, 3);
  const SolverContext ctx(inst.cost, inst.marginals, 1.0);
  auto time_steps = [&](std::size_t tau_value) {
    const std::vector<std::size_t> tau(3, tau_value);
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 5; ++rep) {
      SolverState s = initial_state(ctx);
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 30; ++i) step(s, greedy_select(s, inst.marginals, tau).block, ctx);
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      best = std::min(best, dt.count());
    }
    return best;
  };
  const double small = time_steps(5), large = time_steps(20);
  const double ratio = large / small;
  MESSAGE("tau 20 vs 5 step-time ratio " << ratio);
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 8.0);
}
