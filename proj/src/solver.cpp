#include "rmot/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "rmot/diagnostics.hpp"

namespace rmot {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kGreedyBatch: return "greedy-batch";
    case Variant::kGreedyFull: return "greedy-full";
    case Variant::kCyclicFull: return "cyclic-full";
  }
  return "unknown";
}

std::string_view to_string(StoppingMode mode) {
  return mode == StoppingMode::kMax ? "max" : "sum";
}

std::string_view to_string(SolveStatus status) {
  return status == SolveStatus::kConverged ? "converged" : "max_iter";
}

Variant parse_variant(std::string_view text) {
  if (text == "greedy-batch") return Variant::kGreedyBatch;
  if (text == "greedy-full") return Variant::kGreedyFull;
  if (text == "cyclic-full") return Variant::kCyclicFull;
  throw InvalidArgument("unknown variant '" + std::string(text) + "'");
}

StoppingMode parse_stopping_mode(std::string_view text) {
  if (text == "max") return StoppingMode::kMax;
  if (text == "sum") return StoppingMode::kSum;
  throw InvalidArgument("unknown stopping mode '" + std::string(text) + "'");
}

SolverContext::SolverContext(const DenseTensor& cost,
                             std::vector<Histogram> marginals, double eta)
    : cost_(&cost),
      marginals_(std::move(marginals)),
      eta_(eta),
      log_kernel_(log_gibbs_init(cost, eta, marginals_)),
      cost_ratio_(cost.max_abs() / eta) {}

DenseTensor SolverContext::plan(const Potentials& potentials) const {
  DenseTensor out(shape());
  for_each_index(shape(), [&](std::size_t flat, auto index) {
    double exponent = log_kernel_[flat];
    for (std::size_t k = 0; k < index.size(); ++k) {
      exponent += potentials.vectors[k][index[k]];
    }
    out[flat] = std::exp(exponent);
  });
  return out;
}

std::vector<std::vector<double>> scratch_marginals(const SolverState& state,
                                                   const SolverContext& ctx) {
  const DenseTensor plan = ctx.plan(state.potentials);
  std::vector<std::vector<double>> out;
  out.reserve(ctx.order());
  for (std::size_t k = 0; k < ctx.order(); ++k) out.push_back(marginal(plan, k));
  return out;
}

void refresh_marginals(SolverState& state, const SolverContext& ctx) {
  state.marginals = scratch_marginals(state, ctx);
}

SolverState initial_state(const SolverContext& ctx) {
  SolverState state;
  state.potentials = Potentials::zeros(ctx.shape());
  refresh_marginals(state, ctx);
  for (std::size_t k = 0; k < ctx.order(); ++k) {
    for (std::size_t j = 0; j < state.marginals[k].size(); ++j) {
      if (!(state.marginals[k][j] > 0.0)) {
        throw NumericalBreakdown(
            "initial marginal " + std::to_string(k) + " entry " +
            std::to_string(j) +
            " is zero: the Gibbs kernel underflowed on a whole slice; "
            "increase eta");
      }
    }
  }
  return state;
}

GreedyChoice greedy_select(const SolverState& state,
                           std::span<const Histogram> targets,
                           std::span<const std::size_t> tau) {
  const std::size_t m = targets.size();
  GreedyChoice best;
  bool have_best = false;
  std::vector<double> gains;
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& r = state.marginals[k];
    const std::size_t n = r.size();
    gains.resize(n);
    for (std::size_t j = 0; j < n; ++j) gains[j] = scalar_kl(targets[k][j], r[j]);

    const std::size_t size = std::min(tau[k], n);
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + size, order.end(),
                      [&](std::size_t lhs, std::size_t rhs) {
                        if (gains[lhs] != gains[rhs]) return gains[lhs] > gains[rhs];
                        return lhs < rhs;
                      });
    std::vector<std::size_t> indices(order.begin(), order.begin() + size);
    std::sort(indices.begin(), indices.end());

    // Summed in index order so equal sets always give bit-equal values.
    double value = 0.0;
    for (std::size_t j : indices) value += gains[j];

    if (!have_best || value > best.value) {
      best.block = BlockId{k, std::move(indices)};
      best.value = value;
      have_best = true;
    }
  }
  return best;
}

void step(SolverState& state, const BlockId& block, const SolverContext& ctx) {
  const Shape& shape = ctx.shape();
  const std::size_t m = shape.order();
  const std::size_t k = block.axis;
  const Histogram& target = ctx.marginals()[k];
  auto& r_active = state.marginals[k];
  const auto& v = state.potentials.vectors;

  std::vector<std::vector<double>> delta(m);
  for (std::size_t h = 0; h < m; ++h) {
    if (h != k) delta[h].assign(shape.dim(h), 0.0);
  }

  for (std::size_t j : block.indices) {
    const double current = r_active[j];
    if (!(current > 0.0)) {
      throw NumericalBreakdown("cached marginal " + std::to_string(k) +
                               " entry " + std::to_string(j) +
                               " is not positive");
    }
    const double gap = target[j] - current;
    if (gap == 0.0) continue;
    // Slice contribution pi_j (a - r) / r, folded into the exponent.
    const double shift = std::log(std::abs(gap)) - std::log(current);
    const double sign = gap > 0.0 ? 1.0 : -1.0;
    for_each_in_slice(shape, k, j, [&](std::size_t flat, auto index) {
      double exponent = ctx.log_kernel()[flat] + shift;
      for (std::size_t h = 0; h < m; ++h) exponent += v[h][index[h]];
      const double contribution = sign * std::exp(exponent);
      for (std::size_t h = 0; h < m; ++h) {
        if (h != k) delta[h][index[h]] += contribution;
      }
    });
  }

  auto& v_active = state.potentials.vectors[k];
  for (std::size_t j : block.indices) {
    v_active[j] += std::log(target[j]) - std::log(r_active[j]);
    r_active[j] = target[j];
  }
  for (std::size_t h = 0; h < m; ++h) {
    if (h == k) continue;
    auto& r = state.marginals[h];
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] += delta[h][j];
      if (!(r[j] >= kMarginalFloor)) {
        throw NumericalBreakdown(
            "marginal " + std::to_string(h) + " entry " + std::to_string(j) +
            " fell below 1e-300 at iteration " + std::to_string(state.t) +
            "; the problem is too ill-conditioned for this eta, try a "
            "larger eta");
      }
    }
  }
  state.last_block = block;
  ++state.t;
}

double stopping_metric(const SolverState& state,
                       std::span<const Histogram> targets, StoppingMode mode) {
  double worst = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < targets[k].size(); ++j) {
      l1 += std::abs(targets[k][j] - state.marginals[k][j]);
    }
    worst = std::max(worst, l1);
    total += l1;
  }
  return mode == StoppingMode::kMax ? worst : total;
}

void validate(const SolverConfig& config, const Shape& shape) {
  if (!(config.eta > 0.0) || !std::isfinite(config.eta)) {
    throw InvalidArgument("eta must be positive and finite");
  }
  if (!(config.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (config.max_iter && *config.max_iter == 0) {
    throw InvalidArgument("max_iter must be positive");
  }
  if (config.variant == Variant::kGreedyBatch) {
    if (config.tau.size() != 1 && config.tau.size() != shape.order()) {
      throw InvalidArgument("tau needs one entry or one per marginal (" +
                            std::to_string(shape.order()) + ")");
    }
    for (std::size_t t : config.tau) {
      if (t == 0) throw InvalidArgument("batch sizes must be at least 1");
    }
  }
}

std::vector<std::size_t> effective_batch_sizes(const SolverConfig& config,
                                               const Shape& shape) {
  const std::size_t m = shape.order();
  std::vector<std::size_t> tau(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (config.variant != Variant::kGreedyBatch) {
      tau[k] = shape.dim(k);
    } else {
      const std::size_t requested =
          config.tau.size() == 1 ? config.tau[0] : config.tau.at(k);
      tau[k] = std::min(requested, shape.dim(k));
    }
  }
  return tau;
}

std::size_t batch_count(std::span<const std::size_t> tau, const Shape& shape) {
  std::size_t b = 0;
  for (std::size_t k = 0; k < shape.order(); ++k) {
    b += (shape.dim(k) + tau[k] - 1) / tau[k];
  }
  return b;
}

std::optional<std::uint64_t> default_max_iter(const SolverConfig& config,
                                              const Shape& shape,
                                              double cost_sup) {
  const auto params = AnalysisParams::from(config, shape, cost_sup);
  const double c = params.cost_ratio;
  std::optional<double> bound;
  auto consider = [&](double value) {
    if (!bound || value < *bound) bound = value;
  };
  const bool greedy_full = config.variant != Variant::kCyclicFull &&
                           params.full_batch();
  if (greedy_full || (config.variant == Variant::kCyclicFull && params.m == 2)) {
    consider(iteration_bound(BoundForm::kGreedyFull, params.m, c,
                             config.epsilon, config.eta, params.max_ceil()));
  }
  if (params.m == 2 && config.variant != Variant::kCyclicFull) {
    consider(iteration_bound(BoundForm::kBimarginal, params.m, c,
                             config.epsilon, config.eta, params.max_ceil()));
  }
  if (!bound) return std::nullopt;
  constexpr double kCap = 1e15;
  const double scaled = std::min(10.0 * std::ceil(*bound), kCap);
  return static_cast<std::uint64_t>(std::max(scaled, 10.0));
}

namespace {

BlockId cyclic_block(std::uint64_t t, const Shape& shape) {
  const std::size_t k = static_cast<std::size_t>(t % shape.order());
  return full_block(k, shape.dim(k));
}

}  // namespace

Solution solve(const DenseTensor& cost, std::span<const Histogram> marginals,
               const SolverConfig& config, const SolveOptions& options) {
  const Shape& shape = cost.shape();
  validate(config, shape);
  const SolverContext ctx(cost,
                          std::vector<Histogram>(marginals.begin(), marginals.end()),
                          config.eta);
  if (options.reference_plan && !(options.reference_plan->shape() == shape)) {
    throw InvalidArgument("reference plan shape differs from the cost");
  }

  const auto tau = effective_batch_sizes(config, shape);
  std::uint64_t max_iter = 0;
  if (config.max_iter) {
    max_iter = *config.max_iter;
  } else if (auto fallback = default_max_iter(config, shape, cost.max_abs())) {
    max_iter = *fallback;
  } else {
    throw InvalidArgument(
        "max_iter is required: no explicit iteration bound exists for m > 2 "
        "with partial batches");
  }

  SolverState state = initial_state(ctx);
  if (options.on_iterate) options.on_iterate(state);

  Solution solution;
  const auto start = std::chrono::steady_clock::now();
  const bool need_plan = options.record_objective || options.reference_plan;

  auto record = [&](const GreedyChoice* choice, double metric) {
    TraceRow row;
    row.t = state.t;
    row.stopping_metric = metric;
    if (choice) {
      row.axis = choice->block.axis;
      row.batch = choice->block.indices;
      row.batch_size = row.batch.size();
      row.block_distance = choice->value;
    }
    if (need_plan) {
      const DenseTensor plan = ctx.plan(state.potentials);
      if (options.record_objective) {
        row.objective = rmot_objective(cost, config.eta, plan);
      }
      if (options.reference_plan) {
        row.kl_to_opt = kl_divergence(*options.reference_plan, plan);
      }
    }
    if (options.record_timing) {
      row.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    }
    solution.trace.rows.push_back(std::move(row));
  };

  while (true) {
    const double metric = stopping_metric(state, ctx.marginals(), config.stopping);
    if (metric <= config.epsilon) {
      solution.status = SolveStatus::kConverged;
      solution.final_metric = metric;
      record(nullptr, metric);
      break;
    }
    if (state.t >= max_iter) {
      solution.status = SolveStatus::kMaxIter;
      solution.final_metric = metric;
      record(nullptr, metric);
      break;
    }
    GreedyChoice choice;
    if (config.variant == Variant::kCyclicFull) {
      choice.block = cyclic_block(state.t, shape);
      choice.value = block_distance(state.marginals[choice.block.axis],
                                    choice.block,
                                    ctx.marginals()[choice.block.axis]);
    } else {
      choice = greedy_select(state, ctx.marginals(), tau);
      if (!(choice.value > 0.0)) {
        throw NumericalBreakdown(
            "no block improves the iterate at t = " + std::to_string(state.t) +
            " although the stopping metric is " + std::to_string(metric) +
            "; epsilon is below what this precision can resolve");
      }
    }
    record(&choice, metric);
    step(state, choice.block, ctx);
    if (config.refresh_every > 0 && state.t % config.refresh_every == 0) {
      refresh_marginals(state, ctx);
    }
    if (options.on_iterate) options.on_iterate(state);
  }

  solution.iterations = state.t;
  solution.plan = materialize_plan(cost, config.eta, state.potentials, marginals);
  solution.potentials = std::move(state.potentials);
  return solution;
}

}  // namespace rmot
