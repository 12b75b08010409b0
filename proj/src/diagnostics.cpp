#include "rmot/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace rmot {

double rate_deficit(RateForm form, std::size_t m, double c, std::size_t b_tau,
                    std::optional<double> m1) {
  if (m < 2) throw InvalidArgument("rates need at least two marginals");
  if (!(c >= 0.0)) throw InvalidArgument("|C|/eta must be nonnegative");
  const double md = static_cast<double>(m);
  switch (form) {
    case RateForm::kGeneral:
      if (!m1) throw InvalidArgument("the general rate needs a caller-supplied M1");
      if (b_tau < 2) throw InvalidArgument("b_tau must be at least 2");
      return std::exp(-(2.0 * c + 3.0 * *m1)) / static_cast<double>(b_tau - 1);
    case RateForm::kBimarginal:
      if (m != 2) throw InvalidArgument("the bi-marginal rate requires m = 2");
      if (b_tau < 2) throw InvalidArgument("b_tau must be at least 2");
      return std::exp(-20.0 * c) / static_cast<double>(b_tau - 1);
    case RateForm::kGreedyFull:
      return std::exp(-(12.0 * md - 7.0) * c) / (md - 1.0);
    case RateForm::kCyclic:
      return std::exp(-8.0 * (2.0 * md - 1.0) * c) / md;
  }
  throw InvalidArgument("unknown rate form");
}

double theoretical_rate(RateForm form, std::size_t m, double c,
                        std::size_t b_tau, std::optional<double> m1) {
  return 1.0 - rate_deficit(form, m, c, b_tau, m1);
}

double greedy_full_cycle_deficit(std::size_t m, double c) {
  const double per_step = rate_deficit(RateForm::kGreedyFull, m, c, m);
  // 1 - (1 - y)^m without cancellation.
  return -std::expm1(static_cast<double>(m) * std::log1p(-per_step));
}

double iteration_bound(BoundForm form, std::size_t m, double c, double epsilon,
                       double eta, std::size_t max_ceil,
                       std::optional<double> m2) {
  if (!(epsilon > 0.0) || !(eta > 0.0)) {
    throw InvalidArgument("epsilon and eta must be positive");
  }
  const double ceil_d = static_cast<double>(max_ceil);
  switch (form) {
    case BoundForm::kGeneral:
      if (!m2) throw InvalidArgument("the general bound needs a caller-supplied M2");
      return 2.0 + ceil_d * (5.0 * *m2 / epsilon) * (2.0 + *m2 * eta);
    case BoundForm::kBimarginal: {
      if (m != 2) throw InvalidArgument("the bi-marginal bound requires m = 2");
      const double cost_sup = c * eta;
      return 2.0 + ceil_d * 15.0 * cost_sup * (2.0 + 3.0 * cost_sup) /
                       (eta * epsilon);
    }
    case BoundForm::kGreedyFull:
      return 1.0 + 8.0 * (4.0 * static_cast<double>(m) - 3.0) * c / epsilon;
  }
  throw InvalidArgument("unknown bound form");
}

double normalized_cycles(std::uint64_t t, std::size_t b_tau) {
  return static_cast<double>(t) / static_cast<double>(b_tau);
}

double normalized_iterations(std::uint64_t t, std::size_t m, std::size_t b_tau) {
  return static_cast<double>(t) * static_cast<double>(m) /
         static_cast<double>(b_tau);
}

AnalysisParams AnalysisParams::from(const SolverConfig& config,
                                    const Shape& shape, double cost_sup) {
  AnalysisParams p;
  p.variant = config.variant;
  p.m = shape.order();
  p.cost_ratio = cost_sup / config.eta;
  p.eta = config.eta;
  p.epsilon = config.epsilon;
  p.stopping = config.stopping;
  p.tau = effective_batch_sizes(config, shape);
  p.dims.assign(shape.dims().begin(), shape.dims().end());
  return p;
}

std::size_t AnalysisParams::b_tau() const {
  std::size_t b = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    b += (dims[k] + tau[k] - 1) / tau[k];
  }
  return b;
}

std::size_t AnalysisParams::max_ceil() const {
  std::size_t best = 0;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    best = std::max(best, (dims[k] + tau[k] - 1) / tau[k]);
  }
  return best;
}

bool AnalysisParams::full_batch() const {
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (tau[k] < dims[k]) return false;
  }
  return true;
}

std::vector<double> contraction_ratios(const ConvergenceTrace& trace,
                                       std::size_t stride) {
  std::vector<double> ratios;
  const auto& rows = trace.rows;
  for (std::size_t i = 0; i + stride < rows.size(); i += stride) {
    const double now = rows[i].kl_to_opt.value();
    const double next = rows[i + stride].kl_to_opt.value();
    if (now > kKlFloor) ratios.push_back(next / now);
  }
  return ratios;
}

std::optional<std::uint64_t> iterations_to(const ConvergenceTrace& trace,
                                           double epsilon) {
  for (const auto& row : trace.rows) {
    if (row.stopping_metric <= epsilon) return row.t;
  }
  return std::nullopt;
}

RateVerdict analyze_trace(const ConvergenceTrace& trace,
                          const AnalysisParams& params) {
  for (const auto& row : trace.rows) {
    if (!row.kl_to_opt) {
      throw InvalidArgument("trace analysis needs kl_to_opt on every row");
    }
  }
  RateVerdict verdict;
  verdict.variant = std::string(to_string(params.variant));
  const std::size_t b = params.b_tau();
  const double c = params.cost_ratio;

  for (std::size_t i = 0; i + 1 < trace.rows.size(); ++i) {
    const double now = *trace.rows[i].kl_to_opt;
    const double next = *trace.rows[i + 1].kl_to_opt;
    if (next > now + kRateSlack * std::max(1.0, now)) verdict.monotone = false;
  }

  std::optional<double> deficit;
  auto consider_rate = [&](double d) {
    if (!deficit || d > *deficit) deficit = d;
  };
  if (params.variant == Variant::kCyclicFull) {
    verdict.ratio_stride = params.m;
    consider_rate(rate_deficit(RateForm::kCyclic, params.m, c, b));
  } else {
    if (params.full_batch()) {
      consider_rate(rate_deficit(RateForm::kGreedyFull, params.m, c, b));
    }
    if (params.m == 2) consider_rate(rate_deficit(RateForm::kBimarginal, 2, c, b));
    if (params.m1) {
      consider_rate(rate_deficit(RateForm::kGeneral, params.m, c, b, params.m1));
    }
  }
  const auto ratios = contraction_ratios(trace, verdict.ratio_stride);
  verdict.ratios_checked = ratios.size();
  if (!ratios.empty()) {
    verdict.observed_max_ratio = *std::max_element(ratios.begin(), ratios.end());
  }
  if (deficit) {
    verdict.rate_applicable = true;
    verdict.theoretical_factor = 1.0 - *deficit;
    verdict.pass_rate =
        verdict.observed_max_ratio <= verdict.theoretical_factor + kRateSlack;
  }

  const bool bound_preconditions =
      params.eta > params.epsilon && params.stopping == StoppingMode::kMax &&
      params.variant != Variant::kCyclicFull;
  if (bound_preconditions) {
    std::optional<double> bound;
    auto consider_bound = [&](double value) {
      if (!bound || value < *bound) bound = value;
    };
    if (params.full_batch()) {
      consider_bound(iteration_bound(BoundForm::kGreedyFull, params.m, c,
                                     params.epsilon, params.eta,
                                     params.max_ceil()));
    }
    if (params.m == 2) {
      consider_bound(iteration_bound(BoundForm::kBimarginal, 2, c, params.epsilon,
                                     params.eta, params.max_ceil()));
    }
    if (params.m2) {
      consider_bound(iteration_bound(BoundForm::kGeneral, params.m, c,
                                     params.epsilon, params.eta,
                                     params.max_ceil(), params.m2));
    }
    if (bound) {
      verdict.bound_applicable = true;
      verdict.iteration_bound = bound;
      verdict.observed_iterations = iterations_to(trace, params.epsilon);
      if (verdict.observed_iterations) {
        verdict.pass_bound =
            static_cast<double>(*verdict.observed_iterations) <= *bound;
      } else {
        // Not reaching epsilon only refutes the bound once we ran past it.
        const double last =
            trace.empty() ? 0.0 : static_cast<double>(trace.rows.back().t);
        verdict.pass_bound = last < *bound;
      }
    }
  }

  const std::uint64_t final_t = trace.empty() ? 0 : trace.rows.back().t;
  verdict.normalized_cycles = normalized_cycles(final_t, b);
  verdict.normalized_iterations = normalized_iterations(final_t, params.m, b);
  return verdict;
}

}  // namespace rmot
