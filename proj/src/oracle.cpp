#include "rmot/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rmot {

namespace {

double max_l1_violation(const DenseTensor& plan, std::span<const Histogram> targets) {
  double worst = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto r = marginal(plan, k);
    double l1 = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) l1 += std::abs(targets[k][j] - r[j]);
    worst = std::max(worst, l1);
  }
  return worst;
}

std::size_t binomial(std::size_t n, std::size_t r, std::size_t cap) {
  r = std::min(r, n - r);
  double value = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    value = value * static_cast<double>(n - r + i) / static_cast<double>(i);
    if (value > static_cast<double>(cap)) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(value));
}

}  // namespace

DenseTensor reference_solution(const DenseTensor& cost,
                               std::span<const Histogram> marginals, double eta,
                               double tol, std::uint64_t iteration_cap) {
  if (!(tol > 0.0) || tol > 1e-10) {
    throw InvalidArgument("reference tolerance must lie in (0, 1e-10]");
  }
  const std::size_t m = cost.shape().order();
  Potentials v = Potentials::zeros(cost.shape());
  for (std::uint64_t t = 0; t <= iteration_cap; ++t) {
    const DenseTensor plan = materialize_plan(cost, eta, v, marginals);
    if (max_l1_violation(plan, marginals) <= tol) return plan;
    const std::size_t k = static_cast<std::size_t>(t % m);
    const auto r = marginal(plan, k);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!(r[j] > 0.0)) {
        throw NumericalBreakdown("reference solve: marginal " + std::to_string(k) +
                                 " entry " + std::to_string(j) + " vanished");
      }
      v.vectors[k][j] += std::log(marginals[k][j]) - std::log(r[j]);
    }
  }
  throw ConvergenceFailure("reference solve did not reach tolerance " +
                           std::to_string(tol) + " within " +
                           std::to_string(iteration_cap) + " iterations");
}

KktReport kkt_residual(const DenseTensor& cost, std::span<const Histogram> marginals,
                       double eta, const DenseTensor& plan) {
  const DenseTensor log_base = log_gibbs_init(cost, eta, marginals);
  if (!(plan.shape() == cost.shape())) throw InvalidArgument("plan shape differs");
  const Shape& shape = plan.shape();
  const std::size_t m = shape.order();

  DenseTensor log_ratio(shape);
  double grand = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (!(plan[i] > 0.0)) {
      throw InvalidArgument("plan entry " + std::to_string(i) + " is not positive");
    }
    log_ratio[i] = std::log(plan[i]) - log_base[i];
    grand += log_ratio[i];
  }
  const double total = static_cast<double>(shape.size());
  grand /= total;

  std::vector<std::vector<double>> means(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = marginal(log_ratio, k);
    const double slice = total / static_cast<double>(shape.dim(k));
    for (double& x : means[k]) x /= slice;
  }

  KktReport report;
  const double md = static_cast<double>(m);
  for_each_index(shape, [&](std::size_t flat, auto index) {
    double additive = -(md - 1.0) * grand;
    for (std::size_t k = 0; k < m; ++k) additive += means[k][index[k]];
    report.range_residual =
        std::max(report.range_residual, std::abs(log_ratio[flat] - additive));
  });
  report.potentials.vectors = means;
  const double share = (md - 1.0) / md * grand;
  for (auto& vk : report.potentials.vectors) {
    for (double& x : vk) x -= share;
  }
  report.feasibility_residual = max_l1_violation(plan, marginals);
  return report;
}

EnumerationResult enumerate_greedy_oracle(const SolverState& state,
                                          std::span<const Histogram> targets,
                                          std::span<const std::size_t> tau,
                                          std::size_t limit) {
  const std::size_t m = targets.size();
  std::size_t total = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t n = targets[k].size();
    total += binomial(n, std::min(tau[k], n), limit);
    if (total > limit) {
      throw InvalidArgument("greedy enumeration exceeds " + std::to_string(limit) +
                            " candidate blocks");
    }
  }

  EnumerationResult result;
  bool have_best = false;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t n = targets[k].size();
    const std::size_t size = std::min(tau[k], n);
    BlockId block{k, std::vector<std::size_t>(size)};
    for (std::size_t i = 0; i < size; ++i) block.indices[i] = i;
    while (true) {
      const double value = block_distance(state.marginals[k], block, targets[k]);
      ++result.candidates;
      if (!have_best || value > result.choice.value) {
        result.choice = GreedyChoice{block, value};
        have_best = true;
      }
      // Next combination in lexicographic order.
      std::size_t pos = size;
      while (pos > 0 && block.indices[pos - 1] == n - size + pos - 1) --pos;
      if (pos == 0) break;
      ++block.indices[pos - 1];
      for (std::size_t i = pos; i < size; ++i) {
        block.indices[i] = block.indices[i - 1] + 1;
      }
    }
  }
  return result;
}

PotentialBoundsReport potential_bounds_report(const Potentials& potentials,
                                              std::span<const Histogram> marginals,
                                              double cost_sup, double eta) {
  const std::size_t m = potentials.order();
  if (marginals.size() != m) throw InvalidArgument("marginal count mismatch");
  const double c = cost_sup / eta;
  const double md = static_cast<double>(m);

  PotentialBoundsReport report;
  report.normalized = potentials;
  double shift_sum = 0.0;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    double mean = 0.0;
    for (std::size_t j = 0; j < marginals[k].size(); ++j) {
      mean += marginals[k][j] * potentials.vectors[k][j];
    }
    for (double& x : report.normalized.vectors[k]) x -= mean;
    shift_sum -= mean;
  }
  for (double& x : report.normalized.vectors[m - 1]) x -= shift_sum;

  report.sum_bound = (4.0 * md - 3.0) * c;
  report.per_vector_bound = (2.0 * md - 1.0) * c;
  report.gap_bound = 2.0 * c;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& u = report.normalized.vectors[k];
    double sup = 0.0;
    for (double x : u) sup = std::max(sup, std::abs(x));
    report.sup_norms.push_back(sup);
    report.sum_sup += sup;
    report.per_vector_pass.push_back(sup <= report.per_vector_bound + 1e-12);

    const auto& v = potentials.vectors[k];
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    report.max_gap = std::max(report.max_gap, *hi - *lo);
  }
  report.sum_pass = report.sum_sup <= report.sum_bound + 1e-12;
  report.gap_pass = report.max_gap <= report.gap_bound + 1e-12;
  if (m == 2) {
    report.bimarginal_applicable = true;
    report.bimarginal_bound = 1.5 * c;
    report.bimarginal_pass =
        std::max(report.sup_norms[0], report.sup_norms[1]) <= report.bimarginal_bound + 1e-12;
  }
  return report;
}

}  // namespace rmot
