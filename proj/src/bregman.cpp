#include "rmot/bregman.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>

namespace rmot {

namespace {

std::mutex& handler_mutex() {
  static std::mutex mu;
  return mu;
}

WarningHandler& handler_slot() {
  static WarningHandler handler = [](const std::string& message) {
    std::cerr << "rmot warning: " << message << '\n';
  };
  return handler;
}

void check_cost(const DenseTensor& cost, double eta,
                std::span<const Histogram> marginals) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  const Shape& shape = cost.shape();
  if (marginals.size() != shape.order()) {
    throw InvalidArgument("need one histogram per tensor axis");
  }
  for (std::size_t k = 0; k < shape.order(); ++k) {
    if (marginals[k].size() != shape.dim(k)) {
      throw InvalidArgument("histogram " + std::to_string(k) +
                            " does not match the cost extent");
    }
  }
  for (std::size_t i = 0; i < cost.size(); ++i) {
    if (cost[i] < 0.0) {
      throw InvalidArgument("cost entry " + std::to_string(i) + " is negative");
    }
  }
}

void check_block(const Shape& shape, const BlockId& block,
                 const Histogram& target) {
  if (block.axis >= shape.order()) throw InvalidArgument("block axis out of range");
  if (target.size() != shape.dim(block.axis)) {
    throw InvalidArgument("target histogram does not match the block axis");
  }
  make_block(block.axis, block.indices, shape.dim(block.axis));
}

}  // namespace

BlockId make_block(std::size_t axis, std::vector<std::size_t> indices,
                   std::size_t n) {
  if (indices.empty()) throw InvalidArgument("block index set is empty");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw InvalidArgument("block index out of range");
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw InvalidArgument("block indices must be strictly increasing");
    }
  }
  return BlockId{axis, std::move(indices)};
}

BlockId full_block(std::size_t axis, std::size_t n) {
  std::vector<std::size_t> all(n);
  for (std::size_t j = 0; j < n; ++j) all[j] = j;
  return BlockId{axis, std::move(all)};
}

double scalar_kl(double p, double q) {
  if (p == 0.0) return q;
  if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
  // q * phi(x) with x = p/q - 1 and phi(x) = (1 + x) log(1 + x) - x. The
  // textbook form cancels near p = q and can even turn negative, which breaks
  // greedy selection once iterates are close to feasible.
  const double x = (p - q) / q;
  if (std::abs(x) < 1e-2) {
    const double series =
        0.5 + x * (-1.0 / 6 + x * (1.0 / 12 + x * (-1.0 / 20 + x * (1.0 / 30 +
        x * (-1.0 / 42 + x * (1.0 / 56))))));
    return q * x * x * series;
  }
  return q * ((1.0 + x) * std::log1p(x) - x);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("KL arguments differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0) throw InvalidArgument("KL first argument must be nonnegative");
    total += scalar_kl(p[i], q[i]);
  }
  // Rounding can leave a tiny negative sum near equality.
  return total < 0.0 ? 0.0 : total;
}

double kl_divergence(const DenseTensor& p, const DenseTensor& q) {
  if (!(p.shape() == q.shape())) throw InvalidArgument("KL arguments differ in shape");
  return kl_divergence(p.values(), q.values());
}

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  WarningHandler previous = std::move(handler_slot());
  handler_slot() = std::move(handler);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (handler_slot()) handler_slot()(message);
}

DenseTensor log_gibbs_init(const DenseTensor& cost, double eta,
                           std::span<const Histogram> marginals) {
  check_cost(cost, eta, marginals);
  std::vector<std::vector<double>> log_a(marginals.size());
  for (std::size_t k = 0; k < marginals.size(); ++k) {
    for (double x : marginals[k].values()) log_a[k].push_back(std::log(x));
  }
  DenseTensor out(cost.shape());
  for_each_index(cost.shape(), [&](std::size_t flat, auto index) {
    double value = -cost[flat] / eta;
    for (std::size_t k = 0; k < index.size(); ++k) value += log_a[k][index[k]];
    out[flat] = value;
  });
  return out;
}

DenseTensor gibbs_init(const DenseTensor& cost, double eta,
                       std::span<const Histogram> marginals) {
  DenseTensor out = log_gibbs_init(cost, eta, marginals);
  std::size_t underflow = 0;
  for (auto& x : out.values()) {
    x = std::exp(x);
    if (x == 0.0) ++underflow;
  }
  if (underflow > 0) {
    warn(std::to_string(underflow) +
         " Gibbs kernel entries underflowed to zero; consider a larger eta");
  }
  return out;
}

DenseTensor project_block(const DenseTensor& plan, const BlockId& block,
                          const Histogram& target) {
  check_block(plan.shape(), block, target);
  const std::vector<double> current = marginal(plan, block.axis);
  DenseTensor out = plan;
  for (std::size_t j : block.indices) {
    if (!(current[j] > 0.0)) {
      throw NumericalBreakdown("restricted marginal " + std::to_string(j) +
                               " on axis " + std::to_string(block.axis) +
                               " vanishes; projection undefined");
    }
    const double scale = target[j] / current[j];
    for_each_in_slice(plan.shape(), block.axis, j,
                      [&](std::size_t flat, auto) { out[flat] *= scale; });
  }
  return out;
}

double block_distance(std::span<const double> current_marginal,
                      const BlockId& block, const Histogram& target) {
  double total = 0.0;
  for (std::size_t j : block.indices) {
    if (!(current_marginal[j] > 0.0)) {
      throw NumericalBreakdown("restricted marginal " + std::to_string(j) +
                               " on axis " + std::to_string(block.axis) +
                               " vanishes; block distance undefined");
    }
    total += scalar_kl(target[j], current_marginal[j]);
  }
  return total;
}

double block_distance(const DenseTensor& plan, const BlockId& block,
                      const Histogram& target) {
  check_block(plan.shape(), block, target);
  return block_distance(marginal(plan, block.axis), block, target);
}

}  // namespace rmot
