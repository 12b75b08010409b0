#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rmot/tensor.hpp"

namespace rmot {

/// Constraint block (k, L): marginal `axis` is matched on `indices` only.
struct BlockId {
  std::size_t axis = 0;
  std::vector<std::size_t> indices;  // strictly increasing, non-empty

  bool operator==(const BlockId&) const = default;
};

/// Validates ordering, distinctness and range against extent `n`.
BlockId make_block(std::size_t axis, std::vector<std::size_t> indices,
                   std::size_t n);
BlockId full_block(std::size_t axis, std::size_t n);

/// Scalar KL term p log(p/q) - p + q. Infinite when q <= 0 < p.
double scalar_kl(double p, double q);

/// Generalized KL divergence between nonnegative arrays. Returns +infinity
/// (never throws) when q vanishes where p does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const DenseTensor& p, const DenseTensor& q);

using WarningHandler = std::function<void(const std::string&)>;
/// Replaces the sink for non-fatal numerical warnings (default: stderr).
/// Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

/// Normalized Gibbs kernel exp(-C/eta) * (a_1 x ... x a_m). Warns when
/// entries underflow to exactly zero.
DenseTensor gibbs_init(const DenseTensor& cost, double eta,
                       std::span<const Histogram> marginals);

/// Entrywise log of gibbs_init, computed without exponentiating so that it
/// stays finite where the kernel itself underflows.
DenseTensor log_gibbs_init(const DenseTensor& cost, double eta,
                           std::span<const Histogram> marginals);

/// Closed-form KL projection onto the block constraint: slices j_k in L are
/// rescaled by a_k[j_k] / R_k(pi)[j_k], everything else is untouched.
DenseTensor project_block(const DenseTensor& plan, const BlockId& block,
                          const Histogram& target);

/// KL distance from `plan` to the block constraint set.
double block_distance(const DenseTensor& plan, const BlockId& block,
                      const Histogram& target);

/// Same quantity from an already known marginal vector, O(|L|).
double block_distance(std::span<const double> current_marginal,
                      const BlockId& block, const Histogram& target);

}  // namespace rmot
