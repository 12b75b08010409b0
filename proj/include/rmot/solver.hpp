#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmot/bregman.hpp"
#include "rmot/tensor.hpp"
#include "rmot/trace.hpp"

namespace rmot {

enum class Variant {
  kGreedyBatch,  // greedy block with up to tau_k components
  kGreedyFull,   // greedy marginal, whole marginal fixed (MultiSinkhorn)
  kCyclicFull,   // round-robin over marginals (cyclic Sinkhorn)
};

enum class StoppingMode {
  kMax,  // max_k ||a_k - r_k||_1
  kSum,  // sum_k ||a_k - r_k||_1
};

std::string_view to_string(Variant variant);
std::string_view to_string(StoppingMode mode);
Variant parse_variant(std::string_view text);
StoppingMode parse_stopping_mode(std::string_view text);

/// Cached marginals below this value abort the run.
inline constexpr double kMarginalFloor = 1e-300;

struct SolverConfig {
  double eta = 1.0;
  /// Per-marginal batch sizes. A single entry broadcasts; entries larger
  /// than the extent are clipped. Ignored by the full-batch variants.
  std::vector<std::size_t> tau;
  double epsilon = 1e-9;
  Variant variant = Variant::kGreedyBatch;
  StoppingMode stopping = StoppingMode::kMax;
  /// Unset means ten times the closed-form iteration bound, which is only
  /// available for m = 2 or full batches.
  std::optional<std::uint64_t> max_iter;
  /// Recompute cached marginals from scratch every this many steps; 0 never.
  std::size_t refresh_every = 0;
};

/// Problem data shared by every step: the log of the normalized Gibbs
/// kernel is computed once. The cost tensor must outlive the context.
class SolverContext {
 public:
  SolverContext(const DenseTensor& cost, std::vector<Histogram> marginals,
                double eta);

  const Shape& shape() const { return log_kernel_.shape(); }
  std::size_t order() const { return marginals_.size(); }
  double eta() const { return eta_; }
  const DenseTensor& cost() const { return *cost_; }
  std::span<const Histogram> marginals() const { return marginals_; }
  const DenseTensor& log_kernel() const { return log_kernel_; }
  /// ||C||_inf / eta.
  double cost_ratio() const { return cost_ratio_; }

  /// pi = exp(log_kernel + sum_k v_k) for the given potentials.
  DenseTensor plan(const Potentials& potentials) const;

 private:
  const DenseTensor* cost_;
  std::vector<Histogram> marginals_;
  double eta_;
  DenseTensor log_kernel_;
  double cost_ratio_;
};

struct SolverState {
  Potentials potentials;
  /// Cached r_k = R_k(pi^t).
  std::vector<std::vector<double>> marginals;
  std::uint64_t t = 0;
  std::optional<BlockId> last_block;
};

struct GreedyChoice {
  BlockId block;
  double value = 0.0;  // KL(a_k|L, r_k|L)

  bool operator==(const GreedyChoice&) const = default;
};

enum class SolveStatus { kConverged, kMaxIter };
std::string_view to_string(SolveStatus status);

struct Solution {
  Potentials potentials;
  DenseTensor plan;
  SolveStatus status = SolveStatus::kMaxIter;
  std::uint64_t iterations = 0;
  double final_metric = 0.0;
  ConvergenceTrace trace;
};

struct SolveOptions {
  bool record_objective = true;
  /// When set, every trace row carries KL(reference, pi^t).
  const DenseTensor* reference_plan = nullptr;
  /// Disable to write zero wall times (byte-reproducible traces).
  bool record_timing = true;
  /// Called with the initial state and after every step.
  std::function<void(const SolverState&)> on_iterate;
};

/// v = 0 and marginals of the normalized Gibbs kernel. Refuses to start if a
/// marginal entry is not strictly positive.
SolverState initial_state(const SolverContext& ctx);

/// Per-component KL of the cached marginals, top tau_k per marginal, best
/// marginal wins. Ties: smallest axis, then smallest indices.
GreedyChoice greedy_select(const SolverState& state,
                           std::span<const Histogram> targets,
                           std::span<const std::size_t> tau);

/// Projects onto `block`, updating potentials and every cached marginal
/// incrementally in O(|L| prod_{h != k} n_h).
void step(SolverState& state, const BlockId& block, const SolverContext& ctx);

double stopping_metric(const SolverState& state,
                       std::span<const Histogram> targets, StoppingMode mode);

/// Marginals of the plan the potentials describe, recomputed from scratch.
std::vector<std::vector<double>> scratch_marginals(const SolverState& state,
                                                   const SolverContext& ctx);
void refresh_marginals(SolverState& state, const SolverContext& ctx);

/// Batch sizes actually used: broadcast, clipped, or forced to n_k.
std::vector<std::size_t> effective_batch_sizes(const SolverConfig& config,
                                               const Shape& shape);
/// b_tau = sum_k ceil(n_k / tau_k).
std::size_t batch_count(std::span<const std::size_t> tau, const Shape& shape);
/// Ten times the explicit iteration bound, when one applies.
std::optional<std::uint64_t> default_max_iter(const SolverConfig& config,
                                              const Shape& shape,
                                              double cost_sup);

void validate(const SolverConfig& config, const Shape& shape);

Solution solve(const DenseTensor& cost, std::span<const Histogram> marginals,
               const SolverConfig& config, const SolveOptions& options = {});

}  // namespace rmot
