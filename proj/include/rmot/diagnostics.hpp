#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmot/solver.hpp"
#include "rmot/trace.hpp"

namespace rmot {

/// Which closed-form contraction factor to evaluate.
enum class RateForm {
  kGeneral,     // 1 - e^{-(2c + 3 M1)} / (b_tau - 1), needs M1
  kBimarginal,  // m = 2, any tau: 1 - e^{-20c} / (b_tau - 1)
  kGreedyFull,  // full batches, any m: 1 - e^{-(12m - 7)c} / (m - 1)
  kCyclic,      // cyclic Sinkhorn, per cycle of m projections:
                // 1 - e^{-8(2m - 1)c} / m
};

/// Which closed-form iteration-complexity bound to evaluate.
enum class BoundForm {
  kGeneral,     // 2 + max_ceil * 5 M2 (2 + M2 eta) / eps, needs M2
  kBimarginal,  // 2 + max_ceil * 15 |C| (2 + 3 |C|) / (eta eps)
  kGreedyFull,  // 1 + 8 (4m - 3) |C| / (eta eps)
};

/// 1 - rho for the chosen form, evaluated without cancellation so that
/// factors extremely close to one can still be compared. `c` is |C|_inf/eta.
double rate_deficit(RateForm form, std::size_t m, double c, std::size_t b_tau,
                    std::optional<double> m1 = std::nullopt);
double theoretical_rate(RateForm form, std::size_t m, double c,
                        std::size_t b_tau,
                        std::optional<double> m1 = std::nullopt);

/// Deficit of the greedy full-batch factor compounded over m iterations, to
/// be compared with rate_deficit(kCyclic, ...) cycle for cycle.
double greedy_full_cycle_deficit(std::size_t m, double c);

double iteration_bound(BoundForm form, std::size_t m, double c, double epsilon,
                       double eta, std::size_t max_ceil,
                       std::optional<double> m2 = std::nullopt);

/// Iterations expressed in full cycles over all marginals, t / b_tau.
double normalized_cycles(std::uint64_t t, std::size_t b_tau);
/// Iterations expressed in full-batch projections, t * m / b_tau (equal to
/// tau t / n for uniform shapes with tau dividing n).
double normalized_iterations(std::uint64_t t, std::size_t m, std::size_t b_tau);

/// Ratios below this KL value are rounding noise and are not checked.
inline constexpr double kKlFloor = 1e-14;
inline constexpr double kRateSlack = 1e-12;

struct AnalysisParams {
  Variant variant = Variant::kGreedyBatch;
  std::size_t m = 2;
  double cost_ratio = 0.0;  // |C|_inf / eta
  double eta = 1.0;
  double epsilon = 1e-9;
  StoppingMode stopping = StoppingMode::kMax;
  std::vector<std::size_t> tau;  // effective batch sizes
  std::vector<std::size_t> dims;
  std::optional<double> m1;
  std::optional<double> m2;

  static AnalysisParams from(const SolverConfig& config, const Shape& shape,
                             double cost_sup);
  std::size_t b_tau() const;
  std::size_t max_ceil() const;
  bool full_batch() const;
};

struct RateVerdict {
  std::string variant;
  /// Factor for one ratio (per iteration, or per cycle for cyclic runs).
  double theoretical_factor = 1.0;
  std::size_t ratio_stride = 1;
  double observed_max_ratio = 0.0;
  std::size_t ratios_checked = 0;
  std::optional<double> iteration_bound;
  std::optional<std::uint64_t> observed_iterations;
  double normalized_cycles = 0.0;
  double normalized_iterations = 0.0;
  bool rate_applicable = false;
  bool pass_rate = true;
  bool bound_applicable = false;
  bool pass_bound = true;
  bool monotone = true;

  bool passed() const { return pass_rate && pass_bound && monotone; }
  bool operator==(const RateVerdict&) const = default;
};

/// Checks one recorded run against every closed-form rate and bound that
/// applies to its variant. Throws if the trace carries no kl_to_opt.
RateVerdict analyze_trace(const ConvergenceTrace& trace,
                          const AnalysisParams& params);

/// Per-ratio sequence KL_{t+s} / KL_t over rows above the floor.
std::vector<double> contraction_ratios(const ConvergenceTrace& trace,
                                       std::size_t stride = 1);

/// First t with stopping metric <= epsilon, if any.
std::optional<std::uint64_t> iterations_to(const ConvergenceTrace& trace,
                                           double epsilon);

}  // namespace rmot
