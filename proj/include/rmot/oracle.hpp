#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rmot/bregman.hpp"
#include "rmot/solver.hpp"
#include "rmot/tensor.hpp"

// Ground truth for the solver. Nothing here touches the incremental
// marginal path: plans are materialized and marginalized from scratch.

namespace rmot {

inline constexpr double kReferenceTolerance = 1e-12;
inline constexpr std::uint64_t kReferenceIterationCap = 10'000'000;

/// Optimal plan by cyclic full projections until max_k ||a_k - R_k|| <= tol.
/// Throws ConvergenceFailure at the cap.
DenseTensor reference_solution(const DenseTensor& cost,
                               std::span<const Histogram> marginals, double eta,
                               double tol = kReferenceTolerance,
                               std::uint64_t iteration_cap = kReferenceIterationCap);

struct KktReport {
  double feasibility_residual = 0.0;  // max_k ||a_k - R_k(pi)||_1
  double range_residual = 0.0;        // sup-norm of the interaction part
  Potentials potentials;              // additive part of log(pi / pi0)
};

/// Splits log(pi / pi0) into per-axis main effects and an interaction
/// residual (unweighted ANOVA). A KKT point has both residuals ~ 0.
KktReport kkt_residual(const DenseTensor& cost, std::span<const Histogram> marginals,
                       double eta, const DenseTensor& plan);

struct EnumerationResult {
  GreedyChoice choice;
  std::size_t candidates = 0;
};

inline constexpr std::size_t kEnumerationLimit = 1'000'000;

/// Scans every block (k, L) with |L| = min(tau_k, n_k) and keeps the first
/// strict maximizer in (axis, lexicographic L) order.
EnumerationResult enumerate_greedy_oracle(const SolverState& state,
                                          std::span<const Histogram> targets,
                                          std::span<const std::size_t> tau,
                                          std::size_t limit = kEnumerationLimit);

struct PotentialBoundsReport {
  Potentials normalized;          // <a_k, u_k> = 0 for k < m - 1
  std::vector<double> sup_norms;  // ||u_k||_inf
  double sum_sup = 0.0;
  double sum_bound = 0.0;         // (4m - 3) |C| / eta
  double per_vector_bound = 0.0;  // (2m - 1) |C| / eta
  std::vector<bool> per_vector_pass;
  bool sum_pass = true;
  double max_gap = 0.0;           // max_{k,j,l} v_kj - v_kl
  double gap_bound = 0.0;         // 2 |C| / eta
  bool gap_pass = true;
  bool bimarginal_applicable = false;
  double bimarginal_bound = 0.0;  // 3/2 |C| / eta, m = 2 only
  bool bimarginal_pass = true;
};

/// Shifts potentials by constants summing to zero (plan unchanged) and
/// compares the result against the explicit potential bounds. Violations
/// are flagged, never thrown.
PotentialBoundsReport potential_bounds_report(const Potentials& potentials,
                                              std::span<const Histogram> marginals,
                                              double cost_sup, double eta);

}  // namespace rmot
