"""Entropic multimarginal optimal transport by greedy batch Bregman projections.

Thin wrapper over the C++ core. Tensors are C-ordered float64 numpy arrays;
marginals are sequences of 1-d arrays, one per axis.
"""

from ._rmot import (
    ConvergenceFailure,
    IoError,
    NumericalBreakdown,
    ValidationError,
    iteration_bound,
    kkt_residual,
    kl_divergence,
    marginal,
    product_measure,
    reference_solution,
    solve,
    theoretical_rate,
)

__all__ = [
    "ConvergenceFailure",
    "IoError",
    "NumericalBreakdown",
    "ValidationError",
    "iteration_bound",
    "kkt_residual",
    "kl_divergence",
    "marginal",
    "product_measure",
    "reference_solution",
    "solve",
    "theoretical_rate",
]
