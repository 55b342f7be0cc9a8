"""Optimal reserve capacity under perfect real-time dispatch: the planning
lower bound (OPT) and its marginal-price optimality check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drcap.model import CostModel, ScenarioSet
from drcap.numerics import scalar_convex_min
from drcap.realtime import dispatch_quadratic_batch

__all__ = [
    "CapacityResult",
    "expected_dispatch_cost",
    "optimize_capacity",
    "opt_benchmark",
]


@dataclass(frozen=True)
class CapacityResult:
    kappa_star: float
    expected_R: float  # mean optimal per-slot dispatch cost at kappa_star
    total_cost: float
    expected_theta: float  # mean capacity dual at kappa_star


def expected_dispatch_cost(kappa: float, s: ScenarioSet,
                           cm: CostModel) -> tuple[float, float]:
    """Weighted mean of the optimal per-slot dispatch cost and of the
    capacity-constraint dual across scenarios."""
    cost, theta, _ = dispatch_quadratic_batch(s.D, s.a, cm.c_g, kappa)
    return float(np.dot(s.weights, cost)), float(np.dot(s.weights, theta))


def optimize_capacity(s: ScenarioSet, cm: CostModel,
                      tol: float = 1e-6) -> CapacityResult:
    """Minimize p_cap*kappa + E[dispatch cost] over kappa >= 0.

    The subgradient is p_cap minus the mean capacity dual, so bisection on
    its sign converges to a capacity where the marginal cost of capacity
    equals the expected dual price; ties resolve to the smallest minimizer.
    """
    kappa_max = float(np.max(np.abs(s.D), initial=0.0))
    if kappa_max == 0.0:
        er, et = expected_dispatch_cost(0.0, s, cm)
        return CapacityResult(0.0, er, cm.p_cap * 0.0 + er, et)

    def subgrad(kappa: float) -> float:
        _, mean_theta = expected_dispatch_cost(kappa, s, cm)
        return cm.p_cap - mean_theta

    kappa_star = scalar_convex_min(
        lambda k: cm.p_cap * k + expected_dispatch_cost(k, s, cm)[0],
        0.0, kappa_max, tol=tol, subgrad=subgrad)
    er, et = expected_dispatch_cost(kappa_star, s, cm)
    return CapacityResult(kappa_star=float(kappa_star), expected_R=er,
                          total_cost=float(cm.p_cap * kappa_star + er),
                          expected_theta=et)


def opt_benchmark(s: ScenarioSet, cm: CostModel, tol: float = 1e-6) -> float:
    """Social cost of the offline optimum: optimal capacity with perfect
    per-slot dispatch. Lower-bounds every feasible policy."""
    return optimize_capacity(s, cm, tol=tol).total_cost
