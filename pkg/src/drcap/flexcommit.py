"""Opt-out simulation of the linear policy: each customer may drop to
x_i = 0 in up to a 1-rho fraction of slots, chosen by a per-customer
threshold on their realized cost coefficient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drcap.linpolicy import LinSolution
from drcap.model import CostModel, PolicyParams, ScenarioSet

__all__ = [
    "OptOutRule",
    "optout_threshold",
    "simulate_linplus",
    "sweep_rho",
    "default_overflow_price",
]


@dataclass(frozen=True)
class OptOutRule:
    """Commitment level rho plus the per-customer cost thresholds above
    which a slot is skipped."""

    rho: float
    thresholds: np.ndarray


def optout_threshold(a_samples: np.ndarray, rho: float) -> float:
    """Empirical rho-quantile with lower interpolation.

    A customer opts out of slot t when a_i(t) exceeds the threshold, so at
    most a 1-rho fraction of slots (plus one slot of quantile slack) is
    skipped. rho = 0 returns -inf (always opt out); rho = 1 the max sample.
    """
    a = np.sort(np.asarray(a_samples, dtype=float))
    if a.size == 0:
        raise ValueError("empty sample set")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    count = int(np.floor(rho * a.size + 1e-9))
    if count == 0:
        return -np.inf
    return float(a[count - 1])


def default_overflow_price(s: ScenarioSet, cm: CostModel) -> float:
    """Ten times the LSE's worst in-band marginal cost (2*c_g*max|D|):
    a stiff emergency price for residual beyond the purchased capacity.

    Opt-out sweeps are usually run with p_em = 0 instead; planned capacity
    carries no headroom, so any positive emergency price swamps the
    commitment trade-off that the sweep is meant to expose.
    """
    d_max = float(np.max(np.abs(s.D), initial=0.0))
    return 10.0 * 2.0 * cm.c_g * d_max


def simulate_linplus(p: PolicyParams, kappa: float, s: ScenarioSet,
                     cm: CostModel, rho: float) -> tuple[float, np.ndarray]:
    """Social cost of the policy when customers skip their highest-cost
    slots, with residual beyond the capacity priced at cm.p_em.

    Returns (cost, per-customer realized opt-out fractions).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    x = p.dispatch(s.D, s.delta)
    thresholds = np.array([optout_threshold(s.a[:, i], rho) for i in range(s.n)])
    opted_out = s.a > thresholds
    x = np.where(opted_out, 0.0, x)
    y = s.D - x.sum(axis=1)
    overflow = np.maximum(np.abs(y) - kappa, 0.0)
    per_slot = (s.a * x * x).sum(axis=1) + cm.c_g * y * y + cm.p_em * overflow
    cost = float(cm.p_cap * kappa + np.dot(s.weights, per_slot))
    return cost, opted_out.mean(axis=0)


def sweep_rho(lin: LinSolution, s: ScenarioSet, cm: CostModel,
              grid) -> list[tuple[float, float, float]]:
    """Evaluate simulate_linplus over a commitment grid.

    Returns (rho, social cost, mean opt-out fraction) per grid point.
    """
    grid = [float(r) for r in grid]
    if not grid:
        raise ValueError("empty rho grid")
    if any(not 0.0 <= r <= 1.0 for r in grid):
        raise ValueError("rho grid values must lie in [0, 1]")
    out = []
    for rho in grid:
        cost, fractions = simulate_linplus(lin.params, lin.kappa, s, cm, rho)
        out.append((rho, cost, float(fractions.mean())))
    return out
