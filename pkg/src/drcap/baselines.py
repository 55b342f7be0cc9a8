"""Sequential baseline: buy conservative capacity first, then post one DR
price targeted at a fraction of the expected mismatch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drcap.ingest import estimate_support
from drcap.model import CostModel, ScenarioSet, SupportBox, social_cost

__all__ = ["SeqResult", "seq_capacity", "seq_price", "simulate_seq"]


@dataclass(frozen=True)
class SeqResult:
    kappa_seq: float
    price: float
    cost: float


def seq_capacity(box: SupportBox) -> float:
    """Conservative capacity covering the worst-case |D| in the box."""
    return max(abs(box.D_lo), abs(box.D_hi))


def seq_price(s: ScenarioSet, target_fraction: float = 1.0) -> float:
    """Posted price at which the expected aggregate response equals
    target_fraction * E[|D|].

    A customer facing price p responds with magnitude p / (2 a_i(t)), the
    first-order condition of a_i x^2 - p x.
    """
    if not 0.0 <= target_fraction <= 1.0:
        raise ValueError("target_fraction must lie in [0, 1]")
    mean_abs_D = float(np.dot(s.weights, np.abs(s.D)))
    mean_response = float(np.dot(s.weights, (0.5 / s.a).sum(axis=1)))
    if mean_response <= 0.0:
        raise ValueError("degenerate response denominator")
    return target_fraction * mean_abs_D / mean_response


def simulate_seq(s: ScenarioSet, cm: CostModel, target_fraction: float = 1.0,
                 box: SupportBox | None = None) -> SeqResult:
    """Social cost of the sequential baseline.

    Customers respond to the posted price in the direction that reduces the
    slot's mismatch; capacity is the conservative worst-case |D| (from the
    margin-free empirical box unless one is supplied).
    """
    if box is None:
        box = estimate_support(s, margin=1.0)
    kappa = seq_capacity(box)
    price = seq_price(s, target_fraction)
    x = np.sign(s.D)[:, None] * (0.5 * price / s.a)
    cost = social_cost(s, x, kappa, cm)
    return SeqResult(kappa_seq=kappa, price=price, cost=cost)
