"""Per-timeslot dispatch: split a mismatch across customers and the LSE
residual at minimum cost subject to the capacity band on the residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "DispatchResult",
    "dispatch_quadratic",
    "dispatch_quadratic_batch",
    "dispatch_general",
    "kappa_subgradient",
]


@dataclass(frozen=True)
class DispatchResult:
    """Optimal DR amounts, residual, capacity-band duals, and realized cost.

    theta_lo / theta_hi are the nonnegative multipliers of y >= -kappa and
    y <= kappa; at most one is nonzero, and -(theta_lo + theta_hi) is a
    subgradient of the optimal cost with respect to kappa.
    """

    x: np.ndarray
    y: float
    theta_lo: float
    theta_hi: float
    cost: float


def dispatch_quadratic(D: float, a: np.ndarray, c_g: float,
                       kappa: float) -> DispatchResult:
    """Closed-form dispatch for quadratic costs a_i*x^2 and c_g*y^2.

    Interior solutions equalize marginal costs (2*a_i*x_i = 2*c_g*y); when
    the unconstrained residual leaves [-kappa, kappa] it is clamped and the
    overflow is split across customers in proportion to 1/a_i.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("cost coefficients must be positive")
    if c_g < 0 or kappa < 0:
        raise ValueError("c_g and kappa must be nonnegative")
    inv_a = 1.0 / a
    H = float(inv_a.sum())
    y0 = D / (1.0 + c_g * H)
    if abs(y0) <= kappa:
        x = (c_g * inv_a) * y0
        cost = c_g * y0 * y0 * (1.0 + c_g * H)
        return DispatchResult(x=x, y=float(y0), theta_lo=0.0, theta_hi=0.0,
                              cost=float(cost))
    if H == 0.0:
        raise ValueError("no customers to absorb mismatch beyond capacity")
    if y0 > kappa:
        y = kappa
        S = D - kappa
        theta_hi = 2.0 * S / H - 2.0 * c_g * kappa
        theta_lo = 0.0
    else:
        y = -kappa
        S = D + kappa
        theta_lo = -2.0 * c_g * kappa - 2.0 * S / H
        theta_hi = 0.0
    x = S * inv_a / H
    cost = S * S / H + c_g * kappa * kappa
    return DispatchResult(x=x, y=float(y), theta_lo=float(theta_lo),
                          theta_hi=float(theta_hi), cost=float(cost))


def dispatch_quadratic_batch(D: np.ndarray, a: np.ndarray, c_g: float,
                             kappa: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized dispatch across scenarios; same math as dispatch_quadratic.

    Returns (cost, theta, y) arrays over the T scenarios, where theta is the
    sum of the two capacity duals.
    """
    D = np.asarray(D, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if np.any(a <= 0):
        raise ValueError("cost coefficients must be positive")
    H = (1.0 / a).sum(axis=1)
    y0 = D / (1.0 + c_g * H)
    y = np.clip(y0, -kappa, kappa)
    S = D - y
    interior = np.abs(y0) <= kappa
    with np.errstate(divide="ignore", invalid="ignore"):
        shared = np.where(H > 0, 2.0 * S / np.where(H > 0, H, 1.0), np.inf)
    theta = np.where(interior, 0.0, np.abs(shared) - 2.0 * c_g * kappa)
    cost = np.where(interior, c_g * y0 * y0 * (1.0 + c_g * H),
                    S * S / np.where(H > 0, H, 1.0) + c_g * kappa * kappa)
    if np.any(~interior & (H == 0.0)):
        raise ValueError("no customers to absorb mismatch beyond capacity")
    return cost, theta, y


def _invert_increasing(phi, target: float, tol: float, span: float):
    """Solve phi(x) = target for a strictly increasing phi by bracketing."""
    lo, hi = -span, span
    flo, fhi = phi(lo) - target, phi(hi) - target
    for _ in range(200):
        if flo <= 0.0 <= fhi:
            return brentq(lambda x: phi(x) - target, lo, hi,
                          xtol=tol, rtol=8.881784197001252e-16)
        lo, hi = 2.0 * lo, 2.0 * hi
        flo, fhi = phi(lo) - target, phi(hi) - target
    raise ValueError("non-monotone marginal detected (bracket failure)")


def dispatch_general(D: float, costs, marginals, lse_cost, lse_marginal,
                     kappa: float, tol: float = 1e-10) -> DispatchResult:
    """Dispatch for arbitrary convex costs given their strictly increasing
    marginal functions: finds the shared marginal price by monotone
    root-finding, then clamps the residual to the capacity band.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n = len(marginals)
    span = 1.0 + abs(D)

    def x_at(m: float) -> np.ndarray:
        return np.array([_invert_increasing(marginals[i], m, tol, span)
                         for i in range(n)])

    def balance(m: float) -> float:
        return float(x_at(m).sum()) + _invert_increasing(lse_marginal, m, tol, span) - D

    m_star = _invert_increasing(balance, 0.0, tol, span)
    y = _invert_increasing(lse_marginal, m_star, tol, span)
    theta_lo = theta_hi = 0.0
    if y > kappa:
        y = kappa

        def cust_balance(m: float) -> float:
            return float(x_at(m).sum()) - (D - kappa)

        m_star = _invert_increasing(cust_balance, 0.0, tol, span)
        theta_hi = max(0.0, m_star - lse_marginal(kappa))
    elif y < -kappa:
        y = -kappa

        def cust_balance(m: float) -> float:
            return float(x_at(m).sum()) - (D + kappa)

        m_star = _invert_increasing(cust_balance, 0.0, tol, span)
        theta_lo = max(0.0, lse_marginal(-kappa) - m_star)
    x = x_at(m_star)
    cost = float(sum(costs[i](x[i]) for i in range(n)) + lse_cost(y))
    return DispatchResult(x=x, y=float(y), theta_lo=theta_lo,
                          theta_hi=theta_hi, cost=cost)


def kappa_subgradient(res: DispatchResult) -> float:
    """Subgradient of the optimal per-slot cost with respect to kappa."""
    return -(res.theta_lo + res.theta_hi)
