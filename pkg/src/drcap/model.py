"""Core domain types: scenario sets, cost models, policies, and shared cost math."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScenarioSet",
    "CostModel",
    "SupportBox",
    "PolicyParams",
    "CapacityDecision",
    "ValidationReport",
    "validate_scenarios",
    "weighted_moment_matrix",
    "social_cost",
]

# Tolerance for the D = sum(delta) - r consistency identity, relative to data scale.
IDENTITY_RTOL = 1e-9
WEIGHT_SUM_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    a = np.array(values, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScenarioSet:
    """Joint per-timeslot samples of the aggregate mismatch, per-customer
    mismatches, per-customer cost coefficients, and the LSE-side mismatch.

    Shapes: ``D``, ``r``, ``weights`` are length ``T``; ``delta`` and ``a``
    are ``T x n``. Weights default to uniform and must sum to 1.
    """

    D: np.ndarray
    delta: np.ndarray
    a: np.ndarray
    r: np.ndarray
    weights: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "D", _frozen_array(self.D))
        object.__setattr__(self, "delta", _frozen_array(np.atleast_2d(self.delta)))
        object.__setattr__(self, "a", _frozen_array(np.atleast_2d(self.a)))
        object.__setattr__(self, "r", _frozen_array(self.r))
        T = self.D.shape[0]
        if self.weights is None:
            w = np.full(T, 1.0 / T) if T else np.empty(0)
        else:
            w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", _frozen_array(w))
        if self.delta.shape[0] != T or self.a.shape != self.delta.shape \
                or self.r.shape[0] != T or self.weights.shape[0] != T:
            raise ValueError("inconsistent scenario dimensions")

    @property
    def n(self) -> int:
        return self.delta.shape[1]

    @property
    def T(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class CostModel:
    """Quadratic cost instantiation: customer cost a_i(t)*x^2, LSE mismatch
    cost c_g*y^2, linear capacity price, and the emergency price charged on
    residual beyond the purchased capacity (used only by opt-out simulation).
    """

    c_g: float = 1.0
    p_cap: float = 0.0
    p_em: float = 0.0

    def __post_init__(self):
        if self.c_g < 0 or self.p_cap < 0 or self.p_em < 0:
            raise ValueError("cost model coefficients must be nonnegative")


@dataclass(frozen=True)
class SupportBox:
    """Componentwise bounds on the aggregate mismatch D and each delta_i,
    the domain over which worst-case residual constraints are enforced."""

    D_lo: float
    D_hi: float
    d_lo: np.ndarray
    d_hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_lo", _frozen_array(self.d_lo))
        object.__setattr__(self, "d_hi", _frozen_array(self.d_hi))
        if self.D_lo > self.D_hi or np.any(self.d_lo > self.d_hi):
            raise ValueError("support box has lo > hi")

    @property
    def n(self) -> int:
        return self.d_lo.shape[0]

    def contains(self, s: ScenarioSet, atol: float = 0.0) -> bool:
        return bool(
            np.all(s.D >= self.D_lo - atol) and np.all(s.D <= self.D_hi + atol)
            and np.all(s.delta >= self.d_lo - atol)
            and np.all(s.delta <= self.d_hi + atol)
        )


@dataclass(frozen=True)
class PolicyParams:
    """Linear policy coefficients: x_i = alpha_i * D + beta_i * delta_i + gamma_i."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen_array(self.alpha))
        object.__setattr__(self, "beta", _frozen_array(self.beta))
        object.__setattr__(self, "gamma", _frozen_array(self.gamma))
        if not (self.alpha.shape == self.beta.shape == self.gamma.shape):
            raise ValueError("policy coefficient lengths differ")
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))
                and np.all(np.isfinite(self.gamma))):
            raise ValueError("policy coefficients must be finite")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @staticmethod
    def zeros(n: int) -> "PolicyParams":
        return PolicyParams(np.zeros(n), np.zeros(n), np.zeros(n))

    def dispatch(self, D: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Evaluate x_i(t) for scenario arrays D (T,) and delta (T, n)."""
        D = np.asarray(D, dtype=float)
        return D[:, None] * self.alpha + np.atleast_2d(delta) * self.beta + self.gamma


@dataclass(frozen=True)
class CapacityDecision:
    """Reserve capacity purchased ahead of real time, in kW."""

    kappa: float

    def __post_init__(self):
        if not (self.kappa >= 0):
            raise ValueError("capacity must be nonnegative")


@dataclass
class ValidationReport:
    """Outcome of scenario-set validation; failures lists violated invariants."""

    ok: bool
    failures: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def validate_scenarios(s: ScenarioSet) -> ValidationReport:
    """Check the scenario-set invariants and report every violation found."""
    failures = []
    if np.any(s.a <= 0):
        bad = int(np.argwhere(s.a <= 0)[0][1])
        failures.append(f"nonpositive cost coefficient (first at customer {bad})")
    resid = s.D - (s.delta.sum(axis=1) - s.r)
    scale = 1.0 + float(np.max(np.abs(s.D), initial=0.0))
    if np.any(np.abs(resid) > IDENTITY_RTOL * scale):
        t = int(np.argmax(np.abs(resid)))
        failures.append(
            f"consistency identity D = sum(delta) - r violated (worst at t={t}, "
            f"residual {resid[t]:.3g})"
        )
    if np.any(s.weights < 0):
        failures.append("negative scenario weight")
    if s.T and abs(float(s.weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
        failures.append(f"weights sum to {float(s.weights.sum()):.15g}, expected 1")
    if not (np.all(np.isfinite(s.D)) and np.all(np.isfinite(s.delta))
            and np.all(np.isfinite(s.r)) and np.all(np.isfinite(s.a))):
        failures.append("non-finite scenario value")
    return ValidationReport(ok=not failures, failures=failures)


def weighted_moment_matrix(s: ScenarioSet, i: int, ridge: float = 0.0) -> np.ndarray:
    """Weighted second-moment matrix of z(t) = (D(t), delta_i(t), 1) under
    customer i's cost coefficients:

        M = sum_t weight(t) * a_i(t) * z(t) z(t)^T + ridge * I

    This is the quadratic form of customer i's expected cost of a linear
    response: E[a_i * (u*D + v*delta_i + w)^2] = (u,v,w)^T M (u,v,w).
    """
    if not 0 <= i < s.n:
        raise IndexError(f"customer index {i} out of range")
    Z = np.column_stack([s.D, s.delta[:, i], np.ones(s.T)])
    wa = s.weights * s.a[:, i]
    M = Z.T @ (wa[:, None] * Z)
    M = 0.5 * (M + M.T)
    if ridge:
        M = M + ridge * np.eye(3)
    return M


def social_cost(s: ScenarioSet, dispatch: np.ndarray, kappa: float,
                cm: CostModel) -> float:
    """Expected social cost of a dispatch schedule: capacity cost plus the
    weighted average of customer DR costs and the LSE's residual cost.

    ``dispatch`` is a (T, n) array of per-slot DR amounts. The kappa bound on
    the residual is NOT enforced here; callers enforce or penalize it.
    """
    x = np.atleast_2d(np.asarray(dispatch, dtype=float))
    if x.shape != (s.T, s.n):
        raise ValueError(f"dispatch shape {x.shape} does not match scenarios "
                         f"({s.T}, {s.n})")
    y = s.D - x.sum(axis=1)
    per_slot = (s.a * x * x).sum(axis=1) + cm.c_g * y * y
    return float(cm.p_cap * kappa + np.dot(s.weights, per_slot))
