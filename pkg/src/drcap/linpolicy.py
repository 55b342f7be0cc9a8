"""Centralized planning of the linear DR policy: assemble the joint QP over
policy coefficients and capacity with vertex-lifted worst-case constraints,
solve it, and evaluate realized policy cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from drcap.model import CostModel, PolicyParams, ScenarioSet, SupportBox, \
    social_cost, weighted_moment_matrix
from drcap.numerics import QpWorkspace, QuadraticProgram

__all__ = [
    "LinSolution",
    "InfeasiblePolicyError",
    "PolicyCostModel",
    "worst_case_bounds",
    "stacked_second_moment",
    "assemble_lin_qp",
    "solve_lin",
    "evaluate_policy",
]

DEFAULT_RIDGE = 1e-9
FEAS_SLACK = 1e-6


class InfeasiblePolicyError(ValueError):
    """Policy residual exceeds the purchased capacity."""


@dataclass(frozen=True)
class LinSolution:
    """Planned linear policy with its capacity and planning objective."""

    params: PolicyParams
    kappa: float
    expected_cost: float
    status: str


def worst_case_bounds(p: PolicyParams, box: SupportBox) -> tuple[float, float]:
    """Extreme residual values (y_max, y_min) of y = (1-sum(alpha))*D
    - sum(beta_i*delta_i) - sum(gamma) over the support box.

    Exact for box supports: a linear function attains its extrema
    coordinatewise at the interval endpoints.
    """
    cD = 1.0 - float(p.alpha.sum())
    hi = max(cD * box.D_lo, cD * box.D_hi)
    lo = min(cD * box.D_lo, cD * box.D_hi)
    for i in range(p.n):
        hi += max(-p.beta[i] * box.d_lo[i], -p.beta[i] * box.d_hi[i])
        lo += min(-p.beta[i] * box.d_lo[i], -p.beta[i] * box.d_hi[i])
    g = float(p.gamma.sum())
    return hi - g, lo - g


class PolicyCostModel:
    """Precomputed scenario moments for fast exact evaluation of the
    planning objective E[sum_i a_i x_i^2 + c_g y^2] of a linear policy."""

    def __init__(self, s: ScenarioSet, cm: CostModel):
        self.cm = cm
        self.n = s.n
        w = s.weights
        self.M = [weighted_moment_matrix(s, i) for i in range(s.n)]
        self.S_DD = float(w @ (s.D * s.D))
        self.S_Dd = (w * s.D) @ s.delta
        self.S_D = float(w @ s.D)
        self.S_dd = s.delta.T @ (w[:, None] * s.delta)
        self.S_d = w @ s.delta

    def expected_customer_cost(self, p: PolicyParams) -> float:
        """E[sum_i a_i x_i^2] via the per-customer moment matrices."""
        cust = 0.0
        for i in range(self.n):
            z = np.array([p.alpha[i], p.beta[i], p.gamma[i]])
            cust += float(z @ self.M[i] @ z)
        return cust

    def expected_residual_cost(self, p: PolicyParams) -> float:
        """c_g * E[y^2] for the policy residual y = D - sum_i x_i."""
        A = float(p.alpha.sum())
        G = float(p.gamma.sum())
        b = p.beta
        e_dx = A * self.S_DD + float(b @ self.S_Dd) + G * self.S_D
        e_xx = (A * A * self.S_DD + 2 * A * float(b @ self.S_Dd)
                + 2 * A * G * self.S_D + float(b @ self.S_dd @ b)
                + 2 * G * float(b @ self.S_d) + G * G)
        return self.cm.c_g * (self.S_DD - 2 * e_dx + e_xx)

    def expected_policy_cost(self, p: PolicyParams) -> float:
        """E[sum a_i x_i^2] + c_g E[y^2] via the moment expansion."""
        return self.expected_customer_cost(p) + self.expected_residual_cost(p)

    def planning_objective(self, p: PolicyParams, kappa: float) -> float:
        return self.cm.p_cap * kappa + self.expected_policy_cost(p)


def stacked_second_moment(s: ScenarioSet) -> np.ndarray:
    """E[c c'] for the stacked residual coefficient vector c(t) whose dot
    with (alpha, beta, gamma) gives sum_i x_i(t): the structural quadratic
    of the LSE residual term (no cost scaling)."""
    n = s.n
    w = s.weights
    ia, ib, ig = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    S_DD = float(w @ (s.D * s.D))
    S_Dd = (w * s.D) @ s.delta
    S_D = float(w @ s.D)
    S_dd = s.delta.T @ (w[:, None] * s.delta)
    S_d = w @ s.delta
    G = np.empty((3 * n, 3 * n))
    G[ia, ia] = S_DD
    G[ia, ib] = np.broadcast_to(S_Dd, (n, n))
    G[ib, ia] = np.broadcast_to(S_Dd[:, None], (n, n))
    G[ia, ig] = S_D
    G[ig, ia] = S_D
    G[ib, ib] = S_dd
    G[ib, ig] = np.broadcast_to(S_d[:, None], (n, n))
    G[ig, ib] = np.broadcast_to(S_d, (n, n))
    G[ig, ig] = 1.0
    return G


def _assemble_qp(s: ScenarioSet, box: SupportBox, cm: CostModel, *,
                 ridge: float, kappa_reg: float = 0.0,
                 customer_cost: bool = True,
                 prices: np.ndarray | None = None,
                 prox_center: np.ndarray | None = None,
                 prox_weight: float = 0.0) -> QuadraticProgram:
    """Shared QP assembly for the centralized planner and the LSE's
    negotiation step.

    Variables: [alpha(n), beta(n), gamma(n), kappa, sD+, sD-, s+(n), s-(n)].
    The epigraph auxiliaries linearize the componentwise max/min of the
    worst-case residual; two inequalities per auxiliary plus the two cover
    constraints and kappa >= 0 give 4(n+1)+3 rows.
    """
    n = s.n
    m = 5 * n + 3
    ia = slice(0, n)
    ib = slice(n, 2 * n)
    ig = slice(2 * n, 3 * n)
    ik = 3 * n
    isDp, isDm = 3 * n + 1, 3 * n + 2
    isp = slice(3 * n + 3, 4 * n + 3)
    ism = slice(4 * n + 3, 5 * n + 3)

    P = np.zeros((m, m))
    q = np.zeros(m)
    w = s.weights

    if customer_cost:
        for i in range(n):
            M = weighted_moment_matrix(s, i)
            idx = np.array([i, n + i, 2 * n + i])
            P[np.ix_(idx, idx)] += 2.0 * M

    # LSE residual term c_g * E[(D - sum_i x_i)^2]
    S_DD = float(w @ (s.D * s.D))
    S_Dd = (w * s.D) @ s.delta
    S_D = float(w @ s.D)
    P[:3 * n, :3 * n] += 2.0 * cm.c_g * stacked_second_moment(s)
    q[ia] += -2.0 * cm.c_g * S_DD
    q[ib] += -2.0 * cm.c_g * S_Dd
    q[ig] += -2.0 * cm.c_g * S_D

    q[ik] += cm.p_cap + kappa_reg
    P[:3 * n, :3 * n] += 2.0 * ridge * np.eye(3 * n)
    if prices is not None:
        q[:3 * n] += prices
    if prox_weight > 0.0 and prox_center is not None:
        P[:3 * n, :3 * n] += 2.0 * prox_weight * np.eye(3 * n)
        q[:3 * n] += -2.0 * prox_weight * prox_center

    k_rows = 4 * (n + 1) + 3
    A = np.zeros((k_rows, m))
    b = np.zeros(k_rows)
    # sD+ >= (1 - sum(alpha)) * bound,  sD- <= (1 - sum(alpha)) * bound
    for j, bound in enumerate((box.D_lo, box.D_hi)):
        A[j, ia] = -bound
        A[j, isDp] = -1.0
        b[j] = -bound
        A[2 + j, ia] = bound
        A[2 + j, isDm] = 1.0
        b[2 + j] = bound
    # s_i+ >= -beta_i * bound,  s_i- <= -beta_i * bound
    for i in range(n):
        base = 4 + 4 * i
        for j, bound in enumerate((box.d_lo[i], box.d_hi[i])):
            A[base + j, n + i] = -bound
            A[base + j, 3 * n + 3 + i] = -1.0
            A[base + 2 + j, n + i] = bound
            A[base + 2 + j, 4 * n + 3 + i] = 1.0
    r = 4 * (n + 1)
    # upper cover: sD+ + sum s_i+ - sum gamma <= kappa
    A[r, isDp] = 1.0
    A[r, isp] = 1.0
    A[r, ig] = -1.0
    A[r, ik] = -1.0
    # lower cover: sD- + sum s_i- - sum gamma >= -kappa
    A[r + 1, isDm] = -1.0
    A[r + 1, ism] = -1.0
    A[r + 1, ig] = 1.0
    A[r + 1, ik] = -1.0
    # kappa >= 0
    A[r + 2, ik] = -1.0
    return QuadraticProgram(P=P, q=q, A=A, b=b)


def assemble_lin_qp(s: ScenarioSet, box: SupportBox, cm: CostModel,
                    ridge: float = DEFAULT_RIDGE,
                    kappa_reg: float = 0.0) -> QuadraticProgram:
    """QP for the joint policy-and-capacity problem under the linear policy.

    ``kappa_reg`` adds a tiny linear capacity term that breaks ties toward
    the smallest feasible capacity when the capacity price is zero.
    """
    return _assemble_qp(s, box, cm, ridge=ridge, kappa_reg=kappa_reg)


def _split_params(x: np.ndarray, n: int) -> tuple[PolicyParams, float]:
    return PolicyParams(x[:n], x[n:2 * n], x[2 * n:3 * n]), float(x[3 * n])


def _tighten_kappa(p: PolicyParams, box: SupportBox) -> float:
    """Smallest capacity covering the worst-case residual of the policy.

    Never increases the planning objective (the capacity price is
    nonnegative) and removes residual solver slack on the cover rows.
    """
    y_max, y_min = worst_case_bounds(p, box)
    return max(0.0, y_max, -y_min)


def default_kappa_reg(cm: CostModel) -> float:
    return 1e-6 * (1.0 + cm.p_cap)


def solve_lin(s: ScenarioSet, box: SupportBox, cm: CostModel,
              tol: float = 1e-8, ridge: float = DEFAULT_RIDGE,
              kappa_reg: float | None = None) -> LinSolution:
    """Solve the centralized linear-policy planning problem.

    Returns policy coefficients, the (tightened) capacity, and the planning
    objective evaluated without regularization terms.
    """
    if kappa_reg is None:
        kappa_reg = default_kappa_reg(cm)
    qp = assemble_lin_qp(s, box, cm, ridge=ridge, kappa_reg=kappa_reg)
    res = QpWorkspace(qp).solve(tol=tol)
    params, _ = _split_params(res.x, s.n)
    kappa = _tighten_kappa(params, box)
    cost = PolicyCostModel(s, cm).planning_objective(params, kappa)
    return LinSolution(params=params, kappa=kappa, expected_cost=cost,
                       status=res.status)


def evaluate_policy(p: PolicyParams, kappa: float, s: ScenarioSet,
                    cm: CostModel, box: SupportBox | None = None) -> float:
    """Realized social cost of a linear policy on a scenario set.

    Raises InfeasiblePolicyError when the residual leaves the capacity band
    (on any scenario, or in the worst case over ``box`` when given).
    """
    if box is not None:
        y_max, y_min = worst_case_bounds(p, box)
        if y_max > kappa + FEAS_SLACK or y_min < -kappa - FEAS_SLACK:
            raise InfeasiblePolicyError(
                f"worst-case residual [{y_min:.6g}, {y_max:.6g}] exceeds "
                f"capacity {kappa:.6g}")
    x = p.dispatch(s.D, s.delta)
    y = s.D - x.sum(axis=1)
    worst = float(np.max(np.abs(y), initial=0.0))
    if worst > kappa + FEAS_SLACK:
        raise InfeasiblePolicyError(
            f"realized residual {worst:.6g} exceeds capacity {kappa:.6g}")
    return social_cost(s, x, kappa, cm)
