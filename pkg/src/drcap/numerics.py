"""Reusable dense solvers: a convex QP solver built on operator splitting
with an active-set polish step, a subgradient-bisection scalar minimizer,
and a regularized symmetric linear solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "NumericsError",
    "QuadraticProgram",
    "QpResult",
    "QpWorkspace",
    "solve_qp",
    "scalar_convex_min",
    "ridge_solve",
]

SYM_TOL = 1e-10
DIVERGENCE_RATIO = 1e6  # splitting divergence threshold => infeasible


class NumericsError(RuntimeError):
    """Raised when a factorization or bracketing step fails."""


@dataclass
class QuadraticProgram:
    """min 0.5 x'Px + q'x  s.t.  A x <= b, plus optional variable bounds."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray = None  # type: ignore[assignment]
    b: np.ndarray = None  # type: ignore[assignment]
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        m = self.q.shape[0]
        if self.P.shape != (m, m):
            raise ValueError("P/q dimension mismatch")
        scale = 1.0 + float(np.max(np.abs(self.P), initial=0.0))
        if float(np.max(np.abs(self.P - self.P.T), initial=0.0)) > SYM_TOL * scale:
            raise ValueError("P is not symmetric")
        self.A = np.zeros((0, m)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.zeros(0) if self.b is None else np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.A.shape != (self.b.shape[0], m):
            raise ValueError("A/b dimension mismatch")

    @property
    def num_vars(self) -> int:
        return self.q.shape[0]


@dataclass
class QpResult:
    x: np.ndarray
    duals: np.ndarray
    status: str  # optimal | infeasible | unbounded | max_iter_exceeded
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int


def _fold_bounds(qp: QuadraticProgram) -> tuple[np.ndarray, np.ndarray, int]:
    """Append finite variable bounds to A x <= b as extra rows."""
    rows, rhs = [qp.A], [qp.b]
    m = qp.num_vars
    if qp.ub is not None:
        ub = np.asarray(qp.ub, dtype=float)
        idx = np.where(np.isfinite(ub))[0]
        rows.append(np.eye(m)[idx])
        rhs.append(ub[idx])
    if qp.lb is not None:
        lb = np.asarray(qp.lb, dtype=float)
        idx = np.where(np.isfinite(lb))[0]
        rows.append(-np.eye(m)[idx])
        rhs.append(-lb[idx])
    return np.vstack(rows), np.concatenate(rhs), qp.b.shape[0]


class QpWorkspace:
    """Single-owner solver state: cached KKT factorization plus warm-start
    iterates, reusable across repeated solves that only change q."""

    def __init__(self, qp: QuadraticProgram, sigma: float = 1e-6,
                 alpha: float = 1.6, rho: float = 0.1):
        self.qp = qp
        A, b, self._num_base = _fold_bounds(qp)
        # Row equilibration keeps rho meaningful across mixed-scale constraints.
        norms = np.max(np.abs(A), axis=1, initial=0.0) if A.size else np.ones(A.shape[0])
        self._row_scale = np.where(norms > 0, 1.0 / np.maximum(norms, 1e-12), 1.0)
        self.A = A * self._row_scale[:, None]
        self.b = b * self._row_scale
        self.sigma = sigma
        self.alpha = alpha
        self.rho = rho
        m, k = qp.num_vars, self.A.shape[0]
        self.x = np.zeros(m)
        self.z = np.zeros(k)
        self.y = np.zeros(k)
        self._factor = None
        self._factor_rho = None

    # -- internals ---------------------------------------------------------

    def _refactor(self):
        K = self.qp.P + self.sigma * np.eye(self.qp.num_vars)
        if self.A.shape[0]:
            K = K + self.rho * (self.A.T @ self.A)
        try:
            self._factor = sla.cho_factor(K, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericsError(f"KKT factorization failed: {exc}") from exc
        self._factor_rho = self.rho

    def _residuals(self, x, y):
        """Unscaled primal violation and dual residual plus their scales."""
        qp = self.qp
        Ax = self.A @ x
        pri = float(np.max(np.maximum(Ax - self.b, 0.0), initial=0.0))
        pri_scale = max(1.0, float(np.max(np.abs(Ax), initial=0.0)),
                        float(np.max(np.abs(self.b), initial=0.0)))
        Px = qp.P @ x
        Aty = self.A.T @ y if y.size else np.zeros_like(x)
        dua = float(np.max(np.abs(Px + qp.q + Aty), initial=0.0))
        dua_scale = max(1.0, float(np.max(np.abs(Px), initial=0.0)),
                        float(np.max(np.abs(qp.q), initial=0.0)),
                        float(np.max(np.abs(Aty), initial=0.0)))
        return pri, pri_scale, dua, dua_scale

    def _polish(self, tol: float):
        """Solve the equality-constrained KKT system on the detected active
        set, with up to a few add/drop refinement rounds."""
        qp, A, b = self.qp, self.A, self.b
        m, k = qp.num_vars, A.shape[0]
        if k == 0:
            return None
        active = self.y > 0.0
        best = None
        for _ in range(4):
            na = int(active.sum())
            G = A[active]
            reg = 1e-9 * max(1.0, float(np.max(np.abs(qp.P), initial=0.0)))
            K = np.zeros((m + na, m + na))
            K[:m, :m] = qp.P + reg * np.eye(m)
            K[:m, m:] = G.T
            K[m:, :m] = G
            K[m:, m:] = -reg * np.eye(na)
            rhs = np.concatenate([-qp.q, b[active]])
            try:
                lu = sla.lu_factor(K, check_finite=False)
            except sla.LinAlgError:
                return best
            sol = sla.lu_solve(lu, rhs, check_finite=False)
            # One round of iterative refinement against the unregularized system.
            K0 = K.copy()
            K0[:m, :m] = qp.P
            K0[m:, m:] = 0.0
            sol += sla.lu_solve(lu, rhs - K0 @ sol, check_finite=False)
            xp, nu = sol[:m], sol[m:]
            yp = np.zeros(k)
            yp[active] = np.maximum(nu, 0.0)
            pri, ps, dua, ds = self._residuals(xp, yp)
            comp = float(np.max(np.abs(yp * (b - A @ xp)), initial=0.0))
            score = max(pri / ps, dua / ds, comp / ps)
            if best is None or score < best[0]:
                best = (score, xp, yp)
            # Add/drop: violated rows join, negative multipliers leave.
            viol = A @ xp - b > tol * ps
            drop = np.zeros(k, dtype=bool)
            drop[active] = nu < -tol * ds
            new_active = (active | viol) & ~drop
            if np.array_equal(new_active, active):
                break
            active = new_active
        return best

    def _certify_infeasible(self, dy: np.ndarray) -> bool:
        nd = float(np.max(np.abs(dy), initial=0.0))
        if nd <= 1e-12:
            return False
        atd = float(np.max(np.abs(self.A.T @ dy), initial=0.0))
        return atd <= 1e-8 * nd and float(self.b @ dy) < -1e-8 * nd

    def _finish(self, status, x, y, pri, dua, iters) -> QpResult:
        duals = y * self._row_scale  # undo row equilibration
        obj = float(0.5 * x @ (self.qp.P @ x) + self.qp.q @ x)
        return QpResult(x=x, duals=duals, status=status, objective=obj,
                        primal_residual=pri, dual_residual=dua, iterations=iters)

    # -- entry point -------------------------------------------------------

    def solve(self, tol: float = 1e-8, max_iter: int = 20000) -> QpResult:
        qp = self.qp
        m, k = qp.num_vars, self.A.shape[0]
        if k == 0:
            try:
                x = sla.cho_solve(sla.cho_factor(qp.P, check_finite=False), -qp.q,
                                  check_finite=False)
            except sla.LinAlgError:
                x, *_ = np.linalg.lstsq(qp.P, -qp.q, rcond=None)
                if float(np.max(np.abs(qp.P @ x + qp.q), initial=0.0)) > tol * (
                        1.0 + float(np.max(np.abs(qp.q), initial=0.0))):
                    return self._finish("unbounded", x, np.zeros(0), 0.0, np.inf, 0)
            self.x = x
            return self._finish("optimal", x, np.zeros(0), 0.0, 0.0, 0)

        if self._factor is None or self._factor_rho != self.rho:
            self._refactor()
        x, z, y = self.x, self.z, self.y
        # The splitting loop runs loose: it only needs to identify the active
        # set; the polish step reaches tol. On failed polish the loop tightens.
        eps_admm = max(tol * 100.0, 1e-5)
        y_mark = y.copy()
        guard = DIVERGENCE_RATIO * (1.0 + float(np.max(np.abs(self.b), initial=0.0))
                                    + float(np.max(np.abs(qp.q), initial=0.0)))
        it = 0
        for it in range(1, max_iter + 1):
            rhs = self.sigma * x - qp.q + self.A.T @ (self.rho * z - y)
            xt = sla.cho_solve(self._factor, rhs, check_finite=False)
            zt = self.A @ xt
            x = self.alpha * xt + (1.0 - self.alpha) * x
            w = self.alpha * zt + (1.0 - self.alpha) * z + y / self.rho
            z = np.minimum(w, self.b)
            y = self.rho * (w - z)

            if it % 25 == 0 or it == max_iter:
                pri, ps, dua, ds = self._residuals(x, y)
                if pri <= eps_admm * ps and dua <= eps_admm * ds:
                    self.x, self.z, self.y = x, z, y
                    polished = self._polish(tol)
                    if polished is not None and polished[0] <= tol:
                        _, xp, yp = polished
                        prp, _, dup, _ = self._residuals(xp, yp)
                        return self._finish("optimal", xp, yp, prp, dup, it)
                    if pri <= tol * ps and dua <= tol * ds:
                        return self._finish("optimal", x, y, pri, dua, it)
                    eps_admm = max(tol, eps_admm / 10.0)
                if self._certify_infeasible(y - y_mark):
                    return self._finish("infeasible", x, y, pri, dua, it)
                y_mark = y.copy()
                if float(np.max(np.abs(y), initial=0.0)) > guard:
                    return self._finish("infeasible", x, y, pri, dua, it)
                if float(np.max(np.abs(x), initial=0.0)) > guard:
                    return self._finish("unbounded", x, y, pri, dua, it)
                if it % 100 == 0 and dua > 0 and pri > 0:
                    ratio = np.sqrt((pri / ps) / (dua / ds))
                    if ratio > 5.0 or ratio < 0.2:
                        self.rho = float(np.clip(self.rho * ratio, 1e-6, 1e6))
                        self._refactor()

        self.x, self.z, self.y = x, z, y
        pri, ps, dua, ds = self._residuals(x, y)
        polished = self._polish(tol)
        if polished is not None and polished[0] <= tol:
            _, xp, yp = polished
            prp, _, dup, _ = self._residuals(xp, yp)
            return self._finish("optimal", xp, yp, prp, dup, it)
        return self._finish("max_iter_exceeded", x, y, pri, dua, it)


def solve_qp(qp: QuadraticProgram, tol: float = 1e-8,
             max_iter: int = 20000) -> QpResult:
    """One-shot convex QP solve; see QpWorkspace for warm-started reuse."""
    return QpWorkspace(qp).solve(tol=tol, max_iter=max_iter)


def scalar_convex_min(f, lo: float, hi: float, tol: float = 1e-8,
                      subgrad=None) -> float:
    """Minimize a convex scalar function on [lo, hi] by bisecting on the
    subgradient sign. Returns the left end of a final interval of width
    <= tol that contains a minimizer; ties break toward the smallest one.
    """
    if lo > hi:
        raise ValueError("empty interval")
    if subgrad is None:
        h = max(1e-7 * (hi - lo), 1e-12)

        def subgrad(x, _f=f, _h=h):
            return (_f(min(x + _h, hi)) - _f(max(x - _h, lo))) / (2.0 * _h)

    a, b = float(lo), float(hi)
    for _ in range(200):
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        g = subgrad(mid)
        if g < 0.0:
            a = mid
        else:
            # g >= 0: a minimizer lies at or left of mid; keep the left part
            # so that flat regions resolve to the smallest minimizer.
            b = mid
    return a


def ridge_solve(M: np.ndarray, rhs: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Solve (M + ridge*I) x = rhs for symmetric PSD M via Cholesky."""
    M = np.asarray(M, dtype=float)
    K = M + ridge * np.eye(M.shape[0]) if ridge else M
    try:
        return sla.cho_solve(sla.cho_factor(K, check_finite=False),
                             np.asarray(rhs, dtype=float), check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericsError(f"symmetric factorization failed: {exc}") from exc
