"""Distributed negotiation of the linear policy: the LSE posts per-customer
prices on the policy coefficients, customers best-respond from their private
cost realizations, and normalized subgradient price updates run in
bulk-synchronous rounds until the parameter disagreement closes."""

from __future__ import annotations

import socket
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from drcap.linpolicy import (
    DEFAULT_RIDGE,
    LinSolution,
    PolicyCostModel,
    _assemble_qp,
    _split_params,
    _tighten_kappa,
    stacked_second_moment,
)
from drcap.model import CostModel, PolicyParams, ScenarioSet, SupportBox, \
    weighted_moment_matrix
from drcap.numerics import QpWorkspace, ridge_solve

__all__ = [
    "PriceVector",
    "CustomerReply",
    "NegotiationState",
    "NegotiationResult",
    "TransportError",
    "CustomerAgent",
    "LoopbackTransport",
    "SocketTransport",
    "customer_best_response",
    "lse_step",
    "stepsize",
    "update_prices",
    "payment",
    "negotiate",
    "trajectory_table",
]

MSG_PRICE, MSG_REPLY, MSG_TERMINATE = 0, 1, 2
_LEN = struct.Struct(">I")
_FRAME = struct.Struct(">BIddd")  # kind, customer id, three big-endian doubles
ZERO_GAP = 1e-15  # stepsize is undefined at zero gap; terminate instead


class TransportError(RuntimeError):
    """A negotiation round failed at the message layer."""


@dataclass(frozen=True)
class PriceVector:
    """Per-customer prices on the three policy coefficients."""

    pi: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @staticmethod
    def zeros(n: int) -> "PriceVector":
        return PriceVector(np.zeros(n), np.zeros(n), np.zeros(n))

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "PriceVector":
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return PriceVector(mat[:, 0].copy(), mat[:, 1].copy(), mat[:, 2].copy())

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.pi, self.lam, self.mu])

    @property
    def n(self) -> int:
        return len(self.pi)


@dataclass(frozen=True)
class CustomerReply:
    """Per-customer coefficient choices sent back to the LSE."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @staticmethod
    def zeros(n: int) -> "CustomerReply":
        return CustomerReply(np.zeros(n), np.zeros(n), np.zeros(n))

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "CustomerReply":
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return CustomerReply(mat[:, 0].copy(), mat[:, 1].copy(), mat[:, 2].copy())

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.u, self.v, self.w])


@dataclass
class NegotiationState:
    """One negotiation round: prices sent, parameters proposed, replies
    received, and the disagreement norm that drives termination."""

    k: int
    eta: float
    gap_norm: float
    objective: float
    dual_value: float
    prices: PriceVector
    params: PolicyParams
    kappa: float
    replies: CustomerReply


@dataclass
class NegotiationResult:
    solution: LinSolution
    payments: np.ndarray
    states: list[NegotiationState] = field(default_factory=list)
    converged: bool = True
    rounds: int = 0


# -- customer side -----------------------------------------------------------

RANK_TOL = 1e-10  # relative eigenvalue cutoff for costless directions


def customer_best_response(M: np.ndarray, prices, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Customer's coefficient choice for posted prices: the minimizer of
    z'Mz - prices.z, i.e. 0.5 * (M + ridge*I)^-1 * prices.

    When M is singular the problem has no bounded minimizer for generic
    prices; the reply is then the minimum-norm choice (price components
    along the customer's costless directions are ignored), which keeps the
    negotiation's normalized subgradient steps bounded.
    """
    p = np.asarray(prices, dtype=float)
    vals, vecs = np.linalg.eigh(np.asarray(M, dtype=float))
    keep = vals > RANK_TOL * max(float(vals[-1]), 0.0)
    if np.all(keep):
        return ridge_solve(M, 0.5 * p, ridge)
    coeff = np.where(keep, 1.0 / (vals + ridge), 0.0)
    return vecs @ (coeff * (vecs.T @ (0.5 * p)))


@dataclass(frozen=True)
class CustomerAgent:
    """Holds one customer's private cost moments; stateless best responder."""

    cid: int
    M: np.ndarray
    ridge: float = DEFAULT_RIDGE

    def best_response(self, prices) -> np.ndarray:
        return customer_best_response(self.M, prices, self.ridge)


def make_customer_agents(s: ScenarioSet, ridge: float = DEFAULT_RIDGE) -> list[CustomerAgent]:
    """One agent per customer, each built from its own cost realizations."""
    return [CustomerAgent(cid=i, M=weighted_moment_matrix(s, i), ridge=ridge)
            for i in range(s.n)]


# -- transports ---------------------------------------------------------------

class LoopbackTransport:
    """In-process exchange: calls each agent directly in customer-id order."""

    def __init__(self, agents: list[CustomerAgent]):
        self.agents = agents

    def exchange(self, price_mat: np.ndarray) -> np.ndarray:
        replies = np.zeros_like(price_mat)
        for agent in self.agents:
            replies[agent.cid] = agent.best_response(price_mat[agent.cid])
        return replies

    def close(self):
        pass


def _send_frame(sock: socket.socket, kind: int, cid: int, a: float, b: float,
                c: float) -> None:
    payload = _FRAME.pack(kind, cid, a, b, c)
    sock.sendall(_LEN.pack(len(payload)) + payload)


def _recv_exact(sock: socket.socket, nbytes: int) -> bytes | None:
    buf = b""
    while len(buf) < nbytes:
        chunk = sock.recv(nbytes - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _recv_frame(sock: socket.socket):
    head = _recv_exact(sock, _LEN.size)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    if length != _FRAME.size:
        raise TransportError(f"bad frame length {length}")
    body = _recv_exact(sock, length)
    if body is None:
        raise TransportError("truncated frame")
    kind, cid, a, b, c = _FRAME.unpack(body)
    return kind, cid, (a, b, c)


def _serve_customers(conn: socket.socket, agents: list[CustomerAgent]) -> None:
    """Customer-host loop: collect one PRICE frame per customer, then send
    all REPLY frames in customer-id order (bulk-synchronous round)."""
    n = len(agents)
    by_id = {agent.cid: agent for agent in agents}
    prices: dict[int, tuple[float, float, float]] = {}
    try:
        while True:
            frame = _recv_frame(conn)
            if frame is None:
                return
            kind, cid, vals = frame
            if kind == MSG_TERMINATE:
                return
            if kind != MSG_PRICE or cid not in by_id:
                raise TransportError(f"unexpected frame kind={kind} id={cid}")
            prices[cid] = vals
            if len(prices) == n:
                for agent in agents:
                    reply = agent.best_response(np.array(prices[agent.cid]))
                    _send_frame(conn, MSG_REPLY, agent.cid, *reply)
                prices = {}
    except OSError:
        return
    finally:
        conn.close()


class SocketTransport:
    """Length-prefixed binary frames over a stream socket pair; the customer
    host runs on a background thread and must produce trajectories identical
    to the loopback transport."""

    def __init__(self, agents: list[CustomerAgent]):
        self.n = len(agents)
        self._sock, peer = socket.socketpair()
        self._thread = threading.Thread(target=_serve_customers,
                                        args=(peer, agents), daemon=True)
        self._thread.start()
        self._closed = False

    def exchange(self, price_mat: np.ndarray) -> np.ndarray:
        try:
            for i in range(self.n):
                _send_frame(self._sock, MSG_PRICE, i, *price_mat[i])
            replies = np.zeros((self.n, 3))
            seen = set()
            for _ in range(self.n):
                frame = _recv_frame(self._sock)
                if frame is None:
                    raise TransportError("customer host closed the connection")
                kind, cid, vals = frame
                if kind != MSG_REPLY or cid in seen or not 0 <= cid < self.n:
                    raise TransportError(f"unexpected reply frame id={cid}")
                seen.add(cid)
                replies[cid] = vals
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        return replies

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            _send_frame(self._sock, MSG_TERMINATE, 0, 0.0, 0.0, 0.0)
        except OSError:
            pass
        self._thread.join(timeout=5.0)
        self._sock.close()


def _make_transport(kind, agents):
    if kind is None or kind == "loopback":
        return LoopbackTransport(agents)
    if kind == "socket":
        return SocketTransport(agents)
    return kind  # caller-provided transport object


# -- LSE side -----------------------------------------------------------------

def _lse_prox_weight(s: ScenarioSet, cm: CostModel) -> float:
    # Small proximal curvature toward the reply center: resolves the LSE
    # objective's indifference among per-customer splits of sum(alpha) and
    # sum(gamma) without measurably shifting the identified aggregates.
    s_dd = float(s.weights @ (s.D * s.D))
    return 1e-6 * max(1.0, 2.0 * cm.c_g * s_dd)


def _price_projector(s: ScenarioSet) -> np.ndarray | None:
    """Orthonormal basis of the identified price subspace.

    Price updates are projected onto the range of the LSE's structural
    second-moment matrix: along its null directions (per-customer splits of
    sum(alpha)/sum(gamma), and coefficient combinations that no scenario
    distinguishes) the subproblems price nothing, responses are unbounded,
    and the optimal dual prices provably carry no component. Projected
    subgradient ascent stays in this subspace.
    """
    G = stacked_second_moment(s)
    vals, vecs = np.linalg.eigh(G)
    top = max(float(vals[-1]), 0.0)
    keep = vals > 1e-10 * top if top > 0 else np.zeros(len(vals), dtype=bool)
    if np.all(keep):
        return None  # full rank: projection is the identity
    return vecs[:, keep]


def _lse_workspace(s: ScenarioSet, box: SupportBox, cm: CostModel,
                   ridge: float, kappa_reg: float, prox_weight: float) -> QpWorkspace:
    qp = _assemble_qp(s, box, cm, ridge=ridge, kappa_reg=kappa_reg,
                      customer_cost=False,
                      prox_center=np.zeros(3 * s.n), prox_weight=prox_weight)
    return QpWorkspace(qp)


def _solve_lse(ws: QpWorkspace, base_q: np.ndarray, price_flat: np.ndarray,
               center_flat: np.ndarray, prox_weight: float, box: SupportBox,
               n: int, tol: float) -> tuple[PolicyParams, float]:
    q = base_q.copy()
    q[:3 * n] += price_flat - 2.0 * prox_weight * center_flat
    ws.qp.q = q
    res = ws.solve(tol=tol)
    if res.status not in ("optimal", "max_iter_exceeded"):
        raise RuntimeError(f"LSE subproblem solver status: {res.status}")
    params, _ = _split_params(res.x, n)
    return params, _tighten_kappa(params, box)


def lse_step(prices: PriceVector, s: ScenarioSet, box: SupportBox,
             cm: CostModel, tol: float = 1e-8, ridge: float = DEFAULT_RIDGE,
             kappa_reg: float | None = None,
             prox_center: CustomerReply | None = None,
             prox_weight: float | None = None) -> tuple[PolicyParams, float]:
    """One LSE optimization: capacity cost plus price payments plus the
    expected residual cost, under the worst-case capacity constraints.

    The per-customer split of sum(alpha) and sum(gamma) is not identified
    by the objective; a proximal term anchors it at ``prox_center``
    (or zero). No capacity tie-break is applied here: it would slide the
    solution along the optimal face away from the anchor, and the returned
    kappa is tightened to the policy's worst-case width anyway.
    """
    if kappa_reg is None:
        kappa_reg = 0.0
    if prox_weight is None:
        prox_weight = _lse_prox_weight(s, cm)
    n = s.n
    ws = _lse_workspace(s, box, cm, ridge, kappa_reg, prox_weight)
    base_q = ws.qp.q.copy()
    price_flat = np.concatenate([prices.pi, prices.lam, prices.mu])
    center = (prox_center or CustomerReply.zeros(n))
    center_flat = np.concatenate([center.u, center.v, center.w])
    return _solve_lse(ws, base_q, price_flat, center_flat, prox_weight, box,
                      n, tol)


# -- subgradient machinery ----------------------------------------------------

def stepsize(zeta: float, k: int, gap_norm: float) -> float:
    """Diminishing normalized step (zeta/k)/gap_norm."""
    if k < 1:
        raise ValueError("iteration index starts at 1")
    if gap_norm <= 0.0:
        raise ValueError("stepsize undefined at zero gap; terminate instead")
    return (zeta / k) / gap_norm


def update_prices(prices: PriceVector, lse_params: PolicyParams,
                  replies: CustomerReply, eta: float) -> PriceVector:
    """Dual ascent along the parameter disagreement."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    return PriceVector(
        pi=prices.pi + eta * (lse_params.alpha - replies.u),
        lam=prices.lam + eta * (lse_params.beta - replies.v),
        mu=prices.mu + eta * (lse_params.gamma - replies.w),
    )


def payment(prices, reply) -> float:
    """Total payment to one customer: dot of the price and reply triples."""
    return float(np.dot(np.asarray(prices, dtype=float),
                        np.asarray(reply, dtype=float)))


# -- driver -------------------------------------------------------------------

def negotiate(s: ScenarioSet, box: SupportBox, cm: CostModel,
              zeta: float | None = None, epsilon: float | None = None,
              max_rounds: int = 5000, transport="loopback",
              ridge: float = DEFAULT_RIDGE, tol: float = 1e-8,
              use_averaging: bool = False) -> NegotiationResult:
    """Run the bulk-synchronous negotiation to fixed point.

    Each round: the LSE solves its subproblem at the current prices, updates
    the stepsize from the disagreement with the latest replies, posts updated
    prices, and customers best-respond over the transport. Terminates when
    the disagreement norm falls to epsilon, or at max_rounds (flagged).
    """
    n = s.n
    if zeta is None:
        # The 1/k schedule covers only ~zeta*log(K) total price distance, so
        # zeta must carry the price scale; optimal prices scale with the
        # LSE's residual marginal 2*c_g*E[D^2].
        zeta = 0.1 * (1.0 + cm.p_cap) * max(1.0, 2.0 * cm.c_g
                                            * float(s.weights @ (s.D * s.D)))
    if epsilon is None:
        epsilon = 1e-4 * np.sqrt(3.0 * n)
    pcm = PolicyCostModel(s, cm)
    prox_weight = _lse_prox_weight(s, cm)
    ws = _lse_workspace(s, box, cm, ridge, 0.0, prox_weight)
    base_q = ws.qp.q.copy()
    agents = make_customer_agents(s, ridge)
    chan = _make_transport(transport, agents)
    basis = _price_projector(s)

    price_mat = np.zeros((n, 3))
    reply_mat = np.zeros((n, 3))
    states: list[NegotiationState] = []
    converged = False
    avg_sum = np.zeros(3 * n)
    params = PolicyParams.zeros(n)
    kappa = 0.0
    try:
        for k in range(1, max_rounds + 1):
            price_flat = np.concatenate([price_mat[:, 0], price_mat[:, 1],
                                         price_mat[:, 2]])
            center_flat = np.concatenate([reply_mat[:, 0], reply_mat[:, 1],
                                          reply_mat[:, 2]])
            params, kappa = _solve_lse(ws, base_q, price_flat, center_flat,
                                       prox_weight, box, n, tol)
            params_flat = np.concatenate([params.alpha, params.beta,
                                          params.gamma])
            avg_sum += params_flat
            # Dual value at the current prices: LSE and customers both
            # responded to exactly these prices (replies lag one step).
            dual_value = (cm.p_cap * kappa + float(price_flat @ params_flat)
                          + pcm.expected_residual_cost(params)
                          + _customer_dual_terms(agents, price_mat, reply_mat))
            step_vec = params_flat - center_flat
            step_gap = float(np.linalg.norm(step_vec))
            if step_gap < ZERO_GAP:
                states.append(NegotiationState(
                    k=k, eta=0.0, gap_norm=0.0,
                    objective=pcm.planning_objective(params, kappa),
                    dual_value=dual_value,
                    prices=PriceVector.from_matrix(price_mat),
                    params=params, kappa=kappa,
                    replies=CustomerReply.from_matrix(reply_mat)))
                converged = True
                break
            eta = stepsize(zeta, k, step_gap)
            new_flat = price_flat + eta * step_vec
            if basis is not None:
                new_flat = basis @ (basis.T @ new_flat)
            price_mat = new_flat.reshape(3, n).T
            reply_mat = chan.exchange(price_mat)
            gap_norm = float(np.linalg.norm(
                params_flat - np.concatenate([reply_mat[:, 0], reply_mat[:, 1],
                                              reply_mat[:, 2]])))
            states.append(NegotiationState(
                k=k, eta=eta, gap_norm=gap_norm,
                objective=pcm.planning_objective(params, kappa),
                dual_value=dual_value,
                prices=PriceVector.from_matrix(price_mat),
                params=params, kappa=kappa,
                replies=CustomerReply.from_matrix(reply_mat)))
            if gap_norm <= epsilon:
                converged = True
                break
    finally:
        chan.close()

    rounds = states[-1].k if states else 0
    if use_averaging and rounds:
        flat = avg_sum / rounds
        params = PolicyParams(flat[:n], flat[n:2 * n], flat[2 * n:])
        kappa = _tighten_kappa(params, box)
    payments = (price_mat * reply_mat).sum(axis=1)
    solution = LinSolution(
        params=params, kappa=kappa,
        expected_cost=pcm.planning_objective(params, kappa),
        status="optimal" if converged else "max_rounds")
    return NegotiationResult(solution=solution, payments=payments,
                             states=states, converged=converged,
                             rounds=rounds)


def _customer_dual_terms(agents, price_mat, reply_mat) -> float:
    """Sum of customer subproblem values z'Mz - p.z at the latest replies."""
    total = 0.0
    for agent in agents:
        z = reply_mat[agent.cid]
        total += float(z @ agent.M @ z - price_mat[agent.cid] @ z)
    return total


def trajectory_table(states: list[NegotiationState], n: int):
    """Header and rows for the trajectory log CSV:
    k,eta,gap_norm,objective,pi_0,lambda_0,mu_0,..."""
    header = ["k", "eta", "gap_norm", "objective"]
    for i in range(n):
        header += [f"pi_{i}", f"lambda_{i}", f"mu_{i}"]
    rows = []
    for st in states:
        row = [st.k, st.eta, st.gap_norm, st.objective]
        for i in range(n):
            row += [st.prices.pi[i], st.prices.lam[i], st.prices.mu[i]]
        rows.append(row)
    return header, rows
