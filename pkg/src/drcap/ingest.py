"""Load smart-meter traces, build forecast residuals, synthesize scenario
sets, and estimate worst-case support boxes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from drcap.model import ScenarioSet, SupportBox

__all__ = [
    "TraceSeries",
    "SynthConfig",
    "TraceParseError",
    "load_traces",
    "build_residuals",
    "scenarios_from_traces",
    "synthesize",
    "estimate_support",
    "save_scenarios",
    "load_scenarios",
]

TRACE_COLUMNS = ("timestamp", "customer_id", "load_kw")


class TraceParseError(ValueError):
    """Malformed trace or scenario file; message carries the line number."""


@dataclass(frozen=True)
class TraceSeries:
    """One customer's load samples at a uniform interval."""

    customer: int
    timestamps: np.ndarray  # seconds since epoch, strictly increasing
    loads: np.ndarray  # kW

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        ld = np.asarray(self.loads, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "loads", ld)
        if ts.shape != ld.shape:
            raise ValueError("timestamp/load length mismatch")
        if ts.size > 1:
            gaps = np.diff(ts)
            if np.any(gaps <= 0):
                raise ValueError(f"non-monotone timestamps for customer {self.customer}")
            if np.any(gaps != gaps[0]):
                raise ValueError(f"non-uniform sample spacing for customer {self.customer}")

    def __len__(self) -> int:
        return self.timestamps.size


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic scenario generator settings; all draws derive from `seed`."""

    n: int
    T: int
    sigma_delta: float = 0.5
    sigma_r: float = 1.0
    a_mean: float = 1.0
    a_rsd: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.T < 1:
            raise ValueError("n and T must be >= 1")
        if self.sigma_delta < 0 or self.sigma_r < 0:
            raise ValueError("sigmas must be nonnegative")
        if self.a_mean <= 0 or self.a_rsd < 0:
            raise ValueError("a_mean must be positive, a_rsd nonnegative")


def load_traces(path, format: str = "csv") -> list[TraceSeries]:
    """Parse a trace file into one TraceSeries per distinct customer id.

    Expected CSV header: ``timestamp,customer_id,load_kw``. Rows for a
    customer must already be in strictly increasing timestamp order.
    """
    if format != "csv":
        raise ValueError(f"unsupported trace format: {format!r}")
    per_customer: dict[int, list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise TraceParseError(
                f"{path}: line 1: expected header {','.join(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceParseError(f"{path}: line {lineno}: expected 3 columns")
            try:
                ts = int(float(row[0]))
                cid = int(row[1])
                load = float(row[2])
            except ValueError as exc:
                raise TraceParseError(f"{path}: line {lineno}: {exc}") from None
            samples = per_customer.setdefault(cid, [])
            if samples and ts <= samples[-1][0]:
                raise TraceParseError(
                    f"{path}: line {lineno}: non-monotone timestamps for "
                    f"customer {cid}")
            samples.append((ts, load))
    series = []
    for cid in sorted(per_customer):
        ts, loads = zip(*per_customer[cid])
        series.append(TraceSeries(customer=cid, timestamps=np.array(ts),
                                  loads=np.array(loads)))
    return series


def build_residuals(series: TraceSeries, period: int) -> np.ndarray:
    """Forecast-error residuals against a phase-mean predictor.

    The forecast at slot t is the mean load over all slots with the same
    t mod period; the residual is load minus forecast. The series is
    truncated to a whole number of periods.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    if len(series) < period:
        raise ValueError(
            f"series for customer {series.customer} shorter than one period "
            f"({len(series)} < {period})")
    count = (len(series) // period) * period
    loads = series.loads[:count].reshape(-1, period)
    phase_mean = loads.mean(axis=0)
    return (loads - phase_mean).ravel()


def scenarios_from_traces(series: list[TraceSeries], period: int,
                          a_mean: float = 1.0, a_rsd: float = 0.0,
                          sigma_r: float = 0.0, seed: int = 0) -> ScenarioSet:
    """Build a ScenarioSet whose delta_i are forecast residuals of the traces.

    Cost coefficients and the LSE-side mismatch are synthetic (the trace
    format carries neither); both derive deterministically from `seed`.
    """
    if not series:
        raise ValueError("no trace series")
    residuals = [build_residuals(ts, period) for ts in series]
    T = min(len(res) for res in residuals)
    delta = np.column_stack([res[:T] for res in residuals])
    n = delta.shape[1]
    streams = _substreams(seed, n + 1)
    a = np.column_stack([
        _lognormal(streams[i], T, a_mean, a_rsd) for i in range(n)])
    r = _truncated_normal(streams[n], T, sigma_r)
    D = delta.sum(axis=1) - r
    return ScenarioSet(D=D, delta=delta, a=a, r=r)


def _substreams(seed: int, count: int) -> list[np.random.Generator]:
    # One child stream per customer (plus one for r): parallel residual or
    # column generation cannot change the output.
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(count)]


def _truncated_normal(rng: np.random.Generator, size: int, sigma: float,
                      clip: float = 4.0) -> np.ndarray:
    """Zero-mean normal with rejection outside +-clip*sigma."""
    if sigma == 0.0:
        return np.zeros(size)
    out = rng.normal(0.0, sigma, size=size)
    bad = np.abs(out) > clip * sigma
    while np.any(bad):
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > clip * sigma
    return out


def _lognormal(rng: np.random.Generator, size: int, mean: float,
               rsd: float) -> np.ndarray:
    """Lognormal draws with the requested arithmetic mean and std/mean ratio."""
    if rsd == 0.0:
        return np.full(size, mean)
    sigma2 = np.log1p(rsd * rsd)
    mu = np.log(mean) - 0.5 * sigma2
    return rng.lognormal(mu, np.sqrt(sigma2), size=size)


def synthesize(cfg: SynthConfig) -> ScenarioSet:
    """Draw a synthetic ScenarioSet: truncated-normal mismatches, lognormal
    cost coefficients, uniform weights; bit-reproducible for a given seed."""
    streams = _substreams(cfg.seed, cfg.n + 1)
    delta = np.column_stack([
        _truncated_normal(streams[i], cfg.T, cfg.sigma_delta)
        for i in range(cfg.n)])
    a = np.column_stack([
        _lognormal(streams[i], cfg.T, cfg.a_mean, cfg.a_rsd)
        for i in range(cfg.n)])
    r = _truncated_normal(streams[cfg.n], cfg.T, cfg.sigma_r)
    D = delta.sum(axis=1) - r
    return ScenarioSet(D=D, delta=delta, a=a, r=r)


def _scale_out(value: float, margin: float) -> float:
    if value < 0:
        return value * margin
    return value / margin


def _scale_up(value: float, margin: float) -> float:
    if value > 0:
        return value * margin
    return value / margin


def estimate_support(s: ScenarioSet, margin: float = 1.1) -> SupportBox:
    """Empirical min/max of D and each delta_i, widened outward about 0 by
    `margin`. The resulting box contains every scenario sample."""
    if margin < 1.0:
        raise ValueError("margin must be >= 1")
    if s.T < 1:
        raise ValueError("need at least one scenario")
    return SupportBox(
        D_lo=_scale_out(float(s.D.min()), margin),
        D_hi=_scale_up(float(s.D.max()), margin),
        d_lo=np.array([_scale_out(float(v), margin) for v in s.delta.min(axis=0)]),
        d_hi=np.array([_scale_up(float(v), margin) for v in s.delta.max(axis=0)]),
    )


def save_scenarios(s: ScenarioSet, path) -> None:
    """Write the scenario CSV: t,weight,D,r,delta_0..,a_0.. (one row per slot)."""
    path = Path(path)
    header = (["t", "weight", "D", "r"]
              + [f"delta_{i}" for i in range(s.n)]
              + [f"a_{i}" for i in range(s.n)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(s.T):
            row = [t, s.weights[t], s.D[t], s.r[t], *s.delta[t], *s.a[t]]
            writer.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def load_scenarios(path) -> ScenarioSet:
    """Read a scenario CSV written by save_scenarios."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceParseError(f"{path}: empty scenario file")
        n = sum(1 for h in header if h.startswith("delta_"))
        expected = (["t", "weight", "D", "r"]
                    + [f"delta_{i}" for i in range(n)]
                    + [f"a_{i}" for i in range(n)])
        if [h.strip() for h in header] != expected:
            raise TraceParseError(f"{path}: line 1: malformed scenario header")
        weights, D, r, delta, a = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 + 2 * n:
                raise TraceParseError(f"{path}: line {lineno}: expected "
                                      f"{4 + 2 * n} columns")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise TraceParseError(f"{path}: line {lineno}: {exc}") from None
            weights.append(vals[0])
            D.append(vals[1])
            r.append(vals[2])
            delta.append(vals[3:3 + n])
            a.append(vals[3 + n:])
    return ScenarioSet(D=np.array(D), delta=np.array(delta), a=np.array(a),
                       r=np.array(r), weights=np.array(weights))
