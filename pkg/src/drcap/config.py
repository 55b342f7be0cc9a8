"""Experiment configuration: flat key=value files with dotted keys plus
command-line overrides, validated into a typed config object."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "parse_grid"]

ALGORITHMS = ("OPT", "LIN", "LIN_DIST", "LINPLUS", "SEQ")


class ConfigError(ValueError):
    """Invalid configuration; message names the offending key."""


def parse_grid(text: str) -> list[float]:
    """Parse a grid: comma list ("0,0.5,1") or range ("start:stop:step")."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad grid range {text!r}, expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError(f"grid step must be positive in {text!r}")
        count = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(count + 1)
                if start + i * step <= stop + 1e-12]
    vals = [float(p) for p in text.split(",") if p.strip()]
    if not vals:
        raise ConfigError(f"empty grid {text!r}")
    return vals


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class ExperimentConfig:
    """All knobs for the experiment runner; see KEYS for the file schema."""

    # scenario source: scenario file > trace file > synthetic
    scenarios_path: str | None = None
    trace_path: str | None = None
    trace_period: int = 24
    synth_n: int = 300
    synth_T: int = 1000
    synth_sigma_delta: float = 0.5
    synth_sigma_r: float = 1.0
    # Default pool: per-customer DR is ~n times steeper than the LSE's
    # mismatch cost, so customer and LSE cost shares are comparable and the
    # capacity/commitment trade-offs are non-trivial.
    synth_a_mean: float = 300.0
    synth_a_rsd: float = 0.3
    # cost model
    c_g: float = 1.0
    p_cap: float = 0.2
    p_em: float | str = 0.0  # number, or "auto" for the 10x marginal rule
    # support estimation
    margin: float = 1.1
    # sweeps
    pcap_grid: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.5, 1.0])
    rho_grid: list[float] = field(
        default_factory=lambda: [round(0.05 * i, 2) for i in range(21)])
    rsd_list: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    # algorithms for the comparison table
    algos: list[str] = field(default_factory=lambda: ["OPT", "LIN", "SEQ"])
    # SEQ posted-price target
    seq_tau: float = 1.0
    # negotiation
    neg_zeta: float | None = None
    neg_epsilon: float | None = None
    neg_max_rounds: int = 5000
    neg_transport: str = "loopback"
    neg_averaging: bool = False
    # solver
    solver_tol: float = 1e-8
    # run
    seed: int = 0
    out_dir: str = "out"
    annualize: float = 1.0
    plot: bool = True

    def validate(self) -> None:
        if self.trace_period < 1:
            raise ConfigError("trace.period: must be >= 1")
        if self.synth_n < 1 or self.synth_T < 1:
            raise ConfigError("synth.n / synth.T: must be >= 1")
        if self.synth_sigma_delta < 0 or self.synth_sigma_r < 0:
            raise ConfigError("synth.sigma_delta / synth.sigma_r: must be >= 0")
        if self.synth_a_mean <= 0 or self.synth_a_rsd < 0:
            raise ConfigError("synth.a_mean must be > 0 and synth.a_rsd >= 0")
        if self.c_g < 0 or self.p_cap < 0:
            raise ConfigError("cost.c_g / cost.p_cap: must be >= 0")
        if isinstance(self.p_em, str) and self.p_em != "auto":
            raise ConfigError("cost.p_em: number or 'auto'")
        if not isinstance(self.p_em, str) and self.p_em < 0:
            raise ConfigError("cost.p_em: must be >= 0")
        if self.margin < 1.0:
            raise ConfigError("support.margin: must be >= 1")
        for name, grid in (("sweep.p_cap", self.pcap_grid),
                           ("sweep.rho", self.rho_grid),
                           ("sweep.a_rsd", self.rsd_list)):
            if not grid:
                raise ConfigError(f"{name}: grid must be nonempty")
            if sorted(grid) != list(grid):
                raise ConfigError(f"{name}: grid must be sorted ascending")
        if any(not 0.0 <= r <= 1.0 for r in self.rho_grid):
            raise ConfigError("sweep.rho: values must lie in [0, 1]")
        if not 0.0 <= self.seq_tau <= 1.0:
            raise ConfigError("seq.tau: must lie in [0, 1]")
        for algo in self.algos:
            if algo not in ALGORITHMS:
                raise ConfigError(f"algos: unknown algorithm {algo!r}")
        if self.neg_max_rounds < 1:
            raise ConfigError("negotiate.max_rounds: must be >= 1")
        if self.neg_transport not in ("loopback", "socket"):
            raise ConfigError("negotiate.transport: 'loopback' or 'socket'")
        if self.solver_tol <= 0:
            raise ConfigError("solver.tol: must be > 0")
        if self.annualize <= 0:
            raise ConfigError("annualize: must be > 0")
        if self.seed < 0:
            raise ConfigError("seed: must be >= 0")


# dotted config key -> (attribute, parser)
KEYS = {
    "scenarios.path": ("scenarios_path", str),
    "trace.path": ("trace_path", str),
    "trace.period": ("trace_period", int),
    "synth.n": ("synth_n", int),
    "synth.T": ("synth_T", int),
    "synth.sigma_delta": ("synth_sigma_delta", float),
    "synth.sigma_r": ("synth_sigma_r", float),
    "synth.a_mean": ("synth_a_mean", float),
    "synth.a_rsd": ("synth_a_rsd", float),
    "cost.c_g": ("c_g", float),
    "cost.p_cap": ("p_cap", float),
    "cost.p_em": ("p_em", lambda v: v if v.strip() == "auto" else float(v)),
    "support.margin": ("margin", float),
    "sweep.p_cap": ("pcap_grid", parse_grid),
    "sweep.rho": ("rho_grid", parse_grid),
    "sweep.a_rsd": ("rsd_list", parse_grid),
    "algos": ("algos", lambda v: [a.strip() for a in v.split(",") if a.strip()]),
    "seq.tau": ("seq_tau", float),
    "negotiate.zeta": ("neg_zeta", float),
    "negotiate.epsilon": ("neg_epsilon", float),
    "negotiate.max_rounds": ("neg_max_rounds", int),
    "negotiate.transport": ("neg_transport", str),
    "negotiate.averaging": ("neg_averaging", _parse_bool),
    "solver.tol": ("solver_tol", float),
    "seed": ("seed", int),
    "out": ("out_dir", str),
    "annualize": ("annualize", float),
    "plot": ("plot", _parse_bool),
}


def _apply(cfg: ExperimentConfig, key: str, value: str) -> None:
    key = key.strip()
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    attr, parser = KEYS[key]
    try:
        setattr(cfg, attr, parser(value.strip()))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Build a validated config from an optional key=value file plus
    --set style overrides (applied in order, last one wins)."""
    cfg = ExperimentConfig()
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            _apply(cfg, key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        _apply(cfg, key, value)
    cfg.validate()
    return cfg
