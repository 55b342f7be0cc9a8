"""Experiment runners behind the CLI: build scenarios from the configured
source, run the algorithm comparisons and sweeps, and write deterministic
CSV outputs (plus figures) atomically."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from drcap import report
from drcap.baselines import simulate_seq
from drcap.capacity import opt_benchmark
from drcap.config import ExperimentConfig
from drcap.distributed import negotiate, trajectory_table
from drcap.flexcommit import default_overflow_price, sweep_rho
from drcap.ingest import (
    SynthConfig,
    estimate_support,
    load_scenarios,
    load_traces,
    save_scenarios,
    scenarios_from_traces,
    synthesize,
)
from drcap.linpolicy import evaluate_policy, solve_lin
from drcap.model import CostModel, ScenarioSet, validate_scenarios

__all__ = [
    "build_scenarios",
    "run_compare",
    "run_rho_sweep",
    "run_negotiation",
    "run_synth",
    "run_validate",
]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv_atomic(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)
    return path


def build_scenarios(cfg: ExperimentConfig, a_rsd: float | None = None) -> ScenarioSet:
    """Scenario source priority: scenario file, then traces, then synthetic."""
    if cfg.scenarios_path:
        return load_scenarios(cfg.scenarios_path)
    if cfg.trace_path:
        series = load_traces(cfg.trace_path)
        return scenarios_from_traces(
            series, period=cfg.trace_period, a_mean=cfg.synth_a_mean,
            a_rsd=cfg.synth_a_rsd if a_rsd is None else a_rsd,
            sigma_r=cfg.synth_sigma_r, seed=cfg.seed)
    return synthesize(SynthConfig(
        n=cfg.synth_n, T=cfg.synth_T, sigma_delta=cfg.synth_sigma_delta,
        sigma_r=cfg.synth_sigma_r, a_mean=cfg.synth_a_mean,
        a_rsd=cfg.synth_a_rsd if a_rsd is None else a_rsd, seed=cfg.seed))


def _cost_model(cfg: ExperimentConfig, s: ScenarioSet, p_cap: float) -> CostModel:
    base = CostModel(c_g=cfg.c_g, p_cap=p_cap)
    p_em = (default_overflow_price(s, base) if cfg.p_em == "auto"
            else float(cfg.p_em))
    return CostModel(c_g=cfg.c_g, p_cap=p_cap, p_em=p_em)


def run_compare(cfg: ExperimentConfig) -> list[dict]:
    """Social cost of the selected algorithms at each capacity price.

    Writes compare.csv (and compare.png) under the output directory and
    returns the table rows.
    """
    s = build_scenarios(cfg)
    box = estimate_support(s, cfg.margin)
    algos = [a for a in ("OPT", "LIN", "LIN_DIST", "SEQ") if a in cfg.algos]
    rows = []
    for p_cap in cfg.pcap_grid:
        cm = _cost_model(cfg, s, p_cap)
        row = {"p_cap": p_cap}
        if "OPT" in algos:
            row["cost_OPT"] = cfg.annualize * opt_benchmark(s, cm)
        if "LIN" in algos:
            sol = solve_lin(s, box, cm, tol=cfg.solver_tol)
            row["cost_LIN"] = cfg.annualize * evaluate_policy(
                sol.params, sol.kappa, s, cm, box=box)
        if "LIN_DIST" in algos:
            res = negotiate(s, box, cm, zeta=cfg.neg_zeta,
                            epsilon=cfg.neg_epsilon,
                            max_rounds=cfg.neg_max_rounds,
                            transport=cfg.neg_transport, tol=cfg.solver_tol,
                            use_averaging=cfg.neg_averaging)
            row["cost_LIN_DIST"] = cfg.annualize * evaluate_policy(
                res.solution.params, res.solution.kappa, s, cm, box=box)
        if "SEQ" in algos:
            row["cost_SEQ"] = cfg.annualize * simulate_seq(
                s, cm, cfg.seq_tau, box=box).cost
        rows.append(row)
    header = ["p_cap"] + [f"cost_{a}" for a in algos]
    out = Path(cfg.out_dir)
    write_csv_atomic(out / "compare.csv", header,
                     [[r[h] for h in header] for r in rows])
    if cfg.plot:
        report.save_compare_figure(rows, out / "compare.png")
    return rows


def _rsd_tag(value: float) -> str:
    return format(value, "g").replace(".", "p")


def run_rho_sweep(cfg: ExperimentConfig) -> dict[float, list[tuple[float, float, float]]]:
    """Commitment sweep per configured cost-coefficient spread; one CSV
    (rho, social_cost, mean_optout_fraction) per a_rsd value."""
    out = Path(cfg.out_dir)
    results = {}
    for rsd in cfg.rsd_list:
        s = build_scenarios(cfg, a_rsd=rsd)
        box = estimate_support(s, cfg.margin)
        cm = _cost_model(cfg, s, cfg.p_cap)
        sol = solve_lin(s, box, cm, tol=cfg.solver_tol)
        rows = sweep_rho(sol, s, cm, cfg.rho_grid)
        rows = [(rho, cfg.annualize * cost, frac) for rho, cost, frac in rows]
        tag = _rsd_tag(rsd)
        write_csv_atomic(out / f"rho_sweep_rsd_{tag}.csv",
                         ["rho", "social_cost", "mean_optout_fraction"], rows)
        if cfg.plot:
            report.save_rho_sweep_figure(rows, out / f"rho_sweep_rsd_{tag}.png",
                                         label=f"a_rsd={rsd:g}")
        results[rsd] = rows
    return results


def run_negotiation(cfg: ExperimentConfig):
    """Distributed negotiation: trajectory log plus the final per-customer
    contract (coefficients and payments), with a status column."""
    s = build_scenarios(cfg)
    box = estimate_support(s, cfg.margin)
    cm = _cost_model(cfg, s, cfg.p_cap)
    res = negotiate(s, box, cm, zeta=cfg.neg_zeta, epsilon=cfg.neg_epsilon,
                    max_rounds=cfg.neg_max_rounds, transport=cfg.neg_transport,
                    tol=cfg.solver_tol, use_averaging=cfg.neg_averaging)
    out = Path(cfg.out_dir)
    header, rows = trajectory_table(res.states, s.n)
    write_csv_atomic(out / "negotiate_trajectory.csv", header, rows)
    status = "converged" if res.converged else "max_rounds"
    p = res.solution.params
    contract_rows = [
        [i, p.alpha[i], p.beta[i], p.gamma[i], res.payments[i], status]
        for i in range(s.n)]
    write_csv_atomic(out / "negotiate_contract.csv",
                     ["customer_id", "alpha", "beta", "gamma", "payment",
                      "status"], contract_rows)
    if cfg.plot and res.states:
        report.save_negotiation_figure(res.states, out / "negotiate_convergence.png")
    return res


def run_synth(cfg: ExperimentConfig) -> Path:
    """Generate the configured synthetic scenarios and persist them."""
    s = build_scenarios(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "scenarios.csv.tmp"
    save_scenarios(s, tmp)
    path = out / "scenarios.csv"
    os.replace(tmp, path)
    return path


def run_validate(cfg: ExperimentConfig):
    """Validate the configured scenario source."""
    return validate_scenarios(build_scenarios(cfg))
