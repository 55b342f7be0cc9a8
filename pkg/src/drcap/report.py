"""Figure rendering for experiment outputs; each report CSV gets a PNG
companion. Uses the non-interactive backend and atomic file writes."""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "save_compare_figure",
    "save_rho_sweep_figure",
    "save_negotiation_figure",
]


def _atomic_savefig(fig, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, dpi=150, bbox_inches="tight", format="png")
    plt.close(fig)
    os.replace(tmp, path)


def save_compare_figure(rows: list[dict], path) -> Path:
    """Social cost vs capacity price, one line per algorithm."""
    fig, ax = plt.subplots(figsize=(6, 4))
    pcap = [r["p_cap"] for r in rows]
    styles = {"cost_OPT": "o-", "cost_LIN": "s-", "cost_SEQ": "^-",
              "cost_LIN_DIST": "d--"}
    for key, style in styles.items():
        if rows and key in rows[0]:
            ax.plot(pcap, [r[key] for r in rows], style,
                    label=key.removeprefix("cost_"))
    ax.set_xlabel("capacity price ($/kW)")
    ax.set_ylabel("social cost ($)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _atomic_savefig(fig, path)
    return Path(path)


def save_rho_sweep_figure(rows: list[tuple[float, float, float]], path,
                          label: str = "") -> Path:
    """Social cost vs commitment level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-", label=label or None)
    ax.set_xlabel("commitment level rho")
    ax.set_ylabel("social cost ($)")
    if label:
        ax.legend()
    ax.grid(True, alpha=0.3)
    _atomic_savefig(fig, path)
    return Path(path)


def save_negotiation_figure(states, path) -> Path:
    """Disagreement norm per round on a log scale, with the objective."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = [st.k for st in states]
    ax.semilogy(ks, [max(st.gap_norm, 1e-300) for st in states],
                label="gap norm")
    ax.set_xlabel("round")
    ax.set_ylabel("gap norm")
    ax.grid(True, alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(ks, [st.objective for st in states], color="tab:orange",
             alpha=0.7, label="objective")
    ax2.set_ylabel("objective ($)")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right")
    _atomic_savefig(fig, path)
    return Path(path)
