"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (5.0, 3.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # no timestamps so reruns produce identical files
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_end_positions(curves: dict[float, tuple], path: str | Path) -> Path:
    """``curves[L] = (start_positions_m, end_positions_m)`` for requests to node 2."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for L, (q, j) in sorted(curves.items()):
            ax.plot(q, j, marker=".", ms=3, lw=1, label=f"L = {L / 1e6:g} Mbit")
        ax.set_xlabel("start position $q_i$ [m]")
        ax.set_ylabel("end position [m]")
        ax.legend()
        return _save(fig, Path(path))


def plot_delay_vs_payload(rows: list[dict], path: str | Path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        L = [r["L"] / 1e6 for r in rows]
        for key, label, style in (("optimal", "optimal", "o-"), ("heuristic", "heuristic", "s--")):
            ys = [r.get(key) for r in rows]
            if all(y is not None for y in ys):
                ax.plot(L, ys, style, ms=4, label=label)
            sim = [r.get(f"sim_{key}") for r in rows]
            ci = [r.get(f"sim_{key}_ci") for r in rows]
            if all(s is not None for s in sim):
                ax.errorbar(L, sim, yerr=ci, fmt="none", capsize=3, color="k", lw=0.8)
        ax.set_xlabel("payload L [Mbit]")
        ax.set_ylabel("expected delay per request [s]")
        ax.legend()
        return _save(fig, Path(path))


def plot_end_position_vs_inv_lambda(rows: list[dict], path: str | Path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for H in sorted({r["H"] for r in rows}):
            sub = [r for r in rows if r["H"] == H]
            x = [r["inv_lambda"] for r in sub]
            ax.plot(x, [r["mean"] for r in sub], "o-", ms=4, label=f"H = {H:g} m")
            ax.fill_between(x, [r["min"] for r in sub], [r["max"] for r in sub], alpha=0.2)
        ax.set_xscale("log")
        ax.set_xlabel(r"$1/\lambda$ [s]")
        ax.set_ylabel("end position [m]")
        ax.legend()
        return _save(fig, Path(path))
