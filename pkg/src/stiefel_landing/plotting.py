"""Figure rendering for the benchmark report path.

Each CLI report writes a PNG next to its CSV/JSON output: convergence curves
(gradient norm and feasibility on log scale) for solve and compare runs, and
the one-step error map with a quadratic reference line for order checks.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = {
    "sol": "tab:blue",
    "sol-sym": "tab:green",
    "first-order": "tab:orange",
    "rn": "tab:red",
}


def _color(name):
    return _COLORS.get(name, "tab:gray")


def _semilogy_panel(ax, series, ylabel):
    floor = 1e-17
    for name, xs, ys in series:
        ys = np.maximum(np.asarray(ys, dtype=float), floor)
        ax.semilogy(xs, ys, marker="o", markersize=3, label=name, color=_color(name))
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)


def plot_traces(variant_traces: dict, path, title: str = "") -> None:
    """Gradient-norm and feasibility curves, one line per solver variant."""
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    grad_series = []
    feas_series = []
    for name, traces in variant_traces.items():
        its = [t.iter for t in traces]
        grad_series.append((name, its, [t.grad_norm for t in traces]))
        feas_series.append((name, its, [t.feas for t in traces]))
    _semilogy_panel(axes[0], grad_series, "gradient norm")
    _semilogy_panel(axes[1], feas_series, "feasibility violation")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_order_map(method_pairs: dict, slopes: dict, path, title: str = "") -> None:
    """Log-log one-step error map with a slope-2 reference line."""
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    ref_anchor = None
    for name, pairs in method_pairs.items():
        pairs = [(e0, e1) for e0, e1 in pairs if e0 > 0 and e1 > 0]
        if not pairs:
            continue
        e0s, e1s = zip(*sorted(pairs))
        label = name if name not in slopes else f"{name} (slope {slopes[name]:.2f})"
        ax.loglog(e0s, e1s, marker="o", label=label, color=_color(name))
        if ref_anchor is None:
            ref_anchor = (e0s[-1], e1s[-1])
    if ref_anchor is not None:
        x0, y0 = ref_anchor
        xs = np.array(ax.get_xlim())
        ax.loglog(xs, y0 * (xs / x0) ** 2, "--", color="gold", label="slope 2 reference")
    ax.set_xlabel("initial error $e_0$")
    ax.set_ylabel("error after one step $e_1$")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
