"""Convergence figures: one log-scale panel per pruning strategy."""
from __future__ import annotations

import re
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import AggregateSeries

_PANEL_ORDER = ("mst", "mmut")


def _gid(label: str) -> str:
    return "curve_" + re.sub(r"[^A-Za-z0-9_-]+", "-", label.lower()).strip("-")


def _reference_series(aggregates: Sequence[AggregateSeries]) -> list[AggregateSeries]:
    """One curve per topology-agnostic algorithm (their per-C copies are
    identical, so only the first is plotted)."""
    refs: dict[str, AggregateSeries] = {}
    for agg in sorted(aggregates, key=lambda a: a.c_target):
        if agg.algorithm != "tidanse+" and agg.algorithm not in refs:
            refs[agg.algorithm] = agg
    return [refs[a] for a in sorted(refs)]


def emit_convergence_plot(aggregates: Sequence[AggregateSeries], path) -> None:
    """Render geometric-mean convergence curves to a vector-graphics file.

    One panel per pruning strategy present in the aggregates, each with one
    curve per connectivity level plus the topology-agnostic reference
    algorithms; the y axis is logarithmic.
    """
    aggregates = list(aggregates)
    if not aggregates:
        raise ValueError("no aggregate series to plot")
    panels = [p for p in _PANEL_ORDER
              if any(a.pruning == p for a in aggregates)]
    refs = _reference_series(aggregates)
    if not panels:
        panels = [None]

    fig, axes = plt.subplots(
        len(panels), 1, figsize=(7.0, 3.2 * len(panels)),
        sharex=True, squeeze=False,
    )
    labels = {"danse": "DANSE", "tidanse": "TI-DANSE"}
    for ax, pruning in zip(axes.ravel(), panels):
        curves = []
        for agg in refs:
            curves.append((labels.get(agg.algorithm, agg.algorithm), agg))
        if pruning is not None:
            plus = sorted((a for a in aggregates
                           if a.algorithm == "tidanse+" and a.pruning == pruning),
                          key=lambda a: a.c_target)
            for agg in plus:
                curves.append((f"TI-DANSE+ (C={agg.c_target:.3g})", agg))
        for label, agg in curves:
            line, = ax.semilogy(range(len(agg.values)), agg.values, label=label)
            line.set_gid(_gid(f"{label}_{agg.pruning}"))
        ax.set_ylabel("geometric-mean filter MSE")
        ax.set_title("no pruning grid" if pruning is None
                     else f"{pruning.upper()} pruning")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8, loc="upper right")
    axes.ravel()[-1].set_xlabel("iteration")
    fig.tight_layout()
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)
