"""Headless matplotlib rendering for the CLI report paths.

Figures are written next to the CSV files they visualize; nothing here is
needed by the numerical code.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_series_plot(
    path,
    series: dict,
    xlabel: str,
    ylabel: str,
    title: str | None = None,
    logy: bool = False,
    x=None,
) -> None:
    """One line per labelled series, rendered to ``path``."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6), constrained_layout=True)
    for label, values in series.items():
        values = np.asarray(values, dtype=float)
        xs = np.arange(values.size) if x is None else x
        if logy:
            ax.semilogy(xs, np.maximum(values, 1e-300), label=label)
        else:
            ax.plot(xs, values, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_two_panel(
    path,
    top: tuple,
    bottom: tuple,
    xlabel: str,
    title: str | None = None,
) -> None:
    """Two stacked panels sharing the x axis; each argument is (label, series)."""
    fig, (ax0, ax1) = plt.subplots(
        2, 1, sharex=True, figsize=(6.4, 4.6), constrained_layout=True
    )
    for ax, (label, values) in ((ax0, top), (ax1, bottom)):
        values = np.asarray(values, dtype=float)
        ax.plot(np.arange(values.size), values)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    ax1.set_xlabel(xlabel)
    if title:
        ax0.set_title(title)
    fig.savefig(path, dpi=130)
    plt.close(fig)
