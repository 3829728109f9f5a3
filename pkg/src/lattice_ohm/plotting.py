"""Static matplotlib figures written next to the tabular outputs."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def line_plot(path, x, series: dict, xlabel: str, ylabel: str, title: str = "",
              logx: bool = False, logy: bool = False, bands: dict | None = None) -> Path:
    """One or more curves sharing an x axis; optional ``+-`` bands per curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        ax.plot(x, y, label=name, marker="o" if len(y) < 12 else None)
        if bands and name in bands:
            b = np.asarray(bands[name], dtype=float)
            ax.fill_between(x, y - b, y + b, alpha=0.25)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def bar_plot(path, centers: Sequence[float], heights: Sequence[float], width: float,
             xlabel: str, ylabel: str, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, heights, width=width)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def status_plot(path, labels: Sequence[str], passed: Sequence[bool], title: str = "") -> Path:
    """Pass/fail overview, one bar per check."""
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(labels) + 1.2))
    y = np.arange(len(labels))
    ax.barh(y, np.ones(len(labels)), color=["tab:green" if p else "tab:red" for p in passed])
    ax.set_yticks(y, labels)
    ax.set_xticks([])
    ax.invert_yaxis()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
