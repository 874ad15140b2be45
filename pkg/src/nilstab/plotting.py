"""PNG figures written next to the CSV/JSON outputs.

Figures are drawn on a bare Agg canvas, so nothing here touches pyplot's
global state and the functions are safe to call from worker threads.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

# fixed metadata keeps reruns byte-identical
_META = {"Software": None}


def _figure(ncols=1, width=5.0, height=4.0):
    fig = Figure(figsize=(width * ncols, height), dpi=100)
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(1, ncols, k + 1) for k in range(ncols)]
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    return path


def plot_holonomy(maps, path, title=""):
    """f_i(z) - z against z for the three generators."""
    fig, (ax,) = _figure()
    for i, style in zip((1, 2, 3), ("-", "--", ":")):
        ax.plot(maps.grid, maps.f[i - 1] - maps.grid, style, label=f"f{i}(z) - z")
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.set_xlabel("z")
    ax.set_ylabel("displacement")
    ax.set_title(title or "holonomy maps")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_birkhoff(rows, path):
    """sup |g_N| per monomial, from ``ergodic_rows`` output."""
    sup = [(r[1], r[3]) for r in rows if r[0] == "birkhoff_sup"]
    fig, (ax,) = _figure(width=8.0)
    if sup:
        labels, vals = zip(*sup)
        x = np.arange(len(vals))
        ax.semilogy(x, vals, "o", ms=3)
        ax.axhline(0.05, color="C3", lw=0.8, label="0.05")
        ax.set_xticks(x)
        ax.set_xticklabels([s.replace(";", ",") for s in labels], rotation=90, fontsize=6)
        ax.legend(frameon=False)
    ax.set_ylabel("max |g_N| over starts")
    ax.set_title("Birkhoff averages of z^n w^m")
    return _save(fig, path)


def plot_points(points, path, title="", max_points=20000):
    """Two coordinate projections of G/H samples."""
    pts = np.asarray(points, dtype=float)[:max_points]
    fig, (a, b) = _figure(ncols=2, width=4.0)
    a.plot(pts[:, 0], pts[:, 1], ",", color="k")
    a.set_xlabel("y1")
    a.set_ylabel("y2")
    b.plot(pts[:, 1], pts[:, 2], ",", color="k")
    b.set_xlabel("y2")
    b.set_ylabel("y3")
    for ax in (a, b):
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
    fig.suptitle(title or "nilflow samples")
    return _save(fig, path)


def plot_tau_trend(entries: dict, path):
    """Partial averages of tau_Ab (both components) against time, one line per v."""
    fig, (ax,) = _figure()
    for k, (name, e) in enumerate(sorted(entries.items())):
        t = [p[0] for p in e["trend"]]
        for comp, style in ((0, "-o"), (1, "--s")):
            ax.plot(t, [p[1][comp] for p in e["trend"]], style, color=f"C{k}", ms=4,
                    label=f"{name}, component {comp + 1}")
    ax.set_xlabel("averaging time")
    ax.set_ylabel("tau_Ab estimate")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
