"""Matplotlib figures written next to the JSON reports."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes, colorize  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata=_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def escape_figure(field, window, path, title="escape time"):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(colorize(field), extent=(window.x0, window.x1, window.y0, window.y1))
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    _save(fig, path)


def growth_figure(rows, path):
    """Bar chart of which growth inequalities hold per n."""
    keys = [k for k in rows[0] if k != "n"]
    ns = [r["n"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3))
    for j, k in enumerate(keys):
        ax.scatter(ns, [j] * len(ns), c=["tab:green" if r[k] else "tab:red" for r in rows], s=60)
    ax.set_yticks(range(len(keys)), keys)
    ax.set_xlabel("n")
    ax.set_title("growth inequalities")
    fig.tight_layout()
    _save(fig, path)


def dilatation_figure(ds, sup_k, declared, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ds, sup_k, "o-", label="finite-difference sup K")
    ax.plot(ds, declared, "s--", label="declared bound")
    ax.set_xlabel("d")
    ax.set_ylabel("K")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def orbit_figure(points, path, title="orbit"):
    pts = np.asarray(points, dtype=complex)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(np.arange(len(pts)), np.log10(1 + np.abs(pts)), "o-")
    ax.set_xlabel("step")
    ax.set_ylabel("log10(1 + |z|)")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
