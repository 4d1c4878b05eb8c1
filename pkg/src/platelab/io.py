"""Deterministic artifact writers: CSV, JSON summaries, SVG plots.

Byte-identity across repeated runs is a hard contract for CSV and JSON,
so floats are serialized through repr (shortest round-trip form), rows
always end with a bare newline, and JSON is dumped with sorted keys and
no timestamps.  SVG output is pinned down as far as matplotlib allows
(fixed hashsalt, no creation date), but only CSV/JSON carry the
byte-identity guarantee.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def format_cell(value) -> str:
    """One CSV cell: shortest round-trip decimal for floats."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, columns) -> Path:
    """Write equal-length columns under a header row.

    Content is encoded to ASCII bytes with \\n terminators so the output
    is identical regardless of platform newline conventions.
    """
    path = Path(path)
    columns = [np.asarray(col) for col in columns]
    if len(columns) != len(header):
        raise ValueError(f"{len(header)} header names for {len(columns)} columns")
    n_rows = columns[0].shape[0] if columns else 0
    for name, col in zip(header, columns):
        if col.ndim != 1 or col.shape[0] != n_rows:
            raise ValueError(f"column {name!r} is not a 1D array of length {n_rows}")
    lines = [",".join(header)]
    for i in range(n_rows):
        lines.append(",".join(format_cell(col[i]) for col in columns))
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


def json_ready(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats.

    NaN becomes None and infinities become the strings "inf"/"-inf":
    the dumps call runs with allow_nan=False so nothing non-portable can
    leak into an artifact unnoticed.
    """
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": json_ready(obj.real), "im": json_ready(obj.imag)}
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    text = json.dumps(json_ready(payload), sort_keys=True, indent=2, allow_nan=False)
    path.write_bytes((text + "\n").encode("ascii"))
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "platelab"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def save_line_plot(path, x, ys, labels, xlabel, ylabel, title, logy=False) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for y, label in zip(ys, labels):
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def save_scatter(path, x, y, xlabel, ylabel, title) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.scatter(x, y, s=12)
    ax.axvline(0.0, color="gray", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def save_heatmap(path, x, y, values, xlabel, ylabel, title) -> Path:
    """values[i, j] sampled at (x[i], y[j])."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    mesh = ax.pcolormesh(x, y, np.asarray(values).T, shading="nearest")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def save_contour_pair(path, x, y, field_a, field_b, titles, suptitle) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0), sharey=True)
    for ax, field, title in zip(axes, (field_a, field_b), titles):
        cs = ax.contour(x, y, np.asarray(field).T, levels=15)
        ax.clabel(cs, inline=True, fontsize=6)
        ax.set_title(title)
        ax.set_xlabel("x1")
    axes[0].set_ylabel("x2")
    fig.suptitle(suptitle)
    fig.tight_layout()
    return _save(fig, path)
