"""Render torwalk outputs into static images.

Three kinds: "profile" (log-log two-point function vs distance, one
series per system size), "collapse" (collapse coordinates for all sizes,
optional dashed reference curve), "exponents" (fitted exponents vs the
approach exponent lambda with the min(lambda, d/2) prediction).  Inputs
are only ever read.
"""

from __future__ import annotations

import csv
import json
import os
import re

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .refcurve import reference_curve


class SchemaError(ValueError):
    """An input file does not match the expected columns."""


def _read_csv(path, required):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        for name in required:
            if name not in cols:
                raise SchemaError(f"{path}: missing column {name!r} (found {cols})")
        rows = []
        for raw in reader:
            rows.append({k: float(raw[k]) for k in required})
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _size_from_name(path):
    m = re.search(r"_L(\d+)_", os.path.basename(path))
    return int(m.group(1)) if m else None


def render_profile(inputs, out_path):
    """Log-log radial profiles with error bars, one series per file."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in inputs:
        rows = _read_csv(path, ["r", "g", "stderr"])
        r = np.array([row["r"] for row in rows])
        g = np.array([row["g"] for row in rows])
        e = np.array([row["stderr"] for row in rows])
        keep = (r > 0) & (g > 0)
        L = _size_from_name(path)
        label = f"L = {L}" if L else os.path.basename(path)
        ax.errorbar(r[keep], g[keep], yerr=e[keep], fmt="o", ms=3, lw=0.8, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\|x\|$")
    ax.set_ylabel(r"$g(x)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_collapse(inputs, out_path, ref_curve=None):
    """Collapse coordinates for every size; optional dashed reference curve."""
    series = {}
    for path in inputs:
        rows = _read_csv(path, ["L", "y", "Y", "err"])
        for row in rows:
            series.setdefault(int(row["L"]), []).append((row["y"], row["Y"], row["err"]))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for L in sorted(series):
        pts = np.array(sorted(series[L]))
        ax.errorbar(pts[:, 0], pts[:, 1], yerr=pts[:, 2], fmt="o", ms=3, lw=0.8, label=f"L = {L}")
    if ref_curve:
        f = reference_curve(ref_curve)
        ys = np.concatenate([np.array(series[L])[:, 0] for L in series])
        grid = np.geomspace(max(ys.min(), 1e-9), ys.max(), 200)
        ax.plot(grid, f(grid), "k--", lw=1.2, label=ref_curve)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$y = \|x\| / L^{\kappa}$")
    ax.set_ylabel(r"$\|x\|^{d-2} \, g(x)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_exponents(input_path, out_path):
    """Fitted exponents against lambda with the capped-line prediction.

    Expects JSON: {"d": 5, "points": [{"lambda": 1.0, "b": ..., "err_b":
    ...}, ...]};  entries with "lambda": "critical" plot at the cap.
    """
    with open(input_path) as f:
        data = json.load(f)
    if "d" not in data or "points" not in data or not data["points"]:
        raise SchemaError(f"{input_path}: need keys 'd' and a nonempty 'points' list")
    d = float(data["d"])
    cap = d / 2.0
    lams, bs, errs = [], [], []
    for p in data["points"]:
        if not {"lambda", "b"} <= set(p):
            raise SchemaError(f"{input_path}: every point needs 'lambda' and 'b'")
        lam = cap if p["lambda"] == "critical" else float(p["lambda"])
        lams.append(lam)
        bs.append(float(p["b"]))
        errs.append(float(p.get("err_b", 0.0)))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(lams, bs, yerr=errs, fmt="s", ms=5, lw=1.0, label="fitted")
    grid = np.linspace(min(lams) * 0.9, max(max(lams), cap) * 1.1, 200)
    ax.plot(grid, np.minimum(grid, cap), "k--", lw=1.2, label=rf"min($\lambda$, {cap:g})")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("exponent")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render(kind, inputs, out_path, ref_curve=None):
    if kind == "profile":
        return render_profile(inputs, out_path)
    if kind == "collapse":
        return render_collapse(inputs, out_path, ref_curve=ref_curve)
    if kind == "exponents":
        if len(inputs) != 1:
            raise SchemaError("exponents plots take exactly one JSON input")
        return render_exponents(inputs[0], out_path)
    raise ValueError(f"unknown plot kind {kind!r}")
