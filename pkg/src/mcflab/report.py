"""Human-readable summaries and figures for an existing report CSV.

The report path renders matplotlib figures to files next to the delimited
output: a margin chart over all check rows, energy/volume decay curves
from the per-run logs, a discrepancy-versus-eps plot when a sweep is
present, and the measured-versus-exact radius when the scenario carries a
reference flow.
"""

from __future__ import annotations

import csv
import glob
import json
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def load_report_csv(path):
    rows = []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for raw in reader:
            rows.append({
                "scenario": raw["scenario"],
                "epsilon": float(raw["epsilon"]),
                "check": raw["check"],
                "value": float(raw["value"]),
                "target": float(raw["target"]),
                "tolerance": float(raw["tolerance"]),
                "sided": raw["sided"],
                "pass": raw["pass"] == "true",
            })
    return rows


def _headroom(row):
    """Signed margin in [-1, 1]: positive means inside the bound."""
    value, target, tol = row["value"], row["target"], row["tolerance"]
    scale = max(abs(target), tol, abs(value), 1e-300)
    if row["sided"] == "decreasing":
        margin = (target - value) / scale
    elif row["sided"] == "detect":
        margin = (tol - abs(value - target)) / scale if tol > 0 \
            else (value - target + 1.0) / scale
    else:
        margin = (target + tol - value) / scale
    return float(np.clip(margin, -1.0, 1.0))


def summary_text(rows):
    lines = []
    width = max([len(r["check"]) for r in rows] + [5])
    header = f"{'scenario':24s} {'check':{width}s} {'eps':>8s} " \
             f"{'value':>13s} {'target':>13s} {'sided':>10s}  verdict"
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        verdict = "pass" if r["pass"] else "FAIL"
        lines.append(
            f"{r['scenario']:24s} {r['check']:{width}s} {r['epsilon']:8.4g} "
            f"{r['value']:13.5g} {r['target']:13.5g} {r['sided']:>10s}  {verdict}")
    n_fail = sum(not r["pass"] for r in rows)
    lines.append("-" * len(header))
    lines.append(f"{len(rows)} rows, {len(rows) - n_fail} passed, {n_fail} failed")
    return "\n".join(lines) + "\n"


def margin_figure(rows, path):
    labels = [f"{r['scenario'][:18]}:{r['check']}@{r['epsilon']:g}" for r in rows]
    margins = [_headroom(r) for r in rows]
    colors = ["#2a7e43" if r["pass"] else "#b03030" for r in rows]
    fig_h = max(2.5, 0.22 * len(rows) + 1.0)
    fig, ax = plt.subplots(figsize=(9, fig_h))
    y = np.arange(len(rows))
    ax.barh(y, margins, color=colors)
    ax.set_yticks(y)
    ax.set_yticklabels(labels, fontsize=6)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlim(-1.05, 1.05)
    ax.set_xlabel("normalized headroom (positive = inside bound)")
    ax.set_title("verification margins")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def energy_figures(outdir, figdir):
    made = []
    for log in sorted(glob.glob(os.path.join(outdir, "energy_*.csv"))):
        times, energies, volumes = [], [], []
        with open(log) as fh:
            reader = csv.DictReader(fh)
            for raw in reader:
                times.append(float(raw["time"]))
                energies.append(float(raw["normalized_energy"]))
                volumes.append(float(raw["phase_volume"]))
        stem = os.path.splitext(os.path.basename(log))[0]
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
        ax1.plot(times, energies, "o-", ms=2.5)
        ax1.set_xlabel("time")
        ax1.set_ylabel("normalized energy")
        ax2.plot(times, volumes, "o-", ms=2.5, color="#7044a0")
        ax2.set_xlabel("time")
        ax2.set_ylabel("phase volume")
        fig.suptitle(stem)
        fig.tight_layout()
        path = os.path.join(figdir, stem + ".png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        made.append(path)
    return made


def discrepancy_figure(rows, figdir):
    decay = [r for r in rows if r["check"] == "discrepancy_decay"]
    if len(decay) < 2:
        return None
    decay.sort(key=lambda r: -r["epsilon"])
    eps = [r["epsilon"] for r in decay]
    vals = [r["value"] for r in decay]
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.loglog(eps, vals, "o-")
    ax.set_xlabel("eps")
    ax.set_ylabel("space-time |discrepancy| / sigma")
    ax.set_title("discrepancy decay")
    ax.invert_xaxis()
    fig.tight_layout()
    path = os.path.join(figdir, f"discrepancy_{decay[0]['scenario']}.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def radius_figure(outdir, figdir):
    meta_path = os.path.join(outdir, "scenario_meta.json")
    if not os.path.exists(meta_path):
        return None
    with open(meta_path) as fh:
        meta = json.load(fh)
    flow = meta.get("reference_flow")
    if not flow or flow.get("kind") != "smooth-sphere":
        return None
    dim = meta["dimension"]
    r0 = flow["radius"]
    made = []
    for log in sorted(glob.glob(os.path.join(outdir, "energy_*.csv"))):
        times, volumes = [], []
        with open(log) as fh:
            reader = csv.DictReader(fh)
            for raw in reader:
                times.append(float(raw["time"]))
                volumes.append(float(raw["phase_volume"]))
        if dim == 2:
            measured = [math.sqrt(max(v, 0.0) / math.pi) for v in volumes]
        elif dim == 3:
            measured = [(3.0 * max(v, 0.0) / (4.0 * math.pi)) ** (1 / 3) for v in volumes]
        else:
            continue
        exact = [math.sqrt(max(r0 * r0 - 2.0 * (dim - 1) * t, 0.0)) for t in times]
        stem = os.path.splitext(os.path.basename(log))[0].replace("energy_", "")
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        ax.plot(times, measured, "o", ms=3, label="measured")
        ax.plot(times, exact, "-", label="curvature-flow law")
        ax.set_xlabel("time")
        ax.set_ylabel("radius")
        ax.set_title(stem)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(figdir, f"radius_{stem}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        made.append(path)
    return made


def render_report(outdir):
    """Summarize <outdir>/report.csv; write text summary and figures.

    Returns (summary_path, list_of_figures, all_rows_passed).
    """
    csv_path = os.path.join(outdir, "report.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"no report.csv under {outdir}")
    rows = load_report_csv(csv_path)
    figdir = os.path.join(outdir, "figures")
    os.makedirs(figdir, exist_ok=True)
    text = summary_text(rows)
    summary_path = os.path.join(outdir, "report_summary.txt")
    with open(summary_path, "w") as fh:
        fh.write(text)
    figures = []
    margin_path = os.path.join(figdir, "margins.png")
    margin_figure(rows, margin_path)
    figures.append(margin_path)
    figures += energy_figures(outdir, figdir)
    extra = discrepancy_figure(rows, figdir)
    if extra:
        figures.append(extra)
    figures += radius_figure(outdir, figdir) or []
    return summary_path, figures, all(r["pass"] for r in rows)
