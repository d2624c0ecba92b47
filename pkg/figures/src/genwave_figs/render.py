"""Render the standard figure set from a genwave output directory.

Four figures: energy curves per slice time, classified sup-quantities
against epsilon (log-log, annotated with the fitted slopes recorded in
verdicts.json), the coefficient-bound sups, and the uniqueness-perturbation
decay.  Rendering is a pure batch step: inputs are never modified and
re-rendering reproduces the same files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .schema import (SchemaError, load_conditions, load_energies,
                     load_verdicts)

ALL_FIGURES = ("energies", "sup_loglog", "conditions", "uniqueness")

plt.rcParams["svg.hashsalt"] = "genwave-figs"


@dataclass
class FigureJob:
    input_dir: Path
    figures: tuple[str, ...] = ALL_FIGURES
    fmt: str = "png"
    out_dir: Path | None = None
    dpi: int = 150
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        unknown = set(self.figures) - set(ALL_FIGURES)
        if unknown:
            raise SchemaError(f"unknown figures requested: {sorted(unknown)}")
        if self.fmt not in ("png", "svg", "pdf"):
            raise SchemaError(f"unsupported format {self.fmt!r}")
        if self.out_dir is None:
            self.out_dir = self.input_dir / "figs"
        self.out_dir = Path(self.out_dir)


def _save(fig, job: FigureJob, name: str) -> Path:
    path = job.out_dir / f"{name}.{job.fmt}"
    meta = {"Date": None} if job.fmt == "svg" else {}
    fig.savefig(path, dpi=job.dpi, metadata=meta)
    plt.close(fig)
    return path


def _eps_colors(eps_values):
    cmap = plt.get_cmap("viridis")
    uniq = sorted(set(eps_values), reverse=True)
    return {e: cmap(i / max(len(uniq) - 1, 1)) for i, e in enumerate(uniq)}


def _fig_energies(job: FigureJob) -> tuple[Path, dict]:
    data = load_energies(job.input_dir)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = _eps_colors(data["eps"])
    styles = ["-", "--", "-.", ":"]
    orders = sorted(set(int(m) for m in data["m"]))
    for m in orders:
        for e in sorted(set(data["eps"]), reverse=True):
            sel = (data["m"] == m) & (data["eps"] == e)
            if not sel.any():
                continue
            order = np.argsort(data["tau"][sel])
            label = f"m={m}, eps={e:g}" if m == orders[0] else None
            ax.plot(data["tau"][sel][order], data["E"][sel][order],
                    styles[m % len(styles)], color=colors[e], lw=1.2,
                    label=label)
    ax.set_xlabel("slice time")
    ax.set_ylabel("energy integral")
    ax.set_title("Energy curves by order (line style) and eps (color)")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    return _save(fig, job, "energies"), {}


def _loglog_nets(ax, nets, eps_key="eps"):
    annotations = {}
    for i, net in enumerate(nets):
        eps = np.asarray(net["eps"], float)
        vals = np.maximum(np.asarray(net["values"], float), 1e-300)
        ax.loglog(eps, vals, "o-", ms=3, lw=1.0, label=net["quantity"])
        slope = float(net["slope"])
        annotations[net["quantity"]] = slope
        ax.annotate(f"{net['quantity']}: slope={slope:.6g}",
                    xy=(0.02, 0.95 - 0.07 * i), xycoords="axes fraction",
                    fontsize=7)
    ax.invert_xaxis()
    ax.set_xlabel("eps")
    return annotations


def _fig_sup_loglog(job: FigureJob) -> tuple[Path, dict]:
    doc = load_verdicts(job.input_dir)
    nets = [n for n in doc["nets"] if n["quantity"].startswith("sup_")]
    if not nets:
        raise SchemaError("verdicts.json holds no sup_* nets to plot")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    annotations = _loglog_nets(ax, nets)
    ax.set_ylabel("sup over the lens")
    ax.set_title("Classified sup-quantities vs eps")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, job, "sup_loglog"), annotations


def _fig_conditions(job: FigureJob) -> tuple[Path, dict]:
    doc = load_conditions(job.input_dir)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    eps = np.asarray(doc["eps"], float)
    annotations = {}
    for i, (name, rec) in enumerate(sorted(doc["quantities"].items())):
        sups = np.maximum(np.asarray(rec["sup"], float), 1e-300)
        mark = "o" if rec["pass"] else "x"
        ax.loglog(eps, sups, mark + "-", ms=4, lw=1.0,
                  label=f"{name} ({'pass' if rec['pass'] else 'FAIL'})")
        slope = float(rec["slope"])
        annotations[name] = slope
        ax.annotate(f"{name}: slope={slope:.6g}",
                    xy=(0.02, 0.95 - 0.07 * i), xycoords="axes fraction",
                    fontsize=7)
    ax.invert_xaxis()
    ax.set_xlabel("eps")
    ax.set_ylabel("sup over the lens")
    ax.set_title("Coefficient-bound sups vs eps")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, job, "conditions"), annotations


def _fig_uniqueness(job: FigureJob) -> tuple[Path, dict]:
    doc = load_verdicts(job.input_dir)
    nets = [n for n in doc["nets"] if n["quantity"].startswith("uniqueness")]
    if not nets:
        raise SchemaError("verdicts.json holds no uniqueness nets; run the "
                          "uniqueness (or all) pipeline first")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    annotations = _loglog_nets(ax, nets)
    ax.set_ylabel("perturbed-solution difference")
    ax.set_title("Uniqueness: difference decay vs eps")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, job, "uniqueness"), annotations


_RENDERERS = {
    "energies": _fig_energies,
    "sup_loglog": _fig_sup_loglog,
    "conditions": _fig_conditions,
    "uniqueness": _fig_uniqueness,
}


def render(job: FigureJob) -> dict:
    """Produce the requested figures; returns paths and slope annotations."""
    job.out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}
    annotations: dict[str, dict] = {}
    for name in job.figures:
        path, notes = _RENDERERS[name](job)
        paths[name] = str(path)
        annotations[name] = notes
    return {"figures": paths, "annotations": annotations}
