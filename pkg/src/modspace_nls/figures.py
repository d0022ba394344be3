"""Matplotlib rendering of experiment records.

The report path draws one figure per experiment family next to the delimited
output. Rendering is optional (``emit_figures`` in the config) and uses the
Agg backend, so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .experiments import (  # noqa: E402
    EmbeddingScanPayload,
    ExistencePayload,
    HolderScanPayload,
    KernelScanPayload,
    ResultRecord,
)
from .propagator import DecayReport  # noqa: E402


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def _render_decay(report: DecayReport, outdir: Path) -> list:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    ok = report.valid
    t = report.times
    pos = t > 0
    ax1.loglog(t[ok & pos], report.raw_norms[ok & pos], "o-", ms=3, label="measured")
    if (~ok).any():
        ax1.loglog(t[~ok & pos], report.raw_norms[~ok & pos], "x", color="tab:red",
                   label="margin breach")
    if report.mu > 0 and pos.any():
        tref = t[pos]
        anchor = report.raw_norms[pos][0] * (tref / tref[0]) ** (-report.mu)
        ax1.loglog(tref, anchor, "--", color="gray",
                   label=f"slope -{report.mu:.3g}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("norm")
    ax1.set_title(f"raw decay ({report.kind})")
    ax1.legend(fontsize=8)
    ax2.semilogx(t[ok & pos], report.ratios[ok & pos], "o-", ms=3)
    if (t == 0).any() and ok[t == 0].any():
        ax2.plot(t[ok & (t == 0)] + 1e-12, report.ratios[ok & (t == 0)], "s")
    ax2.set_xlabel("t")
    ax2.set_ylabel("compensated ratio")
    ax2.set_title("decay-compensated")
    fig.suptitle(
        f"mu = {report.mu:.4g}" +
        (f", fitted slope = {report.fitted_slope:.4g}"
         if report.fitted_slope is not None else ""))
    return [_save(fig, outdir / "decay.png")]


def _render_existence(payload: ExistencePayload, outdir: Path) -> list:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    iters = range(1, len(payload.residuals) + 1)
    ax1.semilogy(list(iters), payload.residuals, "o-")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("weighted residual")
    ax1.set_title("fixed-point convergence")
    ax2.plot(payload.t_grid, payload.node_norms, label="norm")
    ax2.plot(payload.t_grid, payload.weighted_norms, label="weighted")
    ax2.axhline(payload.diagnostics["radius"], ls="--", color="gray", label="R")
    ax2.set_xlabel("t")
    ax2.set_ylabel("norm")
    ax2.set_title("orbit in the weighted norm")
    ax2.legend(fontsize=8)
    fig.suptitle(payload.verdict)
    return [_save(fig, outdir / "existence.png")]


def _render_holder(payload: HolderScanPayload, outdir: Path) -> list:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.hist(payload.ratios, bins=24)
    ax.axvline(payload.max_ratio, color="tab:red", ls="--",
               label=f"max = {payload.max_ratio:.4g}")
    ax.set_xlabel("defect ratio")
    ax.set_ylabel("count")
    ax.set_title("product-inequality scan")
    ax.legend(fontsize=8)
    return [_save(fig, outdir / "holder_scan.png")]


def _render_embedding(payload: EmbeddingScanPayload, outdir: Path) -> list:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(range(payload.ratios.size), payload.ratios, "o", ms=3)
    ax.set_xlabel("sample")
    ax.set_ylabel("embedding ratio")
    ax.set_title("embedding-constant scan")
    return [_save(fig, outdir / "embedding_scan.png")]


def _render_kernel(payload: KernelScanPayload, outdir: Path) -> list:
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for m in sorted(payload.reports):
        rep = payload.reports[m]
        pos = rep.times > 0
        tag = payload.classification[m]["classified"]
        ax.loglog(rep.times[pos], rep.values[pos], "-", label=f"m={m} ({tag})")
    ax.set_xlabel("t")
    ax.set_ylabel("compensated kernel integral")
    ax.set_title("time-decay kernel bound")
    ax.legend(fontsize=7)
    return [_save(fig, outdir / "kernel_scan.png")]


def render_record(record: ResultRecord, outdir) -> list:
    """Render the figures for one record into ``outdir``; returns paths."""
    outdir = Path(outdir)
    payload = record.payload
    if isinstance(payload, DecayReport):
        return _render_decay(payload, outdir)
    if isinstance(payload, ExistencePayload):
        return _render_existence(payload, outdir)
    if isinstance(payload, HolderScanPayload):
        return _render_holder(payload, outdir)
    if isinstance(payload, EmbeddingScanPayload):
        return _render_embedding(payload, outdir)
    if isinstance(payload, KernelScanPayload):
        return _render_kernel(payload, outdir)
    return []
