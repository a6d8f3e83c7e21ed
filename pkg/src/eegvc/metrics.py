"""Reconstruction metrics: MAE, Pearson CC, and per-channel aggregation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGENERATE_STD = 1e-12


class DegenerateSignalError(ValueError):
    """A constant signal was passed where a correlation is required."""


def mae(f, g) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"length mismatch: {f.shape} vs {g.shape}")
    if f.size == 0:
        raise ValueError("mae of empty arrays")
    return float(np.mean(np.abs(f - g)))


def cc(f, g) -> float:
    """Pearson correlation, clamped to [-1, 1]."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"length mismatch: {f.shape} vs {g.shape}")
    if f.size < 2:
        raise ValueError("cc needs at least 2 samples")
    fc = f - f.mean()
    gc = g - g.mean()
    sf = math.sqrt(float(fc @ fc))
    sg = math.sqrt(float(gc @ gc))
    n = math.sqrt(f.size)
    if sf / n < DEGENERATE_STD or sg / n < DEGENERATE_STD:
        raise DegenerateSignalError("correlation undefined for a constant signal")
    return max(-1.0, min(1.0, float(fc @ gc) / (sf * sg)))


@dataclass
class ChannelReport:
    channel: str
    cc_mean: float
    cc_std: float
    mae_mean: float
    mae_std: float
    n_segments: int
    n_degenerate: int = 0


@dataclass
class EvaluationSummary:
    channels: list[ChannelReport]
    virtual_cc: float
    virtual_mae: float
    all_cc: float
    all_mae: float
    source_cc: float
    source_mae: float


def evaluate_channels(gen: Sequence[np.ndarray], target: Sequence[np.ndarray],
                      channel_names: Sequence[str], virtual: Sequence[str] | None = None) -> EvaluationSummary:
    """Per-segment CC/MAE per channel, aggregated as mean and population std.

    Segments where either signal is constant are dropped from that channel's
    CC and MAE aggregates and counted in ``n_degenerate``.
    """
    if len(gen) != len(target):
        raise ValueError(f"block count mismatch: {len(gen)} vs {len(target)}")
    if not gen:
        raise ValueError("no segments to evaluate")
    n_ch = len(channel_names)
    for g, t in zip(gen, target):
        if np.shape(g) != np.shape(t) or np.shape(g)[0] != n_ch:
            raise ValueError(f"block shape mismatch: {np.shape(g)} vs {np.shape(t)} for {n_ch} channels")
    reports = []
    for c, name in enumerate(channel_names):
        ccs, maes, bad = [], [], 0
        for g, t in zip(gen, target):
            try:
                ccs.append(cc(t[c], g[c]))
            except DegenerateSignalError:
                bad += 1
                continue
            maes.append(mae(t[c], g[c]))
        if ccs:
            reports.append(ChannelReport(name, float(np.mean(ccs)), float(np.std(ccs)),
                                         float(np.mean(maes)), float(np.std(maes)), len(ccs), bad))
        else:
            reports.append(ChannelReport(name, math.nan, math.nan, math.nan, math.nan, 0, bad))

    virtual = set(virtual or ())

    def _agg(rows, attr):
        vals = [getattr(r, attr) for r in rows if r.n_segments > 0]
        return float(np.mean(vals)) if vals else math.nan

    vrows = [r for r in reports if r.channel in virtual]
    srows = [r for r in reports if r.channel not in virtual]
    return EvaluationSummary(
        channels=reports,
        virtual_cc=_agg(vrows, "cc_mean"), virtual_mae=_agg(vrows, "mae_mean"),
        all_cc=_agg(reports, "cc_mean"), all_mae=_agg(reports, "mae_mean"),
        source_cc=_agg(srows, "cc_mean"), source_mae=_agg(srows, "mae_mean"),
    )


REPORT_HEADER = ["channel", "cc_mean", "cc_std", "mae_mean", "mae_std", "n_segments"]


def write_report_csv(reports: Sequence[ChannelReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow([r.channel, f"{r.cc_mean:.6f}", f"{r.cc_std:.6f}",
                        f"{r.mae_mean:.6f}", f"{r.mae_std:.6f}", r.n_segments])
