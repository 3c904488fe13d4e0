"""Window-size x threshold grid search for the rule-based counter."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import RadarCube, slice_window
from .metrics import CompositeWeights, confusion, report_from_confusion
from .rulecc import (DEFAULT_WINDOWS, RuleCCConfig, integrate_counts, smoothed_std, threshold_counts,
                     window_starts)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    window_sizes: tuple = DEFAULT_WINDOWS
    tau_range: tuple = (0.005, 0.08)
    tau_points: int = 50

    @property
    def n_cells(self) -> int:
        return len(self.window_sizes) * self.tau_points


def tau_grid(spec: GridSpec = GridSpec()) -> np.ndarray:
    lo, hi = spec.tau_range
    if spec.tau_points == 1:
        return np.array([float(lo)])
    step = (hi - lo) / (spec.tau_points - 1)
    taus = lo + step * np.arange(spec.tau_points)
    taus[-1] = hi
    return taus


@dataclass
class TuneResult:
    best_config: RuleCCConfig
    best_score: float
    table: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best_config": self.best_config.to_dict(), "best_score": self.best_score, "table": self.table}

    def write_json(self, path, header: Optional[dict] = None) -> None:
        d = self.to_dict()
        if header:
            d["header"] = header
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        cols = ["window", "tau", "composite", "accuracy", "f1_macro", "f1_minority",
                "recall_minority", "r_nonzero", "n_samples"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.table:
                w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])


def _window_maps(cube: RadarCube, window: int, cfg: RuleCCConfig) -> list:
    return [smoothed_std(slice_window(cube, s, window), cfg) for s in window_starts(cube.frames, window)]


def _sample_predictions(cube: RadarCube, window: int, taus, cfg: RuleCCConfig) -> list:
    """Integrated count of one cube for every tau, at a single window size."""
    maps = _window_maps(cube, window, cfg)
    thresholds = [f * t for t in taus for f in cfg.threshold_factors]
    per_window = [threshold_counts(m, cfg, thresholds) for m in maps]
    nf = len(cfg.threshold_factors)
    preds = []
    for ti in range(len(taus)):
        counts = [max(c[ti * nf:(ti + 1) * nf]) for c in per_window]
        preds.append(integrate_counts(counts, cfg.nonzero_ratio))
    return preds


def tune(cubes: Sequence[RadarCube], labels: Sequence[int], spec: GridSpec = GridSpec(),
         weights: CompositeWeights = CompositeWeights(), base: RuleCCConfig = RuleCCConfig(),
         threads: int = 1) -> TuneResult:
    """Score every (window, tau) cell with single-window prediction.

    Best cell: highest composite, then smaller window, then smaller tau.
    Cubes shorter than a window are left out of that window's cells.
    """
    if len(cubes) == 0:
        raise ValueError("tuning needs a non-empty labeled dataset")
    labels = [int(v) for v in labels]
    taus = tau_grid(spec)

    def run(job):
        w, i = job
        return _sample_predictions(cubes[i], w, taus, base)

    jobs = [(w, i) for w in spec.window_sizes for i in range(len(cubes)) if cubes[i].frames >= w]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    by_window: dict = {}
    for (w, i), preds in zip(jobs, results):
        by_window.setdefault(w, []).append((i, preds))

    table = []
    best = None
    for w in spec.window_sizes:
        entries = by_window.get(w, [])
        skipped = len(cubes) - len(entries)
        if skipped:
            log.warning("window %d: skipping %d cube(s) shorter than the window", w, skipped)
        for ti, tau in enumerate(taus):
            tau = float(tau)
            if not entries:
                row = {"window": w, "tau": tau, "composite": float("nan"), "accuracy": float("nan"),
                       "f1_macro": float("nan"), "f1_minority": float("nan"),
                       "recall_minority": float("nan"), "r_nonzero": float("nan"), "n_samples": 0}
                table.append(row)
                continue
            preds = [p[ti] for _, p in entries]
            truth = [labels[i] for i, _ in entries]
            rep = report_from_confusion(confusion([min(p, 3) for p in preds], truth), weights=weights)
            row = {"window": w, "tau": tau, "composite": rep.composite, "accuracy": rep.accuracy,
                   "f1_macro": rep.f1_macro, "f1_minority": rep.f1_minority,
                   "recall_minority": rep.recall_minority, "r_nonzero": rep.r_nonzero,
                   "n_samples": len(entries)}
            table.append(row)
            key = (rep.composite, -w, -tau)
            if best is None or key > best[0]:
                best = (key, row)
    if best is None:
        raise ValueError("no grid cell could be evaluated: every cube is shorter than every window")
    row = best[1]
    cfg = replace(base, window_sizes=(row["window"],), tau=row["tau"])
    return TuneResult(cfg, row["composite"], table)
