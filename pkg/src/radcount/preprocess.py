"""Cube conditioning: percentile clipping, min-max scaling and sigmoid weighting.

Every model sees cubes that went through ``preprocess_pipeline``. The weight
of a pixel grows with its temporal standard deviation, so static reflectors
(furniture) are damped and fluctuating ones (breathing, walking) kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import RadarCube

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class SigmoidWeightConfig:
    """Center and scale of the weighting sigmoid, in std units.

    ``None`` for either field means "derive from the std map": center at the
    map's mean, scale at the map's std (floored at ``STD_FLOOR``).
    """

    tau_w: Optional[float] = None
    s: Optional[float] = None

    def __post_init__(self):
        if self.tau_w is not None and not np.isfinite(self.tau_w):
            raise ValueError("tau_w must be finite")
        if self.s is not None and (not np.isfinite(self.s) or self.s <= 0):
            raise ValueError("s must be finite and > 0")

    def resolve(self, std_map: np.ndarray) -> tuple[float, float]:
        tau_w = float(np.mean(std_map)) if self.tau_w is None else float(self.tau_w)
        s = max(float(np.std(std_map)), STD_FLOOR) if self.s is None else float(self.s)
        return tau_w, s


@dataclass(frozen=True)
class PreprocessConfig:
    lo_pct: float = 0.1
    hi_pct: float = 99.9
    sigmoid: SigmoidWeightConfig = field(default_factory=SigmoidWeightConfig)

    def __post_init__(self):
        if not 0.0 <= self.lo_pct < self.hi_pct <= 100.0:
            raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got {self.lo_pct}, {self.hi_pct}")

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        sig = d.get("sigmoid", {}) or {}

        def opt(v):
            return None if v is None or v == "auto" else float(v)

        return cls(
            lo_pct=float(d.get("lo_pct", 0.1)),
            hi_pct=float(d.get("hi_pct", 99.9)),
            sigmoid=SigmoidWeightConfig(tau_w=opt(sig.get("tau_w")), s=opt(sig.get("s"))),
        )

    def to_dict(self) -> dict:
        return {
            "lo_pct": self.lo_pct,
            "hi_pct": self.hi_pct,
            "sigmoid": {
                "tau_w": "auto" if self.sigmoid.tau_w is None else self.sigmoid.tau_w,
                "s": "auto" if self.sigmoid.s is None else self.sigmoid.s,
            },
        }

    @classmethod
    def load(cls, path) -> "PreprocessConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def percentile_bounds(values: np.ndarray, lo_pct: float = 0.1, hi_pct: float = 99.9) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot take percentiles of an empty cube")
    lo, hi = np.percentile(values, [lo_pct, hi_pct], method="linear")
    return float(lo), float(hi)


def dataset_percentile_bounds(cubes: Sequence[RadarCube], lo_pct: float = 0.1, hi_pct: float = 99.9):
    """Percentile bounds pooled over every value of every cube."""
    pooled = np.concatenate([c.data.ravel() for c in cubes])
    return percentile_bounds(pooled, lo_pct, hi_pct)


def clip_percentiles(cube: RadarCube, lo_pct: float = 0.1, hi_pct: float = 99.9,
                     bounds: Optional[tuple[float, float]] = None) -> RadarCube:
    """Clamp values outside the cube's own [lo_pct, hi_pct] percentile band.

    ``bounds`` overrides the per-cube percentiles (dataset-global clipping).
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 100, got {lo_pct}, {hi_pct}")
    lo, hi = bounds if bounds is not None else percentile_bounds(cube.data, lo_pct, hi_pct)
    return RadarCube(np.clip(cube.data, lo, hi))


def minmax_normalize(cube: RadarCube) -> RadarCube:
    lo = cube.data.min()
    hi = cube.data.max()
    if hi == lo:
        return RadarCube(np.zeros_like(cube.data))
    return RadarCube((cube.data - lo) / (hi - lo))


def temporal_std_map(cube: RadarCube) -> np.ndarray:
    """Population std over frames at every pixel; shape (rows, cols)."""
    if cube.frames < 2:
        raise ValueError(f"temporal std needs at least 2 frames, got {cube.frames}")
    return np.std(cube.data, axis=0)


def sigmoid_weight_map(std_map: np.ndarray, cfg: SigmoidWeightConfig = SigmoidWeightConfig()) -> np.ndarray:
    std_map = np.asarray(std_map, dtype=np.float64)
    tau_w, s = cfg.resolve(std_map)
    z = (std_map - tau_w) / s
    # exp(-z) overflows for very negative z; the stable branch handles that side
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def apply_weights(cube: RadarCube, weights: np.ndarray) -> RadarCube:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (cube.rows, cube.cols):
        raise ValueError(f"weight map shape {weights.shape} does not match cube {(cube.rows, cube.cols)}")
    return RadarCube(cube.data * weights[None, :, :])


def clip_and_normalize(cube: RadarCube, cfg: PreprocessConfig = PreprocessConfig(),
                       bounds: Optional[tuple[float, float]] = None) -> RadarCube:
    return minmax_normalize(clip_percentiles(cube, cfg.lo_pct, cfg.hi_pct, bounds=bounds))


def preprocess_pipeline(cube: RadarCube, cfg: PreprocessConfig = PreprocessConfig(),
                        bounds: Optional[tuple[float, float]] = None) -> RadarCube:
    normalized = clip_and_normalize(cube, cfg, bounds)
    if normalized.frames < 2:
        # a single frame has no temporal spread; weight uniformly at the sigmoid center
        return apply_weights(normalized, np.full((cube.rows, cube.cols), 0.5))
    weights = sigmoid_weight_map(temporal_std_map(normalized), cfg.sigmoid)
    return apply_weights(normalized, weights)
