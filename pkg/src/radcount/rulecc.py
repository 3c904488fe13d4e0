"""Rule-based connected-component people counter.

Per window: temporal std map -> Gaussian smoothing -> binarization at each of
the threshold levels -> erosion -> dilation -> 4-connected labeling -> area
and compactness validation. The window count is the largest number of valid
components over the threshold levels; windows of several sizes are then
merged by a non-zero-priority mode vote.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import RadarCube, slice_window
from .preprocess import temporal_std_map

DEFAULT_WINDOWS = (10, 15, 20, 25, 30, 60)


@dataclass(frozen=True)
class RuleCCConfig:
    tau: float = 0.025
    threshold_factors: tuple = (1.0, 0.8, 0.6)
    gaussian_sigma: float = 0.8
    erosion_iters: int = 1
    dilation_iters: int = 2
    area_min: int = 2
    area_max: int = 50
    compactness_min: float = 0.1
    window_sizes: tuple = DEFAULT_WINDOWS
    nonzero_ratio: float = 0.30

    def __post_init__(self):
        object.__setattr__(self, "threshold_factors", tuple(float(f) for f in self.threshold_factors))
        object.__setattr__(self, "window_sizes", tuple(sorted({int(w) for w in self.window_sizes})))
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        f = self.threshold_factors
        if not f or any(not 0 < x <= 1 for x in f) or any(a <= b for a, b in zip(f, f[1:])):
            raise ValueError(f"threshold factors must be strictly descending in (0, 1], got {f}")
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be > 0")
        if self.erosion_iters < 0 or self.dilation_iters < 0:
            raise ValueError("morphology iterations must be >= 0")
        if not 0 <= self.area_min <= self.area_max:
            raise ValueError("need 0 <= area_min <= area_max")
        if not 0 <= self.compactness_min <= 1:
            raise ValueError("compactness_min must lie in [0, 1]")
        if not self.window_sizes or self.window_sizes[0] < 2:
            raise ValueError("window sizes must be >= 2 frames")
        if not 0 < self.nonzero_ratio < 1:
            raise ValueError("nonzero_ratio must lie in (0, 1)")

    @property
    def thresholds(self) -> tuple:
        return tuple(f * self.tau for f in self.threshold_factors)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["threshold_factors"] = list(self.threshold_factors)
        d["window_sizes"] = list(self.window_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RuleCCConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def load(cls, path) -> "RuleCCConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------- smoothing

def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(std_map: np.ndarray, sigma: float = 0.8) -> np.ndarray:
    """Separable Gaussian blur, support ceil(3*sigma), zero padding."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    img = np.asarray(std_map, dtype=np.float64)
    rows, cols = img.shape
    padded = np.pad(img, r)
    tmp = np.zeros((rows + 2 * r, cols))
    for i, w in enumerate(k):
        tmp += w * padded[:, i:i + cols]
    out = np.zeros((rows, cols))
    for i, w in enumerate(k):
        out += w * tmp[i:i + rows, :]
    return out


# ---------------------------------------------------------------- binary maps

def binarize(std_map: np.ndarray, threshold: float) -> np.ndarray:
    return (np.asarray(std_map) > threshold).astype(np.uint8)


def _neighbours(mask: np.ndarray):
    """Up/down/left/right neighbour values with zero padding; works on stacks
    whose last two axes are the image."""
    up = np.zeros_like(mask)
    down = np.zeros_like(mask)
    left = np.zeros_like(mask)
    right = np.zeros_like(mask)
    up[..., 1:, :] = mask[..., :-1, :]
    down[..., :-1, :] = mask[..., 1:, :]
    left[..., :, 1:] = mask[..., :, :-1]
    right[..., :, :-1] = mask[..., :, 1:]
    return up, down, left, right


def erode4(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    m = np.asarray(mask).astype(bool)
    for _ in range(iterations):
        up, down, left, right = _neighbours(m)
        m = m & up & down & left & right
    return m.astype(np.uint8)


def dilate4(mask: np.ndarray, iterations: int = 2) -> np.ndarray:
    m = np.asarray(mask).astype(bool)
    for _ in range(iterations):
        up, down, left, right = _neighbours(m)
        m = m | up | down | left | right
    return m.astype(np.uint8)


# ---------------------------------------------------------------- components

@dataclass(frozen=True)
class Component:
    pixels: tuple
    area: int
    perimeter: int
    compactness: float


def _roots(mask: np.ndarray) -> np.ndarray:
    """Flat index of each pixel's component root (its smallest flat index).

    Union by hooking the larger root under the smaller one, then full path
    compression, until no 4-adjacent foreground pair has distinct roots.
    Planes of a stack never connect to each other.
    """
    m = np.asarray(mask).astype(bool)
    cols = m.shape[-1]
    h = np.zeros_like(m)
    h[..., :, :-1] = m[..., :, :-1] & m[..., :, 1:]
    v = np.zeros_like(m)
    v[..., :-1, :] = m[..., :-1, :] & m[..., 1:, :]
    ha, va = np.flatnonzero(h), np.flatnonzero(v)
    ea = np.concatenate([ha, va])
    eb = np.concatenate([ha + 1, va + cols])
    parent = np.arange(m.size)
    while True:
        ra, rb = parent[ea], parent[eb]
        diff = ra != rb
        if not diff.any():
            return parent
        np.minimum.at(parent, np.maximum(ra, rb)[diff], np.minimum(ra, rb)[diff])
        while True:
            nxt = parent[parent]
            if np.array_equal(nxt, parent):
                break
            parent = nxt


def label_image(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected labeling, labels 1..n numbered in row-major discovery order."""
    mask = np.asarray(mask).astype(bool)
    out = np.zeros(mask.size, dtype=np.int32)
    fg = np.flatnonzero(mask)
    if fg.size == 0:
        return out.reshape(mask.shape), 0
    roots = _roots(mask)[fg]
    # a root is its component's first pixel in row-major order
    uniq = np.unique(roots)
    out[fg] = np.searchsorted(uniq, roots) + 1
    return out.reshape(mask.shape), len(uniq)


def component_metrics(pixels: Iterable) -> tuple[int, int, float]:
    """Area, exposed-edge perimeter and 4*pi*area/perimeter**2 of a pixel set."""
    pix = {tuple(p) for p in pixels}
    if not pix:
        raise ValueError("component must be non-empty")
    area = len(pix)
    inside = sum((r + dr, c + dc) in pix
                 for r, c in pix for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)))
    perimeter = 4 * area - inside
    return area, perimeter, 4 * math.pi * area / perimeter ** 2


def label_components_4(mask: np.ndarray) -> tuple:
    labels, n = label_image(mask)
    flat = labels.ravel()
    cols = labels.shape[-1]
    fg = np.flatnonzero(flat)
    # stable sort keeps row-major pixel order inside each label
    order = fg[np.argsort(flat[fg], kind="stable")]
    bounds = np.searchsorted(flat[order], np.arange(1, n + 2))
    # each shared edge inside a component hides two unit sides
    h = labels[:, :-1][(labels[:, :-1] == labels[:, 1:]) & (labels[:, :-1] > 0)]
    v = labels[:-1][(labels[:-1] == labels[1:]) & (labels[:-1] > 0)]
    area = np.diff(bounds)
    perim = 4 * area - 2 * (np.bincount(h, minlength=n + 1)[1:] + np.bincount(v, minlength=n + 1)[1:])
    comps = []
    for lab in range(n):
        idx = order[bounds[lab]:bounds[lab + 1]]
        pixels = tuple(zip((idx // cols).tolist(), (idx % cols).tolist()))
        a, p = int(area[lab]), int(perim[lab])
        comps.append(Component(pixels, a, p, 4 * math.pi * a / p ** 2))
    return tuple(comps)


def is_valid(comp: Component, cfg: RuleCCConfig) -> bool:
    return cfg.area_min <= comp.area <= cfg.area_max and comp.compactness >= cfg.compactness_min


def valid_components(components: Sequence[Component], cfg: RuleCCConfig) -> tuple:
    return tuple(c for c in components if is_valid(c, cfg))


def count_valid_stack(masks: np.ndarray, cfg: RuleCCConfig) -> np.ndarray:
    """Valid-component count of every plane in a (P, rows, cols) mask stack."""
    m = np.asarray(masks).astype(bool)
    planes = m.shape[0]
    fg = np.flatnonzero(m)
    if fg.size == 0:
        return np.zeros(planes, dtype=np.int64)
    roots = _roots(m)[fg]
    up, down, left, right = _neighbours(m)
    inside = (up.astype(np.int64) + down + left + right).ravel()[fg]
    area = np.bincount(roots, minlength=m.size)
    perim = np.bincount(roots, weights=4 - inside, minlength=m.size)
    comp = np.flatnonzero(area)
    a, p = area[comp], perim[comp]
    ok = (a >= cfg.area_min) & (a <= cfg.area_max) & (4 * np.pi * a / p ** 2 >= cfg.compactness_min)
    plane_size = m[0].size
    return np.bincount(comp[ok] // plane_size, minlength=planes)


def count_valid(mask: np.ndarray, cfg: RuleCCConfig) -> int:
    """Number of valid components in a mask, without materializing pixel sets."""
    return int(count_valid_stack(np.asarray(mask)[None], cfg)[0])


# ---------------------------------------------------------------- counting

def opened_mask(smoothed: np.ndarray, threshold: float, cfg: RuleCCConfig) -> np.ndarray:
    m = binarize(smoothed, threshold)
    m = erode4(m, cfg.erosion_iters)
    return dilate4(m, cfg.dilation_iters)


def threshold_counts(smoothed: np.ndarray, cfg: RuleCCConfig, thresholds=None) -> tuple:
    """Valid-component count for each threshold on an already smoothed std map."""
    t = np.asarray(cfg.thresholds if thresholds is None else thresholds, dtype=np.float64)
    if t.size == 0:
        return ()
    masks = np.asarray(smoothed)[None] > t[:, None, None]
    masks = dilate4(erode4(masks, cfg.erosion_iters), cfg.dilation_iters).astype(bool)
    # many thresholds open to the same mask; count each distinct mask once
    packed = np.packbits(masks.reshape(len(t), -1), axis=1)
    _, first, inverse = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    counts = count_valid_stack(masks[first], cfg)
    return tuple(int(c) for c in counts[inverse.ravel()])


def smoothed_std(window: RadarCube, cfg: RuleCCConfig) -> np.ndarray:
    return gaussian_smooth(temporal_std_map(window), cfg.gaussian_sigma)


def count_window(window: RadarCube, cfg: RuleCCConfig = RuleCCConfig()) -> int:
    return max(threshold_counts(smoothed_std(window, cfg), cfg))


@dataclass(frozen=True)
class WindowPrediction:
    window_start: int
    window_size: int
    count: int
    per_threshold: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "start": self.window_start,
            "size": self.window_size,
            "per_threshold": list(self.per_threshold),
            "count": self.count,
        }


def window_starts(frames: int, size: int) -> range:
    step = max(1, size // 4)
    return range(0, frames - size + 1, step)


def window_predictions(cube: RadarCube, cfg: RuleCCConfig = RuleCCConfig()) -> list[WindowPrediction]:
    sizes = [w for w in cfg.window_sizes if w <= cube.frames]
    if not sizes:
        raise ValueError(
            f"cube has {cube.frames} frames, shorter than every window size {cfg.window_sizes}"
        )
    preds = []
    for w in sizes:
        for start in window_starts(cube.frames, w):
            counts = threshold_counts(smoothed_std(slice_window(cube, start, w), cfg), cfg)
            preds.append(WindowPrediction(start, w, max(counts), counts))
    return preds


def _mode_high(values: Sequence[int]) -> int:
    freq = Counter(values)
    best = max(freq.values())
    return max(v for v, n in freq.items() if n == best)


def integrate_counts(counts: Sequence[int], nonzero_ratio: float = 0.30) -> int:
    """Non-zero-priority mode vote; frequency ties go to the larger count."""
    counts = [int(c) for c in counts]
    if not counts:
        return 0
    nonzero = [c for c in counts if c > 0]
    if len(nonzero) / len(counts) > nonzero_ratio:
        return _mode_high(nonzero)
    return _mode_high(counts)


def predict_sequence(cube: RadarCube, cfg: RuleCCConfig = RuleCCConfig()) -> int:
    return integrate_counts([p.count for p in window_predictions(cube, cfg)], cfg.nonzero_ratio)


def explain_sequence(cube: RadarCube, cfg: RuleCCConfig = RuleCCConfig()) -> dict:
    preds = window_predictions(cube, cfg)
    return {
        "thresholds": list(cfg.thresholds),
        "windows": [p.to_dict() for p in preds],
        "count": integrate_counts([p.count for p in preds], cfg.nonzero_ratio),
    }


def with_single_window(cfg: RuleCCConfig, window: int, tau: float) -> RuleCCConfig:
    return replace(cfg, window_sizes=(window,), tau=tau)


# single-window mode at W=20, tau=0.025; the multi-window ensemble of
# RuleCCConfig() remains the general-purpose default
SINGLE_WINDOW_DEFAULT = with_single_window(RuleCCConfig(), 20, 0.025)
