"""Seeded synthetic range-azimuth cubes with people, furniture and noise.

People are Gaussian blobs whose amplitude breathes at 0.2-0.5 Hz and whose
center either stays put or random-walks (reflecting at the grid edges).
Furniture is static, so it contributes nothing to the temporal std map
except through noise. Every layout shares the same static room returns
(antenna leakage and two walls). On top of those, four sparse "A" layouts
carry 0-4 items and one cluttered "B" layout carries 6.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (ACTIVITIES, COLS, FRAMES, ROWS, SPLITS, DatasetManifest, ManifestEntry, RadarCube, Sample,
                   save_cube, write_manifest)

PRESET_ENV = {
    "A_empty": "A1",
    "A_chairs": "A2",
    "A_desks": "A3",
    "A_whiteboard": "A4",
    "B_complex": "B",
}
A_PRESETS = ("A_empty", "A_chairs", "A_desks", "A_whiteboard")
SPLIT_RATIO = (7.0, 1.5, 1.5)

FRAME_RATE = 8.5
MODULATION_DEPTH = 0.3
WALK_STEP_STD = 0.3
NOISE_STD = 0.015
PERSON_AMPLITUDE = (0.85, 1.0)
PERSON_RADIUS = (1.8, 2.0)


@dataclass(frozen=True)
class PersonSpec:
    row: float
    col: float
    radius: float = 2.0
    amplitude: float = 1.0
    breath_hz: float = 0.3
    phase: float = 0.0
    motion: str = "stationary"
    step_std: float = WALK_STEP_STD

    def __post_init__(self):
        if not 0.2 <= self.breath_hz <= 0.5:
            raise ValueError(f"breathing frequency {self.breath_hz} Hz outside 0.2-0.5 Hz")
        if not (0 <= self.row <= ROWS - 1 and 0 <= self.col <= COLS - 1):
            raise ValueError(f"person position ({self.row}, {self.col}) outside the {ROWS}x{COLS} grid")
        if not 1.0 <= self.radius <= 2.0:
            raise ValueError("person blob radius must lie in [1, 2] px")
        if self.motion not in ("stationary", "random_walk"):
            raise ValueError(f"unknown motion {self.motion!r}")


@dataclass(frozen=True)
class FurnitureSpec:
    row: float
    col: float
    radius: float
    amplitude: float


@dataclass(frozen=True)
class SceneConfig:
    persons: tuple = ()
    furniture: tuple = ()
    layout_preset: str = "A_empty"
    frame_rate: float = FRAME_RATE
    frames: int = FRAMES
    noise_std: float = NOISE_STD
    modulation_depth: float = MODULATION_DEPTH
    seed: int = 0
    rows: int = ROWS
    cols: int = COLS

    def __post_init__(self):
        if len(self.persons) > 3:
            raise ValueError("at most 3 persons per scene")
        if self.frames < 2:
            raise ValueError("scene needs at least 2 frames")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.layout_preset not in PRESET_ENV:
            raise ValueError(f"unknown layout preset {self.layout_preset!r}")
        for p in self.persons:
            if not (0 <= p.row <= self.rows - 1 and 0 <= p.col <= self.cols - 1):
                raise ValueError(f"person position ({p.row}, {p.col}) outside the grid")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["persons"] = [asdict(p) for p in self.persons]
        d["furniture"] = [asdict(f) for f in self.furniture]
        return d


def _blob(rows: int, cols: int, row: float, col: float, radius: float) -> np.ndarray:
    """Isotropic Gaussian with sigma = radius / 2, zero beyond ``radius``."""
    sigma = radius / 2.0
    r = np.arange(rows)[:, None] - row
    c = np.arange(cols)[None, :] - col
    d2 = r * r + c * c
    out = np.exp(-d2 / (2.0 * sigma * sigma))
    out[d2 > radius * radius] = 0.0
    return out


def _reflect(x: float, hi: float) -> float:
    # fold back into [0, hi]
    period = 2.0 * hi
    x = abs(x) % period
    return period - x if x > hi else x


def _trajectory(p: PersonSpec, frames: int, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    pos = np.empty((frames, 2))
    pos[0] = p.row, p.col
    if p.motion == "stationary":
        pos[:] = pos[0]
        return pos
    steps = rng.normal(0.0, p.step_std, size=(frames - 1, 2))
    for t in range(1, frames):
        pos[t, 0] = _reflect(pos[t - 1, 0] + steps[t - 1, 0], rows - 1)
        pos[t, 1] = _reflect(pos[t - 1, 1] + steps[t - 1, 1], cols - 1)
    return pos


def scene_rng(seed: int, key: str) -> np.random.Generator:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(digest[:8], "little")]))


def render(scene: SceneConfig) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([scene.seed, 0x5CE7E]))
    T, R, C = scene.frames, scene.rows, scene.cols
    data = np.zeros((T, R, C))
    for f in scene.furniture:
        data += f.amplitude * _blob(R, C, f.row, f.col, f.radius)[None]
    t = np.arange(T)
    for p in scene.persons:
        path = _trajectory(p, T, R, C, rng)
        mod = 1.0 + scene.modulation_depth * np.sin(2 * np.pi * p.breath_hz * t / scene.frame_rate + p.phase)
        for k in range(T):
            data[k] += p.amplitude * mod[k] * _blob(R, C, path[k, 0], path[k, 1], p.radius)
    if scene.noise_std > 0:
        data += rng.normal(0.0, scene.noise_std, size=data.shape)
    # store at float32 precision so the in-memory cube equals its RADC file
    return data.astype(np.float32).astype(np.float64)


def generate_cube(scene: SceneConfig, label: Optional[int] = None, activity: Optional[str] = None,
                  sample_id: str = "scene") -> Sample:
    if activity is None:
        motions = {p.motion for p in scene.persons}
        activity = "walking" if motions == {"random_walk"} else "mixed" if len(motions) > 1 else "standing"
    n = len(scene.persons) if label is None else label
    return Sample(RadarCube(render(scene)), n, PRESET_ENV[scene.layout_preset], activity, sample_id)


# ---------------------------------------------------------------- layouts

# static returns present in every layout: TX/RX leakage at the nearest range
# bins and two wall reflections; they set the dynamic range of empty scenes
ROOM_STATIC = (
    FurnitureSpec(0.0, 45.0, 3.0, 1.5),
    FurnitureSpec(11.0, 20.0, 2.0, 0.8),
    FurnitureSpec(11.0, 70.0, 2.0, 0.8),
)


def preset_furniture(preset: str, rng: np.random.Generator) -> tuple:
    return ROOM_STATIC + _layout_items(preset, rng)


def _layout_items(preset: str, rng: np.random.Generator) -> tuple:
    if preset == "A_empty":
        return ()
    if preset == "A_chairs":
        n = int(rng.integers(1, 5))
        return tuple(FurnitureSpec(float(rng.uniform(1, 10)), float(rng.uniform(5, 85)), 1.5,
                                   float(rng.uniform(0.4, 0.8))) for _ in range(n))
    if preset == "A_desks":
        return (FurnitureSpec(6.0, 42.0, 3.0, 0.9), FurnitureSpec(6.0, 48.0, 3.0, 0.9))
    if preset == "A_whiteboard":
        return (FurnitureSpec(5.0, 45.0, 3.0, 1.1),)
    if preset == "B_complex":
        return (
            FurnitureSpec(2.0, 15.0, 1.5, 0.7), FurnitureSpec(9.0, 30.0, 1.5, 0.7), FurnitureSpec(3.0, 75.0, 1.5, 0.7),
            FurnitureSpec(6.0, 42.0, 3.0, 1.2), FurnitureSpec(6.0, 50.0, 3.0, 1.2),
            FurnitureSpec(10.0, 62.0, 3.0, 2.2),
        )
    raise ValueError(f"unknown preset {preset!r}")


def _place_persons(n: int, rng: np.random.Generator, rows: int = ROWS, cols: int = COLS) -> list:
    """Random positions at least 10 azimuth bins or 5 range bins apart."""
    placed: list = []
    while len(placed) < n:
        r = float(rng.uniform(1.5, rows - 2.5))
        c = float(rng.uniform(6, cols - 7))
        if all(abs(c - pc) >= 10 or abs(r - pr) >= 5 for pr, pc in placed):
            placed.append((r, c))
    return placed


def random_scene(preset: str, n_persons: int, activity: str, seed: int, key: str,
                 frames: int = FRAMES, noise_std: float = NOISE_STD) -> SceneConfig:
    rng = scene_rng(seed, key)
    furniture = preset_furniture(preset, rng)
    persons = []
    for i, (r, c) in enumerate(_place_persons(n_persons, rng)):
        if activity == "standing":
            motion = "stationary"
        elif activity == "walking":
            motion = "random_walk"
        else:
            motion = "random_walk" if i % 2 == 0 else "stationary"
        persons.append(PersonSpec(
            row=r, col=c,
            radius=float(rng.uniform(PERSON_RADIUS[0], PERSON_RADIUS[1])),
            amplitude=float(rng.uniform(PERSON_AMPLITUDE[0], PERSON_AMPLITUDE[1])),
            breath_hz=float(rng.uniform(0.2, 0.5)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            motion=motion,
        ))
    scene_seed = int(rng.integers(0, 2**31 - 1))
    return SceneConfig(tuple(persons), furniture, preset, frames=frames, noise_std=noise_std, seed=scene_seed)


def largest_remainder(n: int, ratio=SPLIT_RATIO) -> list:
    """Integer split of ``n`` proportional to ``ratio``; leftover units go to the
    largest fractional parts, earlier slots first on ties."""
    total = sum(ratio)
    exact = [n * r / total for r in ratio]
    counts = [int(e) for e in exact]
    order = sorted(range(len(ratio)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:n - sum(counts)]:
        counts[i] += 1
    return counts


def assign_splits(n: int, seed: int) -> list:
    counts = largest_remainder(n)
    names = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5911])).permutation(n)
    out = [""] * n
    for slot, idx in enumerate(perm):
        out[idx] = names[slot]
    return out


def dataset_plan(env: str, per_class: int, seed: int) -> list:
    """(sample id, preset, label, activity, split) for every sample of a dataset.

    ``env`` is a preset name, or "A" to spread samples over the four A presets.
    """
    if env == "A":
        presets = A_PRESETS
    elif env in PRESET_ENV:
        presets = (env,)
    else:
        raise ValueError(f"unknown environment/preset {env!r}")
    rows = []
    for label in range(4):
        for k in range(per_class):
            preset = presets[k % len(presets)]
            activity = ACTIVITIES[k % len(ACTIVITIES)]
            sid = f"{PRESET_ENV[preset]}_c{label}_{k:04d}"
            rows.append((sid, preset, label, activity))
    if env == "B_complex":
        splits = ["test"] * len(rows)
    else:
        splits = assign_splits(len(rows), seed)
    return [r + (s,) for r, s in zip(rows, splits)]


def generate_dataset(env: str, per_class: int, seed: int, out_dir, frames: int = FRAMES,
                     noise_std: float = NOISE_STD) -> DatasetManifest:
    """Write RADC cubes, ``manifest.jsonl`` and ``scenes.json`` into ``out_dir``.

    One ``manifest_<split>.jsonl`` per non-empty split is written alongside.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries, scenes = [], {}
    for sid, preset, label, activity, split in dataset_plan(env, per_class, seed):
        scene = random_scene(preset, label, activity, seed, sid, frames=frames, noise_std=noise_std)
        sample = generate_cube(scene, label, activity, sid)
        fname = f"{sid}.radc"
        save_cube(sample.cube, out / fname)
        entries.append(ManifestEntry(fname, label, sample.environment, activity, split))
        scenes[sid] = scene.to_dict()
    manifest = DatasetManifest(entries, out)
    write_manifest(manifest, out / "manifest.jsonl")
    for split in SPLITS:
        part = manifest.split(split)
        if len(part):
            write_manifest(part, out / f"manifest_{split}.jsonl")
    with open(out / "scenes.json", "w", encoding="utf-8") as fh:
        json.dump({"env": env, "per_class": per_class, "seed": seed, "scenes": scenes}, fh,
                  indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def generate_samples(env: str, per_class: int, seed: int, frames: int = FRAMES,
                     noise_std: float = NOISE_STD) -> list:
    """In-memory variant of ``generate_dataset``: list of (Sample, split)."""
    out = []
    for sid, preset, label, activity, split in dataset_plan(env, per_class, seed):
        scene = random_scene(preset, label, activity, seed, sid, frames=frames, noise_std=noise_std)
        out.append((generate_cube(scene, label, activity, sid), split))
    return out
