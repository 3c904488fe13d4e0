"""Radar cube containers, dataset manifests and the RADC binary format.

A cube is stored frame-major: ``data[frame, row, col]`` with 12 range rows and
91 azimuth columns for sensor-conformant data.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

ROWS = 12
COLS = 91
FRAMES = 60

LABELS = (0, 1, 2, 3)
ENVIRONMENTS = ("A1", "A2", "A3", "A4", "B")
ACTIVITIES = ("standing", "walking", "mixed")
SPLITS = ("train", "val", "test")

MAGIC = b"RADC"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHI")  # magic, version, reserved, rows, cols, frames
_F32_MAX = float(np.finfo(np.float32).max)


class CubeFormatError(ValueError):
    """Raised when a RADC file or a cube violates the format contract."""


class DimensionMismatchError(CubeFormatError):
    """Payload size disagrees with the dimensions declared in the header."""


class TruncatedPayloadError(DimensionMismatchError):
    """Payload ends before the declared number of values."""


@dataclass(frozen=True, eq=False)
class RadarCube:
    """Immutable stack of range-azimuth amplitude maps.

    ``data`` has shape ``(frames, rows, cols)`` and is held as float64; only
    float32-representable values survive a save/load cycle bit-exactly.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise CubeFormatError(f"cube must be 3-D (frames, rows, cols), got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise CubeFormatError("cube must have at least one frame")
        if not np.all(np.isfinite(arr)):
            raise CubeFormatError("cube contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]

    @property
    def conformant(self) -> bool:
        return self.rows == ROWS and self.cols == COLS

    def frame(self, index: int) -> np.ndarray:
        return self.data[index]

    def __eq__(self, other):
        if not isinstance(other, RadarCube):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"RadarCube(frames={self.frames}, rows={self.rows}, cols={self.cols})"


def save_cube(cube: RadarCube, path) -> None:
    data = cube.data
    if not np.all(np.isfinite(data)):
        raise CubeFormatError("refusing to save a cube with non-finite values")
    if np.any(np.abs(data) > _F32_MAX):
        raise CubeFormatError("cube values overflow float32")
    if cube.rows > 0xFFFF or cube.cols > 0xFFFF or cube.frames > 0xFFFFFFFF:
        raise CubeFormatError(f"cube dimensions {data.shape} overflow the RADC header")
    header = _HEADER.pack(MAGIC, VERSION, 0, cube.rows, cube.cols, cube.frames)
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_cube(path) -> RadarCube:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CubeFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, _reserved, rows, cols, frames = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CubeFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CubeFormatError(f"{path}: unsupported RADC version {version}")
    expected = rows * cols * frames * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: truncated payload, header declares {rows}x{cols}x{frames} "
            f"({expected} bytes) but only {len(payload)} bytes follow"
        )
    if len(payload) > expected:
        raise DimensionMismatchError(
            f"{path}: dimension mismatch, {len(payload)} payload bytes for a "
            f"{rows}x{cols}x{frames} header ({expected} bytes)"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(frames, rows, cols)
    if not np.all(np.isfinite(values)):
        raise CubeFormatError(f"{path}: payload contains non-finite values")
    return RadarCube(values)


def slice_window(cube: RadarCube, start: int, length: int) -> RadarCube:
    if start < 0 or length < 1 or start + length > cube.frames:
        raise IndexError(f"window [{start}, {start + length}) outside cube of {cube.frames} frames")
    return RadarCube(cube.data[start:start + length])


@dataclass(frozen=True)
class Sample:
    cube: RadarCube
    label: int
    environment: str
    activity: str
    id: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label}")
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")
        if self.activity not in ACTIVITIES:
            raise ValueError(f"unknown activity {self.activity!r}")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    environment: str
    activity: str
    split: str

    def __post_init__(self):
        if int(self.label) != self.label or self.label not in LABELS:
            raise ValueError(f"label must be an integer in {LABELS}, got {self.label!r}")
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")
        if self.activity not in ACTIVITIES:
            raise ValueError(f"unknown activity {self.activity!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def id(self) -> str:
        return Path(self.path).stem

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "label": int(self.label),
            "environment": self.environment,
            "activity": self.activity,
            "split": self.split,
        }


@dataclass
class DatasetManifest:
    """Ordered collection of manifest entries; paths resolve against ``root``."""

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise ValueError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)
        self.root = Path(self.root)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def split(self, *names: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split in names], self.root)

    def ids(self) -> set[str]:
        return {e.id for e in self.entries}

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def load(self, entry: ManifestEntry) -> Sample:
        return Sample(
            cube=load_cube(self.resolve(entry)),
            label=int(entry.label),
            environment=entry.environment,
            activity=entry.activity,
            id=entry.id,
        )

    def samples(self) -> Iterator[Sample]:
        for e in self.entries:
            yield self.load(e)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)


def write_manifest(manifest: DatasetManifest | Iterable[ManifestEntry], path) -> None:
    entries = manifest.entries if isinstance(manifest, DatasetManifest) else list(manifest)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                entries.append(ManifestEntry(
                    path=rec["path"],
                    label=int(rec["label"]),
                    environment=rec["environment"],
                    activity=rec["activity"],
                    split=rec["split"],
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from exc
    return DatasetManifest(entries, root=path.parent)


def relpath(path, start) -> str:
    return Path(os.path.relpath(path, start)).as_posix()
