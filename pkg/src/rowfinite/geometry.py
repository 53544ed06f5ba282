"""Quenched point configurations and their radius-r interaction graphs.

A :class:`Configuration` is a finite point set inside an axis-aligned box
together with the fixed-radius neighbor index.  Every point is its own
neighbor, so the counts ``n_i`` are always at least one.
"""
from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ResourceLimitError

DEFAULT_MAX_POINTS = 200_000

# relative slack on r^2 so lattice distances equal to r survive rounding
_SLACK = 1e-12


def _sqdist(a, b):
    diff = a - b
    return np.sum(diff * diff, axis=-1)


def _within(sqdist, radius):
    return sqdist <= radius * radius * (1.0 + _SLACK)


def _as_box(box, dim):
    """Normalise a half-width, a (lo, hi) pair or a per-axis list to shape (dim, 2)."""
    if np.isscalar(box):
        half = float(box)
        arr = np.tile([-half, half], (dim, 1))
    else:
        arr = np.asarray(box, dtype=float)
        if arr.shape == (2,):
            arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise ConfigError(f"box must have shape ({dim}, 2), got {arr.shape}")
    if np.any(arr[:, 1] <= arr[:, 0]):
        raise ConfigError("box is degenerate: every axis needs lo < hi")
    return arr


def cell_list_pairs(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs (i, j) with |x_i - x_j| <= radius, self pairs included.

    Uses a uniform grid of cells of side ``radius``; only the 3^d surrounding
    cells are scanned for each occupied cell.  Pairs come back sorted by
    (i, j).
    """
    n, dim = points.shape
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    side = radius if radius > 0 else 1.0
    cells = np.floor((points - points.min(axis=0)) / side).astype(np.int64)
    buckets: dict[tuple, list[int]] = defaultdict(list)
    for idx, key in enumerate(map(tuple, cells)):
        buckets[key].append(idx)
    members = {key: np.asarray(idx, dtype=np.int64) for key, idx in buckets.items()}
    offsets = list(itertools.product((-1, 0, 1), repeat=dim))

    rows, cols = [], []
    for key, mine in members.items():
        here = points[mine]
        for off in offsets:
            other = members.get(tuple(k + o for k, o in zip(key, off)))
            if other is None:
                continue
            hit = _within(_sqdist(here[:, None, :], points[other][None, :, :]), radius)
            ii, jj = np.nonzero(hit)
            rows.append(mine[ii])
            cols.append(other[jj])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order]


def brute_force_pairs(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """O(N^2) reference for :func:`cell_list_pairs`."""
    if len(points) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    hit = _within(_sqdist(points[:, None, :], points[None, :, :]), radius)
    rows, cols = np.nonzero(hit)
    return rows.astype(np.int64), cols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Configuration:
    """A finite configuration gamma ∩ Box with its radius-r neighbor index.

    Neighbor lists are stored in CSR layout: the neighbors of point ``i`` are
    ``indices[indptr[i]:indptr[i + 1]]``, sorted ascending and containing ``i``.
    Instances are immutable; arrays are flagged read-only.
    """

    dim: int
    points: np.ndarray
    box: np.ndarray
    radius: float
    seed: int | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        box = _as_box(self.box, self.dim)
        if self.radius < 0 or not math.isfinite(self.radius):
            raise ConfigError("radius must be finite and >= 0")
        if len(pts) and (np.any(pts < box[:, 0]) or np.any(pts > box[:, 1])):
            raise ConfigError("configuration has points outside its box")
        rows, cols = cell_list_pairs(pts, self.radius)
        indptr = np.zeros(len(pts) + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=len(pts)), out=indptr[1:])
        for name, arr in (("points", pts), ("box", box), ("indptr", indptr), ("indices", cols)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.points)

    @property
    def counts(self) -> np.ndarray:
        """n_i, the size of each neighbor list (self included)."""
        return np.diff(self.indptr)

    @property
    def norms(self) -> np.ndarray:
        """Euclidean norm |x_i| of every position."""
        return np.sqrt(np.sum(self.points * self.points, axis=1))

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def rows(self) -> np.ndarray:
        """Row index of every entry of ``indices``."""
        return np.repeat(np.arange(len(self)), self.counts)

    @cached_property
    def edge_list(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Off-diagonal neighbor pairs (i, j), i != j, with their own row pointer."""
        rows = self.rows
        keep = rows != self.indices
        i, j = rows[keep], self.indices[keep]
        ptr = np.zeros(len(self) + 1, dtype=np.int64)
        np.cumsum(np.bincount(i, minlength=len(self)), out=ptr[1:])
        for arr in (i, j, ptr):
            arr.setflags(write=False)
        return i, j, ptr

    # serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "radius": self.radius,
            "box": self.box.tolist(),
            "points": self.points.tolist(),
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Configuration":
        unknown = set(data) - {"dim", "radius", "box", "points", "seed"}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(
            dim=int(data["dim"]),
            points=np.asarray(data["points"], dtype=float).reshape(-1, int(data["dim"])),
            box=data["box"],
            radius=float(data["radius"]),
            seed=data.get("seed"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Configuration":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _guard(count, max_points):
    if count > max_points:
        raise ResourceLimitError(
            f"configuration would hold {count} points, limit is {max_points}"
        )


def gen_lattice(
    dim: int,
    extent: int,
    spacing: float = 1.0,
    radius: float = 1.0,
    max_points: int = DEFAULT_MAX_POINTS,
) -> Configuration:
    """The lattice {spacing * k : k in Z^dim, |k_i| <= extent}, lexicographic order."""
    if dim < 1 or extent < 0:
        raise ConfigError("dim must be >= 1 and extent >= 0")
    if spacing <= 0:
        raise ConfigError("spacing must be > 0")
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    _guard((2 * extent + 1) ** dim, max_points)
    ks = np.array(list(itertools.product(range(-extent, extent + 1), repeat=dim)), dtype=float)
    half = max(extent * spacing, spacing / 2)
    return Configuration(dim=dim, points=spacing * ks, box=half, radius=radius)


def gen_poisson(
    dim: int,
    intensity: float,
    box,
    radius: float,
    seed: int,
    max_points: int = DEFAULT_MAX_POINTS,
) -> Configuration:
    """Homogeneous Poisson configuration in ``box``.

    ``box`` is a half-width (giving the origin-centred cube), a single
    ``(lo, hi)`` pair applied on every axis, or a per-axis list of pairs.
    Identical arguments give bit-identical points.
    """
    if intensity <= 0 or not math.isfinite(intensity):
        raise ConfigError("intensity must be finite and > 0")
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    arr = _as_box(box, dim)
    volume = float(np.prod(arr[:, 1] - arr[:, 0]))
    mean = intensity * volume
    _guard(mean, max_points)
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(mean))
    _guard(count, max_points)
    pts = rng.uniform(arr[:, 0], arr[:, 1], size=(count, dim))
    return Configuration(dim=dim, points=pts, box=arr, radius=radius, seed=seed)


@dataclass
class GrowthReport:
    violations: list[tuple[int, int, float]]
    max_ratio: float

    @property
    def passes(self) -> bool:
        return not self.violations


def check_growth(config: Configuration, z: Callable[[np.ndarray], np.ndarray]) -> GrowthReport:
    """Compare every neighbor count n_i with the bound z(|x_i|)."""
    bound = np.asarray(z(config.norms), dtype=float)
    counts = config.counts
    # calibrated bounds reproduce a count only up to rounding
    bad = np.nonzero(counts > bound * (1.0 + _SLACK))[0]
    ratio = float(np.max(counts / bound)) if len(config) else 0.0
    return GrowthReport(
        violations=[(int(i), int(counts[i]), float(bound[i])) for i in bad],
        max_ratio=ratio,
    )


def calibrate_growth(config: Configuration, shape: Callable[[np.ndarray], np.ndarray]) -> float:
    """Smallest multiplier a with n_i <= a * shape(|x_i|) for every point."""
    if not len(config):
        return 1.0
    return float(np.max(config.counts / np.asarray(shape(config.norms), dtype=float)))


def log_growth_shape(s):
    return 1.0 + np.log1p(s)


def loglog_growth_shape(s):
    return 1.0 + np.log(np.log(np.e + np.asarray(s, dtype=float)))


# finite volumes Lambda ---------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball {x : |x - center| <= radius}."""

    radius: float
    center: tuple[float, ...] | None = None

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        c = np.zeros(pts.shape[1]) if self.center is None else np.asarray(self.center, dtype=float)
        return _within(_sqdist(pts, c), self.radius)

    def to_dict(self) -> dict:
        out = {"kind": "ball", "radius": self.radius}
        if self.center is not None:
            out["center"] = list(self.center)
        return out


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box with per-axis bounds ``lo`` and ``hi``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=1)

    def to_dict(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Everywhere:
    """The whole space; no point is frozen."""

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.ones(len(points), dtype=bool)

    def to_dict(self) -> dict:
        return {"kind": "all"}


Volume = Ball | Box | Everywhere


def volume_from_dict(data: dict | None) -> Volume:
    if data is None:
        return Everywhere()
    data = dict(data)
    kind = data.pop("kind", None)
    try:
        if kind == "ball":
            center = data.pop("center", None)
            vol = Ball(float(data.pop("radius")), None if center is None else tuple(map(float, center)))
        elif kind == "box":
            vol = Box(tuple(map(float, data.pop("lo"))), tuple(map(float, data.pop("hi"))))
        elif kind == "all":
            vol = Everywhere()
        else:
            raise ConfigError(f"unknown volume kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"volume is missing {exc}") from None
    if data:
        raise ConfigError(f"unknown volume keys: {sorted(data)}")
    return vol
