"""Finite lattices for the local parameter and extended-real grid functions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

INF = np.inf


class ProperViolationError(ValueError):
    """A grid function has no finite value (it is not proper)."""


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Rectangular lattice in dimension p <= 3.

    Nodes are enumerated in C order over the axes, so ``nodes[i]`` is the
    i-th lattice point and ``values.reshape(shape)`` recovers the lattice.
    """

    axes: tuple[np.ndarray, ...]

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError(f"grid dimension must be 1..3, got {len(axes)}")
        for k, a in enumerate(axes):
            if a.ndim != 1 or a.size < 2:
                raise ValueError(f"axis {k} needs at least 2 nodes")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"axis {k} has non-finite nodes")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {k} is not strictly increasing")
            a.setflags(write=False)
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, radius: float, step: float, dim: int = 1) -> "GridDomain":
        """Symmetric lattice ``{-radius, ..., 0, ..., radius}`` on every axis."""
        m = int(round(radius / step))
        if m < 1 or not np.isclose(m * step, radius, rtol=1e-9, atol=0):
            raise ValueError("radius must be a positive multiple of step")
        # integer multiples keep the lattice exactly symmetric in floating point
        axis = np.arange(-m, m + 1) * step
        return cls(tuple(axis.copy() for _ in range(dim)))

    @classmethod
    def from_points(cls, points: Sequence[float]) -> "GridDomain":
        return cls((np.asarray(points, dtype=float),))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        out = np.stack([m.ravel() for m in mesh], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def symmetric(self) -> bool:
        return all(np.array_equal(a, -a[::-1]) for a in self.axes)

    @cached_property
    def negation_index(self) -> np.ndarray:
        """Index of -u for every node u (requires a symmetric grid)."""
        if not self.symmetric:
            raise ValueError("grid is not symmetric")
        idx = np.arange(self.size).reshape(self.shape)
        flipped = idx[tuple(slice(None, None, -1) for _ in self.shape)]
        return flipped.ravel()

    @cached_property
    def origin_index(self) -> int:
        hits = np.flatnonzero(np.all(self.nodes == 0.0, axis=1))
        if hits.size == 0:
            raise ValueError("0 is not a grid node")
        return int(hits[0])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Nodes lying on a face of the lattice box."""
        mask = np.zeros(self.size, dtype=bool)
        for k, a in enumerate(self.axes):
            mask |= (self.nodes[:, k] == a[0]) | (self.nodes[:, k] == a[-1])
        return mask

    def index_of(self, u) -> int:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.dim,):
            raise ValueError(f"point has dimension {u.size}, grid has {self.dim}")
        flat = 0
        for k, a in enumerate(self.axes):
            j = np.searchsorted(a, u[k])
            if j >= a.size or a[j] != u[k]:
                raise KeyError(f"{u.tolist()} is not a grid node")
            flat = flat * a.size + int(j)
        return flat

    def to_dict(self) -> dict:
        return {"axes": [a.tolist() for a in self.axes]}

    @classmethod
    def from_dict(cls, d: dict) -> "GridDomain":
        if "axes" in d:
            return cls(tuple(np.asarray(a, float) for a in d["axes"]))
        return cls.uniform(float(d["radius"]), float(d["step"]), int(d.get("dim", 1)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Extended-real valued function sampled on a lattice.

    ``+inf`` is a legitimate value (indicator functions); ``-inf`` and NaN
    are rejected, and at least one node must be finite.
    """

    grid: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if np.isnan(v).any():
            raise ValueError("NaN values are not allowed")
        if np.isneginf(v).any():
            raise ValueError("-inf values are not allowed")
        if not np.isfinite(v).any():
            raise ProperViolationError("grid function has no finite value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: GridDomain, func) -> "GridFunction":
        """Evaluate ``func`` row-wise on the nodes; ``func`` receives an (N, p) array."""
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def __call__(self, u) -> float:
        return float(self.values[self.grid.index_of(u)])

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.grid is not self.grid and not same_grid(self.grid, other.grid):
            raise ValueError("grid functions live on different grids")
        return GridFunction(self.grid, self.values + other.values)

    def argmin(self) -> np.ndarray:
        """All nodes attaining the minimum value."""
        m = self.values.min()
        return self.grid.nodes[self.values == m]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"u_{k + 1}" for k in range(self.dim)] + ["value"])
        for node, val in zip(self.grid.nodes, self.values):
            w.writerow([repr(float(x)) for x in node] + ["inf" if np.isinf(val) else repr(float(val))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "GridFunction":
        """Read a CSV written by :meth:`to_csv` (path or CSV text)."""
        text = Path(source).read_text() if _looks_like_path(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        p = len(header) - 1
        pts = np.array([[float(x) for x in r[:p]] for r in body])
        vals = np.array([float(r[p]) for r in body])
        axes = tuple(np.unique(pts[:, k]) for k in range(p))
        grid = GridDomain(axes)
        if grid.size != len(body):
            raise ValueError("CSV rows do not form a full rectangular lattice")
        out = np.empty(grid.size)
        for pt, v in zip(pts, vals):
            out[grid.index_of(pt)] = v
        return cls(grid, out)


def same_grid(a: GridDomain, b: GridDomain) -> bool:
    return a.dim == b.dim and all(np.array_equal(x, y) for x, y in zip(a.axes, b.axes))


def _looks_like_path(source) -> bool:
    if isinstance(source, Path):
        return True
    return isinstance(source, str) and "\n" not in source and Path(source).exists()

