"""Polyhedral constraint sets, their tangent cones, and cone indicators."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .grid import GridDomain, GridFunction

MEMBER_TOL = 1e-12


class InfeasiblePointError(ValueError):
    def __init__(self, rows):
        self.rows = rows
        desc = ", ".join(f"{kind}[{j}] residual {r:+.3g}" for kind, j, r in rows)
        super().__init__(f"point violates constraints: {desc}")


def _rows(rows, p) -> np.ndarray:
    arr = np.asarray(rows, dtype=float).reshape(-1, p) if len(rows) else np.zeros((0, p))
    if arr.shape[0] and np.any(np.all(arr == 0, axis=1)):
        raise ValueError("zero normal vector")
    return arr


@dataclass(frozen=True, eq=False)
class PolyhedralSet:
    """``{theta : A theta <= b, E theta = d}`` in dimension ``dim``."""

    dim: int
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    E: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        p = int(self.dim)
        A, E = _rows(self.A, p), _rows(self.E, p)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if b.size != A.shape[0] or d.size != E.shape[0]:
            raise ValueError("row count mismatch between normals and offsets")
        for name, val in zip("AbEd", (A, b, E, d)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_dict(cls, spec: dict) -> "PolyhedralSet":
        p = int(spec["dim"])
        ineq = np.asarray(spec.get("ineq", []), dtype=float).reshape(-1, p + 1)
        eq = np.asarray(spec.get("eq", []), dtype=float).reshape(-1, p + 1)
        return cls(p, ineq[:, :p], ineq[:, p], eq[:, :p], eq[:, p])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "ineq": np.column_stack([self.A, self.b]).tolist(),
            "eq": np.column_stack([self.E, self.d]).tolist(),
        }

    @classmethod
    def from_json(cls, text: str) -> "PolyhedralSet":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def default_tol(self) -> float:
        rhs = np.concatenate([self.b, self.d])
        return 1e-9 * (1.0 + (np.abs(rhs).max() if rhs.size else 0.0))

    def violations(self, point, tol: float | None = None):
        tol = self.default_tol() if tol is None else tol
        x = np.asarray(point, dtype=float).reshape(self.dim)
        r_in = self.A @ x - self.b
        r_eq = self.E @ x - self.d
        bad = [("ineq", j, r) for j, r in enumerate(r_in) if r > tol]
        bad += [("eq", j, r) for j, r in enumerate(r_eq) if abs(r) > tol]
        return bad

    def contains(self, point, tol: float | None = None) -> bool:
        return not self.violations(point, tol)

    def shifted(self, c) -> "PolyhedralSet":
        """The translate ``set + c``."""
        c = np.asarray(c, dtype=float).reshape(self.dim)
        return PolyhedralSet(self.dim, self.A, self.b + self.A @ c, self.E, self.d + self.E @ c)


@dataclass(frozen=True, eq=False)
class PolyhedralCone:
    """``{v : A v <= 0, E v = 0}``."""

    dim: int
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    E: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

    def __post_init__(self):
        object.__setattr__(self, "A", _rows(self.A, self.dim))
        object.__setattr__(self, "E", _rows(self.E, self.dim))

    @classmethod
    def full(cls, dim: int) -> "PolyhedralCone":
        return cls(dim)

    @classmethod
    def nonnegative(cls, dim: int = 1) -> "PolyhedralCone":
        return cls(dim, -np.eye(dim))

    @property
    def is_full_space(self) -> bool:
        return self.A.shape[0] == 0 and self.E.shape[0] == 0

    def contains(self, v, tol: float = MEMBER_TOL) -> np.ndarray | bool:
        """Membership with an absolute per-row tolerance; ``v`` may be (p,) or (N, p)."""
        pts = np.atleast_2d(np.asarray(v, dtype=float))
        ok = np.all(pts @ self.A.T <= tol, axis=1) & np.all(np.abs(pts @ self.E.T) <= tol, axis=1)
        return bool(ok[0]) if np.ndim(v) == 1 else ok

    def to_dict(self) -> dict:
        return {"dim": self.dim, "ineq": self.A.tolist(), "eq": self.E.tolist()}

    @classmethod
    def from_dict(cls, spec: dict) -> "PolyhedralCone":
        p = int(spec["dim"])
        return cls(p, np.asarray(spec.get("ineq", []), float).reshape(-1, p),
                   np.asarray(spec.get("eq", []), float).reshape(-1, p))


def tangent_cone(pset: PolyhedralSet, point, tol: float | None = None) -> PolyhedralCone:
    """Tangent cone of a polyhedral set: active inequality normals plus all equality normals."""
    tol = pset.default_tol() if tol is None else tol
    bad = pset.violations(point, tol)
    if bad:
        raise InfeasiblePointError(bad)
    x = np.asarray(point, dtype=float).reshape(pset.dim)
    active = np.abs(pset.A @ x - pset.b) <= tol
    return PolyhedralCone(pset.dim, pset.A[active], pset.E)


# -- symmetry ---------------------------------------------------------------

def _box_vertices(cone: PolyhedralCone, tol: float = 1e-10) -> np.ndarray:
    """Vertices of ``cone ∩ [-1, 1]^p`` by enumerating p-subsets of tight rows."""
    p = cone.dim
    eye = np.eye(p)
    G = np.vstack([cone.A, cone.E, -cone.E, eye, -eye])
    h = np.concatenate([np.zeros(cone.A.shape[0] + 2 * cone.E.shape[0]), np.ones(2 * p)])
    verts = []
    for rows in itertools.combinations(range(G.shape[0]), p):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ v <= h + tol):
            verts.append(v)
    return np.unique(np.round(np.asarray(verts), 12), axis=0)


def _row_minimum(cone: PolyhedralCone, a: np.ndarray, verts: np.ndarray | None) -> float:
    if verts is not None:
        return float((verts @ a).min())
    p = cone.dim
    res = linprog(a, A_ub=cone.A if cone.A.size else None, b_ub=np.zeros(cone.A.shape[0]) if cone.A.size else None,
                  A_eq=cone.E if cone.E.size else None, b_eq=np.zeros(cone.E.shape[0]) if cone.E.size else None,
                  bounds=[(-1, 1)] * p, method="highs")
    return float(res.fun)


def is_symmetric(cone: PolyhedralCone, n_probe: int = 200, seed: int = 0, tol: float = 1e-9) -> bool:
    """Whether ``cone == -cone``.

    Exact: every inequality normal must satisfy ``<a, v> >= 0`` on the
    cone, i.e. ``min <a, v>`` over cone ∩ unit box is ``>= -tol``; the box
    minimum is taken over enumerated vertices for p <= 3 and by LP
    otherwise.  Random members (convex combinations of the vertices) are
    then reflected as a cross-check of the exact verdict.
    """
    if cone.A.shape[0] == 0:
        return True
    verts = _box_vertices(cone) if cone.dim <= 3 else None
    exact = all(_row_minimum(cone, a, verts) >= -tol for a in cone.A)
    if exact and verts is not None and n_probe > 0:
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(len(verts)), size=n_probe)
        members = w @ verts
        if not np.all(cone.contains(-members, tol=1e-9)):
            raise RuntimeError("symmetry probe contradicts the exact verdict")
    return exact


def indicator(cone: PolyhedralCone, grid: GridDomain) -> GridFunction:
    """0 on grid nodes inside the cone (absolute row tolerance 1e-12), +inf elsewhere."""
    if grid.dim != cone.dim:
        raise ValueError("cone and grid dimensions differ")
    inside = cone.contains(grid.nodes, tol=MEMBER_TOL)
    return GridFunction(grid, np.where(inside, 0.0, np.inf))


def slater_probe(pset: PolyhedralSet, point, n_probe: int = 1000, seed: int = 0) -> bool:
    """Heuristic constraint-qualification probe (non-authoritative).

    Searches random directions in the null space of the equality rows for
    one that strictly decreases every active inequality.  Returning False
    does not prove that no such direction exists.
    """
    cone = tangent_cone(pset, point)
    if cone.A.shape[0] == 0:
        return True
    if cone.E.shape[0]:
        _, s, vt = np.linalg.svd(cone.E)
        rank = int((s > 1e-10).sum())
        basis = vt[rank:].T
    else:
        basis = np.eye(pset.dim)
    if basis.shape[1] == 0:
        return False
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_probe, basis.shape[1])) @ basis.T
    return bool(np.any(np.all(dirs @ cone.A.T < 0, axis=1)))


# -- documented catalog fixture --------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    """A fixed tangent-cone example stored as data, not computed."""

    name: str
    description: str
    point: tuple
    contingent: Callable[[np.ndarray], bool]
    intermediate: Callable[[np.ndarray], bool]
    clarke: Callable[[np.ndarray], bool]
    derivable: bool
    tangentially_regular: bool


def _on_cross(v) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.isclose(abs(v[0]), abs(v[1])))


ABS_EQUAL = CatalogEntry(
    name="abs_equal",
    description="Theta = {(t1, t2): |t1| = |t2|} at the origin",
    point=(0.0, 0.0),
    contingent=_on_cross,
    intermediate=_on_cross,
    clarke=lambda v: bool(np.allclose(v, 0.0)),
    derivable=True,
    tangentially_regular=False,
)

CATALOG = {ABS_EQUAL.name: ABS_EQUAL}
