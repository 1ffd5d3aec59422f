"""Convex-analysis primitives on grid functions.

Greatest convex minorant (lower convex envelope of the finite epigraph
points), discrete Legendre-Fenchel conjugate, one-sided and directional
derivatives, and growth/strictness diagnostics.  Values are extended reals
with ``+inf`` encoded as IEEE infinity, so indicator arithmetic is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .grid import GridDomain, GridFunction, ProperViolationError

GrowthClass = Literal["superlinear", "sublinear", "inconclusive"]


class NonConvexError(ValueError):
    """Raised when a grid function fails the discrete convexity test."""

    def __init__(self, triple, values):
        self.triple = triple
        self.values = values
        a, m, b = (np.asarray(t).tolist() for t in triple)
        super().__init__(
            f"convexity violated on triple a={a}, m={m}, b={b} "
            f"with values {tuple(float(v) for v in values)}"
        )


@dataclass(frozen=True)
class OneSidedDerivatives:
    left: float
    right: float
    at: float


def _tol(fa, fb):
    return 1e-9 * (1.0 + np.abs(fa) + np.abs(fb))


# -- discrete convexity -----------------------------------------------------

def _axis_triples(axis: np.ndarray):
    """Index triples (i, j, k) with axis[j] the midpoint of axis[i], axis[k]."""
    n = axis.size
    scale = 1e-12 * (1.0 + np.abs(axis).max())
    lo, mid, hi = [], [], []
    for i in range(n):
        for k in range(i + 2, n):
            target = 0.5 * (axis[i] + axis[k])
            j = int(np.searchsorted(axis, target))
            for jj in (j - 1, j):
                if i < jj < k and abs(axis[jj] - target) <= scale:
                    lo.append(i)
                    mid.append(jj)
                    hi.append(k)
                    break
    lo, mid, hi = map(np.asarray, (lo, mid, hi))
    const = np.arange(n)
    # both orientations so that cross-axis combinations cover every lattice line
    return (np.concatenate([lo, hi, const]),
            np.concatenate([mid, mid, const]),
            np.concatenate([hi, lo, const]))


def _lattice_triples(grid: GridDomain):
    per_axis = [_axis_triples(a) for a in grid.axes]
    counts = [t[0].size for t in per_axis]
    pick = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    pick = [p.ravel() for p in pick]
    a_idx = tuple(per_axis[k][0][pick[k]] for k in range(grid.dim))
    m_idx = tuple(per_axis[k][1][pick[k]] for k in range(grid.dim))
    b_idx = tuple(per_axis[k][2][pick[k]] for k in range(grid.dim))
    a = np.ravel_multi_index(a_idx, grid.shape)
    m = np.ravel_multi_index(m_idx, grid.shape)
    b = np.ravel_multi_index(b_idx, grid.shape)
    keep = a != b
    return a[keep], m[keep], b[keep]


def _violations_1d(f: GridFunction, strict: bool):
    u, v = f.grid.axes[0], f.values
    fin = np.flatnonzero(np.isfinite(v))
    # +inf strictly between finite nodes breaks convexity of the finite set
    gap = np.flatnonzero(~np.isfinite(v[fin[0]:fin[-1] + 1]))
    if gap.size:
        m = fin[0] + gap[0]
        a = fin[fin < m][-1]
        b = fin[fin > m][0]
        return [(a, m, b)]
    if fin.size < 3:
        return []
    a, m, b = fin[:-2], fin[1:-1], fin[2:]
    w = (u[m] - u[a]) / (u[b] - u[a])
    chord = (1 - w) * v[a] + w * v[b]
    tol = _tol(v[a], v[b])
    bad = v[m] > chord + tol if not strict else v[m] >= chord - tol
    return list(zip(a[bad], m[bad], b[bad]))


def convexity_violations(f: GridFunction, strict: bool = False, limit: int = 1):
    """Node-index triples (a, m, b) that violate (strict) discrete convexity.

    In dimension 1 the test runs on consecutive finite nodes, which on a
    uniform axis is the midpoint test.  In higher dimension every lattice
    triple with ``m = (a + b) / 2`` on the grid is checked, with tolerance
    ``1e-9 * (1 + |f(a)| + |f(b)|)``.
    """
    if f.dim == 1:
        return _violations_1d(f, strict)[:limit]
    a, m, b = _lattice_triples(f.grid)
    va, vm, vb = f.values[a], f.values[m], f.values[b]
    with np.errstate(invalid="ignore"):
        avg = 0.5 * (va + vb)
        tol = np.where(np.isfinite(avg), _tol(va, vb), 0.0)
        if strict:
            bad = np.isfinite(avg) & (vm >= avg - tol)
        else:
            bad = vm > avg + tol
    hits = np.flatnonzero(bad)[:limit]
    return [(a[h], m[h], b[h]) for h in hits]


def is_convex(f: GridFunction) -> bool:
    return not convexity_violations(f)


def is_strictly_convex(f: GridFunction) -> bool:
    """Strict discrete convexity on the finite nodes (uniqueness diagnostic)."""
    return not convexity_violations(f, strict=True) and is_convex(f)


def require_convex(f: GridFunction) -> None:
    bad = convexity_violations(f)
    if bad:
        a, m, b = bad[0]
        nodes = f.grid.nodes
        raise NonConvexError((nodes[a], nodes[m], nodes[b]), (f.values[a], f.values[m], f.values[b]))


# -- greatest convex minorant ----------------------------------------------

def _lower_hull_1d(x: np.ndarray, y: np.ndarray):
    hx, hy = [], []
    for xi, yi in zip(x, y):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (yi - hy[-2]) - (hy[-1] - hy[-2]) * (xi - hx[-2])
            if cross > 0:
                break
            hx.pop()
            hy.pop()
        hx.append(xi)
        hy.append(yi)
    return np.asarray(hx), np.asarray(hy)


def _gcm_1d(u: np.ndarray, v: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    fin = np.flatnonzero(allowed)
    hx, hy = _lower_hull_1d(u[fin], v[fin])
    out = np.full(u.size, np.inf)
    inside = (u >= hx[0]) & (u <= hx[-1])
    out[inside] = np.interp(u[inside], hx, hy)
    return out


def _gcm_lp(points: np.ndarray, heights: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Envelope value min sum(l f) s.t. sum(l x) = t, sum(l) = 1, l >= 0, per target."""
    n = points.shape[0]
    a_eq = np.vstack([points.T, np.ones((1, n))])
    out = np.full(targets.shape[0], np.inf)
    for i, t in enumerate(targets):
        res = linprog(heights, A_eq=a_eq, b_eq=np.append(t, 1.0), bounds=(0, None), method="highs")
        if res.status == 0:
            out[i] = res.fun
    return out


def _gcm_nd(nodes: np.ndarray, v: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    pts, hts = nodes[allowed], v[allowed]
    lift = (hts.max() - hts.min()) + 1.0
    cloud = np.vstack([np.column_stack([pts, hts]), np.column_stack([pts, hts + lift])])
    try:
        hull = ConvexHull(cloud)
        base = ConvexHull(pts)
    except QhullError:
        return _gcm_lp(pts, hts, nodes)
    eq = hull.equations
    lower = eq[eq[:, -2] < -1e-9]
    normals, nz, off = lower[:, :-2], lower[:, -2], lower[:, -1]
    planes = -(nodes @ normals.T + off) / nz
    out = planes.max(axis=1)
    scale = 1e-9 * (1.0 + np.abs(nodes).max())
    inside = np.all(nodes @ base.equations[:, :-1].T + base.equations[:, -1] <= scale, axis=1)
    out[~inside] = np.inf
    return out


def gcm(f: GridFunction, mask: np.ndarray | None = None) -> GridFunction:
    """Greatest convex minorant of ``f`` evaluated at every grid node.

    Parameters
    ----------
    f : GridFunction
        Proper grid function.
    mask : bool array, optional
        Restrict the hull to nodes where ``mask`` is true (the convexification
        of a drift over a constraint set only mixes points of that set).
        Nodes outside the convex hull of the retained finite nodes get +inf.

    Returns
    -------
    GridFunction
        The envelope, clipped to ``min(envelope, f)`` to absorb rounding in
        the interpolation so that ``gcm(f) <= f`` holds exactly.
    """
    allowed = f.finite_mask.copy()
    if mask is not None:
        allowed &= np.asarray(mask, dtype=bool).reshape(-1)
    if not allowed.any():
        raise ProperViolationError("no finite node left to take the hull of")
    if f.dim == 1:
        env = _gcm_1d(f.grid.axes[0], f.values, allowed)
    else:
        env = _gcm_nd(f.grid.nodes, f.values, allowed)
    vals = np.where(allowed, np.minimum(env, f.values), env)
    return GridFunction(f.grid, vals)


# -- conjugates -------------------------------------------------------------

def conjugate(f: GridFunction, dual_grid: GridDomain, chunk: int = 2048) -> GridFunction:
    """Discrete conjugate ``y -> max_x <y, x> - f(x)`` over finite grid nodes."""
    if dual_grid.dim != f.dim:
        raise ValueError("dual grid dimension differs from the primal grid")
    fin = f.finite_mask
    x, fx = f.grid.nodes[fin], f.values[fin]
    y = dual_grid.nodes
    out = np.empty(y.shape[0])
    for s in range(0, y.shape[0], chunk):
        out[s:s + chunk] = (y[s:s + chunk] @ x.T - fx).max(axis=1)
    return GridFunction(dual_grid, out)


def slope_grid(f: GridFunction) -> GridDomain:
    """Dual grid made of the chord slopes between consecutive finite nodes (1-D).

    With this dual grid the discrete biconjugate of a convex grid function
    reproduces it exactly at every finite node.
    """
    if f.dim != 1:
        raise ValueError("slope_grid is defined for 1-D grid functions")
    u = f.grid.axes[0][f.finite_mask]
    v = f.values[f.finite_mask]
    s = np.diff(v) / np.diff(u) if u.size > 1 else np.zeros(0)
    s = np.unique(np.concatenate([s, [s.min() - 1.0 if s.size else -1.0, s.max() + 1.0 if s.size else 1.0]]))
    return GridDomain((s,))


# -- derivatives ------------------------------------------------------------

def one_sided_derivs(f: GridFunction, x: float) -> OneSidedDerivatives:
    """Left and right difference quotients of a convex 1-D grid function at node ``x``.

    Neighbours outside the grid or with value +inf give -inf (left) and
    +inf (right), which is the derivative of the function extended by +inf.
    """
    if f.dim != 1:
        raise ValueError("one-sided derivatives need a 1-D grid function")
    require_convex(f)
    u, v = f.grid.axes[0], f.values
    i = f.grid.index_of([x])
    if not np.isfinite(v[i]):
        raise ValueError(f"f({x}) is +inf")
    left_ok = i > 0 and np.isfinite(v[i - 1])
    right_ok = i < u.size - 1 and np.isfinite(v[i + 1])
    if not (left_ok or right_ok):
        raise ValueError(f"node {x} has no finite neighbour")
    left = (v[i] - v[i - 1]) / (u[i] - u[i - 1]) if left_ok else -np.inf
    right = (v[i + 1] - v[i]) / (u[i + 1] - u[i]) if right_ok else np.inf
    return OneSidedDerivatives(float(left), float(right), float(u[i]))


def directional_deriv(f: GridFunction, x, steps) -> float:
    """Forward difference quotient ``(f(x + h d) - f(x)) / h`` along a lattice direction.

    ``steps`` is an integer offset per axis; the direction is normalised to
    the unit sphere as in ``f'(x; v)``.
    """
    grid = f.grid
    i = grid.index_of(x)
    idx = np.unravel_index(i, grid.shape)
    steps = np.asarray(steps, dtype=int)
    j_idx = tuple(int(a) + int(s) for a, s in zip(idx, steps))
    if any(not 0 <= j < n for j, n in zip(j_idx, grid.shape)):
        return np.inf
    j = int(np.ravel_multi_index(j_idx, grid.shape))
    h = np.linalg.norm(grid.nodes[j] - grid.nodes[i])
    if not np.isfinite(f.values[i]):
        raise ValueError("f is +inf at the base point")
    return float((f.values[j] - f.values[i]) / h)


# -- growth -----------------------------------------------------------------

def _shell(grid: GridDomain, depth: int) -> np.ndarray:
    idx = np.indices(grid.shape).reshape(grid.dim, -1)
    dist = np.min([np.minimum(idx[k], n - 1 - idx[k]) for k, n in enumerate(grid.shape)], axis=0)
    return dist == depth


def growth_class(f: GridFunction, threshold: float = 10.0) -> GrowthClass:
    """Heuristic growth verdict from the two outermost grid shells.

    Compares ``min f(u)/||u||`` on the outermost shell against the next one:
    strictly increasing and at least ``threshold`` gives "superlinear",
    non-increasing gives "sublinear", anything else "inconclusive".  Growth
    at infinity is not decidable from a finite grid; treat the answer as a
    diagnostic only.
    """
    if min(f.grid.shape) < 4:
        return "inconclusive"
    ratios = []
    for depth in (0, 1):
        sel = _shell(f.grid, depth)
        nodes, vals = f.grid.nodes[sel], f.values[sel]
        norm = np.linalg.norm(nodes, axis=1)
        # off-domain (+inf) nodes carry no growth information
        keep = (norm > 0) & np.isfinite(vals)
        if not keep.any():
            return "inconclusive"
        ratios.append(np.min(vals[keep] / norm[keep]))
    r_out, r_in = ratios
    slack = 1e-9 * (1.0 + abs(r_in))
    if r_out > r_in + slack and r_out >= threshold:
        return "superlinear"
    if r_out <= r_in + slack:
        return "sublinear"
    return "inconclusive"
