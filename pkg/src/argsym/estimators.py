"""Finite-sample M-estimators, data generators, and their registered limits.

Each registration ties an estimator to a data generator, the true value
``theta0``, the rate ``r_n`` and a recipe for sampling the limit law of
``r_n (theta_hat - theta0)``, which :func:`argsym.argmin_mc.finite_n_bridge`
compares against.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats
from scipy.optimize import linprog, lsq_linear

from .cones import PolyhedralCone, PolyhedralSet
from .grid import GridDomain
from .processes import (
    DriftSpec,
    class1_gaussian,
    class2_brownian,
    class3_example7,
)
from .seeding import chunks, derived_rng, map_ordered

EPS_MIN_RTOL = 1e-10


class RankDeficientError(ValueError):
    pass


class InfeasibleSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n x d`` observations; regressions keep covariates first and the response last."""

    observations: np.ndarray
    columns: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        obs = obs.reshape(-1, 1) if obs.ndim == 1 else obs
        if obs.shape[0] < 1:
            raise ValueError("dataset needs at least one observation")
        if not np.all(np.isfinite(obs)):
            raise ValueError("dataset has non-finite entries")
        object.__setattr__(self, "observations", obs)
        if not self.columns:
            cols = ("w",) if obs.shape[1] == 1 else tuple(f"x{j + 1}" for j in range(obs.shape[1] - 1)) + ("y",)
            object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def y(self) -> np.ndarray:
        return self.observations[:, -1]

    @property
    def X(self) -> np.ndarray:
        return self.observations[:, :-1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.observations[rows], self.columns, self.meta)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.observations:
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Dataset":
        text = Path(source).read_text() if isinstance(source, Path) or (
            isinstance(source, str) and "\n" not in source) else source
        lines = text.splitlines()
        meta = {}
        if lines and lines[0].startswith("#"):
            meta = json.loads(lines[0][1:].strip() or "{}")
            lines = lines[1:]
        rows = list(csv.reader(lines))
        return cls(np.array([[float(v) for v in r] for r in rows[1:] if r]), tuple(rows[0]), meta)


def _as_data(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(np.asarray(data, float))


# -- Example 1: constrained mean ------------------------------------------------

def project_polyhedron(point, pset: PolyhedralSet) -> np.ndarray:
    """Euclidean projection onto ``{A x <= b, E x = d}`` by active-set enumeration (small p)."""
    m = np.asarray(point, float).reshape(pset.dim)
    if pset.contains(m):
        return m.copy()
    p, n_in = pset.dim, pset.A.shape[0]
    best, best_d = None, np.inf
    max_active = min(n_in, p)
    for size in range(max_active + 1):
        for active in itertools.combinations(range(n_in), size):
            M = np.vstack([pset.A[list(active)], pset.E])
            c = np.concatenate([pset.b[list(active)], pset.d])
            if M.shape[0] == 0:
                cand = m
            else:
                # projection onto the affine hull {M x = c}
                lam, *_ = np.linalg.lstsq(M @ M.T, M @ m - c, rcond=None)
                cand = m - M.T @ lam
                if not np.allclose(M @ cand, c, atol=1e-9 * (1 + np.abs(c).max(initial=0))):
                    continue
            if pset.contains(cand):
                dist = float(np.sum((cand - m) ** 2))
                if dist < best_d - 1e-15:
                    best, best_d = cand, dist
    if best is None:
        raise InfeasibleSetError("constraint set is empty")
    return best


def fit_constrained_mean(data, pset: PolyhedralSet) -> np.ndarray:
    d = _as_data(data)
    return project_polyhedron(d.observations.mean(axis=0), pset)


# -- Example 2: LAD -------------------------------------------------------------

@dataclass(frozen=True)
class FitInfo:
    objective: float
    certificate: float
    label: str = "exact"
    gap: float = 0.0
    ties: int = 1


def _design(d: Dataset, intercept: bool) -> tuple[np.ndarray, np.ndarray]:
    X = d.X if d.observations.shape[1] > 1 else np.zeros((d.n, 0))
    if intercept:
        X = np.column_stack([np.ones(d.n), X])
    return X, d.y


def lad_certificate(X, y, phi) -> float:
    """Distance of 0 from the subdifferential of ``sum |y - X phi|`` at ``phi``."""
    r = y - X @ phi
    scale = 1e-9 * (1 + np.abs(y).max())
    zero = np.abs(r) <= scale
    base = -X[~zero].T @ np.sign(r[~zero])
    if not zero.any():
        return float(np.linalg.norm(base))
    res = lsq_linear(-X[zero].T, base, bounds=(-1, 1))
    return float(np.linalg.norm(-X[zero].T @ res.x - base))


def fit_lad(data, intercept: bool = True, return_info: bool = False):
    """Least absolute deviations by the simplex method (HiGHS dual simplex gives a vertex)."""
    d = _as_data(data)
    X, y = _design(d, intercept)
    if X.shape[1] == 0:
        raise ValueError("empty design")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError("design matrix is rank deficient")
    if X.shape[1] == 1 and np.all(X[:, 0] == 1.0):
        phi = np.array([np.median(y)])
    else:
        n, k = X.shape
        c = np.concatenate([np.zeros(2 * k), np.ones(2 * n)])
        A_eq = np.hstack([X, -X, np.eye(n), -np.eye(n)])
        res = linprog(c, A_eq=A_eq, b_eq=y, bounds=(0, None), method="highs-ds")
        if res.status != 0:
            raise RuntimeError(f"LAD linear program failed: {res.message}")
        phi = res.x[:k] - res.x[k:2 * k]
    if not return_info:
        return phi
    obj = float(np.abs(y - X @ phi).sum())
    return phi, FitInfo(obj, lad_certificate(X, y, phi))


# -- Example 3: bridge --------------------------------------------------------

def bridge_objective(X, y, phi, lam, mu) -> float:
    return float(np.sum((y - X @ phi) ** 2) + lam * np.sum(np.abs(phi) ** mu))


def _conj_pen(w, lam, mu):
    if mu == 1:
        return np.where(np.abs(w) <= lam * (1 + 1e-12), 0.0, np.inf)
    return (1 - 1 / mu) * np.abs(w) ** (mu / (mu - 1)) * (lam * mu) ** (-1 / (mu - 1))


def bridge_duality_gap(X, y, phi, lam, mu) -> float:
    """Fenchel duality gap at ``phi`` using the dual point ``theta = 2 (X phi - y)``."""
    theta = 2 * (X @ phi - y)
    if mu == 1:
        s = np.abs(X.T @ theta).max(initial=0.0)
        if s > lam:
            theta = theta * lam / s
    primal = bridge_objective(X, y, phi, lam, mu)
    dual = -theta @ y - theta @ theta / 4 - np.sum(_conj_pen(-X.T @ theta, lam, mu))
    return float(primal - dual)


def _prox_power(z, step, lam, mu):
    """Prox of ``step * lam * |t|^mu`` for mu >= 1, coordinatewise."""
    if mu == 1:
        return np.sign(z) * np.maximum(np.abs(z) - step * lam, 0.0)
    if mu == 2:
        return z / (1 + 2 * step * lam)
    a = np.abs(z)
    lo, hi = np.zeros_like(a), a.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = mid + step * lam * mu * mid ** (mu - 1) - a
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f < 0, hi, mid)
    return np.sign(z) * 0.5 * (lo + hi)


def _bridge_convex(X, y, lam, mu, tol=1e-8, max_iter=200_000):
    if mu == 2:
        phi = np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ y)
        return phi, bridge_duality_gap(X, y, phi, lam, mu)
    L = 2 * np.linalg.eigvalsh(X.T @ X).max()
    step = 1.0 / max(L, 1e-12)
    phi = np.zeros(X.shape[1])
    z, t = phi.copy(), 1.0
    gap = np.inf
    for it in range(max_iter):
        grad = 2 * X.T @ (X @ z - y)
        new = _prox_power(z - step * grad, step, lam, mu)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = new + (t - 1) / t_new * (new - phi)
        phi, t = new, t_new
        if it % 20 == 0:
            gap = bridge_duality_gap(X, y, phi, lam, mu)
            if gap <= tol:
                break
    return phi, bridge_duality_gap(X, y, phi, lam, mu)


def _scalar_nonconvex_prox(a, b, lam, mu):
    """argmin over t of ``a t^2 - 2 b t + lam |t|^mu`` for 0 < mu < 1 (exact up to bisection)."""
    if lam == 0:
        return b / a
    sb, bb = np.sign(b), abs(b)
    if bb == 0:
        return 0.0
    # on t > 0, h'(t) = 2 a t - 2|b| + lam mu t^(mu-1) is decreasing then increasing
    t_star = (lam * mu * (1 - mu) / (2 * a)) ** (1 / (2 - mu))
    hp = lambda t: 2 * a * t - 2 * bb + lam * mu * t ** (mu - 1)
    if hp(t_star) >= 0:
        return 0.0
    lo, hi = t_star, max(t_star, bb / a) + 1.0
    while hp(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if hp(mid) < 0 else (lo, mid)
    t = 0.5 * (lo + hi)
    h = a * t * t - 2 * bb * t + lam * t ** mu
    return sb * t if h < 0 else 0.0


def _bridge_nonconvex(X, y, lam, mu, sweeps=2000):
    p = X.shape[1]
    a = np.sum(X ** 2, axis=0)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    starts = [np.zeros(p)] + [np.array(s) * np.abs(ols) for s in itertools.product((-1.0, 1.0), repeat=p)]
    best, best_obj, objs = None, np.inf, []
    for phi in starts:
        phi = phi.copy()
        for _ in range(sweeps):
            old = phi.copy()
            for j in range(p):
                r = y - X @ phi + X[:, j] * phi[j]
                phi[j] = _scalar_nonconvex_prox(a[j], X[:, j] @ r, lam, mu)
            if np.max(np.abs(phi - old)) <= 1e-14 * (1 + np.max(np.abs(phi))):
                break
        obj = bridge_objective(X, y, phi, lam, mu)
        objs.append(obj)
        if obj < best_obj:
            best, best_obj = phi, obj
    # epsilon-minimizer bookkeeping: distinct local minima within tolerance count as ties
    ties = sum(o - best_obj <= EPS_MIN_RTOL * (1 + abs(best_obj)) for o in objs)
    return best, ties


def fit_bridge(data, lam: float, mu: float, return_info: bool = False):
    """Penalized least squares ``sum (y - X phi)^2 + lam sum |phi_j|^mu`` without intercept."""
    if mu <= 0 or lam < 0:
        raise ValueError("need mu > 0 and lam >= 0")
    d = _as_data(data)
    X, y = _design(d, intercept=False)
    if mu >= 1:
        phi, gap = _bridge_convex(X, y, lam, mu)
        info = FitInfo(bridge_objective(X, y, phi, lam, mu), gap, "certified", gap)
    else:
        phi, ties = _bridge_nonconvex(X, y, lam, mu)
        info = FitInfo(bridge_objective(X, y, phi, lam, mu), float("nan"), "best-found", ties=ties)
    return (phi, info) if return_info else phi


# -- Example 4: shorth -------------------------------------------------------

def fit_shorth(data, return_info: bool = False):
    """Midpoint of the shortest window of ``ceil(n/2)`` consecutive order statistics."""
    w = np.sort(_as_data(data).observations[:, 0])
    n = w.size
    if n < 2:
        raise ValueError("shorth needs n >= 2")
    k = math.ceil(n / 2)
    widths = w[k - 1:] - w[:n - k + 1]
    j = int(np.argmin(widths))
    ties = int(np.sum(widths <= widths[j] + 1e-12 * (1 + np.ptp(w))))
    center = 0.5 * (w[j] + w[j + k - 1])
    return (center, FitInfo(float(widths[j]), 0.0, "exact", ties=ties)) if return_info else center


# -- Example 5: least median of squares ----------------------------------------

def lms_objective(X, y, phi) -> float:
    r = np.abs(y - X @ phi)
    k = math.ceil(len(y) / 2)
    return float(np.partition(r, k - 1)[k - 1])


def _intervals(X1, y, t):
    """Sets {phi : |y_i - phi x_i| <= t} as (lo, hi); x_i = 0 gives the whole line or nothing."""
    x = X1
    with np.errstate(divide="ignore", invalid="ignore"):
        a, b = (y - t) / x, (y + t) / x
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    zero = x == 0
    ok = np.abs(y) <= t
    lo = np.where(zero, np.where(ok, -np.inf, np.inf), lo)
    hi = np.where(zero, np.where(ok, np.inf, -np.inf), hi)
    return lo, hi


def _deepest(lo, hi, k):
    """A point covered by at least k intervals, the region's ends, or None."""
    ev = np.concatenate([lo, hi])
    kind = np.concatenate([np.zeros(lo.size), np.ones(hi.size)])  # starts before ends at equal keys
    order = np.lexsort((kind, ev))
    depth, best = 0, None
    for e, t in zip(ev[order], kind[order]):
        if t == 0:
            depth += 1
            if depth >= k and best is None:
                start = e
                best = start
        else:
            if depth >= k and best is not None:
                return start, e
            depth -= 1
    return None


def _lms_1d(x, y):
    k = math.ceil(len(y) / 2)
    X = x.reshape(-1, 1)
    # initial bracket from elemental fits phi = y_i / x_i
    nz = x != 0
    cands = np.unique(y[nz] / x[nz]) if nz.any() else np.array([0.0])
    sub = cands[np.linspace(0, cands.size - 1, min(cands.size, 200)).astype(int)]
    vals = [lms_objective(X, y, np.array([c])) for c in sub]
    hi_t = min(vals)
    lo_t = 0.0
    region = _deepest(*_intervals(x, y, hi_t), k)
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        reg = _deepest(*_intervals(x, y, mid), k)
        if reg is None:
            lo_t = mid
        else:
            hi_t, region = mid, reg
        if hi_t - lo_t <= 1e-15 * (1 + hi_t):
            break
    phi = 0.5 * (region[0] + region[1])
    best = np.array([phi])
    best_val = lms_objective(X, y, best)
    # pin exactly: the optimum equalizes two residual magnitudes
    r = y - x * phi
    close = np.argsort(np.abs(np.abs(r) - best_val))[:6]
    for i, j in itertools.combinations(close, 2):
        for sgn in (1.0, -1.0):
            den = x[i] - sgn * x[j]
            if den != 0:
                cand = np.array([(y[i] - sgn * y[j]) / den])
                v = lms_objective(X, y, cand)
                if v < best_val:
                    best, best_val = cand, v
    return best


def _chebyshev_fit(X, y):
    n, k = X.shape
    c = np.concatenate([np.zeros(k), [1.0]])
    A = np.vstack([np.hstack([X, -np.ones((n, 1))]), np.hstack([-X, -np.ones((n, 1))])])
    b = np.concatenate([y, -y])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * k + [(0, None)], method="highs")
    return res.x[:k]


def _lms_2d(X, y, seed=0, n_elemental=3000):
    n = len(y)
    k = math.ceil(n / 2)
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    if len(pairs) > n_elemental:
        pairs = [pairs[i] for i in rng.choice(len(pairs), n_elemental, replace=False)]
    cands = []
    for i, j in pairs:
        M = X[[i, j]]
        if abs(np.linalg.det(M)) > 1e-12:
            cands.append(np.linalg.solve(M, y[[i, j]]))
    cands.append(np.linalg.lstsq(X, y, rcond=None)[0])
    scored = sorted(cands, key=lambda c: lms_objective(X, y, c))[:10]
    best, best_val = scored[0], lms_objective(X, y, scored[0])
    for start in scored:
        phi = start
        val = lms_objective(X, y, phi)
        for _ in range(50):
            keep = np.argsort(np.abs(y - X @ phi))[:k]
            new = _chebyshev_fit(X[keep], y[keep])
            nv = lms_objective(X, y, new)
            if nv >= val - 1e-15:
                break
            phi, val = new, nv
        if val < best_val:
            best, best_val = phi, val
    return best


def fit_lms(data, intercept: bool = False, return_info: bool = False):
    """Least median of squares with the median as the ``ceil(n/2)``-th smallest squared residual.

    One parameter: exact bisection on the objective value with exact
    pinning of the optimal crossing.  Two parameters: elemental subsets
    followed by concentration steps with Chebyshev (minimax) refits;
    labeled best-found.
    """
    d = _as_data(data)
    X, y = _design(d, intercept)
    p = X.shape[1]
    if p > 2:
        raise ValueError("LMS is implemented for at most two parameters")
    if d.n < 2 * p + 1:
        raise ValueError("LMS needs n >= 2p + 1")
    phi = _lms_1d(X[:, 0], y) if p == 1 else _lms_2d(X, y)
    if not return_info:
        return phi
    return phi, FitInfo(lms_objective(X, y, phi), 0.0, "exact" if p == 1 else "best-found")


# -- Example 6: Venter mode ----------------------------------------------------

def fit_mode_venter(data, r: int, return_info: bool = False):
    """Order statistic ``W_(K)`` where K minimizes the spacing ``W_(j+r) - W_(j-r)``."""
    w = np.sort(_as_data(data).observations[:, 0])
    n, r = w.size, int(r)
    if r < 1 or n < 2 * r + 2:
        raise ValueError(f"need 1 <= r and n >= 2r + 2 (n={n}, r={r})")
    sp = w[2 * r:] - w[:n - 2 * r]
    j = int(np.argmin(sp))
    ties = int(np.sum(sp == sp[j]))
    est = w[j + r]
    return (est, FitInfo(float(sp[j]), 0.0, "exact", ties=ties)) if return_info else est


def venter_r(n: int, A: float = 1.0, mu: float = 0.8) -> int:
    return int(math.ceil(A * n ** mu))


# -- Example 7: MLE with a density jump -----------------------------------------

@dataclass(frozen=True)
class JumpDensitySpec:
    """Error density with right limit ``p(x)`` and left limit ``q(x)`` at zero.

    Default branches are exponential: ``p exp(-2 p e)`` for ``e >= 0`` and
    ``q exp(2 q e)`` for ``e < 0``, each carrying mass one half.
    """

    p: float = 0.7
    q: float = 0.3

    def p_fn(self, x):
        return np.full(np.shape(x), self.p)

    def q_fn(self, x):
        return np.full(np.shape(x), self.q)

    def log_density(self, e, x):
        p, q = self.p_fn(x), self.q_fn(x)
        return np.where(e >= 0, np.log(p) - 2 * p * e, np.log(q) + 2 * q * e)

    def sample_errors(self, rng, n):
        right = rng.random(n) < 0.5
        mag = rng.exponential(1.0, n)
        return np.where(right, mag / (2 * self.p), -mag / (2 * self.q))

    def validate(self, probe_x, delta: float = 1e-6, c: float = 1e-6):
        p, q = self.p_fn(probe_x), self.q_fn(probe_x)
        if not (np.all(p - delta > q) and np.all(q > c)):
            raise ValueError("density must satisfy p - delta > q > c > 0 on the probe set")


def _loglik(density, x, y, thetas):
    e = y[:, None] - x[:, None] * thetas[None, :]
    return density.log_density(e, x[:, None]).sum(axis=0)


def fit_mle_jump(data, theta_grid, density: JumpDensitySpec | None = None, return_info: bool = False):
    """Maximum likelihood for ``y = theta x + e`` with an error density that jumps at 0.

    The log-likelihood is smooth between the jump points ``y_i / x_i``, so
    the candidates are the grid nodes plus every jump point inside the grid
    range (where the upper branch ``f(0) = p`` applies).  Around the best
    candidate the neighbouring smooth pieces are searched by golden section.
    """
    density = density or JumpDensitySpec()
    d = _as_data(data)
    x, y = d.X[:, 0], d.y
    density.validate(x)
    grid = np.asarray(theta_grid, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        jumps = np.where(x != 0, y / x, np.nan)
    jumps = np.sort(jumps[(jumps >= grid[0]) & (jumps <= grid[-1])])
    cands = np.concatenate([grid, jumps])
    ll = np.concatenate([_loglik(density, x, y, c) for c in np.array_split(cands, max(1, cands.size // 256))])
    t0 = cands[int(np.argmax(ll))]
    knots = np.unique(np.concatenate([grid[[0, -1]], jumps]))
    k = int(np.searchsorted(knots, t0))
    pieces = [(knots[i], knots[i + 1]) for i in (k - 1, k) if 0 <= i < knots.size - 1]
    f = lambda t: float(_loglik(density, x, y, np.array([t]))[0])
    gr = (math.sqrt(5) - 1) / 2
    extra = []
    for a, b in pieces:
        if b - a <= 0:
            continue
        # stay strictly inside the piece so that no residual crosses zero
        a_, b_ = a + 1e-12 * (b - a), b - 1e-12 * (b - a)
        c, dd = b_ - gr * (b_ - a_), a_ + gr * (b_ - a_)
        fc, fd = f(c), f(dd)
        for _ in range(80):
            if fc >= fd:
                b_, dd, fd = dd, c, fc
                c = b_ - gr * (b_ - a_)
                fc = f(c)
            else:
                a_, c, fc = c, dd, fd
                dd = a_ + gr * (b_ - a_)
                fd = f(dd)
        extra.append(0.5 * (a_ + b_))
    cands = np.concatenate([cands, extra])
    vals = np.concatenate([ll, [f(t) for t in extra]])
    j = int(np.argmax(vals))
    ties = int(np.sum(vals >= vals[j] - EPS_MIN_RTOL * (1 + abs(vals[j]))))
    est = float(cands[j])
    return (est, FitInfo(-float(vals[j]), 0.0, "exact", ties=ties)) if return_info else est


# -- registrations --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EstimatorRegistration:
    id: str
    fit: Callable[[Dataset], float]
    rate: Callable[[int], float]
    generate: Callable[[int, np.random.Generator], Dataset]
    theta0: float
    limit: dict
    description: str = ""

    def limit_sample(self, n: int, master_seed: int, workers=None, simulate: bool = False) -> np.ndarray:
        """Draws from the limit law: closed-form oracle if given (unless ``simulate``), else grid argmin MC."""
        if "oracle" in self.limit and not simulate:
            rng = derived_rng(master_seed, f"limit-{self.id}")
            return np.asarray(self.limit["oracle"](rng, n), float)
        from .argmin_mc import argmin_distribution

        drift, part, cone, grid = (self.limit[k] for k in ("drift", "part", "cone", "grid"))
        dist = argmin_distribution(drift, part, cone, grid, n, master_seed, workers=workers,
                                   stream=f"limit-{self.id}")
        return dist.samples[:, 0]

    def to_dict(self) -> dict:
        lim = {k: v for k, v in self.limit.items() if k in ("label",)}
        for k in ("drift", "part", "cone", "grid"):
            if k in self.limit:
                lim[k] = self.limit[k].to_dict()
        return {"id": self.id, "theta0": self.theta0, "description": self.description,
                "rate": self.limit.get("rate_label", ""), "limit": lim}


def scaled_errors(reg: EstimatorRegistration, n: int, n_mc: int, master_seed: int, workers=None,
                  block: int = 256) -> np.ndarray:
    """``r_n (theta_hat - theta0)`` over ``n_mc`` datasets with per-dataset derived seeds."""
    stream = f"data-{reg.id}-{n}"

    def run(span):
        return [reg.fit(reg.generate(n, derived_rng(master_seed, stream, i))) for i in range(*span)]

    est = np.concatenate([np.asarray(v, float) for v in map_ordered(run, chunks(0, n_mc, block), workers)])
    return reg.rate(n) * (est - reg.theta0)


def _location(values, label, **meta) -> Dataset:
    return Dataset(np.asarray(values).reshape(-1, 1), ("w",), {"generator": label, **meta})


def _regression(x, y, label, **meta) -> Dataset:
    return Dataset(np.column_stack([x, y]), ("x1", "y"), {"generator": label, **meta})


HALF_LINE = PolyhedralSet.from_dict({"dim": 1, "ineq": [[-1.0, 0.0]]})

# standard normal constants for the shorth and LMS limits
R0 = float(stats.norm.ppf(0.75))
P0 = float(stats.norm.pdf(R0))
C0_SHORTH = 2 * R0 * P0
PHI0 = float(stats.norm.pdf(0.0))

BRIDGE_THETA0 = 1.0
BRIDGE_LAM_PENALTY = 0.5  # lambda_n = 0.5 sqrt(n); drift lam0 = mu * 0.5 = 1 for mu = 2
MODE_A, MODE_MU = 1.0, 0.8
MLE_THETA0, MLE_P, MLE_Q = 1.0, 0.7, 0.3


def _mode_scale(A=MODE_A, kappa2=PHI0, p0=PHI0):
    return 2 ** (-1 / 3) * (A * kappa2) ** (2 / 3) / p0


def _mle_grid(theta0=MLE_THETA0):
    return theta0 + np.linspace(-0.05, 0.05, 201)


def _gen_normal(n, rng):
    return _location(rng.standard_normal(n), "N(0,1)")


def _gen_bridge(n, rng):
    x = rng.standard_normal(n)
    return _regression(x, BRIDGE_THETA0 * x + rng.standard_normal(n), "bridge N(0,1) design",
                       theta0=BRIDGE_THETA0)


def _gen_lms(n, rng):
    x = rng.standard_normal(n)
    return _regression(x, x + rng.standard_normal(n), "LMS through origin", theta0=1.0)


_MLE_DENSITY = JumpDensitySpec(MLE_P, MLE_Q)


def _gen_mle(n, rng):
    x = rng.uniform(0.5, 1.5, n)
    return _regression(x, MLE_THETA0 * x + _MLE_DENSITY.sample_errors(rng, n), "jump density",
                       p=MLE_P, q=MLE_Q)


def _build_registry() -> dict:
    full, half = PolyhedralCone.full(1), PolyhedralCone.nonnegative(1)
    reg = {}

    def add(r):
        reg[r.id] = r

    add(EstimatorRegistration(
        "constrained_mean", lambda d: float(fit_constrained_mean(d, HALF_LINE)[0]), math.sqrt,
        _gen_normal, 0.0,
        {"drift": DriftSpec("quadratic", {"Q": 1.0}), "part": class1_gaussian(coef=-2.0), "cone": half,
         "grid": GridDomain.uniform(6.0, 0.01), "label": "max(N(0,1), 0)", "rate_label": "sqrt(n)",
         "oracle": lambda rng, n: np.maximum(rng.standard_normal(n), 0.0)},
        "mean of N(0,1) data projected on [0, inf), theta0 = 0"))
    add(EstimatorRegistration(
        "lad", lambda d: float(fit_lad(d)[0]), math.sqrt,
        lambda n, rng: _location(rng.laplace(0.0, 1.0, n), "Laplace(0,1)"), 0.0,
        {"drift": DriftSpec("lad_limit", {"gamma": 1.0, "lam": 1.0}), "part": class1_gaussian(coef=-1.0),
         "cone": full, "grid": GridDomain.uniform(6.0, 0.01), "label": "N(0,1)", "rate_label": "sqrt(n)",
         "oracle": lambda rng, n: rng.standard_normal(n)},
        "intercept-only LAD (sample median), Laplace errors with density 1/2 at 0"))
    add(EstimatorRegistration(
        "bridge", lambda d: float(fit_bridge(d, BRIDGE_LAM_PENALTY * math.sqrt(d.n), 2.0)[0]), math.sqrt,
        _gen_bridge, BRIDGE_THETA0,
        {"drift": DriftSpec("bridge", {"C": 1.0, "lam0": 2.0 * BRIDGE_LAM_PENALTY, "mu": 2.0,
                                       "theta0": BRIDGE_THETA0}),
         "part": class1_gaussian(coef=-2.0), "cone": full, "grid": GridDomain.uniform(6.0, 0.01),
         "label": "N(0,1) - 1/2", "rate_label": "sqrt(n)",
         "oracle": lambda rng, n: rng.standard_normal(n) - 0.5},
        "ridge (mu = 2) with lambda_n = 0.5 sqrt(n), theta0 = 1"))
    add(EstimatorRegistration(
        "shorth", lambda d: float(fit_shorth(d)), lambda n: n ** (1 / 3), _gen_normal, 0.0,
        {"drift": DriftSpec("quadratic", {"Q": C0_SHORTH / 2}), "part": class2_brownian(math.sqrt(2 * P0)),
         "cone": full, "grid": GridDomain.uniform(10.0, 0.02), "label": "Chernoff-type",
         "rate_label": "n^(1/3)"},
        "shorth of N(0,1) data"))
    add(EstimatorRegistration(
        "lms", lambda d: float(fit_lms(d)[0]), lambda n: n ** (1 / 3), _gen_lms, 1.0,
        {"drift": DriftSpec("quadratic", {"Q": R0 * P0}),
         "part": class2_brownian(math.sqrt(2 * P0 * math.sqrt(2 / math.pi))),
         "cone": full, "grid": GridDomain.uniform(12.0, 0.02), "label": "Chernoff-type",
         "rate_label": "n^(1/3)"},
        "LMS through the origin, x and errors N(0,1), theta0 = 1"))
    add(EstimatorRegistration(
        "mode", lambda d: float(fit_mode_venter(d, venter_r(d.n))),
        lambda n: _mode_scale() * n ** ((2 * MODE_MU - 1) / 3), _gen_normal, 0.0,
        {"drift": DriftSpec("mode", {"c0": 0.0, "mu": MODE_MU}), "part": class2_brownian(),
         "cone": full, "grid": GridDomain.uniform(5.0, 0.01), "label": "argmin B(u) + u^2",
         "rate_label": "K n^((2 mu - 1)/3)"},
        "Venter mode of N(0,1) data, r_n = ceil(n^0.8)"))
    add(EstimatorRegistration(
        "mle_jump", lambda d: fit_mle_jump(d, _mle_grid(), _MLE_DENSITY), float, _gen_mle, MLE_THETA0,
        {"drift": DriftSpec("example7", {"p": MLE_P, "q": MLE_Q, "variant": "consistent"}),
         "part": class3_example7(MLE_P, MLE_Q), "cone": full, "grid": GridDomain.uniform(60.0, 0.05),
         "label": "Poisson hyperplane argmin", "rate_label": "n"},
        "MLE for y = theta x + e, e with a density jump (p=0.7, q=0.3), x ~ U(0.5, 1.5)"))
    return reg


REGISTRY = _build_registry()


def registry_json() -> str:
    return json.dumps({k: r.to_dict() for k, r in REGISTRY.items()}, indent=2, sort_keys=True)
