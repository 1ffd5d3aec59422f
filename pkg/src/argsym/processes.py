"""Stochastic parts and drifts of argmin limit processes.

Three classes of mean-zero stochastic parts are sampled on grid nodes:

* Class I, linear: ``S(u) = coef * <u, Y>``.
* Class II, Gaussian: ``S = GP(Sigma)`` through a Cholesky factor of the
  Gram matrix on the grid.
* Class III, centered Poisson hyperplane:
  ``S(u) = sum_i V_i 1{tau_i <= <u, U_i>} - E[...]``.

Every spec remembers the preset name and parameters it was built from, so
it round-trips through JSON.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import stats

from .cones import PolyhedralCone, indicator
from .grid import GridDomain, GridFunction, same_grid

QUAD_DRAWS = 1_000_000
PROBE_DRAWS = 100_000
HORIZON_MARGIN = 0.1
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


class NotPSDError(ValueError):
    """Covariance Gram matrix could not be factorized."""


class HorizonTooSmallError(ValueError):
    """A caller-fixed truncation horizon cannot cover the grid."""


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: GridDomain
    values: np.ndarray

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"u_{k + 1}" for k in range(self.grid.dim)] + ["value"])
        for node, v in zip(self.grid.nodes, self.values):
            w.writerow([repr(float(x)) for x in node] + [repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


# -- Class I ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassISpec:
    """Linear part ``coef * <u, Y>``; ``sampler(rng)`` returns one draw of Y."""

    sampler: Callable[[np.random.Generator], np.ndarray]
    dim: int
    symmetric: bool
    label: str
    coef: float = 1.0
    preset: str | None = None
    params: dict = field(default_factory=dict)

    def draw_y(self, rng) -> np.ndarray:
        y = np.atleast_1d(np.asarray(self.sampler(rng), dtype=float))
        if y.shape != (self.dim,):
            raise ValueError(f"sampler returned shape {y.shape}, expected ({self.dim},)")
        return y

    def to_dict(self) -> dict:
        return {"class": "I", "preset": self.preset, "params": self.params}


def class1_gaussian(dim: int = 1, scale: float = 1.0, cov=None, coef: float = 1.0) -> ClassISpec:
    cov_m = np.eye(dim) * scale ** 2 if cov is None else np.asarray(cov, float).reshape(dim, dim)
    chol = np.linalg.cholesky(cov_m)
    params = {"dim": dim, "scale": scale, "coef": coef}
    if cov is not None:
        params["cov"] = cov_m.tolist()
    return ClassISpec(lambda rng: chol @ rng.standard_normal(dim), dim, True,
                      f"N(0, cov) in R^{dim}", coef, "gaussian", params)


def class1_centered_poisson(lam: float = 1.0, coef: float = 1.0) -> ClassISpec:
    # Poisson(lam) - lam is infinitely divisible and skewed
    return ClassISpec(lambda rng: np.array([rng.poisson(lam) - lam], float), 1, False,
                      f"Poisson({lam}) - {lam}", coef, "centered_poisson", {"lam": lam, "coef": coef})


def class1_two_point(a: float = -1.0, b: float = 1.0, coef: float = 1.0) -> ClassISpec:
    """Mean-zero law on {a, b} with ``a < 0 < b``."""
    if not a < 0 < b:
        raise ValueError("need a < 0 < b for a mean-zero two-point law")
    prob_b = -a / (b - a)
    sampler = lambda rng: np.array([b if rng.random() < prob_b else a])
    return ClassISpec(sampler, 1, bool(np.isclose(a, -b)), f"two-point {{{a}, {b}}}", coef,
                      "two_point", {"a": a, "b": b, "coef": coef})


def class1_table(values, probs, coef: float = 1.0) -> ClassISpec:
    vals = np.asarray(values, float).reshape(len(values), -1)
    pr = np.asarray(probs, float)
    pr = pr / pr.sum()
    mean = pr @ vals
    if not np.allclose(mean, 0.0, atol=1e-12):
        raise ValueError(f"table law has mean {mean.tolist()}, not zero")
    sym = _table_symmetric(vals, pr)
    sampler = lambda rng: vals[rng.choice(len(pr), p=pr)]
    return ClassISpec(sampler, vals.shape[1], sym, "user table", coef, "table",
                      {"values": vals.tolist(), "probs": pr.tolist(), "coef": coef})


def _table_symmetric(vals, pr) -> bool:
    for v, w in zip(vals, pr):
        hit = np.all(np.isclose(vals, -v), axis=1)
        if not np.isclose(pr[hit].sum(), pr[np.all(np.isclose(vals, v), axis=1)].sum()):
            return False
    return True


# -- Class II ---------------------------------------------------------------

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ClassIISpec:
    """Gaussian part with covariance ``kernel(X, Y) -> Gram block``."""

    kernel: Kernel
    dim: int
    label: str
    pflug: dict | None = None
    preset: str | None = None
    params: dict = field(default_factory=dict)

    def gram(self, nodes: np.ndarray) -> np.ndarray:
        return np.asarray(self.kernel(nodes, nodes), dtype=float)

    def to_dict(self) -> dict:
        return {"class": "II", "preset": self.preset, "params": self.params}


def pflug_kernel(gamma: float, atoms) -> Kernel:
    """``gamma * sum_k w_k y_k^2/2 (|<s,u>| + |<s,v>| - |<s,u-v>|)`` for atoms (w, y, s)."""
    ws = np.array([a[0] for a in atoms], float)
    ys = np.array([a[1] for a in atoms], float)
    ss = np.array([np.atleast_1d(a[2]) for a in atoms], float)
    coef = gamma * ws * ys ** 2 / 2

    def kernel(X, Y):
        px, py = X @ ss.T, Y @ ss.T
        out = np.zeros((X.shape[0], Y.shape[0]))
        for k in range(len(coef)):
            a, b = px[:, k][:, None], py[:, k][None, :]
            out += coef[k] * (np.abs(a) + np.abs(b) - np.abs(a - b))
        return out

    return kernel


def class2_pflug(gamma: float, atoms, label: str = "Pflug kernel", preset="pflug") -> ClassIISpec:
    atoms = [(float(w), float(y), np.atleast_1d(np.asarray(s, float))) for w, y, s in atoms]
    for _, _, s in atoms:
        if not np.isclose(np.linalg.norm(s), 1.0):
            raise ValueError("Pflug directions s must be unit vectors")
    dim = atoms[0][2].size
    params = {"gamma": gamma, "atoms": [[w, y, s.tolist()] for w, y, s in atoms]}
    return ClassIISpec(pflug_kernel(gamma, atoms), dim, label, {"gamma": gamma, "atoms": atoms}, preset, params)


def class2_brownian(scale: float = 1.0) -> ClassIISpec:
    """Two-sided Brownian motion with variance ``scale^2 |u|``, as a one-atom Pflug kernel."""
    spec = class2_pflug(1.0, [(1.0, scale, [1.0])], "two-sided Brownian motion", "brownian")
    return ClassIISpec(spec.kernel, 1, spec.label, spec.pflug, "brownian", {"scale": scale})


def class2_scaled_brownian(left: float = 1.0, right: float = 2.0) -> ClassIISpec:
    """Brownian motion with different volatility on each side of 0 (not even unless equal)."""

    def kernel(X, Y):
        x, y = X[:, 0][:, None], Y[:, 0][None, :]
        sx = np.where(x > 0, right, left)
        sy = np.where(y > 0, right, left)
        return sx * sy * np.minimum(np.abs(x), np.abs(y)) * (x * y > 0)

    return ClassIISpec(kernel, 1, "two-sided BM, side-dependent scale", None, "scaled_brownian",
                       {"left": left, "right": right})


def class2_pflug_isotropic(dim: int = 2, n_dirs: int = 8, gamma: float = 1.0) -> ClassIISpec:
    """Pflug kernel with ``n_dirs`` equally weighted directions (half-circle in 2-D)."""
    if dim == 1:
        return class2_pflug(gamma, [(1.0, 1.0, [1.0])])
    if dim != 2:
        raise ValueError("isotropic preset is defined for dim 1 or 2")
    ang = np.pi * np.arange(n_dirs) / n_dirs
    atoms = [(1.0 / n_dirs, 1.0, [np.cos(t), np.sin(t)]) for t in ang]
    spec = class2_pflug(gamma, atoms, f"Pflug kernel, {n_dirs} directions")
    return ClassIISpec(spec.kernel, dim, spec.label, spec.pflug, "pflug_isotropic",
                       {"dim": dim, "n_dirs": n_dirs, "gamma": gamma})


@dataclass(frozen=True)
class _Factor:
    keep: np.ndarray
    chol: np.ndarray
    jitter: float


@lru_cache(maxsize=32)
def _factor(spec: ClassIISpec, grid: GridDomain) -> _Factor:
    K = spec.gram(grid.nodes)
    if not np.allclose(K, K.T, rtol=1e-10, atol=1e-12):
        raise NotPSDError("Gram matrix is not symmetric")
    diag = np.diag(K)
    if diag.min() < -1e-8 * max(np.abs(diag).sum(), 1e-300):
        raise NotPSDError("Gram matrix has a negative variance")
    keep = diag > 1e-14 * max(diag.max(), 1e-300)
    sub = K[np.ix_(keep, keep)]
    trace = float(np.trace(sub))
    if sub.size and np.linalg.eigvalsh(sub).min() < -1e-8 * trace:
        raise NotPSDError("Gram matrix has an eigenvalue below -1e-8 * trace")
    for eps in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(sub + eps * trace * np.eye(sub.shape[0]))
            return _Factor(np.flatnonzero(keep), L, eps)
        except np.linalg.LinAlgError:
            continue
    raise NotPSDError("Cholesky failed after maximum jitter 1e-8 * trace")


# -- Class III --------------------------------------------------------------

NuSampler = Callable[[np.random.Generator, int], tuple]


@dataclass(frozen=True, eq=False)
class ClassIIISpec:
    """Poisson hyperplane part with rate ``gamma`` and atom law ``nu``.

    ``nu_sampler(rng, n)`` returns ``(V, U)`` with shapes (n,) and (n, p).
    ``u_bound`` is an almost-sure bound on ``||U||`` when one is known;
    ``paired`` declares ``(V, U) ~ (V, -U)``.
    """

    gamma: float
    nu_sampler: NuSampler
    dim: int
    label: str
    u_bound: float | None = None
    paired: bool = False
    horizon: float | None = None
    centered: bool = True
    quad_seed: int = 20240611
    mean_fn: Callable[[np.ndarray], np.ndarray] | None = None
    preset: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def to_dict(self) -> dict:
        return {"class": "III", "preset": self.preset, "params": self.params}


def class3_point_mass(gamma: float = 1.0) -> ClassIIISpec:
    sampler = lambda rng, n: (np.ones(n), np.ones((n, 1)))
    return ClassIIISpec(gamma, sampler, 1, "nu = delta(V=1, U=1)", u_bound=1.0,
                        mean_fn=lambda x: gamma * np.maximum(x[:, 0], 0.0),
                        preset="point_mass", params={"gamma": gamma})


def class3_paired(gamma: float = 2.0, dim: int = 1, low: float = 0.5, high: float = 1.5) -> ClassIIISpec:
    """V = 1, U = R * direction with R ~ U(low, high) and a uniformly random sign/direction."""

    def sampler(rng, n):
        r = rng.uniform(low, high, n)
        d = rng.standard_normal((n, dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.ones(n), d * r[:, None]

    mean_fn = None
    if dim == 1:
        mean_fn = lambda x: gamma * 0.5 * 0.5 * (low + high) * np.abs(x[:, 0])
    return ClassIIISpec(gamma, sampler, dim, "paired atoms (1, +-U)", u_bound=high, paired=True,
                        mean_fn=mean_fn, preset="paired",
                        params={"gamma": gamma, "dim": dim, "low": low, "high": high})


def class3_skewed(gamma: float = 1.0) -> ClassIIISpec:
    """V ~ Exp(1), U ~ U[-1, 2]: not paired, mean 2u/3 for u > 0 and |u|/6 for u < 0."""
    sampler = lambda rng, n: (rng.exponential(1.0, n), rng.uniform(-1.0, 2.0, (n, 1)))
    mean_fn = lambda x: gamma * np.where(x[:, 0] > 0, 2 * x[:, 0] / 3, -x[:, 0] / 6)
    return ClassIIISpec(gamma, sampler, 1, "V~Exp(1), U~U[-1,2]", u_bound=2.0, mean_fn=mean_fn,
                        preset="skewed", params={"gamma": gamma})


def class3_example7(p: float = 0.7, q: float = 0.3, x_low: float = 0.5, x_high: float = 1.5) -> ClassIIISpec:
    """Atoms of the jump-density regression limit (1-D covariate), rate 2, mixture of two laws."""
    lr = math.log(p / q)

    def sampler(rng, n):
        x = rng.uniform(x_low, x_high, n)
        first = rng.random(n) < 0.5
        v = np.where(first, lr, -lr)
        u = np.where(first, p * x, -q * x)
        return v, u[:, None]

    ex = 0.5 * (x_low + x_high)
    mean_fn = lambda z: lr * ex * (p * np.maximum(z[:, 0], 0) - q * np.maximum(-z[:, 0], 0))
    return ClassIIISpec(2.0, sampler, 1, "jump-density regression atoms", u_bound=max(p, q) * x_high,
                        mean_fn=mean_fn, preset="example7",
                        params={"p": p, "q": q, "x_low": x_low, "x_high": x_high})


@dataclass(frozen=True)
class HorizonInfo:
    horizon: float
    bound: float
    exact: bool


@lru_cache(maxsize=32)
def class3_horizon(spec: ClassIIISpec, grid: GridDomain) -> HorizonInfo:
    rmax = float(np.linalg.norm(grid.nodes, axis=1).max())
    if spec.u_bound is not None:
        bound, exact = float(spec.u_bound), True
    else:
        _, U = spec.nu_sampler(np.random.default_rng(spec.quad_seed + 1), PROBE_DRAWS)
        bound, exact = float(np.quantile(np.linalg.norm(U, axis=1), 0.9999)), False
    need = rmax * bound
    if spec.horizon is not None:
        if spec.horizon < need:
            raise HorizonTooSmallError(f"horizon {spec.horizon} < max ||u|| * B = {need}")
        return HorizonInfo(float(spec.horizon), bound, exact)
    return HorizonInfo((1.0 + HORIZON_MARGIN) * need, bound, exact)


@lru_cache(maxsize=32)
def class3_mean(spec: ClassIIISpec, grid: GridDomain, draws: int = QUAD_DRAWS) -> np.ndarray:
    """Quadrature for ``gamma * E[V (<u, U>)_+]`` at every node with the spec's fixed seed.

    Paired laws are symmetrized (U and -U both used), so the estimate is
    exactly even in u.
    """
    rng = np.random.default_rng(spec.quad_seed)
    nodes = grid.nodes
    acc = np.zeros(nodes.shape[0])
    done = 0
    while done < draws:
        m = min(20_000, draws - done)
        V, U = spec.nu_sampler(rng, m)
        proj = nodes @ np.asarray(U).reshape(m, -1).T
        if spec.paired:
            acc += 0.5 * ((np.maximum(proj, 0) + np.maximum(-proj, 0)) @ V)
        else:
            acc += np.maximum(proj, 0) @ V
        done += m
    out = spec.gamma * acc / draws
    out.setflags(write=False)
    return out


def _class3_path(spec: ClassIIISpec, nodes: np.ndarray, H: float, rng) -> np.ndarray:
    n = rng.poisson(spec.gamma * H)
    # given the count, the jump times on [0, H] are uniform order statistics
    tau = np.sort(rng.uniform(0.0, H, n))
    V, U = spec.nu_sampler(rng, n)
    if n == 0:
        return np.zeros(nodes.shape[0])
    hit = tau[None, :] <= nodes @ np.asarray(U).reshape(n, -1).T
    return hit.astype(float) @ np.asarray(V, float)


# -- sampling API -----------------------------------------------------------

StochasticPartSpec = ClassISpec | ClassIISpec | ClassIIISpec


def _check_dim(spec, grid):
    if spec.dim != grid.dim:
        raise ValueError(f"spec dimension {spec.dim} differs from grid dimension {grid.dim}")


def sample_class1(spec: ClassISpec, grid: GridDomain, seed) -> SamplePath:
    _check_dim(spec, grid)
    y = spec.draw_y(_as_rng(seed))
    return SamplePath(grid, spec.coef * (grid.nodes @ y))


def sample_class2(spec: ClassIISpec, grid: GridDomain, seed) -> SamplePath:
    _check_dim(spec, grid)
    return SamplePath(grid, sample_block(spec, grid, [_as_rng(seed)])[0])


def sample_class3(spec: ClassIIISpec, grid: GridDomain, seed, centered: bool | None = None) -> SamplePath:
    _check_dim(spec, grid)
    centered = spec.centered if centered is None else centered
    H = class3_horizon(spec, grid).horizon
    vals = _class3_path(spec, grid.nodes, H, _as_rng(seed))
    if centered:
        vals = vals - class3_mean(spec, grid)
    return SamplePath(grid, vals)


def sample_block(spec: StochasticPartSpec, grid: GridDomain, rngs) -> np.ndarray:
    """Paths for a list of generators, one row per generator.

    Row i depends only on ``rngs[i]``; the draws consumed match the
    single-path samplers exactly.
    """
    _check_dim(spec, grid)
    if isinstance(spec, ClassISpec):
        Y = np.stack([spec.draw_y(r) for r in rngs])
        return spec.coef * (Y @ grid.nodes.T)
    if isinstance(spec, ClassIISpec):
        f = _factor(spec, grid)
        k = f.keep.size
        Z = np.stack([r.standard_normal(k) for r in rngs]) if k else np.zeros((len(rngs), 0))
        out = np.zeros((len(rngs), grid.size))
        out[:, f.keep] = Z @ f.chol.T
        return out
    if isinstance(spec, ClassIIISpec):
        H = class3_horizon(spec, grid).horizon
        out = np.stack([_class3_path(spec, grid.nodes, H, r) for r in rngs])
        if spec.centered:
            out -= class3_mean(spec, grid)
        return out
    raise TypeError(f"unknown stochastic part {type(spec).__name__}")


# -- drifts -----------------------------------------------------------------

DriftKind = Literal["quadratic", "lad_limit", "bridge", "example7", "mode", "custom"]


def h_mu(a, b, mu: float):
    """Bridge penalty increment: ``a|b|^(mu-1) sgn b`` (mu > 1), LASSO form (mu = 1), ``|a|^mu 1{b=0}`` (mu < 1)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if mu > 1:
        return a * np.abs(b) ** (mu - 1) * np.sign(b)
    if mu == 1:
        return np.where(b != 0, a * np.sign(b), np.abs(a))
    return np.abs(a) ** mu * (b == 0)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    kind: DriftKind
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        if self.kind == "custom":
            f = self.params["function"]
            return {"kind": "custom", "params": {"grid": f.grid.to_dict(), "values": [
                "inf" if np.isinf(v) else float(v) for v in f.values]}}
        return {"kind": self.kind, "params": _jsonable(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DriftSpec":
        params = dict(d.get("params", {}))
        if d["kind"] == "custom" and "function" not in params:
            grid = GridDomain.from_dict(params["grid"])
            params = {"function": GridFunction(grid, np.array(params["values"], dtype=float))}
        return cls(d["kind"], params)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@lru_cache(maxsize=8)
def _example7_coefficients(p: float, q: float, x_low: float, x_high: float, variant: str,
                           draws: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.uniform(x_low, x_high, draws)
    lr = math.log(p / q)
    if variant == "consistent":
        r1, r2 = q - p + q * lr, (p - q) * lr
    elif variant == "uncorrected":
        r1, r2 = q - p, (p + q) * lr
    else:
        raise ValueError(f"unknown example7 variant {variant!r}")
    return x, r1, r2


def _rows(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u.reshape(1, -1) if u.ndim <= 1 else u


def drift_values(spec: DriftSpec, points) -> np.ndarray:
    """Vectorized drift: ``points`` is (N, p); returns (N,)."""
    U = _rows(points)
    P = spec.params
    if spec.kind == "quadratic":
        Q = np.atleast_2d(np.asarray(P.get("Q", 1.0), float))
        if Q.shape == (1, 1) and U.shape[1] > 1:
            Q = Q[0, 0] * np.eye(U.shape[1])
        out = np.einsum("ij,jk,ik->i", U, Q, U)
        if "linear" in P:
            out = out + U @ np.atleast_1d(np.asarray(P["linear"], float))
        return out
    if spec.kind == "lad_limit":
        g = float(P.get("gamma", 1.0))
        lam_p = float(P.get("lam", 1.0))
        lam_m = float(P.get("lam_minus", lam_p))
        X = np.atleast_2d(np.asarray(P.get("design", [[1.0] * U.shape[1]]), float))
        w = np.asarray(P.get("weights", np.ones(X.shape[0]) / X.shape[0]), float)
        t = U @ X.T
        psi = np.where(t >= 0, lam_p, lam_m) * np.abs(t) ** (g + 1) / (g + 1)
        return psi @ w
    if spec.kind == "bridge":
        p = U.shape[1]
        C = np.atleast_2d(np.asarray(P.get("C", 1.0), float))
        if C.shape == (1, 1) and p > 1:
            C = C[0, 0] * np.eye(p)
        theta0 = np.broadcast_to(np.asarray(P.get("theta0", 0.0), float), (p,))
        pen = h_mu(U, theta0[None, :], float(P["mu"])).sum(axis=1)
        return np.einsum("ij,jk,ik->i", U, C, U) + float(P.get("lam0", 1.0)) * pen
    if spec.kind == "example7":
        x, r1, r2 = _example7_coefficients(
            float(P.get("p", 0.7)), float(P.get("q", 0.3)), float(P.get("x_low", 0.5)),
            float(P.get("x_high", 1.5)), P.get("variant", "consistent"),
            int(P.get("draws", QUAD_DRAWS)), int(P.get("seed", 7)))
        ex = x.mean()
        # 1-D covariate: <u, X> = u X, (u X)_+ = u_+ X for X > 0
        if np.any(x <= 0):
            raise ValueError("example7 drift assumes positive covariates")
        return U[:, 0] * ex * r1 + np.maximum(U[:, 0], 0.0) * ex * r2
    if spec.kind == "mode":
        c0 = float(P.get("c0", 0.0))
        on = math.isclose(float(P.get("mu", 0.8)), 7 / 8)
        return U[:, 0] ** 2 - (c0 * U[:, 0] if on else 0.0)
    if spec.kind == "custom":
        f: GridFunction = P["function"]
        return np.array([f(u) for u in U])
    raise ValueError(f"unknown drift kind {spec.kind!r}")


def drift_eval(spec: DriftSpec, u) -> float:
    return float(drift_values(spec, _rows(u))[0])


def drift_on_grid(spec: DriftSpec, grid: GridDomain) -> np.ndarray:
    if spec.kind == "custom":
        f: GridFunction = spec.params["function"]
        if same_grid(f.grid, grid):
            return f.values
    return drift_values(spec, grid.nodes)


def drift_nonneg_expected(spec: DriftSpec) -> bool:
    """Whether the catalog contract D >= 0 applies (signed linear terms excluded)."""
    P = spec.params
    if spec.kind == "quadratic":
        return "linear" not in P
    if spec.kind == "bridge":
        theta0 = np.atleast_1d(np.asarray(P.get("theta0", 0.0), float))
        return not (float(P["mu"]) >= 1 and np.any(theta0 != 0))
    if spec.kind == "mode":
        return float(P.get("c0", 0.0)) == 0.0 or not math.isclose(float(P.get("mu", 0.8)), 7 / 8)
    return spec.kind in ("lad_limit", "example7")


# -- even-ness --------------------------------------------------------------

@dataclass(frozen=True)
class EvennessVerdict:
    status: Literal["even", "not_even", "statistical"]
    p_value: float | None = None
    detail: str = ""


def _require_symmetric(grid):
    if not grid.symmetric:
        raise ValueError("even-ness checks need a symmetric grid")


def check_evenness(part, grid: GridDomain, n_mc: int = 20_000, seed: int = 0,
                   cone: PolyhedralCone | None = None) -> EvennessVerdict:
    """Even-ness verdict for a drift (with optional cone) or a stochastic part.

    Drift plus cone and Class II kernels are checked exactly at the grid
    nodes.  Class III with paired atoms is even by construction.  Other
    Class I and III laws are only sampleable, so the answer is a p-value
    from two-sample KS tests between the process at node tuples and at the
    reflected tuples, computed on independent batches.
    """
    _require_symmetric(grid)
    neg = grid.negation_index
    if isinstance(part, DriftSpec):
        vals = drift_on_grid(part, grid)
        if cone is not None:
            vals = vals + indicator(cone, grid).values
        a, b = vals, vals[neg]
        both_inf = np.isinf(a) & np.isinf(b)
        with np.errstate(invalid="ignore"):
            close = np.abs(a - b) <= 1e-12 * (1 + np.maximum(np.abs(a), np.abs(b)))
            ok = both_inf | (np.isfinite(a) & np.isfinite(b) & close)
        if np.all(ok):
            return EvennessVerdict("even", detail="D + X equal at u and -u on every node")
        i = int(np.flatnonzero(~ok)[0])
        return EvennessVerdict("not_even", detail=f"differs at u={grid.nodes[i].tolist()}: {a[i]} vs {b[i]}")
    if isinstance(part, ClassIISpec):
        K = part.gram(grid.nodes)
        Kn = K[np.ix_(neg, neg)]
        scale = 1e-12 * (1 + np.abs(K).max())
        if np.all(np.abs(K - Kn) <= scale):
            return EvennessVerdict("even", detail="Sigma(u,v) = Sigma(-u,-v) on all node pairs")
        return EvennessVerdict("not_even", detail="kernel differs under reflection")
    if isinstance(part, ClassIIISpec) and part.paired:
        return EvennessVerdict("even", detail="paired atoms: nu(A, B) = nu(A, -B)")
    if isinstance(part, (ClassISpec, ClassIIISpec)):
        return _statistical_evenness(part, grid, n_mc, seed)
    raise TypeError(f"cannot check even-ness of {type(part).__name__}")


def _statistical_evenness(part, grid, n_mc, seed, n_proj: int = 8, tuple_size: int = 3) -> EvennessVerdict:
    from .seeding import derived_rng

    neg = grid.negation_index
    a = sample_block(part, grid, [derived_rng(seed, "even-a", i) for i in range(n_mc)])
    b = sample_block(part, grid, [derived_rng(seed, "even-b", i) for i in range(n_mc)])
    rng = derived_rng(seed, "even-proj")
    pvals = []
    for _ in range(n_proj):
        idx = rng.choice(grid.size, size=min(tuple_size, grid.size), replace=False)
        w = rng.standard_normal(idx.size)
        pvals.append(stats.ks_2samp(a[:, idx] @ w, b[:, neg[idx]] @ w).pvalue)
    p = float(min(1.0, n_proj * min(pvals)))
    return EvennessVerdict("statistical", p, f"Bonferroni over {n_proj} projections, {n_mc} paths per batch")


# -- JSON -------------------------------------------------------------------

PART_PRESETS = {
    ("I", "gaussian"): class1_gaussian,
    ("I", "centered_poisson"): class1_centered_poisson,
    ("I", "two_point"): class1_two_point,
    ("I", "table"): class1_table,
    ("II", "pflug"): lambda gamma, atoms: class2_pflug(gamma, atoms),
    ("II", "brownian"): class2_brownian,
    ("II", "scaled_brownian"): class2_scaled_brownian,
    ("II", "pflug_isotropic"): class2_pflug_isotropic,
    ("III", "point_mass"): class3_point_mass,
    ("III", "paired"): class3_paired,
    ("III", "skewed"): class3_skewed,
    ("III", "example7"): class3_example7,
}


def part_from_dict(d: dict) -> StochasticPartSpec:
    key = (str(d["class"]), d["preset"])
    if key not in PART_PRESETS:
        raise KeyError(f"unknown stochastic part preset {key}")
    return PART_PRESETS[key](**d.get("params", {}))
