"""Argmin of ``Z = D + S + X`` on a grid and Monte Carlo laws of the minimizer."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import stats

from .cones import PolyhedralCone, indicator
from .convex_kit import growth_class
from .grid import GridDomain, GridFunction
from .processes import (
    ClassISpec,
    DriftSpec,
    EvennessVerdict,
    StochasticPartSpec,
    _as_rng,
    check_evenness,
    class1_gaussian,
    drift_on_grid,
    sample_block,
)
from .seeding import chunks, default_workers, derived_rng, map_ordered

TIE_RTOL = 1e-12
FLAG_FRACTION = 1e-3
BLOCK = 2048


class EmptyFeasibleSetError(ValueError):
    """Every grid node has Z = +inf."""


class IndependenceError(ValueError):
    """Two batches share replicate seeds."""


@dataclass(frozen=True)
class ArgminReplicate:
    minimizer: np.ndarray
    min_value: float
    tie_count: int
    tie_broken: bool
    boundary_hit: bool
    index: int


def default_radius(scale: float, curvature: float) -> float:
    """Box radius ``6 * scale / curvature`` (scale of S at unit distance, curvature of D)."""
    return 6.0 * scale / curvature


def _minimize_rows(total: np.ndarray, rngs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise argmin with random tie breaking; returns (index, min, tie_count)."""
    if not np.all(np.isfinite(total).any(axis=1)):
        raise EmptyFeasibleSetError("all grid nodes are infeasible (Z = +inf everywhere)")
    m = total.min(axis=1)
    tol = TIE_RTOL * (1.0 + np.abs(m))
    ties = (total - m[:, None]) <= tol[:, None]
    counts = ties.sum(axis=1)
    idx = np.argmax(ties, axis=1)
    for r in np.flatnonzero(counts > 1):
        cand = np.flatnonzero(ties[r])
        idx[r] = cand[rngs[r].integers(cand.size)]
    return idx, m, counts


def _base_values(drift: DriftSpec, cone: PolyhedralCone, grid: GridDomain):
    d = drift_on_grid(drift, grid)
    x = indicator(cone, grid).values if cone is not None else np.zeros(grid.size)
    return d, x


def minimize_grid(drift_vals, path_vals, ind_vals, rng) -> tuple[int, float, int]:
    """Argmin of ``(D + S) + X`` for one path given as node arrays."""
    total = (np.asarray(drift_vals) + np.asarray(path_vals)) + np.asarray(ind_vals)
    idx, m, c = _minimize_rows(total[None, :], [rng])
    return int(idx[0]), float(m[0]), int(c[0])


def compose_and_minimize(drift: DriftSpec, part: StochasticPartSpec, cone: PolyhedralCone | None,
                         grid: GridDomain, seed) -> ArgminReplicate:
    """One replicate: sample S, form Z on all nodes, and take its grid argmin."""
    rng = _as_rng(seed)
    d, x = _base_values(drift, cone, grid)
    path = sample_block(part, grid, [rng])[0]
    i, m, c = minimize_grid(d, path, x, rng)
    return ArgminReplicate(grid.nodes[i].copy(), m, c, c > 1, bool(grid.boundary_mask[i]), 0)


# -- empirical laws -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Argmin draws with their seed lineage ``(master_seed, stream, start, stop)``."""

    samples: np.ndarray
    min_values: np.ndarray | None = None
    tie_counts: np.ndarray | None = None
    boundary_hits: np.ndarray | None = None
    master_seed: int | None = None
    stream: str | None = None
    start: int = 0
    stop: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s = s.reshape(-1, 1) if s.ndim == 1 else s
        if s.shape[0] == 0:
            raise ValueError("empirical distribution needs at least one sample")
        object.__setattr__(self, "samples", s)
        if self.stop is None:
            object.__setattr__(self, "stop", self.start + s.shape[0])

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDistribution":
        return cls(np.asarray(samples, dtype=float))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def tie_fraction(self) -> float:
        return 0.0 if self.tie_counts is None else float(np.mean(self.tie_counts > 1))

    @property
    def boundary_fraction(self) -> float:
        return 0.0 if self.boundary_hits is None else float(np.mean(self.boundary_hits))

    @property
    def flags(self) -> list[str]:
        out = []
        if self.boundary_fraction > FLAG_FRACTION:
            out.append(f"boundary-hit fraction {self.boundary_fraction:.4g} > {FLAG_FRACTION}")
        if self.tie_fraction > FLAG_FRACTION:
            out.append(f"tie fraction {self.tie_fraction:.4g} > {FLAG_FRACTION}")
        return out

    def quantile(self, q, axis: int = 0):
        return np.quantile(self.samples[:, axis], q)

    def ks_distance(self, other, axis: int = 0) -> float:
        """KS distance to another sample (array or distribution) or to a CDF callable."""
        a = self.samples[:, axis]
        if callable(other):
            # sup |F_n - F| over both one-sided limits; valid for CDFs with atoms
            x = np.sort(a)
            n = x.size
            right = np.searchsorted(x, x, side="right") / n
            left = np.searchsorted(x, x, side="left") / n
            f_right = np.asarray(other(x), float)
            f_left = np.asarray(other(x - 1e-12 * (1.0 + np.abs(x))), float)
            return float(max(np.max(np.abs(right - f_right)), np.max(np.abs(left - f_left))))
        b = other.samples[:, axis] if isinstance(other, EmpiricalDistribution) else np.ravel(other)
        return float(stats.ks_2samp(a, b).statistic)

    def median_bias(self, target=0.0) -> np.ndarray:
        return median_bias(self, target)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"w_{k + 1}" for k in range(self.dim)] + ["min_value", "tie_count", "boundary_hit"])
        mv = self.min_values if self.min_values is not None else np.full(self.n, np.nan)
        tc = self.tie_counts if self.tie_counts is not None else np.ones(self.n, int)
        bh = self.boundary_hits if self.boundary_hits is not None else np.zeros(self.n, bool)
        for row, m, t, b in zip(self.samples, mv, tc, bh):
            w.writerow([repr(float(x)) for x in row] + [repr(float(m)), int(t), int(bool(b))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def argmin_distribution(drift: DriftSpec, part: StochasticPartSpec, cone: PolyhedralCone | None,
                        grid: GridDomain, n_replicates: int, master_seed: int, start: int = 0,
                        workers: int | None = None, stream: str = "argmin",
                        block: int = BLOCK) -> EmpiricalDistribution:
    """Monte Carlo law of the grid argmin over replicates ``start .. start + n_replicates - 1``.

    Replicate ``i`` uses ``derived_rng(master_seed, stream, i)`` for its path
    and, after that, for tie breaking, so results do not depend on blocking
    or on the number of workers.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 replicates")
    d, x = _base_values(drift, cone, grid)
    stop = start + n_replicates

    def run(span):
        a, b = span
        rngs = [derived_rng(master_seed, stream, i) for i in range(a, b)]
        paths = sample_block(part, grid, rngs)
        total = (d[None, :] + paths) + x[None, :]
        return _minimize_rows(total, rngs)

    parts = map_ordered(run, chunks(start, stop, block), workers)
    idx = np.concatenate([p[0] for p in parts])
    return EmpiricalDistribution(
        grid.nodes[idx].copy(),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        grid.boundary_mask[idx],
        master_seed, stream, start, stop,
    )


def median_bias(dist, target=0.0) -> np.ndarray:
    """Per-axis ``(1/2 - min_s P(s (W - target) >= 0))_+`` with closed inequalities."""
    s = dist.samples if isinstance(dist, EmpiricalDistribution) else np.asarray(dist, float)
    s = s.reshape(-1, 1) if s.ndim == 1 else s
    if s.shape[0] == 0:
        raise ValueError("empty sample")
    c = s - np.broadcast_to(np.asarray(target, float), (s.shape[1],))
    frac = np.minimum(np.mean(c >= 0, axis=0), np.mean(c <= 0, axis=0))
    return np.maximum(0.5 - frac, 0.0)


# -- symmetry tests -----------------------------------------------------------

SymmetryMode = Literal["central", "sign", "spherical"]


@dataclass(frozen=True)
class SymmetryVerdict:
    statistic: float
    p_value: float
    mode: str
    n_per_batch: int
    energy: float | None = None
    energy_p: float | None = None
    method: str = ""

    def rejects(self, alpha: float = 0.01) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _check_independent(a: EmpiricalDistribution, b: EmpiricalDistribution):
    if a.master_seed is None or b.master_seed is None:
        return
    if a.master_seed == b.master_seed and a.stream == b.stream and a.start < b.stop and b.start < a.stop:
        raise IndependenceError(
            f"replicate ranges [{a.start}, {a.stop}) and [{b.start}, {b.stop}) overlap under seed {a.master_seed}")


def energy_permutation_test(x: np.ndarray, y: np.ndarray, n_perm: int = 1000, seed: int = 0,
                            max_n: int = 500) -> tuple[float, float]:
    """Two-sample energy statistic and its permutation p-value.

    Samples are cut to ``max_n`` rows each so the pooled distance matrix
    stays small; permutations reuse it through matrix products.
    """
    rng = np.random.default_rng(seed)
    x, y = x[:max_n], y[:max_n]
    m, k = len(x), len(y)
    z = np.vstack([x, y])
    D = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2))
    total = D.sum()

    def stat(L):
        DL = L @ D
        sxx = np.einsum("ij,ij->i", DL, L)
        sxy = np.einsum("ij,ij->i", DL, 1 - L)
        syy = total - 2 * sxy - sxx
        return 2 * sxy / (m * k) - sxx / m ** 2 - syy / k ** 2

    obs_lab = np.concatenate([np.ones(m), np.zeros(k)])[None, :]
    obs = float(stat(obs_lab)[0])
    perms = np.zeros((n_perm, m + k))
    for i in range(n_perm):
        perms[i, rng.permutation(m + k)[:m]] = 1.0
    null = stat(perms)
    p = (1.0 + np.sum(null >= obs - 1e-12)) / (n_perm + 1.0)
    return obs, float(p)


def _reflect_test(a: np.ndarray, b: np.ndarray, n_perm, seed) -> tuple[float, float, float, float]:
    """KS (per axis, Bonferroni) and energy test of ``a`` against ``b`` (already transformed)."""
    p = a.shape[1]
    ks = [stats.ks_2samp(a[:, k], b[:, k], method="auto") for k in range(p)]
    stat = max(r.statistic for r in ks)
    p_ks = min(1.0, p * min(r.pvalue for r in ks))
    if p == 1:
        return float(stat), float(ks[0].pvalue), None, None
    e, p_e = energy_permutation_test(a, b, n_perm, seed)
    return float(stat), float(min(1.0, 2 * min(p_ks, p_e))), e, p_e


def symmetry_test(dist_a: EmpiricalDistribution, dist_b: EmpiricalDistribution,
                  mode: SymmetryMode = "central", n_perm: int = 1000, seed: int = 0) -> SymmetryVerdict:
    """Test ``W =d -W`` (central), coordinatewise sign flips (sign), or rotations (spherical).

    ``dist_a`` is compared with the transformed ``dist_b``; the two must come
    from disjoint replicate ranges.  In dimension 1 this is the two-sample
    KS test; in higher dimension per-axis KS tests (Bonferroni) are combined
    with a permutation energy test.
    """
    _check_independent(dist_a, dist_b)
    if dist_a.dim != dist_b.dim:
        raise ValueError("batches differ in dimension")
    a, b = dist_a.samples, dist_b.samples
    p = a.shape[1]
    if mode == "central":
        transforms = [-np.eye(p)]
    elif mode == "sign":
        transforms = [np.diag(s) for s in itertools.product((1.0, -1.0), repeat=p) if min(s) < 0]
    elif mode == "spherical":
        # partial check: a handful of random rotations plus the central reflection
        rng = np.random.default_rng(seed)
        transforms = [-np.eye(p)]
        for _ in range(3):
            q, r = np.linalg.qr(rng.standard_normal((p, p)))
            transforms.append(q * np.sign(np.diag(r)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    results = [_reflect_test(a, b @ T.T, n_perm, seed + j) for j, T in enumerate(transforms)]
    stat = max(r[0] for r in results)
    pv = min(1.0, len(results) * min(r[1] for r in results))
    energies = [r[2] for r in results if r[2] is not None]
    eps = [r[3] for r in results if r[3] is not None]
    method = "two-sample KS" if p == 1 else "per-axis KS (Bonferroni) + energy permutation"
    if len(results) > 1:
        method += f", Bonferroni over {len(results)} transforms"
    return SymmetryVerdict(stat, pv, mode, min(dist_a.n, dist_b.n),
                           max(energies) if energies else None, min(eps) if eps else None, method)


# -- 1-D necessity and median unbiasedness -----------------------------------

@dataclass
class NecessityReport:
    a1: EvennessVerdict
    symmetry: SymmetryVerdict
    median_bias_w: float
    median_bias_y: float
    mu_tolerance: float
    median_unbiased_checked: bool
    median_unbiased_ok: bool | None
    subadditivity_ok: bool
    conclusion: str
    n: int
    y_symmetric_asserted: bool

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("a1", "symmetry")}
        d["a1"] = self.a1.status
        d["symmetry"] = self.symmetry.to_dict()
        return d


def _y_draws(y_law: ClassISpec, master_seed, stream, start, stop) -> np.ndarray:
    return np.array([y_law.draw_y(derived_rng(master_seed, stream, i))[0] for i in range(start, stop)])


def necessity_probe_1d(drift: DriftSpec, cone: PolyhedralCone, y_law: ClassISpec, n: int, seed: int,
                       grid: GridDomain | None = None, alpha: float = 0.01,
                       workers: int | None = None) -> NecessityReport:
    """Run the 1-D necessity/median-unbiasedness diagnostics on ``D + coef <u, Y> + X``.

    ``y_law`` is asserted by the caller to be symmetric with full support;
    its ``symmetric`` flag is recorded, not verified.
    """
    grid = grid or GridDomain.uniform(6.0, 0.01)
    if grid.dim != 1:
        raise ValueError("necessity probe is one-dimensional")
    a1 = check_evenness(drift, grid, cone=cone)
    wa = argmin_distribution(drift, y_law, cone, grid, n, seed, 0, workers)
    wb = argmin_distribution(drift, y_law, cone, grid, n, seed, n, workers)
    sym = symmetry_test(wa, wb)
    y = _y_draws(y_law, seed, "argmin", 0, n)
    w = wa.samples[:, 0]
    mb_w, mb_y = float(median_bias(w)[0]), float(median_bias(y)[0])
    tol = 3 * math.sqrt(0.25 / n)
    side_w = max(np.mean(w < 0), np.mean(w > 0))
    side_y = max(np.mean(y < 0), np.mean(y > 0))
    sub_ok = bool(side_w <= side_y + 3 * math.sqrt(0.5 / n))
    check_mu = bool(cone.contains(np.zeros(1))) and y_law.symmetric
    mu_ok = bool(mb_w <= tol) if check_mu else None
    fails, rejects = a1.status == "not_even", sym.rejects(alpha)
    if fails and rejects:
        conclusion = "consistent with necessity: (A1) fails and symmetry is rejected"
    elif not fails and not rejects:
        conclusion = "consistent with sufficiency: (A1) holds and symmetry is not rejected"
    elif not fails and rejects:
        conclusion = "inconsistent: (A1) holds but symmetry is rejected"
    else:
        conclusion = "(A1) fails but symmetry is not rejected at this sample size"
    return NecessityReport(a1, sym, mb_w, mb_y, tol, check_mu, mu_ok, sub_ok, conclusion, n, y_law.symmetric)


# -- existence: escape to the boundary ------------------------------------------

@dataclass
class EscapeReport:
    radii: list
    fractions: list
    standard_errors: list
    delta: float
    y_sd: float
    growth: str
    bounded_away: bool
    vanishing: bool
    feasible_radius: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sublinear_escape_demo(drift: DriftSpec, cone: PolyhedralCone, seed: int,
                          radii=(10.0, 50.0, 250.0), n_replicates: int = 20_000, half_nodes: int = 200,
                          y_sd: float | None = None, feasible_radius: float | None = None,
                          workers: int | None = None) -> EscapeReport:
    """Fraction of replicates whose grid minimum sits on the box boundary, per box radius.

    The stochastic part is ``-u Y`` with ``Y ~ N(0, (c + 1)^2)`` where ``c``
    bounds ``D(u)/|u|`` on the largest box; with probability at least
    ``delta = P(Y > c + 1)`` the process decreases along the ray and the grid
    minimizer escapes to the boundary at every radius.
    """
    big = GridDomain.uniform(max(radii), max(radii) / half_nodes)
    u = big.nodes[:, 0]
    inside = np.asarray(cone.contains(big.nodes)) & (u != 0)
    cbar = float(np.max(drift_on_grid(drift, big)[inside] / np.abs(u[inside])))
    sd = (cbar + 1.0) if y_sd is None else float(y_sd)
    law = class1_gaussian(1, sd, coef=-1.0)
    delta = float(stats.norm.sf((cbar + 1.0) / sd))
    growth = growth_class(GridFunction(big, np.where(inside | (u == 0), drift_on_grid(drift, big), np.inf)))
    fracs, ses = [], []
    for r in radii:
        grid = GridDomain.uniform(r, r / half_nodes)
        d = drift
        if feasible_radius is not None:
            # bounded feasible set: the drift carries the indicator of |u| <= feasible_radius
            vals = drift_on_grid(drift, grid) + np.where(np.abs(grid.nodes[:, 0]) <= feasible_radius, 0.0, np.inf)
            d = DriftSpec("custom", {"function": GridFunction(grid, vals)})
        dist = argmin_distribution(d, law, cone, grid, n_replicates, seed, workers=workers,
                                   stream=f"escape-{r}")
        f = dist.boundary_fraction
        fracs.append(f)
        ses.append(math.sqrt(max(f * (1 - f), 1e-12) / n_replicates))
    return EscapeReport(list(radii), fracs, ses, delta, sd, growth,
                        bool(min(fracs) >= delta / 2), bool(fracs[-1] <= FLAG_FRACTION), feasible_radius)


# -- finite-n to limit ---------------------------------------------------------

@dataclass
class BridgeRow:
    n: int
    median_bias: float
    ks_to_limit: float
    mean: float
    n_mc: int


@dataclass
class BridgeReport:
    estimator_id: str
    rows: list
    limit_median_bias: float
    monotone_toward_limit: bool
    limit_n: int

    def to_dict(self) -> dict:
        return {"estimator_id": self.estimator_id, "rows": [r.__dict__ for r in self.rows],
                "limit_median_bias": self.limit_median_bias,
                "monotone_toward_limit": self.monotone_toward_limit, "limit_n": self.limit_n}


def finite_n_bridge(estimator_id: str, sample_sizes, n_mc: int, master_seed: int,
                    limit_replicates: int | None = None, workers: int | None = None,
                    simulate_limit: bool = False) -> BridgeReport:
    """Compare the law of ``r_n (theta_hat - theta0)`` with the simulated limit law."""
    from .estimators import REGISTRY, scaled_errors

    if estimator_id not in REGISTRY:
        raise KeyError(f"unknown estimator {estimator_id!r}")
    reg = REGISTRY[estimator_id]
    limit = reg.limit_sample(limit_replicates or max(n_mc, 10_000), master_seed, workers, simulate_limit)
    lim_mb = float(median_bias(limit)[0])
    rows = []
    for n in sample_sizes:
        z = scaled_errors(reg, n, n_mc, master_seed, workers)
        rows.append(BridgeRow(int(n), float(median_bias(z)[0]),
                              float(stats.ks_2samp(z, limit).statistic), float(np.mean(z)), n_mc))
    gaps = [abs(r.median_bias - lim_mb) for r in rows]
    slack = 2 * math.sqrt(0.25 / n_mc)
    mono = all(g2 <= g1 + slack for g1, g2 in zip(gaps, gaps[1:]))
    return BridgeReport(estimator_id, rows, lim_mb, mono, len(limit))
