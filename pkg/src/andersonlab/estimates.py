"""Monte Carlo checks of the Wegner, Minami and diagonal Green bounds, and
empirical fractional-moment decay of the Green function.

All bounds are stated for the coupled potential ``coupling * omega``, whose
moduli are ``Q(s / coupling)`` and ``S(s / coupling)`` in terms of the
single-site law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sst

from . import measures
from . import rng as rngmod
from .lattice import CubeGeometry, HamiltonianSpec, assemble_hamiltonian, cube, partition_cube
from .measures import SingleSiteDistribution
from .processes import ensemble_window_counts
from .spectral import DENSE_CAP, DenseCapError, resolvent_columns

IM_Z_FLOOR = 1e-4
DEFAULT_IM_Z = (1e-1, 1e-2, 1e-3, 1e-4)
DEFAULT_S = 1.0 / 3.0
_TINY = 1e-300
_N_BOOT = 200


@dataclass(frozen=True)
class InequalityReport:
    name: str
    lhs_estimate: float
    lhs_stderr: float
    rhs_value: float
    interval: tuple | None
    volume: int
    n_real: int
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.lhs_estimate - 3.0 * self.lhs_stderr <= self.rhs_value)

    def to_dict(self):
        return {"name": self.name, "lhs_estimate": self.lhs_estimate, "lhs_stderr": self.lhs_stderr,
                "rhs_value": self.rhs_value, "pass": self.passed,
                "interval": list(self.interval) if self.interval is not None else None,
                "volume": self.volume, "n_real": self.n_real, **self.extra}


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _interval(interval):
    a, b = map(float, interval)
    if a > b:
        raise ValueError(f"interval endpoints out of order: ({a}, {b}]")
    return a, b


def _q(dist, spec, width):
    return measures.q_mu(dist, width / spec.coupling)


def wegner_check(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry, interval,
                 n_real: int, seed: int, workers: int = 1) -> InequalityReport:
    """E[#eigenvalues in I] against Q(|I|) |Lambda|."""
    if n_real < 100:
        raise ValueError(f"wegner_check needs n_real >= 100, got {n_real}")
    a, b = _interval(interval)
    xi, _, jit = ensemble_window_counts(spec, dist, geom, a, b, n_real, seed, workers=workers)
    m, se = _mean_se(xi)
    return InequalityReport("wegner", m, se, _q(dist, spec, b - a) * geom.n_sites, (a, b),
                            geom.n_sites, n_real, {"jitter_events": int(jit)})


def minami_check(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry, interval,
                 n_real: int, seed: int, workers: int = 1) -> InequalityReport:
    """E[k (k - 1)] for the window count k against (Q(|I|) |Lambda|)^2."""
    if n_real < 1000:
        raise ValueError(f"minami_check needs n_real >= 1000, got {n_real}")
    a, b = _interval(interval)
    xi, _, jit = ensemble_window_counts(spec, dist, geom, a, b, n_real, seed, workers=workers)
    k = xi.astype(float)
    m, se = _mean_se(k * (k - 1))
    rhs = (_q(dist, spec, b - a) * geom.n_sites) ** 2
    return InequalityReport("minami", m, se, rhs, (a, b), geom.n_sites, n_real,
                            {"jitter_events": int(jit)})


def _site_sample(n_sites: int, max_sites: int) -> np.ndarray:
    if n_sites <= max_sites:
        return np.arange(n_sites)
    return np.unique(np.linspace(0, n_sites - 1, max_sites).round().astype(np.int64))


def site_wegner_check(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry,
                      interval, n_real: int, seed: int, max_sites: int = 32) -> InequalityReport:
    """E <delta_n, P_I(H) delta_n> against Q(|I|), averaged over a site sample.

    The spectral projection comes from a dense eigendecomposition, so the
    box is limited to the dense cap.
    """
    if n_real < 100:
        raise ValueError(f"site_wegner_check needs n_real >= 100, got {n_real}")
    if geom.n_sites > DENSE_CAP:
        raise DenseCapError(f"box of {geom.n_sites} sites exceeds the dense cap {DENSE_CAP}")
    a, b = _interval(interval)
    sites = _site_sample(geom.n_sites, max_sites)
    vals = np.empty(n_real)
    for i in range(n_real):
        H = assemble_hamiltonian(spec, geom, dist.sample(geom.n_sites, rngmod.stream(seed, i)))
        if spec.hopping == "none":
            d = H.diagonal[sites]
            vals[i] = np.mean((d > a) & (d <= b))
            continue
        ev, vec = np.linalg.eigh(H.toarray())
        sel = (ev > a) & (ev <= b)
        vals[i] = np.mean(np.sum(vec[sites][:, sel] ** 2, axis=1))
    m, se = _mean_se(vals)
    return InequalityReport("site_wegner", m, se, _q(dist, spec, b - a), (a, b), 1, n_real,
                            {"sites": int(sites.size)})


def diagonal_green_bound(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry,
                         z: complex, k_param: float, n_real: int, seed: int,
                         max_sites: int = 16) -> InequalityReport:
    """Im z * E Im G(z; n, n) against pi (1 + k/2) S(2 Im z / k).

    The left side is averaged over a deterministic site sample in each
    realization; the standard error is over realizations.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"need Im z > 0, got z = {z}")
    if not k_param > 0:
        raise ValueError(f"k_param must be positive, got {k_param}")
    if n_real < 2:
        raise ValueError("need at least two realizations")
    sites = _site_sample(geom.n_sites, max_sites)
    vals = np.empty(n_real)
    for i in range(n_real):
        omega = dist.sample(geom.n_sites, rngmod.stream(seed, i))
        if spec.hopping == "none":
            g = 1.0 / (spec.coupling * omega[sites] - z)
        else:
            H = assemble_hamiltonian(spec, geom, omega)
            g = resolvent_columns(H, z, sites)[sites, np.arange(sites.size)]
        vals[i] = z.imag * np.mean(g.imag)
    m, se = _mean_se(vals)
    rhs = math.pi * (1 + k_param / 2) * dist.s_mu(2 * z.imag / k_param / spec.coupling)
    return InequalityReport("diagonal_green", m, se, rhs, None, geom.n_sites, n_real,
                            {"z": [z.real, z.imag], "k_param": float(k_param)})


# -- fractional moments -------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    s: float
    distances: np.ndarray
    log_means: np.ndarray
    stderr: np.ndarray
    gamma_hat: float
    c_hat: float
    r_squared: float
    gamma_stderr: float
    z_grid: tuple
    n_real: int
    flag: str | None = None
    gamma_stderr_regression: float = math.nan

    @property
    def fitted(self) -> bool:
        return self.flag is None

    @property
    def mean_moments(self) -> np.ndarray:
        return np.exp(self.log_means)

    def to_dict(self):
        return {"s": self.s, "distances": self.distances.tolist(),
                "log_means": [float(v) if np.isfinite(v) else None for v in self.log_means],
                "gamma_hat": self.gamma_hat, "c_hat": self.c_hat, "r_squared": self.r_squared,
                "gamma_stderr": self.gamma_stderr,
                "gamma_stderr_regression": self.gamma_stderr_regression,
                "z_grid": [[complex(z).real, complex(z).imag] for z in self.z_grid],
                "n_real": self.n_real, "flag": self.flag}


def default_z_grid(re_values=(0.0,), im_values=DEFAULT_IM_Z) -> tuple:
    return tuple(complex(r, i) for r in re_values for i in im_values)


def center_pairs(geom: CubeGeometry, distances) -> list[tuple[int, int]]:
    """Pairs (centre, centre + r e_1) for each r, as storage indices."""
    origin = np.zeros(geom.d, dtype=np.int64)
    out = []
    for r in distances:
        tgt = origin.copy()
        tgt[0] = int(r)
        if not geom.contains(tgt):
            raise ValueError(f"distance {r} leaves the box of half-side {geom.L}")
        out.append((int(geom.index_of(origin)), int(geom.index_of(tgt))))
    return out


def fractional_moment_scan(spec: HamiltonianSpec, dist: SingleSiteDistribution, d: int, L: int,
                           s: float = DEFAULT_S, pair_set=None, z_grid=None, n_real: int = 100,
                           seed: int = 0, im_floor: float = IM_Z_FLOOR) -> DecayFit:
    """Worst case over ``z_grid`` of E|G(z; n, m)|^s per distance |n - m|_1, and
    the least-squares fit ln E = ln C - gamma * distance.

    ``pair_set`` holds (n, m) storage-index pairs; pairs sharing a distance
    are averaged.  Default: centre to centre + r for r = 5..60 clipped to the
    box.  When every moment is below 1e-300 (for instance no hopping and
    n != m), or fewer than three distances carry a non-zero moment, no fit
    is made and ``flag`` says why.
    """
    if not 0 < s < 1:
        raise ValueError(f"fractional exponent must lie in (0, 1), got {s}")
    if n_real < 2:
        raise ValueError("need at least two realizations")
    z_grid = default_z_grid() if z_grid is None else tuple(complex(z) for z in z_grid)
    for z in z_grid:
        if z.imag < im_floor:
            raise ValueError(f"Im z = {z.imag:g} is below the floor {im_floor:g}")
    geom = cube(d, L)
    if pair_set is None:
        pair_set = center_pairs(geom, range(5, min(60, L) + 1))
    pairs = np.asarray(pair_set, dtype=np.int64).reshape(-1, 2)
    coords = geom.sites
    dist_of_pair = np.abs(coords[pairs[:, 0]] - coords[pairs[:, 1]]).sum(axis=1)
    distances, group = np.unique(dist_of_pair, return_inverse=True)
    sources, src_col = np.unique(pairs[:, 1], return_inverse=True)

    # moments[i, z, distance]
    moments = np.zeros((n_real, len(z_grid), distances.size))
    counts = np.bincount(group, minlength=distances.size)
    for i in range(n_real):
        omega = dist.sample(geom.n_sites, rngmod.stream(seed, i))
        H = assemble_hamiltonian(spec, geom, omega)
        for j, z in enumerate(z_grid):
            cols = resolvent_columns(H, z, sources)
            g = np.abs(cols[pairs[:, 0], src_col]) ** s
            moments[i, j] = np.bincount(group, weights=g, minlength=distances.size) / counts

    means = moments.mean(axis=0)
    worst = means.argmax(axis=0)
    best = means[worst, np.arange(distances.size)]
    se = moments[:, worst, np.arange(distances.size)].std(axis=0, ddof=1) / math.sqrt(n_real)
    with np.errstate(divide="ignore"):
        logs = np.log(best)
    ok = best > _TINY
    base = dict(s=float(s), distances=distances, log_means=logs, stderr=se, z_grid=z_grid,
                n_real=int(n_real))
    if not ok.any():
        return DecayFit(gamma_hat=math.inf, c_hat=0.0, r_squared=math.nan, gamma_stderr=math.nan,
                        flag="super-exponential/exact-zero", **base)
    if ok.sum() < 3:
        # moments are still reported, there is just nothing to regress
        return DecayFit(gamma_hat=math.nan, c_hat=math.nan, r_squared=math.nan,
                        gamma_stderr=math.nan, flag="too-few-distances", **base)
    x = distances[ok].astype(float)
    fit = sst.linregress(x, logs[ok])
    flag = None if ok.all() else "partial-exact-zero"
    return DecayFit(gamma_hat=float(-fit.slope), c_hat=float(math.exp(fit.intercept)),
                    r_squared=float(fit.rvalue ** 2),
                    gamma_stderr=_bootstrap_slope_se(moments[:, :, ok], x, seed),
                    gamma_stderr_regression=float(fit.stderr), flag=flag, **base)


def _bootstrap_slope_se(moments, x, seed, n_boot=_N_BOOT) -> float:
    # every distance shares the same realizations, so regression residuals
    # are correlated; resample realizations instead
    rng = np.random.default_rng([rngmod.check_seed(seed), 0xB007])
    n_real = moments.shape[0]
    slopes = np.empty(n_boot)
    xc = x - x.mean()
    for j in range(n_boot):
        m = moments[rng.integers(0, n_real, n_real)].mean(axis=0).max(axis=0)
        with np.errstate(divide="ignore"):
            y = np.log(m)
        slopes[j] = np.dot(xc, y - y.mean()) / np.dot(xc, xc) if np.all(np.isfinite(y)) else np.nan
    slopes = slopes[np.isfinite(slopes)]
    return float(slopes.std(ddof=1)) if slopes.size > 1 else math.nan


# -- randomized verification ---------------------------------------------------

def random_configurations(n: int, seed: int, L_max: int = 200):
    """Randomized (spec, dist, geom, interval, z) draws in d = 1, covering
    every distribution kind and both hopping types."""
    rng = np.random.default_rng(seed)
    kinds = ["uniform", "bernoulli", "cantor", "ifs"]
    out = []
    for j in range(n):
        kind = kinds[j % len(kinds)]
        if kind == "uniform":
            lo = rng.uniform(-1, 0.5)
            dist = measures.uniform(lo, lo + rng.uniform(0.2, 2.0))
        elif kind == "bernoulli":
            dist = measures.bernoulli(rng.uniform(0.05, 0.95), 0.0, rng.uniform(0.5, 2.0))
        elif kind == "cantor":
            dist = measures.cantor()
        else:
            r1, r2 = rng.uniform(0.15, 0.45, 2)
            w1 = rng.uniform(0.2, 0.8)
            dist = measures.ifs([r1, r2], [0.0, 1.0 - r2], [w1, 1.0 - w1])
        hopping = "none" if rng.random() < 0.3 else "laplacian_offdiag"
        spec = HamiltonianSpec(hopping, float(rng.uniform(0.5, 5.0)))
        L = int(rng.integers(5, L_max + 1))
        lo, hi = dist.support
        span = spec.coupling * np.array([lo, hi]) + (np.array([-2.0, 2.0]) if hopping != "none" else 0)
        centre = rng.uniform(*span)
        width = float(10 ** rng.uniform(-2.5, 0.3))
        interval = (centre - width / 2, centre + width / 2)
        z = complex(rng.uniform(*span), 10 ** rng.uniform(-3, 0))
        out.append(dict(spec=spec, dist=dist, geom=partition_cube(1, L), interval=interval, z=z,
                        k_param=float(10 ** rng.uniform(-1, 1))))
    return out


def verify_suite(spec, dist, geom, interval, z, k_param=1.0, seed: int = 0, n_real: int = 1000,
                 n_real_site: int = 100, n_real_green: int = 100) -> list[InequalityReport]:
    """Wegner (box and site), Minami and diagonal Green bound for one configuration."""
    reports = [
        wegner_check(spec, dist, geom, interval, n_real, seed),
        minami_check(spec, dist, geom, interval, n_real, seed),
        diagonal_green_bound(spec, dist, geom, z, k_param, n_real_green, seed),
    ]
    if geom.n_sites <= 512:
        reports.insert(1, site_wegner_check(spec, dist, geom, interval, n_real_site, seed))
    return reports
