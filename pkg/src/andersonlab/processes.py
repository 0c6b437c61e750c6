"""Rescaled eigenvalue counts, the IDS and its alpha-derivative.

For a box of half-side L in dimension d and Hoelder exponent alpha the
microscopic scale is beta_L = (2L+1)^(d/alpha), and a macroscopic window
I = (a, b] around energy E becomes J = (E + a/beta_L, E + b/beta_L].  The
box count in J is ``xi``; the per-block counts of the restricted operators
are ``eta``.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .lattice import (CubeGeometry, HamiltonianSpec, assemble_hamiltonian, cube,
                      restrict_to_block)
from .measures import SingleSiteDistribution
from .spectral import (DENSE_CAP, SpectralWindow, batched_window_counts, count_at_or_below,
                       count_in_window, eigenvalues_dense, eigenvalues_in_window)

_CHUNK = 256


class ScaleError(ArithmeticError):
    """The microscopic window is not representable in floating point."""


class AsymmetricIntervalWarning(UserWarning):
    pass


def beta_scale(L: int, d: int, alpha: float) -> float:
    if L < 1 or d < 1:
        raise ValueError("L and d must be positive")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    try:
        return float((2 * L + 1) ** (d / alpha))
    except OverflowError:
        raise ScaleError(f"beta_L = (2L+1)^(d/alpha) overflows for L={L}, d={d}, alpha={alpha}") from None


def l_alpha(alpha: float, interval) -> float:
    """alpha 2^(alpha-1) * integral over (a, b] of |y|^(alpha-1) dy, in closed form."""
    a, b = map(float, interval)
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if a > b:
        raise ValueError(f"interval endpoints out of order: ({a}, {b}]")
    if a == b:
        return 0.0
    return 2.0 ** (alpha - 1) * (math.copysign(abs(b) ** alpha, b) - math.copysign(abs(a) ** alpha, a))


@dataclass(frozen=True)
class RescaledWindow:
    E: float
    I: tuple
    L: int
    d: int
    alpha: float
    beta: float
    J: SpectralWindow

    def to_dict(self):
        return {"E": self.E, "I": list(self.I), "L": self.L, "d": self.d, "alpha": self.alpha,
                "beta_L": self.beta, "J": [self.J.a, self.J.b]}


def rescaled_window(E: float, I, L: int, alpha: float, d: int = 1) -> RescaledWindow:
    a, b = map(float, I)
    if a > b:
        raise ValueError(f"interval endpoints out of order: ({a}, {b}]")
    beta = beta_scale(L, d, alpha)
    if a < b:
        width = (b - a) / beta
        if not width > 1e-300:
            raise ScaleError(f"microscopic window width {width:.3e} underflows (beta_L = {beta:.3e})")
        lo, hi = E + a / beta, E + b / beta
        if not hi > lo:
            raise ScaleError(f"window of width {width:.3e} at E = {E} collapses in floating point")
    else:
        lo = hi = E + a / beta
    return RescaledWindow(float(E), (a, b), int(L), int(d), float(alpha), beta, SpectralWindow(lo, hi))


def xi_count(H, E: float, I, L: int, alpha: float, d: int = 1) -> int:
    return count_in_window(H, rescaled_window(E, I, L, alpha, d).J)


def eta_counts(H, geom: CubeGeometry, E: float, I, L: int, alpha: float, d: int = 1) -> np.ndarray:
    J = rescaled_window(E, I, L, alpha, d).J
    return np.array([count_in_window(restrict_to_block(H, geom, p), J) for p in range(geom.n_blocks)],
                    dtype=np.int64)


# -- ensembles ----------------------------------------------------------------

@dataclass
class CountEnsemble:
    xi: np.ndarray
    eta: np.ndarray | None
    master_seed: int
    config_hash: str
    window: RescaledWindow | None = None
    jitter_events: int = 0
    geometry: dict = field(default_factory=dict)

    @property
    def n_real(self) -> int:
        return len(self.xi)

    @property
    def eta_sum(self) -> np.ndarray:
        if self.eta is None:
            raise ValueError("ensemble carries no per-block counts")
        return self.eta.sum(axis=1)


def disorder(dist: SingleSiteDistribution, n_sites: int, master_seed: int, indices) -> np.ndarray:
    """Stack of i.i.d. potentials, row ``j`` drawn from the stream of realization ``indices[j]``."""
    return np.stack([dist.sample(n_sites, rngmod.stream(master_seed, i)) for i in indices])


def _block_layout(geom: CubeGeometry):
    order = np.concatenate(geom.blocks)
    starts = np.concatenate([[0], np.cumsum([b.size for b in geom.blocks])[:-1]])
    return order, starts


def _window_counts_chunk(spec: HamiltonianSpec, dist, geom: CubeGeometry, a: float, b: float,
                         master_seed: int, indices, with_eta: bool):
    omega = disorder(dist, geom.n_sites, master_seed, indices)
    n_rows = len(indices)
    eta = None
    if spec.hopping == "none":
        vals = spec.coupling * omega
        inside = (vals > a) & (vals <= b)
        xi = np.count_nonzero(inside, axis=1)
        if with_eta:
            order, starts = _block_layout(geom)
            eta = np.add.reduceat(inside[:, order].astype(np.int32), starts, axis=1).astype(np.int64)
        return xi.astype(np.int64), eta, 0
    if geom.d == 1:
        n = geom.n_sites
        diag = spec.coupling * omega
        # bound on ||H||_inf from the support, so jitter never depends on the chunking
        norm = 2.0 + spec.coupling * max(abs(v) for v in dist.support)
        off2 = np.ones(n - 1)
        xi, _, jit = batched_window_counts(diag, off2, a, b, norm)
        jitter = int(jit.sum())
        if with_eta:
            _, starts = _block_layout(geom)
            cut = off2.copy()
            cut[starts[1:] - 1] = 0.0
            _, eta, jit2 = batched_window_counts(diag, cut, a, b, norm, block_starts=starts)
            jitter += int(jit2.sum())
        return xi, eta, jitter
    xi = np.zeros(n_rows, dtype=np.int64)
    eta = np.zeros((n_rows, geom.n_blocks), dtype=np.int64) if with_eta else None
    jitter = 0
    w = SpectralWindow(a, b)
    for r in range(n_rows):
        H = assemble_hamiltonian(spec, geom, omega[r])
        xi[r], j = count_in_window(H, w, full_output=True)
        jitter += j > 0
        if with_eta:
            for p in range(geom.n_blocks):
                eta[r, p], j = count_in_window(restrict_to_block(H, geom, p), w, full_output=True)
                jitter += j > 0
    return xi, eta, jitter


def ensemble_window_counts(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry,
                           a: float, b: float, n_real: int, master_seed: int, with_eta: bool = False,
                           workers: int = 1, chunk: int = _CHUNK):
    """Eigenvalue counts in (a, b] for ``n_real`` seeded realizations.

    Returns ``(xi, eta, jitter_events)``.  Output depends only on the
    arguments, never on ``workers`` or ``chunk``.
    """
    if n_real < 1:
        raise ValueError("n_real must be positive")
    master_seed = rngmod.check_seed(master_seed)
    chunks = [range(s, min(s + chunk, n_real)) for s in range(0, n_real, chunk)]
    args = [(spec, dist, geom, a, b, master_seed, c, with_eta) for c in chunks]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_window_counts_chunk, *zip(*args)))
    else:
        parts = [_window_counts_chunk(*x) for x in args]
    xi = np.concatenate([p[0] for p in parts])
    eta = np.concatenate([p[1] for p in parts]) if with_eta else None
    return xi, eta, sum(p[2] for p in parts)


def config_hash(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    return repr(obj)


def run_ensemble(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry, E: float,
                 I, n_real: int, master_seed: int, alpha: float | None = None, with_eta: bool = True,
                 workers: int = 1) -> CountEnsemble:
    """Seeded ensemble of xi (and, with ``with_eta``, per-block eta) counts."""
    alpha = dist.alpha if alpha is None else alpha
    win = rescaled_window(E, I, geom.L, alpha, geom.d)
    with_eta = with_eta and geom.n_blocks >= 1
    xi, eta, jitter = ensemble_window_counts(spec, dist, geom, win.J.a, win.J.b, n_real, master_seed,
                                             with_eta=with_eta, workers=workers)
    h = config_hash(spec, dist.to_dict(), geom.summary(), win.to_dict(), n_real, master_seed)
    return CountEnsemble(xi, eta, int(master_seed), h, win, jitter, geom.summary())


def microscopic_eigenvalues(spec: HamiltonianSpec, dist: SingleSiteDistribution, geom: CubeGeometry,
                            E: float, I, n_real: int, master_seed: int,
                            alpha: float | None = None) -> list[np.ndarray]:
    """Per realization, the sorted points beta_L (lambda - E) lying in I."""
    alpha = dist.alpha if alpha is None else alpha
    win = rescaled_window(E, I, geom.L, alpha, geom.d)
    out = []
    for i in range(n_real):
        omega = dist.sample(geom.n_sites, rngmod.stream(master_seed, i))
        H = assemble_hamiltonian(spec, geom, omega)
        ev = eigenvalues_in_window(H, win.J.a, win.J.b)
        out.append(np.sort(win.beta * (ev - E)))
    return out


def zeta_proxy_counts(spec: HamiltonianSpec, dist: SingleSiteDistribution, d: int, L: int, E: float,
                      I, n_real: int, master_seed: int, alpha: float | None = None,
                      workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """xi at half-sides L and 2L.

    Stand-in for the infinite-volume count, which eigenvalues of a finite
    matrix cannot produce; the two laws agree asymptotically.
    """
    small = run_ensemble(spec, dist, cube(d, L), E, I, n_real, master_seed, alpha, False, workers)
    big = run_ensemble(spec, dist, cube(d, 2 * L), E, I, n_real, master_seed, alpha, False, workers)
    return small.xi, big.xi


# -- integrated density of states -------------------------------------------

@dataclass(frozen=True)
class IdsEstimate:
    energies: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_real: int = 0

    def __call__(self, x):
        return np.interp(x, self.energies, self.values)

    @property
    def resolution(self) -> float:
        return float(np.max(np.diff(self.energies))) if len(self.energies) > 1 else math.inf


def ids_estimate(spec: HamiltonianSpec, dist: SingleSiteDistribution, d: int, L: int, energy_grid,
                 n_real: int, master_seed: int) -> IdsEstimate:
    """Monte Carlo N(E) = E[#{eigenvalues <= E}] / |Lambda| on a sorted grid."""
    grid = np.asarray(energy_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ValueError("energy grid must be a sorted 1-d array")
    if n_real < 1:
        raise ValueError("n_real must be positive")
    geom = cube(d, L)
    frac = np.empty((n_real, grid.size))
    for i in range(n_real):
        omega = dist.sample(geom.n_sites, rngmod.stream(master_seed, i))
        H = assemble_hamiltonian(spec, geom, omega)
        if H.n <= DENSE_CAP:
            ev = eigenvalues_dense(H)
            frac[i] = np.searchsorted(ev, grid, side="right")
        else:
            frac[i] = [count_at_or_below(H, e)[0] for e in grid]
    frac /= geom.n_sites
    se = frac.std(axis=0, ddof=1) / math.sqrt(n_real) if n_real > 1 else np.zeros(grid.size)
    return IdsEstimate(grid, frac.mean(axis=0), se, n_real)


@dataclass(frozen=True)
class AlphaDerivative:
    E: float
    alpha: float
    epsilons: np.ndarray
    ratios: np.ndarray
    d_lower: float
    d_upper: float
    source: str = "exact"

    @property
    def smallest_resolved(self) -> float:
        return float(self.epsilons.min())


def _ladder(eps_min, eps_max, base):
    if not 0 < eps_min <= eps_max:
        raise ValueError("need 0 < eps_min <= eps_max")
    if not base > 1:
        raise ValueError("ladder base must exceed 1")
    eps = []
    k = 0
    while True:
        e = eps_max / base ** k
        if e < eps_min * (1 - 1e-12):
            break
        eps.append(e)
        k += 1
    return np.array(eps)


def alpha_upper_derivative(ids_source, E: float, alpha: float, eps_min: float, eps_max: float,
                           base: float = 2.0, coupling: float = 1.0) -> AlphaDerivative:
    """Ratios N((E-eps, E+eps)) / (2 eps)^alpha on eps = eps_max * base^-k.

    ``ids_source`` is a :class:`SingleSiteDistribution` (exact path for the
    hopping-free model, whose IDS is the law of ``coupling * omega``) or an
    :class:`IdsEstimate`.  ``d_upper``, the ladder maximum, stands in for the
    limsup.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    eps = _ladder(eps_min, eps_max, base)
    if isinstance(ids_source, SingleSiteDistribution):
        upper = ids_source.cdf((E + eps) / coupling, left=True)
        lower = ids_source.cdf((E - eps) / coupling)
        source = "exact"
    elif isinstance(ids_source, IdsEstimate):
        if eps_min < ids_source.resolution:
            raise ValueError(f"eps_min = {eps_min:g} is below the IDS grid resolution "
                             f"{ids_source.resolution:g}")
        if E - eps_max < ids_source.energies[0] or E + eps_max > ids_source.energies[-1]:
            raise ValueError("E +- eps_max leaves the IDS energy grid")
        upper, lower = ids_source(E + eps), ids_source(E - eps)
        source = "monte-carlo"
    else:
        raise TypeError("ids_source must be a SingleSiteDistribution or an IdsEstimate")
    ratios = np.maximum(np.asarray(upper) - np.asarray(lower), 0.0) / (2 * eps) ** alpha
    return AlphaDerivative(float(E), float(alpha), eps, ratios, float(ratios.min()),
                           float(ratios.max()), source)


def gamma_parameter(D_upper: float, alpha: float, I) -> float:
    """Poisson parameter D * L_alpha(I).  Only symmetric I = -I is covered by the limit theorem."""
    if D_upper < 0:
        raise ValueError("upper derivative must be non-negative")
    a, b = map(float, I)
    if a != -b:
        warnings.warn(f"interval ({a}, {b}] is not symmetric about 0", AsymmetricIntervalWarning,
                      stacklevel=2)
    return D_upper * l_alpha(alpha, (a, b))
