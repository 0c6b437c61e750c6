"""Distributional diagnostics for eigenvalue count ensembles."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sst

CHI2_MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on 0..len(probs)-1."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("pmf needs a non-empty 1-d probability vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    @property
    def k_max(self) -> int:
        return self.probs.size - 1

    def __getitem__(self, k):
        return self.probs[k] if 0 <= k < self.probs.size else 0.0


def empirical_pmf(counts) -> Pmf:
    counts = _as_counts(counts)
    return Pmf(np.bincount(counts) / counts.size)


def poisson_pmf(lam: float, k_max: int) -> np.ndarray:
    return sst.poisson.pmf(np.arange(k_max + 1), lam)


def tv_distance(p: Pmf, q: Pmf) -> float:
    n = max(p.probs.size, q.probs.size)
    a = np.pad(p.probs, (0, n - p.probs.size))
    b = np.pad(q.probs, (0, n - q.probs.size))
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def tv_to_poisson(p: Pmf, lam: float) -> float:
    """Total variation to Poisson(lam), counting the Poisson tail beyond p's support."""
    pois = poisson_pmf(lam, p.k_max)
    tail = max(0.0, 1.0 - pois.sum())
    return float(min(1.0, 0.5 * (np.abs(p.probs - pois).sum() + tail)))


def factorial_moment(counts, r: int) -> float:
    """Sample mean of k (k-1) ... (k-r+1)."""
    if r not in (1, 2, 3):
        raise ValueError("factorial moment order must be 1, 2 or 3")
    k = _as_counts(counts).astype(float)
    prod = np.ones_like(k)
    for j in range(r):
        prod *= k - j
    return float(prod.mean())


@dataclass(frozen=True)
class PoissonFitReport:
    n: int
    lambda_hat: float
    tv_vs_hat: float
    chi2_pvalue: float | None
    chi2_stat: float | None
    chi2_dof: int | None
    fm2: float
    fm2_poisson_gap: float
    lambda_theory: float | None = None
    tv_vs_theory: float | None = None
    chi2_pvalue_theory: float | None = None
    degenerate: bool = False

    def to_dict(self):
        return asdict(self)


def _chi2(counts: np.ndarray, lam: float, fitted: bool):
    """Chi-square against Poisson(lam) with adjacent bins merged until each
    expects at least 5; the last bin absorbs the upper tail."""
    n = counts.size
    observed = np.bincount(counts)
    k_hi = max(observed.size - 1, int(lam + 10 * math.sqrt(lam) + 10))
    observed = np.pad(observed, (0, k_hi + 1 - observed.size)).astype(float)
    expected = n * poisson_pmf(lam, k_hi)
    expected[-1] += n * sst.poisson.sf(k_hi, lam)
    bins_o, bins_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= CHI2_MIN_EXPECTED:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if bins_e:
            bins_o[-1] += acc_o
            bins_e[-1] += acc_e
        else:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
    dof = len(bins_e) - 1 - (1 if fitted else 0)
    if dof < 1:
        return None, None, None
    o = np.array(bins_o)
    e = np.array(bins_e)
    stat = float(((o - e) ** 2 / e).sum())
    return stat, float(sst.chi2.sf(stat, dof)), dof


def poisson_gof(counts, lambda_theory: float | None = None) -> PoissonFitReport:
    counts = _as_counts(counts)
    if counts.size < 100:
        raise ValueError(f"goodness of fit needs at least 100 counts, got {counts.size}")
    lam = float(counts.mean())
    pmf = empirical_pmf(counts)
    fm2 = factorial_moment(counts, 2)
    degenerate = bool(np.all(counts == counts[0]))
    stat = p = dof = None
    p_theory = tv_theory = None
    if not degenerate:
        stat, p, dof = _chi2(counts, lam, fitted=True)
    if lambda_theory is not None:
        if lambda_theory < 0:
            raise ValueError("lambda_theory must be non-negative")
        tv_theory = tv_to_poisson(pmf, lambda_theory)
        if lambda_theory > 0:
            p_theory = _chi2(counts, lambda_theory, fitted=False)[1]
    return PoissonFitReport(
        n=int(counts.size), lambda_hat=lam, tv_vs_hat=tv_to_poisson(pmf, lam), chi2_pvalue=p,
        chi2_stat=stat, chi2_dof=dof, fm2=fm2, fm2_poisson_gap=abs(fm2 - lam ** 2),
        lambda_theory=lambda_theory, tv_vs_theory=tv_theory, chi2_pvalue_theory=p_theory,
        degenerate=degenerate)


@dataclass(frozen=True)
class CountComparison:
    tv: float
    tv_sigma: float
    mean_gap: float
    n_real: int

    def to_dict(self):
        return asdict(self)


def compare_count_processes(ens, n_boot: int = 200, seed: int = 0) -> CountComparison:
    """TV distance between the laws of xi and of sum_p eta_p, with a paired
    bootstrap standard deviation, plus the gap between their means."""
    if getattr(ens, "eta", None) is None:
        raise ValueError("ensemble carries no per-block counts")
    xi = _as_counts(ens.xi)
    s = _as_counts(ens.eta_sum)
    tv = tv_distance(empirical_pmf(xi), empirical_pmf(s))
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for j in range(n_boot):
        idx = rng.integers(0, xi.size, xi.size)
        boots[j] = tv_distance(empirical_pmf(xi[idx]), empirical_pmf(s[idx]))
    sigma = float(boots.std(ddof=1)) if n_boot > 1 else 0.0
    return CountComparison(tv, sigma, float(abs(xi.mean() - s.mean())), int(xi.size))


@dataclass(frozen=True)
class SpacingReport:
    spacings: np.ndarray
    ks: float
    n: int
    density: float

    def ecdf(self, s):
        return np.searchsorted(self.spacings, s, side="right") / self.n


def spacing_statistics(eigen_windows, window=None, min_spacings: int = 500) -> SpacingReport:
    """Nearest-neighbour spacings normalised to unit mean density and their
    Kolmogorov-Smirnov distance to Exp(1).

    With ``window=(a, b)`` only gaps whose left point lies in (a, b] are used
    (the right point may lie beyond b), and the density is the pooled count
    of points in (a, b] per unit length.  This avoids the bias against long
    gaps that clipping both ends to the window would introduce.
    """
    gaps = []
    n_points = 0
    n_windows = 0
    for pts in eigen_windows:
        pts = np.sort(np.asarray(pts, dtype=float))
        n_windows += 1
        if window is None:
            gaps.append(np.diff(pts))
            continue
        a, b = window
        inside = (pts > a) & (pts <= b)
        n_points += int(inside.sum())
        left = np.flatnonzero(inside[:-1])
        gaps.append(pts[left + 1] - pts[left])
    gaps = np.concatenate(gaps) if gaps else np.zeros(0)
    if gaps.size < max(min_spacings, 2):
        raise ValueError(f"need at least {min_spacings} spacings, got {gaps.size}")
    if window is None:
        density = 1.0 / gaps.mean()
    else:
        density = n_points / (n_windows * (window[1] - window[0]))
    s = np.sort(gaps * density)
    ks = float(sst.kstest(s, "expon").statistic)
    return SpacingReport(s, ks, int(s.size), float(density))


def _as_counts(counts) -> np.ndarray:
    c = np.asarray(counts)
    if c.size == 0:
        raise ValueError("empty count vector")
    if c.ndim != 1 or np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
        raise ValueError("counts must be a 1-d vector of non-negative integers")
    return c.astype(np.int64)
