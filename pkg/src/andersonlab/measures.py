"""Single-site distributions for the random potential.

Each distribution exposes an exact CDF, i.i.d. sampling from a
:class:`numpy.random.Generator`, and the concentration moduli

    S(s) = sup_a mu[a, a + s]
    Q(s) = ||rho||_inf * s      (bounded density)
         = 8 * S(s)             (otherwise)

used by the Wegner / Minami bounds.  Intervals are half-open ``(a, b]``
throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

CANTOR_ALPHA = math.log(2.0) / math.log(3.0)

# CDF recursion stops once the remaining weight drops below this.
_CDF_PRECISION = 1e-16
_CDF_MAX_DEPTH = 400
# Largest cylinder net searched by s_mu.
_NET_CAP = 1 << 16
# Number of ternary digits drawn per Cantor sample.
CANTOR_DIGITS = 40


class DistributionError(ValueError):
    pass


class SingleSiteDistribution:
    """Base class; concrete kinds are :class:`Uniform`, :class:`Bernoulli`
    and :class:`IFSMeasure` (which also covers the Cantor measure)."""

    kind: str = ""
    alpha: float = 0.0
    holder_constant: float = math.inf

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def has_density(self) -> bool:
        return False

    @property
    def density_sup(self) -> float:
        raise DistributionError(f"{self.kind} has no bounded density")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x, left: bool = False):
        """F(x) = mu((-inf, x]); with ``left=True`` the left limit mu((-inf, x))."""
        raise NotImplementedError

    def s_mu(self, s: float) -> float:
        raise NotImplementedError

    def params(self) -> list[float]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    @property
    def width(self) -> float:
        lo, hi = self.support
        return hi - lo

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params()})"


@dataclass(frozen=True, repr=False)
class Uniform(SingleSiteDistribution):
    a: float = 0.0
    b: float = 1.0
    kind: str = field(default="uniform", init=False)
    alpha: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise DistributionError(f"uniform needs a < b, got ({self.a}, {self.b})")

    @property
    def holder_constant(self) -> float:
        return 1.0 / (self.b - self.a)

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def has_density(self):
        return True

    @property
    def density_sup(self):
        return 1.0 / (self.b - self.a)

    def sample(self, n, rng):
        return self.a + (self.b - self.a) * rng.random(n)

    def cdf(self, x, left=False):
        x = np.asarray(x, dtype=float)
        out = np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        return out if out.ndim else float(out)

    def s_mu(self, s):
        _check_width(s)
        return min(s * self.density_sup, 1.0)

    def params(self):
        return [self.a, self.b]


@dataclass(frozen=True, repr=False)
class Bernoulli(SingleSiteDistribution):
    """Two atoms: ``v1`` with probability ``p``, ``v0`` otherwise.

    Not Hoelder continuous for any exponent, so ``alpha`` is 0 and callers
    that need a scaling exponent must supply one.
    """

    p: float = 0.5
    v0: float = 0.0
    v1: float = 1.0
    kind: str = field(default="bernoulli", init=False)
    alpha: float = field(default=0.0, init=False)
    holder_constant: float = field(default=math.inf, init=False)

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DistributionError(f"bernoulli p must lie in (0, 1), got {self.p}")
        if self.v0 == self.v1:
            raise DistributionError("bernoulli atoms must be distinct")

    @property
    def support(self):
        return (min(self.v0, self.v1), max(self.v0, self.v1))

    def sample(self, n, rng):
        return np.where(rng.random(n) < self.p, self.v1, self.v0)

    def cdf(self, x, left=False):
        x = np.asarray(x, dtype=float)
        below = np.less if left else np.less_equal
        out = (1.0 - self.p) * below(self.v0, x) + self.p * below(self.v1, x)
        return out if out.ndim else float(out)

    def s_mu(self, s):
        _check_width(s)
        if s >= abs(self.v1 - self.v0):
            return 1.0
        return max(self.p, 1.0 - self.p)

    def params(self):
        return [self.p, self.v0, self.v1]


class IFSMeasure(SingleSiteDistribution):
    """Self-similar measure of an iterated function system on [0, 1].

    Maps are ``f_i(x) = r_i * x + t_i`` with ``0 < r_i < 1``; the images
    ``f_i([0, 1])`` must lie in [0, 1] and be pairwise disjoint.  Weight
    ``w_i`` is the mass sent into image ``i``.
    """

    def __init__(self, ratios: Sequence[float], shifts: Sequence[float],
                 weights: Sequence[float], kind: str = "ifs",
                 alpha: float | None = None, holder_constant: float | None = None):
        r = np.asarray(ratios, dtype=float)
        t = np.asarray(shifts, dtype=float)
        w = np.asarray(weights, dtype=float)
        if not (r.ndim == t.ndim == w.ndim == 1 and len(r) == len(t) == len(w)):
            raise DistributionError("ratios, shifts and weights must be equal-length vectors")
        if len(r) < 2:
            raise DistributionError("an IFS needs at least two maps")
        if np.any(r <= 0) or np.any(r >= 1):
            raise DistributionError("contraction ratios must lie in (0, 1)")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DistributionError("weights must be positive and sum to 1")
        if np.any(t < 0) or np.any(r + t > 1 + 1e-15):
            raise DistributionError("each image f_i([0,1]) must lie inside [0,1]")
        order = np.argsort(t)
        r, t, w = r[order], t[order], w[order]
        if np.any(t[1:] <= (r + t)[:-1]):
            raise DistributionError("IFS images must be pairwise disjoint")
        self.ratios, self.shifts, self.weights = r, t, w
        self.kind = kind
        # Attractor hull: fixed points of the outermost maps.
        self._lo = t[0] / (1.0 - r[0])
        self._hi = t[-1] / (1.0 - r[-1])
        self._img_lo = r * self._lo + t
        self._img_hi = r * self._hi + t
        self._cumw = np.concatenate([[0.0], np.cumsum(w)])
        self._gap = float(np.min(self._img_lo[1:] - self._img_hi[:-1]))
        if alpha is None:
            alpha = min(1.0, float(np.min(np.log(w) / np.log(r))))
        self.alpha = alpha
        self._holder = holder_constant
        self._s_cached = lru_cache(maxsize=4096)(self._s_recursive)
        self._nets = {}
        # maps sharing a ratio give the same recursion branch; keep the heaviest
        self._branch_ratios = np.unique(r)
        self._branch_weights = np.array([w[r == v].max() for v in self._branch_ratios])

    @classmethod
    def cantor(cls) -> "IFSMeasure":
        """Standard middle-thirds Cantor measure."""
        return cls([1 / 3, 1 / 3], [0.0, 2 / 3], [0.5, 0.5], kind="cantor",
                   alpha=CANTOR_ALPHA, holder_constant=16.0)

    @property
    def support(self):
        return (self._lo, self._hi)

    @property
    def holder_constant(self) -> float:
        if self._holder is None:
            # Numerical estimate over one self-similarity band; informational only.
            s = np.geomspace(self._gap * float(self.ratios.min()), self.width, 200)
            ratio = max(self.s_mu(v) / v ** self.alpha for v in s)
            self._holder = 8.0 * ratio
        return self._holder

    def __eq__(self, other):
        return (isinstance(other, IFSMeasure) and self.kind == other.kind
                and np.array_equal(self.ratios, other.ratios)
                and np.array_equal(self.shifts, other.shifts)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.kind, tuple(self.ratios), tuple(self.shifts), tuple(self.weights)))

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_s_cached", None)
        state["_nets"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._s_cached = lru_cache(maxsize=4096)(self._s_recursive)

    def params(self):
        if self.kind == "cantor":
            return []
        out = []
        for r, t, w in zip(self.ratios, self.shifts, self.weights):
            out += [float(r), float(t), float(w)]
        return out

    # -- sampling -----------------------------------------------------------

    def sample(self, n, rng):
        if self.kind == "cantor":
            return _cantor_digits(n, rng)
        depth = int(math.ceil(math.log(_CDF_PRECISION) / math.log(self.ratios.max())))
        pos = np.zeros(n)
        scale = np.ones(n)
        for _ in range(depth):
            idx = np.searchsorted(self._cumw[1:-1], rng.random(n), side="right")
            pos += scale * self.shifts[idx]
            scale *= self.ratios[idx]
        return pos + scale * self._lo

    # -- distribution function ---------------------------------------------

    def cdf(self, x, left=False):
        # Atomless, so the left limit equals the CDF.
        if self.kind == "cantor":
            return _cantor_cdf(x)
        x = np.array(x, dtype=float, copy=True)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        mult = np.ones_like(x)
        active = np.ones(x.shape, dtype=bool)
        for _ in range(_CDF_MAX_DEPTH):
            if not active.any():
                break
            xa = x[active]
            above = xa >= self._hi
            # number of images lying entirely at or below x
            full = np.searchsorted(self._img_hi, xa, side="right")
            j = np.minimum(full, len(self.ratios) - 1)
            inside = (~above) & (xa >= self._img_lo[j]) & (xa >= self._lo)
            gain = np.where(above, 1.0, self._cumw[full])
            gain = np.where(xa < self._lo, 0.0, gain)
            out[active] += mult[active] * gain
            idx = np.flatnonzero(active)
            still = idx[inside]
            jj = j[inside]
            mult[still] *= self.weights[jj]
            x[still] = (x[still] - self.shifts[jj]) / self.ratios[jj]
            active[:] = False
            active[still] = mult[still] > _CDF_PRECISION
        return float(out[0]) if scalar else out

    # -- concentration modulus ---------------------------------------------

    def s_mu(self, s):
        _check_width(s)
        return self._s_cached(float(s), (0,) * len(self._branch_ratios))

    def _s_recursive(self, s0: float, powers: tuple) -> float:
        # The width is s0 / prod r_i^powers[i]; keying the cache on the integer
        # powers lets different map orders share one entry.
        s = s0 / float(np.prod(self._branch_ratios ** np.array(powers)))
        if s >= self.width:
            return 1.0
        if s < self._gap:
            # A window shorter than every first-level gap meets one image only.
            best = 0.0
            for i, w in enumerate(self._branch_weights):
                nxt = powers[:i] + (powers[i] + 1,) + powers[i + 1:]
                best = max(best, w * self._s_cached(s0, nxt))
            return best
        return self._s_net(s)

    def _s_net(self, s: float) -> float:
        """Upper bound on sup_a mu[a, a + s] from a generation-k cylinder net.

        A window starting in cylinder ``c`` lies inside [c, c + len + s]; its
        mass is bounded by the total mass of the cylinders that interval
        meets.  The bound is exact when s is a sum of whole cylinder lengths
        and gaps (triadic widths for the Cantor measure) and errs upward by at
        most one cylinder mass otherwise.
        """
        r_max = float(self.ratios.max())
        k = max(0, math.ceil(math.log(1.0 / s) / math.log(1.0 / r_max))) + 2
        m = len(self.ratios)
        while m ** (k + 1) <= _NET_CAP:
            k += 1
        left, length, cum = self._net(k)
        stop = np.searchsorted(left, left + length + s, side="right")
        return float(min(1.0, np.max(cum[stop] - cum[:-1])))

    def _net(self, k: int):
        """Left ends, lengths and cumulative masses of the generation-k
        cylinders, in increasing order."""
        if k not in self._nets:
            left = np.array([self._lo])
            length = np.array([self.width])
            mass = np.array([1.0])
            for _ in range(k):
                # map index outermost: image i of every cylinder, images in order
                left = (self.ratios[:, None] * left[None, :] + self.shifts[:, None]).ravel()
                length = (self.ratios[:, None] * length[None, :]).ravel()
                mass = (self.weights[:, None] * mass[None, :]).ravel()
            self._nets[k] = (left, length, np.concatenate([[0.0], np.cumsum(mass)]))
        return self._nets[k]


def _check_width(s):
    if not s > 0:
        raise DistributionError(f"window width must be positive, got {s}")


_CANTOR_LEVELS = 54
# Inputs within this many ulps of a triadic rational p / 3^k are read as it.
_CANTOR_SNAP_ULPS = 2


def _cantor_step(v, one, slack):
    """Classify v = 3 * remainder against the cut points 0, 1, 2, 3 (in units
    of ``one``).  Returns (digit, stop, extra) where ``extra`` is the number
    of additional level masses to add when the walk stops."""
    if v <= slack:
        return 0, True, 0
    for cut, extra in ((one, 1), (2 * one, 1), (3 * one, 2)):
        if abs(v - cut) <= slack:
            return None, True, extra
    d = v // one
    return d, d == 1, 1 if d == 1 else 0


def _cantor_cdf_scalar(x: float) -> float:
    m, e = math.frexp(x)
    E = 53 - e
    n, one, acc = int(m * (1 << 53)), 1 << E, 0
    slack = _CANTOR_SNAP_ULPS
    for k in range(1, _CANTOR_LEVELS + 1):
        slack *= 3
        v = 3 * n
        snap = slack if 8 * slack < one else -1
        d, stop, extra = _cantor_step(v, one, snap)
        if stop:
            acc += extra << (_CANTOR_LEVELS - k)
            break
        if d == 2:
            acc += 1 << (_CANTOR_LEVELS - k)
        n = v - d * one
    return acc / 2.0 ** _CANTOR_LEVELS


def _cantor_cdf(x):
    """Middle-thirds CDF evaluated on the binary value of each input.

    A double x in (0, 1) is n / 2^E with integer n, and one ternary step is
    n -> 3n - digit * 2^E, so the digit recursion runs in integers with no
    rounding.  Float recursion would not do: the CDF is only Hoelder, so a
    rounding error of 1e-17 can move it by 1e-11.  An input within two ulps
    of a triadic rational p / 3^k is read as that rational, so 1/3 (which
    no double equals) lands on its plateau.  Inputs >= 2^-9 run vectorised
    in uint64; smaller ones fall back to Python ints.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.where(x >= 1.0, 1.0, 0.0)
    inner = (x > 0) & (x < 1)
    m, e = np.frexp(x)
    fast = inner & (e >= -8)
    if fast.any():
        E = (53 - e[fast]).astype(np.uint64)
        n = (m[fast] * 2.0 ** 53).astype(np.uint64)
        one = np.left_shift(np.uint64(1), E)
        acc = np.zeros(n.size, dtype=np.uint64)
        live = np.ones(n.size, dtype=bool)
        slack = _CANTOR_SNAP_ULPS
        u1 = np.uint64(1)
        for k in range(1, _CANTOR_LEVELS + 1):
            slack *= 3
            bit = u1 << np.uint64(_CANTOR_LEVELS - k)
            v = n * np.uint64(3)
            if slack < 1 << 60:
                sl = np.uint64(slack)
                snapping = live & (np.uint64(8) * sl < one)
            else:
                sl, snapping = np.uint64(0), np.zeros_like(live)

            def near(cut):
                return snapping & (np.where(v > cut, v - cut, cut - v) <= sl)

            at0 = snapping & (v <= sl)
            at12 = near(one) | near(2 * one)
            at3 = near(3 * one)
            acc[at12] += bit
            acc[at3] += bit << u1
            live &= ~(at0 | at12 | at3)
            d = np.right_shift(v, E)
            acc[live & (d >= 1)] += bit
            n = np.where(live, v - np.where(d == 1, 0, d) * one, n)
            live &= (d != 1) & (n != 0)
            if not live.any():
                break
        out[fast] = acc.astype(float) / 2.0 ** _CANTOR_LEVELS
    for i in np.flatnonzero(inner & ~fast):
        out[i] = _cantor_cdf_scalar(float(x[i]))
    return float(out[0]) if scalar else out


def _cantor_digits(n: int, rng: np.random.Generator) -> np.ndarray:
    """Cantor samples from i.i.d. ternary digits in {0, 2}, one random bit each."""
    bits = rng.integers(0, 1 << CANTOR_DIGITS, size=n, dtype=np.uint64)
    x = np.zeros(n)
    # smallest digits first keeps the float sum accurate
    for j in range(CANTOR_DIGITS - 1, -1, -1):
        digit = ((bits >> np.uint64(j)) & np.uint64(1)).astype(float)
        x += digit * (2.0 * 3.0 ** -(j + 1))
    return x


# -- module-level operations -------------------------------------------------

def uniform(a: float = 0.0, b: float = 1.0) -> Uniform:
    return Uniform(a, b)


def bernoulli(p: float = 0.5, v0: float = 0.0, v1: float = 1.0) -> Bernoulli:
    return Bernoulli(p, v0, v1)


def cantor() -> IFSMeasure:
    return IFSMeasure.cantor()


def ifs(ratios, shifts, weights) -> IFSMeasure:
    return IFSMeasure(ratios, shifts, weights)


def from_spec(kind: str, params: Sequence[float] = ()) -> SingleSiteDistribution:
    """Build a distribution from its serialized ``kind`` + flat parameter list.

    ``ifs`` parameters are consecutive ``(ratio, shift, weight)`` triples.
    """
    params = [float(v) for v in params]
    if kind == "uniform":
        return Uniform(*params) if params else Uniform()
    if kind == "bernoulli":
        return Bernoulli(*params) if params else Bernoulli()
    if kind == "cantor":
        if params:
            raise DistributionError("cantor takes no parameters")
        return IFSMeasure.cantor()
    if kind == "ifs":
        if len(params) < 6 or len(params) % 3:
            raise DistributionError("ifs parameters are (ratio, shift, weight) triples, at least two")
        triples = np.reshape(params, (-1, 3))
        return IFSMeasure(triples[:, 0], triples[:, 1], triples[:, 2])
    raise DistributionError(f"unknown distribution kind {kind!r}")


def sample_iid(dist: SingleSiteDistribution, n: int, stream: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    return dist.sample(n, stream)


def cdf(dist: SingleSiteDistribution, x):
    return dist.cdf(x)


def interval_measure(dist: SingleSiteDistribution, a: float, b: float) -> float:
    """mu((a, b])."""
    if a > b:
        raise ValueError(f"interval endpoints out of order: ({a}, {b}]")
    return float(min(1.0, max(0.0, dist.cdf(b) - dist.cdf(a))))


def s_mu(dist: SingleSiteDistribution, s: float) -> float:
    return dist.s_mu(s)


def q_mu(dist: SingleSiteDistribution, s: float) -> float:
    _check_width(s)
    if dist.has_density:
        return dist.density_sup * s
    return 8.0 * dist.s_mu(s)


@dataclass(frozen=True)
class HolderModulus:
    s_values: np.ndarray
    s_mu: np.ndarray
    q_mu: np.ndarray


def holder_modulus(dist: SingleSiteDistribution, s_values) -> HolderModulus:
    s_values = np.asarray(s_values, dtype=float)
    s = np.array([dist.s_mu(v) for v in s_values])
    q = np.array([q_mu(dist, v) for v in s_values])
    return HolderModulus(s_values, s, q)
