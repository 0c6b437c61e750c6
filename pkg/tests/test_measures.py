import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab import measures
from andersonlab.measures import CANTOR_ALPHA, DistributionError


def cantor_cylinders(level):
    """Left endpoints of the 2^level generation intervals of the middle-thirds set."""
    left = np.array([0.0])
    for _ in range(level):
        left = np.concatenate([left / 3, left / 3 + 2 / 3])
    return np.sort(left)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def test_cantor_alpha_exact():
    assert measures.cantor().alpha == math.log(2) / math.log(3)
    assert CANTOR_ALPHA == math.log(2) / math.log(3)


@pytest.mark.parametrize("x, expected", [
    (0.0, 0.0), (1.0, 1.0), (1 / 3, 0.5), (2 / 3, 0.5), (1 / 9, 0.25), (1 / 4, 1 / 3), (3 / 4, 2 / 3),
    (-1.0, 0.0), (2.0, 1.0), (0.5, 0.5),
])
def test_cantor_cdf_values(x, expected):
    # 1/4 = 0.0202..._3 maps to 0.0101..._2 = 1/3
    assert measures.cdf(measures.cantor(), x) == pytest.approx(expected, abs=1e-12)


def test_cantor_cdf_matches_cylinder_count():
    # at level 12 every cylinder carries mass 2^-12; F(x) lies between the
    # mass of cylinders ending at or below x and of those starting at or below x
    level = 12
    left = cantor_cylinders(level)
    right = left + 3.0 ** -level
    c = measures.cantor()
    for x in np.random.default_rng(3).uniform(0, 1, 200):
        lo = np.count_nonzero(right <= x) / 2 ** level
        hi = np.count_nonzero(left <= x) / 2 ** level
        assert lo - 1e-12 <= c.cdf(x) <= hi + 1e-12


@given(st.floats(0, 1))
def test_cantor_self_similarity(x):
    c = measures.cantor()
    assert c.cdf(x / 3) == pytest.approx(c.cdf(x) / 2, abs=1e-12)


@pytest.mark.parametrize("dist", [
    measures.uniform(0, 1), measures.uniform(-2, 3), measures.cantor(), measures.bernoulli(0.3, 0, 1),
    measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7]),
])
def test_cdf_monotone_and_normalised(dist):
    lo, hi = dist.support
    xs = np.linspace(lo - 0.5, hi + 0.5, 2001)
    f = dist.cdf(xs)
    assert np.all(np.diff(f) >= -1e-15)
    assert dist.cdf(hi) == pytest.approx(1.0, abs=1e-12)
    assert dist.cdf(lo - 1e-9) == 0.0


@pytest.mark.parametrize("a, b, expected", [
    (1 / 3, 2 / 3, 0.0), (0.0, 1 / 3, 0.5), (1 / 3 - 1 / 27, 1 / 3, 1 / 8),
])
def test_cantor_interval_measure(a, b, expected):
    assert measures.interval_measure(measures.cantor(), a, b) == pytest.approx(expected, abs=1e-12)


def test_uniform_interval_measure():
    assert measures.interval_measure(measures.uniform(0, 1), 0.2, 0.5) == pytest.approx(0.3, abs=1e-14)
    assert measures.cdf(measures.uniform(0, 1), 0.3) == pytest.approx(0.3, abs=1e-14)


def test_interval_measure_order():
    with pytest.raises(ValueError):
        measures.interval_measure(measures.uniform(), 0.5, 0.2)


@settings(max_examples=200)
@given(st.lists(st.floats(-0.5, 1.5), min_size=3, max_size=3),
       st.sampled_from(["uniform", "cantor", "bernoulli", "ifs"]))
def test_interval_measure_additive(pts, kind):
    a, b, c = sorted(pts)
    dist = {"uniform": measures.uniform(0, 1), "cantor": measures.cantor(),
            "bernoulli": measures.bernoulli(0.4, 0.0, 1.0),
            "ifs": measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7])}[kind]
    lhs = measures.interval_measure(dist, a, b) + measures.interval_measure(dist, b, c)
    assert lhs == pytest.approx(measures.interval_measure(dist, a, c), abs=1e-12)


def test_bernoulli_samples_in_support(rng):
    x = measures.sample_iid(measures.bernoulli(0.5, 0, 1), 4, rng)
    assert set(np.unique(x)) <= {0.0, 1.0}


def test_uniform_sample_mean(rng):
    x = measures.sample_iid(measures.uniform(0, 1), 100_000, rng)
    assert abs(x.mean() - 0.5) <= 5 * math.sqrt(1 / 12 / x.size)


def test_cantor_samples_avoid_middle_third(rng):
    x = measures.sample_iid(measures.cantor(), 100_000, rng)
    assert x.min() >= 0 and x.max() <= 1
    assert not np.any((x > 1 / 3) & (x < 2 / 3))


def test_sampling_deterministic():
    c = measures.cantor()
    a = c.sample(50, np.random.default_rng(9))
    b = c.sample(50, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("dist", [
    measures.uniform(0, 1), measures.cantor(), measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7]),
    measures.ifs([0.2, 0.25, 0.1], [0.0, 0.4, 0.9], [0.5, 0.3, 0.2]),
])
def test_ecdf_matches_cdf(dist, rng):
    x = np.sort(dist.sample(100_000, rng))
    f = dist.cdf(x)
    ecdf_hi = np.arange(1, x.size + 1) / x.size
    ecdf_lo = np.arange(x.size) / x.size
    assert max(np.max(np.abs(ecdf_hi - f)), np.max(np.abs(ecdf_lo - f))) <= 0.01


@pytest.mark.parametrize("dist", [measures.cantor(), measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7]),
                                  measures.uniform(-1, 1)])
def test_interval_frequencies(dist, rng):
    n = 100_000
    x = dist.sample(n, rng)
    lo, hi = dist.support
    for a, b in np.sort(rng.uniform(lo, hi, (20, 2)), axis=1):
        p = measures.interval_measure(dist, a, b)
        freq = np.mean((x > a) & (x <= b))
        assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


def brute_window_mass(left, mass, width, s):
    """Bracket max over windows [a, a + s], a a cylinder left end, of the
    window mass: cylinders inside the window give a lower bound, cylinders
    meeting it an upper bound."""
    right = left + width
    lo = hi = 0.0
    for a in left:
        lo = max(lo, np.count_nonzero((left >= a) & (right <= a + s)) * mass)
        hi = max(hi, np.count_nonzero((right >= a) & (left <= a + s)) * mass)
    return lo, hi


@pytest.mark.parametrize("k", range(1, 8))
def test_cantor_s_mu_triadic(k):
    assert measures.s_mu(measures.cantor(), 3.0 ** -k) == pytest.approx(2.0 ** -k, rel=1e-12)


def test_cantor_s_mu_brute_force():
    c = measures.cantor()
    level = 9
    left = cantor_cylinders(level)
    for k in (1, 2, 3, 4):
        s = 3.0 ** -k
        lo, hi = brute_window_mass(left, 2.0 ** -level, 3.0 ** -level, s * (1 + 1e-12))
        assert lo == pytest.approx(2.0 ** -k)
        assert c.s_mu(s) == pytest.approx(lo, rel=1e-12)
    for s in (0.05, 0.2, 0.45):
        lo, hi = brute_window_mass(left, 2.0 ** -level, 3.0 ** -level, s)
        assert lo - 1e-12 <= c.s_mu(s) <= hi + 1e-12


def test_s_mu_uniform_and_large_width():
    assert measures.s_mu(measures.uniform(0, 1), 0.25) == pytest.approx(0.25)
    for dist in (measures.uniform(0, 1), measures.cantor(), measures.bernoulli(0.3),
                 measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7])):
        assert measures.s_mu(dist, 1.0) == 1.0
        assert measures.s_mu(dist, 5.0) == 1.0


def test_s_mu_rejects_nonpositive():
    with pytest.raises(ValueError):
        measures.s_mu(measures.cantor(), 0.0)
    with pytest.raises(ValueError):
        measures.q_mu(measures.uniform(), -1.0)


def test_q_mu_values():
    assert measures.q_mu(measures.uniform(0, 1), 0.1) == pytest.approx(0.1)
    assert measures.q_mu(measures.cantor(), 1 / 27) == pytest.approx(1.0)


def test_cantor_holder_bound():
    c = measures.cantor()
    for s in np.logspace(-8, 0, 200):
        assert c.s_mu(s) <= 2 * s ** CANTOR_ALPHA * (1 + 1e-12)


@pytest.mark.parametrize("dist", [measures.uniform(0, 2), measures.cantor(), measures.bernoulli(0.2),
                                  measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7])])
def test_holder_modulus_monotone(dist):
    hm = measures.holder_modulus(dist, np.logspace(-6, 0.5, 120))
    assert np.all(np.diff(hm.s_mu) >= -1e-15)
    assert np.all(np.diff(hm.q_mu) >= -1e-15)
    assert np.all(hm.s_mu <= 1.0)
    if not dist.has_density:
        assert np.all(hm.q_mu >= hm.s_mu)
        assert np.all(hm.q_mu <= 8.0)


def test_ifs_s_mu_is_upper_bound_on_window_masses(rng):
    dist = measures.ifs([0.4, 0.3], [0.0, 0.6], [0.3, 0.7])
    for s in (0.3, 0.05, 0.01, 0.002):
        bound = dist.s_mu(s)
        for a in rng.uniform(-0.1, 1.0, 400):
            assert measures.interval_measure(dist, a - 1e-15, a + s) <= bound + 1e-12


def test_holder_constants():
    assert measures.uniform(0, 4).holder_constant == pytest.approx(0.25)
    assert measures.cantor().holder_constant == 16


@pytest.mark.parametrize("ratios, shifts, weights", [
    ([0.5, 0.6], [0.0, 0.4], [0.5, 0.5]),     # overlapping images
    ([1.2, 0.3], [0.0, 0.6], [0.5, 0.5]),     # not a contraction
    ([0.3, 0.3], [0.0, 0.7], [0.5, 0.6]),     # weights do not sum to 1
])
def test_ifs_validation(ratios, shifts, weights):
    with pytest.raises(DistributionError):
        measures.ifs(ratios, shifts, weights)


def test_from_spec_round_trip():
    for kind, params in [("uniform", [-0.5, 0.5]), ("bernoulli", [0.3, 0.0, 2.0]), ("cantor", []),
                         ("ifs", [0.4, 0.0, 0.3, 0.3, 0.6, 0.7])]:
        d = measures.from_spec(kind, params)
        assert d.kind == kind
        again = measures.from_spec(d.kind, d.params())
        assert again.cdf(0.37) == d.cdf(0.37)


def cantor_cdf_fraction(x, depth=60):
    """Ternary expansion of the exact rational value of a double."""
    from fractions import Fraction
    q = Fraction(x)
    if q <= 0:
        return 0.0
    if q >= 1:
        return 1.0
    acc, mass = Fraction(0), Fraction(1)
    for _ in range(depth):
        q *= 3
        digit = int(q)
        mass /= 2
        if digit == 1:
            return float(acc + mass)
        if digit == 2:
            acc += mass
        q -= digit
        if q == 0:
            break
    return float(acc)


def test_cantor_cdf_exact_on_binary_inputs():
    xs = np.random.default_rng(8).uniform(0, 1, 300) * 2.0 ** -np.random.default_rng(9).integers(0, 20, 300)
    c = measures.cantor()
    got = c.cdf(xs)
    want = np.array([cantor_cdf_fraction(v) for v in xs])
    assert np.max(np.abs(got - want)) <= 1e-15
