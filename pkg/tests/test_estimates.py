import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy import integrate

from andersonlab.estimates import (DEFAULT_IM_Z, InequalityReport, center_pairs, default_z_grid,
                                   diagonal_green_bound, fractional_moment_scan, minami_check,
                                   random_configurations, site_wegner_check, verify_suite,
                                   wegner_check)
from andersonlab.lattice import HamiltonianSpec, SparseHamiltonian, assemble_hamiltonian, cube
from andersonlab.measures import bernoulli, cantor, uniform
from andersonlab.spectral import SpectralWindow, count_in_window

NONE = HamiltonianSpec("none")


def test_report_pass_rule():
    r = InequalityReport("x", 1.3, 0.1, 1.0, (0, 1), 5, 100)
    assert r.passed
    assert not InequalityReport("x", 1.31, 0.1, 1.0, (0, 1), 5, 100).passed
    d = r.to_dict()
    assert d["pass"] is True and d["interval"] == [0, 1]


def test_wegner_equality_case():
    r = wegner_check(NONE, uniform(), cube(1, 50), (0.4, 0.5), 2000, 1)
    assert r.rhs_value == pytest.approx(10.1, rel=1e-12)
    assert abs(r.lhs_estimate - 10.1) <= 4 * r.lhs_stderr
    assert r.passed and r.volume == 101


def test_wegner_cantor_gap():
    r = wegner_check(NONE, cantor(), cube(1, 50), (1 / 3, 2 / 3), 200, 0)
    assert r.lhs_estimate == 0.0 and r.passed


def test_wegner_full_support():
    r = wegner_check(NONE, uniform(), cube(1, 20), (-0.5, 1.5), 100, 0)
    assert r.lhs_estimate == 41 and r.lhs_stderr == 0.0
    # density bound sup(rho) |I| is not capped at one
    assert r.rhs_value == pytest.approx(2.0 * 41) and r.passed


def test_wegner_needs_realizations():
    with pytest.raises(ValueError):
        wegner_check(NONE, uniform(), cube(1, 5), (0, 1), 99, 0)
    with pytest.raises(ValueError):
        minami_check(NONE, uniform(), cube(1, 5), (0, 1), 999, 0)


def test_minami_binomial_example():
    r = minami_check(NONE, uniform(), cube(1, 50), (0.4, 0.5), 4000, 2)
    assert r.rhs_value == pytest.approx(102.01, rel=1e-12)
    # exact second factorial moment of Binomial(101, 0.1)
    assert abs(r.lhs_estimate - 101.0) <= 4 * r.lhs_stderr
    assert r.passed


def test_minami_trivial_counts():
    # window outside the support: every count is zero
    r = minami_check(NONE, uniform(), cube(1, 5), (2.0, 3.0), 1000, 0)
    assert r.lhs_estimate == 0.0 and r.passed
    # a window holding only the atom at 1 of a rare Bernoulli: counts are 0 or 1 almost always
    r1 = minami_check(NONE, bernoulli(0.001), cube(1, 1), (0.5, 1.0), 1000, 0)
    assert r1.lhs_estimate == 0.0 and r1.passed


def test_site_wegner():
    r = site_wegner_check(HamiltonianSpec(coupling=2.0), uniform(), cube(1, 30), (0.2, 0.9), 100, 0)
    assert r.volume == 1 and r.passed
    r0 = site_wegner_check(NONE, uniform(), cube(1, 30), (0.2, 0.9), 200, 0)
    assert abs(r0.lhs_estimate - 0.7) <= 4 * r0.lhs_stderr


def test_diagonal_bound_arctan_oracle():
    z = 0.5 + 0.1j
    r = diagonal_green_bound(NONE, uniform(), cube(1, 100), z, 1.0, 400, 0)
    exact = z.imag * 2 * math.atan(0.5 / z.imag)
    assert exact == pytest.approx(0.2747, abs=1e-4)
    assert abs(r.lhs_estimate - exact) <= 4 * r.lhs_stderr
    assert r.rhs_value == pytest.approx(math.pi * 1.5 * 0.2, rel=1e-12)
    assert r.passed


@pytest.mark.parametrize("hopping", ["none", "laplacian_offdiag"])
def test_diagonal_bound_large_im_z(hopping):
    spec = HamiltonianSpec(hopping, 1.0)
    r = diagonal_green_bound(spec, uniform(), cube(1, 20), 0.5 + 40j, 1.0, 20, 0)
    assert r.lhs_estimate <= 1.0
    assert r.rhs_value == pytest.approx(math.pi * 1.5)
    assert r.passed


def test_diagonal_bound_errors():
    with pytest.raises(ValueError):
        diagonal_green_bound(NONE, uniform(), cube(1, 5), 0.5, 1.0, 10, 0)
    with pytest.raises(ValueError):
        diagonal_green_bound(NONE, uniform(), cube(1, 5), 0.5 + 1j, 0.0, 10, 0)


def test_scan_no_hopping_off_diagonal_is_flagged():
    fit = fractional_moment_scan(NONE, uniform(), 1, 20, n_real=5)
    assert fit.flag == "super-exponential/exact-zero"
    assert not fit.fitted
    assert np.all(fit.mean_moments == 0)


def test_scan_no_hopping_diagonal_moment_integral():
    s = 1 / 3
    z = 0.3 + 1e-4j
    fit = fractional_moment_scan(NONE, uniform(), 1, 5, s=s, pair_set=[(5, 5)], z_grid=[z],
                                 n_real=4000, seed=3)
    assert fit.flag == "too-few-distances"
    exact, _ = integrate.quad(lambda x: abs(x - z) ** -s, 0, 1, points=[z.real], limit=200)
    assert abs(fit.mean_moments[0] - exact) <= 4 * fit.stderr[0]
    # finite as Im z shrinks: the integral stays below its Im z = 0 value
    assert exact <= (0.3 ** (1 - s) + 0.7 ** (1 - s)) / (1 - s)


def test_scan_rejects_bad_input():
    with pytest.raises(ValueError):
        fractional_moment_scan(HamiltonianSpec(), uniform(), 1, 10, s=1.0, n_real=2)
    with pytest.raises(ValueError, match="floor"):
        fractional_moment_scan(HamiltonianSpec(), uniform(), 1, 10, z_grid=[1e-5j], n_real=2)
    with pytest.raises(ValueError):
        center_pairs(cube(1, 4), [5])


def test_default_grid():
    grid = default_z_grid((0.0, 1.0))
    assert len(grid) == 8 and {z.imag for z in grid} == set(DEFAULT_IM_Z)


LOCALIZED = (HamiltonianSpec(coupling=4.0), uniform(-0.5, 0.5))


def test_decay_fit_localized_chain():
    fit = fractional_moment_scan(*LOCALIZED, 1, 60, n_real=100, seed=0)
    assert fit.fitted
    assert np.all(np.diff(fit.distances) > 0)
    assert fit.gamma_hat > 0 and math.isfinite(fit.gamma_hat)
    assert fit.r_squared >= 0.9
    assert fit.to_dict()["flag"] is None


def test_decay_fit_robust_to_sample_size():
    a = fractional_moment_scan(*LOCALIZED, 1, 60, n_real=100, seed=0)
    b = fractional_moment_scan(*LOCALIZED, 1, 60, n_real=200, seed=0)
    assert abs(a.gamma_hat - b.gamma_hat) < 2 * max(a.gamma_stderr, b.gamma_stderr)


@pytest.mark.parametrize("c", [0.25, 2.0, 8.0])
def test_scale_covariance(c):
    rng = np.random.default_rng(1)
    g = cube(1, 40)
    H = assemble_hamiltonian(HamiltonianSpec(coupling=1.5), g, rng.uniform(size=g.n_sites))
    # powers of two scale every entry exactly
    scaled = SparseHamiltonian(sp.csr_matrix(c * H.matrix))
    for _ in range(30):
        a, b = np.sort(rng.uniform(-3, 4, 2))
        assert count_in_window(H, SpectralWindow(a, b)) == \
            count_in_window(scaled, SpectralWindow(c * a, c * b))


def test_random_configurations_cover_kinds():
    cfgs = random_configurations(8, 0, L_max=30)
    kinds = {c["dist"].kind for c in cfgs}
    assert kinds == {"uniform", "bernoulli", "cantor", "ifs"}
    assert all(c["geom"].d == 1 and c["geom"].L <= 30 and c["z"].imag > 0 for c in cfgs)


def test_small_randomized_suite():
    for j, cfg in enumerate(random_configurations(8, 42, L_max=40)):
        reports = verify_suite(cfg["spec"], cfg["dist"], cfg["geom"], cfg["interval"], cfg["z"],
                               cfg["k_param"], seed=j, n_real=1000, n_real_site=100,
                               n_real_green=50)
        for r in reports:
            assert r.passed, r.to_dict()


def test_bernoulli_wegner_counts_atoms():
    dist = bernoulli(0.3, 0.0, 1.0)
    r = wegner_check(NONE, dist, cube(1, 20), (0.5, 1.0), 500, 0)
    assert abs(r.lhs_estimate - 0.3 * 41) <= 4 * r.lhs_stderr
    # no density: 8 S(|I|) |Lambda| with S = max atom mass
    assert r.rhs_value == pytest.approx(8 * 0.7 * 41)
