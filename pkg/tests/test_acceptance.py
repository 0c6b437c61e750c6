"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints under
"acceptance criteria".  Assertions use the stated tolerances unchanged.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from andersonlab.cli import ExperimentConfig, run_experiment
from andersonlab.estimates import fractional_moment_scan, random_configurations, verify_suite
from andersonlab.lattice import (HamiltonianSpec, SparseHamiltonian, assemble_hamiltonian, cube,
                                 partition_cube, scaled_params)
from andersonlab.measures import bernoulli, cantor, uniform
from andersonlab.processes import (alpha_upper_derivative, gamma_parameter, l_alpha,
                                   microscopic_eigenvalues, run_ensemble)
from andersonlab.spectral import SpectralWindow, check_perturbation_identity, count_in_window
from andersonlab.stats import (compare_count_processes, empirical_pmf, poisson_gof,
                               spacing_statistics, tv_to_poisson)

CANTOR_ALPHA = math.log(2) / math.log(3)
LOCALIZED_SPEC = HamiltonianSpec("laplacian_offdiag", 4.0)
LOCALIZED_DIST = uniform(-0.5, 0.5)

CRITERION_1 = dict(d=1, L=[2187], hopping="none", distribution="cantor", E=0.0,
                   interval=[-1.0, 1.0], realizations=5000, master_seed=20240601)


def test_c01_cantor_poisson(acceptance_record):
    t0 = time.perf_counter()
    ens = run_ensemble(HamiltonianSpec("none"), cantor(), cube(1, 2187), 0.0, (-1.0, 1.0), 5000,
                       CRITERION_1["master_seed"], with_eta=False)
    rep = poisson_gof(ens.xi)
    elapsed = time.perf_counter() - t0
    ok = (rep.tv_vs_hat <= 0.05 and rep.fm2_poisson_gap <= 0.15 * rep.lambda_hat ** 2
          and elapsed <= 120)
    acceptance_record(1, "cantor Poisson statistics", ok,
                      f"TV={rep.tv_vs_hat:.4f} (<=0.05), |fm2-lam^2|={rep.fm2_poisson_gap:.4f} "
                      f"(<={0.15 * rep.lambda_hat ** 2:.4f}), lam={rep.lambda_hat:.4f}, "
                      f"{elapsed:.1f}s")
    assert rep.tv_vs_hat <= 0.05
    assert rep.fm2_poisson_gap <= 0.15 * rep.lambda_hat ** 2
    assert elapsed <= 120


def test_c02_uniform_cross_check(acceptance_record):
    t0 = time.perf_counter()
    L = 5000
    ens = run_ensemble(HamiltonianSpec("none"), uniform(), cube(1, L), 0.5, (-1.0, 1.0), 5000, 2,
                       with_eta=False)
    n = 2 * L + 1
    p = 2.0 / n
    sigma = math.sqrt(n * p * (1 - p) / ens.n_real)
    lam_hat = float(ens.xi.mean())
    tv = tv_to_poisson(empirical_pmf(ens.xi), 2.0)
    der = alpha_upper_derivative(uniform(), 0.5, 1.0, 1e-6, 0.1)
    lam_theory = gamma_parameter(der.d_upper, 1.0, (-1.0, 1.0))
    elapsed = time.perf_counter() - t0
    ok = abs(lam_hat - 2.0) <= 3 * sigma and tv <= 0.05 and abs(lam_theory - 2.0) < 1e-9 \
        and elapsed <= 60
    acceptance_record(2, "uniform alpha=1 cross-check", ok,
                      f"lam_hat={lam_hat:.4f} (|.-2|<=3sigma={3 * sigma:.4f}), TV={tv:.4f} "
                      f"(<=0.05), D*L(I)={lam_theory:.6f}, {elapsed:.1f}s")
    assert abs(lam_hat - 2.0) <= 3 * sigma
    assert tv <= 0.05
    assert lam_theory == pytest.approx(2.0, abs=1e-9)
    assert elapsed <= 60


def test_c03_localized_chain(acceptance_record):
    t0 = time.perf_counter()
    g = cube(1, 2000)
    ens = run_ensemble(LOCALIZED_SPEC, LOCALIZED_DIST, g, 0.0, (-1.0, 1.0), 2000, 3, with_eta=False)
    rep = poisson_gof(ens.xi)
    # extend the window to the right so gaps starting inside (-25, 25] see their successor
    pts = microscopic_eigenvalues(LOCALIZED_SPEC, LOCALIZED_DIST, g, 0.0, (-25.0, 75.0), 2000, 3)
    sp = spacing_statistics(pts, window=(-25.0, 25.0))
    elapsed = time.perf_counter() - t0
    ok = rep.tv_vs_hat <= 0.07 and sp.ks <= 0.05 and elapsed <= 300
    acceptance_record(3, "localized chain Poisson + spacings", ok,
                      f"TV={rep.tv_vs_hat:.4f} (<=0.07), KS={sp.ks:.4f} (<=0.05) over {sp.n} "
                      f"spacings, {elapsed:.1f}s")
    assert rep.tv_vs_hat <= 0.07
    assert sp.ks <= 0.05
    assert elapsed <= 300


def test_c04_inequality_suite(acceptance_record):
    t0 = time.perf_counter()
    failures = []
    n_checks = 0
    for j, cfg in enumerate(random_configurations(50, 2024)):
        reports = verify_suite(cfg["spec"], cfg["dist"], cfg["geom"], cfg["interval"], cfg["z"],
                               cfg["k_param"], seed=j)
        n_checks += len(reports)
        failures += [(j, r.name) for r in reports if not r.passed]
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed <= 300
    acceptance_record(4, "Wegner/Minami/diagonal bound suite", ok,
                      f"{n_checks} checks on 50 configurations, {len(failures)} failures, "
                      f"{elapsed:.1f}s")
    assert not failures, failures
    assert elapsed <= 300


def _random_matrix(rng):
    kind = rng.integers(4)
    if kind == 0:
        n = int(rng.integers(2, 201))
        diag = rng.uniform(-3, 3, n)
        H = SparseHamiltonian.from_dense(np.diag(diag) + np.diag(np.ones(n - 1), 1)
                                         + np.diag(np.ones(n - 1), -1))
        a, b = np.sort(rng.uniform(-5, 5, 2))
    elif kind == 1:
        L = int(rng.integers(1, 7))
        g = cube(2, L)
        H = assemble_hamiltonian(HamiltonianSpec(coupling=float(rng.uniform(0.5, 4))), g,
                                 rng.uniform(-1, 1, g.n_sites))
        a, b = np.sort(rng.uniform(-8, 8, 2))
    elif kind == 2:
        # Bernoulli chain: many near-degenerate eigenvalues
        n = int(rng.integers(2, 201))
        diag = rng.integers(0, 2, n).astype(float) * 2.0
        H = SparseHamiltonian.from_dense(np.diag(diag) + np.diag(np.ones(n - 1), 1)
                                         + np.diag(np.ones(n - 1), -1))
        a, b = np.sort(rng.uniform(-3, 5, 2))
    else:
        # diagonal Bernoulli potential with endpoints on the atoms
        n = int(rng.integers(2, 201))
        H = assemble_hamiltonian(HamiltonianSpec("none"), cube(1, (n - 1) // 2 or 1),
                                 rng.integers(0, 2, 2 * ((n - 1) // 2 or 1) + 1).astype(float))
        a, b = [(0.0, 1.0), (-1.0, 0.0), (1.0, 2.0), (0.0, 0.5)][int(rng.integers(4))]
    return H, float(a), float(b)


def test_c05_kernel_exactness(acceptance_record):
    rng = np.random.default_rng(55)
    mismatches = 0
    for _ in range(1000):
        H, a, b = _random_matrix(rng)
        ev = np.linalg.eigvalsh(H.toarray())
        oracle = int(np.count_nonzero((ev > a) & (ev <= b)))
        if count_in_window(H, SpectralWindow(a, b)) != oracle:
            mismatches += 1
    acceptance_record(5, "window counts vs dense oracle", mismatches == 0,
                      f"{mismatches} mismatches in 1000 (matrix, window) pairs, n <= 200")
    assert mismatches == 0


def _identity_case(rng):
    dists = [uniform(), bernoulli(0.4), cantor()]
    dist = dists[int(rng.integers(3))]
    spec = HamiltonianSpec("laplacian_offdiag", float(rng.uniform(0.5, 5.0)))
    if rng.random() < 0.6:
        L = int(rng.integers(6, 40))
        n_blocks = int(rng.integers(2, 5))
        params = scaled_params(L, n_blocks, int(rng.integers(0, 2)))
        if not params.valid:
            params = scaled_params(L, 2, 0)
        g = partition_cube(1, L, params)
    else:
        L = int(rng.integers(2, 6))
        g = partition_cube(2, L, scaled_params(L, 2, 0, 2))
    omega = dist.sample(g.n_sites, rng)
    H = assemble_hamiltonian(spec, g, omega)
    usable = [q for q in range(g.n_blocks) if g.interior(q).size]
    p = usable[int(rng.integers(len(usable)))]
    inner = g.interior(p)
    n = int(inner[rng.integers(inner.size)])
    z = complex(rng.uniform(-3, 3 + spec.coupling), 10 ** rng.uniform(-3, 0.5))
    return H, g, p, z, n


def test_c06_resolvent_identity(acceptance_record):
    rng = np.random.default_rng(66)
    worst = 0.0
    for _ in range(100):
        H, g, p, z, n = _identity_case(rng)
        worst = max(worst, check_perturbation_identity(H, g, p, z, n))
    acceptance_record(6, "geometric resolvent identity", worst <= 1e-9,
                      f"max residual {worst:.2e} over 100 configurations (<=1e-9)")
    assert worst <= 1e-9


def test_c07_fractional_moment_decay(acceptance_record):
    t0 = time.perf_counter()
    fit = fractional_moment_scan(LOCALIZED_SPEC, LOCALIZED_DIST, 1, 2000, n_real=100, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (fit.fitted and fit.gamma_hat > 0 and fit.r_squared >= 0.9
          and list(fit.distances) == list(range(5, 61)) and elapsed <= 300)
    acceptance_record(7, "fractional-moment decay", ok,
                      f"gamma_hat={fit.gamma_hat:.4f} +- {fit.gamma_stderr:.4f}, "
                      f"r^2={fit.r_squared:.4f} (>=0.9), distances 5..60, {elapsed:.1f}s")
    assert fit.fitted
    assert fit.gamma_hat > 0
    assert fit.r_squared >= 0.9
    assert elapsed <= 300


def test_c08_block_decoupling_trend(acceptance_record):
    rows = []
    for L in (500, 1000, 2000):
        n_blocks = int(math.floor((2 * L + 1) ** 0.3))
        g = partition_cube(1, L, scaled_params(L, n_blocks, 20))
        ens = run_ensemble(LOCALIZED_SPEC, LOCALIZED_DIST, g, 0.0, (-1.0, 1.0), 4000, 8)
        rows.append((L, n_blocks, compare_count_processes(ens, n_boot=200, seed=1)))
    steps = [b.tv <= a.tv + 2 * math.hypot(a.tv_sigma, b.tv_sigma)
             for (_, _, a), (_, _, b) in zip(rows, rows[1:])]
    detail = ", ".join(f"L={L} N={n}: TV={c.tv:.4f}+-{c.tv_sigma:.4f}" for L, n, c in rows)
    acceptance_record(8, "xi vs sum eta non-increasing", all(steps), detail)
    assert all(steps)


def test_c09_l_alpha_quadrature(acceptance_record):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        alpha = float(rng.uniform(0.05, 1.0))
        a, b = np.sort(rng.uniform(-5, 5, 2))
        pieces = []
        # |y|^(alpha-1) is singular at 0: integrate each side, with an algebraic weight at 0
        for lo, hi in ((max(-b, 0.0), -a), (max(a, 0.0), b)):
            if hi <= lo:
                continue
            if lo == 0.0:
                val = integrate.quad(lambda t: 1.0, 0.0, hi, weight="alg", wvar=(alpha - 1, 0),
                                     epsabs=0, epsrel=1e-13)[0]
            else:
                val = integrate.quad(lambda t: t ** (alpha - 1), lo, hi, epsabs=0, epsrel=1e-13)[0]
            pieces.append(val)
        quad = alpha * 2 ** (alpha - 1) * sum(pieces)
        worst = max(worst, abs(l_alpha(alpha, (a, b)) - quad) / abs(quad))
    acceptance_record(9, "L_alpha closed form vs quadrature", worst <= 1e-10,
                      f"max relative error {worst:.2e} over 100 draws (<=1e-10)")
    assert worst <= 1e-10


def test_c10_cantor_derivative_ladder(acceptance_record):
    der = alpha_upper_derivative(cantor(), 0.0, CANTOR_ALPHA, 3.0 ** -12, 1.0 / 3.0, base=3.0)
    target = 2.0 ** -CANTOR_ALPHA
    err = float(np.max(np.abs(der.ratios - target) / target))
    ok = der.epsilons.size == 12 and err <= 1e-10
    acceptance_record(10, "cantor derivative ladder", ok,
                      f"12 ratios at eps=3^-k, max relative error {err:.2e} vs 2^-alpha={target:.6f}")
    assert der.epsilons.size == 12
    np.testing.assert_allclose(der.epsilons, 3.0 ** -np.arange(1, 13), rtol=1e-15)
    assert err <= 1e-10


def test_c11_determinism(acceptance_record, tmp_path):
    blobs = []
    for name, workers in (("w1", 1), ("w2", 2), ("w1b", 1)):
        cfg = ExperimentConfig.from_dict(dict(CRITERION_1))
        run_experiment(cfg, "counts", out=str(tmp_path / name), workers=workers)
        blobs.append((tmp_path / name / "counts.csv").read_bytes())
    man = json.loads((tmp_path / "w2" / "manifest.json").read_text())
    same = blobs[0] == blobs[1] == blobs[2]
    acceptance_record(11, "byte-identical counts.csv", same,
                      f"{len(blobs[0])} bytes, workers 1/2/1, sha256 {man['outputs']['counts.csv'][:12]}")
    assert same
