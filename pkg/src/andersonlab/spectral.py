"""Eigenvalue window counts and Green function entries.

Counting uses Sylvester's law of inertia: the number of eigenvalues of H
below x equals the number of negative pivots in a symmetric factorization
of H - x.  Three factorizations are available:

* diagonal matrices are counted directly;
* tridiagonal matrices use the Sturm (scalar LDL^T) recurrence, batched
  over many diagonals at once;
* wider bands use block LDL^T on the block-tridiagonal view with block size
  equal to the bandwidth (Haynsworth inertia additivity);
* ``method="ldl"`` runs dense Bunch-Kaufman (``scipy.linalg.ldl``).

A zero pivot means the shift sits on an eigenvalue of a leading submatrix.
The shift is then moved up by k * 1e-12 * max(||H||_inf, 1), k = 1, 2, 3,
which keeps the ``#{eig <= x}`` reading of a half-open window (a, b].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import CubeGeometry, SparseHamiltonian

log = logging.getLogger(__name__)

DENSE_CAP = 4000
JITTER = 1e-12
MAX_RETRIES = 3
GREEN_RESIDUAL = 1e-10
# relative size below which a block pivot eigenvalue counts as zero
_BLOCK_PIVOT_TOL = 1e-13


class SpectralError(RuntimeError):
    pass


class SpectralTieError(SpectralError):
    """Every jittered shift still produced a zero pivot."""


class DenseCapError(SpectralError):
    pass


class SolverError(SpectralError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SpectralWindow:
    """Half-open energy window (a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if self.b < self.a:
            raise ValueError(f"window endpoints out of order: ({self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class GreenQuery:
    z: complex
    n: int
    m: int

    def __post_init__(self):
        if not complex(self.z).imag > 0:
            raise ValueError(f"Green function needs Im z > 0, got z = {self.z}")


def jitter_step(norm: float) -> float:
    return JITTER * max(norm, 1.0)


def eigenvalues_dense(H: SparseHamiltonian, cap: int = DENSE_CAP) -> np.ndarray:
    if H.n > cap:
        raise DenseCapError(f"matrix order {H.n} exceeds dense cap {cap}")
    if H.bandwidth == 0:
        return np.sort(H.diagonal)
    if H.bandwidth == 1 and H.n > 1:
        return sla.eigvalsh_tridiagonal(H.diagonal, H.offdiagonal())
    return np.linalg.eigvalsh(H.toarray())


def eigenvalues_in_window(H: SparseHamiltonian, a: float, b: float) -> np.ndarray:
    """Sorted eigenvalues in (a, b]; bisection for tridiagonal matrices."""
    if H.bandwidth == 0:
        d = H.diagonal
        return np.sort(d[(d > a) & (d <= b)])
    if H.bandwidth == 1 and H.n > 1:
        return sla.eigvalsh_tridiagonal(H.diagonal, H.offdiagonal(), select="v",
                                        select_range=(a, b))
    ev = eigenvalues_dense(H)
    return ev[(ev > a) & (ev <= b)]


# -- Sturm recurrence --------------------------------------------------------

def sturm_pivots(diag, off2, x) -> np.ndarray:
    """Pivots q_i of the LDL^T factorization of T - x for symmetric tridiagonal T.

    ``diag`` has shape (..., n); ``off2`` holds the squared off-diagonal,
    shape (n-1,) or (..., n-1); ``x`` broadcasts against ``diag[..., 0]``.
    Zero pivots propagate as inf/nan and must be screened by the caller.
    """
    diag = np.asarray(diag, dtype=float)
    off2 = np.asarray(off2, dtype=float)
    x = np.asarray(x, dtype=float)
    n = diag.shape[-1]
    q = np.empty(np.broadcast_shapes(diag.shape, x.shape + (1,)))
    with np.errstate(divide="ignore", invalid="ignore"):
        prev = diag[..., 0] - x
        q[..., 0] = prev
        for i in range(1, n):
            b2 = off2[..., i - 1]
            # a cut bond (b2 == 0) restarts the recurrence, even after a zero pivot
            step = np.where(b2 == 0, 0.0, b2 / prev)
            prev = diag[..., i] - x - step
            q[..., i] = prev
    return q


def sturm_count(diag, off2, x) -> tuple[np.ndarray, np.ndarray]:
    """Number of eigenvalues < x, and a flag marking zero (unusable) pivots."""
    q = sturm_pivots(diag, off2, x)
    return np.count_nonzero(q < 0, axis=-1), ~np.all(np.isfinite(q) & (q != 0), axis=-1)


def _sturm_below_scalar(diag, off2, x) -> int | None:
    # plain-float loop; much faster than numpy for a single matrix
    count = 0
    q = diag[0] - x
    if q == 0:
        return None
    if q < 0:
        count += 1
    for i in range(1, len(diag)):
        b2 = off2[i - 1]
        q = diag[i] - x - (b2 / q if b2 else 0.0)
        if q == 0:
            return None
        if q < 0:
            count += 1
    return count


# -- block LDL^T --------------------------------------------------------------

def _block_below(H: SparseHamiltonian, x: float) -> int | None:
    size = max(H.bandwidth, 1)
    diag, coupling = H.band_blocks(size)
    tol = _BLOCK_PIVOT_TOL * max(H.norm_inf, 1.0)
    count = 0
    schur = None
    for i, D in enumerate(diag):
        S = D - x * np.eye(D.shape[0])
        if schur is not None:
            S = S - schur
        S = 0.5 * (S + S.T)
        w, V = np.linalg.eigh(S)
        if np.min(np.abs(w)) <= tol:
            return None
        count += int(np.count_nonzero(w < 0))
        if i < len(coupling):
            B = coupling[i]
            VB = V.T @ B
            schur = VB.T @ (VB / w[:, None])
    return count


def _ldl_below(H: SparseHamiltonian, x: float) -> int | None:
    if H.n > DENSE_CAP:
        raise DenseCapError(f"matrix order {H.n} exceeds dense cap {DENSE_CAP}")
    A = H.toarray() - x * np.eye(H.n)
    _, D, _ = sla.ldl(A, lower=True)
    w = np.linalg.eigvalsh(D)
    if np.min(np.abs(w)) <= _BLOCK_PIVOT_TOL * max(H.norm_inf, 1.0):
        return None
    return int(np.count_nonzero(w < 0))


def _below_once(H: SparseHamiltonian, x: float, method: str) -> int | None:
    if method == "auto":
        method = {0: "direct", 1: "sturm"}.get(H.bandwidth, "block")
    if method == "direct":
        if H.bandwidth:
            raise ValueError("direct counting needs a diagonal matrix")
        d = H.diagonal
        if np.any(d == x):
            return None
        return int(np.count_nonzero(d < x))
    if method == "sturm":
        if H.bandwidth > 1:
            raise ValueError("Sturm counting needs a tridiagonal matrix")
        off2 = H.offdiagonal() ** 2 if H.n > 1 else np.zeros(0)
        return _sturm_below_scalar(H.diagonal.tolist(), off2.tolist(), float(x))
    if method == "block":
        return _block_below(H, x)
    if method == "ldl":
        return _ldl_below(H, x)
    raise ValueError(f"unknown counting method {method!r}")


def count_at_or_below(H: SparseHamiltonian, x: float, method: str = "auto") -> tuple[int, float]:
    """#{eigenvalues <= x} and the jitter that was needed (0.0 if none)."""
    if x == np.inf:
        return H.n, 0.0
    if x == -np.inf:
        return 0, 0.0
    if method in ("auto", "direct") and H.bandwidth == 0:
        # exact comparison, no factorization to break down
        return int(np.count_nonzero(H.diagonal <= x)), 0.0
    step = jitter_step(H.norm_inf)
    for k in range(MAX_RETRIES + 1):
        shift = x + k * step
        c = _below_once(H, shift, method)
        if c is not None:
            if k:
                log.debug("zero pivot at shift %r; counted at %r", x, shift)
            return c, shift - x
    raise SpectralTieError(f"zero pivot at x = {x!r} persisted through {MAX_RETRIES} jittered retries")


def count_in_window(H: SparseHamiltonian, w: SpectralWindow, method: str = "auto",
                    full_output: bool = False):
    """Exact number of eigenvalues in (a, b].

    With ``full_output=True`` returns ``(count, jitter)`` where ``jitter``
    is the largest shift perturbation applied.
    """
    if not isinstance(w, SpectralWindow):
        w = SpectralWindow(*w)
    if w.a == w.b:
        return (0, 0.0) if full_output else 0
    hi, jb = count_at_or_below(H, w.b, method)
    lo, ja = count_at_or_below(H, w.a, method)
    count = hi - lo
    return (count, max(ja, jb)) if full_output else count


def batched_window_counts(diag, off2, a: float, b: float, norm: float,
                          block_starts=None):
    """Window counts in (a, b] for a batch of tridiagonal matrices sharing ``off2``.

    ``diag`` has shape (batch, n).  With ``block_starts`` (start index of each
    diagonal block of a direct sum encoded by zeros in ``off2``) the per-block
    counts are returned as well, shape (batch, n_blocks).  Returns
    ``(counts, per_block, jittered_rows)``.
    """
    diag = np.atleast_2d(np.asarray(diag, dtype=float))
    batch = diag.shape[0]
    counts = np.zeros(batch, dtype=np.int64)
    per_block = None if block_starts is None else np.zeros((batch, len(block_starts)), dtype=np.int64)
    pending = np.arange(batch)
    jittered = np.zeros(batch, dtype=bool)
    step = jitter_step(norm)
    for k in range(MAX_RETRIES + 1):
        if pending.size == 0:
            break
        sub = diag[pending]
        shifts = np.array([[b + k * step], [a + k * step]])
        q = sturm_pivots(sub[None, :, :], off2, shifts)
        bad = ~np.all(np.isfinite(q) & (q != 0), axis=-1).any(axis=0)
        neg = q < 0
        ok = ~bad
        rows = pending[ok]
        counts[rows] = np.count_nonzero(neg[0, ok], axis=-1) - np.count_nonzero(neg[1, ok], axis=-1)
        if per_block is not None:
            # reduceat on bool would OR, not add
            neg_i = neg[:, ok].astype(np.int32)
            per_block[rows] = (np.add.reduceat(neg_i[0], block_starts, axis=-1)
                               - np.add.reduceat(neg_i[1], block_starts, axis=-1))
        if k:
            jittered[rows] = True
        pending = pending[bad]
    if pending.size:
        raise SpectralTieError(f"{pending.size} realizations kept hitting zero pivots")
    return counts, per_block, jittered


# -- Green functions ----------------------------------------------------------

def _shifted(H: SparseHamiltonian, z: complex) -> sp.csc_matrix:
    return (H.matrix.astype(complex) - z * sp.identity(H.n, dtype=complex, format="csr")).tocsc()


def resolvent_columns(H: SparseHamiltonian, z: complex, sources, tol: float | None = None) -> np.ndarray:
    """Columns G(z; ., m) = (H - z)^{-1} delta_m for each m in ``sources``.

    Direct sparse LU by default (one refinement step if the residual exceeds
    1e-10); with ``tol`` set, restarted GMRES to that relative tolerance.
    """
    if not complex(z).imag > 0:
        raise ValueError(f"Green function needs Im z > 0, got z = {z}")
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    A = _shifted(H, z)
    rhs = np.zeros((H.n, sources.size), dtype=complex)
    rhs[sources, np.arange(sources.size)] = 1.0
    if tol is None:
        lu = spla.splu(A)
        x = lu.solve(rhs)
        r = rhs - A @ x
        if np.max(np.abs(r)) > GREEN_RESIDUAL:
            x = x + lu.solve(r)
            r = rhs - A @ x
        res = float(np.max(np.linalg.norm(r, axis=0)))
        if res > GREEN_RESIDUAL:
            raise SolverError(f"resolvent solve residual {res:.3e} exceeds {GREEN_RESIDUAL}", res)
        return x
    cols = []
    for j in range(sources.size):
        x, info = spla.gmres(A, rhs[:, j], rtol=tol, atol=0.0, restart=min(H.n, 200),
                             maxiter=10 * H.n)
        if info != 0:
            res = float(np.linalg.norm(rhs[:, j] - A @ x))
            raise SolverError(f"GMRES did not converge (info={info}, residual {res:.3e})", res)
        cols.append(x)
    return np.stack(cols, axis=1)


def green_entry(H: SparseHamiltonian, q: GreenQuery, tol: float | None = None) -> complex:
    """<delta_n, (H - z)^{-1} delta_m>."""
    col = resolvent_columns(H, q.z, [q.m], tol=tol)
    return complex(col[q.n, 0])


def check_perturbation_identity(H: SparseHamiltonian, geom: CubeGeometry, p: int, z: complex,
                                n, outer=None, tol: float | None = None) -> float:
    """|LHS - RHS| of the geometric resolvent identity

        G(z; n, n) = G^{C_p}(z; n, n) - sum_{(m,k)} G^{C_p}(z; n, m) H(m, k) G(z; k, n)

    over boundary pairs m in C_p, k outside C_p.  The hopping entry H(m, k)
    carries the sign; for hopping -1 this is the familiar "+" form.

    ``n`` is a site coordinate (or storage index) inside int(C_p).  ``outer``
    optionally replaces the box operator by a larger one: a pair
    ``(H_outer, geom_outer)`` whose box contains ``geom``'s box and whose
    potential agrees on it.
    """
    if not complex(z).imag > 0:
        raise ValueError("need Im z > 0")
    coords = geom.sites
    n_idx = int(n) if np.ndim(n) == 0 else geom.index_of(n)
    if n_idx not in set(geom.interior(p).tolist()):
        raise ValueError(f"site {coords[n_idx].tolist()} is not in the interior of block {p}")
    n_coord = coords[n_idx]
    big_H, big_geom = (H, geom) if outer is None else outer
    if outer is not None and big_geom.L < geom.L:
        raise ValueError("outer box must contain the inner box")
    block = geom.block_sites(p)
    block_big = big_geom.index_of(coords[block])
    H_block = SparseHamiltonian(big_H.matrix[block_big][:, block_big])
    local = {int(g): i for i, g in enumerate(block_big)}
    n_big = big_geom.index_of(n_coord)

    g_block = resolvent_columns(H_block, z, [local[n_big]], tol=tol)[:, 0]
    g_big = resolvent_columns(big_H, z, [n_big], tol=tol)[:, 0]
    lhs = g_big[n_big]

    rhs = g_block[local[n_big]]
    for m_c, k_c in geom.boundary_pairs(p):
        if not big_geom.contains(k_c):
            continue
        m_i = big_geom.index_of(m_c)
        k_i = big_geom.index_of(k_c)
        hop = big_H.matrix[m_i, k_i]
        if hop:
            rhs -= g_block[local[m_i]] * hop * g_big[k_i]
    return float(abs(lhs - rhs))
