"""Cube geometry, block partitions and finite-volume Hamiltonians.

Sites of the box {-L, ..., L}^d are stored in lexicographic (C) order, so a
nearest-neighbour Hamiltonian is banded with bandwidth (2L+1)^(d-1).  The box
is cut into N^d blocks by splitting (-L-1, L]^d into equal half-open cubes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

HOPPINGS = ("laplacian_offdiag", "none")
_HOPPING_ALIASES = {"laplacian": "laplacian_offdiag", "laplacian_offdiag": "laplacian_offdiag",
                    "none": "none"}


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleParams:
    """Block count per side ``n_blocks_per_side`` and interior margin ``interior_margin``.

    ``mode`` is ``"paper"`` when both were derived from (epsilon, gamma, alpha)
    and ``"scaled"`` when supplied explicitly.
    """

    L: int
    d: int
    n_blocks_per_side: int
    interior_margin: int
    mode: str = "scaled"
    epsilon: float | None = None
    gamma: float | None = None
    alpha: float | None = None

    @property
    def block_side(self) -> float:
        return (2 * self.L + 1) / self.n_blocks_per_side

    @property
    def valid(self) -> bool:
        return (self.n_blocks_per_side >= 1 and self.interior_margin >= 0
                and self.block_side > 2 * self.interior_margin + 1)

    @property
    def reason(self) -> str:
        """Empty when valid, otherwise the failing inequality spelled out."""
        if self.valid:
            return ""
        return (f"block side (2L+1)/N_L = {self.block_side:.4g} is not > 2 l_L + 1 = "
                f"{2 * self.interior_margin + 1}: interiors empty at this scale")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "L": self.L, "d": self.d,
                "n_blocks_per_side": self.n_blocks_per_side,
                "interior_margin": self.interior_margin, "epsilon": self.epsilon,
                "gamma": self.gamma, "alpha": self.alpha, "valid": self.valid}


def choose_scales(L: int, epsilon: float, alpha: float, gamma: float, d: int = 1) -> ScaleParams:
    """N_L = max(1, floor((2L+1)^(1-eps))), l_L = ceil(5d/(alpha gamma) ln(2L+1)).

    Check ``.valid`` on the result: at laptop sizes the margin usually
    swamps the block side.
    """
    if L < 1 or d < 1:
        raise GeometryError("L and d must be positive")
    if not 0 < epsilon < 1:
        raise GeometryError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < alpha <= 1:
        raise GeometryError(f"alpha must lie in (0, 1], got {alpha}")
    if not gamma > 0:
        raise GeometryError(f"gamma must be positive, got {gamma}")
    side = 2 * L + 1
    n_blocks = max(1, math.floor(side ** (1.0 - epsilon)))
    margin = math.ceil(5 * d / (alpha * gamma) * math.log(side))
    return ScaleParams(L, d, n_blocks, margin, "paper", epsilon, gamma, alpha)


def scaled_params(L: int, n_blocks: int, margin: int, d: int = 1) -> ScaleParams:
    if L < 1 or d < 1:
        raise GeometryError("L and d must be positive")
    if n_blocks < 1 or n_blocks > 2 * L + 1:
        raise GeometryError(f"need 1 <= N_L <= 2L+1, got N_L = {n_blocks}")
    if margin < 0:
        raise GeometryError("interior margin must be non-negative")
    return ScaleParams(L, d, int(n_blocks), int(margin), "scaled")


@dataclass(frozen=True, eq=False)
class CubeGeometry:
    """The box Lambda_L = {-L..L}^d and its block partition.

    ``block_ranges[axis]`` holds the N inclusive coordinate ranges along one
    axis; block ``p`` (0-based) is the product of the ranges picked by
    ``np.unravel_index(p, (N,) * d)``.
    """

    d: int
    L: int
    params: ScaleParams
    block_ranges: tuple = field(repr=False)
    block_of_site: np.ndarray = field(repr=False)
    blocks: list = field(repr=False)
    interiors: list = field(repr=False)

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def n_sites(self) -> int:
        return self.side ** self.d

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def sites(self) -> np.ndarray:
        """(n_sites, d) integer coordinates in storage order."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids - self.L

    def index_of(self, coords) -> np.ndarray | int:
        coords = np.asarray(coords, dtype=np.int64)
        if np.any(np.abs(coords) > self.L):
            raise GeometryError(f"site outside the box: {coords.tolist()}")
        idx = np.ravel_multi_index(tuple(np.moveaxis(coords + self.L, -1, 0)), self.shape)
        return int(idx) if np.ndim(idx) == 0 else idx

    def contains(self, coords) -> bool:
        return bool(np.all(np.abs(np.asarray(coords)) <= self.L))

    def block_box(self, p: int) -> list[tuple[int, int]]:
        self._check_block(p)
        multi = np.unravel_index(p, (self.params.n_blocks_per_side,) * self.d)
        return [self.block_ranges[ax][j] for ax, j in enumerate(multi)]

    def block_sites(self, p: int) -> np.ndarray:
        self._check_block(p)
        return self.blocks[p]

    def interior(self, p: int) -> np.ndarray:
        self._check_block(p)
        return self.interiors[p]

    def boundary_pairs(self, p: int) -> np.ndarray:
        """Coordinates of all pairs (m, k): m in C_p, k in Z^d outside C_p, |m-k| = 1.

        Returned as an (n_pairs, 2, d) array; ``k`` may lie outside the box.
        """
        box = self.block_box(p)
        pairs = []
        for ax in range(self.d):
            lo, hi = box[ax]
            for face, step in ((lo, -1), (hi, +1)):
                ranges = [np.arange(a, b + 1) for a, b in box]
                ranges[ax] = np.array([face])
                m = np.stack(np.meshgrid(*ranges, indexing="ij"), -1).reshape(-1, self.d)
                k = m.copy()
                k[:, ax] += step
                pairs.append(np.stack([m, k], axis=1))
        return np.concatenate(pairs)

    def summary(self) -> dict:
        return {"d": self.d, "L": self.L, "n_sites": self.n_sites, "n_blocks": self.n_blocks,
                **{k: v for k, v in self.params.to_dict().items() if k not in ("L", "d")}}

    def _check_block(self, p):
        if not 0 <= p < len(self.blocks):
            raise IndexError(f"block index {p} out of range [0, {len(self.blocks)})")


def _axis_ranges(L: int, n_blocks: int) -> list[tuple[int, int]]:
    # x lies in block j iff j < (x+L+1) N / (2L+1) <= j+1; exact integer test
    side = 2 * L + 1
    x = np.arange(-L, L + 1)
    j = -((-(x + L + 1) * n_blocks) // side) - 1
    ranges = []
    for b in range(n_blocks):
        members = x[j == b]
        if members.size == 0:
            raise GeometryError(f"block {b} along an axis is empty (N_L too large)")
        ranges.append((int(members[0]), int(members[-1])))
    return ranges


def partition_cube(d: int, L: int, params: ScaleParams | None = None) -> CubeGeometry:
    """Split Lambda_L into N_L^d blocks.  ``params=None`` gives a single block."""
    if params is None:
        params = scaled_params(L, 1, 0, d)
    if params.L != L or params.d != d:
        raise GeometryError("scale parameters were computed for a different (L, d)")
    if not params.valid:
        raise GeometryError(params.reason)
    n = params.n_blocks_per_side
    ranges = tuple(tuple(_axis_ranges(L, n)) for _ in range(d))
    side = 2 * L + 1
    coords = np.indices((side,) * d).reshape(d, -1) - L
    # per-axis block index of each site
    per_axis = []
    for ax in range(d):
        edges = np.array([hi for _, hi in ranges[ax]])
        per_axis.append(np.searchsorted(edges, coords[ax], side="left"))
    block_of_site = np.ravel_multi_index(tuple(per_axis), (n,) * d)
    order = np.argsort(block_of_site, kind="stable")
    counts = np.bincount(block_of_site, minlength=n ** d)
    blocks = np.split(order, np.cumsum(counts)[:-1])
    margin = params.interior_margin
    interiors = []
    for p, members in enumerate(blocks):
        multi = np.unravel_index(p, (n,) * d)
        dist = np.full(members.size, np.iinfo(np.int64).max)
        for ax, jb in enumerate(multi):
            lo, hi = ranges[ax][jb]
            c = coords[ax, members]
            dist = np.minimum(dist, np.minimum(c - lo, hi - c))
        # sup-norm distance to the inner boundary of a box
        interiors.append(members[dist > margin])
    return CubeGeometry(d, L, params, ranges, block_of_site, blocks, interiors)


def cube(d: int, L: int) -> CubeGeometry:
    return partition_cube(d, L, None)


@dataclass(frozen=True)
class HamiltonianSpec:
    hopping: str = "laplacian_offdiag"
    coupling: float = 1.0

    def __post_init__(self):
        if self.hopping not in _HOPPING_ALIASES:
            raise ValueError(f"hopping must be one of {HOPPINGS}, got {self.hopping!r}")
        object.__setattr__(self, "hopping", _HOPPING_ALIASES[self.hopping])
        if not self.coupling > 0:
            raise ValueError(f"coupling must be positive, got {self.coupling}")

    @property
    def hopping_norm(self) -> float:
        """Row-sum norm of H_0 in dimension 1 (multiply by d for general d)."""
        return 2.0 if self.hopping == "laplacian_offdiag" else 0.0


class SparseHamiltonian:
    """Real symmetric sparse matrix with cached band structure.

    ``bandwidth`` is max |i - j| over stored off-diagonal entries (0 for a
    diagonal matrix, 1 for a tridiagonal one).
    """

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError("Hamiltonian must be square")
        m.sum_duplicates()
        m.eliminate_zeros()
        self.matrix = m
        self._blocks = {}

    @classmethod
    def from_dense(cls, a) -> "SparseHamiltonian":
        a = np.asarray(a, dtype=float)
        if not np.array_equal(a, a.T):
            raise ValueError("matrix is not symmetric")
        return cls(sp.csr_matrix(a))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    @property
    def bandwidth(self) -> int:
        if not hasattr(self, "_bw"):
            coo = self.matrix.tocoo()
            self._bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        return self._bw

    @property
    def norm_inf(self) -> float:
        if not hasattr(self, "_norm"):
            self._norm = float(abs(self.matrix).sum(axis=1).max()) if self.n else 0.0
        return self._norm

    def offdiagonal(self) -> np.ndarray:
        """Superdiagonal of a tridiagonal matrix."""
        if self.bandwidth > 1:
            raise ValueError("matrix is not tridiagonal")
        return self.matrix.diagonal(1)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def band_blocks(self, size: int):
        """Dense diagonal blocks D_i and coupling blocks B_i = H[i, i+1] of a
        block-tridiagonal view with blocks of ``size`` rows."""
        if size not in self._blocks:
            n = self.n
            starts = list(range(0, n, size))
            diag, coupling = [], []
            m = self.matrix
            for i, s in enumerate(starts):
                e = min(s + size, n)
                diag.append(m[s:e, s:e].toarray())
                if e < n:
                    coupling.append(m[s:e, e:min(e + size, n)].toarray())
            self._blocks[size] = (diag, coupling)
        return self._blocks[size]

    def __repr__(self):
        return f"SparseHamiltonian(n={self.n}, bandwidth={self.bandwidth})"


def _hopping_matrix(geom_shape: tuple) -> sp.csr_matrix:
    d = len(geom_shape)
    n = int(np.prod(geom_shape))
    idx = np.arange(n).reshape(geom_shape)
    rows, cols = [], []
    for ax in range(d):
        lo = np.take(idx, np.arange(geom_shape[ax] - 1), axis=ax).ravel()
        hi = np.take(idx, np.arange(1, geom_shape[ax]), axis=ax).ravel()
        rows += [lo, hi]
        cols += [hi, lo]
    if not rows:
        return sp.csr_matrix((n, n))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))


def assemble_hamiltonian(spec: HamiltonianSpec, geom: CubeGeometry, omega) -> SparseHamiltonian:
    """H = H_0 + coupling * diag(omega) on the box, open boundary conditions."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (geom.n_sites,):
        raise ValueError(f"omega has shape {omega.shape}, expected ({geom.n_sites},)")
    diag = sp.diags(spec.coupling * omega)
    if spec.hopping == "none":
        return SparseHamiltonian(diag)
    return SparseHamiltonian(_hopping_matrix(geom.shape) + diag)


def restrict_to_block(H: SparseHamiltonian, geom: CubeGeometry, p: int) -> SparseHamiltonian:
    """Principal submatrix H_{C_p} on the sites of block ``p`` (0-based)."""
    idx = geom.block_sites(p)
    if H.n != geom.n_sites:
        raise ValueError("Hamiltonian and geometry sizes differ")
    return SparseHamiltonian(H.matrix[idx][:, idx])


def direct_sum(H: SparseHamiltonian, geom: CubeGeometry) -> SparseHamiltonian:
    """The block-diagonal operator (sum over p of H_{C_p}) in the original site order."""
    b = geom.block_of_site
    m = H.matrix.tocoo()
    keep = b[m.row] == b[m.col]
    return SparseHamiltonian(sp.csr_matrix((m.data[keep], (m.row[keep], m.col[keep])), shape=m.shape))


def severed_bonds(geom: CubeGeometry) -> int:
    """Number of nearest-neighbour bonds inside the box that cross block boundaries."""
    n = geom.params.n_blocks_per_side
    return geom.d * (n - 1) * geom.side ** (geom.d - 1)
