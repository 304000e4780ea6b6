"""Block-Toeplitz algebra, matrix pseudo-polynomials and unit-circle quadrature.

Conventions
-----------
A first block row ``Y = [Y_0, Y_1, ..., Y_n]`` (each ``m x m``, ``Y_0``
symmetric) is stored as an array of shape ``(n + 1, m, m)``.  The same storage
holds the coefficients of a pseudo-polynomial

    P(theta) = C_0 + sum_{j>=1} exp(-i j theta) C_j + exp(i j theta) C_j^T,

so ``C_{-j} = C_j^T``.  The shift row ``Delta(theta) = [I, e^{i theta} I, ...,
e^{i n theta} I]`` turns a symmetric ``m(n+1)`` matrix ``X`` into the
pseudo-polynomial ``Delta X Delta^*`` whose coefficients are
``(D_0(X), D_1(X)/2, ..., D_n(X)/2)``, with ``D`` the adjoint of the
block-Toeplitz map.

Integrals over the circle use the normalized Lebesgue measure and are computed
as arithmetic means over a uniform grid, which is exact for trigonometric
polynomials of degree below the number of grid points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

__all__ = [
    "BlockRow",
    "PseudoPoly",
    "EdgeSet",
    "FreqGrid",
    "toeplitz",
    "adjoint_d",
    "delta_quadratic",
    "project_edges",
    "evaluate",
    "integrate",
    "lags_of",
    "is_psd_on_grid",
    "shift_row",
    "block_diag_embed",
]

SYMMETRY_TOL = 1e-8
DEFAULT_GRID_SIZE = 512


def _as_blocks(blocks) -> np.ndarray:
    arr = np.array(blocks, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected blocks of shape (n+1, m, m), got {arr.shape}")
    return arr


def _symmetrize_lead(arr: np.ndarray, what: str) -> np.ndarray:
    lead = arr[0]
    scale = max(1.0, float(np.max(np.abs(lead), initial=0.0)))
    if np.max(np.abs(lead - lead.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError(f"{what}: leading block is not symmetric")
    arr[0] = 0.5 * (lead + lead.T)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BlockRow:
    """First block row of a symmetric block-Toeplitz matrix (an element of M_{m,n})."""

    blocks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "blocks", _symmetrize_lead(_as_blocks(self.blocks), "BlockRow"))

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    @property
    def n(self) -> int:
        return self.blocks.shape[0] - 1

    def __getitem__(self, j):
        return self.blocks[j]

    def inner(self, other: "BlockRow") -> float:
        """Frobenius inner product ``tr(Y Z^T)``."""
        return float(np.sum(self.blocks * other.blocks))

    @classmethod
    def zeros(cls, m: int, n: int) -> "BlockRow":
        return cls(np.zeros((n + 1, m, m)))

    def as_row(self) -> np.ndarray:
        """The ``m x m(n+1)`` matrix ``[Y_0 ... Y_n]``."""
        return np.concatenate(list(self.blocks), axis=1)


@dataclass(frozen=True)
class PseudoPoly:
    """Matrix pseudo-polynomial ``C_0 + sum_j e^{-ij theta} C_j + e^{ij theta} C_j^T``."""

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _symmetrize_lead(_as_blocks(self.coeffs), "PseudoPoly"))

    @property
    def m(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = _eval_coeffs(self.coeffs, theta)
        return out

    def __add__(self, other: "PseudoPoly") -> "PseudoPoly":
        return PseudoPoly(_pad_add(self.coeffs, other.coeffs, 1.0))

    def __sub__(self, other: "PseudoPoly") -> "PseudoPoly":
        return PseudoPoly(_pad_add(self.coeffs, other.coeffs, -1.0))

    def __mul__(self, c: float) -> "PseudoPoly":
        return PseudoPoly(self.coeffs * float(c))

    __rmul__ = __mul__

    @classmethod
    def constant(cls, c0) -> "PseudoPoly":
        return cls(np.asarray(c0, dtype=float)[None])

    @classmethod
    def from_lags(cls, lags: BlockRow) -> "PseudoPoly":
        return cls(lags.blocks.copy())


def _pad_add(a: np.ndarray, b: np.ndarray, sign: float) -> np.ndarray:
    if a.shape[1:] != b.shape[1:]:
        raise ValueError("dimension mismatch")
    out = np.zeros((max(len(a), len(b)),) + a.shape[1:])
    out[: len(a)] += a
    out[: len(b)] += sign * b
    return out


@dataclass(frozen=True)
class EdgeSet:
    """Unordered off-diagonal index pairs; the diagonal is always implied."""

    m: int
    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        clean = set()
        for k, h in self.pairs:
            k, h = int(k), int(h)
            if k == h:
                continue
            if not (0 <= k < self.m and 0 <= h < self.m):
                raise ValueError(f"pair ({k}, {h}) out of range for m={self.m}")
            clean.add((min(k, h), max(k, h)))
        object.__setattr__(self, "pairs", frozenset(clean))

    @classmethod
    def complete(cls, m: int) -> "EdgeSet":
        return cls(m, frozenset(itertools.combinations(range(m), 2)))

    @classmethod
    def empty(cls, m: int) -> "EdgeSet":
        return cls(m, frozenset())

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "EdgeSet":
        mask = np.asarray(mask, dtype=bool)
        m = mask.shape[0]
        return cls(m, frozenset((k, h) for k, h in itertools.combinations(range(m), 2) if mask[k, h] or mask[h, k]))

    def complement(self) -> "EdgeSet":
        return EdgeSet(self.m, frozenset(itertools.combinations(range(self.m), 2)) - self.pairs)

    def mask(self) -> np.ndarray:
        """Boolean ``m x m`` mask, true on the diagonal and on both orderings of each pair."""
        out = np.eye(self.m, dtype=bool)
        for k, h in self.pairs:
            out[k, h] = out[h, k] = True
        return out

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        k, h = pair
        return k == h or (min(k, h), max(k, h)) in self.pairs


@dataclass(frozen=True)
class FreqGrid:
    """Uniform grid ``theta_k = 2 pi k / N_f - pi`` on the unit circle."""

    size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("grid needs at least two points")

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.size) / self.size - np.pi

    def check_degree(self, n: int) -> None:
        if self.size < 2 * n + 2:
            raise ValueError(f"grid of {self.size} points cannot integrate degree-{n} polynomials exactly")


# --------------------------------------------------------------------------
# Block-Toeplitz map and its adjoint


def toeplitz(Y: BlockRow) -> np.ndarray:
    """Symmetric block-Toeplitz matrix with first block row ``Y``."""
    m, n = Y.m, Y.n
    out = np.zeros((m * (n + 1), m * (n + 1)))
    for i in range(n + 1):
        for j in range(i, n + 1):
            blk = Y.blocks[j - i]
            out[i * m:(i + 1) * m, j * m:(j + 1) * m] = blk
            if j > i:
                out[j * m:(j + 1) * m, i * m:(i + 1) * m] = blk.T
    return out


def _split_blocks(X: np.ndarray, m: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    size = X.shape[0]
    if X.ndim != 2 or X.shape[1] != size or size % m:
        raise ValueError(f"matrix of shape {X.shape} is not a square array of {m}x{m} blocks")
    p = size // m
    return X.reshape(p, m, p, m).transpose(0, 2, 1, 3)


def adjoint_d(X: np.ndarray, m: int) -> BlockRow:
    """Adjoint of :func:`toeplitz`: ``D_0 = sum_h X_hh``, ``D_j = 2 sum_h X_{h,h+j}``."""
    blocks = _split_blocks(X, m)
    p = blocks.shape[0]
    out = np.empty((p, m, m))
    out[0] = sum(blocks[h, h] for h in range(p))
    out[0] = 0.5 * (out[0] + out[0].T)
    for j in range(1, p):
        out[j] = 2.0 * sum(blocks[h, h + j] for h in range(p - j))
    return BlockRow(out)


def delta_quadratic(X: np.ndarray, m: int) -> PseudoPoly:
    """Coefficients of ``Delta X Delta^*`` for symmetric ``X``."""
    d = adjoint_d(X, m).blocks.copy()
    d[1:] *= 0.5
    return PseudoPoly(d)


def block_diag_embed(P: Union[PseudoPoly, BlockRow]) -> np.ndarray:
    """A symmetric ``X`` with ``delta_quadratic(X) == P``.

    ``C_0`` goes in the first diagonal block and each ``C_j`` (with its
    transpose) in the off-diagonal block ``(0, j)``; this is the witness that
    ``delta_quadratic`` is onto.
    """
    coeffs = P.coeffs if isinstance(P, PseudoPoly) else P.blocks
    p, m = coeffs.shape[0], coeffs.shape[1]
    X = np.zeros((m * p, m * p))
    X[:m, :m] = coeffs[0]
    for j in range(1, p):
        X[:m, j * m:(j + 1) * m] = coeffs[j]
        X[j * m:(j + 1) * m, :m] = coeffs[j].T
    return X


def project_edges(P, E: EdgeSet, keep_complement: bool = False):
    """Zero the entries outside ``E`` (or inside it when ``keep_complement``).

    With ``keep_complement`` the diagonal is zeroed as well, since the
    complement only ranges over off-diagonal pairs.
    """
    mask = E.mask()
    if keep_complement:
        mask = ~mask
    if isinstance(P, PseudoPoly):
        return PseudoPoly(P.coeffs * mask)
    if isinstance(P, BlockRow):
        return BlockRow(P.blocks * mask)
    arr = np.asarray(P)
    return arr * mask


# --------------------------------------------------------------------------
# Frequency-domain evaluation


def shift_row(theta: float, m: int, n: int) -> np.ndarray:
    """``Delta(theta) = [I, e^{i theta} I, ..., e^{i n theta} I]``."""
    return np.concatenate([np.exp(1j * j * theta) * np.eye(m) for j in range(n + 1)], axis=1)


def _eval_coeffs(coeffs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    p = coeffs.shape[0]
    out = np.broadcast_to(coeffs[0].astype(complex), (len(theta),) + coeffs.shape[1:]).copy()
    for j in range(1, p):
        z = np.exp(-1j * j * theta)[:, None, None]
        out += z * coeffs[j] + np.conj(z) * coeffs[j].T
    return out


def evaluate(P: PseudoPoly, grid: FreqGrid) -> np.ndarray:
    """Values of ``P`` at every grid point, shape ``(N_f, m, m)``."""
    vals = _eval_coeffs(P.coeffs, grid.theta)
    # exact Hermitian symmetry
    return 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))


def integrate(values: np.ndarray) -> np.ndarray:
    """Normalized-measure integral of grid samples (mean over the first axis)."""
    return np.mean(np.asarray(values), axis=0)


def lags_of(values: np.ndarray, grid: FreqGrid, n: int) -> BlockRow:
    """Covariance lags ``R_j = int e^{ij theta} Phi`` of a spectrum sampled on ``grid``.

    This is the block row ``int Phi Delta``.
    """
    theta = grid.theta
    out = np.empty((n + 1,) + values.shape[1:])
    for j in range(n + 1):
        out[j] = integrate(np.exp(1j * j * theta)[:, None, None] * values).real
    return BlockRow(out)


def is_psd_on_grid(P: PseudoPoly, grid: FreqGrid, tol: float = 0.0) -> tuple[bool, float]:
    """Whether ``P(theta_k)`` is positive semidefinite (to ``-tol``) at every grid point."""
    worst = float(np.min(np.linalg.eigvalsh(evaluate(P, grid))))
    return worst >= -tol, worst


def inner_grid(F: np.ndarray, G: np.ndarray) -> float:
    """``tr int F G^*`` for two grid-sampled matrix functions."""
    return float(np.real(np.mean(np.einsum("kab,kab->k", F, np.conj(G)))))


def iter_pairs(m: int) -> Iterable[tuple[int, int]]:
    return itertools.combinations(range(m), 2)
