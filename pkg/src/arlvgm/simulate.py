"""Ground-truth AR latent-variable models, sampling and spectral factorization.

A joint process ``z = (x, y)`` with ``m`` manifest and ``l`` latent components
obeys ``sum_j A_j z(t - j) = e(t)`` with unit white Gaussian ``e``.  Its inverse
spectrum is ``A(theta)^* A(theta)`` where ``A(theta) = sum_j A_j e^{-ij theta}``;
the manifest inverse spectrum is the Schur complement ``Sigma - Lambda``.

:func:`gen_model` builds ``A`` so that

* each manifest row ``r`` touches the manifest columns ``{r, partner(r)}`` only,
  so the manifest block ``Sigma`` has the drawn sparsity pattern;
* latent columns are nonzero at lag 0 only and every manifest row loads on
  them, so ``Lambda = Delta L Delta^*`` with ``L`` of rank ``l`` and dense;
* the latent rows are the identity at lag 0 (white latent innovations).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .covariance import DataMatrix
from .specpoly import (
    BlockRow,
    EdgeSet,
    FreqGrid,
    PseudoPoly,
    adjoint_d,
    delta_quadratic,
    evaluate,
    is_psd_on_grid,
    lags_of,
    toeplitz,
)

__all__ = [
    "TrueModel",
    "FactorizationError",
    "spectral_factor",
    "companion_radius",
    "gen_model",
    "sample",
    "default_burn_in",
]


class FactorizationError(RuntimeError):
    """Spectral factorization failed to converge (spectrum too close to singular)."""


def _blocks(A: np.ndarray, n: int) -> np.ndarray:
    """Split a block row ``[A_0 ... A_n]`` into an array of shape ``(n+1, r, c)``."""
    r, width = A.shape
    c = width // (n + 1)
    return A.reshape(r, n + 1, c).transpose(1, 0, 2)


def companion_radius(A: np.ndarray, n: int) -> float:
    """Spectral radius of the companion matrix of ``sum_j A_j z(t-j) = e(t)``."""
    Aj = _blocks(A, n)
    k = Aj.shape[1]
    if n == 0:
        return 0.0
    A0inv = np.linalg.inv(Aj[0])
    C = np.zeros((k * n, k * n))
    for j in range(1, n + 1):
        C[:k, (j - 1) * k : j * k] = -A0inv @ Aj[j]
    C[k:, :-k] = np.eye(k * (n - 1))
    return float(np.max(np.abs(np.linalg.eigvals(C))))


def spectral_factor(
    P: PseudoPoly,
    tol: float = 1e-8,
    start_order: int = 16,
    max_order: int = 4096,
) -> np.ndarray:
    """Minimum-phase factor ``A`` with ``delta_quadratic(A^T A) = P``.

    Bauer's method: the Cholesky factor of a large block-Toeplitz section of
    the coefficients of ``P`` has a last block row that converges to the
    factor.  The section is doubled until the round trip error is below
    ``tol`` relative to ``max |C_j|``.
    """
    m, n = P.m, P.n
    scale = max(float(np.abs(P.coeffs).max()), 1e-300)
    K = max(start_order, 2 * n + 2)
    while K <= max_order:
        blocks = np.zeros((K + 1, m, m))
        blocks[: n + 1] = P.coeffs
        try:
            L = np.linalg.cholesky(toeplitz(BlockRow(blocks)))
        except np.linalg.LinAlgError:
            raise FactorizationError("spectrum is not positive definite") from None
        last = L[K * m :]
        A = np.concatenate([last[:, (K - d) * m : (K - d + 1) * m].T for d in range(n + 1)], axis=1)
        err = float(np.abs(delta_quadratic(A.T @ A, m).coeffs - P.coeffs).max())
        if err <= tol * scale:
            if companion_radius(A, n) >= 1.0:
                raise FactorizationError("factor is not minimum phase")
            return A
        K *= 2
    raise FactorizationError(f"no convergence up to truncation order {max_order} (error {err:.3g})")


@dataclass(frozen=True)
class TrueModel:
    """Joint AR coefficients plus the derived manifest quantities.

    ``A`` has shape ``(m + l, (m + l)(n + 1))``; the first ``m`` coordinates
    are manifest.
    """

    m: int
    l: int
    n: int
    A: np.ndarray
    seed: Optional[int] = None

    @property
    def k(self) -> int:
        return self.m + self.l

    def blocks(self) -> np.ndarray:
        return _blocks(self.A, self.n)

    def joint_inverse(self) -> PseudoPoly:
        return delta_quadratic(self.A.T @ self.A, self.k)

    def _manifest_factor(self) -> np.ndarray:
        return np.concatenate([Aj[:, : self.m] for Aj in self.blocks()], axis=1)

    def sigma_matrix(self) -> np.ndarray:
        """``X_Sigma`` with ``Sigma = Delta X_Sigma Delta^*``."""
        Am = self._manifest_factor()
        return Am.T @ Am

    def latent_factor(self) -> np.ndarray:
        """``g`` with ``Upsilon_lm = g Delta^*``; needs latent columns at lag 0 only."""
        Aj = self.blocks()
        if self.l and np.any(Aj[1:, :, self.m :] != 0):
            raise ValueError("latent columns must vanish at positive lags")
        C = Aj[0][:, self.m :]
        return C.T @ self._manifest_factor()

    def L_matrix(self) -> np.ndarray:
        """``L`` with ``Lambda = Delta L Delta^*``."""
        s = self.m * (self.n + 1)
        if self.l == 0:
            return np.zeros((s, s))
        C = self.blocks()[0][:, self.m :]
        g = self.latent_factor()
        return g.T @ np.linalg.solve(C.T @ C, g)

    def sigma(self) -> PseudoPoly:
        return delta_quadratic(self.sigma_matrix(), self.m)

    def lam(self) -> PseudoPoly:
        return delta_quadratic(self.L_matrix(), self.m)

    def manifest_inverse(self) -> PseudoPoly:
        return self.sigma() - self.lam()

    def edges(self, rel_tol: float = 1e-9) -> EdgeSet:
        D = np.abs(adjoint_d(self.sigma_matrix(), self.m).blocks).max(axis=0)
        D = np.maximum(D, D.T)
        return EdgeSet.from_mask(D > rel_tol * D.max())

    def G(self) -> np.ndarray:
        """Orthonormal row basis of the latent subspace (rows of ``L``)."""
        L = self.L_matrix()
        w, V = np.linalg.eigh(L)
        return V[:, ::-1][:, : self.l].T

    def spectral_radius(self) -> float:
        return companion_radius(self.A, self.n)

    def manifest_lags(self, n: int, grid: Optional[FreqGrid] = None) -> BlockRow:
        """True lags ``R_0 ... R_n`` of the manifest process, from the grid spectrum."""
        grid = grid or FreqGrid(max(4096, 4 * n + 4))
        Phi = np.linalg.inv(evaluate(self.manifest_inverse(), grid))
        return lags_of(Phi, grid, n)

    def check(self, grid: Optional[FreqGrid] = None) -> None:
        """Assert stability and positivity of ``Sigma - Lambda`` and ``Lambda``."""
        grid = grid or FreqGrid()
        if not self.spectral_radius() < 1.0:
            raise ValueError("model is not stable")
        ok, worst = is_psd_on_grid(self.manifest_inverse(), grid)
        if not (ok and worst > 0):
            raise ValueError("Sigma - Lambda is not positive definite on the grid")
        ok, _ = is_psd_on_grid(self.lam(), grid, tol=1e-10)
        if not ok:
            raise ValueError("Lambda is not positive semidefinite on the grid")

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "l": self.l,
            "n": self.n,
            "seed": self.seed,
            "A": [[[float(v) for v in row] for row in Aj] for Aj in self.blocks()],
            "edges": [list(p) for p in self.edges().sorted_pairs()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrueModel":
        blocks = np.array(obj["A"], dtype=float)
        A = np.concatenate(list(blocks), axis=1)
        return cls(int(obj["m"]), int(obj["l"]), int(obj["n"]), A, obj.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "TrueModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _draw_pattern(m: int, n_edges: int, rng: np.random.Generator) -> Optional[dict[int, int]]:
    """Random edges, each owned by one of its endpoints, one edge per owner.

    Returns ``owner -> partner`` or ``None`` when the draw cannot be owned.
    """
    pairs = [(k, h) for k in range(m) for h in range(k + 1, m)]
    chosen = [pairs[i] for i in rng.choice(len(pairs), size=n_edges, replace=False)]
    owner: dict[int, tuple[int, int]] = {}

    def place(edge, seen) -> bool:
        # augmenting path over owners
        for v in edge:
            if v in seen:
                continue
            seen.add(v)
            if v not in owner or place(owner[v], seen):
                owner[v] = edge
                return True
        return False

    for e in chosen:
        if not place(e, set()):
            return None
    return {v: (e[1] if e[0] == v else e[0]) for v, e in owner.items()}


def _uniform_signed(rng: np.random.Generator, lo: float, hi: float, size=None):
    return rng.uniform(lo, hi, size) * rng.choice([-1.0, 1.0], size)


def gen_model(
    m: int,
    l: int,
    n: int,
    edge_density: float,
    seed: int,
    max_tries: int = 200,
    partner_range: tuple[float, float] = (0.5, 0.9),
    lag_range: tuple[float, float] = (0.2, 0.5),
    loading_range: tuple[float, float] = (0.5, 1.0),
    max_radius: float = 0.95,
    normalize: str = "precision",
) -> TrueModel:
    """Random stable joint AR model with a sparse manifest graph and ``l`` latents.

    The number of edges is ``round(edge_density * m (m - 1) / 2)``.  Each edge
    is carried by the row of one of its endpoints, so at most ``m`` edges are
    representable.  Manifest columns are rescaled to unit stationary variance
    (``normalize="variance"``) or so that the constant coefficient of
    ``Sigma`` has unit diagonal (``normalize="precision"``).
    """
    if normalize not in ("variance", "precision"):
        raise ValueError(f"unknown normalization {normalize!r}")
    if not (0 <= l <= m and n >= 0 and 0.0 <= edge_density <= 1.0 and m >= 1):
        raise ValueError("need 0 <= l <= m, n >= 0, 0 <= edge_density <= 1")
    n_edges = int(round(edge_density * m * (m - 1) / 2))
    if n_edges > m:
        raise ValueError(f"{n_edges} edges requested but at most m={m} can be represented")
    rng = np.random.default_rng(seed)
    k = m + l
    for _ in range(max_tries):
        partner = _draw_pattern(m, n_edges, rng)
        if partner is None:
            continue
        Aj = np.zeros((n + 1, k, k))
        for r in range(m):
            Aj[0, r, r] = 1.0
            for j in range(1, n + 1):
                Aj[j, r, r] = _uniform_signed(rng, *lag_range)
            if r in partner:
                p = partner[r]
                Aj[0, r, p] = _uniform_signed(rng, *partner_range)
                for j in range(1, n + 1):
                    Aj[j, r, p] = _uniform_signed(rng, *lag_range)
            if l:
                Aj[0, r, m:] = _uniform_signed(rng, *loading_range, size=l)
        Aj[0, m:, m:] = np.eye(l)
        A = np.concatenate(list(Aj), axis=1)
        if abs(np.linalg.det(Aj[0])) < 1e-6 or companion_radius(A, n) >= max_radius:
            continue
        model = TrueModel(m, l, n, A, seed)
        if normalize == "variance":
            d = np.sqrt(np.diag(model.manifest_lags(0)[0]))
        else:
            d = 1.0 / np.sqrt(np.diag(model.sigma().coeffs[0]))
        Aj[:, :, :m] = Aj[:, :, :m] * d[None, None, :]
        model = TrueModel(m, l, n, np.concatenate(list(Aj), axis=1), seed)
        expected = EdgeSet(m, frozenset(tuple(sorted((r, p))) for r, p in partner.items()))
        if model.edges() != expected:
            continue
        try:
            model.check()
        except ValueError:
            continue
        return model
    raise RuntimeError(f"no admissible model after {max_tries} draws")


def default_burn_in(model: TrueModel) -> int:
    rho = model.spectral_radius()
    return 10 * (model.n + 1) * int(math.ceil(1.0 / (1.0 - rho)))


def sample(model: TrueModel, N: int, burn_in: Optional[int] = None, seed: Optional[int] = None) -> DataMatrix:
    """Simulate the joint recursion and return ``N`` rows of the manifest part."""
    if burn_in is None:
        burn_in = default_burn_in(model)
    rng = np.random.default_rng(seed)
    n, k = model.n, model.k
    Aj = model.blocks()
    A0inv = np.linalg.inv(Aj[0])
    total = burn_in + N
    e = rng.standard_normal((total, k))
    z = np.zeros((total + n, k))  # n leading zeros as initial condition
    for t in range(total):
        acc = e[t].copy()
        for j in range(1, n + 1):
            acc -= Aj[j] @ z[n + t - j]
        z[n + t] = A0inv @ acc
    return DataMatrix(z[n + burn_in :, : model.m])
