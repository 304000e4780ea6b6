"""Joint manifest/latent spectrum, partial coherence and spectral error curves."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .maxent import FixedStructureSolution
from .specpoly import FreqGrid, PseudoPoly, evaluate

logger = logging.getLogger(__name__)

__all__ = [
    "JointSpectrum",
    "assemble_joint",
    "partial_coherence",
    "coherence_from_inverse",
    "mean_magnitude",
    "spectral_errors",
    "write_curves",
    "write_coherence",
]


@dataclass(frozen=True)
class JointSpectrum:
    """Blocks of the joint inverse spectrum with ``Upsilon_l = I``.

    ``F`` is the ``l x m(n+1)`` matrix with ``Upsilon_lm(theta) = F Delta(theta)^*``,
    i.e. ``F = H^{1/2} G`` after dropping null directions of ``H``.
    """

    sigma: PseudoPoly
    F: np.ndarray
    m: int
    n: int
    dropped: int = 0

    @property
    def l(self) -> int:
        return self.F.shape[0]

    def upsilon_lm(self, grid: FreqGrid) -> np.ndarray:
        """``F Delta^*`` on the grid, shape ``(N_f, l, m)``."""
        theta = grid.theta
        Fj = self.F.reshape(self.l, self.n + 1, self.m)
        phase = np.exp(-1j * np.outer(theta, np.arange(self.n + 1)))  # (N_f, n+1)
        return np.einsum("kj,ajb->kab", phase, Fj)

    def lam_values(self, grid: FreqGrid) -> np.ndarray:
        Y = self.upsilon_lm(grid)
        return np.conj(np.swapaxes(Y, 1, 2)) @ Y

    def inverse_values(self, grid: FreqGrid) -> np.ndarray:
        """Joint ``Phi^{-1}`` on the grid, shape ``(N_f, m+l, m+l)``."""
        S = evaluate(self.sigma, grid)
        Y = self.upsilon_lm(grid)
        k = self.m + self.l
        out = np.zeros((grid.size, k, k), dtype=complex)
        out[:, : self.m, : self.m] = S
        out[:, self.m :, : self.m] = Y
        out[:, : self.m, self.m :] = np.conj(np.swapaxes(Y, 1, 2))
        out[:, self.m :, self.m :] = np.eye(self.l)
        return out

    def values(self, grid: FreqGrid) -> np.ndarray:
        """Joint ``Phi`` on the grid."""
        return np.linalg.inv(self.inverse_values(grid))

    def manifest_values(self, grid: FreqGrid) -> np.ndarray:
        """Manifest block of ``Phi`` computed blockwise as ``(Sigma - Lambda)^{-1}``."""
        return np.linalg.inv(evaluate(self.sigma, grid) - self.lam_values(grid))


def assemble_joint(sol: FixedStructureSolution, null_tol: float = 1e-10) -> JointSpectrum:
    """Joint spectrum of a fitted model; null directions of ``H`` are dropped."""
    G = sol.structure.G
    H = sol.H
    m, n = sol.m, sol.n
    if H.shape[0]:
        w, Q = np.linalg.eigh(0.5 * (H + H.T))
        if w[0] < -null_tol * max(1.0, float(w[-1])):
            raise ValueError("latent scaling must be positive semidefinite")
        keep = w > null_tol * max(1.0, float(w[-1]))
        F = (np.sqrt(w[keep])[:, None] * Q[:, keep].T) @ G
        dropped = int(np.sum(~keep))
        if dropped:
            logger.info("dropped %d latent direction(s) with zero power", dropped)
    else:
        F = np.zeros((0, m * (n + 1)))
        dropped = 0
    return JointSpectrum(sol.sigma(), F, m, n, dropped)


def coherence_from_inverse(K: np.ndarray) -> np.ndarray:
    """Normalize inverse-spectrum samples to unit diagonal."""
    d = np.real(np.diagonal(K, axis1=-2, axis2=-1))
    if np.any(d <= 0):
        raise ValueError("inverse spectrum has a non-positive diagonal entry")
    s = 1.0 / np.sqrt(d)
    C = K * s[..., :, None] * s[..., None, :]
    idx = np.arange(K.shape[-1])
    C[..., idx, idx] = 1.0
    return C


def partial_coherence(J: JointSpectrum, grid: Optional[FreqGrid] = None) -> np.ndarray:
    """Partial coherence of the joint process, shape ``(N_f, m+l, m+l)``."""
    grid = grid or FreqGrid()
    return coherence_from_inverse(J.inverse_values(grid))


def mean_magnitude(C: np.ndarray) -> np.ndarray:
    """Frequency average of ``|C(theta)|``, entrywise."""
    return np.mean(np.abs(C), axis=0)


def _sup_norm(values: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(values, ord=2, axis=(1, 2))))


def spectral_errors(
    truth: tuple[PseudoPoly, PseudoPoly],
    est: tuple[PseudoPoly, PseudoPoly],
    grid: Optional[FreqGrid] = None,
) -> dict[str, Optional[np.ndarray]]:
    """Normalized error curves ``e_sigma`` and ``e_lambda``.

    Each curve is the pointwise spectral-norm error divided by the sup over the
    grid of the spectral norm of the truth; a zero truth gives ``None``.
    """
    grid = grid or FreqGrid()
    out: dict[str, Optional[np.ndarray]] = {}
    for name, t, e in (("sigma", truth[0], est[0]), ("lambda", truth[1], est[1])):
        if t.m != e.m:
            raise ValueError("dimension mismatch between truth and estimate")
        T = evaluate(t, grid)
        Ev = evaluate(e, grid)
        norm = _sup_norm(T)
        if norm == 0.0:
            out[name] = None
            continue
        out[name] = np.linalg.norm(T - Ev, ord=2, axis=(1, 2)) / norm
    return out


def write_curves(path, grid: FreqGrid, columns: dict[str, Optional[np.ndarray]]) -> None:
    """CSV with a ``theta`` column and one column per curve (absent curves skipped)."""
    cols = {k: np.asarray(v) for k, v in columns.items() if v is not None}
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta"] + list(cols))
        for i, th in enumerate(grid.theta):
            w.writerow([repr(float(th))] + [repr(float(v[i])) for v in cols.values()])


def write_coherence(path, grid: FreqGrid, C: np.ndarray, labels: Sequence[str]) -> None:
    """Magnitudes ``|C_kh(theta)|`` for every pair ``k < h``, one column per pair."""
    k = C.shape[-1]
    pairs = [(a, b) for a in range(k) for b in range(a + 1, k)]
    cols = {f"{labels[a]}~{labels[b]}": np.abs(C[:, a, b]) for a, b in pairs}
    write_curves(path, grid, cols)
