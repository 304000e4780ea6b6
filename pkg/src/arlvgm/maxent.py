"""Maximum-entropy AR fit restricted to an identified structure.

For an edge set ``E`` and a latent factor ``G`` the program

    min  -log det X_00 + <T(R), X>
    s.t. X >= 0,  H >= 0,  P_{E^c}(D(X + G^T H G)) = 0

is solved through its dual

    max  log det W + m
    s.t. T(R + S) >= blkdiag(W, 0),   G T(S) G^T >= 0,

where ``S`` is a hollow block row supported on the pairs outside ``E``.  The
fitted spectrum is the AR spectrum whose first ``n + 1`` lags are ``R + S``:
it matches ``R`` on ``E`` and the latent inequality holds by construction.
``X`` comes from the Yule-Walker equations of ``R + S`` and ``H`` from the
linear equations that zero ``D(X + G^T H G)`` outside ``E``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .covariance import CovSequence
from .ipm import AffineMatrix, BarrierProblem, SolverError, solve_barrier
from .slsolve import (
    LatentStructure,
    StructureRecoveryError,
    _entry_operator,
    _full_column_rank,
    _offdiag_entries,
    _sym_basis,
    _w_from_vec,
    _w_operator,
    _w_to_vec,
    _z_from_entries,
    latent_system,
    yule_walker,
)
from .specpoly import (
    BlockRow,
    EdgeSet,
    FreqGrid,
    PseudoPoly,
    adjoint_d,
    delta_quadratic,
    evaluate,
    integrate,
    is_psd_on_grid,
    lags_of,
    toeplitz,
)

logger = logging.getLogger(__name__)

__all__ = ["FixedStructureSolution", "solve_fixed", "certify_extension"]


@dataclass
class FixedStructureSolution:
    """Optimal ``(X, H)`` of the fixed-structure program and its dual ``(W, S)``."""

    X: np.ndarray
    H: np.ndarray
    structure: LatentStructure
    W: np.ndarray
    S: BlockRow
    B: np.ndarray  # AR coefficients [I, B_1, ..., B_n]
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.S.n

    @property
    def l(self) -> int:
        return self.H.shape[0]

    def L(self) -> np.ndarray:
        G = self.structure.G
        return G.T @ self.H @ G

    def sigma(self) -> PseudoPoly:
        return delta_quadratic(self.X + self.L(), self.m)

    def lam(self) -> PseudoPoly:
        return delta_quadratic(self.L(), self.m)

    def inverse_spectrum(self) -> PseudoPoly:
        """``Sigma - Lambda = Delta X Delta^*``."""
        return delta_quadratic(self.X, self.m)

    def spectrum(self, grid: Optional[FreqGrid] = None) -> np.ndarray:
        grid = grid or FreqGrid()
        return np.linalg.inv(evaluate(self.inverse_spectrum(), grid))


def _latent_operator(G: np.ndarray, Tz: sp.csr_matrix) -> sp.csr_matrix:
    """Map from free entries of ``S`` to ``vec(G T(S) G^T)``."""
    s = G.shape[1]
    l = G.shape[0]
    cols = []
    dense = Tz.toarray().reshape(s, s, -1)
    for i in range(dense.shape[2]):
        cols.append((G @ dense[:, :, i] @ G.T).ravel())
    if not cols:
        return sp.csr_matrix((l * l, 0))
    return sp.csr_matrix(np.stack(cols, axis=1))


def _solve_h(X: np.ndarray, G: np.ndarray, m: int, pairs) -> tuple[Optional[np.ndarray], bool, float]:
    l = G.shape[0]
    pairs = list(pairs)
    if not pairs:
        return None, False, 0.0
    A = latent_system(G, m, pairs)
    Dx = adjoint_d(X, m).blocks
    ks = [k for k, h in pairs] + [h for k, h in pairs]
    hs = [h for k, h in pairs] + [k for k, h in pairs]
    b = -Dx[:, ks, hs].ravel()
    unique = _full_column_rank(A)
    y = np.linalg.lstsq(A, b, rcond=None)[0]
    H = np.zeros((l, l))
    for v, (a, c) in zip(y, _sym_basis(l)):
        H[a, c] = H[c, a] = v
    resid = float(np.abs(A @ y - b).max(initial=0.0))
    return H, unique, resid


def solve_fixed(
    cov: CovSequence,
    structure: LatentStructure,
    tol: float = 1e-6,
    mu_final: Optional[float] = None,
    psd_tol: float = 1e-8,
) -> FixedStructureSolution:
    """Maximum-entropy AR model with conditional-independence pattern ``E`` and latent factor ``G``.

    Raises
    ------
    StructureRecoveryError
        When the latent inequality admits no strictly feasible point (the
        structure is degenerate) or the recovered ``H`` is indefinite.
    SolverError
        When the barrier iteration breaks down.
    """
    m, n = cov.m, cov.n
    if structure.m != m or structure.n != n:
        raise ValueError("structure dimensions do not match the covariance lags")
    s = m * (n + 1)
    G = structure.G
    l = G.shape[0]
    TR = cov.toeplitz()
    pairs = structure.E.complement().sorted_pairs()
    entries = _offdiag_entries(m, n, pairs)
    ne = len(entries)
    info: dict = {"free_entries": ne, "newton_steps": 0, "mu": 0.0, "gap_bound": 0.0}

    if ne == 0:
        # complete graph: classical Yule-Walker solution, no latent freedom in H
        S = BlockRow.zeros(m, n)
    else:
        Tz = _entry_operator(m, n, entries)
        Wop, wbasis = _w_operator(m, s)
        nw = Wop.shape[1]
        Wobj, _ = _w_operator(m, m)
        U_op = sp.hstack([-Wop, Tz]).tocsr()
        lmis = [AffineMatrix(TR, U_op, "moment")]
        alpha = float(np.linalg.eigvalsh(TR)[0])
        if not alpha > 0:
            raise SolverError("Toeplitz matrix of the lags is not positive definite")
        x0 = np.zeros(nw + ne)
        x0[:nw] = _w_to_vec(0.25 * alpha * np.eye(m), wbasis)
        if l:
            Gop = _latent_operator(G, Tz)
            # strictly feasible direction: G T(S) G^T = I
            target = np.eye(l).ravel()
            sdir = np.linalg.lstsq(Gop.toarray(), target, rcond=None)[0]
            if np.abs(Gop @ sdir - target).max() > 1e-8:
                raise StructureRecoveryError("latent constraint has no strictly feasible point")
            Tdir = (Tz @ sdir).reshape(s, s)
            eps = 0.5 * alpha / max(float(np.linalg.norm(Tdir, 2)), 1e-300)
            x0[nw:] = eps * sdir
            zero_w = sp.csr_matrix((l * l, nw))
            lmis.append(AffineMatrix(np.zeros((l, l)), sp.hstack([zero_w, Gop]).tocsr(), "latent"))
        objective = [AffineMatrix(np.zeros((m, m)), sp.hstack([Wobj, sp.csr_matrix((m * m, ne))]).tocsr(), "W")]
        prob = BarrierProblem(nw + ne, objective, lmis)
        if mu_final is None:
            mu_final = min(1e-9, 0.1 * tol / prob.theta)
        res = solve_barrier(prob, x0, mu_final=mu_final)
        S = _z_from_entries(res.x[nw:], entries, m, n)
        info.update(newton_steps=res.newton_steps, mu=res.mu, gap_bound=res.gap_bound)
        H_path = res.multipliers[1] if l else None

    T = TR + toeplitz(S)
    try:
        B, W = yule_walker(T, m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular Yule-Walker system: {exc}") from None
    X = B.T @ np.linalg.solve(W, B)
    X = 0.5 * (X + X.T)

    if l == 0:
        H = np.zeros((0, 0))
        info["h_source"] = "none"
    else:
        H, unique, resid = _solve_h(X, G, m, pairs)
        info["h_residual"] = resid
        if H is None or not unique:
            H = H_path if ne else np.zeros((l, l))
            info["h_source"] = "central_path"
        else:
            info["h_source"] = "least_squares"
        H = 0.5 * (H + H.T)
        w, Q = np.linalg.eigh(H)
        if w[0] < -psd_tol * max(1.0, float(np.abs(w).max())):
            raise StructureRecoveryError(f"latent scaling is indefinite (min eig {w[0]:.3g})")
        H = (Q * np.maximum(w, 0.0)) @ Q.T
    sign, logdet = np.linalg.slogdet(W)
    info["objective"] = float(logdet) + m
    return FixedStructureSolution(X=X, H=H, structure=structure, W=W, S=S, B=B, info=info)


def certify_extension(
    sol: FixedStructureSolution,
    cov: CovSequence,
    grid: Optional[FreqGrid] = None,
) -> dict:
    """Moment matching on ``E``, the latent inequality and the entropy of the fit.

    All quantities are computed from the fitted spectrum on ``grid``, not from
    the dual variables.
    """
    grid = grid or FreqGrid()
    m, n = cov.m, cov.n
    grid.check_degree(n)
    E = sol.structure.E
    G = sol.structure.G
    Phi = sol.spectrum(grid)
    lags = lags_of(Phi, grid, n)
    diff = lags.blocks - cov.lags.blocks
    mask = E.mask()
    moment_on_E = float(np.abs(diff[:, mask]).max(initial=0.0))
    moment_all = float(np.abs(diff).max(initial=0.0))
    if G.shape[0]:
        M = G @ (toeplitz(lags) - cov.toeplitz()) @ G.T
        latent_margin = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    else:
        latent_margin = 0.0
    sign, logdets = np.linalg.slogdet(Phi)
    entropy = float(integrate(logdets.real))
    ok_x, worst_x = is_psd_on_grid(sol.inverse_spectrum(), grid)
    Dres = adjoint_d(sol.X + sol.L(), m).blocks
    Ec = ~mask
    ec_resid = float(np.abs(Dres[:, Ec]).max(initial=0.0))
    return {
        "moment_residual_E": moment_on_E,
        "moment_residual_all": moment_all,
        "latent_margin": latent_margin,
        "entropy": entropy,
        "min_eig_inverse_spectrum": worst_x,
        "complement_residual": ec_resid,
        "edges": len(E),
        "l": int(G.shape[0]),
    }
