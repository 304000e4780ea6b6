"""Regularized sparse-plus-low-rank structure estimation.

The regularized program over ``(X, L)``

    min  -log det X_00 + <T(R), X> + lam*gamma*h_inf(D(X + L)) + lam*tr(L)
    s.t. X >= 0, L >= 0

is solved through its smooth dual in ``(W, Z)``

    max  log det W + m
    s.t. T(R) + T(Z) >= blkdiag(W, 0),   lam*I + T(Z) >= 0,
         diag(Z_j) = 0,   sum_j |Z_j[k,h]| + |Z_j[h,k]| <= lam*gamma  (k != h).

The primal pair is recovered afterwards: ``X`` from the Yule-Walker equations
of the lags ``R + Z``, and ``L = G^T H G`` where the rows of ``G`` span the
null space of ``lam*I + T(Z)`` and ``H`` solves the linear equations that
zero ``D(X + L)`` on the pairs whose group constraint is inactive.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .covariance import CovSequence
from .ipm import AffineMatrix, BarrierProblem, SolverError, solve_barrier
from .specpoly import (
    BlockRow,
    EdgeSet,
    FreqGrid,
    adjoint_d,
    delta_quadratic,
    evaluate,
    integrate,
    is_psd_on_grid,
    toeplitz,
)

logger = logging.getLogger(__name__)

__all__ = [
    "RegParams",
    "SLDual",
    "LatentStructure",
    "StructureRecoveryError",
    "h_inf",
    "phi_star",
    "phi_star_on_grid",
    "solve_sl_dual",
    "recover_x",
    "recover_latent",
    "support_edges",
    "transversality",
    "latent_system",
    "primal_objective",
    "certify_sl",
    "identify_structure",
]


class StructureRecoveryError(RuntimeError):
    """The latent scaling ``H`` came out indefinite: degenerate regularization point."""


@dataclass(frozen=True)
class RegParams:
    lam: float
    gamma: float

    def __post_init__(self):
        for name in ("lam", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def lam_gamma(self) -> float:
        return self.lam * self.gamma

    @classmethod
    def from_sparsity_weight(cls, lam: float, lam_gamma: float) -> "RegParams":
        return cls(lam, lam_gamma / lam)


# --------------------------------------------------------------------------
# Regularizers


def h_inf(Y: BlockRow) -> float:
    """Sum over pairs ``k > h`` of the largest ``|Y_j[k,h]|``, ``|Y_j[h,k]|`` over lags."""
    B = np.abs(Y.blocks)
    groups = np.maximum(B.max(axis=0), B.max(axis=0).T)
    return float(np.sum(np.tril(groups, -1)))


def phi_star(L: np.ndarray, tol: float = 1e-9) -> float:
    """Nuclear-type regularizer of ``Delta L Delta^*``; equals ``tr(L)`` for ``L >= 0``."""
    L = np.asarray(L, dtype=float)
    lo = float(np.linalg.eigvalsh(0.5 * (L + L.T))[0]) if L.size else 0.0
    if lo < -tol * max(1.0, float(np.abs(L).max(initial=0.0))):
        raise ValueError(f"L must be positive semidefinite (min eig {lo:.3g})")
    return float(np.trace(L))


def phi_star_on_grid(L: np.ndarray, m: int, grid: Optional[FreqGrid] = None) -> float:
    """Grid integral of the summed singular values of ``Delta L Delta^*``."""
    grid = grid or FreqGrid()
    vals = evaluate(delta_quadratic(L, m), grid)
    sv = np.linalg.svd(vals, compute_uv=False)
    return float(integrate(sv.sum(axis=1)))


# --------------------------------------------------------------------------
# Variable layout of the dual


@dataclass
class _Entry:
    lag: int
    row: int
    col: int
    group: int
    weight: float  # contribution of |entry| to the group sum


def _toeplitz_positions(m: int, n: int, e: _Entry) -> list[tuple[int, int]]:
    """Positions of ``T`` hit by a unit change in the free entry ``e``."""
    pos = []
    a, b, j = e.row, e.col, e.lag
    if j == 0:
        for p in range(n + 1):
            pos.append((p * m + a, p * m + b))
            pos.append((p * m + b, p * m + a))
    else:
        for p in range(n + 1 - j):
            pos.append((p * m + a, (p + j) * m + b))
            pos.append(((p + j) * m + b, p * m + a))
    return pos


def _entry_operator(m: int, n: int, entries: list[_Entry]) -> sp.csr_matrix:
    """Sparse ``(s^2, len(entries))`` map from free entries to ``vec T(Z)``."""
    s = m * (n + 1)
    rows, cols = [], []
    for i, e in enumerate(entries):
        for r, c in _toeplitz_positions(m, n, e):
            rows.append(r * s + c)
            cols.append(i)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(s * s, len(entries)))


def _w_operator(m: int, s: int) -> tuple[sp.csr_matrix, list[tuple[int, int]]]:
    """Map from the upper-triangular entries of ``W`` to ``vec`` of an ``s x s`` matrix."""
    basis = [(a, b) for a in range(m) for b in range(a, m)]
    rows, cols = [], []
    for i, (a, b) in enumerate(basis):
        rows.append(a * s + b)
        cols.append(i)
        if a != b:
            rows.append(b * s + a)
            cols.append(i)
    op = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(s * s, len(basis)))
    return op, basis


def _w_from_vec(w: np.ndarray, basis, m: int) -> np.ndarray:
    W = np.zeros((m, m))
    for v, (a, b) in zip(w, basis):
        W[a, b] = W[b, a] = v
    return W


def _w_to_vec(W: np.ndarray, basis) -> np.ndarray:
    return np.array([W[a, b] for a, b in basis])


def _offdiag_entries(m: int, n: int, pairs=None) -> list[_Entry]:
    """Free entries of a hollow ``Z`` (``Z_0`` symmetric) on the given unordered pairs."""
    pairs = list(itertools.combinations(range(m), 2)) if pairs is None else list(pairs)
    entries = []
    for g, (k, h) in enumerate(pairs):
        entries.append(_Entry(0, k, h, g, 2.0))
        for j in range(1, n + 1):
            entries.append(_Entry(j, k, h, g, 1.0))
            entries.append(_Entry(j, h, k, g, 1.0))
    return entries


def _z_from_entries(values: np.ndarray, entries: list[_Entry], m: int, n: int) -> BlockRow:
    Z = np.zeros((n + 1, m, m))
    for v, e in zip(values, entries):
        Z[e.lag, e.row, e.col] = v
        if e.lag == 0:
            Z[0, e.col, e.row] = v
    return BlockRow(Z)


# --------------------------------------------------------------------------
# Dual solve


@dataclass
class SLDual:
    """Optimal ``(W, Z)`` of the dual program plus solver by-products."""

    W: np.ndarray
    Z: BlockRow
    reg: RegParams
    objective: float
    U: np.ndarray
    V: Optional[np.ndarray]  # None when the low-rank part is switched off
    group_slack: dict
    X_path: np.ndarray  # central-path multiplier of the first LMI (-> X)
    L_path: np.ndarray  # central-path multiplier of the second LMI (-> L)
    mu: float
    gap_bound: float
    newton_steps: int
    residuals: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.Z.n


def _group_sums(Z: BlockRow) -> np.ndarray:
    A = np.abs(Z.blocks).sum(axis=0)
    return A + A.T


def solve_sl_dual(
    cov: CovSequence,
    reg: RegParams,
    tol: float = 1e-6,
    mu_final: Optional[float] = None,
    latent: bool = True,
) -> SLDual:
    """Maximize ``log det W + m`` over the dual feasible set by a barrier method.

    The absolute values in the group constraints are handled by splitting each
    free entry of ``Z`` into nonnegative parts.  ``mu_final`` defaults to a
    value making the barrier gap bound a tenth of ``tol``.  With
    ``latent=False`` the constraint ``lam*I + T(Z) >= 0`` is dropped, which is
    the dual of the program without ``L`` (sparse-only model).
    """
    m, n = cov.m, cov.n
    s = m * (n + 1)
    TR = cov.toeplitz()
    entries = _offdiag_entries(m, n)
    ne = len(entries)
    Tz = _entry_operator(m, n, entries)
    Wop, wbasis = _w_operator(m, s)
    nw = Wop.shape[1]
    Wobj, _ = _w_operator(m, m)

    # x = [w, p, q] with Z entries = p - q; the LMIs see only (w, p - q)
    eye_w = sp.identity(nw, format="csr")
    eye_z = sp.identity(ne, format="csr")
    to_wz = sp.bmat([[eye_w, None, None], [None, eye_z, -eye_z]]).tocsr()
    to_z = sp.hstack([sp.csr_matrix((ne, nw)), eye_z, -eye_z]).tocsr()
    to_w = sp.hstack([eye_w, sp.csr_matrix((nw, 2 * ne))]).tocsr()
    U_op = sp.hstack([-Wop, Tz]).tocsr()

    lmis = [AffineMatrix(TR, U_op, "moment", to_wz)]
    if latent:
        lmis.append(AffineMatrix(reg.lam * np.eye(s), Tz, "lowrank", to_z))
    objective = [AffineMatrix(np.zeros((m, m)), Wobj, "W", to_w)]

    ngroups = m * (m - 1) // 2
    rows, cols, vals = [], [], []
    # p, q >= 0
    for i in range(2 * ne):
        rows.append(i)
        cols.append(nw + i)
        vals.append(-1.0)
    # group sums
    for i, e in enumerate(entries):
        for off in (0, ne):
            rows.append(2 * ne + e.group)
            cols.append(nw + off + i)
            vals.append(e.weight)
    nvar = nw + 2 * ne
    lin_A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * ne + ngroups, nvar))
    lin_h = np.concatenate([np.zeros(2 * ne), np.full(ngroups, reg.lam_gamma)])
    prob = BarrierProblem(nvar, objective, lmis, lin_A, lin_h)

    alpha = float(np.linalg.eigvalsh(TR)[0])
    if not alpha > 0:
        raise SolverError("Toeplitz matrix of the lags is not positive definite")
    x0 = np.zeros(nvar)
    x0[:nw] = _w_to_vec(0.5 * alpha * np.eye(m), wbasis)
    group_weight = 2.0 + 2.0 * n
    x0[nw:] = reg.lam_gamma / (4.0 * group_weight)

    if mu_final is None:
        mu_final = min(1e-8, 0.1 * tol / prob.theta)
    res = solve_barrier(prob, x0, mu_final=mu_final)

    x = res.x
    W = _w_from_vec(x[:nw], wbasis, m)
    W = 0.5 * (W + W.T)
    zvals = x[nw:nw + ne] - x[nw + ne:]
    Z = _z_from_entries(zvals, entries, m, n)
    U = lmis[0](x)
    V = lmis[1](x) if latent else None
    sums = _group_sums(Z)
    slack = {(k, h): reg.lam_gamma - float(sums[k, h]) for k, h in itertools.combinations(range(m), 2)}
    sign, logdet = np.linalg.slogdet(W)
    residuals = {
        "min_eig_W": float(np.linalg.eigvalsh(W)[0]),
        "min_eig_U": float(np.linalg.eigvalsh(U)[0]),
        "min_eig_V": float(np.linalg.eigvalsh(V)[0]) if latent else float("inf"),
        "max_group_excess": float(max(0.0, -min(slack.values(), default=0.0))),
        "max_abs_diag_Z": float(np.max(np.abs(np.diagonal(Z.blocks, axis1=1, axis2=2)))),
        "newton_decrement2": res.decrement,
        "gap_bound": res.gap_bound,
    }
    return SLDual(
        W=W,
        Z=Z,
        reg=reg,
        objective=float(logdet) + m,
        U=U,
        V=V,
        group_slack=slack,
        X_path=res.multipliers[0],
        L_path=res.multipliers[1] if latent else np.zeros((s, s)),
        mu=res.mu,
        gap_bound=res.gap_bound,
        newton_steps=res.newton_steps,
        residuals=residuals,
    )


# --------------------------------------------------------------------------
# Primal recovery


def yule_walker(T: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``T B^T = [W; 0]`` with ``B_0 = I``; returns ``(B, W)``."""
    s = T.shape[0]
    if s == m:
        return np.eye(m), 0.5 * (T + T.T)
    T11 = T[m:, m:]
    T10 = T[m:, :m]
    tail = -scipy.linalg.solve(T11, T10, assume_a="pos")  # B_{1:}^T
    B = np.concatenate([np.eye(m), tail.T], axis=1)
    W = T[:m, :m] + T[:m, m:] @ tail
    return B, 0.5 * (W + W.T)


def recover_x(dual: SLDual, cov: CovSequence) -> np.ndarray:
    """``X = B^T W^{-1} B`` from the Yule-Walker equations of the lags ``R + Z``."""
    m = cov.m
    T = cov.toeplitz() + toeplitz(dual.Z)
    try:
        B, _ = yule_walker(T, m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular Yule-Walker system: {exc}") from None
    Winv = np.linalg.inv(dual.W)
    X = B.T @ Winv @ B
    return 0.5 * (X + X.T)


@dataclass
class LatentStructure:
    """Identified edge set ``E`` and latent factor ``G`` with scaling ``H``."""

    E: EdgeSet
    G: np.ndarray  # (l, m(n+1))
    H: np.ndarray  # (l, l)
    unique: bool
    n: int
    inactive_edges: Optional[EdgeSet] = None
    edges_agree: bool = True
    h_source: str = "least_squares"

    @property
    def l(self) -> int:
        return self.G.shape[0]

    @property
    def m(self) -> int:
        return self.E.m

    def L(self) -> np.ndarray:
        return self.G.T @ self.H @ self.G

    @classmethod
    def sparse_only(cls, E: EdgeSet, n: int) -> "LatentStructure":
        s = E.m * (n + 1)
        return cls(E, np.zeros((0, s)), np.zeros((0, 0)), True, n)


def _sym_basis(l: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(l) for b in range(a, l)]


def latent_system(G: np.ndarray, m: int, pairs) -> np.ndarray:
    """Matrix of ``H -> (D_j(G^T H G))_{kh}`` over ordered pairs ``(k,h)`` and lags.

    ``pairs`` lists unordered pairs; both orderings are used.  Columns follow
    the upper-triangular parametrization of ``H``.
    """
    l = G.shape[0]
    basis = _sym_basis(l)
    pairs = list(pairs)
    idx_k = [k for k, h in pairs] + [h for k, h in pairs]
    idx_h = [h for k, h in pairs] + [k for k, h in pairs]
    cols = []
    for a, b in basis:
        E = np.zeros((l, l))
        E[a, b] = E[b, a] = 1.0
        D = adjoint_d(G.T @ E @ G, m).blocks
        cols.append(D[:, idx_k, idx_h].ravel())
    if not cols:
        return np.zeros((0, 0))
    return np.stack(cols, axis=1)


def _full_column_rank(A: np.ndarray, rtol: float = 1e-9) -> bool:
    if A.shape[1] == 0:
        return True
    if A.shape[0] < A.shape[1]:
        return False
    sv = np.linalg.svd(A, compute_uv=False)
    return bool(sv[-1] > rtol * max(sv[0], 1e-300))


def transversality(E: EdgeSet, G: np.ndarray, n: int) -> bool:
    """Sufficient condition for a trivial intersection of the sparse and low-rank subspaces."""
    if G.shape[0] == 0:
        return True
    A = latent_system(G, E.m, E.complement().sorted_pairs())
    return _full_column_rank(A)


def support_edges(X: np.ndarray, L: np.ndarray, m: int, zero_tol: Optional[float] = None) -> EdgeSet:
    """Edges where some lag of ``D(X + L)`` is nonzero above ``zero_tol``."""
    D = np.abs(adjoint_d(X + L, m).blocks)
    if zero_tol is None:
        zero_tol = 1e-5 * float(D.max(initial=0.0))
    big = D.max(axis=0)
    big = np.maximum(big, big.T)
    return EdgeSet.from_mask(big > zero_tol)


def recover_latent(
    dual: SLDual,
    X: np.ndarray,
    rank_tol: Optional[float] = None,
    zero_tol: Optional[float] = None,
    psd_tol: float = 1e-8,
) -> LatentStructure:
    """Recover ``G``, ``H`` and the edge set from a solved dual and its ``X``."""
    m, n = dual.m, dual.n
    reg = dual.reg
    if rank_tol is None:
        rank_tol = 1e-5 * reg.lam
    if dual.V is None:
        l, evecs = 0, np.zeros((m * (n + 1), 0))
    else:
        evals, evecs = np.linalg.eigh(dual.V)
        l = int(np.sum(evals <= rank_tol))
    G = evecs[:, :l].T
    # a pair is zero in the primal when its group constraint has slack and the
    # central-path estimate of D(X + L) vanishes there; the second test catches
    # active groups whose sparse entries are tiny (slack ~ mu / |S|)
    path_support = support_edges(X, dual.L_path, m, zero_tol)
    inactive = [
        pair for pair, sl in sorted(dual.group_slack.items()) if sl > rank_tol and pair not in path_support
    ]
    inactive_edges = EdgeSet(m, frozenset(dual.group_slack) - frozenset(inactive))
    h_source = "least_squares"
    if l == 0:
        H = np.zeros((0, 0))
        unique = True
    else:
        A = latent_system(G, m, inactive)
        Dx = adjoint_d(X, m).blocks
        ks = [k for k, h in inactive] + [h for k, h in inactive]
        hs = [h for k, h in inactive] + [k for k, h in inactive]
        b = -Dx[:, ks, hs].ravel()
        unique = _full_column_rank(A)
        if unique:
            y = np.linalg.lstsq(A, b, rcond=None)[0]
            H = np.zeros((l, l))
            for v, (a, c) in zip(y, _sym_basis(l)):
                H[a, c] = H[c, a] = v
        else:
            # fall back to the barrier's estimate of L compressed on the null space
            H = G @ dual.L_path @ G.T
            h_source = "central_path"
        H = 0.5 * (H + H.T)
        w, Q = np.linalg.eigh(H)
        if w[0] < -psd_tol * max(1.0, float(np.abs(w).max())):
            raise StructureRecoveryError(f"latent scaling is indefinite (min eig {w[0]:.3g})")
        H = (Q * np.maximum(w, 0.0)) @ Q.T
    L = G.T @ H @ G
    E = support_edges(X, L, m, zero_tol)
    agree = E == inactive_edges
    if not agree:
        logger.info("support and inactive-set edge sets disagree: %d vs %d edges", len(E), len(inactive_edges))
    return LatentStructure(E, G, H, unique, n, inactive_edges, agree, h_source)


# --------------------------------------------------------------------------
# Certification


def primal_objective(X: np.ndarray, L: np.ndarray, cov: CovSequence, reg: RegParams) -> float:
    m = cov.m
    sign, logdet = np.linalg.slogdet(X[:m, :m])
    if sign <= 0:
        return np.inf
    Y = adjoint_d(X + L, m)
    return float(
        -logdet
        + np.sum(cov.toeplitz() * X)
        + reg.lam_gamma * h_inf(Y)
        + reg.lam * np.trace(L)
    )


def certify_sl(
    dual: SLDual,
    cov: CovSequence,
    X: np.ndarray,
    structure: LatentStructure,
    grid: Optional[FreqGrid] = None,
) -> dict:
    """Duality gap, complementary slackness, rank and positivity checks."""
    grid = grid or FreqGrid()
    m = cov.m
    L = structure.L()
    primal = primal_objective(X, L, cov, dual.reg)
    ev = np.linalg.eigvalsh(X)
    thresh = 1e-7 * max(float(np.abs(ev).max()), 1e-300)
    ok_psd, worst = is_psd_on_grid(delta_quadratic(X, m), grid)
    return {
        "primal": primal,
        "dual": dual.objective,
        "gap": primal - dual.objective,
        "relative_gap": (primal - dual.objective) / (1.0 + abs(dual.objective)),
        "UX": float(np.sum(dual.U * X)),
        "VL": 0.0 if dual.V is None else float(np.sum(dual.V * L)),
        "rank_X": int(np.sum(ev > thresh)),
        "min_eig_spectrum_X": worst,
        **dual.residuals,
    }


def identify_structure(
    cov: CovSequence,
    reg: RegParams,
    tol: float = 1e-6,
    rank_tol: Optional[float] = None,
    zero_tol: Optional[float] = None,
    latent: bool = True,
) -> tuple[SLDual, np.ndarray, LatentStructure]:
    """Solve the dual, recover ``X`` and the latent structure in one call."""
    dual = solve_sl_dual(cov, reg, tol=tol, latent=latent)
    X = recover_x(dual, cov)
    structure = recover_latent(dual, X, rank_tol=rank_tol, zero_tol=zero_tol)
    return dual, X, structure
