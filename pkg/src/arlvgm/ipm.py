"""Log-barrier interior-point solver for log-det programs with LMI constraints.

Problems handled here have the form

    minimize    sum_k -log det F_k(x)
    subject to  G_i(x) > 0   (affine symmetric matrices)
                h - A x > 0  (linear inequalities)

where every ``F_k`` and ``G_i`` is affine in ``x``.  The barrier subproblem
``sum_k -log det F_k(x) - mu (sum_i log det G_i(x) + sum log(h - A x))`` is
minimized by damped Newton steps for a geometric sequence of ``mu``.  On the
central path ``mu G_i(x)^{-1}`` are the multipliers of the matrix inequalities
and the suboptimality is at most ``mu`` times the barrier parameter ``theta``
(sum of LMI sizes plus the number of linear inequalities).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

logger = logging.getLogger(__name__)

__all__ = ["AffineMatrix", "BarrierProblem", "BarrierResult", "SolverError", "solve_barrier"]


class SolverError(RuntimeError):
    """Raised when the interior-point iteration breaks down or runs out of iterations."""


@dataclass
class AffineMatrix:
    """Symmetric matrix ``const + reshape(op @ basis @ x)``; ``op`` acts on row-major vec.

    ``basis`` (optional, sparse) maps the problem variables to a smaller set of
    directions; Hessians are formed in the reduced coordinates and expanded.
    """

    const: np.ndarray
    op: sp.csr_matrix
    name: str = ""
    basis: Optional[sp.csr_matrix] = None

    def __post_init__(self):
        self.const = np.asarray(self.const, dtype=float)
        self.op = sp.csr_matrix(self.op)
        self._opT = self.op.T.tocsr()
        if self.basis is not None:
            self.basis = sp.csr_matrix(self.basis)
            self._basisT = self.basis.T.tocsr()

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def _reduce(self, x: np.ndarray) -> np.ndarray:
        return x if self.basis is None else self.basis @ x

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s = self.size
        S = self.const + (self.op @ self._reduce(x)).reshape(s, s)
        return 0.5 * (S + S.T)

    def direction(self, dx: np.ndarray) -> np.ndarray:
        s = self.size
        D = (self.op @ self._reduce(dx)).reshape(s, s)
        return 0.5 * (D + D.T)

    def grad(self, Sinv: np.ndarray) -> np.ndarray:
        """Gradient of ``-log det`` given the inverse at the current point."""
        g = -(self._opT @ Sinv.ravel())
        return g if self.basis is None else self._basisT @ g

    def hess(self, Sinv: np.ndarray) -> np.ndarray:
        """Hessian of ``-log det``: ``op^T (S^-1 kron S^-1) op``."""
        K = np.kron(Sinv, Sinv)
        KA = self._opT @ K  # (nvar, s^2), K symmetric
        H = self._opT @ KA.T
        if self.basis is not None:
            H = self._basisT @ (self._basisT @ H).T
        return 0.5 * (H + H.T)


@dataclass
class BarrierProblem:
    nvar: int
    objective: list  # list[AffineMatrix], each contributes -log det
    lmis: list  # list[AffineMatrix], barrier terms
    lin_A: Optional[sp.csr_matrix] = None
    lin_h: Optional[np.ndarray] = None

    @property
    def theta(self) -> float:
        nlin = 0 if self.lin_h is None else len(self.lin_h)
        return float(sum(g.size for g in self.lmis) + nlin)


@dataclass
class BarrierResult:
    x: np.ndarray
    mu: float
    newton_steps: int
    gap_bound: float
    decrement: float
    multipliers: list = field(default_factory=list)  # mu * G_i^{-1}
    lin_multipliers: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)


def _chol_inv(S: np.ndarray):
    try:
        c = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None, None
    logdet = 2.0 * float(np.sum(np.log(np.diag(c[0]))))
    if not np.isfinite(logdet):
        return None, None
    Sinv = scipy.linalg.cho_solve(c, np.eye(S.shape[0]), check_finite=False)
    return 0.5 * (Sinv + Sinv.T), logdet


def _logdet(S: np.ndarray) -> Optional[float]:
    try:
        c = scipy.linalg.cholesky(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(c)
    if np.any(d <= 0):
        return None
    return 2.0 * float(np.sum(np.log(d)))


def _max_step(S: np.ndarray, D: np.ndarray) -> float:
    """Largest ``t`` with ``S + t D`` positive definite (``inf`` if unbounded)."""
    L = np.linalg.cholesky(S)
    M = scipy.linalg.solve_triangular(L, D, lower=True)
    M = scipy.linalg.solve_triangular(L, M.T, lower=True)
    lo = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    return np.inf if lo >= 0 else -1.0 / lo


class _Barrier:
    def __init__(self, prob: BarrierProblem):
        self.prob = prob

    def value(self, x: np.ndarray, mu: float) -> Optional[float]:
        f = 0.0
        for F in self.prob.objective:
            ld = _logdet(F(x))
            if ld is None:
                return None
            f -= ld
        for G in self.prob.lmis:
            ld = _logdet(G(x))
            if ld is None:
                return None
            f -= mu * ld
        if self.prob.lin_A is not None:
            s = self.prob.lin_h - self.prob.lin_A @ x
            if np.any(s <= 0):
                return None
            f -= mu * float(np.sum(np.log(s)))
        return f

    def derivatives(self, x: np.ndarray, mu: float):
        n = self.prob.nvar
        g = np.zeros(n)
        H = np.zeros((n, n))
        f = 0.0
        invs = []
        for F in self.prob.objective:
            Sinv, ld = _chol_inv(F(x))
            if Sinv is None:
                raise SolverError("objective matrix lost positive definiteness")
            f -= ld
            g += F.grad(Sinv)
            H += F.hess(Sinv)
        for G in self.prob.lmis:
            Sinv, ld = _chol_inv(G(x))
            if Sinv is None:
                raise SolverError(f"LMI {G.name!r} lost positive definiteness")
            invs.append(Sinv)
            f -= mu * ld
            g += mu * G.grad(Sinv)
            H += mu * G.hess(Sinv)
        slack = None
        if self.prob.lin_A is not None:
            A = self.prob.lin_A
            slack = self.prob.lin_h - A @ x
            if np.any(slack <= 0):
                raise SolverError("linear slack lost positivity")
            f -= mu * float(np.sum(np.log(slack)))
            g += mu * (A.T @ (1.0 / slack))
            H += mu * (A.T @ sp.diags(1.0 / slack**2) @ A).toarray()
        return f, g, H, invs, slack

    def max_step(self, x: np.ndarray, dx: np.ndarray) -> float:
        t = np.inf
        for F in list(self.prob.objective) + list(self.prob.lmis):
            t = min(t, _max_step(F(x), F.direction(dx)))
        if self.prob.lin_A is not None:
            s = self.prob.lin_h - self.prob.lin_A @ x
            ds = -(self.prob.lin_A @ dx)
            neg = ds < 0
            if np.any(neg):
                t = min(t, float(np.min(-s[neg] / ds[neg])))
        return t


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        c = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
        return -scipy.linalg.cho_solve(c, g, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    # nearly singular Hessian (e.g. redundant split variables): regularize
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    for delta in (1e-14, 1e-12, 1e-10):
        try:
            c = scipy.linalg.cho_factor(H + delta * scale * np.eye(H.shape[0]), lower=True, check_finite=False)
            return -scipy.linalg.cho_solve(c, g, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    w, V = np.linalg.eigh(H)
    floor = max(float(w[-1]) * 1e-14, 1e-300)
    return -(V @ ((V.T @ g) / np.maximum(w, floor)))


def solve_barrier(
    prob: BarrierProblem,
    x0: np.ndarray,
    mu0: float = 1.0,
    mu_final: float = 1e-10,
    mu_factor: float = 10.0,
    newton_tol: float = 1e-10,
    max_newton: int = 500,
    alpha: float = 0.01,
    beta: float = 0.5,
) -> BarrierResult:
    """Follow the central path from ``x0`` (strictly feasible) down to ``mu_final``."""
    bar = _Barrier(prob)
    x = np.array(x0, dtype=float)
    mu = mu0
    if bar.value(x, mu) is None:
        raise SolverError("starting point is not strictly feasible")
    steps = 0
    trace = []
    while True:
        # centering
        for _ in range(max_newton):
            f, g, H, invs, slack = bar.derivatives(x, mu)
            dx = _newton_direction(H, g)
            lam2 = float(-g @ dx)
            # second clause: the decrease is below the resolution of f
            if lam2 <= newton_tol * mu or lam2 <= 1e-14 * (1.0 + abs(f)):
                break
            t = min(1.0, 0.99 * bar.max_step(x, dx))
            slope = float(g @ dx)
            while True:
                fn = bar.value(x + t * dx, mu)
                if fn is not None and fn <= f + alpha * t * slope:
                    break
                t *= beta
                if t < 1e-10:
                    break
            if t < 1e-10:
                # no progress possible at working precision
                break
            x = x + t * dx
            steps += 1
            if steps > max_newton * 40:
                raise SolverError("iteration limit reached")
        else:
            raise SolverError(f"centering did not converge at mu={mu:.3g}")
        gap = mu * prob.theta
        min_eigs = [float(np.linalg.eigvalsh(G(x))[0]) for G in prob.lmis]
        rec = {"mu": mu, "gap_bound": gap, "newton_steps": steps, "decrement2": lam2, "min_eigs": min_eigs}
        trace.append(rec)
        logger.debug("barrier iteration", extra={"solver": rec})
        if mu <= mu_final * (1 + 1e-12):
            break
        mu = max(mu / mu_factor, mu_final)
    f, g, H, invs, slack = bar.derivatives(x, mu)
    return BarrierResult(
        x=x,
        mu=mu,
        newton_steps=steps,
        gap_bound=mu * prob.theta,
        decrement=lam2,
        multipliers=[mu * S for S in invs],
        lin_multipliers=None if slack is None else mu / slack,
        trace=trace,
    )
