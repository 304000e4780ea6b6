"""Model scoring and regularization-path sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .covariance import DataMatrix, bartlett_correlogram, estimate_lags
from .ipm import SolverError
from .maxent import FixedStructureSolution, certify_extension, solve_fixed
from .slsolve import LatentStructure, RegParams, StructureRecoveryError, identify_structure
from .specpoly import EdgeSet, FreqGrid, PseudoPoly, evaluate, integrate

logger = logging.getLogger(__name__)

__all__ = [
    "relative_entropy_rate",
    "complexity",
    "ScoredModel",
    "RegPath",
    "SweepConfig",
    "SweepResult",
    "sweep",
    "reference_spectrum",
    "score_solution",
    "select",
]


def _as_grid_values(P, grid: FreqGrid) -> np.ndarray:
    if isinstance(P, PseudoPoly):
        return evaluate(P, grid)
    vals = np.asarray(P)
    if vals.shape[0] != grid.size:
        raise ValueError("spectrum samples do not match the grid")
    return vals


def relative_entropy_rate(Phi_C, Phi, grid: Optional[FreqGrid] = None) -> float:
    """``1/2 (int log det(Phi_C^{-1} Phi) + tr(Phi_C Phi^{-1}) - m)``.

    Both arguments are either :class:`PseudoPoly` instances or grid samples of
    shape ``(N_f, m, m)``.  Raises ``ValueError`` when either is not positive
    definite on the grid.
    """
    grid = grid or FreqGrid()
    A = _as_grid_values(Phi_C, grid)
    B = _as_grid_values(Phi, grid)
    m = A.shape[-1]
    try:
        LA = np.linalg.cholesky(A)
        LB = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise ValueError("spectra must be positive definite on the grid") from None
    logdet_A = 2.0 * np.sum(np.log(np.abs(np.diagonal(LA, axis1=1, axis2=2))), axis=1)
    logdet_B = 2.0 * np.sum(np.log(np.abs(np.diagonal(LB, axis1=1, axis2=2))), axis=1)
    # tr(A B^{-1}) = ||LB^{-1} LA||_F^2
    M = np.linalg.solve(LB, LA)
    tr = np.sum(np.abs(M) ** 2, axis=(1, 2))
    return float(0.5 * (integrate(logdet_B - logdet_A + tr) - m))


def complexity(E: EdgeSet, l: int, m: Optional[int] = None) -> int:
    """Unordered off-diagonal edges plus ``m`` per latent variable."""
    m = E.m if m is None else m
    return len(E) + m * l


@dataclass(frozen=True)
class RegPath:
    """Ordered list of ``(lam, gamma)`` pairs."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        if not pts:
            raise ValueError("regularization path is empty")
        for a, b in pts:
            if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"path entries must be positive and finite, got ({a}, {b})")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @classmethod
    def log_grid(cls, lam_range, gamma_range, n_lam: int = 5, n_gamma: int = 5) -> "RegPath":
        lams = np.geomspace(lam_range[0], lam_range[1], n_lam)
        gammas = np.geomspace(gamma_range[0], gamma_range[1], n_gamma)
        return cls(tuple((float(a), float(b)) for a in lams for b in gammas))

    @classmethod
    def log_grid_sparsity(cls, lam_range, lam_gamma_range, n_lam: int = 5, n_lg: int = 5) -> "RegPath":
        """Grid in ``(lam, lam*gamma)``; stored as ``(lam, gamma)``."""
        lams = np.geomspace(lam_range[0], lam_range[1], n_lam)
        lgs = np.geomspace(lam_gamma_range[0], lam_gamma_range[1], n_lg)
        return cls(tuple((float(a), float(b / a)) for a in lams for b in lgs))

    def scaled(self, c2: float) -> "RegPath":
        """Path for data multiplied by ``c`` (``lam <- c^2 lam``, same ``gamma``)."""
        return RegPath(tuple((a * c2, b) for a, b in self.points))


@dataclass
class SweepConfig:
    tol: float = 1e-6
    rank_tol: Optional[float] = None
    zero_tol: Optional[float] = None
    grid_size: int = 512
    bartlett_M: Optional[int] = None
    score: str = "product"  # or "additive"
    alpha: Optional[float] = None  # additive weight, default 1/N
    latent: bool = True
    demean: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.score not in ("product", "additive"):
            raise ValueError(f"unknown score {self.score!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class ScoredModel:
    lam: float
    gamma: float
    status: str
    structure: Optional[LatentStructure] = None
    solution: Optional[FixedStructureSolution] = None
    D: float = float("nan")
    p: int = 0
    f: float = float("nan")
    message: str = ""
    certificate: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def l(self) -> int:
        return self.structure.l if self.structure is not None else 0

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "gamma": self.gamma,
            "edges": [list(p) for p in self.structure.E.sorted_pairs()] if self.structure else [],
            "l": self.l,
            "D": self.D,
            "p": self.p,
            "f": self.f,
            "status": self.status,
            "message": self.message,
        }


def reference_spectrum(data: DataMatrix, config: SweepConfig, grid: FreqGrid) -> np.ndarray:
    """Bartlett correlogram on the grid, ridged to be strictly positive definite."""
    P = bartlett_correlogram(data, config.bartlett_M, demean=config.demean)
    vals = evaluate(P, grid)
    m = P.m
    ridge = 1e-8 * float(np.trace(P.coeffs[0])) / m
    worst = float(np.min(np.linalg.eigvalsh(vals)))
    if worst < ridge:
        vals = vals + ridge * np.eye(m)
    return vals


def score_solution(sol: FixedStructureSolution, Phi_C: np.ndarray, grid: FreqGrid, N: int, config: SweepConfig):
    """``(D, p, f)`` for a fitted model against the reference spectrum."""
    D = relative_entropy_rate(Phi_C, sol.spectrum(grid), grid)
    p = complexity(sol.structure.E, sol.l)
    if config.score == "product":
        f = D * p
    else:
        alpha = config.alpha if config.alpha is not None else 1.0 / N
        f = D + alpha * p
    return D, p, f


def _fit_point(args) -> ScoredModel:
    lam, gamma, cov, Phi_C, N, config = args
    grid = FreqGrid(config.grid_size)
    reg = RegParams(lam, gamma)
    try:
        dual, X, structure = identify_structure(
            cov, reg, tol=config.tol, rank_tol=config.rank_tol, zero_tol=config.zero_tol, latent=config.latent
        )
        sol = solve_fixed(cov, structure, tol=config.tol)
        D, p, f = score_solution(sol, Phi_C, grid, N, config)
        cert = certify_extension(sol, cov, grid)
    except (SolverError, StructureRecoveryError, np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("path point (%g, %g) failed: %s", lam, gamma, exc)
        return ScoredModel(lam, gamma, "failed", message=f"{type(exc).__name__}: {exc}")
    return ScoredModel(lam, gamma, "ok", structure, sol, D, p, f, certificate=cert)


def select(models: Sequence[ScoredModel]) -> int:
    """Index of the minimum score; ties go to smaller ``p``, smaller ``l``, then first."""
    best = None
    for i, mdl in enumerate(models):
        if not mdl.ok or not np.isfinite(mdl.f):
            continue
        key = (mdl.f, mdl.p, mdl.l, i)
        if best is None or key < best:
            best = key
    if best is None:
        raise SolverError("every path point failed")
    return best[3]


@dataclass
class SweepResult:
    models: list
    selected: int
    n: int
    N: int

    @property
    def best(self) -> ScoredModel:
        return self.models[self.selected]

    def to_json(self) -> dict:
        return {"n": self.n, "N": self.N, "selected": self.selected, "models": [m.to_json() for m in self.models]}


def sweep(data: DataMatrix, n: int, path: RegPath, config: Optional[SweepConfig] = None) -> SweepResult:
    """Identify, fit and score one model per path point, then select the best."""
    config = config or SweepConfig()
    grid = FreqGrid(config.grid_size)
    grid.check_degree(n)
    cov = estimate_lags(data, n, demean=config.demean)
    Phi_C = reference_spectrum(data, config, grid)
    jobs = [(lam, gamma, cov, Phi_C, data.N, config) for lam, gamma in path]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            models = list(pool.map(_fit_point, jobs))
    else:
        models = [_fit_point(job) for job in jobs]
    return SweepResult(models, select(models), n, data.N)
