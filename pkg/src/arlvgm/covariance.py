"""Sample covariance lags, correlograms and return series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .specpoly import BlockRow, PseudoPoly, toeplitz

__all__ = [
    "DataMatrix",
    "CovSequence",
    "DegenerateDataError",
    "estimate_lags",
    "correlogram",
    "bartlett_correlogram",
    "default_bartlett_window",
    "log_returns",
    "read_csv",
    "write_csv",
]


class DegenerateDataError(ValueError):
    """Raised when the sample lags do not give a positive definite Toeplitz matrix."""


@dataclass(frozen=True)
class DataMatrix:
    """``N x m`` array of observations, row ``t`` being ``x(t)``."""

    values: np.ndarray
    names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if vals.shape[0] < 2:
            raise ValueError("need at least two observations")
        if not np.all(np.isfinite(vals)):
            raise ValueError("data contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != vals.shape[1]:
                raise ValueError("number of names does not match number of columns")
            object.__setattr__(self, "names", names)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def labels(self) -> tuple[str, ...]:
        return self.names if self.names is not None else tuple(f"x{k + 1}" for k in range(self.m))

    def scaled(self, c: float) -> "DataMatrix":
        return DataMatrix(self.values * c, self.names)


@dataclass(frozen=True)
class CovSequence:
    """Estimated lags ``R_0 ... R_n`` together with the sample size."""

    lags: BlockRow
    N: int
    min_eig: float = field(default=float("nan"))

    @property
    def m(self) -> int:
        return self.lags.m

    @property
    def n(self) -> int:
        return self.lags.n

    def toeplitz(self) -> np.ndarray:
        return toeplitz(self.lags)

    @classmethod
    def from_lags(cls, lags, N: int = 0, check: bool = True) -> "CovSequence":
        lags = lags if isinstance(lags, BlockRow) else BlockRow(lags)
        min_eig = float(np.linalg.eigvalsh(toeplitz(lags))[0])
        if check and not min_eig > 0:
            raise DegenerateDataError(f"Toeplitz matrix of the lags is not positive definite (min eig {min_eig:.3g})")
        return cls(lags, N, min_eig)


def _sample_lags(x: np.ndarray, n: int) -> np.ndarray:
    N, m = x.shape
    out = np.empty((n + 1, m, m))
    for j in range(n + 1):
        # R_j = (1/N) sum_t x(t+j) x(t)^T
        out[j] = x[j:].T @ x[: N - j] / N
    out[0] = 0.5 * (out[0] + out[0].T)
    return out


def estimate_lags(data: DataMatrix, n: int, demean: bool = True) -> CovSequence:
    """Biased (1/N) sample covariance lags up to order ``n``.

    Raises :class:`DegenerateDataError` when the block-Toeplitz matrix of the
    lags is not positive definite.
    """
    if n < 0 or n >= data.N:
        raise ValueError(f"order n={n} must satisfy 0 <= n < N={data.N}")
    x = data.values
    if demean:
        x = x - x.mean(axis=0)
    return CovSequence.from_lags(BlockRow(_sample_lags(x, n)), data.N)


def correlogram(cov: CovSequence) -> PseudoPoly:
    """Windowed correlogram with coefficients equal to the lags."""
    return PseudoPoly.from_lags(cov.lags)


def default_bartlett_window(N: int) -> int:
    return int(math.ceil(N ** (1.0 / 3.0)))


def bartlett_correlogram(data: DataMatrix, M: Optional[int] = None, demean: bool = True) -> PseudoPoly:
    """Correlogram smoothed by the triangular weights ``1 - |j| / (M + 1)``."""
    if M is None:
        M = default_bartlett_window(data.N)
    if M < 0 or M >= data.N:
        raise ValueError(f"window length M={M} must satisfy 0 <= M < N={data.N}")
    x = data.values
    if demean:
        x = x - x.mean(axis=0)
    lags = _sample_lags(x, M)
    weights = 1.0 - np.arange(M + 1) / (M + 1.0)
    return PseudoPoly(lags * weights[:, None, None])


def log_returns(prices: DataMatrix) -> DataMatrix:
    """Percent log returns ``100 (log p_t - log p_{t-1})``."""
    p = prices.values
    if np.any(p <= 0):
        raise ValueError("prices must be strictly positive")
    logp = np.log(p)
    return DataMatrix(100.0 * np.diff(logp, axis=0), prices.names)


def read_csv(path, header: Optional[bool] = None) -> DataMatrix:
    """Read a numeric CSV; the first row is treated as a header if it is not numeric."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")

    def numeric(row: Sequence[str]) -> bool:
        try:
            [float(c) for c in row]
        except ValueError:
            return False
        return True

    names = None
    if header is None:
        header = not numeric(rows[0])
    if header:
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    values = []
    for lineno, row in enumerate(rows, start=2 if header else 1):
        if len(row) != width or any(not c.strip() for c in row):
            raise ValueError(f"{path}:{lineno}: missing cells are not allowed")
        try:
            values.append([float(c) for c in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return DataMatrix(np.array(values), names)


def write_csv(path, data: DataMatrix) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.labels())
        for row in data.values:
            w.writerow([repr(float(v)) for v in row])
