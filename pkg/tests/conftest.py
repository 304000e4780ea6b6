from __future__ import annotations

import numpy as np
import pytest

from arlvgm.covariance import CovSequence, DataMatrix, estimate_lags
from arlvgm.specpoly import BlockRow


def random_symmetric(rng: np.random.Generator, s: int) -> np.ndarray:
    A = rng.standard_normal((s, s))
    return 0.5 * (A + A.T)


def random_block_row(rng: np.random.Generator, m: int, n: int) -> BlockRow:
    Y = rng.standard_normal((n + 1, m, m))
    Y[0] = 0.5 * (Y[0] + Y[0].T)
    return BlockRow(Y)


def random_cov(rng: np.random.Generator, m: int, n: int, N: int = 400) -> CovSequence:
    """Sample lags of a short random VAR(1) path; always positive definite."""
    A = 0.4 * rng.standard_normal((m, m)) / np.sqrt(m)
    x = np.zeros((N + 50, m))
    e = rng.standard_normal((N + 50, m))
    for t in range(1, N + 50):
        x[t] = A @ x[t - 1] + e[t]
    return estimate_lags(DataMatrix(x[50:]), n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str, soft: bool = False) -> None:
    tag = "PASS" if passed else ("REPORT" if soft else "FAIL")
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {tag}  {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
