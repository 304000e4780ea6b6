"""Deterministic JSON I/O for identified models and reports."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .maxent import FixedStructureSolution
from .slsolve import LatentStructure
from .specpoly import BlockRow, EdgeSet

__all__ = ["to_plain", "dumps", "write_json", "read_json", "model_to_json", "model_from_json"]


def to_plain(obj: Any) -> Any:
    """Convert numpy containers to lists and non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj: Any) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(to_plain(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path) -> Any:
    return json.loads(Path(path).read_text())


def model_to_json(sol: FixedStructureSolution, extra: Optional[dict] = None) -> dict:
    st = sol.structure
    out = {
        "m": sol.m,
        "n": sol.n,
        "l": sol.l,
        "edges": [list(p) for p in st.E.sorted_pairs()],
        "G": st.G,
        "H": sol.H,
        "X": sol.X,
        "W": sol.W,
        "B": sol.B,
        "S": sol.S.blocks,
    }
    if extra:
        out.update(extra)
    return out


def _matrix(v, rows: int, cols: int) -> np.ndarray:
    a = np.array(v, dtype=float) if v is not None else np.zeros((rows, cols))
    return a.reshape(rows, cols)


def model_from_json(obj: dict) -> FixedStructureSolution:
    m, n, l = int(obj["m"]), int(obj["n"]), int(obj["l"])
    s = m * (n + 1)
    E = EdgeSet(m, frozenset(tuple(p) for p in obj["edges"]))
    G = _matrix(obj["G"], l, s)
    H = _matrix(obj["H"], l, l)
    st = LatentStructure(E, G, H, True, n)
    return FixedStructureSolution(
        X=_matrix(obj["X"], s, s),
        H=H,
        structure=st,
        W=_matrix(obj["W"], m, m),
        S=BlockRow(np.array(obj["S"], dtype=float).reshape(n + 1, m, m)),
        B=_matrix(obj["B"], m, s),
    )
