"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

from __future__ import annotations

import time

import numpy as np
import pytest

from arlvgm.cli import main
from arlvgm.covariance import estimate_lags
from arlvgm.maxent import certify_extension, solve_fixed
from arlvgm.scoring import RegPath, sweep
from arlvgm.serialize import read_json
from arlvgm.simulate import gen_model, sample
from arlvgm.slsolve import (
    LatentStructure,
    RegParams,
    certify_sl,
    identify_structure,
    phi_star_on_grid,
)
from arlvgm.specpoly import (
    EdgeSet,
    FreqGrid,
    PseudoPoly,
    adjoint_d,
    delta_quadratic,
    evaluate,
    integrate,
    lags_of,
    shift_row,
    toeplitz,
)

from conftest import random_block_row, random_cov, random_symmetric, record_criterion
from test_maxent import whittle_levinson

# 5 x 5 log-spaced grid in (lambda, lambda*gamma), a factor 2 either side of (1.02, 0.53)
SYNTHETIC_PATH = RegPath.log_grid_sparsity((0.51, 2.04), (0.265, 1.06), 5, 5)
SYNTHETIC_SEEDS = range(10)


def test_c01_operator_algebra():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_adj = worst_delta = 0.0
    for _ in range(100):
        m, n = int(rng.integers(1, 5)), int(rng.integers(0, 4))
        Y = random_block_row(rng, m, n)
        X = random_symmetric(rng, m * (n + 1))
        worst_adj = max(worst_adj, abs(np.sum(toeplitz(Y) * X) - Y.inner(adjoint_d(X, m))))
        th = float(rng.uniform(-np.pi, np.pi))
        Dl = shift_row(th, m, n)
        worst_delta = max(worst_delta, float(np.abs(delta_quadratic(X, m)(th)[0] - Dl @ X @ Dl.conj().T).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_adj <= 1e-10 and worst_delta <= 1e-10 and elapsed < 1.0
    record_criterion(1, ok, f"adjoint err {worst_adj:.1e}, Delta err {worst_delta:.1e}, {elapsed:.2f}s")
    assert ok


def test_c02_correlogram_toeplitz_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        m, n = int(rng.integers(1, 5)), int(rng.integers(0, 4))
        R = random_block_row(rng, m, n)
        grid = FreqGrid(4 * n + 4)
        vals = evaluate(PseudoPoly.from_lags(R), grid)
        acc = sum(shift_row(th, m, n).conj().T @ V @ shift_row(th, m, n) for th, V in zip(grid.theta, vals))
        worst = max(worst, float(np.abs(acc / grid.size - toeplitz(R)).max()))
    ok = worst <= 1e-10
    record_criterion(2, ok, f"max |int Delta^* Phi Delta - T(R)| = {worst:.1e}")
    assert ok


def test_c03_levinson_oracle():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_moment = worst_coef = 0.0
    grid = FreqGrid(512)
    for m in range(1, 6):
        for n in range(0, 4):
            cov = random_cov(rng, m, n)
            sol = solve_fixed(cov, LatentStructure.sparse_only(EdgeSet.complete(m), n))
            back = lags_of(sol.spectrum(grid), grid, n)
            worst_moment = max(worst_moment, float(np.abs(back.blocks - cov.lags.blocks).max()))
            A, V = whittle_levinson(cov.lags.blocks)
            worst_coef = max(worst_coef, float(np.abs(sol.B - A).max()), float(np.abs(sol.W - V).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_moment <= 1e-6 and worst_coef <= 1e-8
    record_criterion(3, ok, f"moment residual {worst_moment:.1e}, coefficient diff {worst_coef:.1e}, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def certified_instances():
    rng = np.random.default_rng(4)
    out = []
    for _ in range(20):
        m, n = int(rng.integers(2, 7)), int(rng.integers(0, 3))
        cov = random_cov(rng, m, n)
        reg = RegParams.from_sparsity_weight(float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.02, 0.3)))
        dual, X, structure = identify_structure(cov, reg)
        out.append((cov, dual, X, structure, certify_sl(dual, cov, X, structure)))
    return out


def test_c04_duality_certificate(certified_instances):
    bad = []
    worst = {"gap": 0.0, "UX": 0.0, "VL": 0.0}
    ls = []
    for i, (cov, dual, X, structure, c) in enumerate(certified_instances):
        gap_ok = c["gap"] <= 1e-6 * (1 + abs(c["dual"]))
        worst["gap"] = max(worst["gap"], c["relative_gap"])
        worst["UX"] = max(worst["UX"], abs(c["UX"]))
        worst["VL"] = max(worst["VL"], abs(c["VL"]))
        ls.append(structure.l)
        if not (gap_ok and abs(c["UX"]) <= 1e-6 and abs(c["VL"]) <= 1e-6 and c["rank_X"] == cov.m
                and c["min_eig_spectrum_X"] > 0):
            bad.append(i)
    ok = not bad
    record_criterion(4, ok, f"20 instances, worst rel gap {worst['gap']:.1e}, <U,X> {worst['UX']:.1e}, "
                            f"<V,L> {worst['VL']:.1e}, latent ranks {sorted(set(ls))}, failing {bad}")
    assert ok


def test_c05_phi_star_identity():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        m, n = int(rng.integers(1, 5)), int(rng.integers(0, 3))
        s = m * (n + 1)
        F = rng.standard_normal((s, int(rng.integers(1, s + 1))))
        L = F @ F.T
        worst = max(worst, abs(phi_star_on_grid(L, m, FreqGrid(512)) - np.trace(L)))
    ok = worst <= 1e-8
    record_criterion(5, ok, f"max |int sum sigma(Delta L Delta^*) - tr L| = {worst:.1e}")
    assert ok


def test_c06_jensen_identity(certified_instances):
    worst = 0.0
    grid = FreqGrid(512)
    for cov, dual, X, structure, c in certified_instances:
        m = cov.m
        vals = evaluate(delta_quadratic(X, m), grid)
        lhs = float(integrate(np.linalg.slogdet(vals)[1]))
        worst = max(worst, abs(lhs - np.linalg.slogdet(X[:m, :m])[1]))
    ok = worst <= 1e-6
    record_criterion(6, ok, f"max |int log det Delta X Delta^* - log det X_00| = {worst:.1e}")
    assert ok


@pytest.fixture(scope="module")
def synthetic_runs():
    t0 = time.perf_counter()
    runs = []
    for seed in SYNTHETIC_SEEDS:
        model = gen_model(15, 1, 1, 0.1, seed)
        data = sample(model, 500, seed=seed)
        res = sweep(data, 1, SYNTHETIC_PATH)
        runs.append((seed, model, data, res))
    return runs, time.perf_counter() - t0


def _outcome(model, best) -> tuple[bool, str]:
    E = best.structure.E
    truth = model.edges()
    miss = len(truth.pairs - E.pairs)
    extra = len(E.pairs - truth.pairs)
    ok = miss == 0 and extra == 0 and best.l == model.l
    return ok, f"l={best.l} -{miss}+{extra}"


def test_c07_synthetic_recovery(synthetic_runs):
    runs, elapsed = synthetic_runs
    hits = 0
    parts = []
    for seed, model, data, res in runs:
        ok, desc = _outcome(model, res.best)
        hits += ok
        parts.append(f"s{seed}:{desc}")
    ok = hits >= 7 and elapsed <= 1800
    record_criterion(7, ok, f"exact recovery in {hits}/10 seeds, {elapsed / 60:.1f} min; " + " ".join(parts))
    assert ok


def test_c08_static_degradation(synthetic_runs):
    runs, _ = synthetic_runs
    eligible = differ = 0
    for seed, model, data, res in runs:
        if not _outcome(model, res.best)[0]:
            continue
        eligible += 1
        static = sweep(data, 0, SYNTHETIC_PATH).best
        differ += static.structure.E != model.edges()
    if eligible:
        detail = f"n=0 edge set differs from truth in {differ} of {eligible} seeds where n=1 succeeds"
    else:
        detail = "not evaluable: no seed where the n=1 pipeline recovers the truth"
    record_criterion(8, eligible > 0 and differ >= 1, detail + " (soft, not gating)", soft=True)


def test_c09_stock_scale(tmp_path):
    # synthetic stand-in with the stock data dimensions (m=22, N=518)
    rc = main(["simulate", "--m", "22", "--l", "1", "--n", "1", "--N", "518", "--edge-density", "0.08",
               "--seed", "0", "--model-out", str(tmp_path / "t.json"), "--data-out", str(tmp_path / "d.csv")])
    assert rc == 0
    t0 = time.perf_counter()
    rc = main(["identify", "--data", str(tmp_path / "d.csv"), "--n", "1", "--lam-range", "0.5", "2.0",
               "--lam-gamma-range", "0.25", "1.0", "--n-lam", "3", "--n-gamma", "3", "--outdir", str(tmp_path / "o")])
    elapsed = time.perf_counter() - t0
    summary = read_json(tmp_path / "o" / "summary.json")
    sweep_rep = read_json(tmp_path / "o" / "sweep.json")
    coh = (tmp_path / "o" / "coherence.csv").read_text().splitlines()
    ok = (rc == 0 and elapsed < 1800 and len(sweep_rep["models"]) >= 9 and len(coh) == 513
          and {"edges", "l", "D"} <= set(summary))
    record_criterion(9, ok, f"{len(sweep_rep['models'])} points in {elapsed / 60:.1f} min; edges={summary['edges']} "
                            f"l={summary['l']} D={summary['D']:.3f}")
    assert ok


def test_c10_determinism(tmp_path):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        main(["simulate", "--m", "6", "--N", "300", "--edge-density", "0.2", "--seed", "11",
              "--model-out", str(d / "t.json"), "--data-out", str(d / "d.csv")])
        main(["identify", "--data", str(d / "d.csv"), "--path", "0.3:1.0,0.6:0.5,1.0:0.4",
              "--truth", str(d / "t.json"), "--outdir", str(d / "o")])
        main(["score", "--model", str(d / "o" / "model.json"), "--data", str(d / "d.csv"), "--out", str(d / "s.json")])
        files = [d / "t.json", d / "s.json"] + sorted((d / "o").glob("*.json"))
        outs.append([f.read_bytes() for f in files])
    ok = outs[0] == outs[1] and len(outs[0]) >= 5
    record_criterion(10, ok, f"{len(outs[0])} JSON outputs bit-identical across two runs: {ok}")
    assert ok
