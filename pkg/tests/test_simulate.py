from __future__ import annotations

import numpy as np
import pytest

from arlvgm.covariance import estimate_lags
from arlvgm.simulate import (
    FactorizationError,
    TrueModel,
    companion_radius,
    default_burn_in,
    gen_model,
    sample,
    spectral_factor,
)
from arlvgm.specpoly import FreqGrid, PseudoPoly, delta_quadratic, evaluate, integrate, is_psd_on_grid


def test_factor_of_constant():
    A = spectral_factor(PseudoPoly([[[4.0]]]))
    assert abs(abs(A[0, 0]) - 2.0) <= 1e-12


def minimum_phase_row(rng, m, n, radius=0.6):
    """``B = [I, B_1 ... B_n]`` scaled until the companion radius is below ``radius``."""
    while True:
        B = np.concatenate([np.eye(m)] + [0.5 * rng.standard_normal((m, m)) for _ in range(n)], axis=1)
        if companion_radius(B, n) < radius:
            C = rng.standard_normal((m, m))
            return (C @ C.T + np.eye(m)) @ B


@pytest.mark.parametrize("m,n", [(1, 1), (2, 1), (3, 2), (2, 3)])
def test_factor_round_trip(m, n):
    rng = np.random.default_rng(m + 7 * n)
    B = minimum_phase_row(rng, m, n)
    P = delta_quadratic(B.T @ B, m)
    A = spectral_factor(P)
    np.testing.assert_allclose(A.T @ A, B.T @ B, atol=1e-8 * np.abs(B.T @ B).max())
    assert companion_radius(A, n) < 1.0
    # recovered up to a left orthogonal factor
    Q = A[:, :m] @ np.linalg.inv(B[:, :m])
    np.testing.assert_allclose(Q @ Q.T, np.eye(m), atol=1e-7)


def test_jensen_identity_of_factor():
    rng = np.random.default_rng(3)
    B = minimum_phase_row(rng, 3, 2)
    P = delta_quadratic(B.T @ B, 3)
    A = spectral_factor(P)
    vals = evaluate(P, FreqGrid(1024))
    lhs = float(integrate(np.linalg.slogdet(vals)[1]))
    assert abs(lhs - np.linalg.slogdet(A[:, :3].T @ A[:, :3])[1]) <= 1e-6


def test_factor_rejects_indefinite():
    with pytest.raises(FactorizationError):
        spectral_factor(PseudoPoly([[[1.0]], [[0.9]]]))


def test_independent_channels_model():
    model = gen_model(4, 0, 1, 0.0, seed=1)
    Xs = model.sigma().coeffs
    assert np.all(Xs[:, ~np.eye(4, dtype=bool)] == 0)
    assert np.all(model.lam().coeffs == 0)
    assert len(model.edges()) == 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_generated_model_invariants(seed):
    model = gen_model(15, 1, 1, 0.1, seed)
    model.check()
    assert model.spectral_radius() < 1
    assert len(model.edges()) == 10
    L = model.L_matrix()
    assert np.sum(np.linalg.eigvalsh(L) > 1e-9 * np.abs(L).max()) == 1
    assert is_psd_on_grid(model.manifest_inverse(), FreqGrid())[1] > 0


def test_generation_is_deterministic():
    a = gen_model(15, 1, 1, 0.1, 42)
    b = gen_model(15, 1, 1, 0.1, 42)
    np.testing.assert_array_equal(a.A, b.A)
    assert a.edges() == b.edges()


def test_generation_validates_arguments():
    with pytest.raises(ValueError):
        gen_model(4, 5, 1, 0.1, 0)
    with pytest.raises(ValueError):
        gen_model(5, 1, 1, 0.9, 0)  # more edges than rows can carry


def test_precision_normalization():
    model = gen_model(6, 1, 1, 0.2, 0, normalize="precision")
    np.testing.assert_allclose(np.diag(model.sigma().coeffs[0]), 1.0, atol=1e-12)


def test_variance_normalization():
    model = gen_model(6, 1, 1, 0.2, 0, normalize="variance")
    np.testing.assert_allclose(np.diag(model.manifest_lags(0)[0]), 1.0, atol=1e-8)


def test_sample_identity_model():
    model = TrueModel(3, 0, 0, np.eye(3), seed=0)
    data = sample(model, 5000, seed=9)
    C = np.cov(data.values.T, bias=True)
    # 3 sigma bound on each entry: var(x_k x_h) = 1 (k != h) or 2 (k == h)
    bound = 3 * np.sqrt(np.where(np.eye(3, dtype=bool), 2.0, 1.0) / 5000)
    assert np.all(np.abs(C - np.eye(3)) <= bound + 1e-3)


def test_sample_scalar_ar1_ratio():
    model = TrueModel(1, 0, 1, np.array([[1.0, -0.6]]))
    data = sample(model, 20000, seed=1)
    cov = estimate_lags(data, 1)
    assert abs(cov.lags[1][0, 0] / cov.lags[0][0, 0] - 0.6) <= 0.03
    true = model.manifest_lags(1)
    assert abs(true[0][0, 0] - 1 / (1 - 0.36)) <= 1e-8


def test_sample_is_deterministic():
    model = gen_model(5, 1, 1, 0.2, 0)
    np.testing.assert_array_equal(sample(model, 100, seed=3).values, sample(model, 100, seed=3).values)


def test_lag_round_trip_large_sample():
    model = gen_model(5, 1, 1, 0.2, 4)
    data = sample(model, 50000, seed=4)
    est = estimate_lags(data, 1).lags.blocks
    true = model.manifest_lags(1).blocks
    assert np.linalg.norm(est - true) <= 0.05 * np.linalg.norm(true)


def test_default_burn_in():
    model = TrueModel(1, 0, 1, np.array([[1.0, -0.5]]))
    assert default_burn_in(model) == 10 * 2 * 2


def test_json_round_trip(tmp_path):
    model = gen_model(5, 1, 1, 0.2, 0)
    model.save(tmp_path / "m.json")
    back = TrueModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.A, model.A)
    assert back.edges() == model.edges()


def test_schur_complement_matches_joint_inverse():
    model = gen_model(4, 1, 1, 0.25, 0)
    grid = FreqGrid(64)
    J = evaluate(model.joint_inverse(), grid)
    m = model.m
    schur = J[:, :m, :m] - J[:, :m, m:] @ np.linalg.solve(J[:, m:, m:], J[:, m:, :m])
    np.testing.assert_allclose(schur, evaluate(model.manifest_inverse(), grid), atol=1e-10)
    np.testing.assert_allclose(J[:, :m, :m], evaluate(model.sigma(), grid), atol=1e-10)
