from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arlvgm.covariance import CovSequence
from arlvgm.slsolve import (
    LatentStructure,
    RegParams,
    certify_sl,
    h_inf,
    identify_structure,
    latent_system,
    phi_star,
    phi_star_on_grid,
    primal_objective,
    recover_latent,
    recover_x,
    solve_sl_dual,
    support_edges,
    transversality,
    yule_walker,
)
from arlvgm.specpoly import BlockRow, EdgeSet, FreqGrid, adjoint_d, toeplitz

from conftest import random_cov

cp = pytest.importorskip("cvxpy")


def cvxpy_primal(cov: CovSequence, reg: RegParams, latent: bool = True):
    """Reference solution of the regularized primal by a generic conic solver."""
    m, n = cov.m, cov.n
    s = m * (n + 1)
    X = cp.Variable((s, s), symmetric=True)
    L = cp.Variable((s, s), symmetric=True) if latent else None
    Y = X + L if latent else X

    def blk(M, a, b):
        return M[a * m:(a + 1) * m, b * m:(b + 1) * m]

    D = [sum(blk(Y, h, h) for h in range(n + 1))]
    D += [2 * sum(blk(Y, h, h + j) for h in range(n + 1 - j)) for j in range(1, n + 1)]
    terms = []
    for k in range(m):
        for h in range(k + 1, m):
            entries = [D[0][k, h]] + [D[j][k, h] for j in range(1, n + 1)] + [D[j][h, k] for j in range(1, n + 1)]
            terms.append(cp.max(cp.abs(cp.hstack(entries))))
    obj = -cp.log_det(X[:m, :m]) + cp.trace(cov.toeplitz() @ X)
    if terms:
        obj = obj + reg.lam_gamma * sum(terms)
    cons = [X >> 0]
    if latent:
        obj = obj + reg.lam * cp.trace(L)
        cons.append(L >> 0)
    val = cp.Problem(cp.Minimize(obj), cons).solve(solver=cp.CLARABEL)
    return val, X.value, (L.value if latent else None)


# --------------------------------------------------------------------------
# regularizers


def test_h_inf_brute_force(rng):
    Y = rng.standard_normal((3, 4, 4))
    Y[0] = 0.5 * (Y[0] + Y[0].T)
    ref = 0.0
    for k in range(4):
        for h in range(k):
            ref += max(max(abs(Y[j, k, h]), abs(Y[j, h, k])) for j in range(3))
    assert np.isclose(h_inf(BlockRow(Y)), ref)


def test_phi_star_equals_grid_singular_values(rng):
    for _ in range(5):
        A = rng.standard_normal((6, 2))
        L = A @ A.T
        assert np.isclose(phi_star(L), phi_star_on_grid(L, 2), atol=1e-8)


def test_phi_star_rejects_indefinite():
    with pytest.raises(ValueError):
        phi_star(np.diag([1.0, -1.0]))


def test_reg_params():
    r = RegParams.from_sparsity_weight(2.0, 0.5)
    assert np.isclose(r.gamma, 0.25) and np.isclose(r.lam_gamma, 0.5)
    with pytest.raises(ValueError):
        RegParams(0.0, 1.0)


# --------------------------------------------------------------------------
# Yule-Walker and recovery


def test_yule_walker_equations(rng):
    cov = random_cov(rng, 3, 2)
    T = cov.toeplitz()
    B, W = yule_walker(T, 3)
    rhs = np.zeros((9, 3))
    rhs[:3] = W
    np.testing.assert_allclose(T @ B.T, rhs, atol=1e-12)
    np.testing.assert_array_equal(B[:, :3], np.eye(3))


def test_yule_walker_jensen(rng):
    # int log det (Delta X Delta^*) = log det X_00 for X = B^T W^{-1} B
    from arlvgm.specpoly import delta_quadratic, evaluate, integrate

    cov = random_cov(rng, 3, 2)
    B, W = yule_walker(cov.toeplitz(), 3)
    X = B.T @ np.linalg.solve(W, B)
    vals = evaluate(delta_quadratic(X, 3), FreqGrid(512))
    lhs = float(integrate(np.linalg.slogdet(vals)[1]))
    assert abs(lhs - np.linalg.slogdet(X[:3, :3])[1]) <= 1e-6


# --------------------------------------------------------------------------
# dual solver against a generic conic solver


@pytest.mark.parametrize("m,n,lam,lg", [(3, 1, 0.5, 0.05), (4, 1, 0.3, 0.1), (3, 2, 1.0, 0.02), (4, 0, 0.4, 0.05)])
def test_dual_matches_cvxpy_primal(m, n, lam, lg):
    rng = np.random.default_rng(100 * m + n)
    cov = random_cov(rng, m, n)
    reg = RegParams.from_sparsity_weight(lam, lg)
    val, Xc, Lc = cvxpy_primal(cov, reg)
    dual, X, structure = identify_structure(cov, reg)
    assert abs(dual.objective - val) <= 1e-6 * (1 + abs(val))
    np.testing.assert_allclose(X, Xc, atol=2e-4 * max(1.0, np.abs(Xc).max()))
    lc = int(np.sum(np.linalg.eigvalsh(Lc) > 1e-5 * max(1.0, np.abs(Lc).max())))
    assert structure.l == lc
    np.testing.assert_allclose(structure.L(), Lc, atol=1e-3 * max(1.0, np.abs(Xc).max()))


def test_sparse_only_matches_cvxpy():
    rng = np.random.default_rng(7)
    cov = random_cov(rng, 4, 1)
    reg = RegParams.from_sparsity_weight(1.0, 0.05)
    val, Xc, _ = cvxpy_primal(cov, reg, latent=False)
    dual, X, structure = identify_structure(cov, reg, latent=False)
    assert structure.l == 0 and dual.V is None
    assert abs(dual.objective - val) <= 1e-6 * (1 + abs(val))
    np.testing.assert_allclose(X, Xc, atol=2e-4 * max(1.0, np.abs(Xc).max()))


def test_certificate_small_instance():
    rng = np.random.default_rng(11)
    cov = random_cov(rng, 4, 1)
    reg = RegParams.from_sparsity_weight(0.3, 0.08)
    dual, X, structure = identify_structure(cov, reg)
    cert = certify_sl(dual, cov, X, structure)
    assert cert["relative_gap"] <= 1e-6
    assert abs(cert["UX"]) <= 1e-6 and abs(cert["VL"]) <= 1e-6
    assert cert["rank_X"] == 4
    assert cert["min_eig_spectrum_X"] > 0


def test_large_sparsity_weight_gives_empty_graph():
    rng = np.random.default_rng(2)
    cov = random_cov(rng, 3, 1)
    dual, X, structure = identify_structure(cov, RegParams.from_sparsity_weight(100.0, 100.0))
    assert len(structure.E) == 0 and structure.l == 0


def test_small_weights_give_complete_graph():
    rng = np.random.default_rng(2)
    cov = random_cov(rng, 3, 1)
    dual, X, structure = identify_structure(cov, RegParams.from_sparsity_weight(100.0, 1e-4))
    assert len(structure.E) == 3 and structure.l == 0


def test_dual_feasibility_of_solution():
    rng = np.random.default_rng(4)
    cov = random_cov(rng, 4, 1)
    reg = RegParams.from_sparsity_weight(0.4, 0.1)
    dual = solve_sl_dual(cov, reg)
    Z = dual.Z.blocks
    assert np.all(np.einsum("jkk->jk", Z) == 0)
    A = np.abs(Z).sum(axis=0)
    assert np.all(A + A.T <= reg.lam_gamma * (1 + 1e-9) + 1e-12)
    assert np.linalg.eigvalsh(dual.U)[0] > -1e-10
    assert np.linalg.eigvalsh(dual.V)[0] > -1e-10


# --------------------------------------------------------------------------
# latent structure helpers


def test_latent_system_columns(rng):
    m, n, l = 3, 1, 2
    G = rng.standard_normal((l, m * (n + 1)))
    pairs = [(0, 1), (1, 2)]
    A = latent_system(G, m, pairs)
    H = np.array([[1.0, 0.3], [0.3, 2.0]])
    y = np.array([H[0, 0], H[0, 1], H[1, 1]])
    D = adjoint_d(G.T @ H @ G, m).blocks
    # rows: all (k, h) orderings then all (h, k), lag-major
    ks = [0, 1, 1, 2]
    hs = [1, 2, 0, 1]
    np.testing.assert_allclose(A @ y, D[:, ks, hs].ravel(), atol=1e-12)


def test_transversality():
    m, n = 4, 0
    G = np.ones((1, 4)) / 2
    assert transversality(EdgeSet.empty(m), G, n)
    assert not transversality(EdgeSet.complete(m), G, n)


def test_support_edges_threshold():
    X = np.eye(3)
    X[0, 1] = X[1, 0] = 0.5
    X[1, 2] = X[2, 1] = 1e-9
    E = support_edges(X, np.zeros((3, 3)), 3)
    assert E.sorted_pairs() == [(0, 1)]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(0.1, 2.0), lg=st.floats(0.01, 0.5))
def test_property_certificate(seed, lam, lg):
    rng = np.random.default_rng(seed)
    cov = random_cov(rng, 3, 1, N=200)
    reg = RegParams.from_sparsity_weight(lam, lg)
    dual, X, structure = identify_structure(cov, reg)
    cert = certify_sl(dual, cov, X, structure)
    assert cert["relative_gap"] <= 1e-6
    assert cert["rank_X"] == 3
