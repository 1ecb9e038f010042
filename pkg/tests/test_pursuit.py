import itertools

import numpy as np
import pytest

from patchsparse.core import (Dictionary, PatchModel, SupportSequence,
                              kernel, support_residual_matrix)
from patchsparse.dictionaries import heaviside, normalize_atoms, signature
from patchsparse.graphmodel import build_graph, enumerate_paths, sample_signal
from patchsparse.pursuit import (QompSolver, admm_pursuit, averaging_operator,
                                 lpa, omp, oracle_project, project_to_model,
                                 qomp)
from patchsparse.bench import (add_noise, derive_rng, sample_pwc_signal,
                               sample_signature_signal)


def test_omp_identity_dictionary():
    coef, sel = omp(np.eye(4), np.eye(4)[:, 2], K=1)
    assert sel == [2]
    assert coef[2] == pytest.approx(1.0)


def test_omp_stops_on_residual():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 8))
    y = 2.0 * A[:, 3]
    coef, sel = omp(A, y, K=2, res_tol=1e-10)
    assert sel == [3]
    assert coef[3] == pytest.approx(2.0)


def test_omp_exact_recovery_exhaustive():
    # guarantee regime mu1(1) + mu1(2) < 1: every 2-sparse support recovered
    from patchsparse.dictionaries import optimize_signature_coherence
    from patchsparse.measures import babel_mu1
    _, D, _ = optimize_signature_coherence(6, 8, iterations=3000, step=0.1,
                                           seed=3)
    assert babel_mu1(D, 1) + babel_mu1(D, 2) < 1.0
    A = D.atoms
    rng = np.random.default_rng(1)
    for sup in itertools.combinations(range(8), 2):
        coefs = rng.standard_normal(2) + np.sign(rng.standard_normal(2))
        y = A[:, list(sup)] @ coefs
        _, sel = omp(A, y, K=2)
        assert set(sel) == set(sup)


def test_omp_zero_target():
    coef, sel = omp(np.eye(3), np.zeros(3), K=2)
    assert sel == [] and not coef.any()


@pytest.fixture(scope="module")
def sig_setup():
    rng = np.random.default_rng(2)
    base = rng.standard_normal(10)
    D = signature(base, 6)
    return base, D


@pytest.fixture(scope="module")
def incoherent_sig_setup():
    from patchsparse.dictionaries import optimize_signature_coherence
    base, D, _ = optimize_signature_coherence(6, 10, iterations=2000,
                                              step=0.1, seed=0)
    return base, D


def test_lpa_exact_on_clean_signals(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(3)
    for s in (1, 2):
        model = PatchModel(D, s, 30)
        for _ in range(5):
            x, g0, s0 = sample_signature_signal(base, 6, 30, s, rng)
            res = lpa(model, x)
            assert res.support == s0
            assert np.linalg.norm(res.xhat - x) <= 1e-8
            assert not res.projected


def test_lpa_constant_signal_oracle_supports():
    D = heaviside(5)
    model = PatchModel(D, 1, 12)
    x = 1.7 * np.ones(12)
    res = lpa(model, x)
    assert np.allclose(res.xhat, x, atol=1e-10)
    assert all(s == (4,) for s in res.support.supports)


def test_oracle_project_fixed_point(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(4)
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[0]
    x, _ = sample_signal(path, D, 30, rng)
    assert np.allclose(oracle_project(x, path, D, mode="direct"), x, atol=1e-10)
    assert np.allclose(oracle_project(x, path, D, mode="iterative", tol=1e-12),
                       x, atol=1e-8)


def test_oracle_project_modes_agree(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(5)
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[1]
    y = rng.standard_normal(30)
    xd = oracle_project(y, path, D, mode="direct")
    xi = oracle_project(y, path, D, mode="iterative", tol=1e-11)
    assert np.linalg.norm(xd - xi) <= 1e-7


def test_oracle_project_pwc_segment_means():
    D = heaviside(4)
    N = 12
    rng = derive_rng(6)
    x, lengths, S = sample_pwc_signal(N, 4, rng, segments=2)
    y = add_noise(x, 0.3, rng=derive_rng(7))
    xg = oracle_project(y, S, D, mode="direct")
    # per-segment averaging over the circular segments of x
    for value in np.unique(x):
        mask = x == value
        assert np.max(np.abs(xg[mask] - np.mean(y[mask]))) <= 1e-8


def test_averaging_operator_contraction_and_spectrum(sig_setup):
    base, D = sig_setup
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[0]
    MA = averaging_operator(D, path, 30)
    assert np.linalg.norm(MA, 2) <= 1.0 + 1e-10
    # eigenvalues are 1 - sigma_i^2 / n for the singular values of A_S
    A = support_residual_matrix(D, path, 30)
    sv = np.linalg.svd(A, compute_uv=False)
    expected = np.sort(1.0 - sv ** 2 / D.n)
    got = np.sort(np.linalg.eigvalsh(MA))
    assert np.max(np.abs(got - expected)) <= 1e-8


def test_iterated_averaging_converges_to_projector(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(8)
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[3]
    MA = averaging_operator(D, path, 30)
    W, _ = kernel(support_residual_matrix(D, path, 30))
    y = rng.standard_normal(30)
    x = y.copy()
    target = W @ (W.T @ y)
    gaps = []
    for k in range(2000):
        x = MA @ x
        gaps.append(np.linalg.norm(x - target))
        if gaps[-1] <= 1e-7:
            break
    assert gaps[-1] <= 1e-7
    # geometric decay overall
    assert gaps[-1] < 1e-3 * gaps[0]


def test_project_to_model_idempotent_and_pythagorean(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(9)
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[4]
    y = rng.standard_normal(30)
    p = project_to_model(y, path, D)
    assert np.allclose(project_to_model(p, path, D), p, atol=1e-10)
    assert (np.linalg.norm(y - p) ** 2 + np.linalg.norm(p) ** 2
            == pytest.approx(np.linalg.norm(y) ** 2, rel=1e-10))


def test_qomp_zero_signal(sig_setup):
    base, D = sig_setup
    model = PatchModel(D, 2, 30)
    res = qomp(model, np.zeros(30), beta=1.0)
    assert not res.gamma.blocks.any()
    assert not res.xhat.any()


def test_qomp_recovers_clean_signals(incoherent_sig_setup):
    base, D = incoherent_sig_setup
    rng = np.random.default_rng(10)
    for s in (1, 2):
        model = PatchModel(D, s, 30)
        solver = QompSolver(model, beta=1.0)
        for _ in range(3):
            x, g0, s0 = sample_signature_signal(base, 6, 30, s, rng)
            res = solver.solve(x, K_global=int(np.count_nonzero(g0.blocks)))
            assert res.support == s0
            assert res.projected
            assert np.linalg.norm(res.xhat - x) <= 1e-8
            assert res.overlap_violation <= 1e-8


def test_qomp_patch_cap_enforced(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(11)
    model = PatchModel(D, 2, 30)
    y = rng.standard_normal(30)
    res = qomp(model, y, beta=1.0, project=False)
    assert res.gamma.l0inf() <= 2


def test_qomp_beta_zero_limit_matches_plain_global_omp(sig_setup):
    # with a vanishing constraint weight the selection sequence equals OMP on
    # the plain global dictionary (patch caps applied identically)
    base, D = sig_setup
    from patchsparse.core import build_bundle
    rng = np.random.default_rng(12)
    model = PatchModel(D, 2, 30)
    y = rng.standard_normal(30)
    solver = QompSolver(model, beta=1e-9)
    _, order = solver.solve(y, K_global=12, project=False, return_order=True)

    bundle = build_bundle(model)
    DG = bundle.DG
    norms = np.linalg.norm(DG, axis=0)
    blocked = np.zeros(DG.shape[1], dtype=bool)
    count = np.zeros(30, dtype=int)
    sel = []
    r = y.copy()
    for _ in range(12):
        score = np.abs(DG.T @ r) / norms
        score[blocked] = -np.inf
        j = int(np.argmax(score))
        sel.append(j)
        blocked[j] = True
        p = j // model.m
        count[p] += 1
        if count[p] >= 2:
            blocked[p * model.m:(p + 1) * model.m] = True
        c, *_ = np.linalg.lstsq(DG[:, sel], y, rcond=None)
        r = y - DG[:, sel] @ c
    assert order == sel


def test_admm_clean_recovery(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(13)
    for s in (1, 2):
        model = PatchModel(D, s, 30)
        x, g0, s0 = sample_signature_signal(base, 6, 30, s, rng)
        res = admm_pursuit(model, x, rho=1.0, outer_iters=300, tol=1e-8)
        assert res.support == s0
        assert np.linalg.norm(res.xhat - x) <= 1e-6
        assert res.overlap_violation <= 1e-8
        assert res.projected


def test_admm_zero_signal(sig_setup):
    base, D = sig_setup
    model = PatchModel(D, 2, 30)
    res = admm_pursuit(model, np.zeros(30), outer_iters=50)
    assert not res.xhat.any()
    assert res.gamma.l0inf() == 0


def test_admm_sparsity_cap(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(14)
    model = PatchModel(D, 2, 30)
    y = rng.standard_normal(30)
    res = admm_pursuit(model, y, outer_iters=80)
    assert res.gamma.l0inf(tol=1e-12) <= 2


def test_pursuit_projected_invariant(sig_setup):
    base, D = sig_setup
    rng = np.random.default_rng(15)
    model = PatchModel(D, 1, 30)
    x, _, s0 = sample_signature_signal(base, 6, 30, 1, rng)
    y = add_noise(x, 0.1, rng=derive_rng(16))
    res = qomp(model, y, beta=1.0, K_global=30)
    if res.projected:
        assert res.overlap_violation <= 1e-8
        A = support_residual_matrix(D, res.support, 30)
        assert np.max(np.abs(A @ res.xhat)) <= 1e-8


def test_oracle_mse_law_monte_carlo(sig_setup):
    base, D = sig_setup
    G = build_graph(D, 1)
    path = enumerate_paths(G, 30).paths[0]
    W, dim = kernel(support_residual_matrix(D, path, 30))
    sigma = 0.4
    rng = derive_rng(17)
    Z = sigma * rng.standard_normal((30, 4000))
    err = W @ (W.T @ Z)
    mse = float(np.mean(np.sum(err ** 2, axis=0)))
    se = sigma ** 2 * np.sqrt(2 * dim / 4000)
    assert abs(mse - dim * sigma ** 2) <= 3 * se
