import numpy as np
import pytest

from patchsparse.core import (Dictionary, GlobalRep, NonMinimalSupportError,
                              PatchModel, SupportSequence, all_patches,
                              average_patches, build_bundle,
                              check_overlap_agreement, embed_patch,
                              extract_patch, kernel, overlap_violation,
                              patch_matrix, shift_operator,
                              support_residual_matrix, synthesize)
from patchsparse.dictionaries import heaviside, signature


def random_dictionary(rng, n, m):
    return Dictionary(rng.standard_normal((n, m)))


def test_extract_patch_no_wrap():
    x = np.array([1.0, 2, 3, 4, 5])
    assert np.array_equal(extract_patch(x, 0, 3), [1, 2, 3])


def test_extract_patch_periodic_wrap():
    x = np.array([1.0, 2, 3, 4, 5])
    assert np.array_equal(extract_patch(x, 3, 3), [4, 5, 1])


def test_extract_patch_length_error():
    with pytest.raises(ValueError):
        extract_patch(np.ones(4), 0, 5)


def test_embed_patch_plain_and_wrap():
    assert np.array_equal(embed_patch([7.0, 8.0], 2, 4), [0, 0, 7, 8])
    assert np.array_equal(embed_patch([7.0, 8.0], 3, 4), [8, 0, 0, 7])


def test_embed_is_adjoint_of_extract():
    rng = np.random.default_rng(0)
    for _ in range(20):
        N, n = 11, 4
        x = rng.standard_normal(N)
        p = rng.standard_normal(n)
        i = int(rng.integers(N))
        lhs = extract_patch(x, i, n) @ p
        rhs = x @ embed_patch(p, i, N)
        assert abs(lhs - rhs) <= 1e-12


def test_resolution_of_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(17)
    n = 5
    acc = np.zeros(17)
    for i in range(17):
        acc += embed_patch(extract_patch(x, i, n), i, 17)
    assert np.max(np.abs(acc / n - x)) <= 1e-12
    assert np.max(np.abs(average_patches(all_patches(x, n)) - x)) <= 1e-12


def test_energy_identity():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        N = int(rng.integers(n, 30))
        rho = rng.standard_normal(N)
        patch_energy = np.sum(all_patches(rho, n) ** 2) / n
        assert abs(patch_energy - rho @ rho) <= 1e-12 * max(1.0, rho @ rho)


def test_shift_operator_shapes_and_action():
    st = shift_operator("S_T", 1, 3)
    sb = shift_operator("S_B", 1, 3)
    v = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(st @ v, [1, 2])
    assert np.array_equal(sb @ v, [2, 3])
    assert shift_operator("S_T", 2, 5).shape == (3, 5)
    for kind in ("Z_T", "Z_B", "W_T", "W_B"):
        assert shift_operator(kind, 2, 5).shape == (5, 5)
    with pytest.raises(ValueError):
        shift_operator("S_T", 5, 5)


def test_z_fold_power_identity():
    n = 5
    z1t = shift_operator("Z_T", 1, n)
    z1b = shift_operator("Z_B", 1, n)
    for k in range(n):
        assert np.array_equal(shift_operator("Z_T", k, n),
                              np.linalg.matrix_power(z1t, k))
        assert np.array_equal(shift_operator("Z_B", k, n),
                              np.linalg.matrix_power(z1b, k))


def test_resolution_identity_of_w_operators():
    for n in (2, 4, 6, 9):
        acc = np.zeros((n, n))
        for k in range(1, n):
            acc += shift_operator("W_B", k, n) + shift_operator("W_T", k, n)
        assert np.array_equal(acc, (n - 1) * np.eye(n))


def test_overlap_propagation():
    # windows of a common periodic vector agree pairwise, hence propagate
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        N = int(rng.integers(n + 1, 25))
        w = rng.standard_normal(N)
        U = all_patches(w, n)
        for k in range(n):
            wb = shift_operator("W_B", k, n)
            zt = shift_operator("Z_T", k, n)
            zb = shift_operator("Z_B", k, n)
            wt = shift_operator("W_T", k, n)
            for i in range(N):
                j = (i + k) % N
                assert np.allclose(wb @ U[:, i], zt @ U[:, j], atol=1e-12)
                assert np.allclose(zb @ U[:, i], wt @ U[:, j], atol=1e-12)


def test_bundle_shapes_and_identity_dictionary():
    D = Dictionary(np.eye(2))
    model = PatchModel(D, 1, 3)
    b = build_bundle(model)
    assert b.DG.shape == (3, 6)
    # first atom embedded at patch 0 and divided by n
    assert np.array_equal(b.DG[:, 0], [0.5, 0, 0])
    assert b.M.shape == (6, 6)
    assert b.Mstar.shape == (3, 6)


def test_bundle_block_structure():
    rng = np.random.default_rng(4)
    D = random_dictionary(rng, 3, 5)
    model = PatchModel(D, 2, 8)
    b = build_bundle(model)
    n, m, N = 3, 5, 8
    for i in range(N):
        stripe = b.DG[(i + np.arange(n)) % N, :]
        q = np.zeros((n, m * N))
        q[:, i * m:(i + 1) * m] = D.atoms
        assert np.allclose(b.M[i * n:(i + 1) * n], q - stripe)
        # banded stripes: at most (2n-1)m nonzero columns
        nonzero_cols = np.count_nonzero(np.any(stripe != 0.0, axis=0))
        assert nonzero_cols <= (2 * n - 1) * m


def test_full_rank_square_dictionary_represents_everything():
    rng = np.random.default_rng(5)
    D = Dictionary(rng.standard_normal((3, 3)))
    N = 7
    model = PatchModel(D, 2, N)
    b = build_bundle(model)
    x = rng.standard_normal(N)
    blocks = np.linalg.solve(D.atoms, all_patches(x, 3)).T
    gamma = GlobalRep(blocks)
    assert np.max(np.abs(b.DG @ gamma.vector() - x)) <= 1e-10
    assert np.max(np.abs(b.M @ gamma.vector())) <= 1e-10
    assert np.max(np.abs(synthesize(gamma, D) - x)) <= 1e-10


@pytest.mark.parametrize("n,m,N", [(2, 3, 6), (3, 5, 8), (4, 6, 12)])
def test_kernel_dimension_law(n, m, N):
    rng = np.random.default_rng(100 * n + m)
    for _ in range(5):
        D = random_dictionary(rng, n, m)
        b = build_bundle(PatchModel(D, 1, N))
        _, dim = kernel(b.M)
        assert dim == N * (m - n + 1)


def test_m_and_mstar_have_equal_kernels():
    rng = np.random.default_rng(6)
    D = random_dictionary(rng, 3, 5)
    b = build_bundle(PatchModel(D, 2, 8))
    WM, dm = kernel(b.M)
    WS, ds = kernel(b.Mstar)
    assert dm == ds
    # the two bases span the same subspace
    assert np.allclose(WM @ (WM.T @ WS), WS, atol=1e-8)


def test_objective_equivalence_on_agreeing_representations():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n, m, N = 4, 6, 9
        D = random_dictionary(rng, n, m)
        x = rng.standard_normal(N)
        blocks = np.stack([np.linalg.lstsq(D.atoms, p, rcond=None)[0]
                           for p in all_patches(x, n).T])
        gamma = GlobalRep(blocks)
        assert overlap_violation(gamma, D) <= 1e-8
        y = rng.standard_normal(N)
        b = build_bundle(PatchModel(D, 3, N))
        lhs = np.sum((y - b.DG @ gamma.vector()) ** 2)
        rhs = np.sum((all_patches(y, n) - D.atoms @ blocks.T) ** 2) / n
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, lhs)


def test_overlap_agreement_checker():
    base = np.random.default_rng(8).standard_normal(7)
    D = heaviside(4)
    # constant signal: every patch is c * (all-ones atom)
    blocks = np.zeros((9, 4))
    blocks[:, 3] = 2.5
    gamma = GlobalRep(blocks)
    assert check_overlap_agreement(gamma, D, tol=1e-12)
    noisy = blocks.copy()
    noisy[4, 1] += 1.0
    assert not check_overlap_agreement(GlobalRep(noisy), D, tol=1e-8)


def test_overlap_agreement_matches_mstar_kernel():
    rng = np.random.default_rng(9)
    D = random_dictionary(rng, 3, 5)
    b = build_bundle(PatchModel(D, 2, 8))
    W, dim = kernel(b.M)
    v = W @ rng.standard_normal(dim)
    gamma = GlobalRep.from_vector(v, 5)
    assert check_overlap_agreement(gamma, D, tol=1e-8)
    assert np.max(np.abs(b.Mstar @ v)) <= 1e-8


def test_kernel_edge_cases():
    basis, dim = kernel(np.zeros((3, 3)))
    assert dim == 3 and basis.shape == (3, 3)
    _, dim = kernel(np.eye(4))
    assert dim == 0


def test_support_residual_matrix_annihilates_constant_signal():
    n, N = 4, 9
    D = heaviside(n)
    sups = SupportSequence.from_lists([[n - 1]] * N, n)
    A = support_residual_matrix(D, sups, N)
    x = 3.0 * np.ones(N)
    assert np.max(np.abs(A @ x)) <= 1e-12
    _, dim = kernel(A)
    assert dim == 1


def test_support_residual_matrix_empty_support_blocks():
    rng = np.random.default_rng(10)
    D = random_dictionary(rng, 3, 4)
    sups = SupportSequence.from_lists([[]] * 6, 4)
    A = support_residual_matrix(D, sups, 6)
    # empty projector: block i is exactly the patch extractor
    assert np.allclose(A[:3, :], patch_matrix(0, 3, 6))


def test_support_residual_matrix_rejects_dependent_atoms():
    atoms = np.eye(3)[:, [0, 1, 0]]          # repeated column
    D = Dictionary(atoms)
    sups = SupportSequence.from_lists([[0, 2]] * 5, 3)
    with pytest.raises(NonMinimalSupportError):
        support_residual_matrix(D, sups, 5)


def test_spanning_support_keeps_patch():
    rng = np.random.default_rng(11)
    D = random_dictionary(rng, 3, 6)
    N = 7
    x = rng.standard_normal(N)
    # supports of size n-1 won't annihilate a generic signal, but a full
    # independent triple would not be allowed (s < n); check the projector
    # contribution vanishes when the patch lies in the span
    sup = (0, 1)
    patch = D.atoms[:, list(sup)] @ rng.standard_normal(2)
    x = embed_patch(patch, 2, N)
    A = support_residual_matrix(
        D, SupportSequence.from_lists([list(sup)] * N, 6), N)
    block = A[2 * 3:(3 * 3), :]
    assert np.max(np.abs(block @ x)) <= 1e-10


def test_globalrep_accounting():
    g = GlobalRep(np.array([[0.0, 1.0, 0.0], [2.0, 0.0, 3.0]]))
    assert g.l0inf() == 2
    assert g.support().supports == ((1,), (0, 2))
    assert np.array_equal(GlobalRep.from_vector(g.vector(), 3).blocks, g.blocks)


def test_dictionary_validation():
    with pytest.raises(ValueError):
        Dictionary(np.ones((1, 3)))
    with pytest.raises(ValueError):
        Dictionary(np.array([[np.inf, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        Dictionary(np.ones((3, 2)), normalized=True)
    with pytest.raises(ValueError):
        PatchModel(Dictionary(np.eye(3)), 3, 6)      # s must stay below n


def test_support_sequence_validation():
    with pytest.raises(ValueError):
        SupportSequence.from_lists([[0, 0]], 3)
    with pytest.raises(ValueError):
        SupportSequence.from_lists([[3]], 3)
