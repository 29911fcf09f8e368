import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coroica.covstats import MatrixSet, equal_blocks
from coroica.metrics import activation_map, cis_matrix, md_index, md_index_bruteforce, mcis, mcis_from_cis
from coroica.simgen import BlockVarSpec, gen_blockvar

from conftest import jointly_diagonalizable


def test_md_of_exact_inverse_is_zero(rng):
    A = rng.standard_normal((5, 5))
    assert md_index(np.linalg.inv(A), A).value < 1e-7


def test_md_scaled_permutation_is_zero(rng):
    A = rng.standard_normal((4, 4))
    P = np.eye(4)[[2, 0, 3, 1]]
    D = np.diag([3.0, -0.5, 2.0, 7.0])
    assert md_index(D @ P @ np.linalg.inv(A), A).value < 1e-7


def test_md_worked_example():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert md_index(np.eye(2), A).value == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert md_index_bruteforce(np.eye(2), A).value == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_md_errors(rng):
    with pytest.raises(ValueError, match="d = 1"):
        md_index([[1.0]], [[2.0]])
    with pytest.raises(ValueError, match="singular"):
        md_index(np.ones((3, 3)), np.eye(3))
    with pytest.raises(ValueError, match="d <= 8"):
        md_index_bruteforce(np.eye(9), np.eye(9))


def test_md_in_unit_interval_and_permutation_reported(rng):
    for _ in range(50):
        d = int(rng.integers(2, 7))
        s = md_index(rng.standard_normal((d, d)), rng.standard_normal((d, d)))
        assert 0.0 <= s.value <= 1.0
        assert sorted(s.optimal_permutation) == list(range(d))


@settings(max_examples=200, deadline=None)
@given(d=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_md_matches_bruteforce(d, seed):
    r = np.random.default_rng(seed)
    V, A = r.standard_normal((d, d)), r.standard_normal((d, d))
    assert abs(md_index(V, A).value - md_index_bruteforce(V, A).value) < 1e-12


def test_md_invariance_power_of_two_scalings_exact(rng):
    # power-of-two scalings and permutations change no floating point digit
    for _ in range(100):
        d = int(rng.integers(2, 7))
        V, A = rng.standard_normal((d, d)), rng.standard_normal((d, d))
        D = np.diag(rng.choice([-4.0, -1.0, 0.5, 2.0, 8.0], size=d))
        P = np.eye(d)[rng.permutation(d)]
        assert md_index(D @ P @ V, A).value == md_index(V, A).value


def test_md_invariance_general_scalings(rng):
    for _ in range(100):
        d = int(rng.integers(2, 7))
        V, A = rng.standard_normal((d, d)), rng.standard_normal((d, d))
        D = np.diag(rng.uniform(0.1, 10.0, size=d) * rng.choice([-1, 1], size=d))
        P = np.eye(d)[rng.permutation(d)]
        assert md_index(D @ P @ V, A).value == pytest.approx(md_index(V, A).value, abs=1e-12)


def test_md_affine_property(rng):
    V, A, W = (rng.standard_normal((4, 4)) for _ in range(3))
    assert md_index(V @ W, np.linalg.solve(W, A)).value == pytest.approx(md_index(V, A).value, abs=1e-12)


def test_cis_zero_on_identical_blocks(rng):
    block = rng.standard_normal((3, 50))
    S = np.hstack([block] * 4)
    cis = cis_matrix(S, equal_blocks(200, 50))
    assert np.all(cis >= 0)
    assert np.max(cis) < 1e-28
    assert mcis_from_cis(cis) < 1e-14


def test_cis_excludes_last_element():
    # only the last block differs, and it has no right neighbour of its own
    r = np.random.default_rng(0)
    block = r.standard_normal((2, 40))
    S = np.hstack([block, block, 3 * r.standard_normal((2, 40))])
    parts = equal_blocks(120, 40)
    cis = cis_matrix(S, parts)
    sigma = S.std(axis=1)
    C = [np.cov(S[:, p], bias=True) for p in parts]
    expected = np.mean([((C[0] - C[1]) / np.outer(sigma, sigma)) ** 2, ((C[1] - C[2]) / np.outer(sigma, sigma)) ** 2], axis=0)
    np.testing.assert_allclose(cis, expected, atol=1e-14)


def test_cis_zero_variance_component_named():
    S = np.vstack([np.arange(10.0), np.ones(10)])
    with pytest.raises(ValueError, match="component 1"):
        cis_matrix(S, equal_blocks(10, 5))


def test_mcis_examples(rng):
    assert mcis_from_cis(np.diag([3.0, 4.0, 5.0])) == 0.0
    assert mcis_from_cis(np.ones((4, 4))) == 1.0
    with pytest.raises(ValueError, match="d = 1"):
        mcis(rng.standard_normal((1, 20)), equal_blocks(20, 10))


def test_mcis_scale_invariance(rng):
    S = rng.standard_normal((3, 300)) * np.linspace(0.5, 2, 300)
    parts = equal_blocks(300, 50)
    base = mcis(S, parts)
    assert mcis(2.0 * S, parts) == base
    assert mcis(-0.37 * S, parts) == pytest.approx(base, rel=1e-12)


def test_true_unmixing_has_small_offdiagonal_cis():
    inst = gen_blockvar(BlockVarSpec(n=100_000, d=5, c1=1.0, c2=1.0, seed=2))
    idx = np.flatnonzero(inst.group_labels == 0)
    parts = [e - idx[0] for e in inst.partition[0]]
    cis_true = cis_matrix((np.linalg.inv(inst.A) @ inst.X)[:, idx], parts)
    off = ~np.eye(5, dtype=bool)
    assert cis_true[off].mean() < 0.1 * np.diag(cis_true).mean()
    V_rand = np.random.default_rng(0).standard_normal((5, 5))
    cis_rand = cis_matrix((V_rand @ inst.X)[:, idx], parts)
    assert cis_rand[off].mean() > cis_true[off].mean()


def test_activation_map_collinear_with_mixing_column(rng):
    A, mats = jointly_diagonalizable(rng, 5, 12)
    V = np.linalg.inv(A)
    for j in range(5):
        a = activation_map(V, MatrixSet(mats), j)
        cos = a @ A[:, j] / (np.linalg.norm(a) * np.linalg.norm(A[:, j]))
        assert abs(cos) > 1 - 1e-9


def test_activation_map_zero_and_errors():
    assert np.array_equal(activation_map(np.eye(3), [np.zeros((3, 3))], 1), np.zeros(3))
    with pytest.raises(ValueError, match="out of range"):
        activation_map(np.eye(3), [np.eye(3)], 3)
    with pytest.raises(ValueError, match="dimension"):
        activation_map(np.eye(3), [np.eye(2)], 0)
