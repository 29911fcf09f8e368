import numpy as np
import pytest
from scipy.signal import lfilter

from coroica.covstats import GroupedPartition
from coroica.metrics import activation_map, md_index
from coroica.separation import (
    SeparationConfig,
    SeparationModel,
    choiica_fit,
    coroica_fit,
    coroica_matrices,
    fit,
    random_unmixing,
    sobi_fit,
    transform,
)
from coroica.simgen import BlockVarSpec, gen_blockvar



@pytest.fixture(scope="module")
def ds1():
    return gen_blockvar(BlockVarSpec(n=40_000, d=6, c1=1.0, c2=1.0, seed=11))


def cfg(**kw):
    base = dict(partition=400, strategy="complement")
    base.update(kw)
    return SeparationConfig(**base)


def test_config_lag_invariants():
    assert SeparationConfig(signal="td").lags == (1, 2, 3, 4, 5)
    assert SeparationConfig(signal="var_and_td", lags=(2, 0)).lags == (0, 2)
    with pytest.raises(ValueError):
        SeparationConfig(signal="var", lags=(0, 1))
    with pytest.raises(ValueError):
        SeparationConfig(signal="td", lags=(0, 1))
    with pytest.raises(ValueError):
        SeparationConfig(signal="var_and_td", lags=(0,))
    with pytest.raises(ValueError):
        SeparationConfig(method="fastica")


def test_one_dimensional_input():
    x = np.random.default_rng(0).standard_normal((1, 1000)) * np.repeat([1.0, 3.0], 500)
    model = coroica_fit(x, None, cfg(partition=100))
    assert model.V.shape == (1, 1) and model.V[0, 0] == 1.0


def test_coroica_beats_choiica_under_confounding(ds1):
    md_coro = md_index(coroica_fit(ds1.X, ds1.group_labels, cfg()).V, ds1.A).value
    md_choi = md_index(choiica_fit(ds1.X, cfg(method="choiica")).V, ds1.A).value
    assert md_coro < 0.3
    assert md_choi > md_coro


def test_model_invariants(ds1):
    model = coroica_fit(ds1.X, ds1.group_labels, cfg())
    assert np.max(np.abs(model.V @ model.A_hat - np.eye(6))) < 1e-8
    np.testing.assert_allclose(np.linalg.norm(model.V, axis=1), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        model.V[0, 0] = 0.0
    assert model.diagnostics.converged


def test_partition_too_coarse(ds1):
    with pytest.raises(ValueError, match="too coarse"):
        coroica_fit(ds1.X, ds1.group_labels, cfg(partition=10_000))


def test_missing_partition(ds1):
    with pytest.raises(ValueError, match="partition"):
        coroica_fit(ds1.X, ds1.group_labels, SeparationConfig())


def test_scale_invariance(ds1):
    a = md_index(coroica_fit(ds1.X, ds1.group_labels, cfg()).V, ds1.A).value
    b = md_index(coroica_fit(3.7 * ds1.X, ds1.group_labels, cfg()).V, ds1.A).value
    assert abs(a - b) < 1e-10


def test_group_permutation_invariance(ds1):
    order = np.concatenate([np.flatnonzero(ds1.group_labels == g) for g in [4, 9, 0, 2, 1, 3, 8, 5, 7, 6]])
    m1 = coroica_fit(ds1.X, ds1.group_labels, cfg(strategy="neighbor"))
    m2 = coroica_fit(ds1.X[:, order], ds1.group_labels[order], cfg(strategy="neighbor"))
    assert m1.diagnostics.converged and m2.diagnostics.converged
    assert md_index(m1.V @ np.linalg.inv(m2.V), np.eye(6)).value < 1e-8


def test_explicit_partition_and_multigrid(ds1):
    gp = GroupedPartition(
        tuple(np.flatnonzero(ds1.group_labels == g) for g in range(10)),
        tuple(tuple(ds1.partition[g]) for g in range(10)),
    )
    model = coroica_fit(ds1.X, None, cfg(partition=gp))
    assert md_index(model.V, ds1.A).value < 0.3
    single = coroica_matrices(ds1.X, ds1.group_labels, cfg(partition=400))
    pooled = coroica_matrices(ds1.X, ds1.group_labels, cfg(partition=(400, 1000)))
    assert len(pooled) == len(single) + 10 * 4


def test_transform_examples(ds1):
    ident = SeparationModel.from_unmixing(np.eye(6))
    assert np.array_equal(transform(ident, ds1.X), ds1.X)
    model = coroica_fit(ds1.X, ds1.group_labels, cfg())
    assert np.array_equal(model.transform(np.zeros((6, 5))), np.zeros((6, 5)))
    with pytest.raises(ValueError, match="channels"):
        transform(model, np.zeros((5, 5)))


def test_transform_recovers_sources_without_confounding():
    inst = gen_blockvar(BlockVarSpec(n=50_000, d=4, c1=0.0, c2=2.0, seed=5))
    model = coroica_fit(inst.X, inst.group_labels, cfg(partition=500))
    S_hat = transform(model, inst.X)
    corr = np.abs(np.corrcoef(S_hat, inst.S)[:4, 4:])
    assert np.all(corr.max(axis=1) > 0.95)


def test_unseen_groups_use_the_fixed_map(ds1):
    train = ds1.group_labels < 5
    model = coroica_fit(ds1.X[:, train], ds1.group_labels[train], cfg())
    np.testing.assert_array_equal(transform(model, ds1.X[:, ~train]), model.V @ ds1.X[:, ~train])


def test_choiica_exact_block_set(rng):
    # each block's sources have exactly diagonal empirical covariance, so the
    # block covariances of X are exactly A D_j A^T
    d, m, blocks = 4, 200, 6
    A = rng.standard_normal((d, d))
    parts = []
    for _ in range(blocks):
        Z = rng.standard_normal((m, d))
        Q, _ = np.linalg.qr(Z - Z.mean(axis=0))
        parts.append(np.sqrt(m * rng.uniform(0.1, 2.0, size=d))[:, None] * Q.T)
    X = A @ np.hstack(parts)
    model = choiica_fit(X, SeparationConfig(method="choiica", partition=m))
    assert md_index(model.V, A).value < 1e-6


def test_choiica_comparable_without_confounding():
    inst = gen_blockvar(BlockVarSpec(n=40_000, d=6, c1=0.0, c2=1.0, seed=8))
    coro = md_index(coroica_fit(inst.X, inst.group_labels, cfg()).V, inst.A).value
    choi = md_index(choiica_fit(inst.X, cfg(method="choiica")).V, inst.A).value
    assert coro - choi < 0.1


def ar1_mixture(n, coefs, seed):
    r = np.random.default_rng(seed)
    S = np.vstack([lfilter([1.0], [1.0, -c], r.standard_normal(n)) for c in coefs])
    A = r.standard_normal((len(coefs), len(coefs)))
    return A, S, A @ S


def test_sobi_recovers_ar_sources():
    A, _, X = ar1_mixture(100_000, [0.9, 0.5, -0.3, 0.1], 0)
    assert md_index(sobi_fit(X, 10).V, A).value < 0.05


def test_sobi_on_white_noise_is_near_random():
    r = np.random.default_rng(1)
    A = r.standard_normal((4, 4))
    X = A @ r.standard_normal((4, 20_000))
    md_sobi = md_index(sobi_fit(X, 5).V, A).value
    assert md_sobi > 0.3


def test_sobi_lag_zero_and_short_input():
    _, _, X = ar1_mixture(1000, [0.5, -0.5], 2)
    assert sobi_fit(X, 0).V.shape == (2, 2)
    with pytest.raises(ValueError, match="samples"):
        sobi_fit(X[:, :8], 10)


def test_random_unmixing():
    assert np.array_equal(random_unmixing(5, 3).V, random_unmixing(5, 3).V)
    Vs = {random_unmixing(22, s).V.tobytes() for s in range(100)}
    assert len(Vs) == 100
    r = np.random.default_rng(0)
    mds = [md_index(random_unmixing(22, s).V, r.standard_normal((22, 22))).value for s in range(20)]
    assert np.median(mds) > 0.8


def test_fit_dispatch(ds1):
    assert fit(ds1.X, ds1.group_labels, cfg(method="random", seed=4)).config.seed == 4
    assert fit(ds1.X, None, SeparationConfig(method="sobi", max_lag=2)).config.method == "sobi"


def test_activation_maps_on_fit(ds1):
    model = coroica_fit(ds1.X, ds1.group_labels, cfg())
    mats = coroica_matrices(ds1.X, ds1.group_labels, cfg())
    cosines = []
    for j in range(6):
        a = activation_map(model.V, mats, j)
        cosines.append(abs(a @ model.A_hat[:, j]) / (np.linalg.norm(a) * np.linalg.norm(model.A_hat[:, j])))
    assert max(cosines) > 0.9
    assert np.median(cosines) > 0.9
