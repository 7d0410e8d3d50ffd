import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from windscen.copula import (EPS_EIG, IndexMap, cholesky_with_jitter, draw_block,
                             estimate_correlation, from_gaussian, rank_transform,
                             repair_correlation, sample_correlation, to_gaussian)
from windscen.errors import InsufficientDataError
from windscen.hetero import EcdfTable, ecdf_eval


@pytest.fixture(scope="module")
def normal_table():
    return EcdfTable.from_samples(np.random.default_rng(0).normal(size=10001))


def test_index_map_round_trip():
    im = IndexMap(152, 36)
    assert im.dim == 5472
    assert im.flat(0, 1) == 0 and im.flat(1, 1) == 36 and im.flat(151, 36) == 5471
    for k in (0, 35, 36, 1000, 5471):
        assert im.flat(*im.unflat(k)) == k
    with pytest.raises(IndexError):
        im.flat(0, 0)


def test_to_gaussian_median_and_identity(normal_table):
    med = np.median(normal_table.sorted_u)
    assert to_gaussian(med, normal_table) == pytest.approx(0.0, abs=1e-12)
    assert from_gaussian(0.0, normal_table) == pytest.approx(med, abs=1e-12)
    u = np.linspace(-1.5, 1.5, 61)
    np.testing.assert_allclose(to_gaussian(u, normal_table), u, atol=0.05)


def test_from_gaussian_clamps(normal_table):
    assert from_gaussian(8.0, normal_table) == normal_table.sorted_u[-1]
    assert from_gaussian(-8.0, normal_table) == normal_table.sorted_u[0]
    assert np.isfinite(to_gaussian(1e6, normal_table))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 300))
def test_gaussian_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    t = EcdfTable.from_samples(rng.standard_t(4, size=n))
    u = rng.uniform(t.sorted_u[0], t.sorted_u[-1], 100)
    np.testing.assert_allclose(from_gaussian(to_gaussian(u, t), t), u, atol=1e-9, rtol=1e-9)


def test_from_gaussian_distribution_matches_table():
    rng = np.random.default_rng(1)
    t = EcdfTable.from_samples(rng.gamma(2.0, size=2000))
    n = 20000
    draws = from_gaussian(rng.standard_normal(n), t)
    ks = stats.kstest(draws, lambda z: ecdf_eval(t, z)).statistic
    # the table's tail mass below p_min piles onto its extremes
    assert ks <= 1.63 / np.sqrt(n) + t.p_min


def test_rank_transform_properties():
    rng = np.random.default_rng(2)
    u = rng.normal(size=3000)
    t = EcdfTable.from_samples(u)
    r = rank_transform(u, t)
    assert stats.kstest(r, "uniform").statistic <= 1.63 / np.sqrt(u.size)
    assert rank_transform(t.sorted_u[0], t) == t.p_min
    s = np.sort(rng.normal(size=50))
    assert np.all(np.diff(rank_transform(s, t)) >= 0)


def test_identical_columns():
    g = np.random.default_rng(3).normal(size=(500, 1))
    corr, flat = sample_correlation(np.hstack([g, g]))
    np.testing.assert_allclose(corr, 1.0, atol=1e-12)
    model = estimate_correlation(np.hstack([g, g]))
    off = model.sigma_n[0, 1]
    assert 1 - 1e-6 < off < 1.0
    assert np.linalg.eigvalsh(model.sigma_n).min() > 0


def test_independent_columns_near_zero():
    g = np.random.default_rng(4).normal(size=(4000, 6))
    model = estimate_correlation(g)
    off = model.sigma_n[~np.eye(6, dtype=bool)]
    assert np.abs(off).max() <= 0.05


def test_known_rho_recovered():
    rng = np.random.default_rng(5)
    L = np.linalg.cholesky([[1, 0.6], [0.6, 1]])
    g = rng.normal(size=(4000, 2)) @ L.T
    assert estimate_correlation(g).sigma_n[0, 1] == pytest.approx(0.6, abs=0.05)


def test_zero_variance_column_becomes_identity():
    g = np.random.default_rng(6).normal(size=(300, 3))
    g[:, 1] = 0.7
    model = estimate_correlation(g)
    np.testing.assert_array_equal(model.sigma_n[1], [0, 1, 0])
    assert any(f.startswith("zero_variance") for f in model.flags)


def test_incomplete_rows_and_min_rows():
    g = np.random.default_rng(7).normal(size=(150, 2))
    g[::3, 0] = np.nan
    model = estimate_correlation(g)
    assert model.n_rows == 100
    with pytest.raises(InsufficientDataError):
        estimate_correlation(g[:120])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(100, 300), dim=st.integers(2, 60))
def test_relabeling_is_exact(seed, n, dim):
    """Permuting the columns of G permutes sigma_n exactly."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, dim)) @ rng.normal(size=(dim, dim))
    perm = rng.permutation(dim)
    a = estimate_correlation(g)
    b = estimate_correlation(g[:, perm])
    np.testing.assert_array_equal(b.sigma_n, a.sigma_n[np.ix_(perm, perm)])
    for m in (a, b):
        np.testing.assert_array_equal(m.chol, np.tril(m.chol))
        np.testing.assert_allclose(m.chol @ m.chol.T, m.sigma_n, atol=1e-10)


def test_factor_reproduces_sigma():
    g = np.random.default_rng(8).normal(size=(120, 200))
    model = estimate_correlation(g)
    assert "low_sample" not in model.flags
    np.testing.assert_allclose(model.chol @ model.chol.T, model.sigma_n, atol=1e-12)
    lo, hi = model.diag_range
    assert 0 < lo <= hi <= 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 40), dim=st.integers(2, 30))
def test_repair_is_pd_correlation(seed, n, dim):
    """Rank-deficient sample correlations are repaired to unit-diagonal PD matrices."""
    g = np.random.default_rng(seed).normal(size=(n, dim))
    corr, _ = sample_correlation(g)
    fixed = repair_correlation(corr)
    np.testing.assert_array_equal(fixed, fixed.T)
    np.testing.assert_array_equal(np.diag(fixed), 1.0)
    assert np.linalg.eigvalsh(fixed).min() >= EPS_EIG * (1 - 1e-6)
    assert np.abs(fixed).max() <= 1.0 + 1e-12
    chol, _ = cholesky_with_jitter(fixed)
    np.testing.assert_allclose(chol @ chol.T, fixed, atol=1e-6)


def test_repair_leaves_pd_matrix_alone():
    a = np.array([[1, 0.3], [0.3, 1]])
    np.testing.assert_array_equal(repair_correlation(a), a)


def test_cholesky_jitter_path():
    a = np.ones((3, 3))
    chol, jitter = cholesky_with_jitter(a)
    assert 0 < jitter <= 1e-6
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(np.linalg.LinAlgError):
        cholesky_with_jitter(bad)


def test_draw_block_moments_and_determinism():
    g = np.random.default_rng(9).normal(size=(1000, 8))
    model = estimate_correlation(g)
    identity = type(model)(np.eye(8), np.eye(8), model.index_map)
    b1 = draw_block(identity, 4000, seed=3)
    b2 = draw_block(identity, 4000, seed=3)
    np.testing.assert_array_equal(b1.samples, b2.samples)
    s = b1.samples
    assert np.abs(s.mean(axis=0)).max() <= 3 / np.sqrt(4000)
    assert np.abs(s.var(axis=0) - 1).max() <= 0.1
    off = np.corrcoef(s.T)[~np.eye(8, dtype=bool)]
    assert np.abs(off).max() <= 0.05
    assert not np.array_equal(draw_block(identity, 10, seed=4).samples, s[:10])


def test_draw_block_prefix_independent_of_chunking():
    model = estimate_correlation(np.random.default_rng(10).normal(size=(300, 4)))
    a = draw_block(model, 2500, seed=1, chunk=1000).samples
    b = draw_block(model, 1000, seed=1, chunk=1000).samples
    np.testing.assert_array_equal(a[:1000], b)
