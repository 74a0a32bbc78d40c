import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sadl.core import Scene, ScaleConfig, ScaleGrid, build_grids
from sadl.covariance import CovQuery, covariance_block, covariance_entry, omega
from sadl.gaussian_moments import gauss2d_iso, moment_maps
from sadl.oracle import dense_covariance, mc_moments


def _all_pairs(mm):
    cells = np.arange(mm.grid.size)
    return covariance_block(cells, cells, mm)


def test_omega_diagonal_reproduces_second_moment():
    q = np.array([1.3, -2.1])
    for beta, alpha in [(8.0, 8.0), (2.0, 0.5), (4.0, 30.0)]:
        expected = gauss2d_iso(q, beta / 2 + alpha) / (4 * math.pi * beta)
        assert omega(q, q, beta, alpha) == pytest.approx(expected, rel=1e-14)


def test_omega_origin_matches_monte_carlo():
    # E[N(0|e,8I)^2] with e ~ N(0, 8I), sampled directly
    rng = np.random.default_rng(3)
    e = rng.standard_normal((1_000_000, 2)) * math.sqrt(8.0)
    phi = np.exp(-(e ** 2).sum(1) / 16.0) / (16.0 * math.pi)
    samples = phi * phi
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - omega((0, 0), (0, 0), 8.0, 8.0)) <= 3 * se


def test_omega_decays_with_separation():
    assert omega((25, 0), (-25, 0), 8.0, 8.0) < 1e-12
    assert omega((0, 0), (50, 0), 8.0, 8.0) < 1e-12


def test_omega_symmetric_and_broadcasts():
    a = np.array([[0.0, 1.0], [2.0, -1.0]])
    b = np.array([[3.0, 0.5], [0.0, 0.0]])
    np.testing.assert_array_equal(omega(a, b, 4.0, 2.0), omega(b, a, 4.0, 2.0))
    assert omega(a, b, 4.0, 2.0).shape == (2,)


@pytest.mark.parametrize("beta,alpha", [(0.0, 1.0), (-1.0, 1.0), (1.0, -1.0)])
def test_omega_rejects_bad_variances(beta, alpha):
    with pytest.raises(ValueError):
        omega((0, 0), (0, 0), beta, alpha)


def test_empty_scene_has_zero_covariance():
    sc = Scene(8, 8)
    cfg = ScaleConfig()
    g = build_grids(sc, cfg)[0]
    mm = moment_maps(sc, g, cfg)
    np.testing.assert_array_equal(_all_pairs(mm), 0.0)
    assert covariance_entry(CovQuery(1, 3, 17), sc, mm, cfg) == 0.0


def test_entry_diagonal_equals_raw_variance():
    sc = Scene(14, 14, [[6.2, 7.7]])
    cfg = ScaleConfig()
    for g in build_grids(sc, cfg):
        mm = moment_maps(sc, g, cfg)
        for j in range(g.size):
            got = covariance_entry(CovQuery(g.scale_index, j, j), sc, mm, cfg)
            assert abs(got - mm.raw_variance[j]) <= 1e-12


def test_entry_rejects_bad_query():
    sc = Scene(4, 4, [[1.0, 1.0]])
    cfg = ScaleConfig()
    g = build_grids(sc, cfg)[0]
    mm = moment_maps(sc, g, cfg)
    with pytest.raises(IndexError):
        covariance_entry(CovQuery(1, 0, 16), sc, mm, cfg)
    with pytest.raises(ValueError):
        covariance_entry(CovQuery(2, 0, 0), sc, mm, cfg)


def test_random_scene_matches_monte_carlo_covariance():
    rng = np.random.default_rng(12)
    sc = Scene(12, 12, rng.uniform(0, 12, size=(3, 2)))
    cfg = ScaleConfig()
    g = ScaleGrid(1, 1, 12, 12)
    cov = _all_pairs(moment_maps(sc, g, cfg))
    est = mc_moments(sc, g, cfg, 1_000_000, seed=4, covariance=True)
    ok = np.abs(est.covariance - cov) <= 3 * est.std_error["covariance"]
    assert ok.mean() >= 0.99


def test_block_matches_dense_oracle():
    rng = np.random.default_rng(8)
    sc = Scene(15, 11, rng.uniform(0, 11, size=(4, 2)))
    cfg = ScaleConfig(alpha=3.0, beta1=5.0)
    for g in build_grids(sc, cfg):
        np.testing.assert_allclose(_all_pairs(moment_maps(sc, g, cfg)), dense_covariance(sc, g, cfg),
                                   rtol=0, atol=1e-15)


def test_additive_over_heads():
    cfg = ScaleConfig()
    a, b = [3.3, 4.1], [9.0, 10.6]
    g = ScaleGrid(1, 1, 14, 14)
    both = _all_pairs(moment_maps(Scene(14, 14, [a, b]), g, cfg))
    one = _all_pairs(moment_maps(Scene(14, 14, [a]), g, cfg))
    two = _all_pairs(moment_maps(Scene(14, 14, [b]), g, cfg))
    np.testing.assert_allclose(both, one + two, rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_symmetric_and_nearly_psd(seed):
    rng = np.random.default_rng(seed)
    w, h = (int(v) for v in rng.integers(3, 17, size=2))
    n = int(rng.integers(1, 6))
    sc = Scene(w, h, rng.uniform([0, 0], [w, h], size=(n, 2)))
    cfg = ScaleConfig(alpha=float(rng.uniform(0.5, 16)), beta1=float(rng.uniform(0.5, 16)))
    for g in build_grids(sc, cfg):
        cov = _all_pairs(moment_maps(sc, g, cfg))
        np.testing.assert_array_equal(cov, cov.T)
        eig = np.linalg.eigvalsh(cov)
        assert eig[0] >= -1e-6 * eig[-1]
