import numpy as np
import pytest
from hypothesis import given, strategies as st

from rotamix.prior import LagStructure, PriorConfig, build_lag_sets, sample_prior_path, theoretical_correlation


def test_lag_set_examples():
    assert build_lag_sets(10, q=2).lag_set(5) == {5, 4, 3}
    assert build_lag_sets(30, p=1, s=12).lag_set(25) == {25, 13}
    for q, p, s in [(0, 0, 1), (3, 0, 1), (2, 2, 4)]:
        assert build_lag_sets(8, q, p, s).lag_set(1) == {1}
    assert build_lag_sets(30, q=1, p=2, s=12).lag_set(26) == {26, 25, 14, 2}
    assert build_lag_sets(5).lag_set(4) == {4}


def test_lag_set_errors():
    with pytest.raises(ValueError):
        build_lag_sets(0)
    with pytest.raises(ValueError):
        build_lag_sets(5, q=-1)
    with pytest.raises(ValueError):
        build_lag_sets(5, s=0)


@given(T=st.integers(1, 30), q=st.integers(0, 5), p=st.integers(0, 3), s=st.integers(1, 12))
def test_lag_structure_invariants(T, q, p, s):
    lags = build_lag_sets(T, q, p, s)
    A = lags.incidence()
    for t in range(1, T + 1):
        assert t in lags.lag_set(t)
        assert all(1 <= k <= t for k in lags.lag_set(t))
        for l in range(1, T + 1):
            assert (l in lags.lag_set(t)) == (t in lags.inverse_set(l))
            assert A[t - 1, l - 1] == (l in lags.lag_set(t))
    ptr, idx = lags.inverse_csr()
    for t in range(T):
        assert set(idx[ptr[t]:ptr[t + 1]] + 1) == lags.inverse_set(t + 1)
    assert lags.truncated(max(1, T - 1)).lag_set(1) == {1}


def test_incidence_is_read_only():
    A = build_lag_sets(4, q=1).incidence()
    with pytest.raises(ValueError):
        A[0, 0] = 5


def test_prior_config_validation():
    cfg = PriorConfig.constant(2, 5, 3, a0=2.0, d=[1, 2, 3, 4])
    assert cfg.n_components == 4 and cfg.T == 5
    np.testing.assert_allclose(cfg.alpha, 0.5)
    np.testing.assert_allclose(cfg.e, 1.0)
    with pytest.raises(ValueError):
        PriorConfig.constant(2, 5, -1)
    with pytest.raises(ValueError):
        PriorConfig.constant(2, 5, 1, a0=0.0)
    with pytest.raises(ValueError):
        PriorConfig.constant(2, 5, 1, p_vec=[0.5, 0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        PriorConfig.constant(2, 5, 1, g=-1.0)
    assert cfg.truncated(3).T == 3


def test_theoretical_correlation_examples():
    cfg = PriorConfig.constant(2, 10, 10, a0=1.0)
    lags = build_lag_sets(10, q=1)
    assert theoretical_correlation(4, 5, cfg, lags) == pytest.approx(410 / 441)
    assert theoretical_correlation(3, 5, cfg, lags) == pytest.approx(400 / 441)
    zero = PriorConfig.constant(2, 10, 0)
    assert theoretical_correlation(3, 5, zero, lags) == 0.0
    with pytest.raises(ValueError):
        theoretical_correlation(2, 2, cfg, lags)


def test_correlation_monotone_in_shared_mass():
    cfg = PriorConfig.constant(2, 12, 5, a0=1.0)
    lags = build_lag_sets(12, q=2)
    # same lag-set totals (15 each) but fewer shared times further apart
    vals = [theoretical_correlation(8, 8 + d, cfg, lags) for d in range(1, 4)]
    assert vals[0] > vals[1] > vals[2]


def test_sample_prior_path_shapes_and_constraints():
    cfg = PriorConfig.constant(2, 6, 4)
    lags = build_lag_sets(6, q=2)
    rng = np.random.default_rng(0)
    one = sample_prior_path(cfg, lags, rng)
    assert one.eta.shape == (6, 4) and one.pis.shape == (6, 4) and one.omega.shape == (4,)
    many = sample_prior_path(cfg, lags, rng, size=50)
    assert np.all(many.eta.sum(axis=2) == 4)
    np.testing.assert_allclose(many.pis.sum(axis=2), 1.0, atol=1e-12)
    np.testing.assert_allclose(many.omega.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        sample_prior_path(cfg, build_lag_sets(5), rng)


def test_zero_counts_give_independent_dirichlet():
    cfg = PriorConfig.constant(2, 4, 0)
    path = sample_prior_path(cfg, build_lag_sets(4, q=2), np.random.default_rng(1), size=20_000)
    assert np.all(path.eta == 0)
    x, y = path.pis[:, 1, 0], path.pis[:, 2, 0]
    r = np.corrcoef(x, y)[0, 1]
    assert abs(np.arctanh(r)) < 3 / np.sqrt(x.size - 3)


def test_marginal_beta_moments():
    p_vec = np.array([0.4, 0.3, 0.2, 0.1])
    cfg = PriorConfig.constant(2, 5, 10, a0=2.0, p_vec=p_vec)
    path = sample_prior_path(cfg, build_lag_sets(5, q=1), np.random.default_rng(2), size=10_000)
    n = 10_000
    # 40 simultaneous comparisons, so a 4 SE band keeps the family-wise false alarm rate small
    for t in range(5):
        for j in range(4):
            x = path.pis[:, t, j]
            mean, var = p_vec[j], p_vec[j] * (1 - p_vec[j]) / (cfg.a0 + 1)
            assert abs(x.mean() - mean) < 4 * np.sqrt(var / n)
            # variance of the sample variance from the beta fourth moment
            m4 = np.mean((x - mean) ** 4)
            assert abs(x.var() - var) < 4 * np.sqrt((m4 - var**2) / n)


def test_monte_carlo_correlation_matches_formula():
    cfg = PriorConfig.constant(2, 5, 10, a0=1.0)
    lags = build_lag_sets(5, q=1)
    path = sample_prior_path(cfg, lags, np.random.default_rng(3), size=10_000)
    for t, r in [(2, 3), (2, 4), (1, 5)]:
        rho = np.corrcoef(path.pis[:, t - 1, 0], path.pis[:, r - 1, 0])[0, 1]
        z_se = 1 / np.sqrt(10_000 - 3)
        assert abs(np.arctanh(rho) - np.arctanh(theoretical_correlation(t, r, cfg, lags))) < 3 * z_se


def test_lag_structure_equality():
    assert LagStructure(5, 1) == build_lag_sets(5, q=1)
