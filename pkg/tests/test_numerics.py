import numpy as np
import pytest
from scipy import stats

from densdep import _linalg
from densdep.inference import draw_coefficients, truncated_std_normal
from densdep.resampling import effective_sample_size, systematic_resample


def test_ess():
    assert effective_sample_size(np.full(10, 0.1)) == pytest.approx(10)
    assert effective_sample_size([1.0, 0, 0]) == 1.0


def test_systematic_resample_counts(rng):
    w = np.array([0.5, 0.25, 0.125, 0.125])
    for _ in range(50):
        idx = systematic_resample(w, rng)
        counts = np.bincount(idx, minlength=4)
        # systematic resampling keeps each count within one of n * w
        assert np.all(np.abs(counts - 4 * w) < 1)
        assert np.all(np.diff(idx) >= 0)


def test_systematic_resample_unbiased(rng):
    w = rng.dirichlet(np.ones(7))
    counts = np.zeros(7)
    for _ in range(4000):
        counts += np.bincount(systematic_resample(w, rng), minlength=7)
    np.testing.assert_allclose(counts / counts.sum(), w, atol=5e-3)


def random_spd(rng, p, n):
    a = rng.standard_normal((n, p, p))
    return np.moveaxis(a @ np.swapaxes(a, 1, 2) + p * np.eye(p), 0, -1)


@pytest.mark.parametrize("p", [1, 3, 6])
def test_batched_cholesky_and_solves(rng, p):
    a = random_spd(rng, p, 20)
    L = _linalg.cholesky(a)
    ref = np.linalg.cholesky(np.moveaxis(a, -1, 0))
    np.testing.assert_allclose(np.moveaxis(L, -1, 0), ref, atol=1e-12)
    b = rng.standard_normal((p, 20))
    x = _linalg.solve_upper_t(L, _linalg.solve_lower(L, b))
    expected = np.linalg.solve(np.moveaxis(a, -1, 0), b.T[..., None])[..., 0].T
    np.testing.assert_allclose(x, expected, atol=1e-10)
    bm = rng.standard_normal((p, 2, 20))
    y = _linalg.solve_lower(L, bm)
    np.testing.assert_allclose(y[:, 1], _linalg.solve_lower(L, bm[:, 1]))


def test_cholesky_rejects_indefinite():
    a = np.array([[[1.0], [2.0]], [[2.0], [1.0]]])
    with pytest.raises(np.linalg.LinAlgError):
        _linalg.cholesky(a)


@pytest.mark.parametrize("a,b", [(-1.0, 0.5), (2.0, 3.5), (-9.0, -8.0), (12.0, 40.0), (-0.1, 0.1)])
def test_truncated_normal_moments(rng, a, b):
    n = 200_000
    x = truncated_std_normal(np.full(n, a), np.full(n, b), rng)
    assert np.all((x >= a) & (x <= b))
    ref = stats.truncnorm(a, b)
    assert x.mean() == pytest.approx(ref.mean(), abs=5 * ref.std() / np.sqrt(n))
    assert x.var() == pytest.approx(ref.var(), rel=0.02)


def test_draw_coefficients_untruncated(rng):
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    mean = np.array([0.4, -1.0])
    prec = np.linalg.inv(cov)
    n = 200_000
    draws = draw_coefficients(np.repeat(prec[:, :, None], n, 2),
                              np.repeat((prec @ mean)[:, None], n, 1), False, rng)
    np.testing.assert_allclose(draws.mean(axis=1), mean, atol=0.01)
    np.testing.assert_allclose(np.cov(draws), cov, atol=0.02)


def test_draw_coefficients_truncated_matches_rejection(rng):
    cov = np.array([[1.5, -0.6, -0.4], [-0.6, 0.8, 0.1], [-0.4, 0.1, 0.6]])
    mean = np.array([0.3, -0.2, -0.4])
    prec = np.linalg.inv(cov)
    n = 200_000
    draws = draw_coefficients(np.repeat(prec[:, :, None], n, 2),
                              np.repeat((prec @ mean)[:, None], n, 1), True, rng)
    s = draws[1:].sum(axis=0)
    assert np.all((s > -2) & (s < 0))
    prop = rng.multivariate_normal(mean, cov, 2 * n)
    ps = prop[:, 1:].sum(axis=1)
    ref = prop[(ps > -2) & (ps < 0)]
    np.testing.assert_allclose(draws.mean(axis=1), ref.mean(axis=0), atol=0.01)
    np.testing.assert_allclose(np.cov(draws), np.cov(ref.T), atol=0.02)
