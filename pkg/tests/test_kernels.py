"""Compiled and pure-Python simulation kernels must agree exactly."""

import math

import numpy as np
import pytest

from sepglm import _pykernels, kernels

try:
    from sepglm import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def _inputs(seed, n=4000, p=12, rate=0.05):
    rng = np.random.default_rng(seed)
    hist = -np.abs(rng.normal(loc=0.3, scale=0.3, size=p))
    base = np.log(rate) + rng.normal(scale=0.3, size=n)
    return hist, base, rng.random(n)


class TestBackendSelection:
    def test_backend_name(self):
        assert kernels.BACKEND in ("cython", "python")

    @needs_ext
    def test_extension_preferred(self):
        assert kernels.BACKEND == "cython"
        assert kernels.simulate_counts is _kernels.simulate_counts


@needs_ext
class TestEquivalence:
    @pytest.mark.parametrize("seed", range(5))
    def test_identical_counts(self, seed):
        hist, base, u = _inputs(seed)
        c1, b1 = _kernels.simulate_counts(hist, base, u, 1e4)
        c2, b2 = _pykernels.simulate_counts(hist, base, u, 1e4)
        assert b1 == b2 == -1
        np.testing.assert_array_equal(c1, c2)

    def test_large_rates_use_normal_branch(self):
        hist, base, u = _inputs(7, n=500, rate=60.0)
        hist[:] = 0.0
        c1, _ = _kernels.simulate_counts(hist, base, u, 1e4)
        c2, _ = _pykernels.simulate_counts(hist, base, u, 1e4)
        np.testing.assert_array_equal(c1, c2)
        assert c1.mean() > 30

    def test_neg_inf_history(self):
        hist, base, u = _inputs(3, rate=0.3)
        hist[0] = -math.inf
        for fn in (_kernels.simulate_counts, _pykernels.simulate_counts):
            c, bad = fn(hist, base, u, 1e4)
            assert bad == -1
            assert not np.any((c[1:] > 0) & (c[:-1] > 0))

    def test_neg_inf_base(self):
        hist, base, u = _inputs(4, rate=0.5)
        base[::2] = -math.inf
        c1, _ = _kernels.simulate_counts(hist, base, u, 1e4)
        c2, _ = _pykernels.simulate_counts(hist, base, u, 1e4)
        np.testing.assert_array_equal(c1, c2)
        assert np.all(c1[::2] == 0)

    def test_bad_bin_reported(self):
        hist = np.array([3.0])  # self-exciting: explodes
        base = np.full(200, np.log(0.5))
        u = np.random.default_rng(0).random(200)
        c1, b1 = _kernels.simulate_counts(hist, base, u, 1e4)
        c2, b2 = _pykernels.simulate_counts(hist, base, u, 1e4)
        assert b1 == b2 >= 0
        np.testing.assert_array_equal(c1[:b1], c2[:b2])


class TestPoissonInverse:
    def test_zero_rate(self):
        assert _pykernels._poisson_inverse(0.0, 0.99) == 0

    def test_small_rate_quantiles(self):
        from scipy import stats

        for lam in (0.01, 0.7, 5.0, 20.0):
            for u in (0.05, 0.5, 0.95):
                assert _pykernels._poisson_inverse(lam, u) == int(stats.poisson.ppf(u, lam))
