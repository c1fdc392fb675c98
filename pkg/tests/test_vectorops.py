"""Kernel-backend parity and the parameter-vector math gate."""

import math

import numpy as np
import pytest

from fedwatch import _kernels_py
from fedwatch import vectorops as vo


def test_backend_name_is_known():
    assert vo.backend_name() in ("compiled", "python")


def test_backends_agree_bitwise():
    # The compiled loop and the cumsum fallback must produce the very
    # same float64, not merely close ones: scenario reproducibility
    # rides on it. np.cumsum reduces sequentially, np.sum does not.
    try:
        from fedwatch import _kernels
    except ImportError:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(20240817)
    for size in (1, 2, 3, 7, 64, 1001, 4096):
        for _ in range(20):
            a = rng.normal(scale=rng.uniform(0.1, 1e6), size=size)
            b = rng.normal(scale=rng.uniform(0.1, 1e6), size=size)
            assert _kernels.strict_dot(a, b) == _kernels_py.strict_dot(a, b)
            assert _kernels.strict_sqdist(a, b) == _kernels_py.strict_sqdist(a, b)
            out_c = a.copy()
            out_p = a.copy()
            _kernels.strict_accumulate(out_c, 0.37, b)
            _kernels_py.strict_accumulate(out_p, 0.37, b)
            assert np.array_equal(out_c, out_p)


def test_dot_matches_numpy():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 300))
        b = rng.normal(size=a.size)
        assert vo.dot(a, b) == pytest.approx(float(np.dot(a, b)), rel=1e-12)


def test_norm_and_distance_match_numpy():
    rng = np.random.default_rng(8)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 300))
        b = rng.normal(size=a.size)
        assert vo.norm(a) == pytest.approx(float(np.linalg.norm(a)), rel=1e-12)
        assert vo.euclidean_distance(a, b) == pytest.approx(
            float(np.linalg.norm(a - b)), rel=1e-12)


def test_cosine_similarity_matches_numpy():
    rng = np.random.default_rng(9)
    for _ in range(50):
        a = rng.normal(size=rng.integers(2, 200))
        b = rng.normal(size=a.size)
        want = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
        assert vo.cosine_similarity(a, b) == pytest.approx(want, abs=1e-12)


def test_cosine_similarity_clamped():
    # parallel vectors can push the raw ratio past 1.0 in the last ulp
    rng = np.random.default_rng(10)
    for _ in range(200):
        a = rng.normal(size=50) * rng.uniform(1e-3, 1e3)
        s = vo.cosine_similarity(a, a * rng.uniform(0.5, 2.0))
        assert -1.0 <= s <= 1.0
        assert s == pytest.approx(1.0, abs=1e-12)


def test_cosine_zero_norm_raises():
    z = np.zeros(4)
    v = np.ones(4)
    with pytest.raises(vo.ZeroNormError):
        vo.cosine_similarity(z, v)
    with pytest.raises(vo.ZeroNormError):
        vo.cosine_similarity(v, z)


def test_dimension_mismatch():
    with pytest.raises(vo.DimensionMismatch):
        vo.dot(np.ones(3), np.ones(4))
    with pytest.raises(vo.DimensionMismatch):
        vo.euclidean_distance(np.ones(3), np.ones(4))
    with pytest.raises(vo.DimensionMismatch):
        vo.linear_combine(np.ones(3), [(1.0, np.ones(4))])


def test_as_params_gate():
    out = vo.as_params([1, 2, 3])
    assert out.dtype == np.float64 and out.flags.c_contiguous
    with pytest.raises(ValueError):
        vo.as_params(np.ones((2, 2)))
    with pytest.raises(ValueError):
        vo.as_params(np.array([]))
    with pytest.raises(ValueError):
        vo.as_params([1.0, np.nan])
    with pytest.raises(ValueError):
        vo.as_params([1.0, np.inf])
    with pytest.raises(vo.DimensionMismatch):
        vo.as_params(np.ones(5), dim=4)


def test_linear_combine_matches_sequential_sum():
    rng = np.random.default_rng(11)
    for _ in range(30):
        dim = int(rng.integers(1, 200))
        base = rng.normal(size=dim)
        deltas = [(float(rng.normal()), rng.normal(size=dim))
                  for _ in range(int(rng.integers(0, 6)))]
        want = base.copy()
        for c, v in deltas:
            want = want + c * v
        got = vo.linear_combine(base, deltas)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_linear_combine_zero_coeff_preserves_bits():
    base = np.array([-0.0, 1.5, -2.25])
    out = vo.linear_combine(base, [(0.0, np.full(3, 1e300))])
    # bit-identical, including the sign of -0.0
    assert np.array_equal(np.signbit(out), np.signbit(base))
    assert np.array_equal(out, base)
    assert out is not base


def test_linear_combine_empty_is_copy():
    base = np.array([1.0, 2.0])
    out = vo.linear_combine(base, [])
    assert np.array_equal(out, base)
    out[0] = 9.0
    assert base[0] == 1.0
