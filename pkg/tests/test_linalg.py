"""Validated gemv/saxpy wrappers."""

import numpy as np
import pytest

from simdsparse.linalg import gemv, saxpy


def test_gemv_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (17, 33)).astype(np.float32)
    x = rng.uniform(-1, 1, 33).astype(np.float32)
    np.testing.assert_allclose(gemv(a, x),
                               a.astype(np.float64) @ x.astype(np.float64),
                               rtol=1e-5, atol=1e-6)


def test_gemv_accepts_lists_and_out():
    out = np.empty(2, np.float32)
    res = gemv([[1.0, 2.0], [3.0, 4.0]], [1.0, -1.0], out=out)
    assert res is out
    np.testing.assert_allclose(out, [-1.0, -1.0])


def test_gemv_shape_mismatch_names_both_dims():
    a = np.zeros((4, 5), np.float32)
    x = np.zeros(6, np.float32)
    with pytest.raises(ValueError, match="5"):
        gemv(a, x)
    with pytest.raises(ValueError, match="6"):
        gemv(a, x)


def test_gemv_rejects_bad_rank():
    with pytest.raises(ValueError):
        gemv(np.zeros(4, np.float32), np.zeros(4, np.float32))
    with pytest.raises(ValueError):
        gemv(np.zeros((2, 2), np.float32), np.zeros((2, 2), np.float32))


def test_saxpy_value():
    x = np.arange(5, dtype=np.float32)
    y = np.ones(5, np.float32)
    res = saxpy(2.0, x, y)
    np.testing.assert_allclose(res, 1.0 + 2.0 * np.arange(5))
    np.testing.assert_allclose(y, 1.0)  # inputs untouched


def test_saxpy_length_mismatch():
    with pytest.raises(ValueError):
        saxpy(1.0, np.zeros(3, np.float32), np.zeros(4, np.float32))
