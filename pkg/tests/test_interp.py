"""Tests for the spline sampling primitives."""

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from llx.interp import natural_spline_coeffs, spline_eval_each, x_resample


def _graded_knots():
    rng = np.random.default_rng(3)
    h = 0.05 + rng.random(40)
    return np.concatenate([[0.0], np.cumsum(h)])


def test_spline_matches_reference_natural_spline():
    x = _graded_knots()
    rng = np.random.default_rng(7)
    v = rng.normal(size=(x.size, 5))
    m = natural_spline_coeffs(x, v)
    q = rng.uniform(x[0], x[-1], size=5)
    got = spline_eval_each(x, v, m, q)
    ref = CubicSpline(x, v, bc_type="natural")(q)
    want = ref[np.arange(5), np.arange(5)]
    np.testing.assert_allclose(got, want, atol=1e-12, rtol=1e-12)


def test_spline_reproduces_linear_data():
    x = _graded_knots()
    v = np.stack([2.0 * x - 1.0, -0.5 * x + 3.0], axis=1)
    m = natural_spline_coeffs(x, v)
    q = np.array([0.3 * x[-1], 0.77 * x[-1]])
    got = spline_eval_each(x, v, m, q)
    np.testing.assert_allclose(got, [2.0 * q[0] - 1.0, -0.5 * q[1] + 3.0],
                               atol=1e-12)


def test_spline_zero_data_stays_zero():
    x = _graded_knots()
    v = np.zeros((x.size, 4))
    m = natural_spline_coeffs(x, v)
    q = np.linspace(x[0], x[-1], 4)
    assert np.max(np.abs(spline_eval_each(x, v, m, q))) == 0.0


def test_spline_interpolates_knots():
    x = _graded_knots()
    rng = np.random.default_rng(11)
    v = rng.normal(size=(x.size, x.size))
    m = natural_spline_coeffs(x, v)
    got = spline_eval_each(x, v, m, x.copy())
    np.testing.assert_allclose(got, v[np.arange(x.size), np.arange(x.size)],
                               atol=1e-12)


def test_spline_rejects_out_of_range():
    x = _graded_knots()
    v = np.zeros((x.size, 2))
    m = natural_spline_coeffs(x, v)
    with pytest.raises(ValueError, match="leave"):
        spline_eval_each(x, v, m, np.array([x[0], x[-1] + 1.0]))


def test_spline_validates_inputs():
    x = _graded_knots()
    with pytest.raises(ValueError, match="rows"):
        natural_spline_coeffs(x, np.zeros((3, 2)))
    with pytest.raises(ValueError, match="increasing"):
        natural_spline_coeffs(np.array([0.0, 1.0, 1.0, 2.0]),
                              np.zeros((4, 1)))
    with pytest.raises(ValueError, match="at least 3"):
        natural_spline_coeffs(np.array([0.0, 1.0]), np.zeros((2, 1)))


def test_x_resample_matches_reference():
    x = np.linspace(-1.0, 1.0, 17)
    rng = np.random.default_rng(13)
    v = rng.normal(size=(4, 17, 3))
    xq = np.linspace(-1.0, 1.0, 29)
    got = x_resample(x, v, xq, axis=1)
    want = CubicSpline(x, v, axis=1, bc_type="natural")(xq)
    assert got.shape == (4, 29, 3)
    np.testing.assert_allclose(np.moveaxis(got, -1, 1),
                               np.moveaxis(want, -1, 1), atol=1e-14)


def test_x_resample_identity_at_source_nodes():
    x = np.linspace(-1.0, 1.0, 17)
    rng = np.random.default_rng(17)
    v = rng.normal(size=(17, 3))
    np.testing.assert_allclose(x_resample(x, v, x), v, atol=1e-13)
    with pytest.raises(ValueError, match="source nodes"):
        x_resample(x, v[:-1], x)
