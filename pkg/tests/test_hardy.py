import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from frachh.hardy import (
    apply_S,
    build_hardy_weight,
    hardy_ratios,
    nonlinearity,
    origin_cell_average,
    power,
    verify_hardy_estimate,
)
from frachh.spectral import Field, SpatialGrid, apply_semigroup, lebesgue_norm, random_bump_fields

finite = st.floats(-50, 50, allow_nan=False)


def test_weight_gamma_zero_is_ones():
    g = SpatialGrid(2, 2.0, 16)
    assert np.array_equal(build_hardy_weight(g, 0.0).values, np.ones(g.shape))


def test_origin_cell_1d():
    assert origin_cell_average(1, 0.1, 0.5) == pytest.approx(0.05**-0.5 / 0.5, rel=1e-14)
    assert origin_cell_average(1, 0.1, 0.5) == pytest.approx(8.9443, abs=1e-4)


@pytest.mark.parametrize("N,gamma", [(2, 0.5), (2, 1.5), (3, 1.2)])
def test_origin_cell_matches_cube_quadrature(N, gamma):
    h = 0.2
    if N == 2:
        val, _ = integrate.dblquad(lambda y, x: (x * x + y * y) ** (-gamma / 2), 0, h / 2, 0, h / 2, epsrel=1e-10)
        ref = 4 * val / h**2
    else:
        val, _ = integrate.tplquad(lambda z, y, x: (x * x + y * y + z * z) ** (-gamma / 2), 0, h / 2, 0, h / 2,
                                   0, h / 2, epsrel=1e-8)
        ref = 8 * val / h**3
    assert origin_cell_average(N, h, gamma) == pytest.approx(ref, rel=1e-6)


def test_weight_values_and_monotonicity():
    g = SpatialGrid(2, 4.0, 32)
    w = build_hardy_weight(g, 0.5).values
    x, y = g.coords()
    at_unit = (np.isclose(x, 1.0)) & (np.isclose(y, 0.0))
    assert w[at_unit][0] == pytest.approx(1.0, rel=1e-14)
    assert np.isfinite(w).all() and (w > 0).all()
    o = g.origin_index
    row = w[o[0], o[1]:]
    col = w[o[0]:, o[1]]
    assert np.all(np.diff(row) <= 0) and np.all(np.diff(col) <= 0)
    assert np.all(np.diff(w[o[0], : o[1] + 1]) >= 0)


def test_weight_rejects_nonintegrable():
    with pytest.raises(ValueError):
        build_hardy_weight(SpatialGrid(1, 2.0, 16), 1.0)
    with pytest.raises(ValueError):
        build_hardy_weight(SpatialGrid(1, 2.0, 16), -0.1)


def test_nonlinearity_examples():
    g = SpatialGrid(1, 2.0, 8)
    w0 = build_hardy_weight(g, 0.0)
    assert not nonlinearity(Field.zeros(g), 2.5, w0).values.any()
    assert np.array_equal(nonlinearity(Field(g, np.ones(8)), 3.7, w0).values, np.ones(8))
    assert nonlinearity(Field(g, np.full(8, -2.0)), 3, w0).values[0] == pytest.approx(-8.0, rel=1e-15)
    with pytest.raises(ValueError):
        nonlinearity(Field.zeros(SpatialGrid(1, 2.0, 16)), 2, w0)


@given(arrays(float, 16, elements=finite), st.floats(1.01, 5))
def test_nonlinearity_odd_and_sign_preserving(u, p):
    g = SpatialGrid(1, 2.0, 16)
    w = build_hardy_weight(g, 0.4)
    a = nonlinearity(Field(g, u), p, w).values
    b = nonlinearity(Field(g, -u), p, w).values
    assert np.array_equal(a, -b)
    # entries may underflow to zero, but never change sign
    assert np.all((a == 0) | (np.sign(a) == np.sign(u)))


@given(arrays(float, 32, elements=finite), arrays(float, 32, elements=finite), st.floats(1.01, 4))
def test_lipschitz_gap_inequality(u, v, p):
    lhs = np.abs(power(u, p) - power(v, p))
    rhs = p * np.abs(u - v) * (np.abs(u) ** (p - 1) + np.abs(v) ** (p - 1))
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-300)


def test_apply_S_examples():
    g = SpatialGrid(1, 8.0, 128)
    u = random_bump_fields(g, 1, 0)[0]
    np.testing.assert_array_equal(apply_S(u, 0.5, 1.5, 0.0).values, apply_semigroup(u, 0.5, 1.5).values)
    assert not apply_S(Field.zeros(g), 1.0, 2.0, 0.5).values.any()
    one = Field(g, np.ones(g.shape))
    out = apply_S(one, 1.0, 2.0, 0.5)
    assert out.mean() == pytest.approx(build_hardy_weight(g, 0.5).values.mean(), rel=1e-12)
    with pytest.raises(ValueError):
        apply_S(u, 0.0, 2.0, 0.5)


def test_apply_S_linear():
    g = SpatialGrid(1, 8.0, 128)
    u, v = random_bump_fields(g, 2, 3)
    lhs = apply_S(u * 2.5 + v * -1.5, 0.3, 1.2, 0.6).values
    rhs = (apply_S(u, 0.3, 1.2, 0.6) * 2.5 + apply_S(v, 0.3, 1.2, 0.6) * -1.5).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_hardy_p_equals_q_without_weight():
    assert verify_hardy_estimate(2.0, 0.0, 1, 3, 3, [0.25, 0.5, 1.0], 20, 1) <= 1 + 1e-10


def test_hardy_compensated_ratio_bounded_while_norm_decays():
    g = SpatialGrid(1, 8.0, 256)
    phi = random_bump_fields(g, 1, 7)[0]
    raw = [lebesgue_norm(apply_S(phi, t, 2.0, 0.5), 6) for t in (0.5, 1.0, 2.0)]
    assert raw[0] > raw[1] > raw[2]
    ratios = hardy_ratios(2.0, 0.5, 1, 4, 6, [0.5, 1.0, 2.0], 1, 7, grid=g)[0]
    assert ratios.max() / ratios.min() < 2.0


def test_hardy_rejects_bad_exponents():
    with pytest.raises(ValueError):
        verify_hardy_estimate(2.0, 0.5, 1, 4, 1.2, [1.0], 1, 0)  # 1/q > gamma/N + 1/p
    with pytest.raises(ValueError):
        verify_hardy_estimate(2.0, 0.8, 1, 2, 6, [1.0], 1, 0)  # gamma/N + 1/p >= 1


def test_hardy_constant_finite():
    c = verify_hardy_estimate(2.0, 0.5, 1, 4, 6, [0.25, 0.5, 1.0], 30, 2)
    assert math.isfinite(c) and c > 0
