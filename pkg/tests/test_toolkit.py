import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pxlap.discretization import GridFunction
from pxlap.exponents import NATURAL, SUBNATURAL, AdmissibilityError, Domain, ExponentField
from pxlap.toolkit import (band_indicator, check_test_map_property, check_vector_inequalities,
                           excess, regularized_hamiltonian, test_map, test_map_bound, truncate,
                           young_constant)

UNIT = Domain.unit(1)
reals = st.floats(-1e6, 1e6)
levels = st.floats(1e-3, 1e3)


def const(v):
    return ExponentField.constant(v, UNIT)


def test_truncation_examples(grid1):
    assert truncate(3.0, 2) == 2.0
    assert truncate(-3.0, 2) == -2.0
    u = GridFunction.interpolate(grid1, lambda p: p[:, 0])
    np.testing.assert_array_equal(truncate(u, 1.0).values, u.values)
    assert excess(3.0, 2) == 1.0 and excess(1.0, 2) == 0.0
    with pytest.raises(ValueError):
        truncate(1.0, 0.0)


@given(a=reals, b=reals, k=levels)
def test_truncation_properties(a, b, k):
    assert abs(truncate(a, k) - truncate(b, k)) <= abs(a - b)
    assert truncate(a, k) + excess(a, k) == a
    assert abs(truncate(a, k)) <= k


def test_band_indicator_examples():
    k = 5
    assert band_indicator(k - 1.0, k) == 0.0
    assert band_indicator(float(k), k) == 1.0
    assert band_indicator(4.5, 5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        band_indicator(1.0, 1.0)


@given(a=st.floats(0, 1e3), b=st.floats(0, 1e3), k=st.floats(1.001, 100))
def test_band_indicator_range_and_monotone(a, b, k):
    lo, hi = sorted((a, b))
    ya, yb = band_indicator(lo, k), band_indicator(hi, k)
    assert 0.0 <= ya <= yb <= 1.0


def test_test_map_values():
    for variant, pp in ((SUBNATURAL, None), (NATURAL, 2.0)):
        assert test_map(0.0, variant, pp) == (0.0, 1.0)
    phi, dphi = test_map(1.0)
    assert phi == pytest.approx(math.exp(0.25), rel=1e-15)
    assert dphi == pytest.approx(1.5 * math.exp(0.25), rel=1e-15)
    with pytest.raises(ValueError):
        test_map(1.0, NATURAL)


def test_test_map_overflow_guard():
    bound = test_map_bound(NATURAL, 2.5)
    phi, dphi = test_map(bound, NATURAL, 2.5)
    assert np.isfinite(phi) and np.isfinite(dphi)
    with pytest.raises(OverflowError):
        test_map(bound * 1.001, NATURAL, 2.5)


@pytest.mark.parametrize("variant,pp,r", [(SUBNATURAL, None, 10.0), (NATURAL, 2.0, 0.5)])
def test_test_map_derivative_central_difference(variant, pp, r):
    s = np.linspace(-r, r, 2001)
    h = 1e-5
    _, d = test_map(s, variant, pp)
    fd = (test_map(s + h, variant, pp)[0] - test_map(s - h, variant, pp)[0]) / (2 * h)
    np.testing.assert_allclose(fd, d, rtol=1e-6)


def test_test_map_properties():
    sub = check_test_map_property(SUBNATURAL, s_grid=np.array([0.0]))
    assert sub.extras["infimum"] == 1.0
    sub = check_test_map_property(SUBNATURAL, s_grid=np.linspace(-10, 10, 10_000))
    assert sub.passed and sub.extras["infimum"] >= 0.5 - 1e-12
    nat = check_test_map_property(NATURAL, 2.0, np.linspace(0, 5, 10_000))
    assert nat.passed and nat.extras["constant"] > 0
    assert "8 phi" in nat.checks[0].name


def test_young_closed_form():
    yc = young_constant(const(2), const(1), 0.1)
    assert abs(yc.value - 2.5) <= 1e-10
    assert yc.verified and yc.s_star_max == pytest.approx(5.0)


@pytest.mark.parametrize("p,q", [(2.0, 1.0), (2.5, 1.8), ("2.2 + 0.2*x", "1.7 + 0.2*x")])
def test_young_monotone_in_epsilon(p, q):
    pf = ExponentField.from_expression(str(p), UNIT)
    qf = ExponentField.from_expression(str(q), UNIT)
    vals = [young_constant(pf, qf, eps).value for eps in (0.01, 0.1, 1.0)]
    assert vals[0] >= vals[1] >= vals[2] >= 0


def test_young_variable_exponent_verified():
    yc = young_constant(ExponentField.from_expression("2.2 + 0.2*x", UNIT),
                        ExponentField.from_expression("1.7 + 0.2*x", UNIT), 0.05)
    assert yc.verified


def test_young_rejects_bad_pairs():
    with pytest.raises(AdmissibilityError):
        young_constant(const(2), const(2), 0.1)
    with pytest.raises(AdmissibilityError):
        young_constant(const(3), const(1.5), 0.1)
    with pytest.raises(ValueError):
        young_constant(const(2), const(1), 0.0)


def test_hamiltonian_examples():
    q = const(2)
    assert regularized_hamiltonian(0.3, math.sqrt(8.0), 8, q) == pytest.approx(4.0)
    assert regularized_hamiltonian(0.3, 0.0, 8, q) == 0.0
    assert regularized_hamiltonian(0.3, 3.0, math.inf, q) == pytest.approx(9.0)
    with pytest.raises(ValueError):
        regularized_hamiltonian(0.3, 1.0, 0, q)


@given(s=st.floats(0, 1e3), t=st.floats(0, 1e3), n=st.integers(1, 10_000), x=st.floats(0, 1))
def test_hamiltonian_bounds(s, t, n, x):
    q = ExponentField.from_expression("1.5 + x", UNIT)
    lo, hi = sorted((s, t))
    H = regularized_hamiltonian(x, lo, n, q)
    assert 0.0 <= H < n
    assert regularized_hamiltonian(x, hi, n, q) >= H
    assert regularized_hamiltonian(x, lo, n + 1, q) >= H
    full = lo ** q(np.array([[x]]))[0]
    assert abs(H - full) <= full ** 2 / n * (1 + 1e-12) + 4e-16 * full


def test_vector_inequalities_examples():
    rng = np.random.default_rng(0)
    xi, eta = rng.standard_normal((50, 2)), rng.standard_normal((50, 2))
    rep = check_vector_inequalities(2.0, xi, eta)
    assert rep.passed and len(rep.checks) == 2
    # at p = 2 the pairing is |xi - eta|^2 and the degenerate bound is a quarter of it
    rep3 = check_vector_inequalities(3.0, xi * 0.3, eta * 0.3)
    assert rep3.passed
    with pytest.raises(ValueError):
        check_vector_inequalities(1.0, xi, eta)


@given(p=st.floats(1.05, 4.0), seed=st.integers(0, 2 ** 16), dim=st.integers(1, 3))
def test_vector_inequalities_random(p, seed, dim):
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((200, dim)) * 10.0 ** rng.uniform(-2, 2, (200, 1))
    eta = rng.standard_normal((200, dim)) * 10.0 ** rng.uniform(-2, 2, (200, 1))
    assert check_vector_inequalities(p, xi, eta).passed
