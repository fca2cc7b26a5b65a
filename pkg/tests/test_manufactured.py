import numpy as np
import pytest

from pxlap.exponents import ExponentField
from pxlap.manufactured import (UNIT, convergence_study, exact_solution, manufactured_problem,
                                manufactured_source)


def field(expr):
    return ExponentField.from_expression(expr, UNIT)


def test_constant_source_closed_form():
    # p = 2, q = 1: f = 2 + |1 - 2x|
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(manufactured_source(field("2"), field("1"), x), 2 + np.abs(1 - 2 * x),
                               atol=1e-12)


def test_variable_source_matches_finite_differences():
    p, q = field("2.2 + 0.2*x"), field("1.7 + 0.2*x")
    x = np.linspace(0.05, 0.95, 37)
    x = x[np.abs(x - 0.5) > 0.02]
    h = 1e-5

    def flux(t):
        du = 1 - 2 * t
        return np.sign(du) * np.abs(du) ** (p(t[:, None]) - 1)

    fd = -(flux(x + h) - flux(x - h)) / (2 * h) + np.abs(1 - 2 * x) ** q(x[:, None])
    np.testing.assert_allclose(manufactured_source(p, q, x), fd, rtol=1e-6)


def test_problem_shape():
    spec, exact = manufactured_problem(16)
    assert spec.lam == 0.0 and spec.grid.num_nodes == 17
    np.testing.assert_array_equal(exact.values, exact_solution(spec.grid.nodes[:, 0]))
    assert exact.values[0] == 0.0 and exact.values[-1] == 0.0
    with pytest.raises(ValueError):
        manufactured_problem(16, "cubic")


@pytest.mark.parametrize("case,factor", [("constant", 3.0), ("variable", 1.8)])
def test_convergence_rates(case, factor):
    rows = convergence_study(case, (16, 32, 64, 128))
    assert rows[0].ratio is None
    assert all(r.ratio >= factor for r in rows[1:])
    assert rows[-1].error < rows[0].error
