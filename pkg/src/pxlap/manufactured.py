"""Manufactured solutions for the regularized solver.

With u*(x) = x(1 - x) on (0, 1) and lam = 0, the data

    f = -(|u*'|^(p-2) u*')' + |u*'|^q

make u* an exact solution.  The flux derivative is written out in closed
form; p' is taken by central differences so any exponent field works.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import GridFunction, build_grid
from .exponents import Domain, ExponentField, ExponentTriple
from .solver import ProblemSpec, SolverConfig, solve_regularized

UNIT = Domain((0.0,), (1.0,))


def exact_solution(x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return x * (1.0 - x)


def manufactured_source(p: ExponentField, q: ExponentField, x, dp_step=1e-6):
    """f for u* = x(1-x); nonnegative for the exponent pairs used in the studies."""
    x = np.asarray(x, dtype=float).reshape(-1)
    du = 1.0 - 2.0 * x
    a = np.abs(du)
    pv, qv = p(x[:, None]), q(x[:, None])
    dp = (p(np.clip(x + dp_step, 0, 1)[:, None]) - p(np.clip(x - dp_step, 0, 1)[:, None])) \
        / (np.clip(x + dp_step, 0, 1) - np.clip(x - dp_step, 0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        # d/dx [sign(u') |u'|^(p-1)] = sign(u') p' |u'|^(p-1) log|u'| + (p-1) |u'|^(p-2) u''
        log_term = np.where(a > 0, np.sign(du) * dp * a ** (pv - 1.0) * np.log(a), 0.0)
        diff_term = np.where(a > 0, (pv - 1.0) * a ** (pv - 2.0) * (-2.0),
                             np.where(pv == 2.0, -2.0, 0.0))
    return -(log_term + diff_term) + np.power(a, qv)


CASES = {
    "constant": ("2", "1", "1"),
    "variable": ("2.2 + 0.2*x", "1.7 + 0.2*x", "0.5"),
}


def manufactured_problem(resolution: int, case: str = "constant"):
    """ProblemSpec with lam = 0 whose exact solution is x(1-x)."""
    if case not in CASES:
        raise ValueError(f"unknown manufactured case {case!r}; choose from {sorted(CASES)}")
    ps, qs, es = CASES[case]
    p = ExponentField.from_expression(ps, UNIT, "p")
    q = ExponentField.from_expression(qs, UNIT, "q")
    eta = ExponentField.from_expression(es, UNIT, "eta")
    grid = build_grid(UNIT, resolution)
    f = GridFunction(grid, np.maximum(manufactured_source(p, q, grid.nodes[:, 0]), 0.0))
    spec = ProblemSpec(grid, ExponentTriple(p, q, eta), f, GridFunction.zeros(grid), lam=0.0)
    return spec, GridFunction(grid, exact_solution(grid.nodes[:, 0]))


@dataclass
class ConvergenceRow:
    resolution: int
    h: float
    error: float
    ratio: float | None
    iterations: int


def convergence_study(case: str = "constant", resolutions=(16, 32, 64, 128),
                      config: SolverConfig | None = None) -> list:
    """Max nodal error against u* on a sequence of meshes."""
    config = config or SolverConfig()
    rows = []
    for r in resolutions:
        spec, exact = manufactured_problem(r, case)
        w, trace = solve_regularized(spec, config)
        err = float(np.max(np.abs(w.values - exact.values)))
        ratio = rows[-1].error / err if rows else None
        rows.append(ConvergenceRow(r, spec.grid.h, err, ratio, trace.iterations))
    return rows
