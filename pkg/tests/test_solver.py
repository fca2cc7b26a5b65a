import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pxlap.discretization import GridFunction, build_grid, quadrature, stiffness_matrix
from pxlap.exponents import NATURAL, AdmissibilityError, Domain, ExponentField, ExponentTriple
from pxlap.manufactured import manufactured_problem
from pxlap.solver import (ProblemSpec, SolverConfig, SolverError, assemble_residual,
                          check_comparison, check_discrete_monotonicity, default_test_functions,
                          natural_growth_scheme, outer_scheme, run_scheme, solve_reference,
                          solve_regularized, weak_solution_residual)

UNIT = Domain.unit(1)


def field(expr, dom=UNIT):
    return ExponentField.from_expression(str(expr), dom)


def make_spec(grid, p="2", q="1", eta="0.5", f=1.0, g=0.0, lam=0.0, weight=1.0, variant=None):
    dom = grid.domain
    kw = {} if variant is None else {"variant": variant}
    t = ExponentTriple(field(p, dom), field(q, dom), field(eta, dom), **kw)
    f = f if isinstance(f, GridFunction) else GridFunction.interpolate(grid, f)
    g = g if isinstance(g, GridFunction) else GridFunction.interpolate(grid, g)
    return ProblemSpec(grid, t, f, g, lam=lam, hamiltonian_weight=weight)


@pytest.fixture(scope="module")
def g64():
    return build_grid(UNIT, 64)


# --- problem and config validation ------------------------------------------

def test_problem_spec_validation(grid1):
    with pytest.raises(ValueError, match="nonnegative"):
        make_spec(grid1, f=-1.0)
    with pytest.raises(ValueError, match="vanish"):
        make_spec(grid1, lam=1.0, g=0.0)
    with pytest.raises(ValueError):
        make_spec(grid1, lam=-1.0, g=1.0)
    with pytest.raises(AdmissibilityError):
        make_spec(grid1, p="2", q="2.5")
    spec = make_spec(grid1, lam=1.0, g=1.0)
    assert spec.summary()["variant"] == "subnatural"
    assert spec.admissibility.passed


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(delta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(tol=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(schedule=(1, 4, 2))
    with pytest.raises(ValueError):
        SolverConfig(k_levels=(2, 2))
    with pytest.raises(ValueError):
        SolverConfig(schedule=())
    d = SolverConfig(schedule=(1, 2, math.inf)).to_dict()
    assert d["schedule"] == [1, 2, "inf"] and d["delta"] == 1e-6


# --- residual -----------------------------------------------------------------

def test_residual_sign_at_zero(grid1):
    spec = make_spec(grid1, f=1.0)
    R = assemble_residual(GridFunction.zeros(grid1), spec, SolverConfig())
    I = grid1.interior
    # -int phi_i = -h for interior hat functions on a uniform 1D mesh
    np.testing.assert_allclose(R[I], -grid1.h, rtol=1e-12)
    assert np.all(R[grid1.boundary] == 0)


def test_linear_reduction(g64):
    spec = make_spec(g64, p="2", f=lambda x: 1 + x[:, 0], weight=0.0)
    I = g64.interior
    K = stiffness_matrix(g64)
    gauss = quadrature(g64, "gauss")
    load = g64.scatter((gauss.weights * gauss.interpolate(spec.f.values)) @ gauss.barycentric)
    rng = np.random.default_rng(0)
    w = GridFunction(g64, np.where(g64.boundary, 0.0, rng.standard_normal(g64.num_nodes)))
    # delta enters as (s^2 + delta^2)^0 at p = 2, so the residual is exactly K w - load
    R = assemble_residual(w, spec, SolverConfig(), n=math.inf)
    np.testing.assert_allclose(R[I], (K @ w.values - load)[I], atol=1e-12)
    u, trace = solve_regularized(spec, SolverConfig())
    assert trace.converged and trace.iterations <= 2
    assert np.abs(assemble_residual(u, spec, SolverConfig())).sum() <= 1e-10


def test_residual_rejects_non_finite(grid1):
    spec = make_spec(grid1)
    bad = np.zeros(grid1.num_nodes)
    bad[3] = 1e308
    with pytest.raises(SolverError, match="non-finite"):
        assemble_residual(GridFunction(grid1, bad), spec, SolverConfig())


def test_manufactured_residual_small():
    # residual at the interpolant, normalized by the hat-function mass h
    vals = []
    for r in (32, 64, 128):
        spec, exact = manufactured_problem(r, "constant")
        R = assemble_residual(exact, spec, SolverConfig())
        vals.append(np.max(np.abs(R)) / spec.grid.h)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.05


# --- regularized and reference solves ----------------------------------------

def test_zero_data_gives_zero(grid1):
    spec = make_spec(grid1, f=0.0)
    w, trace = solve_regularized(spec, SolverConfig())
    assert np.all(w.values == 0.0) and trace.iterations == 0


def test_solution_nonnegative(g64):
    spec = make_spec(g64, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=1.0, g=1.0, lam=1.0)
    w, trace = solve_regularized(spec, SolverConfig(), n=8, k=4)
    assert trace.converged and w.values.min() >= -1e-8
    assert w.values[0] == 0.0 and w.values[-1] == 0.0


def test_newton_failure_carries_trace(g64):
    spec = make_spec(g64, p="2.5", q="2", f=50.0)
    with pytest.raises(SolverError) as info:
        solve_regularized(spec, SolverConfig(max_iter=1))
    assert info.value.trace is not None and len(info.value.trace.residuals) >= 1


def test_reference_poisson_oracle():
    g = build_grid(UNIT, 128)
    spec = make_spec(g, p="2", f=2.0)
    v = solve_reference(spec, SolverConfig(), k=4)
    x = g.nodes[:, 0]
    # P1 in 1D is nodally exact for the Poisson problem
    np.testing.assert_allclose(v.values, x * (1 - x), atol=1e-9)


def test_reference_independent_of_k_without_source(grid1):
    spec = make_spec(grid1, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=1.0)
    cfg = SolverConfig()
    a, b = solve_reference(spec, cfg, k=1), solve_reference(spec, cfg, k=16)
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_reference_monotone_in_k(grid1):
    spec = make_spec(grid1, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=1.0, g=1.0, lam=1.0)
    cfg = SolverConfig()
    vs = [solve_reference(spec, cfg, k=k) for k in (1, 2, 4, 8)]
    for a, b in zip(vs, vs[1:]):
        assert np.all(a.values <= b.values + 1e-8)


def test_comparison_examples(grid1):
    spec = make_spec(grid1, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=1.0, g=1.0, lam=1.0)
    cfg = SolverConfig()
    v = solve_reference(spec, cfg, k=2)
    same = check_comparison(v, v)
    assert same.passed and same["w <= v_k"].slack == 0.0
    assert check_comparison(GridFunction.zeros(grid1), v).passed
    w, _ = solve_regularized(spec, cfg, n=2, k=2, data_level=2)
    assert check_comparison(w, v).passed
    bumped = check_comparison(v + 1e-3, v)
    assert not bumped.passed and bumped["w <= v_k"].slack == pytest.approx(-1e-3)
    with pytest.raises(ValueError):
        check_comparison(v, GridFunction.zeros(build_grid(UNIT, 8)))


# --- monotonicity pairing -----------------------------------------------------

def test_monotonicity_examples(grid1):
    p = field("2 + 0.3*sin(pi*x)")
    x = grid1.nodes[:, 0]
    u = GridFunction(grid1, np.sin(np.pi * x))
    zero = GridFunction.zeros(grid1)
    s = np.abs(u.gradients()[:, 0])
    expected = float(np.sum(grid1.volumes * s ** p(grid1.barycenters)))
    assert check_discrete_monotonicity(u, zero, p) == pytest.approx(expected, rel=1e-12)
    assert check_discrete_monotonicity(u, u, p) == 0.0


@settings(max_examples=40)
@given(seed=st.integers(0, 2 ** 16), expr=st.sampled_from(["2 + 0.3*sin(pi*x)", "1.5 + 0.3*x", "3 - 0.8*x"]))
def test_monotonicity_random_pairs(seed, expr):
    g = build_grid(UNIT, 32)
    p = field(expr)
    rng = np.random.default_rng(seed)
    vals = np.where(g.boundary[None, :], 0.0, rng.standard_normal((2, g.num_nodes)))
    u, v = GridFunction(g, vals[0]), GridFunction(g, vals[1])
    assert check_discrete_monotonicity(u, v, p) > 1e-10


# --- weak residual ------------------------------------------------------------

def test_weak_residual_zero(grid1):
    spec = make_spec(grid1, f=0.0)
    defects = weak_solution_residual(GridFunction.zeros(grid1), spec, default_test_functions(grid1))
    assert defects == [0.0] * 4


def test_weak_residual_manufactured_shrinks():
    worst = []
    for r in (32, 64, 128):
        spec, exact = manufactured_problem(r, "constant")
        worst.append(max(abs(d) for d in weak_solution_residual(exact, spec, default_test_functions(spec.grid))))
    assert worst[0] > worst[1] > worst[2]
    assert worst[2] <= 2.0 / 128


def test_default_test_functions_2d(grid2):
    phis = default_test_functions(grid2, modes=2)
    assert len(phis) == 4
    for phi in phis:
        assert np.max(np.abs(phi.values[grid2.boundary])) < 1e-12


# --- outer scheme -------------------------------------------------------------

@pytest.fixture(scope="module")
def small_report():
    g = build_grid(UNIT, 64)
    spec = make_spec(g, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=1.0, g=1.0, lam=1.0)
    return spec, outer_scheme(spec, SolverConfig(schedule=tuple(range(1, 17))))


def test_scheme_trivial_convergence(grid1):
    # data bounded by n_1, solution below every k and no gradient term: every
    # stage solves the same problem, so the iterates are stationary from n_1
    spec = make_spec(grid1, p="2.2 + 0.2*x", q="1.7 + 0.2*x", f=0.5, weight=0.0)
    rep = outer_scheme(spec, SolverConfig(schedule=(1, 2, 4)))
    assert rep.converged and rep.converged_at == 1
    assert rep.solution.values.max() < 1.0


def test_scheme_report_contents(small_report):
    spec, rep = small_report
    assert len(rep.stages) == 16 and rep.limit is not None
    for rec in rep.stages:
        d = rec.to_dict()
        assert all(np.isfinite(v) for v in d["tails"].values())
        assert all(np.isfinite(v) for v in d["distances"].values())
        assert rec.trace.converged
    assert rep.verdicts["nonnegative"] and rep.verdicts["below_barrier"]
    assert rep.verdicts["energy_consistent"] and rep.verdicts["weak_residual"]
    assert "f_norm_q0" not in rep.extras and "data_note" in rep.extras


def test_scheme_tails_monotone_in_k(small_report):
    _, rep = small_report
    for rec in rep.stages + [rep.limit]:
        taus = [rec.tails[k] for k in sorted(rec.tails)]
        assert all(b <= a for a, b in zip(taus, taus[1:]))


def test_energy_slack_nonnegative(small_report):
    _, rep = small_report
    assert all(r.energy_slack >= -1e-10 for r in rep.stages)


def test_hamiltonian_doubling_consistency(small_report):
    spec, rep = small_report
    cfg = SolverConfig()
    n = 8
    a, _ = solve_regularized(spec, cfg, n=n, k=n, data_level=n)
    b, _ = solve_regularized(spec, cfg, n=2 * n, k=n, data_level=n)
    tol = cfg.bound_tol * rep.stages[-1].grad_norm_q
    # H_n <= H_2n pointwise, so the solution can only move by the gradient-term gap
    assert np.max(np.abs(a.values - b.values)) < tol
    assert np.all(b.values <= a.values + 1e-12)


def test_scheme_two_dimensional(square):
    g = build_grid(square, 12)
    spec = make_spec(g, p="2", q="1.5", eta="0.5", f=1.0, g=1.0, lam=1.0)
    rep = run_scheme(spec, SolverConfig(schedule=(1, 2, 4, 8), limit_stage=False))
    assert rep.verdicts["nonnegative"] and rep.verdicts["below_barrier"]
    assert rep.limit is None and "f_norm_q0" in rep.extras


def test_scheme_inner_failure_attaches_report(grid1):
    spec = make_spec(grid1, p="2.5", q="2", f=50.0, g=1.0, lam=1.0)
    with pytest.raises(SolverError) as info:
        outer_scheme(spec, SolverConfig(max_iter=1, schedule=(1, 2)))
    assert info.value.report is not None and info.value.report.error


def test_natural_variant_gates(grid1):
    sub = make_spec(grid1, p="2.2", q="1.7")
    with pytest.raises(AdmissibilityError):
        natural_growth_scheme(sub)
    nat = make_spec(grid1, p="2.5", q="2.5", variant=NATURAL)
    with pytest.raises(AdmissibilityError):
        outer_scheme(nat)
    with pytest.raises(AdmissibilityError, match="p >= 2"):
        make_spec(grid1, p="1.9", q="1.9", variant=NATURAL)
    with pytest.raises(AdmissibilityError, match="q == p"):
        make_spec(grid1, p="2.5", q="2.5 + 0.01*x", variant=NATURAL)


def test_natural_scheme_with_spike():
    g = build_grid(UNIT, 64)
    f = np.ones(g.num_nodes)
    f[32] = 20.0
    spec = make_spec(g, p="2", q="2", f=GridFunction(g, f), g=1.0, lam=1.0, variant=NATURAL)
    rep = natural_growth_scheme(spec, SolverConfig(schedule=tuple(range(1, 25))))
    assert rep.extras["test_map_property"]["passed"]
    assert rep.verdicts["nonnegative"] and rep.verdicts["below_barrier"]
    assert rep.converged
