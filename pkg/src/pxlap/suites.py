"""Randomized property suites over the function-space and pointwise inequalities.

Each suite draws its instances from ``numpy.random.default_rng(seed)`` and
returns a :class:`ValidationReport` whose checks carry the worst slack over
all instances.
"""

from __future__ import annotations

import numpy as np

from .discretization import GridFunction, build_grid, quadrature
from .exponents import NATURAL, SUBNATURAL, Domain, ExponentField
from .modular import (GradientField, check_holder, check_norm_modular_relations,
                      check_product_lemma, luxemburg_norm)
from .reports import ValidationReport
from .solver import check_discrete_monotonicity
from .toolkit import check_test_map_property, check_vector_inequalities, test_map, young_constant

UNIT = Domain((0.0,), (1.0,))


def _worst(rep: ValidationReport, name, slacks, tol, strict=False, **extras):
    slacks = np.asarray(slacks, dtype=float)
    i = int(np.argmin(slacks))
    ok = slacks[i] > tol if strict else slacks[i] >= -tol
    rep.add(name, bool(ok), float(slacks[i]), i)
    rep.extras[name] = {"instances": int(slacks.size), **extras}


def random_exponent(rng, lo=1.05, hi=4.0, domain=UNIT, name="e") -> ExponentField:
    """Smooth random field a + b sin(c pi x + d) with values in [lo, hi]."""
    a = rng.uniform(lo, hi)
    b = rng.uniform(0.0, min(a - lo, hi - a))
    c = rng.uniform(0.5, 4.0)
    d = rng.uniform(0.0, 2 * np.pi)
    return ExponentField(lambda pts: a + b * np.sin(c * np.pi * np.atleast_2d(pts)[:, 0] + d),
                         domain, name, source=f"{a:.4f}+{b:.4f}*sin({c:.4f}*pi*x+{d:.4f})")


def _random_nodal(rng, grid, zero_boundary=False):
    vals = rng.standard_normal(grid.num_nodes) * 10.0 ** rng.uniform(-3, 3)
    if rng.random() < 0.2:
        vals[rng.random(grid.num_nodes) < 0.5] = 0.0
    if not np.any(vals):
        vals[grid.num_nodes // 2] = 1.0
    if zero_boundary:
        vals[grid.boundary] = 0.0
    return GridFunction(grid, vals)


def luxemburg_suite(count=100, seed=0, exponents=(1.5, 2.0, 3.0), resolution=64, tol=1e-8):
    """Constant exponents: the Luxemburg norm is the L^p norm of the same sums."""
    rng = np.random.default_rng(seed)
    grid = build_grid(UNIT, resolution)
    rule = quadrature(grid, "gauss")
    rep = ValidationReport("Luxemburg norm vs closed-form L^p")
    for p in exponents:
        e = ExponentField.constant(p, UNIT)
        errs = []
        for _ in range(count):
            u = _random_nodal(rng, grid)
            exact = float(np.sum(rule.weights * np.abs(u.at(rule)) ** p)) ** (1.0 / p)
            errs.append(abs(luxemburg_norm(u, e) - exact) / exact)
        _worst(rep, f"p={p:g}", [tol - x for x in errs], 0.0, max_rel_error=float(max(errs)))
    return rep


def norm_modular_suite(count=1000, seed=0, resolution=32, tol=1e-9):
    """Every fourth instance is rescaled onto the unit sphere."""
    rng = np.random.default_rng(seed)
    grid = build_grid(UNIT, resolution)
    names = ("unit ball", "lower power bound", "upper power bound")
    slack = {n: [] for n in names}
    on_sphere = 0
    for i in range(count):
        e = random_exponent(rng)
        u = _random_nodal(rng, grid)
        if i % 4 == 0:
            u = u / luxemburg_norm(u, e)
            on_sphere += 1
        r = check_norm_modular_relations(u, e, tol=tol)
        for n in names:
            slack[n].append(r[n].slack)
    rep = ValidationReport("norm-modular relations")
    for n in names:
        _worst(rep, n, slack[n], tol, unit_sphere_instances=on_sphere)
    return rep


def holder_suite(count=1000, seed=0, resolution=32, tol=1e-9):
    rng = np.random.default_rng(seed)
    grid = build_grid(UNIT, resolution)
    slacks, ratios = [], []
    for _ in range(count):
        e = random_exponent(rng, 1.1, 5.0)
        u, v = _random_nodal(rng, grid), _random_nodal(rng, grid)
        if rng.random() < 0.25:
            # near-extremal pair: v ~ |u|^(e-1) sign(u)
            v = GridFunction(grid, np.sign(u.values) * np.abs(u.values) ** (e(grid.nodes) - 1.0))
        r = check_holder(u, v, e, tol=tol)
        slacks.append(r["holder"].slack)
        ratios.append(r.extras["ratio"])
    rep = ValidationReport("Hölder inequality")
    _worst(rep, "holder", slacks, tol, max_ratio=float(max(ratios)))
    return rep


def product_lemma_suite(count=1000, seed=0, resolution=32, tol=1e-9):
    rng = np.random.default_rng(seed)
    grid = build_grid(UNIT, resolution)
    lower, upper, cases = [], [], {"i": 0, "ii": 0}
    for _ in range(count):
        p = random_exponent(rng, 0.5, 3.0, name="p")
        q = random_exponent(rng, 1.0 / p.minimum + 1e-3, 1.0 / p.minimum + 3.0, name="q")
        f = _random_nodal(rng, grid)
        r = check_product_lemma(f, p, q, tol=tol)
        lower.append(r["lower"].slack)
        upper.append(r["upper"].slack)
        cases[r.extras["case"]] += 1
    rep = ValidationReport("product lemma")
    _worst(rep, "lower", lower, tol, cases=cases)
    _worst(rep, "upper", upper, tol, cases=cases)
    return rep


def young_suite(triples=((2.0, 1.0, 0.1), (2.0, 1.5, 0.1), (2.5, 1.8, 0.05)), tol=1e-12):
    rep = ValidationReport("Young-type constant")
    x = UNIT.validation_points(200)
    for p, q, eps in triples:
        yc = young_constant(ExponentField.constant(p, UNIT), ExponentField.constant(q, UNIT),
                            eps, points=x, s_count=200)
        rep.add(f"(p,q,eps)=({p:g},{q:g},{eps:g})", yc.verified, -yc.max_violation,
                note=f"C={yc.value!r}")
        rep.extras[f"C({p:g},{q:g},{eps:g})"] = yc.value
    return rep


def vector_suite(count=10_000, seed=0, exponents=(1.5, 2.0, 3.0), dim=2, tol=1e-12):
    rng = np.random.default_rng(seed)
    rep = ValidationReport("vector inequalities")
    for p in exponents:
        scale = 10.0 ** rng.uniform(-3, 3, size=(count, 1))
        xi = rng.standard_normal((count, dim)) * scale
        eta = rng.standard_normal((count, dim)) * scale * 10.0 ** rng.uniform(-2, 2, size=(count, 1))
        eta[:10] = 0.0
        eta[10:20] = xi[10:20]
        r = check_vector_inequalities(p, xi, eta, tol)
        for c in r.checks:
            rep.add(f"p={p:g}: {c.name}", c.passed, c.slack, c.location)
    rep.extras["pairs_per_exponent"] = count
    return rep


def test_map_suite(points=10_000, h=1e-5, rtol=1e-6):
    """Map inequalities on dense grids, and phi' against central differences."""
    rep = ValidationReport("test-map properties")
    sub = check_test_map_property(SUBNATURAL, s_grid=np.linspace(-10, 10, points))
    rep.add("subnatural: phi' - |phi| >= 1/2", sub.passed, sub.checks[0].slack,
            sub.checks[0].location, note=f"infimum {sub.extras['infimum']:.6g}")
    for pp in (2.0, 2.5, 3.0):
        nat = check_test_map_property(NATURAL, pp, np.linspace(-5, 5, points))
        rep.add(f"natural p+={pp:g}: positive infimum", nat.passed, nat.checks[0].slack,
                nat.checks[0].location, note=f"infimum {nat.extras['infimum']:.6g}")
    # ranges keep h^2 phi'''/phi' well below the tolerance
    cases = [(SUBNATURAL, None, 10.0), (NATURAL, 2.0, 0.5), (NATURAL, 2.5, 0.125)]
    for variant, pp, r in cases:
        s = np.linspace(-r, r, points)
        _, d = test_map(s, variant, pp)
        fd = (test_map(s + h, variant, pp)[0] - test_map(s - h, variant, pp)[0]) / (2 * h)
        err = float(np.max(np.abs(fd - d) / np.abs(d)))
        label = variant if pp is None else f"{variant} p+={pp:g}"
        rep.add(f"derivative ({label})", err <= rtol, rtol - err, note=f"max rel error {err:.2e}")
    return rep


test_map_suite.__test__ = False


MONOTONICITY_FIELDS = ("2 + 0.3*sin(pi*x)", "1.5 + 0.3*x", "3 - 0.8*x")


def monotonicity_suite(count=200, seed=0, resolution=64, fields=MONOTONICITY_FIELDS,
                       tol=1e-12, strict=1e-10, separation=1e-3):
    """Pairing (L(u) - L(v), u - v) over random boundary-zero pairs."""
    rng = np.random.default_rng(seed)
    grid = build_grid(UNIT, resolution)
    rep = ValidationReport("discrete monotonicity")
    for src in fields:
        p = ExponentField.from_expression(src, UNIT, "p")
        nonneg, positive, separated = [], [], 0
        for i in range(count):
            u = _random_nodal(rng, grid, zero_boundary=True)
            if i % 3 == 0:
                v = u + _random_nodal(rng, grid, zero_boundary=True) * 10.0 ** rng.uniform(-4, -1)
            else:
                v = _random_nodal(rng, grid, zero_boundary=True)
            pairing = check_discrete_monotonicity(u, v, p)
            nonneg.append(pairing)
            dist = luxemburg_norm(GradientField.of(u - v), p)
            if dist > separation:
                separated += 1
                positive.append(pairing - strict)
        _worst(rep, f"{src}: pairing >= 0", nonneg, tol)
        if positive:
            _worst(rep, f"{src}: pairing > {strict:g} when separated", positive, 0.0,
                   strict=True, separated_pairs=separated)
    return rep


SUITES = {
    "luxemburg": luxemburg_suite,
    "norm_modular": norm_modular_suite,
    "holder": holder_suite,
    "product_lemma": product_lemma_suite,
    "young": young_suite,
    "vector": vector_suite,
    "test_map": test_map_suite,
    "monotonicity": monotonicity_suite,
}


def run_suites(seed=0, names=None) -> dict:
    out = {}
    for name in names or SUITES:
        fn = SUITES[name]
        out[name] = fn() if name in ("young", "test_map") else fn(seed=seed)
    return out
