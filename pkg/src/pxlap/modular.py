"""Modulars, Luxemburg norms and variational constants on P1 functions.

Everything here works on a discrete measure: values sampled at quadrature
points with positive weights.  Nodal functions are sampled with the Gauss
rule of the grid, gradients (elementwise constant) with the barycenter rule.
Since the inequalities of variable-exponent Lebesgue theory hold for every
measure, the checks below are exact statements about these sums, not
approximations of them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import GridFunction, Grid, QuadratureRule, quadrature, stiffness_matrix
from .exponents import AdmissibilityError, ExponentField, critical_exponent
from .reports import ValidationReport

EPS = np.finfo(float).eps


@dataclass
class GradientField:
    """Elementwise-constant vector field, typically the gradient of a P1 function."""

    grid: Grid
    vectors: np.ndarray

    @classmethod
    def of(cls, u: GridFunction) -> "GradientField":
        return cls(u.grid, u.gradients())

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


def sample(u, e: ExponentField, rule: QuadratureRule | None = None):
    """Return ``(|values|, weights, exponents)`` of ``u`` on its quadrature rule."""
    if isinstance(u, GradientField):
        rule = rule or quadrature(u.grid, "barycenter")
        vals = np.repeat(u.magnitude()[:, None], rule.shape[1], axis=1)
    elif isinstance(u, GridFunction):
        rule = rule or quadrature(u.grid, "gauss")
        vals = np.abs(u.at(rule))
    else:
        if rule is None:
            raise TypeError("raw samples need an explicit quadrature rule")
        vals = np.abs(np.asarray(u, dtype=float)).reshape(rule.shape)
    return vals.ravel(), rule.weights.ravel(), rule.evaluate(e).ravel()


def _rho(a, w, ex, lam=1.0):
    """sum w (a/lam)^ex, evaluated in log space; zero samples contribute 0."""
    pos = a > 0
    if not np.any(pos):
        return 0.0
    with np.errstate(over="ignore"):
        terms = np.exp(ex[pos] * (np.log(a[pos]) - math.log(lam)))
    return float(np.sum(w[pos] * terms))


def _luxemburg(a, w, ex, rtol=1e-14):
    if not np.any(a > 0):
        return 0.0
    lo = EPS
    hi = float(a.max()) * float(np.sum(w)) ** (1.0 / float(ex.min())) + 1.0
    while _rho(a, w, ex, hi) > 1.0:
        hi *= 2.0
    while _rho(a, w, ex, lo) < 1.0:
        lo /= 2.0
    # geometric bisection on the strictly decreasing map lam -> rho(u/lam)
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo) * math.sqrt(hi)   # the product may overflow
        if mid <= lo or mid >= hi:
            break
        if _rho(a, w, ex, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo) * math.sqrt(hi)


def _luxemburg_sensitivity(a, w, ex, norm):
    """d norm / d a_j from implicit differentiation of rho(a/norm) = 1."""
    if norm == 0.0:
        return np.zeros_like(a)
    pos = a > 0
    t = np.zeros_like(a)
    t[pos] = np.exp(ex[pos] * (np.log(a[pos]) - math.log(norm)))   # (a/N)^e
    denom = float(np.sum(w * ex * t))
    out = np.zeros_like(a)
    out[pos] = norm * w[pos] * ex[pos] * t[pos] / a[pos] / denom
    return out


def modular(u, e: ExponentField, rule: QuadratureRule | None = None) -> float:
    """Quadrature value of the integral of |u|^e(x)."""
    a, w, ex = sample(u, e, rule)
    return _rho(a, w, ex)


def luxemburg_norm(u, e: ExponentField, rule: QuadratureRule | None = None,
                   rtol: float = 1e-14) -> float:
    """Luxemburg norm inf{lam > 0 : rho(u/lam) <= 1} by bracketing and bisection.

    The bracket starts at [eps, max|u| |Omega|^(1/e-) + 1] and the upper end is
    doubled until it encloses the root; the lower end is halved for functions
    smaller than machine epsilon.
    """
    a, w, ex = sample(u, e, rule)
    return _luxemburg(a, w, ex, rtol)


def _bounds(norm, pm, pp):
    if norm > 1.0:
        return norm ** pm, norm ** pp
    return norm ** pp, norm ** pm


def _rel(x, scale):
    return x / max(1.0, abs(scale))


def check_norm_modular_relations(u, e: ExponentField, rule=None, tol=1e-9) -> ValidationReport:
    """Unit-ball equivalence and the two-sided power bounds between norm and modular.

    Slacks of the power bounds are relative to max(1, |bound|).  The exponent
    extrema are those of the sampled exponents, which is what the discrete
    measure sees.
    """
    a, w, ex = sample(u, e, rule)
    norm = _luxemburg(a, w, ex)
    rho = _rho(a, w, ex)
    pm, pp = float(ex.min()), float(ex.max())
    rep = ValidationReport("norm-modular relations")
    if norm > 1.0 + tol:
        s = rho - 1.0
    elif norm < 1.0 - tol:
        s = 1.0 - rho
    else:
        s = tol - abs(rho - 1.0)
    rep.add("unit ball", s >= -tol, s)
    lower, upper = _bounds(norm, pm, pp)
    rep.add("lower power bound", _rel(rho - lower, lower) >= -tol, _rel(rho - lower, lower))
    rep.add("upper power bound", _rel(upper - rho, upper) >= -tol, _rel(upper - rho, upper))
    rep.extras.update(norm=norm, modular=rho, p_minus=pm, p_plus=pp)
    return rep


def check_holder(u, v, e: ExponentField, rule=None, tol=1e-9) -> ValidationReport:
    """|int uv| <= (1/p- + 1/(p')-) ||u||_p ||v||_p'."""
    if isinstance(u, GridFunction):
        rule = rule or quadrature(u.grid, "gauss")
        uq, vq = u.at(rule).ravel(), v.at(rule).ravel()
    else:
        uq, vq = np.ravel(u), np.ravel(v)
    w = rule.weights.ravel()
    ex = rule.evaluate(e).ravel()
    if ex.min() <= 1.0:
        raise AdmissibilityError("Hölder inequality needs e- > 1")
    exc = ex / (ex - 1.0)
    lhs = abs(float(np.sum(w * uq * vq)))
    nu = _luxemburg(np.abs(uq), w, ex)
    nv = _luxemburg(np.abs(vq), w, exc)
    const = 1.0 / ex.min() + 1.0 / exc.min()
    bound = const * nu * nv
    ratio = lhs / bound if bound > 0 else 0.0
    slack = _rel(bound - lhs, bound)
    rep = ValidationReport("Hölder")
    rep.add("holder", slack >= -tol, slack)
    rep.extras.update(lhs=lhs, bound=bound, ratio=ratio, constant=const)
    return rep


def check_product_lemma(f, p: ExponentField, q: ExponentField, rule=None, tol=1e-9) -> ValidationReport:
    """Sandwich between ||f||_{pq} powers and ||f^p||_q."""
    if isinstance(f, GridFunction):
        rule = rule or quadrature(f.grid, "gauss")
        fq = np.abs(f.at(rule).ravel())
    else:
        fq = np.abs(np.ravel(f))
    if not np.any(fq > 0):
        raise ValueError("product lemma needs f not identically 0")
    w = rule.weights.ravel()
    pe, qe = rule.evaluate(p).ravel(), rule.evaluate(q).ravel()
    if np.any(pe * qe < 1.0):
        raise AdmissibilityError("product lemma needs p q >= 1")
    A = _luxemburg(fq, w, pe * qe)
    with np.errstate(divide="ignore"):
        fp = np.where(fq > 0, np.exp(pe * np.log(np.where(fq > 0, fq, 1.0))), 0.0)
    B = _luxemburg(fp, w, qe)
    pm, pp = float(pe.min()), float(pe.max())
    if A <= 1.0:
        case, lower, upper = "i", A ** pp, A ** pm
    else:
        case, lower, upper = "ii", A ** pm, A ** pp
    rep = ValidationReport("product lemma")
    rep.add("lower", _rel(B - lower, lower) >= -tol, _rel(B - lower, lower))
    rep.add("upper", _rel(upper - B, upper) >= -tol, _rel(upper - B, upper))
    rep.extras.update(case=case, norm_pq=A, norm_fp_q=B, lower=lower, upper=upper)
    return rep


# --- variational constants -------------------------------------------------

@dataclass
class ConstantConfig:
    starts: int = 8
    seed: int = 0
    max_iter: int = 2000
    rel_decrease: float = 1e-8
    window: int = 20
    threads: int = 1


@dataclass
class ConstantEstimate:
    """Best Rayleigh-quotient value found; an upper bound on the discrete infimum."""

    value: float
    minimizer: GridFunction
    trace: list
    converged: bool
    starts: int
    iterations: int
    start_values: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "iterations": self.iterations,
                "converged": self.converged, "starts": self.starts,
                "start_values": self.start_values, "upper_bound": True,
                "notes": self.notes}


class RayleighQuotient:
    """v -> ||grad v||_{L^num} / ||c v||_{L^den} on boundary-zero P1 functions."""

    def __init__(self, grid: Grid, numerator: ExponentField, denominator: ExponentField,
                 weight: GridFunction | None = None, weight_power: ExponentField | None = None):
        self.grid = grid
        self.bary = quadrature(grid, "barycenter")
        self.gauss = quadrature(grid, "gauss")
        self.num_w = self.bary.weights.ravel()
        self.num_e = self.bary.evaluate(numerator).ravel()
        self.den_w = self.gauss.weights.ravel()
        self.den_e = self.gauss.evaluate(denominator).ravel()
        self.coef = np.ones(self.gauss.shape)
        if weight is not None:
            gq = np.maximum(weight.at(self.gauss), 0.0)
            power = 1.0 / self.gauss.evaluate(weight_power)
            with np.errstate(divide="ignore"):
                self.coef = np.where(gq > 0, np.exp(power * np.log(np.where(gq > 0, gq, 1.0))), 0.0)
        self.interior = grid.interior

    def full(self, v_int):
        v = np.zeros(self.grid.num_nodes)
        v[self.interior] = v_int
        return v

    def parts(self, v_int):
        v = self.full(v_int)
        G = self.grid.gradients(v)
        s = np.linalg.norm(G, axis=1)
        num = _luxemburg(s, self.num_w, self.num_e)
        aq = (self.coef * self.gauss.interpolate(v)).ravel()
        den = _luxemburg(np.abs(aq), self.den_w, self.den_e)
        return v, G, s, num, aq, den

    def __call__(self, v_int) -> float:
        *_, num, _, den = self.parts(v_int)
        return num / den if den > 0 else math.inf

    def denominator(self, v_int) -> float:
        return self.parts(v_int)[-1]

    def value_and_grad(self, v_int):
        v, G, s, num, aq, den = self.parts(v_int)
        ds = _luxemburg_sensitivity(s, self.num_w, self.num_e, num)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(s[:, None] > 0, G / s[:, None], 0.0)
        local = np.einsum("eij,ei->ej", self.grid.grad_ops, ds[:, None] * unit)
        g_num = self.grid.scatter(local)
        da = _luxemburg_sensitivity(np.abs(aq), self.den_w, self.den_e, den) * np.sign(aq)
        da = da.reshape(self.gauss.shape) * self.coef
        g_den = self.grid.scatter(da @ self.gauss.barycentric)
        Q = num / den
        grad = (g_num - Q * g_den) / den
        return Q, grad[self.interior]


def _descend(problem: RayleighQuotient, solve, v, cfg: ConstantConfig):
    v = v / problem.denominator(v)
    R, g = problem.value_and_grad(v)
    trace = [(0, R)]
    tau = R
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        d = solve(g)
        accepted = False
        for _ in range(60):
            trial = v - tau * d
            den = problem.denominator(trial)
            if den > 0:
                trial = trial / den
                R_new = problem(trial)
                if R_new < R:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            converged = True
            break
        v, R = trial, R_new
        _, g = problem.value_and_grad(v)
        trace.append((it, R))
        tau *= 1.5
        if len(trace) > cfg.window:
            old = trace[-cfg.window - 1][1]
            if (old - R) / abs(R) < cfg.rel_decrease:
                converged = True
                break
    return R, v, trace, converged, it


def _minimize(problem: RayleighQuotient, cfg: ConstantConfig, notes: dict) -> ConstantEstimate:
    grid = problem.grid
    K = stiffness_matrix(grid)
    Kii = K[problem.interior][:, problem.interior].tocsc()
    lu = spla.splu(Kii)
    rng = np.random.default_rng(cfg.seed)
    seeds = [rng.standard_normal(len(problem.interior)) for _ in range(cfg.starts)]

    def run(v0):
        return _descend(problem, lu.solve, v0, cfg)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(v0) for v0 in seeds]
    # lowest value wins, ties go to the earliest start
    best = min(range(len(results)), key=lambda i: (results[i][0], i))
    R, v, trace, conv, iters = results[best]
    return ConstantEstimate(
        value=float(R), minimizer=GridFunction(grid, problem.full(v)), trace=trace,
        converged=bool(conv), starts=cfg.starts, iterations=int(iters),
        start_values=[float(r[0]) for r in results], notes=notes)


def sobolev_constant(p: ExponentField, q: ExponentField, grid: Grid,
                     config: ConstantConfig | None = None) -> ConstantEstimate:
    """Estimate inf ||grad v||_p / ||v||_q over boundary-zero grid functions.

    Multi-start descent along the stiffness-preconditioned gradient (exact
    gradient of the Luxemburg quotient by implicit differentiation), step
    halved until the quotient decreases.  The result is an upper bound on the
    discrete infimum.
    """
    cfg = config or ConstantConfig()
    N = grid.dimension
    pts = p.domain.validation_points()
    notes = {"p_plus_lt_N": p.maximum < N,
             "q_uniformly_subcritical": bool(np.min(critical_exponent(p, N)(pts) - q(pts)) > 0)}
    return _minimize(RayleighQuotient(grid, p, q), cfg, notes)


def weighted_constant(g: GridFunction, eta: ExponentField, q: ExponentField, grid: Grid,
                      config: ConstantConfig | None = None) -> ConstantEstimate:
    """Estimate inf ||grad phi||_q / ||g^(1/eta) phi||_eta."""
    cfg = config or ConstantConfig()
    if eta.minimum <= 0.0:
        raise AdmissibilityError(
            f"weighted constant needs eta- > 0 (g^(1/eta) undefined where eta = 0); eta- = {eta.minimum:.3g}")
    if np.any(g.values < 0):
        raise ValueError("weight g must be nonnegative")
    if not np.any(g.values > 0):
        raise ValueError("weight g must not vanish identically")
    return _minimize(RayleighQuotient(grid, q, eta, weight=g, weight_power=eta), cfg, {})
