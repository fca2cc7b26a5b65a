"""Variable exponents on box domains and the exponents derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expressions import Expression
from .reports import ValidationReport

SUBNATURAL = "subnatural"
NATURAL = "natural"
VARIANTS = (SUBNATURAL, NATURAL)

# strict inequalities need at least this much room on the validation grid
MARGIN_TOL = 1e-9


class AdmissibilityError(ValueError):
    """Exponent data outside the range a routine can handle."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in one or two dimensions."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ValueError("domain must be a 1D interval or a 2D box")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("domain box must have positive volume")

    @classmethod
    def unit(cls, dimension: int = 1) -> "Domain":
        return cls((0.0,) * dimension, (1.0,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def on_boundary(self, points, atol=1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension:
            pts = pts.reshape(-1, self.dimension)
        lo, hi = np.array(self.lower), np.array(self.upper)
        scale = atol * max(1.0, float(np.max(np.abs(np.r_[lo, hi]))))
        return np.any((np.abs(pts - lo) <= scale) | (np.abs(pts - hi) <= scale), axis=1)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= np.array(self.lower)) & (pts <= np.array(self.upper)), axis=1)

    def validation_points(self, count=None) -> np.ndarray:
        """Sample grid of the closed box: 1024 points in 1D, 128x128 in 2D."""
        if self.dimension == 1:
            n = count or 1024
            return np.linspace(self.lower[0], self.upper[0], n)[:, None]
        n = count or 128
        xs = np.linspace(self.lower[0], self.upper[0], n)
        ys = np.linspace(self.lower[1], self.upper[1], n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


class ExponentField:
    """Scalar field x -> e(x) with cached extrema over a validation grid.

    Parameters
    ----------
    func : callable
        Maps an ``(m, d)`` coordinate array to ``m`` values.
    domain : Domain
    name : str, optional
        Label used in reports.
    extra_points : array, optional
        Additional points (e.g. interpolation nodes) included when the
        extrema are computed.
    """

    def __init__(self, func: Callable, domain: Domain, name: str = "e", source=None,
                 extra_points=None):
        self._func = func
        self.domain = domain
        self.name = name
        self.source = source
        pts = domain.validation_points()
        if extra_points is not None:
            pts = np.vstack([pts, np.asarray(extra_points, dtype=float).reshape(-1, domain.dimension)])
        vals = self(pts)
        if not np.all(np.isfinite(vals) | np.isposinf(vals)):
            raise ValueError(f"exponent {name} is not finite on the validation grid")
        self._validation_values = vals
        i_min, i_max = int(np.argmin(vals)), int(np.argmax(vals))
        self.minimum = float(vals[i_min])
        self.maximum = float(vals[i_max])
        self.argmin = pts[i_min]
        self.argmax = pts[i_max]

    @classmethod
    def constant(cls, value: float, domain: Domain, name="e") -> "ExponentField":
        v = float(value)
        return cls(lambda pts: np.full(np.atleast_2d(pts).shape[0], v), domain, name, source=repr(v))

    @classmethod
    def from_expression(cls, expr, domain: Domain, name="e") -> "ExponentField":
        ex = expr if isinstance(expr, Expression) else Expression(str(expr))
        return cls(ex, domain, name, source=ex.source)

    @classmethod
    def from_nodes(cls, nodes, values, domain: Domain, name="e") -> "ExponentField":
        """Piecewise-linear interpolant of nodal samples."""
        nodes = np.asarray(nodes, dtype=float).reshape(-1, domain.dimension)
        values = np.asarray(values, dtype=float)
        if domain.dimension == 1:
            order = np.argsort(nodes[:, 0])
            xs, vs = nodes[order, 0], values[order]

            def func(pts):
                return np.interp(np.atleast_2d(pts)[:, 0], xs, vs)
        else:
            from scipy.interpolate import LinearNDInterpolator

            interp = LinearNDInterpolator(nodes, values)

            def func(pts):
                return np.asarray(interp(np.atleast_2d(pts)), dtype=float)
        return cls(func, domain, name, source="nodal samples", extra_points=nodes)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.domain.dimension)
        return np.asarray(self._func(pts), dtype=float).reshape(pts.shape[0])

    def map(self, fn: Callable, name: str) -> "ExponentField":
        return ExponentField(lambda pts: fn(self(pts)), self.domain, name)

    @property
    def is_constant(self) -> bool:
        return self.maximum - self.minimum <= 1e-14 * max(1.0, abs(self.maximum))

    def __repr__(self):
        return (f"ExponentField({self.name}: {self.source or '<callable>'}, "
                f"min={self.minimum:.6g}, max={self.maximum:.6g})")


def as_field(value, domain: Domain, name="e") -> ExponentField:
    """Coerce a number, expression string or field into an ExponentField."""
    if isinstance(value, ExponentField):
        return value
    if isinstance(value, (int, float, np.floating)):
        return ExponentField.constant(float(value), domain, name)
    return ExponentField.from_expression(value, domain, name)


@dataclass(frozen=True)
class ExponentTriple:
    """The exponents p, q and eta of one problem instance.

    The natural-growth variant needs q identical to p and p >= 2 everywhere;
    both are enforced here because the natural scheme is undefined otherwise.
    """

    p: ExponentField
    q: ExponentField
    eta: ExponentField
    variant: str = SUBNATURAL

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.p.minimum <= 1.0:
            raise AdmissibilityError(f"p must exceed 1 everywhere (p- = {self.p.minimum:.6g})")
        if self.variant == NATURAL:
            pts = self.p.domain.validation_points()
            gap = float(np.max(np.abs(self.p(pts) - self.q(pts))))
            if gap > MARGIN_TOL:
                raise AdmissibilityError(
                    f"natural growth needs q == p pointwise; max |q - p| = {gap:.3g}")
            if self.p.minimum < 2.0 - MARGIN_TOL:
                raise AdmissibilityError(
                    f"natural growth needs p >= 2 (singular case unsupported); p- = {self.p.minimum:.6g}")

    @property
    def domain(self) -> Domain:
        return self.p.domain


def conjugate_exponent(e: ExponentField) -> ExponentField:
    """Hölder conjugate e' with 1/e + 1/e' = 1 (infinite e maps to 1)."""
    if e.minimum <= 1.0:
        raise AdmissibilityError(f"conjugate of {e.name} needs e- > 1, got {e.minimum:.6g}")

    def conj(v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.isposinf(v), 1.0, v / (v - 1.0))

    return e.map(conj, e.name + "'")


def _critical(v, N):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v < N, N * v / (N - v), np.inf)


def sobolev_conjugate(e: ExponentField, N: int) -> ExponentField:
    """Critical exponent N e / (N - e); requires e+ < N."""
    if e.maximum >= N:
        raise AdmissibilityError(
            f"Sobolev conjugate of {e.name} needs e+ < N = {N}, got e+ = {e.maximum:.6g}")
    return e.map(lambda v: N * v / (N - v), e.name + "*")


def critical_exponent(e: ExponentField, N: int) -> ExponentField:
    """Like :func:`sobolev_conjugate`, but +inf wherever e(x) >= N."""
    return e.map(lambda v: _critical(v, N), e.name + "*")


def check_admissibility(t: ExponentTriple, N: int | None = None, tol: float = MARGIN_TOL) -> ValidationReport:
    """Evaluate the structural exponent conditions on the validation grid.

    Strict inequalities pass when the worst slack exceeds ``tol``; non-strict
    ones when it is at least ``-tol``.  Where q(x) >= N the critical exponent
    q*(x) is taken as +inf (Sobolev embedding into L-infinity).  Whether
    p+ < N holds is recorded but does not affect the verdict.
    """
    N = N or t.domain.dimension
    pts = t.domain.validation_points()
    p, q, eta = t.p(pts), t.q(pts), t.eta(pts)
    rep = ValidationReport("admissibility")

    def worst(slack, strict, name, required=True, note=""):
        i = int(np.argmin(slack))
        s = float(slack[i])
        ok = s > tol if strict else s >= -tol
        rep.add(name, ok, s, pts[i].tolist(), required=required, note=note)

    worst(p - 1.0, True, "p > 1")
    worst(N - p, True, "p < N", required=False,
          note="embedding regime; not attainable in 1D")
    worst(q - 1.0, False, "q >= 1")
    worst(q - (p - 1.0), False, "q >= p - 1")
    if t.variant == SUBNATURAL:
        worst(p - q, True, "q < p")
    else:
        worst(-np.abs(q - p), False, "q == p")
        worst(p - 2.0, False, "p >= 2")
    worst(eta, False, "eta >= 0")
    qstar = _critical(q, N)
    margin = qstar - 1.0 - eta
    worst(margin, True, "eta < q* - 1")
    inf_margin = float(np.min(margin))
    rep.add("uniformly subcritical", inf_margin > tol, inf_margin,
            pts[int(np.argmin(margin))].tolist())
    rep.extras["N"] = N
    rep.extras["variant"] = t.variant
    return rep


def data_exponents(t: ExponentTriple, N: int | None = None):
    """Integrability exponents for f and g: the scalar q0 and the field q1."""
    N = N or t.domain.dimension
    qm = t.q.minimum
    if qm >= N:
        raise AdmissibilityError(f"data exponents need q- < N = {N}, got q- = {qm:.6g}")
    s = N * qm / (N - qm)
    q0 = s / (s - 1.0)
    qstar = critical_exponent(t.q, N)
    eta = t.eta
    ratio = ExponentField(lambda pts: qstar(pts) / (eta(pts) + 1.0), t.domain, "q*/(eta+1)")
    return q0, conjugate_exponent(ratio)


def check_log_holder(e: ExponentField, sample_pairs: int = 4000, seed: int = 0,
                     levels: int = 40, threshold: float = 1e3) -> ValidationReport:
    """Estimate the log-Hölder constant sup |e(x)-e(y)| * |log|x-y|| over close pairs.

    Pairs are drawn at geometrically shrinking separations below 1/2; each
    level re-samples around the pairs with the largest jumps at the previous
    level so that discontinuities keep being straddled.  A jump makes the ratio
    grow like |log r|, far too slowly to cross ``threshold`` in floating point,
    so unboundedness is inferred when the oscillation stops decaying and the
    extrapolated ratio would exceed the threshold as r -> 0.
    """
    rng = np.random.default_rng(seed)
    dom = e.domain
    d = dom.dimension
    lo, hi = np.array(dom.lower), np.array(dom.upper)
    per_level = max(8, sample_pairs // levels)
    centers = None
    osc, best, scales = [], [], []
    C = 0.0
    for L in range(levels):
        r_hi = 0.5 * 2.0 ** -L
        r = np.exp(rng.uniform(np.log(r_hi / 2), np.log(r_hi), per_level))
        x = lo + (hi - lo) * rng.random((per_level, d))
        if centers is not None and len(centers):
            # half the pairs re-sample around the largest jumps of the previous level
            m = per_level // 2
            picks = centers[np.arange(m) % len(centers)]
            x[:m] = picks + (rng.random((m, d)) - 0.5) * r[:m, None]
        x = np.clip(x, lo, hi)
        if d == 1:
            direction = rng.choice([-1.0, 1.0], size=(per_level, 1))
        else:
            ang = rng.uniform(0, 2 * np.pi, per_level)
            direction = np.column_stack([np.cos(ang), np.sin(ang)])
        y = x + r[:, None] * direction
        outside = ~dom.contains(y)
        y[outside] = x[outside] - r[outside, None] * direction[outside]
        keep = dom.contains(y)
        x, y, r = x[keep], y[keep], r[keep]
        dist = np.linalg.norm(y - x, axis=1)
        good = dist > 0
        x, y, dist = x[good], y[good], dist[good]
        jump = np.abs(e(x) - e(y))
        ratio = jump * np.abs(np.log(dist))
        top = np.argsort(-jump)[:8]
        top = top[jump[top] >= 0.5 * jump.max(initial=0.0)]
        centers = 0.5 * (x[top] + y[top])
        osc.append(float(jump.max(initial=0.0)))
        best.append(float(ratio.max(initial=0.0)))
        scales.append(r_hi)
        C = max(C, best[-1])
    coarse = max(osc[:3]) if osc else 0.0
    fine = min(osc[-5:]) if osc else 0.0
    persistent = fine > 1e-8 and fine >= 0.25 * coarse
    rep = ValidationReport("log-Hölder")
    if persistent:
        # ratio ~ fine * |log r|; it crosses the threshold at r = exp(-threshold / fine)
        rep.add("log-Hölder bounded", False, -math.inf,
                note=f"oscillation {fine:.3g} does not decay; ratio exceeds {threshold:g} "
                     f"below separation exp(-{threshold / fine:.3g})")
    else:
        rep.add("log-Hölder bounded", C <= threshold, threshold - C)
    rep.extras.update(estimate=C, unbounded=persistent, oscillation=osc,
                      level_max_ratio=best, scales=scales)
    return rep


def partition_by_exponent(p: ExponentField, grid):
    """Split elements into {p >= 2} and {p < 2} by p at each barycenter."""
    pb = p(grid.barycenters)
    degenerate = pb >= 2.0
    return degenerate, ~degenerate
