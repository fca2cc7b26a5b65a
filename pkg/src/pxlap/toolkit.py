"""Pointwise maps and inequalities behind the truncation argument."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretization import GridFunction
from .exponents import NATURAL, SUBNATURAL, AdmissibilityError, ExponentField, MARGIN_TOL
from .reports import ValidationReport

LOG_MAX = math.log(np.finfo(float).max)


def _apply(u, fn):
    if isinstance(u, GridFunction):
        return GridFunction(u.grid, fn(u.values))
    out = fn(np.asarray(u, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _check_level(k):
    if not k > 0:
        raise ValueError(f"truncation level must be positive, got {k}")


def truncate(u, k):
    """T_k: clamp to [-k, k]."""
    _check_level(k)
    return _apply(u, lambda a: np.clip(a, -k, k))


def excess(u, k):
    """G_k(u) = u - T_k(u)."""
    _check_level(k)
    return _apply(u, lambda a: a - np.clip(a, -k, k))


def band_indicator(u, k):
    """T_1(G_{k-1}(u)): 0 below k-1, linear ramp on [k-1, k], 1 above k."""
    if not k > 1:
        raise ValueError(f"band indicator needs k > 1, got {k}")
    return _apply(u, lambda a: np.clip(a - np.clip(a, -(k - 1), k - 1), -1.0, 1.0))


def _coefficient(variant, p_plus):
    if variant == SUBNATURAL:
        return 0.25
    if variant == NATURAL:
        if p_plus is None:
            raise ValueError("natural variant needs p_plus")
        return 2.0 ** (4.0 * p_plus - 2.0)
    raise ValueError(f"unknown variant {variant!r}")


def test_map_bound(variant, p_plus=None) -> float:
    """Largest |s| for which phi'(s) = (1 + 2c s^2) exp(c s^2) is finite."""
    c = _coefficient(variant, p_plus)
    lo, hi = 0.0, math.sqrt(LOG_MAX / c)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if c * mid * mid + math.log1p(2 * c * mid * mid) < LOG_MAX:
            lo = mid
        else:
            hi = mid
    return lo


def test_map(s, variant=SUBNATURAL, p_plus=None):
    """phi(s) = s exp(c s^2) and its derivative.

    c is 1/4 for the sub-natural scheme and 2^(4 p+ - 2) for natural growth.
    Arguments past the overflow bound raise OverflowError.
    """
    c = _coefficient(variant, p_plus)
    s_arr = np.asarray(s, dtype=float)
    bound = test_map_bound(variant, p_plus)
    if np.any(np.abs(s_arr) > bound):
        raise OverflowError(f"|s| exceeds {bound:.6g}; exp(c s^2) would overflow")
    ex = np.exp(c * s_arr * s_arr)
    phi = s_arr * ex
    dphi = (1.0 + 2.0 * c * s_arr * s_arr) * ex
    if np.ndim(phi) == 0:
        return float(phi), float(dphi)
    return phi, dphi


test_map.__test__ = False  # keep pytest from collecting it
test_map_bound.__test__ = False


def check_test_map_property(variant, p_plus=None, s_grid=None, tol=1e-12) -> ValidationReport:
    """Scan phi' - |phi| >= 1/2 (sub-natural) or phi' - 2^(2p+ - 1) phi > 0 (natural).

    Written as exp(c s^2) times a polynomial so overflow only produces +inf
    in the exponential factor, never inf - inf.
    """
    c = _coefficient(variant, p_plus)
    s = np.linspace(-10, 10, 10001) if s_grid is None else np.asarray(s_grid, dtype=float)
    rep = ValidationReport(f"test map ({variant})")
    if variant == SUBNATURAL:
        poly = 1.0 + 2.0 * c * s * s - np.abs(s)
    else:
        b = 2.0 ** (2.0 * p_plus - 1.0)
        poly = 1.0 + 2.0 * c * s * s - b * s
    with np.errstate(over="ignore"):
        val = np.exp(c * s * s) * poly
    if variant == SUBNATURAL:
        i = int(np.argmin(val))
        rep.add("phi' - |phi| >= 1/2", val[i] - 0.5 >= -tol, val[i] - 0.5, float(s[i]))
    else:
        i = int(np.argmin(val))
        rep.add(f"phi' - {b:g} phi > 0", val[i] > 0, val[i], float(s[i]))
        rep.extras["constant"] = float(val[i])
    rep.extras["infimum"] = float(val[i])
    return rep


@dataclass
class YoungConstant:
    epsilon: float
    value: float
    worst_point: np.ndarray
    verified: bool
    max_violation: float
    s_star_max: float


def young_constant(p: ExponentField, q: ExponentField, epsilon: float,
                   points=None, s_count: int = 200) -> YoungConstant:
    """Smallest C with s^q(x) <= eps s^p(x) + C for all s >= 0.

    The maximizer of s^q - eps s^p is s* = (q / (eps p))^(1/(p-q)), giving
    sup = s*^q (1 - q/p); C is its maximum over the x-sample.  The result is
    then re-checked on an (x, s) grid with s in [0, 10 max s*].
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = p.domain.validation_points(200) if points is None else np.asarray(points, dtype=float)
    pv, qv = p(x), q(x)
    if np.any(pv - 1.0 <= 0) or np.any(qv < pv - 1.0 - MARGIN_TOL) or np.any(qv >= pv):
        raise AdmissibilityError("young_constant needs 0 < p - 1 <= q < p")
    s_star = (qv / (epsilon * pv)) ** (1.0 / (pv - qv))
    sup = s_star ** qv * (1.0 - qv / pv)
    i = int(np.argmax(sup))
    C = float(sup[i])
    s = np.linspace(0.0, 10.0 * float(s_star.max()), s_count)
    S, P = np.meshgrid(s, pv, indexing="ij")
    _, Qv = np.meshgrid(s, qv, indexing="ij")
    gap = S ** Qv - epsilon * S ** P - C
    worst = float(gap.max())
    return YoungConstant(float(epsilon), C, x[i], worst <= 1e-12 * max(1.0, C), worst,
                         float(s_star.max()))


def regularized_hamiltonian(x, xi_norm, n, q: ExponentField):
    """H_n = |xi|^q(x) / (1 + |xi|^q(x) / n); n = inf gives |xi|^q(x)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = np.asarray(xi_norm, dtype=float)
    if np.any(s < 0):
        raise ValueError("xi_norm must be nonnegative")
    qx = q(np.asarray(x, dtype=float).reshape(-1, q.domain.dimension))
    if qx.size == 1:
        qx = qx[0]
    t = np.power(s, qx)
    out = t if math.isinf(n) else t / (1.0 + t / n)
    return float(out) if np.ndim(out) == 0 else out


def hamiltonian_and_slope(s, qv, n):
    """H_n(s) and dH_n/ds for arrays of gradient norms ``s`` and exponents ``qv``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, np.power(s, qv), 0.0)
        dt = np.where(s > 0, qv * np.power(s, qv - 1.0), np.where(qv == 1.0, 1.0, 0.0))
    if math.isinf(n):
        return t, dt
    den = 1.0 + t / n
    return t / den, dt / (den * den)


def check_vector_inequalities(p_value: float, xi, eta, tol=1e-12) -> ValidationReport:
    """Monotonicity of xi -> |xi|^(p-2) xi in pairing form.

    p >= 2:  pairing >= (1/2)^p |xi - eta|^p.
    p <= 2:  pairing >= (p - 1) |xi - eta|^2 / (|xi| + |eta|)^(2 - p).
    At p = 2 both forms apply and both are checked.  Slacks are relative
    to max(1, bound), since at p = 2 the singular form is an identity and an
    absolute slack would only measure rounding at large |xi|.
    """
    p = float(p_value)
    X = np.atleast_2d(np.asarray(xi, dtype=float))
    Y = np.atleast_2d(np.asarray(eta, dtype=float))
    nx = np.linalg.norm(X, axis=1)
    ny = np.linalg.norm(Y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fx = np.where(nx[:, None] > 0, X * nx[:, None] ** (p - 2.0), 0.0)
        fy = np.where(ny[:, None] > 0, Y * ny[:, None] ** (p - 2.0), 0.0)
    diff = X - Y
    nd = np.linalg.norm(diff, axis=1)
    pairing = np.sum((fx - fy) * diff, axis=1)
    rep = ValidationReport(f"vector inequalities p={p:g}")
    if p >= 2.0:
        bound = 0.5 ** p * nd ** p
        slack = (pairing - bound) / np.maximum(1.0, bound)
        i = int(np.argmin(slack))
        rep.add("degenerate (p >= 2)", slack[i] >= -tol, slack[i], i)
    if 1.0 < p <= 2.0:
        tot = nx + ny
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = np.where(tot > 0, (p - 1.0) * nd ** 2 * tot ** (p - 2.0), 0.0)
        slack = (pairing - bound) / np.maximum(1.0, bound)
        i = int(np.argmin(slack))
        rep.add("singular (1 < p <= 2)", slack[i] >= -tol, slack[i], i)
    if p <= 1.0:
        raise ValueError("vector inequalities need p > 1")
    rep.extras["samples"] = int(len(pairing))
    return rep
