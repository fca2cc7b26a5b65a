"""Discrete truncation-regularization schemes for

    -div(|grad u|^(p-2) grad u) + |grad u|^q = lam g u^eta + f,   u = 0 on the boundary.

Each stage n replaces the gradient term by the bounded H_n, truncates the
data at level n and the unknown inside the source at level k, and solves the
resulting P1 system by damped Newton.  The diagnostics recorded per stage are
the quantities the existence argument controls: gradient modulars and norms,
tail integrals over {u >= k}, the excess-gradient modular, distances between
successive truncates, and the comparison with the gradient-free barrier v_k.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import (Grid, GridFunction, assemble_matrix, dirichlet_project,
                             quadrature, stiffness_matrix)
from .exponents import (NATURAL, SUBNATURAL, AdmissibilityError, ExponentField, ExponentTriple,
                        check_admissibility, data_exponents)
from .modular import GradientField, luxemburg_norm, modular
from .reports import ValidationReport
from .toolkit import check_test_map_property, hamiltonian_and_slope, truncate

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Newton failed; carries the iteration trace and any partial report."""

    def __init__(self, message, trace=None, report=None):
        super().__init__(message)
        self.trace = trace
        self.report = report


@dataclass
class ProblemSpec:
    """One instance of the boundary value problem on a fixed grid.

    ``hamiltonian_weight`` scales the gradient term; 0 switches it off.
    """

    grid: Grid
    exponents: ExponentTriple
    f: GridFunction
    g: GridFunction
    lam: float = 1.0
    hamiltonian_weight: float = 1.0
    admissibility: ValidationReport = field(init=False, repr=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if np.any(self.f.values < 0) or np.any(self.g.values < 0):
            raise ValueError("data f and g must be nonnegative")
        if self.lam > 0 and not np.any(self.g.values > 0):
            raise ValueError("g must not vanish identically when lambda > 0")
        self.admissibility = check_admissibility(self.exponents, self.grid.dimension)
        if not self.admissibility.passed:
            raise AdmissibilityError(
                "exponents not admissible: " + ", ".join(self.admissibility.failures()),
                self.admissibility)

    @property
    def variant(self) -> str:
        return self.exponents.variant

    def summary(self) -> dict:
        t = self.exponents
        return {
            "dimension": self.grid.dimension,
            "resolution": list(self.grid.resolution),
            "nodes": self.grid.num_nodes,
            "p": t.p.source, "q": t.q.source, "eta": t.eta.source,
            "p_range": [t.p.minimum, t.p.maximum],
            "q_range": [t.q.minimum, t.q.maximum],
            "eta_range": [t.eta.minimum, t.eta.maximum],
            "lambda": self.lam, "variant": self.variant,
            "hamiltonian_weight": self.hamiltonian_weight,
        }


@dataclass
class SolverConfig:
    delta: float = 1e-6
    tol: float = 1e-10
    max_iter: int = 80
    min_damping: float = 2.0 ** -30
    lag_hamiltonian: bool = False
    schedule: tuple = (1, 2, 4, 8, 16, 32, 64)
    k_levels: tuple = (1, 2, 4, 8)
    outer_tol: float = 1e-4
    bound_tol: float = 1e-3
    limit_stage: bool = True
    nonneg_tol: float = 1e-8
    barrier_tol: float = 1e-6

    def __post_init__(self):
        self.schedule = tuple(float(n) if math.isinf(n) else int(n) for n in self.schedule)
        self.k_levels = tuple(float(k) for k in self.k_levels)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        for name, seq in (("schedule", self.schedule), ("k_levels", self.k_levels)):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            if any(v <= 0 for v in seq):
                raise ValueError(f"{name} entries must be positive")
        if not self.schedule:
            raise ValueError("schedule must not be empty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = [str(v) if math.isinf(v) else v for v in self.schedule]
        d["k_levels"] = list(self.k_levels)
        return d


@dataclass
class NewtonTrace:
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.steps)


class _Operator:
    """Residual and Jacobian of one discrete problem.

    ``mode="coupled"``: flux + weight*H_n - lam g (T_k w)_+^eta - f.
    ``mode="reference"``: flux - lam g k^(eta+) - f (no gradient term).
    ``delta=0`` gives the unregularized flux |grad w|^(p-2) grad w.
    """

    def __init__(self, spec: ProblemSpec, delta, n=math.inf, k=math.inf,
                 data_level=math.inf, mode="coupled", lag_hamiltonian=False):
        grid = spec.grid
        self.grid = grid
        self.spec = spec
        self.delta = delta
        self.n = n
        self.k = k
        self.mode = mode
        self.lag = lag_hamiltonian
        self.bary = quadrature(grid, "barycenter")
        self.gauss = quadrature(grid, "gauss")
        t = spec.exponents
        self.p_e = self.bary.evaluate(t.p).ravel()
        self.q_e = self.bary.evaluate(t.q).ravel()
        self.eta_q = self.gauss.evaluate(t.eta)
        f = spec.f.values if math.isinf(data_level) else np.minimum(spec.f.values, data_level)
        g = spec.g.values if math.isinf(data_level) else np.minimum(spec.g.values, data_level)
        self.f_q = self.gauss.interpolate(f)
        self.g_q = self.gauss.interpolate(g)
        self.weight = spec.hamiltonian_weight if mode == "coupled" else 0.0
        self.BtB = np.einsum("eki,ekj->eij", grid.grad_ops, grid.grad_ops)
        if mode == "reference":
            if math.isinf(k):
                raise ValueError("reference problem needs a finite k")
            self.ref_source = spec.lam * self.g_q * k ** t.eta.maximum

    def _state(self, w):
        G = self.grid.gradients(w)
        s2 = np.einsum("ei,ei->e", G, G)
        return G, s2

    def _source(self, wq):
        if self.mode == "reference":
            return self.ref_source, np.zeros_like(wq)
        lam = self.spec.lam
        tw = np.clip(wq, 0.0, self.k)
        eta = self.eta_q
        with np.errstate(divide="ignore", invalid="ignore"):
            val = lam * self.g_q * np.where(tw > 0, np.power(tw, eta), np.where(eta == 0, 1.0, 0.0))
            active = (wq > 0) & (wq < self.k)
            der = np.where(active, lam * self.g_q * eta * np.power(np.where(active, tw, 1.0), eta - 1.0), 0.0)
        return val, der

    def flux_coefficient(self, s2):
        return np.power(s2 + self.delta ** 2, 0.5 * (self.p_e - 2.0))

    def residual(self, w) -> np.ndarray:
        # overflow is caught by the finiteness check below, not by numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            R = self._residual(w)
        if not np.all(np.isfinite(R)):
            raise SolverError("non-finite residual (check exponents and data)")
        return R

    def _residual(self, w) -> np.ndarray:
        grid = self.grid
        G, s2 = self._state(w)
        a = self.flux_coefficient(s2)
        local = grid.volumes[:, None] * np.einsum("eij,ei->ej", grid.grad_ops, a[:, None] * G)
        if self.weight:
            H, _ = hamiltonian_and_slope(np.sqrt(s2), self.q_e, self.n)
            local += (self.weight * grid.volumes * H / (grid.dimension + 1))[:, None]
        wq = self.gauss.interpolate(w)
        src, _ = self._source(wq)
        local -= (self.gauss.weights * (src + self.f_q)) @ self.gauss.barycentric
        R = grid.scatter(local)
        R[grid.boundary] = 0.0
        return R

    def jacobian(self, w):
        grid = self.grid
        G, s2 = self._state(w)
        base = s2 + self.delta ** 2
        a = np.power(base, 0.5 * (self.p_e - 2.0))
        b = (self.p_e - 2.0) * np.power(base, 0.5 * (self.p_e - 4.0))
        BtG = np.einsum("eij,ei->ej", grid.grad_ops, G)
        vol = grid.volumes
        local = vol[:, None, None] * (a[:, None, None] * self.BtB
                                      + b[:, None, None] * BtG[:, :, None] * BtG[:, None, :])
        if self.weight and not self.lag:
            s = np.sqrt(s2)
            _, dH = hamiltonian_and_slope(s, self.q_e, self.n)
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.where(s > 0, dH / s, 0.0)
            c = self.weight * vol / (grid.dimension + 1) * c
            local += c[:, None, None] * BtG[:, None, :]
        wq = self.gauss.interpolate(w)
        _, der = self._source(wq)
        if np.any(der):
            L = self.gauss.barycentric
            local -= np.einsum("eq,qi,qj->eij", self.gauss.weights * der, L, L)
        J = assemble_matrix(grid, local)
        I = grid.interior
        return J[I][:, I].tocsc()


def _newton(op: _Operator, w0: np.ndarray, config: SolverConfig, label: str):
    grid = op.grid
    I = grid.interior
    w = w0.copy()
    w[grid.boundary] = 0.0
    trace = NewtonTrace()
    R = op.residual(w)
    r1 = float(np.abs(R).sum())
    trace.residuals.append(r1)
    for _ in range(config.max_iter):
        if r1 <= config.tol:
            trace.converged = True
            break
        J = op.jacobian(w)
        try:
            dw = spla.spsolve(J, -R[I])
        except RuntimeError as exc:   # singular factor
            raise SolverError(f"{label}: linear solve failed ({exc})", trace) from exc
        if not np.all(np.isfinite(dw)):
            raise SolverError(f"{label}: non-finite Newton step", trace)
        merit = float(np.linalg.norm(R))
        alpha = 1.0
        while True:
            trial = w.copy()
            trial[I] += alpha * dw
            try:
                Rt = op.residual(trial)
            except SolverError:
                Rt = None
            if Rt is not None and np.linalg.norm(Rt) < (1.0 - 1e-4 * alpha) * merit:
                break
            alpha *= 0.5
            if alpha < config.min_damping:
                raise SolverError(f"{label}: line search stalled at residual {r1:.3e}", trace)
        w, R = trial, Rt
        r1 = float(np.abs(R).sum())
        trace.residuals.append(r1)
        trace.steps.append(alpha)
    else:
        if r1 > config.tol:
            raise SolverError(f"{label}: no convergence in {config.max_iter} iterations "
                              f"(residual {r1:.3e})", trace)
    trace.converged = True
    return w, trace


def _initial_guess(spec: ProblemSpec, data_level=math.inf) -> np.ndarray:
    """Linear Poisson solve with the zero-order data as load."""
    grid = spec.grid
    gauss = quadrature(grid, "gauss")
    f = spec.f.values if math.isinf(data_level) else np.minimum(spec.f.values, data_level)
    g = spec.g.values if math.isinf(data_level) else np.minimum(spec.g.values, data_level)
    load = grid.scatter((gauss.weights * gauss.interpolate(f + spec.lam * g)) @ gauss.barycentric)
    I = grid.interior
    K = stiffness_matrix(grid)[I][:, I].tocsc()
    w = np.zeros(grid.num_nodes)
    w[I] = spla.spsolve(K, load[I])
    return w


def assemble_residual(w: GridFunction, spec: ProblemSpec, config: SolverConfig,
                      n=math.inf, k=math.inf, data_level=math.inf) -> np.ndarray:
    """Nodal residual of the regularized weak form (boundary entries are 0)."""
    op = _Operator(spec, config.delta, n, k, data_level)
    return op.residual(w.values)


def solve_regularized(spec: ProblemSpec, config: SolverConfig, n=math.inf, k=math.inf,
                      initial: GridFunction | None = None, data_level=math.inf):
    """Damped Newton for the problem with H_n and source truncated at k.

    Returns ``(solution, trace)``; raises :class:`SolverError` when Newton
    does not reach ``config.tol`` in the l1 norm of the residual.
    """
    op = _Operator(spec, config.delta, n, k, data_level, lag_hamiltonian=config.lag_hamiltonian)
    w0 = _initial_guess(spec, data_level) if initial is None else initial.values
    if not np.any(spec.f.values) and not (spec.lam and np.any(spec.g.values)) and initial is None:
        w0 = np.zeros(spec.grid.num_nodes)
    w, trace = _newton(op, w0, config, f"regularized solve (n={n}, k={k})")
    return dirichlet_project(GridFunction(spec.grid, w)), trace


def solve_reference(spec: ProblemSpec, config: SolverConfig, k, data_level=math.inf,
                    initial: GridFunction | None = None) -> GridFunction:
    """Barrier v_k: -div(|grad v|^(p-2) grad v) = lam g k^(eta+) + f."""
    op = _Operator(spec, config.delta, k=k, data_level=data_level, mode="reference")
    w0 = _initial_guess(spec, data_level) if initial is None else initial.values
    w, _ = _newton(op, w0, config, f"reference solve (k={k})")
    return dirichlet_project(GridFunction(spec.grid, w))


def check_comparison(w: GridFunction, v_k: GridFunction, tol=1e-6) -> ValidationReport:
    if w.grid is not v_k.grid:
        raise ValueError("comparison needs functions on the same grid")
    # boundary nodes are pinned to 0 on both sides, so margins are taken inside
    idx = w.grid.interior if w.grid.interior.size else np.arange(w.grid.num_nodes)
    gap = v_k.values[idx] - w.values[idx]
    rep = ValidationReport("comparison")
    i = int(np.argmin(gap))
    rep.add("w <= v_k", gap[i] >= -tol, float(gap[i]), w.grid.nodes[idx[i]].tolist())
    wv = w.values[idx]
    j = int(np.argmin(wv))
    rep.add("w >= 0", wv[j] >= -tol, float(wv[j]), w.grid.nodes[idx[j]].tolist())
    return rep


def _p_flux(G, p_e):
    s = np.linalg.norm(G, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(s > 0, np.power(s, p_e - 2.0), 0.0)
    return c[:, None] * G


def check_discrete_monotonicity(u: GridFunction, v: GridFunction, p) -> float:
    """(L(u) - L(v), u - v) with the unregularized P1 flux."""
    grid = u.grid
    p_e = p(grid.barycenters)
    Gu, Gv = u.gradients(), v.gradients()
    diff = _p_flux(Gu, p_e) - _p_flux(Gv, p_e)
    return float(np.sum(grid.volumes * np.einsum("ei,ei->e", diff, Gu - Gv)))


def weak_solution_residual(u: GridFunction, spec: ProblemSpec, test_functions) -> list:
    """Defects of the weak formulation (no regularization, no truncation) per test function."""
    op = _Operator(spec, delta=0.0)
    grid = spec.grid
    G, s2 = op._state(u.values)
    flux = _p_flux(G, op.p_e)
    H, _ = hamiltonian_and_slope(np.sqrt(s2), op.q_e, math.inf)
    H = spec.hamiltonian_weight * H
    uq = op.gauss.interpolate(np.maximum(u.values, 0.0))
    src, _ = op._source(uq)
    out = []
    for phi in test_functions:
        phi_v = phi.values if isinstance(phi, GridFunction) else np.asarray(phi)
        Gp = grid.gradients(phi_v)
        phi_bar = phi_v[grid.elements].mean(axis=1)
        a = np.sum(grid.volumes * np.einsum("ei,ei->e", flux, Gp))
        b = np.sum(grid.volumes * H * phi_bar)
        c = np.sum(op.gauss.weights * (src + op.f_q) * op.gauss.interpolate(phi_v))
        out.append(float(a + b - c))
    return out


def default_test_functions(grid: Grid, modes: int = 4) -> list:
    """Sine products vanishing on the box boundary, sup norm 1."""
    lo = np.array(grid.domain.lower)
    hi = np.array(grid.domain.upper)
    X = (grid.nodes - lo) / (hi - lo)
    out = []
    if grid.dimension == 1:
        for j in range(1, modes + 1):
            out.append(GridFunction(grid, np.sin(j * np.pi * X[:, 0])))
    else:
        for i in range(1, modes + 1):
            for j in range(1, modes + 1):
                out.append(GridFunction(grid, np.sin(i * np.pi * X[:, 0]) * np.sin(j * np.pi * X[:, 1])))
    return out


# --- outer scheme ----------------------------------------------------------

@dataclass
class StageRecord:
    n: float
    solution: GridFunction
    trace: NewtonTrace
    min_value: float
    grad_modular_p: float
    grad_modular_q: float
    grad_norm_q: float
    tails: dict
    excess_modular: dict
    distances: dict
    comparison: dict | None
    energy_slack: float
    defects: list | None = None

    def to_dict(self) -> dict:
        return {
            "n": "inf" if math.isinf(self.n) else self.n,
            "iterations": self.trace.iterations,
            "residuals": self.trace.residuals,
            "damping": self.trace.steps,
            "min_value": self.min_value,
            "max_value": float(self.solution.values.max()),
            "grad_modular_p": self.grad_modular_p,
            "grad_modular_q": self.grad_modular_q,
            "grad_norm_q": self.grad_norm_q,
            "tails": {str(k): v for k, v in self.tails.items()},
            "excess_modular": {str(k): v for k, v in self.excess_modular.items()},
            "distances": {str(k): v for k, v in self.distances.items()},
            "comparison": self.comparison,
            "energy_slack": self.energy_slack,
            "defects": self.defects,
        }


@dataclass
class SolveReport:
    problem: dict
    config: dict
    stages: list = field(default_factory=list)
    limit: StageRecord | None = None
    verdicts: dict = field(default_factory=dict)
    converged_at: float | None = None
    extras: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def converged(self) -> bool:
        return bool(self.verdicts.get("converged", False))

    @property
    def accepted(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    @property
    def solution(self) -> GridFunction:
        rec = self.limit or self.stages[-1]
        return rec.solution

    def distance_table(self) -> list:
        return [(r.n, k, d) for r in self.stages for k, d in r.distances.items()]

    def to_dict(self) -> dict:
        ca = self.converged_at
        return {
            "problem": self.problem,
            "config": self.config,
            "stages": [r.to_dict() for r in self.stages],
            "limit": self.limit.to_dict() if self.limit else None,
            "verdicts": self.verdicts,
            "converged": self.converged,
            "accepted": self.accepted,
            "converged_at": "inf" if ca is not None and math.isinf(ca) else ca,
            "extras": self.extras,
            "error": self.error,
        }


def _tail(u: GridFunction, q, k):
    """Integral of |grad u|^q over elements whose barycentric value is >= k."""
    grid = u.grid
    ubar = u.values[grid.elements].mean(axis=1)
    s = np.linalg.norm(u.gradients(), axis=1)
    mask = ubar >= k
    return float(np.sum(grid.volumes[mask] * np.power(s[mask], q[mask])))


def _record(spec, config, n, k_source, data_level, w, trace, prev, barrier):
    t = spec.exponents
    grid = spec.grid
    grad = GradientField.of(w)
    q_e = t.q(grid.barycenters)
    rec_tails, rec_excess, rec_dist = {}, {}, {}
    for k in config.k_levels:
        rec_tails[k] = _tail(w, q_e, k)
        rec_excess[k] = modular(GradientField.of(w - truncate(w, k)), t.p)
        if prev is not None:
            diff = truncate(w, k) - truncate(prev, k)
            rec_dist[k] = luxemburg_norm(GradientField.of(diff), t.p)
    comp = None
    if barrier is not None:
        comp = check_comparison(w, barrier, config.barrier_tol)
        comp = {"passed": comp.passed, "barrier_margin": comp["w <= v_k"].slack,
                "min_value": comp["w >= 0"].slack}
    # testing with w itself: the gradient term enters with a sign, so
    # int |grad w|^p <= source terms + |int H w| must hold with room to spare
    op = _Operator(spec, config.delta, n, k_source, data_level)
    G, s2 = op._state(w.values)
    H, _ = hamiltonian_and_slope(np.sqrt(s2), op.q_e, n)
    wbar = w.values[grid.elements].mean(axis=1)
    hw = abs(float(np.sum(grid.volumes * spec.hamiltonian_weight * H * wbar)))
    wq = op.gauss.interpolate(w.values)
    src, _ = op._source(wq)
    rhs = float(np.sum(op.gauss.weights * (src + op.f_q) * wq))
    energy = float(np.sum(grid.volumes * op.flux_coefficient(s2) * s2))
    return StageRecord(
        n=n, solution=w, trace=trace, min_value=float(w.values.min()),
        grad_modular_p=modular(grad, t.p), grad_modular_q=modular(grad, t.q),
        grad_norm_q=luxemburg_norm(grad, t.q), tails=rec_tails, excess_modular=rec_excess,
        distances=rec_dist, comparison=comp, energy_slack=rhs + hw - energy)


def _data_diagnostics(spec: ProblemSpec) -> dict:
    t = spec.exponents
    N = spec.grid.dimension
    out = {"admissibility": spec.admissibility.to_dict()}
    try:
        q0, q1 = data_exponents(t, N)
    except AdmissibilityError as exc:
        out["data_norms"] = None
        out["data_note"] = f"{exc}; every bounded f, g qualifies on this grid"
        return out
    out["q0"] = q0
    out["f_norm_q0"] = luxemburg_norm(spec.f, ExponentField.constant(q0, t.domain))
    out["g_norm_q1"] = luxemburg_norm(spec.g, q1)
    return out


def _run_schedule(spec: ProblemSpec, config: SolverConfig, report: SolveReport):
    prev = None
    initial = None
    for n in config.schedule:
        level = n
        try:
            w, trace = solve_regularized(spec, config, n=n, k=n, initial=initial, data_level=level)
            barrier = solve_reference(spec, config, k=n, data_level=level, initial=w)
        except SolverError as exc:
            report.error = str(exc)
            exc.report = report
            raise
        base = prev if prev is not None else GridFunction(spec.grid, _initial_guess(spec, level)) \
            if spec.f.values.any() or (spec.lam and spec.g.values.any()) else GridFunction.zeros(spec.grid)
        rec = _record(spec, config, n, n, level, w, trace, base, barrier)
        report.stages.append(rec)
        log.info("stage n=%s: %d Newton steps, d=%s", n, trace.iterations,
                 {k: f"{d:.2e}" for k, d in rec.distances.items()})
        prev = w
        initial = w
    if config.limit_stage:
        try:
            w, trace = solve_regularized(spec, config, initial=prev)
        except SolverError as exc:
            report.error = str(exc)
            exc.report = report
            raise
        rec = _record(spec, config, math.inf, math.inf, math.inf, w, trace, prev, None)
        rec.defects = weak_solution_residual(w, spec, default_test_functions(spec.grid))
        report.limit = rec


def _verdicts(report: SolveReport, config: SolverConfig) -> dict:
    stages = report.stages
    last = stages[-1]
    v = {}
    v["distances_below_tol"] = all(d < config.outer_tol for d in last.distances.values())
    later = stages[1:]
    v["distances_decreasing"] = all(
        b.distances[k] <= a.distances[k] * (1 + 1e-9) + 1e-14
        for a, b in zip(later, later[1:]) for k in config.k_levels)
    if len(stages) > 1:
        a, b = stages[-2].grad_norm_q, stages[-1].grad_norm_q
        v["bound_stabilized"] = abs(b - a) <= config.bound_tol * max(abs(a), 1e-300)
    else:
        v["bound_stabilized"] = True
    allrec = stages + ([report.limit] if report.limit else [])
    v["nonnegative"] = all(r.min_value >= -config.nonneg_tol for r in allrec)
    v["below_barrier"] = all(r.comparison["passed"] for r in stages if r.comparison)
    ks = sorted(config.k_levels)
    v["tails_monotone"] = all(r.tails[a] >= r.tails[b] for r in allrec for a, b in zip(ks, ks[1:]))
    v["energy_consistent"] = all(r.energy_slack >= -1e-10 for r in allrec)
    if report.limit is not None:
        v["weak_residual"] = max(abs(d) for d in report.limit.defects) <= 10 * config.tol
    v["converged"] = v["distances_below_tol"] and v["bound_stabilized"]
    return v


def _converged_at(report: SolveReport, config: SolverConfig):
    """First n after which every later iterate stays within outer_tol of its predecessor.

    The first stage's distance is taken against the warm start, which says
    nothing about the scheme, so it only counts for one-stage schedules.
    """
    stages = report.stages
    if len(stages) == 1:
        ok = all(d < config.outer_tol for d in stages[0].distances.values())
        return stages[0].n if ok else None
    for i, rec in enumerate(stages[:-1]):
        if all(d < config.outer_tol for r in stages[i + 1:] for d in r.distances.values()):
            return rec.n
    return None


def _run(spec, config, extras):
    report = SolveReport(problem=spec.summary(), config=config.to_dict(), extras=extras)
    report.extras.update(_data_diagnostics(spec))
    _run_schedule(spec, config, report)
    report.verdicts = _verdicts(report, config)
    report.converged_at = _converged_at(report, config)
    return report


def outer_scheme(spec: ProblemSpec, config: SolverConfig | None = None) -> SolveReport:
    """Stage-n solves with data truncated at n and gradient term H_n.

    After the schedule a final stage with the untruncated, unregularized
    problem is solved from the last iterate; its weak-form defects are the
    acceptance check on the scheme output.
    """
    config = config or SolverConfig()
    if spec.variant != SUBNATURAL:
        raise AdmissibilityError("outer_scheme handles the sub-natural variant; "
                                 "use natural_growth_scheme")
    return _run(spec, config, {})


def natural_growth_scheme(spec: ProblemSpec, config: SolverConfig | None = None) -> SolveReport:
    """Same pipeline with q == p; also records the modified test-map property."""
    config = config or SolverConfig()
    t = spec.exponents
    if spec.variant != NATURAL:
        raise AdmissibilityError("natural_growth_scheme needs the natural variant (q == p)")
    if t.p.minimum < 2.0:
        raise AdmissibilityError(f"natural growth needs p >= 2, got p- = {t.p.minimum:.6g}")
    prop = check_test_map_property(NATURAL, t.p.maximum, np.linspace(-5, 5, 10001))
    return _run(spec, config, {"test_map_property": prop.to_dict()})


def run_scheme(spec: ProblemSpec, config: SolverConfig | None = None) -> SolveReport:
    if spec.variant == NATURAL:
        return natural_growth_scheme(spec, config)
    return outer_scheme(spec, config)
