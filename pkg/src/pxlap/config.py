"""JSON run configurations.

A configuration names a mode, the problem (domain, exponents and data as
expression strings or CSV files), solver settings and the output directory.
Errors point at the offending key and its line in the file.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .discretization import GridFunction, build_grid
from .exponents import VARIANTS, Domain, ExponentField, ExponentTriple
from .expressions import Expression, ExpressionError
from .manufactured import CASES
from .modular import ConstantConfig
from .solver import ProblemSpec, SolverConfig
from .suites import SUITES

MODES = ("solve", "verify", "constants", "manufactured")

BENCHMARK = {
    "mode": "solve",
    "seed": 0,
    "threads": 1,
    "problem": {
        "domain": {"lower": [0.0], "upper": [1.0]},
        "resolution": 256,
        "p": "2.2 + 0.2*x",
        "q": "1.7 + 0.2*x",
        "eta": 0.5,
        "f": 1.0,
        "g": 1.0,
        "lambda": 1.0,
        "variant": "subnatural",
        "hamiltonian_weight": 1.0,
    },
    "solver": {"schedule": {"range": [1, 64]}, "k_levels": [1, 2, 4, 8]},
    "constants": {},
    "manufactured": {"cases": ["constant", "variable"], "resolutions": [16, 32, 64, 128],
                     "min_ratio": {"constant": 3.0, "variable": 1.8}},
    "verify": {"suites": None},
    "output": {"directory": "out", "formats": ["json", "csv"]},
}

_TOP = set(BENCHMARK)
_PROBLEM = set(BENCHMARK["problem"])
_SOLVER = {"delta", "tol", "max_iter", "min_damping", "lag_hamiltonian", "schedule", "k_levels",
           "outer_tol", "bound_tol", "limit_stage", "nonneg_tol", "barrier_tol"}
_CONSTANTS = {"starts", "max_iter", "rel_decrease", "window"}
_MANUFACTURED = {"cases", "resolutions", "min_ratio"}
_OUTPUT = {"directory", "formats"}


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        prefix = f"config error ({', '.join(where)}): " if where else "config error: "
        super().__init__(prefix + message)
        self.key = key
        self.line = line


def _locate(text: str | None, key: str):
    """Line of the last path component of a dotted key, searching nested in order."""
    if not text:
        return None
    pos = 0
    for part in key.split("."):
        m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


@dataclass
class DataField:
    """Data given as a constant, an expression string, or nodal values from CSV."""

    key: str
    value: float | None = None
    expression: Expression | None = None
    csv: Path | None = None

    def on(self, grid) -> GridFunction:
        if self.csv is not None:
            try:
                return GridFunction.from_csv(self.csv, grid)
            except ValueError as exc:
                raise ConfigError(str(exc), self.key) from exc
        if self.expression is not None:
            return GridFunction(grid, self.expression(grid.nodes))
        return GridFunction.interpolate(grid, self.value)

    def describe(self):
        if self.csv is not None:
            return {"csv": str(self.csv)}
        return self.expression.source if self.expression is not None else self.value


@dataclass
class RunConfig:
    mode: str
    seed: int
    threads: int
    domain: Domain
    resolution: int
    exponents: dict
    f: DataField
    g: DataField
    lam: float
    variant: str
    hamiltonian_weight: float
    solver: SolverConfig
    constants: ConstantConfig
    manufactured: dict
    verify_suites: list | None
    output: Path
    formats: list
    source: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def exponent_triple(self) -> ExponentTriple:
        p, q, eta = (self.exponents[k] for k in ("p", "q", "eta"))
        return ExponentTriple(p, q, eta, self.variant)

    def build_problem(self) -> ProblemSpec:
        """Grid, exponents and data; inadmissible exponents surface as AdmissibilityError."""
        grid = build_grid(self.domain, self.resolution)
        return ProblemSpec(grid, self.exponent_triple(), self.f.on(grid), self.g.on(grid),
                           self.lam, self.hamiltonian_weight)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "schedule":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _schedule(value, key, text):
    if isinstance(value, list):
        return tuple(math.inf if v in ("inf", float("inf")) else v for v in value)
    if isinstance(value, dict) and len(value) == 1:
        kind, args = next(iter(value.items()))
        if kind == "range" and len(args) == 2:
            return tuple(range(int(args[0]), int(args[1]) + 1))
        if kind == "geometric" and len(args) == 2:
            out, n = [], int(args[0])
            while n <= args[1]:
                out.append(n)
                n *= 2
            return tuple(out)
    raise ConfigError('expected a list, {"range": [a, b]} or {"geometric": [a, b]}',
                      key, _locate(text, key))


def _number(value, key, text, kind=float, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key, _locate(text, key))
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", key, _locate(text, key))
    return kind(value)


def _unknown(section: dict, allowed: set, prefix: str, text):
    for k in section:
        if k not in allowed:
            key = f"{prefix}.{k}" if prefix else k
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                              key, _locate(text, key))


def _exponent(value, domain, name, text) -> ExponentField:
    key = f"problem.{name}"
    try:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return ExponentField.constant(float(value), domain, name)
        if isinstance(value, str):
            return ExponentField.from_expression(value, domain, name)
    except ExpressionError as exc:
        raise ConfigError(str(exc), key, _locate(text, key)) from exc
    raise ConfigError(f"expected a number or expression string, got {value!r}",
                      key, _locate(text, key))


def _data(value, name, base_dir: Path, text) -> DataField:
    key = f"problem.{name}"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return DataField(key, value=float(value))
    if isinstance(value, str):
        try:
            return DataField(key, expression=Expression(value))
        except ExpressionError as exc:
            raise ConfigError(str(exc), key, _locate(text, key)) from exc
    if isinstance(value, dict) and set(value) == {"csv"}:
        path = Path(value["csv"])
        path = path if path.is_absolute() else base_dir / path
        if not path.is_file():
            raise ConfigError(f"CSV file not found: {path}", key, _locate(text, key))
        return DataField(key, csv=path)
    raise ConfigError('expected a number, expression string or {"csv": path}',
                      key, _locate(text, key))


def parse_config(data: dict, text: str | None = None, base_dir: Path | None = None,
                 source: str | None = None) -> RunConfig:
    """Validate a decoded configuration (merged over the benchmark defaults)."""
    base_dir = base_dir or Path.cwd()
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object")
    _unknown(data, _TOP, "", text)
    cfg = _merge(BENCHMARK, data)
    for sect, allowed in (("problem", _PROBLEM), ("solver", _SOLVER), ("constants", _CONSTANTS),
                          ("manufactured", _MANUFACTURED), ("output", _OUTPUT)):
        if not isinstance(cfg[sect], dict):
            raise ConfigError("expected an object", sect, _locate(text, sect))
        _unknown(cfg[sect], allowed, sect, text)

    mode = cfg["mode"]
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}",
                          "mode", _locate(text, "mode"))
    prob = cfg["problem"]
    dom = prob["domain"]
    try:
        domain = Domain(tuple(dom["lower"]), tuple(dom["upper"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain: {exc}", "problem.domain",
                          _locate(text, "problem.domain")) from exc
    variant = prob["variant"]
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}", "problem.variant",
                          _locate(text, "problem.variant"))
    exps = {n: _exponent(prob[n], domain, n, text) for n in ("p", "q", "eta")}

    solver_raw = dict(cfg["solver"])
    if "schedule" in solver_raw:
        solver_raw["schedule"] = _schedule(solver_raw["schedule"], "solver.schedule", text)
    try:
        solver = SolverConfig(**solver_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver", _locate(text, "solver")) from exc
    try:
        constants = ConstantConfig(**cfg["constants"], seed=int(cfg["seed"]),
                                   threads=int(cfg["threads"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "constants", _locate(text, "constants")) from exc

    man = cfg["manufactured"]
    for c in man["cases"]:
        if c not in CASES:
            raise ConfigError(f"unknown case {c!r}", "manufactured.cases",
                              _locate(text, "manufactured.cases"))
    suites = cfg["verify"].get("suites")
    if suites is not None:
        bad = [s for s in suites if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suites {bad}; choose from {sorted(SUITES)}",
                              "verify.suites", _locate(text, "verify.suites"))
    out = Path(cfg["output"]["directory"])
    return RunConfig(
        mode=mode,
        seed=_number(cfg["seed"], "seed", text, int, 0),
        threads=_number(cfg["threads"], "threads", text, int, 1),
        domain=domain,
        resolution=_number(prob["resolution"], "problem.resolution", text, int, 2),
        exponents=exps,
        f=_data(prob["f"], "f", base_dir, text),
        g=_data(prob["g"], "g", base_dir, text),
        lam=_number(prob["lambda"], "problem.lambda", text, float, 0.0),
        variant=variant,
        hamiltonian_weight=_number(prob["hamiltonian_weight"], "problem.hamiltonian_weight",
                                   text, float, 0.0),
        solver=solver,
        constants=constants,
        manufactured=man,
        verify_suites=suites,
        output=out,
        formats=list(cfg["output"]["formats"]),
        source=source,
        raw=cfg,
    )


def load_config(path=None) -> RunConfig:
    """Read a JSON file; with no path the benchmark defaults are returned."""
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    return parse_config(data, text, path.parent.resolve(), str(path))


def problem_summary(cfg: RunConfig) -> dict:
    return {
        "domain": {"lower": list(cfg.domain.lower), "upper": list(cfg.domain.upper)},
        "resolution": cfg.resolution,
        **{n: e.source for n, e in cfg.exponents.items()},
        "f": cfg.f.describe(),
        "g": cfg.g.describe(),
        "lambda": cfg.lam,
        "variant": cfg.variant,
    }

