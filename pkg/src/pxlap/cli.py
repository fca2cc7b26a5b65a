"""Command-line front end: ``pxlap {solve,verify,constants,manufactured}``.

Exit status: 0 success, 1 a diagnostic or property check failed,
2 the nonlinear solver failed, 3 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from .config import MODES, ConfigError, RunConfig, load_config, problem_summary
from .discretization import build_grid
from .exponents import AdmissibilityError, check_admissibility, check_log_holder
from .manufactured import convergence_study
from .modular import sobolev_constant, weighted_constant
from .reports import _jsonable
from .solver import SolveReport, SolverError, run_scheme
from .suites import run_suites

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("pxlap")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _jsonable(obj)
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return _clean(obj.item())
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    return obj


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def _write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return path


def _stage_label(n):
    return "inf" if n == float("inf") else str(n)


def emit_plot_data(report: SolveReport, out_dir) -> list:
    """Write distances.csv, tails.csv, residuals.csv and profiles.csv.

    distances: n, k, d(n,k)
    tails:     n, k, tau(n,k), excess-gradient modular
    residuals: n, Newton iteration, l1 residual
    profiles:  node coordinates, then one column u_<n> per stage
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = report.stages + ([report.limit] if report.limit else [])
    dist = [(_stage_label(r.n), k, d) for r in records for k, d in r.distances.items()]
    tails = [(_stage_label(r.n), k, r.tails[k], r.excess_modular[k])
             for r in records for k in r.tails]
    res = [(_stage_label(r.n), i, v) for r in records for i, v in enumerate(r.trace.residuals)]
    paths = [
        _write_rows(out / "distances.csv", ["n", "k", "d"], dist),
        _write_rows(out / "tails.csv", ["n", "k", "tau", "excess_modular"], tails),
        _write_rows(out / "residuals.csv", ["n", "iteration", "residual"], res),
    ]
    if records:
        grid = records[0].solution.grid
        coords = ["x", "y"][: grid.dimension]
        header = coords + [f"u_{_stage_label(r.n)}" for r in records]
        rows = [list(map(float, grid.nodes[i])) + [float(r.solution.values[i]) for r in records]
                for i in range(grid.num_nodes)]
        paths.append(_write_rows(out / "profiles.csv", header, rows))
    return paths


def write_manifest(out_dir: Path, files, meta: dict) -> Path:
    entries = {}
    for f in sorted(set(Path(p) for p in files)):
        entries[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    return write_json(out_dir / "manifest.json", {**meta, "files": entries})


def _run_solve(cfg: RunConfig, out: Path, files: list) -> int:
    spec = cfg.build_problem()
    try:
        report = run_scheme(spec, cfg.solver)
    except SolverError as exc:
        log.error("%s", exc)
        partial = exc.report
        data = partial.to_dict() if partial is not None else {"error": str(exc)}
        data["error"] = str(exc)
        data["trace"] = exc.trace.residuals if exc.trace is not None else None
        files.append(write_json(out / "report.json", data))
        return EXIT_SOLVER
    files.append(write_json(out / "report.json", report.to_dict()))
    if "csv" in cfg.formats:
        report.solution.to_csv(out / "solution.csv", "u")
        files.append(out / "solution.csv")
        files.extend(emit_plot_data(report, out))
    print(f"converged: {report.converged}  converged_at: {report.converged_at}")
    for name, ok in report.verdicts.items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if report.accepted else EXIT_DIAGNOSTIC


def _run_verify(cfg: RunConfig, out: Path, files: list) -> int:
    reports = run_suites(cfg.seed, cfg.verify_suites)
    triple = cfg.exponent_triple()
    reports["admissibility"] = check_admissibility(triple, cfg.domain.dimension)
    for name, e in cfg.exponents.items():
        reports[f"log_holder_{name}"] = check_log_holder(e, seed=cfg.seed)
    rows = []
    for suite, rep in reports.items():
        for c in rep.checks:
            rows.append((suite, c.name, "pass" if c.passed else "FAIL", c.slack, c.required))
    width = max(len(f"{r[0]}: {r[1]}") for r in rows)
    for r in rows:
        flag = r[2] if r[4] else f"{r[2]} (info)"
        print(f"{(r[0] + ': ' + r[1]).ljust(width)}  {flag:12s} slack={r[3]:.3e}")
    files.append(write_json(out / "verify.json", {k: v.to_dict() for k, v in reports.items()}))
    if "csv" in cfg.formats:
        files.append(_write_rows(out / "verify.csv", ["suite", "check", "result", "slack", "required"],
                                 rows))
    ok = all(r.passed for r in reports.values())
    print("all suites pass" if ok else "some suites FAIL")
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def _run_constants(cfg: RunConfig, out: Path, files: list) -> int:
    # the constants need only exponents, grid and g, not an admissible problem
    grid = build_grid(cfg.domain, cfg.resolution)
    p, q, eta = (cfg.exponents[k] for k in ("p", "q", "eta"))
    g = cfg.g.on(grid)
    result = {}
    s = sobolev_constant(p, q, grid, cfg.constants)
    result["sobolev"] = s.to_dict()
    s.minimizer.to_csv(out / "sobolev_minimizer.csv", "v")
    files.append(out / "sobolev_minimizer.csv")
    print(f"S   = {s.value:.10g}  (converged: {s.converged})")
    if eta.minimum > 0 and g.values.any():
        c = weighted_constant(g, eta, q, grid, cfg.constants)
        result["weighted"] = c.to_dict()
        c.minimizer.to_csv(out / "weighted_minimizer.csv", "phi")
        files.append(out / "weighted_minimizer.csv")
        print(f"C(g,eta,q) = {c.value:.10g}  (converged: {c.converged})")
    else:
        result["weighted"] = None
        print("C(g,eta,q) skipped: needs eta- > 0 and g not identically 0")
    files.append(write_json(out / "constants.json", result))
    converged = s.converged and (result["weighted"] is None or result["weighted"]["converged"])
    return EXIT_OK if converged else EXIT_DIAGNOSTIC


def _run_manufactured(cfg: RunConfig, out: Path, files: list) -> int:
    man = cfg.manufactured
    rows, summary, ok = [], {}, True
    for case in man["cases"]:
        table = convergence_study(case, tuple(man["resolutions"]), cfg.solver)
        need = man.get("min_ratio", {}).get(case)
        ratios = [r.ratio for r in table if r.ratio is not None]
        passed = need is None or all(x >= need for x in ratios)
        ok &= passed
        summary[case] = {"min_ratio_required": need, "ratios": ratios, "passed": passed,
                         "errors": [r.error for r in table]}
        print(f"{case}:")
        print(f"  {'cells':>6} {'h':>10} {'max error':>12} {'ratio':>8}")
        for r in table:
            ratio = "" if r.ratio is None else f"{r.ratio:8.3f}"
            print(f"  {r.resolution:6d} {r.h:10.3e} {r.error:12.4e} {ratio:>8}")
            rows.append((case, r.resolution, r.h, r.error, "" if r.ratio is None else r.ratio,
                         r.iterations))
    files.append(write_json(out / "manufactured.json", summary))
    if "csv" in cfg.formats:
        files.append(_write_rows(out / "manufactured.csv",
                                 ["case", "cells", "h", "max_error", "ratio", "newton_iterations"],
                                 rows))
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


RUNNERS = {"solve": _run_solve, "verify": _run_verify, "constants": _run_constants,
           "manufactured": _run_manufactured}


def run(config_path=None, mode=None, out=None, seed=None, threads=None, resolution=None) -> int:
    """Execute one run and return its exit status."""
    try:
        cfg = load_config(config_path)
        if mode is not None:
            if mode not in MODES:
                raise ConfigError(f"unknown mode {mode!r}", "mode")
            cfg.mode = mode
        if seed is not None:
            cfg.seed = cfg.constants.seed = seed
        if threads is not None:
            cfg.threads = cfg.constants.threads = threads
        if resolution is not None:
            if resolution < 2:
                raise ConfigError("resolution must be at least 2", "--resolution")
            cfg.resolution = resolution
        if out is not None:
            cfg.output = Path(out)
        cfg.output.mkdir(parents=True, exist_ok=True)
        files: list = []
        status = RUNNERS[cfg.mode](cfg, cfg.output, files)
    except (ConfigError, AdmissibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"mode": cfg.mode, "seed": cfg.seed, "threads": cfg.threads,
            "config": cfg.source, "problem": problem_summary(cfg), "exit_status": status}
    write_manifest(cfg.output, files, meta)
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="seed for randomized suites and multi-start")
    common.add_argument("--threads", type=int, help="worker threads for multi-start minimization")
    common.add_argument("--resolution", type=int, help="cells per axis")
    common.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    parser = argparse.ArgumentParser(
        prog="pxlap",
        description="Variable-exponent p(x)-Laplacian problems with gradient terms: "
                    "truncation schemes, diagnostics and property suites.")
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {
        "solve": "run the truncation scheme and write report, solution and plot data",
        "verify": "run the randomized inequality suites",
        "constants": "estimate the Sobolev and weighted embedding constants",
        "manufactured": "manufactured-solution convergence table",
    }
    for m in MODES:
        sub.add_parser(m, parents=[common], help=helps[m])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.config, args.mode, args.out, args.seed, args.threads, args.resolution)


if __name__ == "__main__":
    sys.exit(main())
