import csv
import hashlib
import json
from pathlib import Path

import pytest

from pxlap.cli import EXIT_CONFIG, EXIT_DIAGNOSTIC, EXIT_OK, EXIT_SOLVER, emit_plot_data, main, run
from pxlap.config import ConfigError, load_config, parse_config
from pxlap.discretization import GridFunction, build_grid
from pxlap.exponents import Domain, ExponentField, ExponentTriple
from pxlap.solver import ProblemSpec, SolverConfig, outer_scheme

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return path


def small_solve(tmp_path, **solver):
    return {
        "mode": "solve",
        "problem": {"resolution": 32, "p": "2.2 + 0.2*x", "q": "1.7 + 0.2*x", "eta": 0.5,
                    "f": 1.0, "g": 1.0, "lambda": 1.0},
        "solver": {"schedule": {"range": [1, 24]}, **solver},
        "output": {"directory": str(tmp_path / "out")},
    }


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_solve_mode_artifacts(tmp_path):
    cfg = write_cfg(tmp_path, small_solve(tmp_path))
    assert run(cfg) == EXIT_OK
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] is True and report["accepted"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"report.json", "solution.csv", "distances.csv", "tails.csv",
                                      "residuals.csv", "profiles.csv"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["seed"] == 0 and manifest["exit_status"] == 0


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, small_solve(tmp_path))
    run(cfg, out=tmp_path / "a")
    run(cfg, out=tmp_path / "b")
    for name in ("report.json", "manifest.json", "distances.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_tails_monotone_in_output(tmp_path):
    cfg = write_cfg(tmp_path, small_solve(tmp_path))
    run(cfg)
    table = rows(tmp_path / "out" / "tails.csv")
    assert table[0] == ["n", "k", "tau", "excess_modular"]
    by_n = {}
    for n, k, tau, _ in table[1:]:
        by_n.setdefault(n, []).append((float(k), float(tau)))
    for vals in by_n.values():
        taus = [t for _, t in sorted(vals)]
        assert all(b <= a for a, b in zip(taus, taus[1:]))


def _report(k_levels):
    g = build_grid(Domain.unit(1), 16)
    dom = g.domain
    t = ExponentTriple(ExponentField.from_expression("2.2", dom), ExponentField.from_expression("1.7", dom),
                       ExponentField.constant(0.5, dom))
    spec = ProblemSpec(g, t, GridFunction.interpolate(g, 1.0), GridFunction.interpolate(g, 1.0))
    return outer_scheme(spec, SolverConfig(schedule=(1, 2, 4), k_levels=k_levels, limit_stage=False))


def test_emit_plot_data_counts(tmp_path):
    emit_plot_data(_report((1, 2)), tmp_path)
    d = rows(tmp_path / "distances.csv")
    assert d[0] == ["n", "k", "d"]
    for k in ("1.0", "2.0"):
        assert sum(r[1] == k for r in d[1:]) == 3
    prof = rows(tmp_path / "profiles.csv")
    assert prof[0] == ["x", "u_1", "u_2", "u_4"] and len(prof) == 18


def test_emit_plot_data_empty_k_list(tmp_path):
    emit_plot_data(_report(()), tmp_path)
    assert rows(tmp_path / "tails.csv") == [["n", "k", "tau", "excess_modular"]]
    assert rows(tmp_path / "distances.csv") == [["n", "k", "d"]]


def test_malformed_expression_names_key_and_line(tmp_path, capsys):
    data = small_solve(tmp_path)
    data["problem"]["p"] = "2+*x"
    cfg = write_cfg(tmp_path, data)
    assert run(cfg) == EXIT_CONFIG
    err = capsys.readouterr().err
    line = next(i for i, s in enumerate(cfg.read_text().splitlines(), 1) if '"p"' in s)
    assert "problem.p" in err and f"line {line}" in err


def test_config_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "mode": "solve",,\n}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(broken)
    with pytest.raises(ConfigError, match="bogus"):
        parse_config({"problem": {"bogus": 1}})
    with pytest.raises(ConfigError, match="mode"):
        parse_config({"mode": "plot"})
    with pytest.raises(ConfigError, match="csv"):
        parse_config({"problem": {"f": {"csv": "missing.csv"}}}, base_dir=tmp_path)
    with pytest.raises(ConfigError, match="schedule"):
        parse_config({"solver": {"schedule": [4, 2]}})


def test_inadmissible_exponents_exit_config(tmp_path, capsys):
    data = small_solve(tmp_path)
    data["problem"]["q"] = "2.5"
    assert run(write_cfg(tmp_path, data)) == EXIT_CONFIG
    assert "q < p" in capsys.readouterr().err


def test_solver_failure_exit_status(tmp_path):
    data = small_solve(tmp_path, max_iter=1)
    data["problem"]["f"] = 50.0
    assert run(write_cfg(tmp_path, data)) == EXIT_SOLVER
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["error"] and report["trace"]


def test_diagnostic_failure_exit_status(tmp_path):
    data = small_solve(tmp_path)
    data["solver"]["outer_tol"] = 1e-30
    assert run(write_cfg(tmp_path, data)) == EXIT_DIAGNOSTIC


def test_verify_mode(tmp_path):
    assert run(CONFIGS / "verify.json", out=tmp_path) == EXIT_OK
    table = rows(tmp_path / "verify.csv")
    assert table[0] == ["suite", "check", "result", "slack", "required"]
    assert all(r[2] == "pass" for r in table[1:] if r[4] == "True")


def test_manufactured_mode(tmp_path):
    assert main(["manufactured", "--config", str(CONFIGS / "manufactured.json"),
                 "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "manufactured.json").read_text())
    assert summary["constant"]["passed"] and summary["variable"]["passed"]


def test_constants_mode_with_overrides(tmp_path):
    assert main(["constants", "--config", str(CONFIGS / "sobolev_1d.json"), "--out", str(tmp_path),
                 "--resolution", "32", "--seed", "3", "--threads", "2"]) == EXIT_OK
    res = json.loads((tmp_path / "constants.json").read_text())
    assert res["sobolev"]["value"] > 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["threads"] == 2
    assert "sobolev_minimizer.csv" in manifest["files"]


def test_mode_override_and_defaults(tmp_path):
    cfg = load_config(None)
    assert cfg.mode == "solve" and cfg.resolution == 256
    assert cfg.solver.schedule == tuple(range(1, 65))
    assert main(["solve", "--config", str(CONFIGS / "square_2d.json"), "--out", str(tmp_path),
                 "--resolution", "6"]) in (EXIT_OK, EXIT_DIAGNOSTIC)
    prof = rows(tmp_path / "profiles.csv")
    assert prof[0][:2] == ["x", "y"] and len(prof) == 50


def test_bad_resolution_override(tmp_path):
    assert run(CONFIGS / "benchmark.json", out=tmp_path, resolution=1) == EXIT_CONFIG
