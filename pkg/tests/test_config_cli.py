import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from rothe_px import cli
from rothe_px.config import REGISTRY, Problem, load_config, parse_config, registry_entry
from rothe_px.errors import ConfigError
from rothe_px.output import CsvTable, emit_results, format_value

PROBLEMS = Path(__file__).resolve().parents[1] / "src" / "rothe_px" / "problems"

# the command that runs each registry task, and reduced-size overrides
COMMAND = {"parabolic": "parabolic", "stabilize": "stabilize", "torsion": "elliptic",
           "resolvent": "elliptic", "steady": "steady"}


def reduced(problem_id: str) -> dict:
    raw = {"problem": problem_id, "mesh": {"dimension": 1, "cells": 16}}
    task = registry_entry(problem_id)["task"]
    if task in ("parabolic", "stabilize"):
        raw["N"] = 8
    if task == "stabilize":
        # dt Lip(f) < 1 on [-w_mu, w_mu] needs a shorter horizon at N = 8
        raw["T"] = 0.5
    return raw


def write(tmp_path, obj, name="cfg.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def read_csv(path):
    lines = Path(path).read_bytes().decode().split("\n")
    assert lines[-1] == ""
    return [row.split(",") for row in lines[:-1]]


def test_minimal_config_is_valid(tmp_path):
    cfg = load_config(write(tmp_path, {
        "task": "parabolic", "mesh": {"dimension": 1, "cells": 8},
        "exponent": {"kind": "constant", "value": 2.0},
        "initial": {"kind": "sine_product", "amplitude": 1.0}, "T": 0.1, "N": 4,
    }))
    assert cfg["N"] == 4 and cfg.tolerance == 1e-10 and cfg.seed == 0


@pytest.mark.parametrize("raw, message", [
    ({"problem": "heat-benchmark", "N": 0}, "N must be ≥ 1"),
    ({"problem": "heat-benchmark", "foo": 1}, "unknown key 'foo'"),
    ({"problem": "heat-benchmark", "T": "long"}, "T must be a number"),
    ({"problem": "nope"}, "problem must be one of"),
    ({"mesh": {"dimension": 3}}, "mesh.dimension must be one of"),
    ({"mesh": {"dimension": 2}}, "mesh.cells_per_side is required"),
    ({"mesh": {"dimension": 1, "cells": 4}, "exponent": {"kind": "weird"}}, "exponent.kind"),
])
def test_schema_violations_name_the_key(raw, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(raw)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


@pytest.mark.parametrize("problem_id", REGISTRY)
def test_registry_expands_to_bundled_file(problem_id):
    golden = json.loads((PROBLEMS / f"{problem_id}.json").read_text())
    cfg = parse_config({"problem": problem_id})
    assert cfg.settings == golden and cfg.problem == problem_id
    Problem(cfg)


def test_registry_overrides_apply():
    cfg = parse_config({"problem": "reaction-h2", "N": 10, "tolerance": 1e-9})
    assert cfg["N"] == 10 and cfg.tolerance == 1e-9 and cfg["T"] == 1.0


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(3) == "3" and format_value(True) == "1"
    assert float(format_value(np.pi)) == np.pi


def test_header_only_csv(tmp_path):
    emit_results({"empty.csv": CsvTable(["n", "t"], [])}, tmp_path)
    assert (tmp_path / "empty.csv").read_bytes() == b"n,t\n"


def test_parabolic_outputs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["parabolic", "--config", "heat-benchmark", "--out", str(out), "--quiet"]) == 0
    rows = read_csv(out / "timeseries.csv")
    assert rows[0] == ["n", "t", "linf", "l2", "modular_gradient", "step_rate", "energy"]
    assert len(rows) - 1 == 32 + 1
    assert b"\r" not in (out / "timeseries.csv").read_bytes()
    meta = json.loads((out / "run.json").read_text())
    assert meta["config"]["N"] == 32 and meta["checks"]["energy_inequality"]["ok"]
    assert set(meta["versions"]) >= {"numpy", "scipy", "python"}
    assert "run" in meta["wall_times"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, {"problem": "variable-p-source", "N": 6, "snapshot_stride": 3})
    trees = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert cli.main(["parabolic", "--config", cfg, "--out", str(out), "--quiet"]) == 0
        trees.append(out)
    names = sorted(p.name for p in trees[0].iterdir())
    assert names == sorted(p.name for p in trees[1].iterdir())
    assert {"snapshot_0.csv", "snapshot_3.csv", "snapshot_6.csv"} <= set(names)
    for name in names:
        a, b = (t / name for t in trees)
        if name == "run.json":
            ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
            ja.pop("wall_times"), jb.pop("wall_times")
            assert ja == jb
        else:
            assert a.read_bytes() == b.read_bytes()


def test_elliptic_and_steady(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["elliptic", "--config", "torsion-family", "--out", str(out), "--quiet"]) == 0
    rows = read_csv(out / "torsion.csv")
    assert [float(r[0]) for r in rows[1:]] == [1.0, 10.0, 100.0]
    assert json.loads((out / "report.json").read_text())["converged"]
    cfg = write(tmp_path, {"task": "resolvent", "mesh": {"dimension": 2, "cells_per_side": 4},
                           "exponent": {"kind": "constant", "value": 2.5}, "lambda": 0.5,
                           "rhs": {"kind": "constant", "value": 1.0}})
    out = tmp_path / "r"
    assert cli.main(["elliptic", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert read_csv(out / "solution.csv")[0] == ["vertex_id", "x", "y", "value"]
    out = tmp_path / "s"
    assert cli.main(["steady", "--config", "stabilize-monotone", "--out", str(out), "--quiet"]) == 0
    assert len(read_csv(out / "solution.csv")) == 34


def test_barrier_and_cauchy_commands(tmp_path):
    out = tmp_path / "b"
    args = ["barrier", "--growth", "quadratic", "--kappa", "1", "--T", "2", "--dt", "1e-3", "--out", str(out), "--quiet"]
    assert cli.main(args) == 0
    meta = json.loads((out / "run.json").read_text())
    assert 0.99 < meta["t_max_estimate"] < 1.01
    out = tmp_path / "c"
    cfg = write(tmp_path, {"problem": "heat-benchmark", "N": 4, "mesh": {"dimension": 1, "cells": 16}})
    assert cli.main(["cauchy", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert len(read_csv(out / "cauchy.csv")) == 3


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["parabolic", "--config", write(tmp_path, {"N": 0}), "--quiet"]) == 2
    assert "N must be ≥ 1" in capsys.readouterr().err
    assert cli.main(["parabolic", "--quiet"]) == 2
    assert cli.main(["barrier", "--growth", "one", "--kappa", "1", "--T", "1", "--dt", "0",
                     "--out", str(tmp_path / "b"), "--quiet"]) == 2
    # a single Newton iteration cannot converge: solver failure
    cfg = write(tmp_path, {"problem": "variable-p-source", "N": 4, "max_iterations": 1, "task": "resolvent",
                           "lambda": 1.0, "rhs": {"kind": "constant", "value": 1.0}})
    assert cli.main(["elliptic", "--config", cfg, "--out", str(tmp_path / "e"), "--quiet"]) == 3


def test_verify_command(tmp_path):
    assert cli.main(["verify", "norms", "--out", str(tmp_path), "--quiet"]) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["passed"] and report["selector"] == "norms"
    assert all(p["passed"] for p in report["properties"])
    assert cli.main(["verify", "norms", "--expect-fail", "--out", str(tmp_path / "f"), "--quiet"]) == 1


def test_console_script_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rothe_px.cli", "verify", "simon", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "PASS" in proc.stdout


def test_schema_totality_reduced(tmp_path):
    start = time.perf_counter()
    for problem_id in REGISTRY:
        command = COMMAND[registry_entry(problem_id)["task"]]
        cfg = write(tmp_path, reduced(problem_id), f"{problem_id}.json")
        code = cli.main([command, "--config", cfg, "--out", str(tmp_path / problem_id), "--quiet"])
        assert code == 0, problem_id
    assert time.perf_counter() - start < 60.0
