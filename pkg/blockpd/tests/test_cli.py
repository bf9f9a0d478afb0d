import json

import pandas as pd
import pytest

from blockpd.cli import *
from blockpd.cli import EXIT_BUDGET, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, OUT_DIR_ENV
from blockpd.problem import problem_example
from blockpd.simulator import SimulationConfig
from blockpd.utils import dump_document


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.json"
    problem_example().save(path)
    return path


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "run.toml"
    SimulationConfig(seed=3, gamma=0.4, p_comm=1.0, snapshot_every=200).save(path)
    return path


def test_solve_converges(problem_file, fast_config, tmp_path):
    out = tmp_path / "out"
    code = main(["solve", "--problem", str(problem_file), "--config", str(fast_config), "--out", str(out)])
    assert code == EXIT_OK

    for name in ("trace.csv", "summary.json", "bounds.json", "manifest.json"):
        assert (out / name).exists()

    with open(out / "summary.json") as f:
        summary = json.load(f)
    assert summary["converged"]
    assert summary["seed"] == 3
    assert summary["mixed_inputs"] == 0

    with open(out / "bounds.json") as f:
        bounds = json.load(f)
    assert bounds["bound_violations"] == 0
    assert bounds["rate_constants"]["gamma"] == 0.4

    trace = pd.read_csv(out / "trace.csv")
    assert trace["tick"].iloc[-1] == summary["ticks"]


def test_solve_budget_exhausted(problem_file, tmp_path):
    out = tmp_path / "out"
    code = main(["solve", "--problem", str(problem_file), "--steps", "5", "--out", str(out)])
    assert code == EXIT_BUDGET
    assert RunManifest.load(out / "manifest.json").exit_code == EXIT_BUDGET


def test_solve_is_reproducible(problem_file, tmp_path):
    for name in ("a", "b"):
        cmd_solve(problem_file, out_dir=tmp_path / name, seed=9, steps=300)
    first = (tmp_path / "a" / "trace.csv").read_bytes()
    second = (tmp_path / "b" / "trace.csv").read_bytes()
    assert first == second

    cmd_solve(problem_file, out_dir=tmp_path / "c", seed=10, steps=300)
    assert (tmp_path / "c" / "trace.csv").read_bytes() != first


def test_manifest_verify(problem_file, tmp_path):
    out = tmp_path / "out"
    manifest = cmd_solve(problem_file, out_dir=out, steps=50)
    loaded = RunManifest.load(out / "manifest.json")
    assert loaded.verify() == []
    assert set(loaded.inputs) == {str(problem_file)}
    assert loaded.outputs[str(out / "trace.csv")]["rows"] == 2
    assert loaded.config == manifest.config

    with open(out / "trace.csv", "a") as f:
        f.write("tampered\n")
    problem_file.write_text(problem_file.read_text() + "\n")
    problems = loaded.verify()
    assert any("trace.csv" in msg for msg in problems)
    assert any("changed" in msg for msg in problems)


def test_out_dir_from_environment(problem_file, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env_out"))
    assert main(["solve", "--problem", str(problem_file), "--steps", "5"]) == EXIT_BUDGET
    assert (tmp_path / "env_out" / "trace.csv").exists()


def test_invalid_inputs(problem_file, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    SimulationConfig(gamma=0.6).save(bad)
    assert main(["solve", "--problem", str(problem_file), "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "gamma" in capsys.readouterr().err

    missing = tmp_path / "missing.json"
    assert main(["solve", "--problem", str(missing), "--out", str(tmp_path)]) == EXIT_INVALID

    broken = tmp_path / "broken.json"
    broken.write_text('{"objective": {"kind": "cubic"}}')
    assert main(["solve", "--problem", str(broken), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "broken.json" in capsys.readouterr().err

    unknown = tmp_path / "unknown.toml"
    unknown.write_text("[simulation]\nspeed = 3\n")
    assert main(["solve", "--problem", str(problem_file), "--config", str(unknown)]) == EXIT_INVALID


@pytest.mark.parametrize(
    "edit, location",
    [
        (lambda data: data["objective"].pop("weights"), "problem.json:objective.weights"),
        (lambda data: data["constraints"].update(A=[1.0, 0.0, 1.0]), "problem.json:constraints.A"),
        (lambda data: data.update(slater_point=[1.0, 1.0, 1.0]), "problem.json"),
    ],
)
def test_malformed_problem_document(tmp_path, capsys, edit, location):
    data = problem_example().to_dict()
    edit(data)
    path = tmp_path / "problem.json"
    dump_document(data, path)

    assert main(["solve", "--problem", str(path), "--out", str(tmp_path / "out")]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert location in err
    assert "Traceback" not in err


def test_bounds(problem_file, capsys):
    assert main(["bounds", "--problem", str(problem_file), "--eps1", "0.01", "--eps2", "1e6"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["check_value"] <= 0.01 + 1e6
    assert report["corollary"]["K_min"] > 0
    assert report["constants"]["gamma_max"] == 0.5


def test_bounds_infeasible(problem_file, capsys):
    code = main(["bounds", "--problem", str(problem_file), "--eps1", "0.01", "--eps2", "1"])
    assert code == EXIT_INFEASIBLE
    assert "frontier" in capsys.readouterr().err

    # no limit on delta
    code = main(
        ["bounds", "--problem", str(problem_file), "--eps1", "0.01", "--eps2", "1", "--delta-max", "0"]
    )
    assert code == EXIT_OK


def test_sweep_small(tmp_path):
    out = tmp_path / "sweep"
    manifest = cmd_sweep("commrate", out_dir=out, scale="small", steps=200, stop_tol=1e-3)
    assert manifest.exit_code in (EXIT_OK, EXIT_BUDGET)
    assert manifest.verify() == []

    aggregate = pd.read_csv(out / "aggregate.csv")
    assert list(aggregate["label"]) == [0.25, 0.5, 0.75, 1.0]
    assert (out / "commrate-0.25-seed0" / "trace.csv").exists()
    assert len(pd.read_csv(out / "edges.csv")) > 0
