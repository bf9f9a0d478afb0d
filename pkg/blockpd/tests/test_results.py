import json
import math

import numpy as np
import pandas as pd
import pytest
from bokeh.models import Plot
from numpy.testing import assert_allclose

from blockpd.problem import DualGeometry, compute_constants, problem_example
from blockpd.results import *
from blockpd.results import TRACE_COLUMNS
from blockpd.simulator import SimulationConfig, run


@pytest.fixture(scope="module")
def results():
    p = problem_example()
    geom = DualGeometry.from_problem(p, delta=0.1)
    cfg = SimulationConfig(seed=1, steps=120, p_comm=0.75, snapshot_every=40)
    return run(p, geom, compute_constants(p, geom), cfg)


def record(distances=(1.0, 4.0), bound=5.0):
    return TraceRecord(
        tick=10,
        stamp=(2, 3),
        ops=1,
        T=2,
        K=0,
        distances=distances,
        bound=bound,
        successive=0.5,
        x_hat_dist=1.0,
        discarded_primal=0,
        discarded_dual=1,
        mixed_inputs=0,
    )


def fake_results(successive, seed=0):
    return SimulationResults(
        trace=[record()],
        successive=successive,
        converged=False,
        ticks=len(successive),
        x_final=np.zeros(2),
        mu_final=np.zeros(2),
        config={"seed": seed, "stop_tol": 1e-3, "stop_patience": 1},
    )


def test_trace_record():
    r = record()
    assert r.dist_max == 4.0
    assert r.bound_ok
    assert not record(bound=3.0).bound_ok
    assert record(bound=math.nan).bound_ok
    assert math.isnan(record(distances=()).dist_max)

    row = r.to_row()
    assert row["stamp"] == "2 3"
    assert row["dist_1"] == 4.0


def test_ticks_to_threshold():
    assert ticks_to_threshold([1.0, 0.1, 0.01], 0.05) == 3
    assert ticks_to_threshold([1.0, 0.01, 1.0, 0.01, 0.01], 0.05, patience=2) == 5
    assert ticks_to_threshold([1.0, 1.0], 0.05) is None


def test_dataframe_and_files(results, tmp_path):
    df = results.to_dataframe()
    assert list(df.columns[: len(TRACE_COLUMNS)]) == TRACE_COLUMNS
    assert {"dist_0", "dist_1"} <= set(df.columns)
    assert list(df["tick"]) == [40, 80, 120]

    results.to_csv(tmp_path / "trace.csv")
    loaded = pd.read_csv(tmp_path / "trace.csv")
    assert len(loaded) == len(results)
    assert_allclose(loaded["bound"], df["bound"], rtol=1e-11)

    results.to_json(tmp_path / "summary.json")
    with open(tmp_path / "summary.json") as f:
        summary = json.load(f)
    assert summary["tag"] == "two_paths"
    assert summary["seed"] == 1
    assert summary["ticks"] == results.ticks
    assert summary["mixed_inputs"] == 0
    assert len(summary["x_final"]) == 2


def test_plots(results):
    assert isinstance(results.plot(), Plot)
    ax = results.plot(plot_type="matplotlib")
    assert ax.get_xlabel() == "Tick"
    with pytest.raises(ValueError):
        results.plot(plot_type="plotly")


def test_sweep_results():
    runs = [
        fake_results([1.0, 1e-4, 1e-4]),
        fake_results([1.0, 1.0, 1e-4], seed=1),
        fake_results([1.0, 1.0, 1.0, 1.0]),
    ]
    sweep = SweepResults("commrate", [0.5, 0.5, 1.0], runs)
    assert sweep.seeds == [0, 1, 0]

    df = sweep.to_dataframe()
    assert list(df["ticks_to_threshold"][:2]) == [2, 3]

    agg = sweep.aggregate()
    assert list(agg["label"]) == [0.5, 1.0]
    assert list(agg["runs"]) == [2, 1]
    assert_allclose(agg["median_ticks"], [2.5, 4.0])
    assert isinstance(sweep.plot(), Plot)
