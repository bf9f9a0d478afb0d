"""Command line interface.

    blockpd solve  --problem P.json [--config C.toml] [--out DIR]
    blockpd sweep  --kind {blocks,beta,commrate} [--seed N] [--out DIR]
    blockpd bounds --problem P.json --eps1 X --eps2 Y

Exit codes: 0 success, 1 invalid input, 2 tick budget exhausted before
convergence, 3 error tolerance below the achievable frontier.
"""
import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

import blockpd
from blockpd.netflow import experiment_sweeps, generate_benchmark
from blockpd.problem import DualGeometry, ProblemSpec, compute_constants
from blockpd.reference import (
    corollary_parameters,
    rate_constants,
    regularization_error_bounds,
)
from blockpd.results import SweepResults
from blockpd.simulator import SimulationConfig, run
from blockpd.utils import (
    BlockPDError,
    InfeasibleToleranceError,
    SchemaError,
    dump_document,
    file_sha256,
    load_document,
)

__all__ = ["RunManifest", "cmd_solve", "cmd_sweep", "cmd_bounds", "build_parser", "main"]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BUDGET = 2
EXIT_INFEASIBLE = 3

OUT_DIR_ENV = "BLOCKPD_OUT_DIR"
DEFAULT_OUT_DIR = "blockpd_out"


def _count_rows(path):
    with open(path, "rb") as f:
        return sum(1 for _ in f)


@dataclass
class RunManifest:
    """Record of a CLI invocation and of the files it wrote.

    Attributes
    ----------
    command : str
    config : dict
        Echo of the configuration used.
    inputs : dict
        path -> SHA-256 of every input file.
    outputs : dict
        path -> {"sha256", "bytes", "rows"} of every output file.
    wall_time : float
        Seconds.
    version : str
        blockpd version.
    exit_code : int
    """

    command: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = blockpd.__version__
    exit_code: int = EXIT_OK

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def add_output(self, path):
        path = Path(path)
        self.outputs[str(path)] = {
            "sha256": file_sha256(path),
            "bytes": path.stat().st_size,
            "rows": _count_rows(path),
        }

    def verify(self):
        """Re-read every recorded file.

        Returns
        -------
        list of str
            Problems found; empty when everything matches.
        """
        problems = []
        for path, digest in self.inputs.items():
            if not Path(path).exists():
                problems.append(f"input {path} is missing")
            elif file_sha256(path) != digest:
                problems.append(f"input {path} changed")
        for path, record in self.outputs.items():
            p = Path(path)
            if not p.exists():
                problems.append(f"output {path} is missing")
                continue
            if p.stat().st_size != record["bytes"] or _count_rows(p) != record["rows"]:
                problems.append(f"output {path} has a different size")
            elif file_sha256(p) != record["sha256"]:
                problems.append(f"output {path} hash mismatch")
        return problems

    def save(self, file_name):
        dump_document(asdict(self), file_name)

    @classmethod
    def load(cls, file_name):
        data = load_document(file_name)
        try:
            return cls(**data)
        except TypeError as err:
            raise SchemaError(str(err), location=str(file_name))


def _out_dir(out):
    out = Path(out or os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bounds_report(p, geom, consts, cfg, res=None):
    rc = rate_constants(p, geom, consts, cfg.gamma, cfg.rho) if p.m else None
    gap, violations = regularization_error_bounds(p, geom, consts)
    report = {
        "constants": consts.to_dict(),
        "B": geom.B,
        "delta": geom.delta,
        "rate_constants": rc.to_dict() if rc is not None else None,
        "solution_gap_bound": gap,
        "constraint_violation_bounds": violations,
    }
    if res is not None and res.trace:
        final = res.final
        report["final_bound"] = None if np.isnan(final.bound) else final.bound
        report["final_max_distance"] = None if not final.distances else final.dist_max
        report["bound_violations"] = res.bound_violations
    return report


def _write_run(res, out, manifest):
    trace = out / "trace.csv"
    summary = out / "summary.json"
    res.to_csv(trace)
    res.to_json(summary)
    manifest.add_output(trace)
    manifest.add_output(summary)


def cmd_solve(problem_file, config_file=None, out_dir=None, seed=None, steps=None, workers=None):
    """Run the asynchronous algorithm on a problem document.

    Writes trace.csv, summary.json, bounds.json and manifest.json to the
    output directory.

    Returns
    -------
    RunManifest
        Its exit_code is 0 on convergence and 2 when the tick budget ran out.
    """
    start = time.perf_counter()
    p = ProblemSpec.load(problem_file)
    cfg = SimulationConfig() if config_file is None else SimulationConfig.load(config_file)
    overrides = {k: v for k, v in dict(seed=seed, steps=steps, workers=workers).items() if v is not None}
    if overrides:
        cfg = cfg.replace(**overrides)

    geom = DualGeometry.from_problem(p, cfg.delta)
    consts = compute_constants(p, geom)
    cfg.validate(geom, consts)

    out = _out_dir(out_dir)
    manifest = RunManifest(command="solve", config=cfg.to_dict())
    manifest.add_input(problem_file)
    if config_file is not None:
        manifest.add_input(config_file)

    res = run(p, geom, consts, cfg)
    _write_run(res, out, manifest)
    bounds = out / "bounds.json"
    dump_document(_bounds_report(p, geom, consts, cfg, res), bounds)
    manifest.add_output(bounds)

    manifest.exit_code = EXIT_OK if res.converged else EXIT_BUDGET
    manifest.wall_time = time.perf_counter() - start
    manifest.save(out / "manifest.json")
    logger.info("solve finished in %.2f s with exit code %d", manifest.wall_time, manifest.exit_code)
    return manifest


def _execute_job(job, out):
    p = job.problem
    geom = DualGeometry.from_problem(p, job.config.delta)
    consts = compute_constants(p, geom)
    res = run(p, geom, consts, job.config)

    sub = out / job.name
    sub.mkdir(parents=True, exist_ok=True)
    p.save(sub / "problem.json")
    job.config.save(sub / "config.toml")
    res.to_csv(sub / "trace.csv")
    res.to_json(sub / "summary.json")
    return res


def cmd_sweep(kind, seed=0, out_dir=None, scale="full", seeds=1, steps=None, stop_tol=None, jobs=1):
    """Run one of the benchmark experiments.

    Every configuration gets its own sub-directory; aggregate.csv holds the
    median ticks-to-threshold per configuration.

    Returns
    -------
    RunManifest
    """
    start = time.perf_counter()
    base = SimulationConfig(seed=seed)
    overrides = {k: v for k, v in dict(steps=steps, stop_tol=stop_tol).items() if v is not None}
    if overrides:
        base = base.replace(**overrides)

    net, _ = generate_benchmark(seed, scale)
    planned = experiment_sweeps(net, base, seeds=range(seed, seed + seeds), kinds=(kind,))[kind]

    out = _out_dir(out_dir)
    manifest = RunManifest(command=f"sweep {kind}", config={**base.to_dict(), "scale": scale, "seeds": seeds})
    net.to_edge_list().to_csv(out / "edges.csv", index=False)
    manifest.add_output(out / "edges.csv")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_execute_job, planned, [out] * len(planned)))
    else:
        results = [_execute_job(job, out) for job in planned]

    for job in planned:
        for name in ("problem.json", "config.toml", "trace.csv", "summary.json"):
            manifest.add_output(out / job.name / name)

    sweep = SweepResults(kind, [s.label for s in planned], results, [s.config.seed for s in planned])
    sweep.to_csv(out / "aggregate.csv")
    manifest.add_output(out / "aggregate.csv")

    manifest.exit_code = EXIT_OK if all(r.converged for r in results) else EXIT_BUDGET
    manifest.wall_time = time.perf_counter() - start
    manifest.save(out / "manifest.json")
    return manifest


def cmd_bounds(problem_file, eps1, eps2, delta=0.1, gamma=None, delta_max=10.0):
    """Evaluate the rate constants and the parameters meeting eps1 + eps2.

    Returns
    -------
    dict
        The report printed by the ``bounds`` command.

    Raises
    ------
    InfeasibleToleranceError
        When eps2 is below the asynchrony penalty reachable with
        delta <= delta_max.
    """
    p = ProblemSpec.load(problem_file)
    geom = DualGeometry.from_problem(p, delta)
    consts = compute_constants(p, geom)
    gamma = 0.5 * consts.gamma_max if gamma is None else gamma
    cfg = SimulationConfig(gamma=gamma, delta=delta)
    cfg.validate(geom, consts)

    report = _bounds_report(p, geom, consts, cfg)
    params = corollary_parameters(p, geom, consts, eps1, eps2, gamma=gamma, delta_max=delta_max)
    report["corollary"] = params.to_dict()
    report["check_value"] = params.check_value
    report["eps1"], report["eps2"] = eps1, eps2
    return report


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockpd",
        description="Totally asynchronous block primal-dual optimization.",
        epilog=f"The default output directory is taken from ${OUT_DIR_ENV}, then ./{DEFAULT_OUT_DIR}.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="count", default=0, help="less logging (repeatable)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {blockpd.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="simulate the asynchronous algorithm on a problem file")
    solve.add_argument("--problem", required=True, type=Path, help="problem document (JSON or TOML)")
    solve.add_argument("--config", type=Path, help="TOML file with a [simulation] table")
    solve.add_argument("--out", type=Path, help="output directory")
    solve.add_argument("--seed", type=int, help="override the configured seed")
    solve.add_argument("--steps", type=int, help="override the tick budget")
    solve.add_argument("--workers", type=int, help="threads for primal computations")

    sweep = sub.add_parser("sweep", help="run a benchmark experiment")
    sweep.add_argument("--kind", required=True, choices=["blocks", "beta", "commrate"])
    sweep.add_argument("--seed", type=int, default=0, help="network seed and first run seed")
    sweep.add_argument("--seeds", type=int, default=1, help="runs per configuration")
    sweep.add_argument("--scale", choices=["full", "small"], default="full")
    sweep.add_argument("--steps", type=int, help="tick budget per run")
    sweep.add_argument("--stop-tol", type=float, help="successive-iterate threshold")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel processes")
    sweep.add_argument("--out", type=Path, help="output directory")

    bounds = sub.add_parser("bounds", help="evaluate convergence constants and error budgets")
    bounds.add_argument("--problem", required=True, type=Path)
    bounds.add_argument("--eps1", required=True, type=float)
    bounds.add_argument("--eps2", required=True, type=float)
    bounds.add_argument("--delta", type=float, default=0.1)
    bounds.add_argument("--gamma", type=float, help="primal stepsize, gamma_max / 2 by default")
    bounds.add_argument(
        "--delta-max", type=float, default=10.0, help="upper end of the delta search (0 for no limit)"
    )
    return parser


def _configure_logging(verbose, quiet):
    level = logging.WARNING - 10 * verbose + 10 * quiet
    logging.basicConfig(level=max(logging.DEBUG, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    try:
        if args.command == "solve":
            manifest = cmd_solve(args.problem, args.config, args.out, args.seed, args.steps, args.workers)
            return manifest.exit_code
        if args.command == "sweep":
            manifest = cmd_sweep(
                args.kind, args.seed, args.out, args.scale, args.seeds, args.steps, args.stop_tol, args.jobs
            )
            return manifest.exit_code
        if args.command == "bounds":
            report = cmd_bounds(
                args.problem, args.eps1, args.eps2, args.delta, args.gamma, args.delta_max or None
            )
            dump_document(report, sys.stdout)
            return EXIT_OK
    except InfeasibleToleranceError as err:
        print(f"error: {err} (frontier={err.frontier:.6g})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BlockPDError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_INVALID
