"""Netflow module.

Seeded generator of network utility maximization benchmarks: paths share
capacitated edges within disjoint groups, each path carries a flow x_i in
[0, 10] with utility W log(1 + x_i), and every edge limits the total flow of
the paths crossing it.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from blockpd.problem import SeparableLogProblem
from blockpd.utils import DomainError

__all__ = ["FlowNetwork", "ExperimentRun", "generate_benchmark", "experiment_sweeps", "SCALES"]

logger = logging.getLogger(__name__)

BOX_UPPER = 10.0
TERMINAL_CAPACITY = 50.0
INTERIOR_CAPACITY = (5.0, 40.0)
DEFAULT_WEIGHT = 30.25
BETA_SWEEP = (0.10, 0.25, 0.75)
COMMRATE_SWEEP = (0.25, 0.5, 0.75, 1.0)

# groups, paths per group, interior edges per group, extra edges per path
SCALES = {
    "full": dict(groups=3, paths_per_group=5, interior_per_group=20, extra_per_path=2),
    "small": dict(groups=1, paths_per_group=3, interior_per_group=4, extra_per_path=1),
}


@dataclass
class FlowNetwork:
    """A grouped path/edge topology.

    Attributes
    ----------
    paths : list of list of int
        Edges traversed by every path.
    edge_roles : list of str
        "source", "target" or "interior" for every edge.
    incidence : numpy.ndarray
        A with A[k, i] = 1 iff path i traverses edge k.
    capacities : numpy.ndarray
        b.
    groups : list of tuple
        (paths, edges) of every constraint-disjoint cluster.
    W : float
        Utility weight.
    seed : int
    scale : str
    """

    paths: list
    edge_roles: list
    incidence: np.ndarray
    capacities: np.ndarray
    groups: list
    W: float = DEFAULT_WEIGHT
    seed: int = 0
    scale: str = "full"
    edge_groups: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.edge_groups is None:
            self.edge_groups = [None] * len(self.edge_roles)
            for g, (_, edges) in enumerate(self.groups):
                for k in edges:
                    self.edge_groups[k] = g

    @property
    def n(self):
        return self.incidence.shape[1]

    @property
    def m(self):
        return self.incidence.shape[0]

    @property
    def beta(self):
        """Diagonal dominance margin of the generated Hessian, W / 11^2."""
        return self.W / (1.0 + BOX_UPPER) ** 2

    def with_beta(self, beta):
        """Same topology with W scaled so that the margin equals beta."""
        return self.with_weight(beta * (1.0 + BOX_UPPER) ** 2)

    def with_weight(self, W):
        return FlowNetwork(
            self.paths,
            self.edge_roles,
            self.incidence,
            self.capacities,
            self.groups,
            W=float(W),
            seed=self.seed,
            scale=self.scale,
            edge_groups=self.edge_groups,
        )

    def group_partitions(self):
        """Primal and dual partitions with one block per group.

        Examples
        --------
        >>> net, _ = generate_benchmark(0, "small")
        >>> net.group_partitions()
        ([[0, 1, 2]], [[0, 1, 2, 3, 4, 5]])
        """
        return [list(p) for p, _ in self.groups], [list(e) for _, e in self.groups]

    def to_problem(self, partition="scalar", capacities=None):
        """Build the optimization problem.

        Parameters
        ----------
        partition : str, optional
            "scalar" (one agent per path and per edge) or "grouped".
        capacities : array_like, optional
            Replaces b.

        Returns
        -------
        SeparableLogProblem
        """
        b = self.capacities if capacities is None else np.asarray(capacities, dtype=float)
        if partition == "scalar":
            primal = [[i] for i in range(self.n)]
            dual = [[k] for k in range(self.m)]
        elif partition == "grouped":
            primal, dual = self.group_partitions()
        else:
            raise DomainError(f"unknown partition {partition!r}")

        return SeparableLogProblem(
            weights=self.W,
            A=self.incidence,
            b=b,
            box_lower=np.zeros(self.n),
            box_upper=np.full(self.n, BOX_UPPER),
            slater_point=np.zeros(self.n),
            f_star_lower=-self.W * self.n * np.log(1.0 + BOX_UPPER),
            primal_partition=primal,
            dual_partition=dual,
            tag=f"netflow-{self.scale}-seed{self.seed}",
        )

    def to_edge_list(self):
        """One row per (edge, path) incidence, plus edge attributes.

        Examples
        --------
        >>> net, _ = generate_benchmark(0, "small")
        >>> list(net.to_edge_list().columns)
        ['edge', 'path', 'group', 'role', 'capacity']
        """
        rows = []
        for k, i in zip(*np.nonzero(self.incidence)):
            rows.append(
                {
                    "edge": int(k),
                    "path": int(i),
                    "group": self.edge_groups[k],
                    "role": self.edge_roles[k],
                    "capacity": float(self.capacities[k]),
                }
            )
        return pd.DataFrame(rows, columns=["edge", "path", "group", "role", "capacity"])

    def summary(self):
        return pd.Series(
            {
                "paths": self.n,
                "edges": self.m,
                "groups": len(self.groups),
                "W": self.W,
                "beta": self.beta,
                "min_capacity": float(self.capacities.min()),
                "seed": self.seed,
            }
        )


def _draw_capacities(rng, roles):
    while True:
        b = np.array(
            [TERMINAL_CAPACITY if r != "interior" else rng.uniform(*INTERIOR_CAPACITY) for r in roles]
        )
        if np.all(b > 0):
            return b
        logger.debug("resampling capacities with a zero entry")


def generate_benchmark(seed=0, scale="full", W=DEFAULT_WEIGHT, **custom):
    """Generate a seeded network flow benchmark.

    Every group has one source edge and one target edge of capacity 50 that
    all its paths cross, and interior edges of capacity drawn uniformly from
    [5, 40]. Interior edges are dealt to the group's paths so each is used at
    least once, then every path picks a few more at random.

    Parameters
    ----------
    seed : int, optional
    scale : str, optional
        "full" (15 paths, 66 edges, 3 groups), "small" (3 paths, 6 edges,
        1 group) or "custom".
    W : float, optional
        Utility weight. The default gives beta = 0.25.
    **custom
        groups, paths_per_group, interior_per_group and extra_per_path for
        the custom scale.

    Returns
    -------
    net : FlowNetwork
    p : SeparableLogProblem
        The problem with scalar blocks.

    Examples
    --------
    >>> net, p = generate_benchmark(seed=0)
    >>> p.n, p.m, len(net.groups)
    (15, 66, 3)
    """
    if scale == "custom":
        missing = set(SCALES["full"]) - set(custom)
        if missing:
            raise DomainError(f"custom scale needs {sorted(missing)}")
        layout = {k: int(custom[k]) for k in SCALES["full"]}
    elif scale in SCALES:
        layout = SCALES[scale]
    else:
        raise DomainError(f"unknown scale {scale!r}")

    rng = np.random.default_rng(seed)
    n_groups, per_group = layout["groups"], layout["paths_per_group"]
    interior, extra = layout["interior_per_group"], layout["extra_per_path"]

    paths, roles, groups = [], [], []
    for g in range(n_groups):
        first_edge = len(roles)
        roles += ["source", "target"] + ["interior"] * interior
        group_paths = list(range(g * per_group, (g + 1) * per_group))
        interior_edges = np.arange(first_edge + 2, first_edge + 2 + interior)

        dealt = [[] for _ in group_paths]
        for pos, k in enumerate(rng.permutation(interior_edges)):
            dealt[pos % per_group].append(int(k))
        for local, own in enumerate(dealt):
            others = np.setdiff1d(interior_edges, own)
            picks = rng.choice(others, size=min(extra, len(others)), replace=False) if len(others) else []
            edges = sorted({first_edge, first_edge + 1, *own, *(int(k) for k in picks)})
            paths.append(edges)
        groups.append((group_paths, list(range(first_edge, first_edge + 2 + interior))))

    A = np.zeros((len(roles), len(paths)))
    for i, edges in enumerate(paths):
        A[edges, i] = 1.0

    net = FlowNetwork(
        paths=paths,
        edge_roles=roles,
        incidence=A,
        capacities=_draw_capacities(rng, roles),
        groups=groups,
        W=float(W),
        seed=seed,
        scale=scale,
    )
    logger.info("generated %s network: %d paths, %d edges (seed=%d)", scale, net.n, net.m, seed)
    return net, net.to_problem("scalar")


@dataclass
class ExperimentRun:
    """One configuration of an experiment sweep."""

    kind: str
    label: object
    problem: SeparableLogProblem
    config: object

    @property
    def name(self):
        return f"{self.kind}-{self.label}-seed{self.config.seed}"


def experiment_sweeps(net, base_cfg, seeds=(0,), kinds=("blocks", "beta", "commrate")):
    """Run configurations of the three benchmark experiments.

    - blocks: scalar against grouped blocks, p_update 0.5, p_comm 0.75;
    - beta: W scaled so that beta is 0.10, 0.25 and 0.75, grouped blocks,
      p_update 1, p_comm 0.75;
    - commrate: p_comm in {0.25, 0.5, 0.75, 1.0} at the network's beta,
      grouped blocks, p_update 1.

    Parameters
    ----------
    net : FlowNetwork
    base_cfg : SimulationConfig
        Stepsizes, budgets and stop rule shared by every run.
    seeds : sequence of int, optional
        Every configuration is repeated once per seed.
    kinds : sequence of str, optional

    Returns
    -------
    dict
        kind -> list of ExperimentRun.

    Examples
    --------
    >>> from blockpd.simulator import SimulationConfig
    >>> net, _ = generate_benchmark(0)
    >>> sweeps = experiment_sweeps(net, SimulationConfig())
    >>> [run.problem.N_p for run in sweeps["blocks"]]
    [15, 3]
    >>> [round(run.problem.weights[0], 2) for run in sweeps["beta"]]
    [12.1, 30.25, 90.75]
    """
    sweeps = {}
    for kind in kinds:
        runs = []
        for seed in seeds:
            if kind == "blocks":
                for label in ("scalar", "grouped"):
                    cfg = base_cfg.replace(seed=seed, p_update=0.5, p_comm=0.75)
                    runs.append(ExperimentRun(kind, label, net.to_problem(label), cfg))
            elif kind == "beta":
                for beta in BETA_SWEEP:
                    cfg = base_cfg.replace(seed=seed, p_update=1.0, p_comm=0.75)
                    runs.append(ExperimentRun(kind, beta, net.with_beta(beta).to_problem("grouped"), cfg))
            elif kind == "commrate":
                for rate in COMMRATE_SWEEP:
                    cfg = base_cfg.replace(seed=seed, p_update=1.0, p_comm=rate)
                    runs.append(ExperimentRun(kind, rate, net.to_problem("grouped"), cfg))
            else:
                raise DomainError(f"unknown sweep kind {kind!r}")
        sweeps[kind] = runs
    return sweeps
