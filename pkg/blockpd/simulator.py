"""Simulator module.

A seeded discrete-event engine driving the agents of :mod:`blockpd.agents`
under total asynchrony. Every tick is split into phases:

1. deliver every message that is due,
2. primal agents drawn by the schedule compute (Step 2),
3. every channel carrying a new block transmits it with probability p_comm,
   after a geometric extra delay (Steps 3 and 4),
4. deliver every message that is due,
5. dual agents holding fresh blocks from every constrained primal agent
   update and broadcast (Steps 6 and 7).

A zero extra delay therefore delivers a primal block in the same tick and a
dual block at the start of the next one. An omniscient observer keeps the
counters ops(k, t), T(t) and K(t) that enter the convergence bound.
"""
import heapq
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from blockpd.agents import (
    ADOPTED,
    DUAL_TO_PRIMAL,
    PRIMAL_TO_DUAL,
    PRIMAL_TO_PRIMAL,
    DualStamp,
    Message,
    build_agents,
    dual_compute,
    dual_receive,
    primal_compute,
    primal_receive,
    primal_step,
)
from blockpd.reference import (
    dual_block_bound,
    fixed_mu_minimizer,
    penalty_solve,
    rate_constants,
    theorem_bound,
)
from blockpd.results import SimulationResults, TraceRecord
from blockpd.utils import (
    DomainError,
    ProtocolViolationError,
    SchemaError,
    StepsizeError,
    dump_document,
    load_document,
)

__all__ = [
    "SimulationConfig",
    "RandomSchedule",
    "ScriptedSchedule",
    "Event",
    "ObserverState",
    "Simulation",
    "OPS_HISTORY_LIMIT",
    "observer_on_event",
    "run",
    "reference_saddle",
    "partition_presets",
    "apply_preset",
]

logger = logging.getLogger(__name__)

OPS_HISTORY_LIMIT = 10_000


@dataclass
class SimulationConfig:
    """Parameters of a simulated run.

    Attributes
    ----------
    seed : int
        Seed of the schedule's random generator.
    steps : int
        Tick budget.
    p_update : float
        Per-tick activation probability of every primal agent.
    p_comm : float
        Per-tick transmission probability of every channel.
    delay : float
        Parameter of the geometric extra delay, in [0, 1). Zero delivers at
        the next delivery phase.
    gamma, rho, delta : float
        Primal stepsize, dual stepsize and regularization weight. rho
        defaults to delta / (delta^2 + 1).
    stop_tol : float
        Threshold on ||x(k) - x(k-1)||.
    stop_patience : int
        Number of consecutive computing ticks below stop_tol that end a run.
    snapshot_every : int
        Trace cadence in ticks.
    workers : int
        Threads evaluating the primal computations of a tick.
    x0, mu0 : list, optional
        Initial point; box midpoint and zero by default.

    Examples
    --------
    >>> cfg = SimulationConfig(delta=0.1)
    >>> round(cfg.rho, 4)
    0.099
    """

    seed: int = 0
    steps: int = 20_000
    p_update: float = 1.0
    p_comm: float = 0.75
    delay: float = 0.0
    gamma: float = 0.01
    delta: float = 0.1
    rho: float = None
    stop_tol: float = 1e-6
    stop_patience: int = 10
    snapshot_every: int = 100
    workers: int = 1
    x0: list = None
    mu0: list = None

    def __post_init__(self):
        if self.rho is None:
            self.rho = self.delta / (self.delta ** 2 + 1)

    def validate(self, geom=None, consts=None):
        """Check every parameter against its admissible range.

        Raises
        ------
        DomainError
            For probabilities, delay, counts or a delta that differs from the
            geometry's.
        StepsizeError
            For gamma or rho outside their ranges.
        """
        for name in ("p_update", "p_comm"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value}")
        if not 0 <= self.delay < 1:
            raise DomainError(f"delay must lie in [0, 1), got {self.delay}")
        for name in ("steps", "stop_patience", "snapshot_every", "workers"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be at least 1")
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if geom is not None and not np.isclose(geom.delta, self.delta, rtol=1e-12, atol=0):
            raise DomainError(f"config delta={self.delta} differs from geometry delta={geom.delta}")

        if not self.gamma > 0:
            raise StepsizeError(f"gamma must be positive, got {self.gamma}")
        if consts is not None and not self.gamma < consts.gamma_max:
            raise StepsizeError(
                f"gamma={self.gamma:.6g} violates gamma < 1 / max_i max_x max_mu sum_j |H_ij| "
                f"= {consts.gamma_max:.6g}"
            )
        upper = 2 * self.delta / (self.delta ** 2 + 2)
        if not 0 < self.rho < upper:
            raise StepsizeError(
                f"rho={self.rho:.6g} violates 0 < rho < 2 delta / (delta^2 + 2) = {upper:.6g}"
            )

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data, source="config"):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise SchemaError(f"unknown keys {unknown}", location=f"{source}:simulation")
        kwargs = {}
        for key, value in data.items():
            default = known[key].default
            try:
                if key in ("x0", "mu0"):
                    kwargs[key] = [float(v) for v in value]
                elif isinstance(default, int) and not isinstance(default, bool):
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
            except (TypeError, ValueError):
                raise SchemaError(f"invalid value {value!r}", location=f"{source}:simulation.{key}")
        return cls(**kwargs)

    def save(self, file_name):
        """Save the configuration under a ``[simulation]`` table.

        Examples
        --------
        >>> import tempfile, os
        >>> path = os.path.join(tempfile.mkdtemp(), "run.toml")
        >>> SimulationConfig(seed=7).save(path)
        >>> SimulationConfig.load(path).seed
        7
        """
        dump_document({"simulation": self.to_dict()}, file_name)

    @classmethod
    def load(cls, file_name):
        data = load_document(file_name)
        if "simulation" not in data:
            raise SchemaError("missing [simulation] table", location=str(file_name))
        return cls.from_dict(data["simulation"], source=str(file_name))

    def replace(self, **changes):
        if "delta" in changes and "rho" not in changes:
            changes["rho"] = None
        new = replace(self, **changes)
        if new.rho is None:
            new.rho = new.delta / (new.delta ** 2 + 1)
        return new


class RandomSchedule:
    """Bernoulli activations and transmissions with geometric extra delays.

    Every draw comes from one ``numpy.random.default_rng(seed)`` generator in
    a fixed order, so a seed determines the whole run.
    """

    freeze_duals = False

    def __init__(self, cfg):
        self.rng = np.random.default_rng(cfg.seed)
        self.p_update = cfg.p_update
        self.p_comm = cfg.p_comm
        self.delay = cfg.delay

    def activations(self, tick, N_p):
        if self.p_update >= 1:
            return np.ones(N_p, dtype=bool)
        return self.rng.random(N_p) < self.p_update

    def transmits(self, tick, channel):
        if self.p_comm >= 1:
            return True
        return bool(self.rng.random() < self.p_comm)

    def extra_delay(self, tick, channel):
        if self.delay == 0:
            return 0
        return int(self.rng.geometric(1.0 - self.delay)) - 1

    def allow_dual_update(self, tick, c):
        return not self.freeze_duals


class ScriptedSchedule:
    """A schedule given by callables, for tests.

    Parameters
    ----------
    active : callable, optional
        (tick, i) -> bool. Every agent is active by default.
    transmit : callable, optional
        (tick, channel) -> bool. Every channel transmits by default.
    delay : callable, optional
        (tick, channel) -> int extra ticks. Zero by default.
    freeze_duals : bool, optional
        Never let dual agents update.
    """

    def __init__(self, active=None, transmit=None, delay=None, freeze_duals=False):
        self._active = active or (lambda tick, i: True)
        self._transmit = transmit or (lambda tick, channel: True)
        self._delay = delay or (lambda tick, channel: 0)
        self.freeze_duals = freeze_duals

    def activations(self, tick, N_p):
        return np.array([bool(self._active(tick, i)) for i in range(N_p)], dtype=bool)

    def transmits(self, tick, channel):
        return bool(self._transmit(tick, channel))

    def extra_delay(self, tick, channel):
        return int(self._delay(tick, channel))

    def allow_dual_update(self, tick, c):
        return not self.freeze_duals


@dataclass(frozen=True)
class Event:
    """Something the observer must know about.

    kind is one of "compute", "adopt_primal", "adopt_dual", "dual_update".
    """

    kind: str
    tick: int
    seq: int
    agent: int
    compute_id: tuple = None
    stamp: DualStamp = None
    sender: int = None
    t_c: int = None
    used: tuple = ()


@dataclass
class ObserverState:
    """Global view of the asynchrony counters.

    Attributes
    ----------
    ops_current : int
        ops(k, t) for the live dual iterate.
    ops_history : collections.deque
        (tick, ops) after every change, the latest ``history_limit`` only.
    T : int
        min_c t_c.
    K : int or None
        Running minimum of the ops values reached by the primal blocks used
        in dual updates; None before the first dual update.
    kappa_records : list
        (tick, c, t_c, ops value) for every dual update.
    constrained : list of set, optional
        Primal agents used by every dual agent's updates. When given, the ops
        value of a primal computation is forgotten once no dual agent can use
        it any more.
    """

    N_p: int
    N_d: int
    consumers: list
    constrained: list = None
    history_limit: int = OPS_HISTORY_LIMIT
    ops_current: int = 0
    ops_history: deque = field(default_factory=deque)
    T: int = 0
    K: int = None
    t: list = None
    kappa_records: list = field(default_factory=list)
    round_computed: dict = field(default_factory=dict)
    round_delivered: dict = field(default_factory=dict)
    compute_ops: dict = field(default_factory=dict)
    used_floor: dict = field(default_factory=dict)
    increments: int = 0
    resets: int = 0
    last_tick: int = -1
    last_seq: int = -1

    def __post_init__(self):
        if self.t is None:
            self.t = [0] * self.N_d
        self.ops_history = deque(self.ops_history, maxlen=self.history_limit)

    @property
    def K_value(self):
        """K for the bound: zero until a dual update has been realized."""
        return 0 if self.K is None else self.K

    @property
    def live_stamp(self):
        return DualStamp(tuple(self.t), frozenset(range(self.N_d)))

    def _clear_round(self):
        self.round_computed = {}
        self.round_delivered = {i: set() for i in range(self.N_p)}

    def _round_complete(self):
        if len(self.round_computed) < self.N_p:
            return False
        return all(self.consumers[i] <= self.round_delivered.get(i, set()) for i in range(self.N_p))

    def _prune(self):
        # a dual agent never uses a block older than the last one it used
        if self.constrained is None:
            return
        floors = {}
        for i in range(self.N_p):
            duals = [c for c in range(self.N_d) if i in self.constrained[c]]
            if all((i, c) in self.used_floor for c in duals):
                floors[i] = min((self.used_floor[i, c] for c in duals), default=float("inf"))
        self.compute_ops = {
            cid: ops
            for cid, ops in self.compute_ops.items()
            if cid[0] not in floors or cid[1] >= floors[cid[0]]
        }


def observer_on_event(obs, event):
    """Fold one event into the observer.

    ops increments when every primal agent has computed under the live dual
    iterate and each of those blocks has been adopted by every agent that
    needs it since the last increment; any adoption of a new dual block
    resets it to zero.

    Examples
    --------
    >>> obs = ObserverState(N_p=1, N_d=1, consumers=[set()])
    >>> stamp = DualStamp.zeros(1)
    >>> obs = observer_on_event(obs, Event("compute", 1, 0, 0, (0, 1), stamp))
    >>> obs.ops_current
    1
    >>> obs = observer_on_event(obs, Event("adopt_dual", 2, 1, 0, stamp=stamp.advance(0, 1)))
    >>> obs.ops_current
    0
    """
    if event.tick < obs.last_tick or event.seq <= obs.last_seq:
        raise ProtocolViolationError(f"observer received event {event.seq} out of order")
    obs.last_tick, obs.last_seq = event.tick, event.seq
    if not obs.round_delivered:
        obs._clear_round()

    if event.kind == "compute":
        obs.compute_ops[event.compute_id] = obs.ops_current
        if event.stamp.matches(obs.live_stamp):
            obs.round_computed.setdefault(event.agent, event.compute_id)
    elif event.kind == "adopt_primal":
        if _in_round(obs, event.sender, event.compute_id):
            obs.round_delivered[event.sender].add(event.agent)
    elif event.kind == "adopt_dual":
        obs.ops_current = 0
        obs.resets += 1
        obs.ops_history.append((event.tick, 0))
        obs._clear_round()
        return obs
    elif event.kind == "dual_update":
        obs.t[event.agent] = int(event.t_c)
        obs.T = min(obs.t)
        reached = [obs.compute_ops.get(cid, 0) for cid in event.used]
        kappa_ops = min(reached) if reached else obs.ops_current
        obs.K = kappa_ops if obs.K is None else min(obs.K, kappa_ops)
        obs.kappa_records.append((event.tick, event.agent, int(event.t_c), kappa_ops))
        for cid in event.used:
            obs.used_floor[cid[0], event.agent] = cid[1]
        obs._prune()
        return obs
    else:
        raise ProtocolViolationError(f"unknown event kind {event.kind!r}")

    if obs._round_complete():
        obs.ops_current += 1
        obs.increments += 1
        obs.ops_history.append((event.tick, obs.ops_current))
        obs._clear_round()
    return obs


def _in_round(obs, i, compute_id):
    # blocks of one agent are ordered by their computation counter
    first = obs.round_computed.get(i)
    if first is None or compute_id is None:
        return False
    return compute_id[0] == first[0] and compute_id[1] >= first[1]


def reference_saddle(p, geom):
    """Accurate saddle point used for the distances of a trace.

    The penalty form is solved first and the primal part is then polished
    with the fixed-mu contraction.
    """
    saddle = penalty_solve(p, geom)
    saddle.x_hat_delta = fixed_mu_minimizer(p, geom, saddle.mu_hat_delta, x0=saddle.x_hat_delta)
    return saddle


class Simulation:
    """One asynchronous run.

    Parameters
    ----------
    p : ProblemSpec
    geom : DualGeometry
    consts : ProblemConstants
    cfg : SimulationConfig
    schedule : RandomSchedule or ScriptedSchedule, optional
        Defaults to a RandomSchedule seeded from cfg.
    saddle : SaddlePoint, optional
        Saddle point used for distances. Computed when omitted.
    track_distances : bool, optional
        Compute distances to the saddle point and the bound on every
        snapshot. Default is True.
    audit_contraction : bool, optional
        Record the sup-norm error against the fixed-mu minimizer at every
        ops increment.
    audit_duals : bool, optional
        Compare every dual update with its one-step bound.
    """

    def __init__(
        self,
        p,
        geom,
        consts,
        cfg,
        schedule=None,
        saddle=None,
        track_distances=True,
        audit_contraction=False,
        audit_duals=False,
    ):
        cfg.validate(geom, consts)
        self.p = p
        self.geom = geom
        self.consts = consts
        self.cfg = cfg
        self.schedule = RandomSchedule(cfg) if schedule is None else schedule

        self.primals, self.duals = build_agents(p, geom, cfg.x0, cfg.mu0)
        self.consumers = [
            {j.i for j in self.primals if i in j.essential_neighbors} for i in range(p.N_p)
        ]
        self.channels = []
        for state in self.primals:
            chans = [(PRIMAL_TO_PRIMAL, state.i, j) for j in sorted(self.consumers[state.i])]
            chans += [(PRIMAL_TO_DUAL, state.i, c) for c in sorted(state.relevant_duals)]
            self.channels.append(chans)
        self.coords = [
            np.concatenate([p.primal_blocks[j] for j in sorted({s.i} | s.essential_neighbors)])
            for s in self.primals
        ]

        self.rc = rate_constants(p, geom, consts, cfg.gamma, cfg.rho) if p.m else None
        self.track_distances = track_distances
        self.saddle = saddle if saddle is not None or not track_distances else reference_saddle(p, geom)
        mu_start = np.concatenate([d.own_block for d in self.duals]) if self.duals else np.zeros(0)
        self.mu0_dist = (
            float(np.sum((mu_start - self.saddle.mu_hat_delta) ** 2)) if self.saddle is not None else 0.0
        )

        self.audit_contraction = audit_contraction
        self.audit_duals = audit_duals
        self._fixed_mu_cache = {}

        self.observer = ObserverState(
            N_p=p.N_p,
            N_d=p.N_d,
            consumers=self.consumers,
            constrained=[d.constrained_primals for d in self.duals],
        )
        self.queue = []
        self._seq = 0
        self._event_seq = 0
        self._channel_due = {}
        self._channel_last_seq = {}
        self._last_sent = {}
        self.messages_sent = 0
        self.messages_delivered = 0

        self.trace = []
        self.successive = []
        self.contraction_records = []
        self.dual_records = []
        self._audit_anchor = None

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(N_p={self.p.N_p}, N_d={self.p.N_d}, "
            f"seed={self.cfg.seed}, steps={self.cfg.steps})"
        )

    def _next_seq(self):
        self._seq += 1
        return self._seq

    def _emit(self, kind, tick, agent, **kwargs):
        self._event_seq += 1
        before = self.observer.increments
        observer_on_event(self.observer, Event(kind, tick, self._event_seq, agent, **kwargs))
        if self.audit_contraction and self.observer.increments != before:
            self._audit_increment(tick)

    def concatenated_x(self):
        x = np.empty(self.p.n)
        for state in self.primals:
            x[state.indices] = state.x[state.indices]
        return x

    def global_mu(self):
        mu = np.zeros(self.p.m)
        for d in self.duals:
            mu[d.rows] = d.own_block
        return mu

    def _send(self, tick, kind, sender, recipient, payload, stamp, compute_id=None):
        channel = (kind, sender, recipient)
        due = tick + self.schedule.extra_delay(tick, channel)
        due = max(due, self._channel_due.get(channel, due))
        self._channel_due[channel] = due
        msg = Message(kind, sender, recipient, payload, stamp, tick, due, compute_id, self._next_seq())
        heapq.heappush(self.queue, (msg.deliver_tick, msg.seq, msg))
        self.messages_sent += 1

    def _deliver(self, tick):
        while self.queue and self.queue[0][0] <= tick:
            _, seq, msg = heapq.heappop(self.queue)
            if seq <= self._channel_last_seq.get(msg.channel, 0):
                raise ProtocolViolationError(f"channel {msg.channel} delivered out of order")
            self._channel_last_seq[msg.channel] = seq
            self.messages_delivered += 1

            if msg.kind == PRIMAL_TO_DUAL:
                dual_receive(self.duals[msg.recipient], msg)
                continue

            state = self.primals[msg.recipient]
            outcome = primal_receive(state, msg)
            if outcome != ADOPTED:
                continue
            if msg.kind == PRIMAL_TO_PRIMAL:
                self._emit("adopt_primal", tick, state.i, sender=msg.sender, compute_id=msg.compute_id)
            else:
                self._emit("adopt_dual", tick, state.i, stamp=state.stamp)

    def _primal_phase(self, tick, executor):
        active = [i for i, on in enumerate(self.schedule.activations(tick, self.p.N_p)) if on]
        if executor is None:
            blocks = [primal_step(self.primals[i], self.p, self.geom, self.cfg.gamma) for i in active]
        else:
            blocks = list(
                executor.map(lambda i: primal_step(self.primals[i], self.p, self.geom, self.cfg.gamma), active)
            )
        for i, block in zip(active, blocks):
            state = self.primals[i]
            primal_compute(state, self.p, self.geom, self.cfg.gamma, block=block)
            self._emit("compute", tick, i, compute_id=state.last_compute[2], stamp=state.stamp)
        return bool(active)

    def _transmit(self, tick):
        for state in self.primals:
            if state.last_compute is None:
                continue
            block, stamp, compute_id = state.last_compute
            for channel in self.channels[state.i]:
                if self._last_sent.get(channel) == compute_id:
                    continue
                if self.schedule.transmits(tick, channel):
                    self._last_sent[channel] = compute_id
                    self._send(tick, channel[0], state.i, channel[2], block, stamp, compute_id)

    def _dual_phase(self, tick):
        for d in self.duals:
            if not (self.schedule.allow_dual_update(tick, d.c) and d.ready()):
                continue
            prev = None
            if self.audit_duals and self.saddle is not None:
                prev = float(np.sum((d.own_block - self.saddle.mu_hat_delta[d.rows]) ** 2))

            block, used = dual_compute(d, self.p, self.geom, self.cfg.rho)
            self._emit("dual_update", tick, d.c, t_c=d.t_c, used=tuple(used.values()))
            logger.debug("tick %d: dual %d -> iterate %d", tick, d.c, d.t_c)

            if prev is not None:
                new = float(np.sum((block - self.saddle.mu_hat_delta[d.rows]) ** 2))
                kappa_ops = self.observer.kappa_records[-1][3]
                bound = dual_block_bound(self.rc, d.c, prev, kappa_ops)
                self.dual_records.append((tick, d.c, d.t_c, new, bound, new <= bound * (1 + 1e-12)))

            for i in sorted(d.constrained_primals):
                self._send(tick, DUAL_TO_PRIMAL, d.c, i, block, d.t_c)

    def _fixed_mu_point(self):
        key = tuple(self.observer.t)
        if key not in self._fixed_mu_cache:
            self._fixed_mu_cache[key] = fixed_mu_minimizer(self.p, self.geom, self.global_mu())
        return self._fixed_mu_cache[key]

    def _audit_increment(self, tick):
        x_fixed = self._fixed_mu_point()
        error = max(
            float(np.max(np.abs(s.x[self.coords[s.i]] - x_fixed[self.coords[s.i]]))) for s in self.primals
        )
        ratio = np.nan
        anchor = self._audit_anchor
        if anchor is not None and anchor[0] == self.observer.resets and anchor[1] > 1e-7:
            ratio = error / anchor[1]
        self._audit_anchor = (self.observer.resets, error)
        self.contraction_records.append((tick, self.observer.ops_current, error, ratio))

    def _snapshot(self, tick, successive):
        obs = self.observer
        x = self.concatenated_x()
        distances = ()
        bound = np.nan
        if self.saddle is not None:
            x_hat = self.saddle.x_hat_delta
            distances = tuple(
                float(np.sum((s.x[self.coords[s.i]] - x_hat[self.coords[s.i]]) ** 2)) for s in self.primals
            )
            if self.rc is not None:
                bound = theorem_bound(self.rc, obs.ops_current, obs.T, obs.K_value, self.mu0_dist)
        record = TraceRecord(
            tick=tick,
            stamp=tuple(obs.t),
            ops=obs.ops_current,
            T=obs.T,
            K=obs.K_value,
            distances=distances,
            bound=bound,
            successive=successive,
            x_hat_dist=float(np.linalg.norm(x - self.saddle.x_hat_delta)) if self.saddle is not None else np.nan,
            discarded_primal=sum(s.discarded_primal for s in self.primals),
            discarded_dual=sum(d.discarded_dual for d in self.duals),
            mixed_inputs=sum(s.mixed_inputs for s in self.primals),
        )
        if not record.bound_ok:
            logger.warning("tick %d: bound %.6g below measured distance %.6g", tick, bound, record.dist_max)
        self.trace.append(record)
        return record

    def execute(self):
        """Run until the stop rule fires or the tick budget is spent.

        Returns
        -------
        SimulationResults
        """
        cfg = self.cfg
        logger.info("run start: %r", self)
        executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None

        x_prev = self.concatenated_x()
        streak = 0
        converged = False
        tick = 0
        successive = np.nan
        try:
            for tick in range(1, cfg.steps + 1):
                self._deliver(tick)
                computed = self._primal_phase(tick, executor)
                self._transmit(tick)
                self._deliver(tick)
                self._dual_phase(tick)

                x_now = self.concatenated_x()
                successive = float(np.linalg.norm(x_now - x_prev))
                self.successive.append(successive)
                x_prev = x_now

                if computed:
                    streak = streak + 1 if successive < cfg.stop_tol else 0
                if tick % cfg.snapshot_every == 0:
                    self._snapshot(tick, successive)
                if streak >= cfg.stop_patience:
                    converged = True
                    break
        finally:
            if executor is not None:
                executor.shutdown()

        if not self.trace or self.trace[-1].tick != tick:
            self._snapshot(tick, successive)

        mixed = sum(s.mixed_inputs for s in self.primals)
        if mixed:
            raise ProtocolViolationError(f"{mixed} primal computations consumed mixed-stamp inputs")

        logger.info(
            "run stop at tick %d (%s), T=%d, discarded %d/%d",
            tick,
            "converged" if converged else "budget exhausted",
            self.observer.T,
            self.trace[-1].discarded_primal,
            self.trace[-1].discarded_dual,
        )
        return SimulationResults(
            trace=self.trace,
            successive=np.array(self.successive),
            converged=converged,
            ticks=tick,
            x_final=self.concatenated_x(),
            mu_final=self.global_mu(),
            saddle=self.saddle,
            config=cfg.to_dict(),
            observer=self.observer,
            contraction_records=self.contraction_records,
            dual_records=self.dual_records,
            rate_constants=self.rc,
            messages_sent=self.messages_sent,
            messages_in_flight=len(self.queue),
            tag=self.p.tag,
        )


def run(p, geom, consts, cfg, **kwargs):
    """Run the asynchronous algorithm on a problem.

    Parameters
    ----------
    p : ProblemSpec
    geom : DualGeometry
    consts : ProblemConstants
    cfg : SimulationConfig
    **kwargs
        Passed to :class:`Simulation`.

    Returns
    -------
    SimulationResults
        Its ``trace`` is the list of :class:`TraceRecord` snapshots.

    Examples
    --------
    >>> from blockpd.problem import problem_example, DualGeometry, compute_constants
    >>> p = problem_example()
    >>> geom = DualGeometry.from_problem(p, 0.1)
    >>> res = run(p, geom, compute_constants(p, geom), SimulationConfig(steps=50, snapshot_every=10))
    >>> len(res.trace)
    5
    """
    return Simulation(p, geom, consts, cfg, **kwargs).execute()


def partition_presets(p):
    """Scalar and grouped block partitions of a problem.

    The grouped preset puts every connected component of the
    variable-constraint incidence graph into one primal and one dual block.

    Returns
    -------
    dict
        {"scalar": (primal_partition, dual_partition),
        "grouped": (primal_partition, dual_partition)}

    Raises
    ------
    DomainError
        If some component has variables but no constraints (or the
        reverse), so primal and dual groups cannot be paired.

    Examples
    --------
    >>> from blockpd.problem import problem_example
    >>> partition_presets(problem_example())["grouped"]
    ([[0], [1]], [[0], [1]])
    """
    pattern = p.constraint_pattern()
    n, m = p.n, p.m

    # union-find over variables 0..n-1 and constraints n..n+m-1
    parent = list(range(n + m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for j, i in zip(*np.nonzero(pattern)):
        ra, rb = find(int(i)), find(n + int(j))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for node in range(n + m):
        groups.setdefault(find(node), []).append(node)

    primal, dual = [], []
    for members in groups.values():
        variables = [v for v in members if v < n]
        rows = [v - n for v in members if v >= n]
        if not variables or not rows:
            raise DomainError("constraint sparsity is not block-separable into paired groups")
        primal.append(variables)
        dual.append(rows)

    primal.sort(key=lambda b: b[0])
    dual.sort(key=lambda b: b[0])
    scalar = ([[i] for i in range(n)], [[j] for j in range(m)])
    return {"scalar": scalar, "grouped": (primal, dual)}


def apply_preset(p, name):
    """Copy of the problem partitioned with a named preset."""
    presets = partition_presets(p)
    if name not in presets:
        raise DomainError(f"unknown partition preset {name!r}")
    return p.with_partitions(*presets[name])
