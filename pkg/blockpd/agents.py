"""Agents module.

Primal and dual agent state machines. Primal agents run projected gradient
descent on their own block of x, dual agents run projected gradient ascent on
their own block of mu. Every primal computation is tagged with the vector of
dual iteration counts it used (a :class:`DualStamp`); peers only adopt blocks
computed under the same dual variable, and dual agents only update once every
primal agent they constrain has reported a block computed under their latest
iterate.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from blockpd.problem import essential_neighbors, grad_mu, grad_x
from blockpd.projection import project_box, project_nonneg_l1
from blockpd.utils import ProtocolViolationError, StepsizeError

__all__ = [
    "DualStamp",
    "Message",
    "NeighborCopy",
    "PrimalAgentState",
    "DualAgentState",
    "PRIMAL_TO_PRIMAL",
    "PRIMAL_TO_DUAL",
    "DUAL_TO_PRIMAL",
    "relevant_dual_blocks",
    "dual_broadcast_targets",
    "build_agents",
    "primal_step",
    "primal_compute",
    "primal_receive",
    "dual_receive",
    "dual_compute",
]

logger = logging.getLogger(__name__)

PRIMAL_TO_PRIMAL = "primal->primal"
PRIMAL_TO_DUAL = "primal->dual"
DUAL_TO_PRIMAL = "dual->primal"

ADOPTED = "adopted"
DISCARDED = "discarded"
REGRESSION = "regression"


@dataclass(frozen=True)
class DualStamp:
    """Vector of dual iteration counts t = (t_1, ..., t_Nd).

    Only the components in ``tracked`` are meaningful; an agent tracks the
    dual blocks it exchanges messages with. Two stamps agree when they are
    equal on the components both of them track.

    Examples
    --------
    >>> s = DualStamp.zeros(3, tracked={0, 2})
    >>> s.advance(2, 1).t
    (0, 0, 1)
    >>> s.matches(DualStamp((0, 7, 0), tracked={0, 1}))
    True
    """

    t: tuple
    tracked: frozenset = field(default_factory=frozenset)

    @classmethod
    def zeros(cls, N_d, tracked=None):
        tracked = range(N_d) if tracked is None else tracked
        return cls(tuple([0] * N_d), frozenset(int(c) for c in tracked))

    def __getitem__(self, c):
        return self.t[c]

    def __len__(self):
        return len(self.t)

    def advance(self, c, value):
        if value < self.t[c]:
            raise ProtocolViolationError(f"stamp component {c} would regress")
        t = list(self.t)
        t[c] = int(value)
        return DualStamp(tuple(t), self.tracked | {c})

    def merge(self, other):
        """Componentwise maximum, tracking the union of components."""
        t = tuple(max(a, b) for a, b in zip(self.t, other.t))
        return DualStamp(t, self.tracked | other.tracked)

    def matches(self, other):
        common = self.tracked & other.tracked
        return all(self.t[c] == other.t[c] for c in common)


@dataclass(frozen=True)
class Message:
    """An immutable message between agents.

    Attributes
    ----------
    kind : str
        PRIMAL_TO_PRIMAL, PRIMAL_TO_DUAL or DUAL_TO_PRIMAL.
    sender, recipient : int
        Agent ids (primal ids for primal agents, dual ids for dual agents).
    payload : numpy.ndarray
        The block being transmitted (read-only).
    stamp : DualStamp or int
        The sender's stamp for primal payloads, t_c for dual payloads.
    send_tick, deliver_tick : int
        Tick at which the message was sent and is due.
    compute_id : tuple
        (primal id, computation count) for primal payloads.
    seq : int
        Global send order, used to keep channels FIFO.
    """

    kind: str
    sender: int
    recipient: int
    payload: np.ndarray
    stamp: object
    send_tick: int
    deliver_tick: int
    compute_id: tuple = None
    seq: int = 0

    def __post_init__(self):
        assert self.deliver_tick >= self.send_tick, "message delivered before it was sent"
        payload = np.array(self.payload, dtype=float)
        payload.setflags(write=False)
        object.__setattr__(self, "payload", payload)

    @property
    def channel(self):
        return (self.kind, self.sender, self.recipient)


@dataclass
class NeighborCopy:
    """A peer block held by an agent.

    ``stamp`` is the dual variable the block may be used with. A block held
    across a dual update is carried into the new round as its starting point
    and takes the new stamp; ``carried`` records that.
    """

    block: np.ndarray
    stamp: DualStamp
    compute_id: tuple
    epoch: int
    carried: bool = False


class PrimalAgentState:
    """Working memory of primal agent i.

    Parameters
    ----------
    i : int
        Agent id.
    primal_indices : list of numpy.ndarray
        Coordinates of every primal block; block i is the agent's own.
    dual_rows : list of numpy.ndarray
        Constraint indices of every dual block.
    box : BoxSet
        X_i.
    x0 : numpy.ndarray
        Full-length initial point; own block and neighbor copies start here.
    mu0 : numpy.ndarray
        Full-length initial dual point.
    essential_neighbors : set of int
        N_i.
    relevant_duals : set of int
        Dual blocks whose constraints involve x_[i].
    """

    def __init__(self, i, primal_indices, dual_rows, box, x0, mu0, essential_neighbors, relevant_duals):
        self.i = int(i)
        self.primal_indices = primal_indices
        self.dual_rows = dual_rows
        self.indices = np.asarray(primal_indices[i], dtype=int)
        self.box = box
        self.x = np.array(x0, dtype=float)
        self.mu = np.array(mu0, dtype=float)
        self.essential_neighbors = frozenset(essential_neighbors)
        self.relevant_duals = frozenset(relevant_duals)
        self.stamp = DualStamp.zeros(len(dual_rows), tracked=self.relevant_duals)
        self.neighbor_copies = {}
        self.epoch = 0

        self.k = 0
        self.last_compute = None
        self.discarded_primal = 0
        self.regressions = 0
        self.mixed_inputs = 0

    def __repr__(self):
        return f"{self.__class__.__name__}(i={self.i}, k={self.k}, stamp={self.stamp.t})"

    @property
    def own_block(self):
        return self.x[self.indices].copy()

    def mixed_stamp_inputs(self):
        """Held peer blocks that a computation under the current stamp may not use.

        A copy is mixed when its stamp differs from the agent's stamp, when it
        belongs to another round, or when the block actually held in ``x`` is
        not the recorded one.
        """
        count = 0
        for j, copy in self.neighbor_copies.items():
            held = self.x[self.primal_indices[j]]
            if (
                not copy.stamp.matches(self.stamp)
                or copy.epoch != self.epoch
                or not np.array_equal(held, copy.block)
            ):
                logger.debug("primal %d holds block of %d under stamp %s", self.i, j, copy.stamp.t)
                count += 1
        return count


class DualAgentState:
    """Working memory of dual agent c.

    Parameters
    ----------
    c : int
        Agent id.
    rows : numpy.ndarray
        The constraint indices owned by the agent.
    ball : NonnegL1Ball
        M_c.
    x0 : numpy.ndarray
        Full-length initial primal point used until blocks arrive.
    mu0_block : numpy.ndarray
        Initial value of the own block.
    constrained_primals : set of int
        Primal agents appearing in g_[c].
    primal_indices : list of numpy.ndarray
        Coordinates of every primal block.
    N_d : int
        Number of dual agents.
    """

    def __init__(self, c, rows, ball, x0, mu0_block, constrained_primals, primal_indices, N_d):
        self.c = int(c)
        self.rows = np.asarray(rows, dtype=int)
        self.ball = ball
        self.own_block = np.array(mu0_block, dtype=float)
        self.t_c = 0
        self.x = np.array(x0, dtype=float)
        self.constrained_primals = frozenset(constrained_primals)
        self.primal_indices = primal_indices
        self.primal_copies = {}
        self.collect_stamp = DualStamp.zeros(N_d, tracked={self.c})
        self.discarded_dual = 0

    def __repr__(self):
        return f"{self.__class__.__name__}(c={self.c}, t_c={self.t_c})"

    @property
    def freshness_flags(self):
        """Primal agents whose latest block was computed under the current iterate."""
        fresh = set()
        for i, copy in self.primal_copies.items():
            if copy.stamp[self.c] == self.t_c and copy.stamp.matches(self.collect_stamp):
                fresh.add(i)
        return fresh

    def ready(self):
        return self.constrained_primals <= self.freshness_flags


def relevant_dual_blocks(p):
    """For every primal agent, the dual blocks whose constraints involve it."""
    pattern = p.constraint_pattern()
    relevant = []
    for idx in p.primal_blocks:
        relevant.append({c for c, rows in enumerate(p.dual_blocks) if pattern[np.ix_(rows, idx)].any()})
    return relevant


def dual_broadcast_targets(p, c):
    """Primal agents that dual agent c sends its block to.

    Exactly the primal agents whose variables appear in g_[c]; for affine
    constraints this is the nonzero column pattern of the rows of A in the
    block.

    Parameters
    ----------
    p : ProblemSpec
    c : int
        Dual agent id.

    Returns
    -------
    set of int

    Examples
    --------
    >>> from blockpd.problem import quadratic_example
    >>> dual_broadcast_targets(quadratic_example(), 0)
    {0, 1}
    """
    rows = p.dual_blocks[c]
    involved = p.constraint_pattern()[rows].any(axis=0)
    return {i for i, idx in enumerate(p.primal_blocks) if involved[idx].any()}


def build_agents(p, geom, x0=None, mu0=None):
    """Create every agent at Step 0.

    x(0) defaults to the box midpoint and mu(0) to zero.

    Returns
    -------
    primals : list of PrimalAgentState
    duals : list of DualAgentState
    """
    x0 = p.box.midpoint() if x0 is None else np.asarray(x0, dtype=float)
    mu0 = np.zeros(p.m) if mu0 is None else np.asarray(mu0, dtype=float)
    x0 = project_box(p.box, x0)
    mu0 = geom.project(mu0)

    neighbors = essential_neighbors(p)
    relevant = relevant_dual_blocks(p)

    primals = [
        PrimalAgentState(i, p.primal_blocks, p.dual_blocks, p.box[idx], x0, mu0, neighbors[i], relevant[i])
        for i, idx in enumerate(p.primal_blocks)
    ]
    duals = []
    for c, rows in enumerate(p.dual_blocks):
        targets = {i for i in range(p.N_p) if c in relevant[i]}
        duals.append(
            DualAgentState(c, rows, geom.block_sets[c], x0, mu0[rows], targets, p.primal_blocks, p.N_d)
        )
    return primals, duals


def _check_gamma(gamma, gamma_max):
    if not gamma > 0:
        raise StepsizeError(f"primal stepsize must be positive, got gamma={gamma}")
    if gamma_max is not None and not gamma < gamma_max:
        raise StepsizeError(
            f"primal stepsize violates gamma < 1 / max row sum |H| (gamma={gamma:.6g}, "
            f"bound={gamma_max:.6g})"
        )


def _check_rho(rho, delta):
    upper = 2 * delta / (delta ** 2 + 2)
    if not 0 < rho < upper:
        raise StepsizeError(
            f"dual stepsize violates 0 < rho < 2 delta / (delta^2 + 2) (rho={rho:.6g}, bound={upper:.6g})"
        )


def primal_step(state, p, geom, gamma):
    """Projected gradient step on the agent's block, without side effects.

    Returns
    -------
    numpy.ndarray
        Pi_{X_i}[x_[i] - gamma * d L_delta / d x_[i] (x^i, mu^i)].
    """
    gradient = grad_x(p, geom, state.x, state.mu, check=False)[state.indices]
    return project_box(state.box, state.x[state.indices] - gamma * gradient)


def primal_compute(state, p, geom, gamma, gamma_max=None, block=None):
    """Step 2: update the own block and tag it with the current stamp.

    Parameters
    ----------
    state : PrimalAgentState
    p : ProblemSpec
    geom : DualGeometry
    gamma : float
        Primal stepsize.
    gamma_max : float, optional
        Strict upper bound for gamma; checked when given.
    block : numpy.ndarray, optional
        A block already produced by :func:`primal_step` for this state.

    Returns
    -------
    numpy.ndarray
        The new own block.

    Examples
    --------
    >>> from blockpd.problem import QuadraticProblem, DualGeometry
    >>> p = QuadraticProblem(Q=[[1.0]], A=[[1.0]], b=[5.0], box_lower=[-2.0],
    ...                      box_upper=[2.0], slater_point=[0.0])
    >>> geom = DualGeometry.from_problem(p, 0.1)
    >>> primals, _ = build_agents(p, geom, x0=[1.0])
    >>> primal_compute(primals[0], p, geom, gamma=0.1)
    array([0.9])
    """
    _check_gamma(gamma, gamma_max)

    state.mixed_inputs += state.mixed_stamp_inputs()
    if block is None:
        block = primal_step(state, p, geom, gamma)

    state.x[state.indices] = block
    state.k += 1
    state.last_compute = (block.copy(), state.stamp, (state.i, state.k))
    return block


def primal_receive(state, msg):
    """Steps 1 and 3: adopt a peer block or a dual block.

    Peer blocks are adopted only when they were computed under the same dual
    variable as the one held; otherwise they are discarded and counted.
    Dual blocks are always adopted unless they are older than the one held.

    Returns
    -------
    str
        "adopted", "discarded" or "regression".
    """
    if msg.recipient != state.i:
        raise ProtocolViolationError(f"message for agent {msg.recipient} delivered to {state.i}")

    if msg.kind == PRIMAL_TO_PRIMAL:
        if not msg.stamp.matches(state.stamp):
            state.discarded_primal += 1
            logger.debug("primal %d discarded block of %d with stamp %s", state.i, msg.sender, msg.stamp.t)
            return DISCARDED

        j = msg.sender
        state.x[state.primal_indices[j]] = msg.payload
        state.neighbor_copies[j] = NeighborCopy(msg.payload, msg.stamp, msg.compute_id, state.epoch)
        return ADOPTED

    if msg.kind == DUAL_TO_PRIMAL:
        c, t_c = msg.sender, int(msg.stamp)
        if c not in state.relevant_duals or t_c <= state.stamp[c]:
            state.regressions += 1
            logger.debug("primal %d dropped dual %d iterate %d (holding %d)", state.i, c, t_c, state.stamp[c])
            return REGRESSION
        state.mu[state.dual_rows[c]] = msg.payload
        state.stamp = state.stamp.advance(c, t_c)
        state.epoch += 1
        for j, copy in state.neighbor_copies.items():
            state.neighbor_copies[j] = replace(copy, stamp=state.stamp, epoch=state.epoch, carried=True)
        return ADOPTED

    raise ProtocolViolationError(f"primal agent cannot receive {msg.kind} messages")


def dual_receive(state, msg):
    """Step 5: store a primal block reported to the dual agent.

    Blocks computed under an older iterate of this dual agent are discarded
    and counted. The stamp collected so far is the componentwise latest one
    seen.

    Returns
    -------
    str
        "adopted" or "discarded".
    """
    if msg.kind != PRIMAL_TO_DUAL or msg.recipient != state.c:
        raise ProtocolViolationError(f"dual agent {state.c} cannot receive {msg.kind} to {msg.recipient}")

    held = msg.stamp[state.c]
    if held > state.t_c:
        raise ProtocolViolationError(
            f"primal {msg.sender} reports dual {state.c} iterate {held} before it was computed"
        )
    if held < state.t_c:
        state.discarded_dual += 1
        logger.debug("dual %d discarded stale block of primal %d", state.c, msg.sender)
        return DISCARDED

    i = msg.sender
    state.x[state.primal_indices[i]] = msg.payload
    state.primal_copies[i] = NeighborCopy(msg.payload, msg.stamp, msg.compute_id, state.t_c)
    state.collect_stamp = state.collect_stamp.merge(msg.stamp)
    return ADOPTED


def dual_compute(state, p, geom, rho):
    """Step 6: projected gradient ascent on the own dual block.

    Parameters
    ----------
    state : DualAgentState
    p : ProblemSpec
    geom : DualGeometry
    rho : float
        Dual stepsize, 0 < rho < 2 delta / (delta^2 + 2).

    Returns
    -------
    block : numpy.ndarray
        The new own block.
    used : dict
        Compute id of the primal block used from every constrained agent.

    Raises
    ------
    ProtocolViolationError
        If some constrained primal agent has not reported a block computed
        under the current iterate.

    Examples
    --------
    >>> from blockpd.problem import QuadraticProblem, DualGeometry
    >>> p = QuadraticProblem(Q=[[1.0]], A=[[1.0]], b=[1.0], box_lower=[-5.0],
    ...                      box_upper=[5.0], slater_point=[-4.0])
    >>> geom = DualGeometry.from_problem(p, 0.1)
    >>> _, duals = build_agents(p, geom, x0=[2.0])
    >>> dual_compute(duals[0], p, geom, rho=0.1)
    Traceback (most recent call last):
    ...
    blockpd.utils.ProtocolViolationError: dual agent 0 is missing fresh blocks from [0]
    """
    _check_rho(rho, geom.delta)
    if not state.ready():
        missing = sorted(state.constrained_primals - state.freshness_flags)
        raise ProtocolViolationError(f"dual agent {state.c} is missing fresh blocks from {missing}")

    mu = np.zeros(p.m)
    mu[state.rows] = state.own_block
    ascent = grad_mu(p, geom, state.x, mu, check=False)[state.rows]
    block = project_nonneg_l1(state.ball, state.own_block + rho * ascent)

    used = {i: state.primal_copies[i].compute_id for i in sorted(state.constrained_primals)}
    state.own_block = block
    state.t_c += 1
    state.collect_stamp = state.collect_stamp.advance(state.c, state.t_c)
    return block, used
