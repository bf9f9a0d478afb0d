import numpy as np
import pytest
from numpy.testing import assert_allclose

from blockpd.agents import *
from blockpd.problem import DualGeometry, quadratic_example
from blockpd.utils import ProtocolViolationError, StepsizeError


@pytest.fixture
def coupled():
    p = quadratic_example()
    geom = DualGeometry.from_problem(p, delta=0.1)
    return p, geom


@pytest.fixture
def agents(coupled):
    p, geom = coupled
    return build_agents(p, geom)


def peer_message(sender, recipient, payload, stamp, k=1):
    return Message(
        PRIMAL_TO_PRIMAL, sender, recipient, [payload], stamp, 0, 1, compute_id=(sender, k)
    )


def report_message(sender, c, payload, stamp, k=1):
    return Message(PRIMAL_TO_DUAL, sender, c, [payload], stamp, 0, 1, compute_id=(sender, k))


def test_dual_stamp():
    s = DualStamp.zeros(2, tracked={0})
    assert s.advance(0, 3).t == (3, 0)
    assert s.advance(0, 3).tracked == frozenset({0})
    assert s.merge(DualStamp((1, 4), frozenset({1}))).t == (1, 4)
    assert not DualStamp((1, 0), frozenset({0, 1})).matches(DualStamp((2, 0), frozenset({0})))

    with pytest.raises(ProtocolViolationError):
        s.advance(0, 2).advance(0, 1)


def test_message_payload_is_read_only():
    msg = peer_message(0, 1, 1.0, DualStamp.zeros(2))
    with pytest.raises(ValueError):
        msg.payload[0] = 2.0
    assert msg.channel == (PRIMAL_TO_PRIMAL, 0, 1)


def test_build_agents(coupled, agents):
    p, _ = coupled
    primals, duals = agents

    assert len(primals) == 3
    assert len(duals) == 2
    assert [set(a.essential_neighbors) for a in primals] == [{1}, {0, 2}, {1}]
    assert [set(a.relevant_duals) for a in primals] == [{0}, {0, 1}, {1}]
    assert [set(d.constrained_primals) for d in duals] == [{0, 1}, {1, 2}]
    assert dual_broadcast_targets(p, 1) == {1, 2}
    assert relevant_dual_blocks(p) == [{0}, {0, 1}, {1}]

    for a in primals:
        assert_allclose(a.x, p.box.midpoint())
        assert_allclose(a.mu, [0.0, 0.0])


def test_primal_compute(coupled, agents):
    p, geom = coupled
    primals, _ = agents
    a = primals[0]

    # x = (1.5, 1.5, 1.5), mu = 0: d/dx0 = 3 * 1.5 - 1.5 - 6
    block = primal_compute(a, p, geom, gamma=0.1, gamma_max=0.2)
    assert_allclose(block, [1.5 - 0.1 * (4.5 - 1.5 - 6.0)])
    assert a.k == 1
    assert a.last_compute[2] == (0, 1)
    assert_allclose(a.own_block, block)


@pytest.mark.parametrize("gamma", [0.0, -0.1, 0.2, 0.5])
def test_primal_stepsize_rejected(coupled, agents, gamma):
    p, geom = coupled
    primals, _ = agents
    with pytest.raises(StepsizeError):
        primal_compute(primals[0], p, geom, gamma=gamma, gamma_max=0.2)


def test_primal_receive_peer_blocks(agents):
    primals, _ = agents
    a = primals[0]

    stale = peer_message(1, 0, 3.0, DualStamp((1, 0), frozenset({0, 1})))
    assert primal_receive(a, stale) == "discarded"
    assert a.discarded_primal == 1
    assert_allclose(a.x[1], 1.5)

    # component 1 is not tracked by agent 0, so it does not matter
    fresh = peer_message(1, 0, 3.0, DualStamp((0, 5), frozenset({0, 1})))
    assert primal_receive(a, fresh) == "adopted"
    assert_allclose(a.x[1], 3.0)
    assert a.neighbor_copies[1].compute_id == (1, 1)
    assert a.mixed_stamp_inputs() == 0

    with pytest.raises(ProtocolViolationError):
        primal_receive(primals[2], fresh)


def test_primal_receive_dual_blocks(agents):
    primals, _ = agents
    a = primals[1]

    update = Message(DUAL_TO_PRIMAL, 1, 1, [0.7], 1, 0, 1)
    assert primal_receive(a, update) == "adopted"
    assert_allclose(a.mu, [0.0, 0.7])
    assert a.stamp.t == (0, 1)
    assert a.epoch == 1

    assert primal_receive(a, update) == "regression"
    assert a.regressions == 1

    # agent 0 is not constrained by dual block 1
    assert primal_receive(primals[0], Message(DUAL_TO_PRIMAL, 1, 0, [0.7], 1, 0, 1)) == "regression"


def test_copies_are_carried_across_dual_updates(coupled, agents):
    p, geom = coupled
    primals, _ = agents
    a = primals[1]

    assert primal_receive(a, peer_message(0, 1, 2.0, DualStamp.zeros(2, tracked={0}))) == "adopted"
    assert primal_receive(a, Message(DUAL_TO_PRIMAL, 0, 1, [0.3], 1, 0, 1)) == "adopted"

    copy = a.neighbor_copies[0]
    assert copy.carried
    assert copy.stamp == a.stamp
    assert copy.epoch == a.epoch == 1

    primal_compute(a, p, geom, gamma=0.1)
    assert a.mixed_inputs == 0


def test_off_stamp_copy_is_counted(coupled, agents):
    p, geom = coupled
    primals, _ = agents
    a = primals[1]
    stale = DualStamp((1, 0), frozenset({0}))

    # written straight into the agent's memory, bypassing primal_receive
    a.x[0] = 4.0
    a.neighbor_copies[0] = NeighborCopy(np.array([4.0]), stale, (0, 1), a.epoch)
    assert a.mixed_stamp_inputs() == 1
    primal_compute(a, p, geom, gamma=0.1)
    assert a.mixed_inputs == 1

    # a matching stamp is still mixed when x does not hold the recorded block
    a.neighbor_copies[0] = NeighborCopy(np.array([3.0]), a.stamp, (0, 2), a.epoch)
    assert a.mixed_stamp_inputs() == 1

    # so is a copy left over from an earlier round
    a.x[0] = 3.0
    a.neighbor_copies[0] = NeighborCopy(np.array([3.0]), a.stamp, (0, 2), a.epoch - 1)
    assert a.mixed_stamp_inputs() == 1

    a.neighbor_copies[0] = NeighborCopy(np.array([3.0]), a.stamp, (0, 2), a.epoch)
    assert a.mixed_stamp_inputs() == 0


def test_dual_waits_for_every_constrained_primal(coupled, agents):
    p, geom = coupled
    _, duals = agents
    d = duals[0]

    assert not d.ready()
    assert dual_receive(d, report_message(0, 0, 1.0, DualStamp.zeros(2, {0}))) == "adopted"
    assert d.freshness_flags == {0}
    with pytest.raises(ProtocolViolationError):
        dual_compute(d, p, geom, rho=0.05)

    assert dual_receive(d, report_message(1, 0, 2.0, DualStamp.zeros(2, {0, 1}))) == "adopted"
    assert d.ready()

    # x = (1, 2, 1.5): g_0 = 1 + 2 - 2 = 1
    block, used = dual_compute(d, p, geom, rho=0.05)
    assert_allclose(block, [0.05])
    assert used == {0: (0, 1), 1: (1, 1)}
    assert d.t_c == 1
    assert not d.ready()

    assert dual_receive(d, report_message(0, 0, 1.0, DualStamp.zeros(2, {0}), k=2)) == "discarded"
    assert d.discarded_dual == 1

    ahead = report_message(0, 0, 1.0, DualStamp((2, 0), frozenset({0})), k=3)
    with pytest.raises(ProtocolViolationError):
        dual_receive(d, ahead)


def test_dual_stepsize_rejected(coupled, agents):
    p, geom = coupled
    _, duals = agents
    with pytest.raises(StepsizeError):
        dual_compute(duals[0], p, geom, rho=0.1)


def test_dual_projection_keeps_block_in_ball(coupled):
    p, geom = coupled
    _, duals = build_agents(p, geom, x0=[4.0, 4.0, 4.0], mu0=[14.9, 0.0])
    d = duals[0]
    dual_receive(d, report_message(0, 0, 4.0, DualStamp.zeros(2, {0})))
    dual_receive(d, report_message(1, 0, 4.0, DualStamp.zeros(2, {0, 1})))

    block, _ = dual_compute(d, p, geom, rho=0.09)
    assert_allclose(block, [geom.B])
