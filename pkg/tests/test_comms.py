import numpy as np
import pytest
from hypothesis import given, strategies as st

from sogmplan.bezier import constant_spline
from sogmplan.comms import BusConfig, broadcast, make_bus, poll
from sogmplan.sogm import Sphere, TrajectoryMessage


def msg(sender, t=0.0, p=(1.0, 2.0, 3.0)):
    return TrajectoryMessage(sender, t, constant_spline(p, t, 2.0), Sphere(0.25))


def test_config_validation():
    for bad in (dict(latency=-0.1), dict(latency=(0.2, 0.1)), dict(drop_probability=1.5), dict(drop_probability=-0.1)):
        with pytest.raises(ValueError):
            BusConfig(**bad)
    assert BusConfig(0.05).latency == (0.05, 0.05)


def test_no_self_delivery_and_once_only():
    bus = make_bus([0, 1, 2])
    broadcast(bus, 1, msg(1), now=0.0)
    assert poll(bus, 1, 10.0) == []
    for a in (0, 2):
        got = poll(bus, a, 0.0)
        assert len(got) == 1 and got[0].agent_id == 1
        assert poll(bus, a, 10.0) == []


def test_fixed_latency():
    bus = make_bus([0, 1], BusConfig(latency=0.2))
    broadcast(bus, 0, msg(0), now=1.0)
    assert poll(bus, 1, 1.19) == []
    assert len(poll(bus, 1, 1.2)) == 1


def test_delivery_order():
    bus = make_bus([0, 1, 2], BusConfig(latency=0.1))
    broadcast(bus, 0, msg(0, p=(0, 0, 0)), now=0.0)
    broadcast(bus, 2, msg(2, p=(5, 5, 5)), now=0.05)
    got = poll(bus, 1, 1.0)
    assert [m.agent_id for m in got] == [0, 2]


def test_receivers_get_independent_copies():
    bus = make_bus([0, 1, 2])
    m = msg(0)
    broadcast(bus, 0, m, now=0.0)
    m.spline.pieces[0].control_points[:] = 99.0  # sender mutates after sending
    a, b = poll(bus, 1, 0.0)[0], poll(bus, 2, 0.0)[0]
    assert np.allclose(a.spline.eval(0.5), [1, 2, 3])
    a.spline.pieces[0].control_points[:] = -1.0
    assert np.allclose(b.spline.eval(0.5), [1, 2, 3])


def _schedule(cfg, n_msgs=50):
    bus = make_bus(range(4), cfg)
    for k in range(n_msgs):
        broadcast(bus, k % 4, msg(k % 4, t=0.1 * k), now=0.1 * k)
    return [[(m.agent_id, m.stamp) for m in poll(bus, a, 1e9)] for a in range(4)]


@given(st.integers(0, 2**31 - 1))
def test_seeded_schedule_is_reproducible(seed):
    cfg = dict(latency=(0.0, 0.3), drop_probability=0.3, seed=seed)
    assert _schedule(BusConfig(**cfg)) == _schedule(BusConfig(**cfg))


def test_drop_rate():
    got = sum(len(x) for x in _schedule(BusConfig(drop_probability=0.25, seed=3), n_msgs=2000))
    sent = 2000 * 3
    assert abs(got / sent - 0.75) < 0.03
    assert sum(len(x) for x in _schedule(BusConfig(drop_probability=1.0))) == 0
