"""Simulated broadcast network for trajectory messages.

Each recipient has its own delivery queue ordered by delivery time.
Messages cross the bus as bytes and are decoded on delivery, so receivers
never share objects with the sender.
"""
from __future__ import annotations

import heapq
import itertools
import threading
from dataclasses import dataclass, field

import numpy as np

from .sogm import TrajectoryMessage


@dataclass
class BusConfig:
    latency: float | tuple = 0.0  # seconds, or a (low, high) uniform range
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lat = self.latency if isinstance(self.latency, (tuple, list)) else (self.latency, self.latency)
        if len(lat) != 2 or lat[0] < 0 or lat[1] < lat[0]:
            raise ValueError("latency must be >= 0 (or an ordered non-negative range)")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")
        self.latency = (float(lat[0]), float(lat[1]))


@dataclass
class Bus:
    config: BusConfig
    agents: list
    _queues: dict = field(default_factory=dict, init=False)
    _rng: np.random.Generator = field(init=False)
    _seq: itertools.count = field(default_factory=itertools.count, init=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False)

    def __post_init__(self):
        self.agents = list(self.agents)
        self._queues = {a: [] for a in self.agents}
        self._rng = np.random.default_rng(self.config.seed)

    def pending(self, agent_id) -> int:
        return len(self._queues[agent_id])


def make_bus(agent_ids, config: BusConfig | None = None) -> Bus:
    return Bus(config or BusConfig(), agent_ids)


def broadcast(bus: Bus, sender_id, msg: TrajectoryMessage, now: float) -> None:
    """Schedule ``msg`` for every agent except the sender.

    Latency and drops are drawn per recipient in agent order, so a fixed
    seed reproduces the delivery schedule.
    """
    data = msg.to_bytes()
    lo, hi = bus.config.latency
    with bus._lock:
        for agent in bus.agents:
            if agent == sender_id:
                continue
            # draw both numbers always so the stream does not depend on outcomes
            drop = bus._rng.random() < bus.config.drop_probability
            lat = lo + (hi - lo) * bus._rng.random()
            if drop:
                continue
            heapq.heappush(bus._queues[agent], (now + lat, next(bus._seq), data))


def poll(bus: Bus, agent_id, now: float) -> list[TrajectoryMessage]:
    """Messages for ``agent_id`` due by ``now``, in delivery order, each once."""
    out = []
    with bus._lock:
        q = bus._queues[agent_id]
        while q and q[0][0] <= now:
            _, _, data = heapq.heappop(q)
            out.append(TrajectoryMessage.from_bytes(data))
    return out
