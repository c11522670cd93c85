"""Disc propagation, pure-ALOHA collisions and channel load measurement."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

RSSI_MAX = -40
RSSI_MIN = -110


class Radio(str, enum.Enum):
    BLE = "ble"
    LORA = "lora"


class Outcome(str, enum.Enum):
    RECEIVED = "received"
    COLLISION = "collision"
    OUT_OF_RANGE = "out_of_range"
    BUSY = "busy"  # receiver was transmitting (half duplex)
    NOT_LISTENING = "not_listening"


def rssi_at(distance_m: float) -> int:
    """Distance to RSSI map: -40 - 25 log10(d / 10 m), clamped to [-110, -40] dBm."""
    value = -40.0 - 25.0 * math.log10(max(distance_m, 1.0) / 10.0)
    return int(round(min(RSSI_MAX, max(RSSI_MIN, value))))


@dataclass
class Transmission:
    id: int
    sender: int
    radio: Radio
    start: float
    end: float
    data: bytes = b""
    link_dest: int = 0xFFFF
    channel: int = 0
    energy: float = 0.0
    success: bool | None = None  # outcome at the intended receiver, when there is one
    meta: dict = field(default_factory=dict)
    duration: float | None = None  # nominal airtime; end - start carries clock rounding

    @property
    def airtime(self) -> float:
        return self.end - self.start if self.duration is None else self.duration

    def overlaps(self, other: Transmission) -> bool:
        return (self.radio is other.radio and self.channel == other.channel
                and other.start < self.end and other.end > self.start)


class Topology:
    """Static node placement with one disc range per radio."""

    def __init__(self, positions: Mapping[int, tuple[float, float]], ranges: Mapping[Radio, float]):
        self.positions = dict(positions)
        self.ranges = dict(ranges)
        ids = sorted(self.positions)
        self._dist = {}
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                d = math.dist(self.positions[a], self.positions[b])
                self._dist[(a, b)] = self._dist[(b, a)] = d
        self.neighbors = {
            radio: {a: tuple(b for b in ids if b != a and self._dist[(a, b)] <= rng)
                    for a in ids}
            for radio, rng in self.ranges.items()
        }
        self._rssi = {k: rssi_at(d) for k, d in self._dist.items()}

    @property
    def nodes(self) -> list[int]:
        return sorted(self.positions)

    def distance(self, a: int, b: int) -> float:
        return 0.0 if a == b else self._dist[(a, b)]

    def in_range(self, a: int, b: int, radio: Radio) -> bool:
        return a != b and self._dist[(a, b)] <= self.ranges[radio]

    def rssi(self, a: int, b: int) -> int:
        return self._rssi[(a, b)]


class GraphTopology:
    """Explicit symmetric BLE links with one fixed RSSI; LoRa reaches everyone.

    Used for exhaustive small-topology checks where placements on a plane
    could not produce every connectivity pattern.
    """

    def __init__(self, nodes: Iterable[int], links: Iterable[tuple[int, int]],
                 link_rssi: int = -60):
        ids = sorted(nodes)
        adj: dict[int, set[int]] = {n: set() for n in ids}
        for a, b in links:
            if a == b or a not in adj or b not in adj:
                raise ValueError(f"bad link {a}-{b}")
            adj[a].add(b)
            adj[b].add(a)
        self._adj = adj
        self.link_rssi = link_rssi
        self.neighbors = {
            Radio.BLE: {a: tuple(sorted(adj[a])) for a in ids},
            Radio.LORA: {a: tuple(b for b in ids if b != a) for a in ids},
        }

    @property
    def nodes(self) -> list[int]:
        return sorted(self._adj)

    def in_range(self, a: int, b: int, radio: Radio) -> bool:
        if a == b:
            return False
        return radio is Radio.LORA or b in self._adj[a]

    def rssi(self, a: int, b: int) -> int:
        return self.link_rssi


class FullMesh:
    """Every node hears every other node; used for channel-only experiments."""

    def __init__(self, nodes: Iterable[int]):
        self._nodes = sorted(nodes)

    @property
    def nodes(self) -> list[int]:
        return list(self._nodes)

    def in_range(self, a: int, b: int, radio: Radio) -> bool:
        return a != b


def propagate(tx: Transmission, topology, active: Iterable[Transmission],
              receivers: Iterable[int] | None = None,
              listening: Callable[[int, Transmission], bool] | None = None) -> dict[int, Outcome]:
    """Per-receiver outcome of ``tx`` given the other transmissions ``active`` around it.

    A receiver loses the frame if it transmitted during it, or if it can hear
    any other overlapping transmission on the same radio and channel.
    """
    others = [o for o in active if o.id != tx.id and tx.overlaps(o)]
    candidates = topology.nodes if receivers is None else receivers
    result: dict[int, Outcome] = {}
    for r in candidates:
        if r == tx.sender:
            continue
        if not topology.in_range(tx.sender, r, tx.radio):
            result[r] = Outcome.OUT_OF_RANGE
        elif listening is not None and not listening(r, tx):
            result[r] = Outcome.NOT_LISTENING
        elif any(o.sender == r for o in others):
            result[r] = Outcome.BUSY
        elif any(topology.in_range(o.sender, r, tx.radio) for o in others):
            result[r] = Outcome.COLLISION
        else:
            result[r] = Outcome.RECEIVED
    return result


@dataclass(frozen=True)
class LoadMeasurement:
    offered_load: float
    frames: int
    successes: int

    @property
    def success_fraction(self) -> float:
        return self.successes / self.frames if self.frames else 0.0

    @property
    def throughput(self) -> float:
        """Successful airtime per unit time, S = G x success fraction."""
        return self.offered_load * self.success_fraction


def measure_offered_load(transmissions: Sequence[Transmission], start: float, end: float,
                         radio: Radio | None = None, channel: int | None = None) -> LoadMeasurement:
    """G over [start, end): summed airtime inside the window divided by its length."""
    window = end - start
    busy = 0.0
    frames = successes = 0
    for tx in transmissions:
        if radio is not None and tx.radio is not radio:
            continue
        if channel is not None and tx.channel != channel:
            continue
        overlap = min(tx.end, end) - max(tx.start, start)
        if overlap <= 0:
            continue
        busy += overlap
        if start <= tx.start < end:
            frames += 1
            successes += bool(tx.success)
    if window <= 0:
        return LoadMeasurement(0.0, frames, successes)
    return LoadMeasurement(busy / window, frames, successes)


def aloha_experiment(offered_load: float, frames: int, rng: random.Random,
                     airtime: float = 1.0) -> LoadMeasurement:
    """Poisson arrivals at ``offered_load`` frames per airtime from an unbounded
    population of senders to one sink, resolved through :func:`propagate`."""
    if offered_load <= 0:
        raise ValueError("offered_load must be > 0")
    sink = 0
    rate = offered_load / airtime
    t = 0.0
    txs = []
    for i in range(frames):
        t += rng.expovariate(rate)
        txs.append(Transmission(id=i, sender=i + 1, radio=Radio.BLE, start=t, end=t + airtime,
                                link_dest=sink))
    topology = FullMesh([sink] + [tx.sender for tx in txs])
    lo = 0
    for i, tx in enumerate(txs):
        while txs[lo].end <= tx.start:
            lo += 1
        hi = i + 1
        while hi < len(txs) and txs[hi].start < tx.end:
            hi += 1
        outcome = propagate(tx, topology, txs[lo:hi], receivers=[sink])
        tx.success = outcome[sink] is Outcome.RECEIVED
    # drop the ramp-up and ramp-down edges so every counted frame saw a full neighbourhood
    span_start, span_end = txs[0].start + airtime, txs[-1].start - airtime
    return measure_offered_load(txs, span_start, span_end, Radio.BLE)
