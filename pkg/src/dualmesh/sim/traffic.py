"""Locality-biased Poisson traffic."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping

from ..analytics import TrafficParams


@dataclass(frozen=True)
class Origination:
    time: float
    src: int
    dst: int
    inter_cluster: bool


def pick_destination(src: int, membership: Mapping[int, int], peers: Mapping[int, list[int]],
                     nodes: list[int], beta: float, rng: random.Random) -> int:
    """Own-cluster peer with probability ``beta``, otherwise uniform over all nodes.

    Drawing the sender itself in the uniform branch is redirected to a random
    own-cluster peer, so every node in the network stays equally likely
    relative to its cluster and the inter-cluster share is (1-beta)(1-1/C)
    for equal clusters.  Senders alone in their cluster fall back to a
    uniform draw over the other nodes.
    """
    own = peers.get(membership[src], [])
    own = [n for n in own if n != src]
    if not own:
        others = [n for n in nodes if n != src]
        return others[rng.randrange(len(others))]
    if rng.random() < beta:
        return own[rng.randrange(len(own))]
    dst = nodes[rng.randrange(len(nodes))]
    if dst == src:
        dst = own[rng.randrange(len(own))]
    return dst


def generate_traffic(params: TrafficParams, membership: Mapping[int, int], rng: random.Random,
                     start: float = 0.0, end: float = float("inf"),
                     max_messages: int | None = None) -> list[Origination]:
    """Poisson originations (``rate_per_node`` per minute at every node) in [start, end).

    ``membership`` maps node id to cluster label and is the snapshot used to
    classify each message as intra- or inter-cluster.
    """
    nodes = sorted(membership)
    if len(nodes) < 2:
        raise ValueError("traffic needs at least two nodes")
    if end == float("inf") and max_messages is None:
        raise ValueError("give an end time or a message cap")
    peers: dict[int, list[int]] = {}
    for n in nodes:
        peers.setdefault(membership[n], []).append(n)
    out: list[Origination] = []
    if params.rate_per_node <= 0:
        return out
    rate = params.rate_per_node / 60.0
    clocks = {n: start + rng.expovariate(rate) for n in nodes}
    while True:
        src = min(nodes, key=lambda n: (clocks[n], n))
        t = clocks[src]
        if t >= end or (max_messages is not None and len(out) >= max_messages):
            break
        dst = pick_destination(src, membership, peers, nodes, params.beta, rng)
        out.append(Origination(t, src, dst, membership[src] != membership[dst]))
        clocks[src] = t + rng.expovariate(rate)
    return out
