"""Implicit cluster-head election driven entirely by beacon contents.

A node claims the cluster-head role when its rank beats every mutual PRESENT
neighbor.  Rank orders non-demoted nodes above demoted ones, then by
advertised key, then by node id, so a demoted node can never outrank a
healthy neighbour.  Nodes that lose join the best-ranked higher neighbour
that claims the role, or otherwise adopt the cluster relayed by their
best-ranked higher neighbour.  Because that pointer always moves to a
strictly higher rank the membership graph is a forest rooted at the heads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

from .frames import BROADCAST, UNASSIGNED

DEMOTION_THRESHOLD = 20
RECOVERY_HYSTERESIS = 10
MAX_CLUSTER_DEPTH = 3
DEMOTION_OFFSET = 0x8000


class Role(str, enum.Enum):
    MEMBER = "member"
    CH = "ch"


def demoted_key(node_id: int) -> int:
    """Advertised key after voluntary demotion, clamped to 1."""
    return node_id - DEMOTION_OFFSET if node_id > DEMOTION_OFFSET else 1


@dataclass(frozen=True)
class ElectionState:
    node_id: int
    own_key: int
    role: Role = Role.CH
    cluster: int = UNASSIGNED
    battery_pct: int = 100
    demoted: bool = False
    depth: int = 0

    @classmethod
    def initial(cls, node_id: int, battery_pct: int = 100) -> ElectionState:
        """A freshly booted node is the head of its own singleton cluster."""
        return cls(node_id=node_id, own_key=node_id, role=Role.CH, cluster=node_id,
                   battery_pct=battery_pct)

    @property
    def rank(self) -> tuple[bool, int, int]:
        return (not self.demoted, self.own_key, self.node_id)

    @property
    def is_ch(self) -> bool:
        return self.role is Role.CH


@dataclass(frozen=True)
class PeerView:
    """The beacon-derived facts election needs about one neighbour."""

    node: int
    key: int
    is_ch: bool = False
    demoting: bool = False
    cluster: int = UNASSIGNED
    depth: int = 0
    present: bool = True
    mutual: bool = True

    @property
    def rank(self) -> tuple[bool, int, int]:
        return (not self.demoting, self.key, self.node)


def evaluate_role(state: ElectionState, neighbors: Iterable[PeerView],
                  now: float | None = None) -> ElectionState:
    """Recompute role and cluster from the current neighbour table."""
    higher = [n for n in neighbors if n.present and n.mutual and n.rank > state.rank]
    if not higher:
        return _as_ch(state)

    claimers = [n for n in higher if n.is_ch]
    if claimers:
        head = max(claimers, key=lambda n: n.rank)
        return replace(state, role=Role.MEMBER, cluster=head.node, depth=1)

    def adoptable(n: PeerView) -> bool:
        return (n.cluster not in (UNASSIGNED, BROADCAST, state.node_id)
                and n.depth < MAX_CLUSTER_DEPTH)

    best = max(higher, key=lambda n: n.rank)
    if adoptable(best):
        return replace(state, role=Role.MEMBER, cluster=best.cluster, depth=best.depth + 1)
    if best.cluster in (UNASSIGNED, BROADCAST) and best.depth < MAX_CLUSTER_DEPTH:
        # provisional membership while the neighbour's own claim settles
        return replace(state, role=Role.MEMBER, cluster=best.node, depth=best.depth + 1)
    relays = [n for n in higher if adoptable(n)]
    if relays:
        relay = max(relays, key=lambda n: n.rank)
        return replace(state, role=Role.MEMBER, cluster=relay.cluster, depth=relay.depth + 1)
    # every route to a head is already MAX_CLUSTER_DEPTH hops long
    return _as_ch(state)


def _as_ch(state: ElectionState) -> ElectionState:
    return replace(state, role=Role.CH, cluster=state.node_id, depth=0)


def apply_battery_policy(state: ElectionState, battery_pct: int,
                         threshold: int = DEMOTION_THRESHOLD,
                         hysteresis: int = RECOVERY_HYSTERESIS) -> ElectionState:
    """Demote a low-battery head; restore the key once recharged past the hysteresis."""
    if not 0 <= battery_pct <= 100:
        raise ValueError(f"battery_pct must be in 0..100, got {battery_pct}")
    state = replace(state, battery_pct=battery_pct)
    if not state.demoted and state.is_ch and battery_pct < threshold:
        return replace(state, demoted=True, own_key=demoted_key(state.node_id))
    if state.demoted and battery_pct >= threshold + hysteresis:
        return replace(state, demoted=False, own_key=state.node_id)
    return state
