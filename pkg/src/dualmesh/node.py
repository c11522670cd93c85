"""One dual-radio device: the BLE mesh engine plus its LoRa backbone state."""

from __future__ import annotations

import random
from typing import Callable

from .backbone import Backbone, ListenSchedule
from .blemesh import BEACON_INTERVAL, MeshNode, Status, link_quality
from .cluster import ElectionState, apply_battery_policy, evaluate_role


class DualRadioNode:
    def __init__(self, node_id: int, *, beacon_interval: float = BEACON_INTERVAL,
                 rng: random.Random | None = None, lq_fn: Callable[[int], int] = link_quality,
                 schedule: ListenSchedule | None = None, battery_pct: int = 100):
        self.id = node_id
        self.mesh = MeshNode(node_id, beacon_interval=beacon_interval, rng=rng, lq_fn=lq_fn)
        self.mesh.election = ElectionState.initial(node_id, battery_pct)
        self.backbone = Backbone(node_id, schedule=schedule)
        self.backbone.set_role(self.mesh.is_ch, 0.0)
        self._now = 0.0
        self.mesh.escalation_filter = lambda dest: self.backbone.knows_remote(dest, self._now)

    def clock(self, now: float) -> None:
        self._now = now

    @property
    def election(self) -> ElectionState:
        return self.mesh.election

    @property
    def is_ch(self) -> bool:
        return self.mesh.is_ch

    @property
    def cluster(self) -> int:
        return self.mesh.election.cluster

    def occupancy(self) -> dict[str, int]:
        return {**self.mesh.occupancy(), **self.backbone.occupancy()}

    def update_election(self, now: float) -> bool:
        """Re-run election; True when anything a beacon advertises changed."""
        old = self.mesh.election
        new = evaluate_role(old, self.mesh.peer_views(now), now)
        self.mesh.election = new
        self.backbone.set_role(new.is_ch, now)
        return (new.role, new.cluster, new.depth, new.own_key) != (
            old.role, old.cluster, old.depth, old.own_key)

    def set_battery(self, pct: int, now: float) -> bool:
        old = self.mesh.election
        self.mesh.election = apply_battery_policy(old, pct)
        changed = self.mesh.election.demoted != old.demoted
        return self.update_election(now) or changed

    def cluster_members(self, now: float) -> list[int]:
        """Nodes this head can vouch for: neighbours that joined it and their neighbours."""
        mesh = self.mesh
        members = {n for n, e in mesh.neighbors.items()
                   if e.status is Status.PRESENT and e.cluster == self.id}
        foreign = {n for n, e in mesh.neighbors.items() if e.cluster != self.id}
        reach = {t.dest for t in mesh.two_hop.values() if t.via in members}
        return sorted((members | reach) - foreign - {self.id})
