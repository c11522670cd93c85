"""Tier-1 BLE mesh: beacons, neighbour tables and AODV-style routing.

``MeshNode`` is a pure state machine.  The host owns the clock and the radio:
it feeds decoded frames and the current time in, and gets back a list of
actions (frames to send, payloads to deliver, fragments to escalate or drop).
"""

from __future__ import annotations

import enum
import random
from collections import OrderedDict, Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, Union

from .cluster import ElectionState, PeerView
from .footprint import CAPACITY
from .fragmentation import ReassemblyBuffers, ReassemblyConflict, fragment_message
from .frames import (BROADCAST, DEPTH_SHIFT, FLAG_CH, FLAG_DEMOTING, MAX_BEACON_NEIGHBORS,
                     UNASSIGNED, Beacon, BeaconNeighbor, DataFragment, Rrep, Rreq)

BEACON_INTERVAL = 3.0
STALE_AFTER_INTERVALS = 2
REMOVE_AFTER_INTERVALS = 4
RING_TTLS = (3, 6, 12)
RING_TIMEOUTS = (1.0, 2.0, 4.0)
RREQ_JITTER = 0.050
ROUTE_LIFETIME = 30
DATA_TTL = 16
MAX_COST = 0xFFFF


def link_quality(rssi_dbm: int) -> int:
    return max(0, min(255, 4 * (rssi_dbm + 110)))


def path_cost(lqs: Sequence[int]) -> int:
    if not lqs:
        raise ValueError("path_cost needs at least one hop")
    return min(MAX_COST, sum(256 - lq for lq in lqs))


def seq_newer(a: int, b: int) -> bool:
    """True when 16-bit sequence number ``a`` is strictly newer than ``b``."""
    return 0 < ((a - b) & 0xFFFF) < 0x8000


class Status(str, enum.Enum):
    PRESENT = "present"
    STALE = "stale"


@dataclass
class NeighborEntry:
    id: int
    lq: int
    last_seen: float
    status: Status = Status.PRESENT
    advertised_key: int = 0
    is_ch: bool = False
    demoting: bool = False
    cluster: int = UNASSIGNED
    depth: int = 0
    battery_pct: int = 100
    listed_me_at: float | None = None


@dataclass
class TwoHopEntry:
    dest: int
    via: int
    lq: int
    seen: float


@dataclass
class RouteEntry:
    dest: int
    next_hop: int
    path_cost: int
    hop_count: int
    dest_seq: int
    expires: float
    via_ch: bool = False  # cached "not in this cluster" verdict; next_hop is the CH


@dataclass
class PendingDiscovery:
    dest: int
    ring_phase: int
    deadline: float
    rreq_id: int
    queued: list[tuple[DataFragment, bool]] = field(default_factory=list)


class RouteKind(str, enum.Enum):
    DIRECT = "direct"
    TWO_HOP = "two_hop"
    TABLE = "table"
    START_DISCOVERY = "start_discovery"
    ESCALATE_TO_CH = "escalate_to_ch"


@dataclass(frozen=True)
class RouteDecision:
    kind: RouteKind
    next_hop: int | None = None


# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class SendBle:
    frame: Union[Beacon, Rreq, Rrep, DataFragment]
    link_dest: int = BROADCAST
    delay: float = 0.0


@dataclass(frozen=True)
class Deliver:
    src: int
    msg_seq: int
    payload: bytes


@dataclass(frozen=True)
class Escalate:
    fragment: DataFragment
    dest: int


@dataclass(frozen=True)
class Drop:
    key: tuple[int, int, int]
    reason: str


Action = Union[SendBle, Deliver, Escalate, Drop]


class MeshNode:
    """Protocol state of one node's BLE tier."""

    def __init__(self, node_id: int, *, beacon_interval: float = BEACON_INTERVAL,
                 rng: random.Random | None = None,
                 lq_fn: Callable[[int], int] = link_quality, data_ttl: int = DATA_TTL):
        if not 0 < node_id < BROADCAST:
            raise ValueError(f"node id must be in 1..0xFFFE, got {node_id}")
        self.id = node_id
        self.beacon_interval = beacon_interval
        self.rng = rng or random.Random(node_id)
        self.lq_fn = lq_fn
        self.data_ttl = data_ttl
        self.election = ElectionState.initial(node_id)
        self.neighbors: dict[int, NeighborEntry] = {}
        self.two_hop: OrderedDict[tuple[int, int], TwoHopEntry] = OrderedDict()  # oldest first
        self.routes: dict[int, RouteEntry] = {}
        self.pending: dict[int, PendingDiscovery] = {}
        self.dup_cache: OrderedDict[tuple, int] = OrderedDict()
        self.reassembly = ReassemblyBuffers()
        # messages already handed up, so late copies are not delivered again
        self.delivered: OrderedDict[tuple[int, int], None] = OrderedDict()
        # what the last RREP this node sent was based on: ("direct",), ("two_hop", via)
        # or ("route",); lets a host check advertised costs against the real links
        self.answer_basis: tuple = ()
        self.seq = 0
        self.rreq_id = 0
        self.msg_seq = 0
        self.counters: Counter[str] = Counter()
        # set by the host while this node is a cluster head
        self.escalation_filter: Callable[[int], bool] = lambda dest: False
        self._beacon_cursor = 0

    # -- bookkeeping --------------------------------------------------------

    @property
    def is_ch(self) -> bool:
        return self.election.is_ch

    def occupancy(self) -> dict[str, int]:
        return {
            "neighbors": len(self.neighbors),
            "two_hop": len(self.two_hop),
            "routes": len(self.routes),
            "pending_rreq": len(self.pending),
            "duplicate_cache": len(self.dup_cache),
            "reassembly": len(self.reassembly),
            "delivered": len(self.delivered),
            "tx_queue": self._queued_count(),
        }

    def _queued_count(self) -> int:
        return sum(len(p.queued) for p in self.pending.values())

    def _remember(self, key: tuple, value: int = 0) -> None:
        self.dup_cache[key] = value
        self.dup_cache.move_to_end(key)
        while len(self.dup_cache) > CAPACITY["duplicate_cache"]:
            self.dup_cache.popitem(last=False)

    def next_deadline(self) -> float | None:
        times = [p.deadline for p in self.pending.values()]
        reassembly = self.reassembly.next_deadline()
        if reassembly is not None:
            times.append(reassembly)
        return min(times) if times else None

    # -- beacons ------------------------------------------------------------

    def make_beacon(self, now: float) -> Beacon:
        """Beacon advertising up to four PRESENT neighbours, rotating through the table."""
        present = sorted(n for n, e in self.neighbors.items() if e.status is Status.PRESENT)
        listed: list[int] = []
        if present:
            start = self._beacon_cursor % len(present)
            listed = (present[start:] + present[:start])[:MAX_BEACON_NEIGHBORS]
            self._beacon_cursor = start + MAX_BEACON_NEIGHBORS
        e = self.election
        flags = (FLAG_CH if e.is_ch else 0) | (FLAG_DEMOTING if e.demoted else 0)
        flags |= min(e.depth, 3) << DEPTH_SHIFT
        return Beacon(
            node=self.id,
            advertised_key=e.own_key,
            flags=flags,
            battery_pct=e.battery_pct,
            cluster=e.cluster,
            neighbors=tuple(BeaconNeighbor(n, self.neighbors[n].lq) for n in sorted(listed)),
        )

    def process_beacon(self, beacon: Beacon, rssi_dbm: int, now: float) -> bool:
        """Absorb a neighbour beacon; True when the sender's election view changed."""
        sender = beacon.node
        if sender == self.id or sender in (UNASSIGNED, BROADCAST):
            return False
        lq = self.lq_fn(rssi_dbm)
        entry = self.neighbors.get(sender)
        before = None if entry is None else self._view_key(entry, now)
        if entry is None:
            if len(self.neighbors) >= CAPACITY["neighbors"]:
                self._evict_neighbor()
            entry = NeighborEntry(id=sender, lq=lq, last_seen=now)
            self.neighbors[sender] = entry
        entry.lq = lq
        entry.last_seen = now
        entry.status = Status.PRESENT
        entry.advertised_key = beacon.advertised_key
        entry.is_ch = beacon.is_ch
        entry.demoting = beacon.demoting
        entry.cluster = beacon.cluster
        entry.depth = beacon.depth
        entry.battery_pct = beacon.battery_pct
        for n in beacon.neighbors:
            if n.node == self.id:
                entry.listed_me_at = now
                continue
            key = (n.node, sender)
            if key in self.two_hop:
                self.two_hop.move_to_end(key)
            elif len(self.two_hop) >= CAPACITY["two_hop"]:
                self.two_hop.popitem(last=False)
            self.two_hop[key] = TwoHopEntry(dest=n.node, via=sender, lq=n.lq, seen=now)
        return before != self._view_key(entry, now)

    def _view_key(self, e: NeighborEntry, now: float) -> tuple:
        return (e.advertised_key, e.is_ch, e.demoting, e.cluster, e.depth, e.status,
                self.is_mutual(e, now))

    def _evict_neighbor(self) -> None:
        stale = [e for e in self.neighbors.values() if e.status is Status.STALE]
        pool = stale or list(self.neighbors.values())
        victim = min(pool, key=lambda e: (e.lq, e.id))
        self._remove_neighbor(victim.id)

    def _remove_neighbor(self, node: int) -> None:
        del self.neighbors[node]
        for dest in [d for d, r in self.routes.items() if r.next_hop == node and not r.via_ch]:
            del self.routes[dest]
        for key in [k for k in self.two_hop if k[1] == node]:
            del self.two_hop[key]

    def expire_neighbors(self, now: float) -> None:
        stale_after = STALE_AFTER_INTERVALS * self.beacon_interval
        remove_after = REMOVE_AFTER_INTERVALS * self.beacon_interval
        for node, entry in list(self.neighbors.items()):
            age = now - entry.last_seen
            if age >= remove_after:
                self._remove_neighbor(node)
            elif age >= stale_after:
                entry.status = Status.STALE
            else:
                entry.status = Status.PRESENT
        for key in [k for k, t in self.two_hop.items() if now - t.seen >= remove_after]:
            del self.two_hop[key]
        for dest in [d for d, r in self.routes.items() if r.expires <= now]:
            del self.routes[dest]

    def is_mutual(self, entry: NeighborEntry, now: float) -> bool:
        return (entry.status is Status.PRESENT and entry.listed_me_at is not None
                and now - entry.listed_me_at < REMOVE_AFTER_INTERVALS * self.beacon_interval)

    def peer_views(self, now: float) -> list[PeerView]:
        return [
            PeerView(node=e.id, key=e.advertised_key, is_ch=e.is_ch, demoting=e.demoting,
                     cluster=e.cluster, depth=e.depth,
                     present=e.status is Status.PRESENT, mutual=self.is_mutual(e, now))
            for e in self.neighbors.values()
        ]

    # -- route resolution ---------------------------------------------------

    def _present(self, node: int) -> NeighborEntry | None:
        e = self.neighbors.get(node)
        return e if e is not None and e.status is Status.PRESENT else None

    def best_two_hop(self, dest: int, exclude: Iterable[int] = ()) -> tuple[int, int, int] | None:
        """(combined cost, via, lq via->dest) of the cheapest two-hop path, if any."""
        excluded = set(exclude)
        best = None
        for (d, via), t in self.two_hop.items():
            if d != dest or via in excluded:
                continue
            hop1 = self._present(via)
            if hop1 is None:
                continue
            cand = ((256 - hop1.lq) + (256 - t.lq), via, t.lq)
            if best is None or cand[:2] < best[:2]:
                best = cand
        return best

    def _valid_route(self, dest: int, now: float) -> RouteEntry | None:
        r = self.routes.get(dest)
        if r is None or r.expires <= now:
            return None
        if not r.via_ch and self._present(r.next_hop) is None:
            return None
        return r

    def resolve_route(self, dest: int, now: float) -> RouteDecision:
        if dest == self.id:
            raise ValueError("cannot route to self")
        if self._present(dest) is not None:
            return RouteDecision(RouteKind.DIRECT, dest)
        two = self.best_two_hop(dest)
        if two is not None:
            return RouteDecision(RouteKind.TWO_HOP, two[1])
        route = self._valid_route(dest, now)
        if route is not None:
            if route.via_ch:
                return RouteDecision(RouteKind.ESCALATE_TO_CH, route.next_hop)
            return RouteDecision(RouteKind.TABLE, route.next_hop)
        if self.is_ch and self.escalation_filter(dest):
            return RouteDecision(RouteKind.ESCALATE_TO_CH, self.id)
        return RouteDecision(RouteKind.START_DISCOVERY)

    def _update_route(self, dest: int, next_hop: int, cost: int, hops: int, seq: int,
                      now: float, lifetime: float = ROUTE_LIFETIME) -> bool:
        if dest == self.id:
            return False
        cur = self._valid_route(dest, now)
        if cur is not None and not cur.via_ch:
            if seq_newer(cur.dest_seq, seq):
                return False
            if seq == cur.dest_seq:
                if (cost, hops, next_hop) > (cur.path_cost, cur.hop_count, cur.next_hop):
                    return False
                if (cost, hops, next_hop) == (cur.path_cost, cur.hop_count, cur.next_hop):
                    cur.expires = max(cur.expires, now + lifetime)
                    return False
        if dest not in self.routes and len(self.routes) >= CAPACITY["routes"]:
            victim = min(self.routes.values(), key=lambda r: (r.expires, r.dest))
            del self.routes[victim.dest]
        self.routes[dest] = RouteEntry(dest=dest, next_hop=next_hop, path_cost=cost,
                                       hop_count=hops, dest_seq=seq, expires=now + lifetime)
        return True

    # -- data plane ---------------------------------------------------------

    def originate(self, dst: int, payload: bytes, now: float) -> tuple[int, list[Action]]:
        """Fragment and send a new message; returns its sequence number and the actions."""
        if dst == self.id:
            raise ValueError("cannot send a message to self")
        self.msg_seq = (self.msg_seq + 1) & 0xFFFF
        seq = self.msg_seq
        actions: list[Action] = []
        for frag in fragment_message(self.id, dst, seq, payload, ttl=self.data_ttl):
            self._remember(("data", frag.src, frag.msg_seq, frag.frag_index))
            actions += self._route_out(frag, now)
        return seq, actions

    def forward_data(self, frag: DataFragment, now: float) -> list[Action]:
        """Handle a data fragment link-addressed to this node."""
        key = ("data", frag.src, frag.msg_seq, frag.frag_index)
        if key in self.dup_cache:
            self.counters["data_duplicate"] += 1
            return [Drop(frag.key, "duplicate")]
        self._remember(key)
        if frag.dst == self.id:
            return self._reassemble(frag, now)
        if frag.ttl == 0:
            self.counters["data_ttl"] += 1
            return [Drop(frag.key, "ttl")]
        return self._route_out(replace(frag, ttl=frag.ttl - 1), now)

    def inject(self, frag: DataFragment, now: float) -> list[Action]:
        """Route a fragment that arrived over the backbone into this cluster."""
        key = ("data", frag.src, frag.msg_seq, frag.frag_index)
        if key in self.dup_cache:
            return [Drop(frag.key, "duplicate")]
        self._remember(key)
        if frag.dst == self.id:
            return self._reassemble(frag, now)
        return self._route_out(replace(frag, to_ch=False), now, from_backbone=True)

    def _reassemble(self, frag: DataFragment, now: float) -> list[Action]:
        if (frag.src, frag.msg_seq) in self.delivered:
            self.counters["late_duplicate"] += 1
            return [Drop(frag.key, "duplicate")]
        actions: list[Action] = []
        try:
            payload = self.reassembly.add(frag, now)
        except ReassemblyConflict:
            self.counters["reassembly_conflict"] += 1
            payload = None
            actions.append(Drop(frag.key, "conflict"))
        actions += self._reassembly_drops()
        if payload is not None:
            self.delivered[(frag.src, frag.msg_seq)] = None
            while len(self.delivered) > CAPACITY["delivered"]:
                self.delivered.popitem(last=False)
            actions.append(Deliver(frag.src, frag.msg_seq, payload))
        return actions

    def _reassembly_drops(self) -> list[Action]:
        out: list[Action] = []
        for (src, seq), indices in self.reassembly.take_evicted():
            self.counters["reassembly_evicted"] += 1
            out += [Drop((src, seq, i), "reassembly_timeout") for i in indices]
        return out

    def _route_out(self, frag: DataFragment, now: float,
                   from_backbone: bool = False) -> list[Action]:
        if frag.to_ch:
            if self.is_ch:
                return [Escalate(replace(frag, to_ch=False), frag.dst)]
            target = self.election.cluster
            if target in (UNASSIGNED, BROADCAST, self.id):
                return [Drop(frag.key, "no_route")]
            decision = self.resolve_route(target, now)
        else:
            target = frag.dst
            decision = self.resolve_route(target, now)
            if decision.kind is RouteKind.ESCALATE_TO_CH:
                if from_backbone:
                    return [Drop(frag.key, "no_route")]
                if self.is_ch:
                    return [Escalate(frag, frag.dst)]
                return self._route_out(replace(frag, to_ch=True), now)
        if decision.kind in (RouteKind.DIRECT, RouteKind.TWO_HOP, RouteKind.TABLE):
            return [SendBle(frag, decision.next_hop)]
        if decision.kind is RouteKind.ESCALATE_TO_CH:
            # route toward our own head is cached as remote; nothing sensible left
            return [Drop(frag.key, "no_route")]
        return self._queue_for_discovery(target, frag, from_backbone, now)

    def _queue_for_discovery(self, target: int, frag: DataFragment, from_backbone: bool,
                             now: float) -> list[Action]:
        if self._queued_count() >= CAPACITY["tx_queue"]:
            self.counters["tx_queue_full"] += 1
            return [Drop(frag.key, "queue_full")]
        pending = self.pending.get(target)
        actions: list[Action] = []
        if pending is None:
            if len(self.pending) >= CAPACITY["pending_rreq"]:
                self.counters["discovery_limit"] += 1
                return [Drop(frag.key, "queue_full")]
            pending = PendingDiscovery(dest=target, ring_phase=0,
                                       deadline=now + RING_TIMEOUTS[0], rreq_id=0)
            self.pending[target] = pending
            actions.append(self._issue_rreq(pending))
        pending.queued.append((frag, from_backbone))
        return actions

    # -- discovery ----------------------------------------------------------

    def _issue_rreq(self, pending: PendingDiscovery) -> SendBle:
        self.seq = (self.seq + 1) & 0xFFFF
        self.rreq_id = (self.rreq_id + 1) & 0xFF
        pending.rreq_id = self.rreq_id
        known = self.routes.get(pending.dest)
        dest_seq = known.dest_seq if known is not None and not known.via_ch else 0
        self._remember(("rreq", self.id, self.rreq_id), 0)
        self.counters["rreq_originated"] += 1
        return SendBle(Rreq(rreq_id=self.rreq_id, origin=self.id, origin_seq=self.seq,
                            dest=pending.dest, dest_seq=dest_seq, hop_count=0, path_cost=0,
                            ttl=RING_TTLS[pending.ring_phase]), BROADCAST)

    def discovery_tick(self, now: float) -> list[Action]:
        actions = self._reassembly_drops()
        self.reassembly.expire(now)
        actions += self._reassembly_drops()
        for dest in sorted(self.pending):
            pending = self.pending[dest]
            if now < pending.deadline:
                continue
            if self.resolve_route(dest, now).kind in (RouteKind.DIRECT, RouteKind.TWO_HOP,
                                                      RouteKind.TABLE):
                actions += self._flush(dest, now)
                continue
            if pending.ring_phase < len(RING_TTLS) - 1:
                pending.ring_phase += 1
                pending.deadline = now + RING_TIMEOUTS[pending.ring_phase]
                actions.append(self._issue_rreq(pending))
                continue
            del self.pending[dest]
            self.counters["discovery_exhausted"] += 1
            actions += self._exhausted(dest, pending, now)
        return actions

    def _exhausted(self, dest: int, pending: PendingDiscovery, now: float) -> list[Action]:
        actions: list[Action] = []
        escalating = [(f, fb) for f, fb in pending.queued if not f.to_ch and not fb]
        for frag, from_backbone in pending.queued:
            if frag.to_ch or from_backbone:
                actions.append(Drop(frag.key, "no_route"))
        if not escalating:
            return actions
        if self.is_ch:
            return actions + [Escalate(f, f.dst) for f, _ in escalating]
        ch = self.election.cluster
        if ch not in (UNASSIGNED, BROADCAST, self.id):
            if dest not in self.routes and len(self.routes) >= CAPACITY["routes"]:
                victim = min(self.routes.values(), key=lambda r: (r.expires, r.dest))
                del self.routes[victim.dest]
            self.routes[dest] = RouteEntry(dest=dest, next_hop=ch, path_cost=0, hop_count=0,
                                           dest_seq=0, expires=now + ROUTE_LIFETIME, via_ch=True)
        for frag, _ in escalating:
            actions += self._route_out(replace(frag, to_ch=True), now)
        return actions

    def _flush(self, dest: int, now: float) -> list[Action]:
        pending = self.pending.pop(dest, None)
        if pending is None:
            return []
        actions: list[Action] = []
        for frag, from_backbone in pending.queued:
            actions += self._route_out(frag, now, from_backbone=from_backbone)
        return actions

    def _cached_answer(self, dest: int, dest_seq: int, exclude: int,
                       now: float) -> tuple[int, int, int] | None:
        """(cost, hops, seq) from this node to ``dest`` good enough to answer an RREQ."""
        if dest_seq == 0:
            direct = self._present(dest)
            if direct is not None:
                self.answer_basis = ("direct",)
                return 256 - direct.lq, 1, 0
            two = self.best_two_hop(dest, exclude=(exclude,))
            if two is not None:
                self.answer_basis = ("two_hop", two[1])
                return two[0], 2, 0
        r = self._valid_route(dest, now)
        if r is None or r.via_ch or r.next_hop == exclude:
            return None
        if dest_seq == 0 or r.dest_seq == dest_seq or seq_newer(r.dest_seq, dest_seq):
            self.answer_basis = ("route",)
            return r.path_cost, r.hop_count, r.dest_seq
        return None

    def handle_rreq(self, rreq: Rreq, sender: int, rssi_dbm: int, now: float) -> list[Action]:
        if rreq.origin == self.id:
            return []
        cost = min(MAX_COST, rreq.path_cost + 256 - self.lq_fn(rssi_dbm))
        hops = min(0xFF, rreq.hop_count + 1)
        key = ("rreq", rreq.origin, rreq.rreq_id)
        prev = self.dup_cache.get(key)
        if prev is not None and cost >= prev:
            self.counters["rreq_duplicate"] += 1
            return []
        self._remember(key, cost)
        self._update_route(rreq.origin, sender, cost, hops, rreq.origin_seq, now)
        if rreq.dest == self.id:
            if rreq.dest_seq and not seq_newer(self.seq, rreq.dest_seq):
                self.seq = (rreq.dest_seq + 1) & 0xFFFF
            return [SendBle(Rrep(origin=rreq.origin, dest=self.id, dest_seq=self.seq,
                                 hop_count=0, path_cost=0, lifetime=ROUTE_LIFETIME,
                                 rreq_id=rreq.rreq_id), sender)]
        answer = self._cached_answer(rreq.dest, rreq.dest_seq, sender, now)
        if answer is not None:
            a_cost, a_hops, a_seq = answer
            self.counters["rrep_from_cache"] += 1
            return [SendBle(Rrep(origin=rreq.origin, dest=rreq.dest, dest_seq=a_seq,
                                 hop_count=a_hops, path_cost=a_cost, lifetime=ROUTE_LIFETIME,
                                 rreq_id=rreq.rreq_id), sender)]
        if rreq.ttl > 1:
            return [SendBle(replace(rreq, ttl=rreq.ttl - 1, hop_count=hops, path_cost=cost),
                            BROADCAST, delay=self.rng.uniform(0.0, RREQ_JITTER))]
        return []

    def handle_rrep(self, rrep: Rrep, sender: int, rssi_dbm: int, now: float) -> list[Action]:
        cost = min(MAX_COST, rrep.path_cost + 256 - self.lq_fn(rssi_dbm))
        hops = min(0xFF, rrep.hop_count + 1)
        self._update_route(rrep.dest, sender, cost, hops, rrep.dest_seq, now,
                           lifetime=max(1, rrep.lifetime))
        if rrep.origin == self.id:
            if self._valid_route(rrep.dest, now) is None:
                return []
            return self._flush(rrep.dest, now)
        reverse = self._valid_route(rrep.origin, now)
        if reverse is None or reverse.via_ch:
            self.counters["rrep_no_reverse_route"] += 1
            return []
        if rrep.ttl <= 1:
            self.counters["rrep_ttl"] += 1
            return []
        route = self._valid_route(rrep.dest, now)
        if route is None or route.via_ch:
            return []
        # advertise the route actually held so upstream costs match the forwarding path
        key = ("rrep", rrep.origin, rrep.dest, rrep.rreq_id)
        prev = self.dup_cache.get(key)
        if prev is not None and route.path_cost >= prev:
            return []
        self._remember(key, route.path_cost)
        self.answer_basis = ("route",)
        return [SendBle(replace(rrep, hop_count=route.hop_count, path_cost=route.path_cost,
                                dest_seq=route.dest_seq, ttl=rrep.ttl - 1), reverse.next_hop)]
