"""Deterministic discrete-event engine hosting the node state machines.

Events are ordered by (time, node id, insertion sequence).  All randomness
comes from ``random.Random`` streams seeded from the scenario seed, so a run
is a pure function of its configuration.

Message accounting follows every copy of every fragment.  A transmission
records, per fragment it carries, the chain of transmission ids that brought
that copy there; on delivery the union of those chains gives the message's
transmission count, summed airtime (``latency``) and energy.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable

from ..analytics import (PAPER_AIRTIMES, LoraPhyConfig, TrafficParams, ble_coded_airtime,
                         inter_cluster_ratio, lora_time_on_air)
from ..backbone import ListenSchedule, in_listen_window
from ..blemesh import MAX_COST, Deliver, Drop, Escalate, SendBle, link_quality
from ..cluster import Role
from ..footprint import CAPACITY, RAM_BUDGET, state_footprint
from ..frames import (BROADCAST, MAX_FRAGMENT_PAYLOAD, MAX_FRAGMENTS, Beacon, DataFragment,
                      FrameError, LoraFrame, Rrep, Rreq, decode_frame, decode_lora_frame,
                      encode_frame, lora_frame_size)
from ..node import DualRadioNode
from .channel import Outcome, Radio, Topology, Transmission, propagate
from .metrics import MessageRecord, MetricsReport, NodeEnergy, RoleChange, RunInfo
from .scenario import ScenarioConfig, ScenarioError
from .traffic import generate_traffic

BLE_MIN_SPACING = 0.100
BLE_RANDOM_DELAY = 0.010
BEACON_JITTER = 0.050
TRIGGER_SPACING = 0.500
LORA_BACKOFF = 0.050  # extra random wait after sensing a busy backbone channel

# event kinds
BEACON, TRIGGER, BLE_START, BLE_END, LORA_START, LORA_END = range(6)
WAKE, FLUSH, ORIGINATE, BATTERY, WINDOW, SNAPSHOT = range(6, 12)


class InvariantViolation(RuntimeError):
    pass


@dataclass
class _MsgState:
    record: MessageRecord
    payload: bytes
    frag_count: int
    live: int = 0
    reasons: Counter = field(default_factory=Counter)


@dataclass
class _Runtime:
    node: DualRadioNode
    rng: random.Random
    ble_queue: deque = field(default_factory=deque)
    ble_scheduled: bool = False
    ble_next_allowed: float = 0.0
    lora_queue: deque = field(default_factory=deque)
    lora_scheduled: bool = False
    lora_busy_until: float = 0.0
    last_beacon: float = -math.inf
    trigger_pending: bool = False
    wake_at: float = math.inf
    flush_at: float = math.inf
    ch_since: float | None = None
    mutual: frozenset = frozenset()


def listen_time(schedule: ListenSchedule, t0: float, t1: float) -> float:
    """Total listen-window time inside [t0, t1]."""
    if t1 <= t0:
        return 0.0
    p, w, off = schedule.period, schedule.window, schedule.offset
    k0 = math.floor((t0 - off) / p)
    k1 = math.floor((t1 - off) / p)
    parts = []
    for k in range(k0, k1 + 1):
        lo = max(t0, off + k * p)
        hi = min(t1, off + k * p + w)
        if hi > lo:
            parts.append(hi - lo)
    return math.fsum(parts)


class Simulation:
    def __init__(self, config: ScenarioConfig, *, lq_fn: Callable[[int], int] = link_quality,
                 topology=None):
        self.config = config
        self.lq_fn = lq_fn
        self.schedule = ListenSchedule(config.listen_period, config.listen_window, 0.0)
        self.phy = LoraPhyConfig.for_sf(config.spreading_factor, config.lora_bandwidth)
        largest = self.lora_airtime(lora_frame_size([MAX_FRAGMENT_PAYLOAD] * MAX_FRAGMENTS))
        if largest > config.listen_window:
            raise ScenarioError(
                f"a full LoRa frame needs {largest:.3f} s, longer than the "
                f"{config.listen_window:g} s listen window", field="listen_window")
        if topology is None:
            topology = Topology(
                {n.id: (n.x, n.y) for n in config.nodes},
                {Radio.BLE: config.ble_range, Radio.LORA: config.lora_range},
            )
        elif sorted(topology.nodes) != sorted(n.id for n in config.nodes):
            raise ScenarioError("topology nodes differ from the scenario's nodes", field="nodes")
        self.topology = topology
        self.rt: dict[int, _Runtime] = {}
        for spec in sorted(config.nodes, key=lambda n: n.id):
            rng = random.Random(f"{config.seed}:node:{spec.id}")
            node = DualRadioNode(spec.id, beacon_interval=config.beacon_interval,
                                 rng=random.Random(f"{config.seed}:mesh:{spec.id}"),
                                 lq_fn=lq_fn, schedule=self.schedule,
                                 battery_pct=spec.battery_pct)
            self.rt[spec.id] = _Runtime(node=node, rng=rng)
        self.rng = random.Random(f"{config.seed}:engine")
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._tx_id = 0
        self.transmissions: list[Transmission] = []
        self._recent = {Radio.BLE: deque(), Radio.LORA: deque()}
        self.held: dict[tuple[int, tuple[int, int, int]], tuple[int, ...]] = {}
        self.msgs: dict[tuple[int, int], _MsgState] = {}
        self.ledger = {n: NodeEnergy(node=n) for n in self.rt}
        self.roles: list[RoleChange] = []
        self.counters: Counter[str] = Counter()
        self.quiescence = 0.0
        self.expected_alpha = math.nan
        self.traffic_membership: dict[int, int] | None = None
        self._woke_at: tuple[int, float] | None = None
        # reference path costs: what each installed route should cost on the real links
        self.route_truth: dict[tuple[int, int], int] = {}
        self.path_cost_checks: Counter[str] = Counter()
        self._truth_ctx: int | None = None
        self.observers: list[Callable[[Simulation], None]] = []

    # -- radio timing -------------------------------------------------------

    def ble_airtime(self, nbytes: int) -> float:
        if self.config.ble_airtime is not None:
            return self.config.ble_airtime
        if self.config.airtime_mode == "paper":
            return PAPER_AIRTIMES.ble
        return ble_coded_airtime(nbytes)

    def lora_airtime(self, nbytes: int) -> float:
        if self.config.lora_airtime is not None:
            return self.config.lora_airtime
        if self.config.airtime_mode == "paper":
            return PAPER_AIRTIMES.lora(self.config.spreading_factor)
        return lora_time_on_air(self.phy, nbytes)

    # -- event queue --------------------------------------------------------

    def _push(self, time: float, node: int, kind: int, data=None) -> None:
        heapq.heappush(self._heap, (time, node, self._seq, kind, data))
        self._seq += 1

    def run(self) -> MetricsReport:
        cfg = self.config
        for n, rt in self.rt.items():
            self._log_role(n)
            rt.ch_since = 0.0
            self._push(rt.rng.uniform(0.0, cfg.beacon_interval), n, BEACON)
        for m in cfg.messages:
            self._push(m.time, m.src, ORIGINATE, (m.dst, m.payload_bytes, True, None))
        for b in cfg.battery_events:
            self._push(b.time, b.node, BATTERY, b.pct)
        if cfg.traffic is not None:
            self._push(cfg.traffic_start, 0, SNAPSHOT)
        self._push(0.0, 0, WINDOW)
        handlers = {
            BEACON: self._on_beacon, TRIGGER: self._on_trigger, BLE_START: self._on_ble_start,
            BLE_END: self._on_ble_end, LORA_START: self._on_lora_start,
            LORA_END: self._on_lora_end, WAKE: self._on_wake, FLUSH: self._on_flush,
            ORIGINATE: self._on_originate, BATTERY: self._on_battery, WINDOW: self._on_window,
            SNAPSHOT: self._on_snapshot,
        }
        while self._heap:
            time, node, _, kind, data = heapq.heappop(self._heap)
            if time > cfg.duration:
                break
            if time < self.now:
                raise InvariantViolation(f"event at {time} processed after {self.now}")
            self.now = time
            if node:
                self.rt[node].node.clock(time)
            handlers[kind](node, data)
            for obs in self.observers:
                obs(self)
        self.now = max(self.now, cfg.duration)
        return self._report()

    # -- helpers ------------------------------------------------------------

    def _log_role(self, n: int) -> None:
        e = self.rt[n].node.election
        self.roles.append(RoleChange(self.now, n, e.role.value, e.cluster))

    def _copy_born(self, key: tuple[int, int, int], count: int = 1) -> None:
        msg = self.msgs.get(key[:2])
        if msg is not None:
            msg.live += count

    def _copy_died(self, key: tuple[int, int, int], reason: str) -> None:
        msg = self.msgs.get(key[:2])
        if msg is None:
            return
        msg.live -= 1
        msg.reasons[reason] += 1
        if msg.live < 0:
            raise InvariantViolation(f"negative copy count for message {key[:2]}")

    def _process(self, n: int, actions) -> None:
        rt = self.rt[n]
        for a in actions:
            if isinstance(a, SendBle):
                self._enqueue_ble(n, a.frame, a.link_dest, a.delay)
            elif isinstance(a, Deliver):
                self._deliver(n, a)
            elif isinstance(a, Escalate):
                self._escalate(n, a)
            elif isinstance(a, Drop):
                self._copy_died(a.key, a.reason)
            else:
                raise InvariantViolation(f"unknown action {a!r}")
        deadline = rt.node.mesh.next_deadline()
        if deadline is not None and deadline < rt.wake_at:
            if deadline <= self.now and self._heap and self._woke_at == (n, self.now):
                raise InvariantViolation(f"node {n} keeps asking to wake at {self.now}")
            rt.wake_at = deadline
            self._push(max(deadline, self.now), n, WAKE)

    def _neighbors_changed(self, n: int) -> None:
        rt = self.rt[n]
        mesh = rt.node.mesh
        mutual = frozenset(e.id for e in mesh.neighbors.values() if mesh.is_mutual(e, self.now))
        if mutual != rt.mutual:
            rt.mutual = mutual
            self.quiescence = self.now
        self._reelect(n, rt.node.update_election)

    def _reelect(self, n: int, step: Callable[[float], bool]) -> None:
        rt = self.rt[n]
        old = rt.node.election
        if not step(self.now):
            return
        new = rt.node.election
        if (old.role, old.cluster) != (new.role, new.cluster):
            self._log_role(n)
        if old.role is Role.CH and new.role is not Role.CH:
            self._close_listen(n)
            for frag in rt.node.backbone.discard_queue():
                self._copy_died(frag.key, "undeliverable")
        elif new.role is Role.CH and old.role is not Role.CH:
            rt.ch_since = self.now
        if self.now - rt.last_beacon >= TRIGGER_SPACING:
            self._send_beacon(n)
        elif not rt.trigger_pending:
            rt.trigger_pending = True
            self._push(rt.last_beacon + TRIGGER_SPACING, n, TRIGGER)

    def _close_listen(self, n: int) -> None:
        rt = self.rt[n]
        if rt.ch_since is None:
            return
        t = listen_time(self.schedule, rt.ch_since, min(self.now, self.config.duration))
        ledger = self.ledger[n]
        ledger.listen_time += t
        ledger.lora_listen_energy = (self.config.lora_rx_current_ma * self.config.supply_voltage
                                     * ledger.listen_time / 1000.0)
        rt.ch_since = None

    # -- beacons and timers -------------------------------------------------

    def _send_beacon(self, n: int) -> None:
        rt = self.rt[n]
        rt.last_beacon = self.now
        self._enqueue_ble(n, rt.node.mesh.make_beacon(self.now), BROADCAST, 0.0)

    def _on_beacon(self, n: int, _data) -> None:
        rt = self.rt[n]
        rt.node.mesh.expire_neighbors(self.now)
        self._neighbors_changed(n)
        self._send_beacon(n)
        if self.config.check_invariants:
            used = state_footprint({**rt.node.occupancy(), "lora_tx_queue": len(rt.lora_queue)})
            if used > RAM_BUDGET:
                raise InvariantViolation(f"node {n} state uses {used} B > {RAM_BUDGET} B")
        jitter = rt.rng.uniform(-BEACON_JITTER, BEACON_JITTER)
        self._push(self.now + self.config.beacon_interval + jitter, n, BEACON)

    def _on_trigger(self, n: int, _data) -> None:
        rt = self.rt[n]
        rt.trigger_pending = False
        if self.now - rt.last_beacon >= TRIGGER_SPACING - 1e-12:
            self._send_beacon(n)

    def _on_wake(self, n: int, _data) -> None:
        rt = self.rt[n]
        self._woke_at = (n, self.now)
        if self.now >= rt.wake_at:
            rt.wake_at = math.inf
        self._process(n, rt.node.mesh.discovery_tick(self.now))

    def schedule_battery(self, time: float, node: int, pct: int) -> None:
        """Queue a battery reading for ``node``; usable while the run is in progress."""
        if time < self.now:
            raise ValueError("cannot schedule a battery event in the past")
        self._push(time, node, BATTERY, pct)

    def _on_battery(self, n: int, pct: int) -> None:
        self._reelect(n, lambda now: self.rt[n].node.set_battery(pct, now))

    # -- traffic ------------------------------------------------------------

    def _on_snapshot(self, _n: int, _data) -> None:
        cfg = self.config
        membership = {n: rt.node.cluster for n, rt in self.rt.items()}
        self.traffic_membership = membership
        clusters = len(set(membership.values()))
        params = cfg.traffic
        self.expected_alpha = inter_cluster_ratio(TrafficParams(params.beta, clusters))
        rng = random.Random(f"{cfg.seed}:traffic")
        for o in generate_traffic(params, membership, rng, start=self.now, end=cfg.duration):
            self._push(o.time, o.src, ORIGINATE, (o.dst, cfg.payload_bytes, False, o.inter_cluster))

    def _on_originate(self, n: int, data) -> None:
        dst, nbytes, scripted, inter = data
        rt = self.rt[n]
        if inter is None:
            inter = rt.node.cluster != self.rt[dst].node.cluster
        payload = bytes(rt.rng.getrandbits(8) for _ in range(nbytes))
        seq, actions = rt.node.mesh.originate(dst, payload, self.now)
        record = MessageRecord(src=n, dst=dst, seq=seq, origin_time=self.now,
                               payload_bytes=nbytes, inter_cluster=inter, scripted=scripted)
        if (n, seq) in self.msgs:
            raise InvariantViolation(f"message id ({n}, {seq}) reused within one run")
        count = math.ceil(nbytes / MAX_FRAGMENT_PAYLOAD)
        self.msgs[(n, seq)] = _MsgState(record, payload, count, live=count)
        for i in range(count):
            self.held[(n, (n, seq, i))] = ()
        self._process(n, actions)

    def _deliver(self, n: int, a: Deliver) -> None:
        msg = self.msgs.get((a.src, a.msg_seq))
        if msg is None:
            self.counters["deliver_unknown"] += 1
            return
        rec = msg.record
        if rec.fate == "delivered":
            # the destination already forgot it; count it, keep the first delivery
            self.counters["duplicate_delivery"] += 1
            return
        if n != rec.dst or a.payload != msg.payload:
            raise InvariantViolation(f"message {(a.src, a.msg_seq)} delivered corrupted")
        txs: set[int] = set()
        lora_hops = 0
        for i in range(msg.frag_count):
            path = self.held.get((n, (a.src, a.msg_seq, i)), ())
            txs.update(path)
            lora_hops = max(lora_hops, sum(self.transmissions[t].radio is Radio.LORA for t in path))
        ordered = [self.transmissions[t] for t in sorted(txs)]
        rec.fate = "delivered"
        rec.hops = "".join("L" if t.radio is Radio.LORA else "B" for t in ordered)
        rec.ble_tx = sum(t.radio is Radio.BLE for t in ordered)
        rec.lora_tx = len(ordered) - rec.ble_tx
        rec.latency = math.fsum(t.airtime for t in ordered)
        rec.energy = math.fsum(t.energy * t.meta["share"].get((a.src, a.msg_seq), 0.0)
                               for t in ordered)
        rec.delay = self.now - rec.origin_time
        rec.category = ("intra", "inter_1_lora")[lora_hops] if lora_hops < 2 else "inter_2_lora"

    # -- BLE ----------------------------------------------------------------

    def _enqueue_ble(self, n: int, frame, link_dest: int, delay: float) -> None:
        rt = self.rt[n]
        carried = {}
        truth = None
        if isinstance(frame, DataFragment):
            carried[frame.key] = self.held.get((n, frame.key), ())
        elif isinstance(frame, (Rreq, Rrep)):
            truth = self._control_truth(n, frame)
        rt.ble_queue.append((frame, link_dest, self.now + delay, carried, truth))
        self._service_ble(n)

    def _service_ble(self, n: int) -> None:
        rt = self.rt[n]
        if rt.ble_scheduled or not rt.ble_queue:
            return
        ready = rt.ble_queue[0][2]
        start = max(self.now, ready, rt.ble_next_allowed) + rt.rng.uniform(0.0, BLE_RANDOM_DELAY)
        rt.ble_scheduled = True
        self._push(start, n, BLE_START)

    def _new_tx(self, n: int, radio: Radio, data: bytes, airtime: float, link_dest: int,
                power_mw: float, carried: dict) -> Transmission:
        channel = self.rt[n].rng.randrange(self.config.ble_channels) if radio is Radio.BLE else 0
        tx = Transmission(id=self._tx_id, sender=n, radio=radio, start=self.now,
                          end=self.now + airtime, data=data, link_dest=link_dest,
                          channel=channel, energy=power_mw / 1000.0 * airtime, duration=airtime)
        self._tx_id += 1
        tx.meta["carried"] = carried
        sizes = Counter()
        for key in carried:
            sizes[key[:2]] += 1
        total = sum(sizes.values())
        tx.meta["share"] = {m: c / total for m, c in sizes.items()}
        self.transmissions.append(tx)
        recent = self._recent[radio]
        recent.append(tx)
        horizon = self.now - 2 * max(t.airtime for t in recent)
        while recent and recent[0].end < horizon:
            recent.popleft()
        ledger = self.ledger[n]
        if radio is Radio.BLE:
            ledger.ble_tx_energy += tx.energy
            ledger.ble_packets += 1
        else:
            ledger.lora_tx_energy += tx.energy
            ledger.lora_packets += 1
        return tx

    def _on_ble_start(self, n: int, _data) -> None:
        rt = self.rt[n]
        rt.ble_scheduled = False
        frame, link_dest, _, carried, truth = rt.ble_queue.popleft()
        try:
            data = encode_frame(frame)
        except FrameError as exc:
            raise InvariantViolation(f"node {n} built an invalid frame: {exc}") from None
        tx = self._new_tx(n, Radio.BLE, data, self.ble_airtime(len(data)), link_dest,
                          self.config.ble_tx_power_mw, carried)
        tx.meta["truth"] = truth
        rt.ble_next_allowed = self.now + BLE_MIN_SPACING
        self._push(tx.end, n, BLE_END, tx)
        self._service_ble(n)

    def _on_ble_end(self, n: int, tx: Transmission) -> None:
        receivers = self.topology.neighbors[Radio.BLE][n]
        outcomes = propagate(tx, self.topology, self._recent[Radio.BLE], receivers=receivers)
        frame = decode_frame(tx.data)
        topo = self.topology
        if isinstance(frame, DataFragment):
            dest = tx.link_dest
            oc = outcomes.get(dest, Outcome.OUT_OF_RANGE)
            tx.success = oc is Outcome.RECEIVED
            for key, path in tx.meta["carried"].items():
                if tx.success:
                    self.held.setdefault((dest, key), path + (tx.id,))
                else:
                    lost = oc in (Outcome.COLLISION, Outcome.BUSY)
                    self._copy_died(key, "collision" if lost else "undeliverable")
            if tx.success:
                self._process(dest, self.rt[dest].node.mesh.forward_data(frame, self.now))
            return
        heard = [r for r in receivers if outcomes[r] is Outcome.RECEIVED]
        tx.success = len(heard) == len(receivers)
        if isinstance(frame, Beacon):
            for r in heard:
                if self.rt[r].node.mesh.process_beacon(frame, topo.rssi(n, r), self.now):
                    self._neighbors_changed(r)
        elif isinstance(frame, Rreq):
            for r in heard:
                mesh = self.rt[r].node.mesh
                truth = self._extend_truth(tx, n, r)
                before = self._route_key(r, frame.origin)
                actions = mesh.handle_rreq(frame, n, topo.rssi(n, r), self.now)
                self._verify_route(r, frame.origin, n, before, truth)
                self._truth_ctx = truth
                self._process(r, actions)
                self._truth_ctx = None
                self._check_loops(r)
        elif isinstance(frame, Rrep):
            dest = tx.link_dest
            tx.success = outcomes.get(dest) is Outcome.RECEIVED
            if tx.success:
                mesh = self.rt[dest].node.mesh
                truth = self._extend_truth(tx, n, dest)
                before = self._route_key(dest, frame.dest)
                actions = mesh.handle_rrep(frame, n, topo.rssi(n, dest), self.now)
                self._verify_route(dest, frame.dest, n, before, truth)
                self._process(dest, actions)
                self._check_loops(dest)

    # -- path-cost ground truth ------------------------------------------------

    def _link_cost(self, a: int, b: int) -> int:
        return 256 - link_quality(self.topology.rssi(a, b))

    def _control_truth(self, n: int, frame) -> int | None:
        """Reference cost a control frame from ``n`` should be carrying."""
        if isinstance(frame, Rreq):
            return 0 if frame.origin == n else self._truth_ctx
        if frame.dest == n:
            return 0
        basis = self.rt[n].node.mesh.answer_basis
        if basis == ("direct",):
            return min(MAX_COST, self._link_cost(n, frame.dest))
        if basis and basis[0] == "two_hop":
            via = basis[1]
            return min(MAX_COST, self._link_cost(n, via) + self._link_cost(via, frame.dest))
        return self.route_truth.get((n, frame.dest))

    def _extend_truth(self, tx: Transmission, sender: int, receiver: int) -> int | None:
        truth = tx.meta.get("truth")
        if truth is None:
            return None
        return min(MAX_COST, truth + self._link_cost(sender, receiver))

    def _route_key(self, n: int, dest: int) -> tuple | None:
        r = self.rt[n].node.mesh.routes.get(dest)
        return None if r is None else (r.next_hop, r.path_cost, r.hop_count, r.dest_seq, r.via_ch)

    def _verify_route(self, n: int, dest: int, sender: int, before, truth: int | None) -> None:
        after = self._route_key(n, dest)
        if after is None or after == before or after[0] != sender or after[4]:
            return
        if truth is None:
            self.path_cost_checks["unverified"] += 1
            self.route_truth.pop((n, dest), None)
            return
        self.path_cost_checks["checked"] += 1
        if after[1] != truth:
            self.path_cost_checks["mismatch"] += 1
        self.route_truth[(n, dest)] = truth

    def _check_loops(self, n: int) -> None:
        if not self.config.check_invariants:
            return
        for dest in list(self.rt[n].node.mesh.routes):
            if route_loop(self, n, dest):
                raise InvariantViolation(f"routing loop toward {dest} through node {n}")

    # -- LoRa ---------------------------------------------------------------

    def _escalate(self, n: int, a: Escalate) -> None:
        rt = self.rt[n]
        msg = self.msgs.get(a.fragment.key[:2])
        if msg is not None:
            msg.record.escalated = True
        frames = rt.node.backbone.enqueue_for_backbone(rt.node.is_ch, [a.fragment], a.dest,
                                                       self.now)
        for frame in frames:
            self._enqueue_lora(n, frame)
        deadline = rt.node.backbone.flush_deadline()
        if deadline is not None and deadline != rt.flush_at:
            rt.flush_at = max(deadline, self.now)
            self._push(rt.flush_at, n, FLUSH)

    def _on_flush(self, n: int, _data) -> None:
        rt = self.rt[n]
        rt.flush_at = math.inf
        if len(rt.lora_queue) >= CAPACITY["lora_tx_queue"]:
            return  # keep packing; retried once the outbound slot frees
        frame = rt.node.backbone.flush_aggregate(self.now)
        if frame is not None:
            self._enqueue_lora(n, frame)
        deadline = rt.node.backbone.flush_deadline()
        if deadline is not None and deadline > self.now:
            rt.flush_at = deadline
            self._push(deadline, n, FLUSH)

    def _enqueue_lora(self, n: int, frame: LoraFrame, relay: bool = False,
                      count_drops: bool = True) -> bool:
        """Queue ``frame`` for the backbone radio; False when the outbound slot is taken."""
        rt = self.rt[n]
        carried = {f.key: self.held.get((n, f.key), ()) for f in frame.fragments}
        key = (frame.src_ch, frame.header.backbone_seq) if relay else None
        if len(rt.lora_queue) >= CAPACITY["lora_tx_queue"]:
            self.counters["lora_queue_full"] += 1
            if count_drops:
                for frag_key in carried:
                    self._copy_died(frag_key, "queue_full")
            return False
        rt.lora_queue.append((encode_frame(frame), carried, key))
        self._service_lora(n)
        return True

    def _suppress_relay(self, n: int, key: tuple[int, int]) -> None:
        """Drop a queued rebroadcast once another copy of the frame was heard."""
        rt = self.rt[n]
        for i, (_, carried, k) in enumerate(rt.lora_queue):
            if k == key:
                del rt.lora_queue[i]
                self.counters["lora_relay_suppressed"] += 1
                for frag_key in carried:
                    self._copy_died(frag_key, "suppressed")
                return

    def _channel_busy_until(self, n: int) -> float | None:
        """End of the latest LoRa transmission ``n`` can hear right now, if any."""
        busy = None
        for t in self._recent[Radio.LORA]:
            if t.start <= self.now < t.end and (
                    t.sender == n or self.topology.in_range(t.sender, n, Radio.LORA)):
                busy = t.end if busy is None else max(busy, t.end)
        return busy

    def _service_lora(self, n: int) -> None:
        rt = self.rt[n]
        if rt.lora_scheduled or not rt.lora_queue:
            return
        airtime = self.lora_airtime(len(rt.lora_queue[0][0]))
        lo, hi = self.schedule.next_slot(max(self.now, rt.lora_busy_until), airtime)
        rt.lora_scheduled = True
        self._push(rt.rng.uniform(lo, hi), n, LORA_START)

    def _on_lora_start(self, n: int, _data) -> None:
        rt = self.rt[n]
        rt.lora_scheduled = False
        if not rt.lora_queue:
            return
        data = rt.lora_queue[0][0]
        airtime = self.lora_airtime(len(data))
        # listen before talk, and never start a frame the window cannot hold
        busy = self._channel_busy_until(n)
        lo, hi = self.schedule.next_slot(self.now, airtime)
        if busy is not None or lo > self.now:
            after = self.now if busy is None else busy + rt.rng.uniform(0.0, LORA_BACKOFF)
            if busy is not None:
                self.counters["lora_deferred"] += 1
            lo, hi = self.schedule.next_slot(after, airtime)
            rt.lora_scheduled = True
            self._push(rt.rng.uniform(lo, hi), n, LORA_START)
            return
        data, carried, _ = rt.lora_queue.popleft()
        if rt.node.backbone.flush_deadline() is not None and rt.flush_at == math.inf:
            rt.flush_at = max(self.now, rt.node.backbone.flush_deadline())
            self._push(rt.flush_at, n, FLUSH)
        tx = self._new_tx(n, Radio.LORA, data, self.lora_airtime(len(data)), BROADCAST,
                          self.config.lora_tx_power_mw, carried)
        rt.lora_busy_until = tx.end
        self._push(tx.end, n, LORA_END, tx)
        self._service_lora(n)

    def _listening(self, r: int, tx: Transmission) -> bool:
        if not self.rt[r].node.is_ch:
            return False
        s = self.schedule
        phase = (tx.start - s.offset) % s.period
        return in_listen_window(s, tx.start) and phase + tx.airtime <= s.window + 1e-9

    def _on_lora_end(self, n: int, tx: Transmission) -> None:
        receivers = self.topology.neighbors[Radio.LORA][n]
        outcomes = propagate(tx, self.topology, self._recent[Radio.LORA], receivers=receivers,
                             listening=self._listening)
        try:
            frame = decode_lora_frame(tx.data)
        except FrameError as exc:
            raise InvariantViolation(f"undecodable backbone frame from {n}: {exc}") from None
        carried = tx.meta["carried"]
        copies = 0
        reason = "undeliverable"
        tx.success = False
        deliveries: list[tuple[int, list[DataFragment]]] = []
        for r in receivers:
            oc = outcomes[r]
            if oc in (Outcome.COLLISION, Outcome.BUSY):
                reason = "collision"
            if oc is not Outcome.RECEIVED:
                continue
            node = self.rt[r].node
            if (frame.src_ch, frame.header.backbone_seq) in node.backbone.seen:
                self._suppress_relay(r, (frame.src_ch, frame.header.backbone_seq))
            injects, relay = node.backbone.handle_lora_frame(frame, self.now)
            if frame.header.dest_ch in (r, BROADCAST):
                tx.success = True
            if not (injects or relay):
                if reason != "collision" and carried and frame.header.hop_limit == 0:
                    reason = "ttl"
                continue
            for key, path in carried.items():
                self.held.setdefault((r, key), path + (tx.id,))
            if relay is not None:
                if self._enqueue_lora(r, relay, relay=True, count_drops=False):
                    copies += 1 if relay.fragments else 0
                elif reason != "collision":
                    reason = "queue_full"
            if injects:
                copies += 1
                deliveries.append((r, injects))
        # book every new copy before any of them can be consumed
        for key in carried:
            if copies:
                self._copy_born(key, copies - 1)
            else:
                self._copy_died(key, reason)
        for r, injects in deliveries:
            mesh = self.rt[r].node.mesh
            for frag in injects:
                self._process(r, mesh.inject(frag, self.now))

    def _on_window(self, _n: int, _data) -> None:
        for n, rt in self.rt.items():
            node = rt.node
            node.backbone.directory.expire(self.now)
            if node.is_ch:
                digest = node.backbone.emit_membership_digest(True, node.cluster_members(self.now),
                                                              self.now)
                if digest is not None:
                    self._enqueue_lora(n, digest)
        self._push(self.now + self.schedule.period, 0, WINDOW)

    # -- report -------------------------------------------------------------

    def _report(self) -> MetricsReport:
        cfg = self.config
        for n in self.rt:
            self._close_listen(n)
        messages = []
        for key in sorted(self.msgs, key=lambda k: (self.msgs[k].record.origin_time, k)):
            msg = self.msgs[key]
            rec = msg.record
            if rec.fate != "delivered":
                if msg.live > 0:
                    rec.fate = "in_flight"
                elif msg.reasons["collision"]:
                    rec.fate = "dropped_collision"
                elif msg.reasons["ttl"]:
                    rec.fate = "dropped_ttl"
                else:
                    rec.fate = "undeliverable"
            messages.append(rec)
        if cfg.check_invariants:
            self._check_ledger()
        util = {}
        for radio in Radio:
            busy = math.fsum(min(t.end, cfg.duration) - t.start for t in self.transmissions
                             if t.radio is radio and t.start < cfg.duration)
            channels = cfg.ble_channels if radio is Radio.BLE else 1
            util[radio] = busy / (cfg.duration * channels)
        counters = Counter(self.counters)
        for rt in self.rt.values():
            counters.update(rt.node.mesh.counters)
            counters.update({f"backbone_{k}": v for k, v in rt.node.backbone.counters.items()})
        counters.update({f"path_cost_{k}": v for k, v in self.path_cost_checks.items()})
        run = RunInfo(
            seed=cfg.seed, duration=float(cfg.duration), airtime_mode=cfg.airtime_mode,
            node_count=len(self.rt), ble_utilization=util[Radio.BLE],
            lora_utilization=util[Radio.LORA],
            ble_frames=sum(t.radio is Radio.BLE for t in self.transmissions),
            lora_frames=sum(t.radio is Radio.LORA for t in self.transmissions),
            quiescence_time=self.quiescence, expected_alpha=self.expected_alpha,
        )
        return MetricsReport(
            run=run, messages=messages, energy=[self.ledger[n] for n in sorted(self.ledger)],
            roles=list(self.roles), counters=dict(sorted(counters.items())),
            membership={n: rt.node.cluster for n, rt in sorted(self.rt.items())},
        )

    def _check_ledger(self) -> None:
        per_node: dict[tuple[int, Radio], list[float]] = {}
        for t in self.transmissions:
            per_node.setdefault((t.sender, t.radio), []).append(t.energy)
        for n, led in self.ledger.items():
            ble = math.fsum(per_node.get((n, Radio.BLE), []))
            lora = math.fsum(per_node.get((n, Radio.LORA), []))
            if not (math.isclose(ble, led.ble_tx_energy, rel_tol=1e-9, abs_tol=1e-15)
                    and math.isclose(lora, led.lora_tx_energy, rel_tol=1e-9, abs_tol=1e-15)):
                raise InvariantViolation(f"energy ledger of node {n} disagrees with its packets")


def route_loop(sim: Simulation, start: int, dest: int) -> bool:
    """True when following valid route-table next hops from ``start`` revisits a node."""
    seen = {start}
    cur = start
    while True:
        mesh = sim.rt[cur].node.mesh
        route = mesh._valid_route(dest, sim.now)
        if route is None or route.via_ch:
            return False
        nxt = route.next_hop
        if nxt == dest or nxt not in sim.rt:
            return False
        if nxt in seen:
            return True
        seen.add(nxt)
        cur = nxt


def run_scenario(config: ScenarioConfig, **kwargs) -> MetricsReport:
    return Simulation(config, **kwargs).run()
