"""Tier-2 LoRa backbone run by cluster heads.

Cluster heads pack escalated BLE fragments into LoRa frames, flood them over
the backbone with a hop limit and duplicate suppression, and learn which head
serves which node from periodic membership digests.
"""

from __future__ import annotations

import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable

from .analytics import LoraPhyConfig, lora_time_on_air
from .footprint import CAPACITY
from .frames import (BROADCAST, HDR_FLAG_DIGEST, MAX_DIGEST_MEMBERS, MAX_FRAGMENT_PAYLOAD,
                     MAX_FRAGMENTS,
                     MAX_MESSAGE_PAYLOAD, DataFragment, InterClusterHeader, LoraFrame,
                     lora_frame_size)

HOP_LIMIT = 3
FLUSH_DELAY = 0.200
LISTEN_PERIOD = 30.0
LISTEN_WINDOW = 2.0
DIGEST_PERIOD = 60.0
DIRECTORY_EXPIRY_PERIODS = 3


class NotClusterHead(RuntimeError):
    """Backbone operation attempted by a node that is not a cluster head."""


@dataclass(frozen=True)
class ListenSchedule:
    period: float = LISTEN_PERIOD
    window: float = LISTEN_WINDOW
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.window <= self.period:
            raise ValueError("listen window must satisfy 0 < window <= period")

    @property
    def duty(self) -> float:
        return self.window / self.period

    def window_start(self, now: float) -> float:
        """Start of the period containing ``now``."""
        k = math.floor((now - self.offset) / self.period)
        return self.offset + k * self.period

    def next_slot(self, now: float, airtime: float) -> tuple[float, float] | None:
        """Earliest [lo, hi] range of start times at or after ``now`` whose frame
        ends inside a listen window; None if the frame cannot fit any window."""
        if airtime > self.window:
            return None
        start = self.window_start(now)
        lo, hi = max(now, start), start + self.window - airtime
        if lo <= hi:
            return lo, hi
        start += self.period
        return start, start + self.window - airtime


def in_listen_window(schedule: ListenSchedule, now: float) -> bool:
    return (now - schedule.offset) % schedule.period < schedule.window


@dataclass
class AggregationQueue:
    dest_ch: int | None = None
    fragments: list[DataFragment] = field(default_factory=list)
    first_at: float | None = None

    def __len__(self) -> int:
        return len(self.fragments)

    @property
    def payload_bytes(self) -> int:
        return sum(len(f.payload) for f in self.fragments)

    def fits(self, frag: DataFragment) -> bool:
        return (len(self.fragments) < MAX_FRAGMENTS
                and self.payload_bytes + len(frag.payload) <= MAX_MESSAGE_PAYLOAD)

    @property
    def full(self) -> bool:
        return len(self.fragments) >= MAX_FRAGMENTS or self.payload_bytes >= MAX_MESSAGE_PAYLOAD

    def due(self, now: float, delay: float = FLUSH_DELAY) -> bool:
        if not self.fragments:
            return False
        return self.full or now - self.first_at >= delay


class MembershipDirectory:
    """Node -> cluster head map learned from digests."""

    def __init__(self, expiry: float = DIGEST_PERIOD * DIRECTORY_EXPIRY_PERIODS,
                 capacity: int = CAPACITY["directory"]):
        self.expiry = expiry
        self.capacity = capacity
        self._entries: dict[int, tuple[int, float]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def learn(self, ch: int, members: Iterable[int], now: float) -> None:
        members = set(members)
        for node in [n for n, (c, _) in self._entries.items() if c == ch and n not in members]:
            del self._entries[node]
        for node in sorted(members):
            if node not in self._entries and len(self._entries) >= self.capacity:
                oldest = min(self._entries, key=lambda n: (self._entries[n][1], n))
                del self._entries[oldest]
            self._entries[node] = (ch, now)

    def expire(self, now: float) -> None:
        for node in [n for n, (_, t) in self._entries.items() if now - t >= self.expiry]:
            del self._entries[node]

    def lookup(self, node: int, now: float) -> int | None:
        entry = self._entries.get(node)
        if entry is None or now - entry[1] >= self.expiry:
            return None
        return entry[0]


class Backbone:
    """Backbone state of one node; only active while the node is a cluster head."""

    def __init__(self, node_id: int, *, schedule: ListenSchedule | None = None,
                 flush_delay: float = FLUSH_DELAY, digest_period: float = DIGEST_PERIOD,
                 hop_limit: int = HOP_LIMIT, settle_time: float = LISTEN_PERIOD):
        self.id = node_id
        self.schedule = schedule or ListenSchedule()
        self.flush_delay = flush_delay
        self.digest_period = digest_period
        self.hop_limit = hop_limit
        self.queue = AggregationQueue()
        self.seq = 0
        self.seen: OrderedDict[tuple[int, int], None] = OrderedDict()
        self.directory = MembershipDirectory(expiry=digest_period * DIRECTORY_EXPIRY_PERIODS)
        self.last_digest: float | None = None
        # a head waits this long in the role before advertising members
        self.settle_time = settle_time
        self.ch_since: float | None = None
        self.counters: Counter[str] = Counter()

    def occupancy(self) -> dict[str, int]:
        return {
            "backbone_queue": 1 if self.queue.fragments else 0,
            "directory": len(self.directory),
            "backbone_seen": len(self.seen),
        }

    def _mark_seen(self, key: tuple[int, int]) -> bool:
        """Record ``key``; False when it was already known."""
        if key in self.seen:
            return False
        self.seen[key] = None
        while len(self.seen) > CAPACITY["backbone_seen"]:
            self.seen.popitem(last=False)
        return True

    def knows_remote(self, dest: int, now: float) -> bool:
        ch = self.directory.lookup(dest, now)
        return ch is not None and ch != self.id

    def resolve_dest_ch(self, dest: int, now: float) -> int:
        ch = self.directory.lookup(dest, now)
        return BROADCAST if ch is None or ch == self.id else ch

    # -- aggregation --------------------------------------------------------

    def enqueue_for_backbone(self, is_ch: bool, fragments: Iterable[DataFragment], dest: int,
                             now: float) -> list[LoraFrame]:
        """Queue fragments for ``dest``'s head; returns frames that had to be flushed."""
        if not is_ch:
            raise NotClusterHead(f"node {self.id} is not a cluster head")
        dest_ch = self.resolve_dest_ch(dest, now)
        out: list[LoraFrame] = []
        for frag in fragments:
            frag = replace(frag, to_ch=False)
            if self.queue.fragments and (self.queue.dest_ch != dest_ch or not self.queue.fits(frag)):
                out.append(self._emit())
            if not self.queue.fragments:
                self.queue.dest_ch = dest_ch
                self.queue.first_at = now
            self.queue.fragments.append(frag)
            if self.queue.full:
                out.append(self._emit())
        return out

    def flush_aggregate(self, now: float, force: bool = False) -> LoraFrame | None:
        if not self.queue.fragments:
            return None
        if force or self.queue.due(now, self.flush_delay):
            return self._emit()
        return None

    def flush_deadline(self) -> float | None:
        if not self.queue.fragments:
            return None
        return self.queue.first_at + self.flush_delay

    def discard_queue(self) -> list[DataFragment]:
        dropped = self.queue.fragments
        self.queue = AggregationQueue()
        return dropped

    def _next_header(self, dest_ch: int, flags: int = 0) -> InterClusterHeader:
        self.seq = (self.seq + 1) & 0xFF
        self._mark_seen((self.id, self.seq))
        return InterClusterHeader(dest_ch=dest_ch, hop_limit=self.hop_limit, flags=flags,
                                  backbone_seq=self.seq)

    def _emit(self) -> LoraFrame:
        q = self.queue
        frame = LoraFrame(header=self._next_header(q.dest_ch), src_ch=self.id,
                          fragments=tuple(q.fragments))
        self.queue = AggregationQueue()
        self.counters["frames_emitted"] += 1
        return frame

    # -- reception ----------------------------------------------------------

    def handle_lora_frame(self, frame: LoraFrame,
                          now: float) -> tuple[list[DataFragment], LoraFrame | None]:
        """Returns (fragments to inject into the local cluster, frame to rebroadcast)."""
        if not self._mark_seen((frame.src_ch, frame.header.backbone_seq)):
            self.counters["duplicate"] += 1
            return [], None
        hdr = frame.header
        relay = None
        if hdr.hop_limit > 0:
            relay = replace(frame, header=replace(hdr, hop_limit=hdr.hop_limit - 1))
        if hdr.is_digest:
            self.directory.learn(frame.src_ch, frame.members, now)
            return [], relay
        if hdr.dest_ch == self.id:
            return list(frame.fragments), None
        if hdr.dest_ch == BROADCAST:
            return list(frame.fragments), relay
        if relay is None:
            self.counters["hop_limit"] += 1
        return [], relay

    # -- digests ------------------------------------------------------------

    def set_role(self, is_ch: bool, now: float) -> None:
        if not is_ch:
            self.ch_since = None
        elif self.ch_since is None:
            self.ch_since = now

    def digest_due(self, is_ch: bool, now: float) -> bool:
        if not is_ch:
            return False
        if self.ch_since is not None and now - self.ch_since < self.settle_time:
            return False
        return self.last_digest is None or now - self.last_digest >= self.digest_period

    def emit_membership_digest(self, is_ch: bool, members: Iterable[int],
                               now: float) -> LoraFrame | None:
        if not self.digest_due(is_ch, now):
            return None
        ids = sorted(set(members) - {self.id})
        if len(ids) > MAX_DIGEST_MEMBERS:
            self.counters["digest_truncated"] += 1
            ids = ids[:MAX_DIGEST_MEMBERS]
        self.last_digest = now
        return LoraFrame(header=self._next_header(BROADCAST, HDR_FLAG_DIGEST), src_ch=self.id,
                         members=tuple(ids))


def aggregation_airtime_ratio(phy: LoraPhyConfig, fragments: int = MAX_FRAGMENTS,
                              payload: int = MAX_FRAGMENT_PAYLOAD) -> tuple[float, float, float]:
    """(singles, aggregate, ratio): airtime of ``fragments`` one-fragment frames
    against one frame carrying all of them, using the LoRa airtime formula."""
    single = lora_time_on_air(phy, lora_frame_size([payload]))
    aggregate = lora_time_on_air(phy, lora_frame_size([payload] * fragments))
    singles = fragments * single
    return singles, aggregate, singles / aggregate
