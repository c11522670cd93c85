"""Splitting messages into BLE fragments and putting them back together."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .frames import MAX_FRAGMENT_PAYLOAD, MAX_MESSAGE_PAYLOAD, DataFragment

REASSEMBLY_TIMEOUT = 5.0
REASSEMBLY_BUFFERS = 2


class FragmentationError(ValueError):
    pass


class ReassemblyConflict(ValueError):
    """Two fragments of one message disagree on the fragment count."""


def fragment_message(src: int, dst: int, msg_seq: int, payload: bytes,
                     ttl: int = 16) -> list[DataFragment]:
    if not 1 <= len(payload) <= MAX_MESSAGE_PAYLOAD:
        raise FragmentationError(
            f"message payload must be 1..{MAX_MESSAGE_PAYLOAD} bytes, got {len(payload)}"
        )
    count = math.ceil(len(payload) / MAX_FRAGMENT_PAYLOAD)
    return [
        DataFragment(
            src=src,
            dst=dst,
            msg_seq=msg_seq,
            frag_index=i,
            frag_count=count,
            payload=bytes(payload[i * MAX_FRAGMENT_PAYLOAD:(i + 1) * MAX_FRAGMENT_PAYLOAD]),
            ttl=ttl,
        )
        for i in range(count)
    ]


@dataclass
class _Partial:
    frag_count: int
    created: float
    last_activity: float
    parts: dict[int, bytes] = field(default_factory=dict)


class ReassemblyBuffers:
    """Bounded set of partially received messages keyed by (src, msg_seq).

    Evicted partials are appended to ``evicted`` so the owner can account for
    the lost fragments; drain it with :meth:`take_evicted`.
    """

    def __init__(self, capacity: int = REASSEMBLY_BUFFERS, timeout: float = REASSEMBLY_TIMEOUT):
        self.capacity = capacity
        self.timeout = timeout
        self._partials: dict[tuple[int, int], _Partial] = {}
        self.evicted: list[tuple[tuple[int, int], tuple[int, ...]]] = []

    def __len__(self) -> int:
        return len(self._partials)

    def add(self, frag: DataFragment, now: float) -> bytes | None:
        """Store ``frag``; return the full payload once every fragment is in."""
        self.expire(now)
        key = (frag.src, frag.msg_seq)
        partial = self._partials.get(key)
        if partial is None:
            if frag.frag_count == 1:
                return frag.payload
            if len(self._partials) >= self.capacity:
                oldest = min(self._partials, key=lambda k: self._partials[k].created)
                self._evict(oldest)
            partial = _Partial(frag.frag_count, created=now, last_activity=now)
            self._partials[key] = partial
        elif partial.frag_count != frag.frag_count:
            raise ReassemblyConflict(
                f"message {key}: frag_count {frag.frag_count} conflicts with {partial.frag_count}"
            )
        partial.last_activity = now
        partial.parts.setdefault(frag.frag_index, frag.payload)
        if len(partial.parts) < partial.frag_count:
            return None
        del self._partials[key]
        return b"".join(partial.parts[i] for i in range(partial.frag_count))

    def expire(self, now: float) -> None:
        for key in [k for k, p in self._partials.items() if now >= p.last_activity + self.timeout]:
            self._evict(key)

    def next_deadline(self) -> float | None:
        if not self._partials:
            return None
        return min(p.last_activity for p in self._partials.values()) + self.timeout

    def take_evicted(self) -> list[tuple[tuple[int, int], tuple[int, ...]]]:
        out, self.evicted = self.evicted, []
        return out

    def pending(self) -> dict[tuple[int, int], tuple[int, ...]]:
        """Fragment indices held for every incomplete message."""
        return {k: tuple(sorted(p.parts)) for k, p in self._partials.items()}

    def _evict(self, key: tuple[int, int]) -> None:
        partial = self._partials.pop(key)
        self.evicted.append((key, tuple(sorted(partial.parts))))
