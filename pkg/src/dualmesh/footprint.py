"""Byte accounting for one node's protocol state.

Every table a node keeps has a fixed per-entry size and a hard cap; the
footprint is the sum of live entries times entry size plus a fixed overhead.
With every table at its cap the total must stay inside ``RAM_BUDGET``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Union

RAM_BUDGET = 3072
OVERHEAD_BYTES = 256


@dataclass(frozen=True)
class BudgetRow:
    name: str
    entry_bytes: int
    capacity: int

    @property
    def max_bytes(self) -> int:
        return self.entry_bytes * self.capacity


STATE_BUDGET: tuple[BudgetRow, ...] = (
    # id 2, key 2, cluster 2, lq 1, last_seen 1, listed-me tick 1, flags/battery 1
    BudgetRow("neighbors", 10, 16),
    # dest 2, via 2, lq 1, age 1
    BudgetRow("two_hop", 6, 64),
    # dest 2, next_hop 2, cost 2, hops 1, dest_seq 2, expires 2, flags 1
    BudgetRow("routes", 12, 24),
    BudgetRow("pending_rreq", 16, 4),
    # origin/src 2, id/seq 2, cost or index 2
    BudgetRow("duplicate_cache", 6, 64),
    BudgetRow("reassembly", 140, 2),
    BudgetRow("backbone_queue", 140, 1),
    # one encoded fragment (25 B) plus its length byte
    BudgetRow("tx_queue", 26, 16),
    # member id 2, cluster head 2
    BudgetRow("directory", 4, 64),
    # src_ch 2, backbone_seq 1
    BudgetRow("backbone_seen", 3, 16),
    # one encoded LoRa frame (at most 199 B) plus its length byte
    BudgetRow("lora_tx_queue", 200, 1),
    # src 2, msg_seq 2 of recently completed messages
    BudgetRow("delivered", 4, 16),
)

CAPACITY = {row.name: row.capacity for row in STATE_BUDGET}


class HasOccupancy(Protocol):
    def occupancy(self) -> Mapping[str, int]: ...


def state_footprint(state: Union[HasOccupancy, Mapping[str, int]]) -> int:
    """Bytes used by ``state`` under the budget table."""
    counts = state if isinstance(state, Mapping) else state.occupancy()
    unknown = set(counts) - set(CAPACITY)
    if unknown:
        raise KeyError(f"no budget row for {sorted(unknown)}")
    return OVERHEAD_BYTES + sum(row.entry_bytes * counts.get(row.name, 0) for row in STATE_BUDGET)


def max_footprint() -> int:
    return state_footprint(CAPACITY)


def budget_table() -> list[tuple[str, int, int, int]]:
    """(table, entry bytes, cap, bytes at cap) rows plus the overhead line."""
    rows = [(r.name, r.entry_bytes, r.capacity, r.max_bytes) for r in STATE_BUDGET]
    rows.append(("overhead", OVERHEAD_BYTES, 1, OVERHEAD_BYTES))
    return rows
