"""Simulation results and their long-format CSV encoding.

CSV layout (schema version 1)::

    schema_version,1
    record,key,field,value
    run,,seed,7
    message,0,latency,0.434
    node_energy,3,lora_tx_energy,0.0185
    ...

``record`` names the table, ``key`` is the row index (or the name for
``counter`` and ``membership`` rows), and ``value`` holds ``repr`` of floats so
parsing gives back the identical report.
"""

from __future__ import annotations

import csv
import io
import math
import typing
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable

SCHEMA_VERSION = 1
FATES = ("delivered", "dropped_ttl", "dropped_collision", "undeliverable", "in_flight")
CATEGORIES = ("intra", "inter_1_lora", "inter_2_lora")


class CsvSchemaError(ValueError):
    pass


@dataclass
class MessageRecord:
    src: int
    dst: int
    seq: int
    origin_time: float
    payload_bytes: int
    inter_cluster: bool
    fate: str = "in_flight"
    category: str = ""
    ble_tx: int = 0
    lora_tx: int = 0
    latency: float = 0.0  # summed airtime of the transmissions that carried it
    delay: float = 0.0  # wall-clock origination to delivery
    energy: float = 0.0
    escalated: bool = False  # some fragment was handed to the LoRa backbone
    hops: str = ""  # radios of the carrying transmissions in order, "B" or "L"
    scripted: bool = False


@dataclass
class NodeEnergy:
    node: int
    ble_tx_energy: float = 0.0
    lora_tx_energy: float = 0.0
    lora_listen_energy: float = 0.0
    ble_packets: int = 0
    lora_packets: int = 0
    listen_time: float = 0.0

    @property
    def total(self) -> float:
        return math.fsum((self.ble_tx_energy, self.lora_tx_energy, self.lora_listen_energy))


@dataclass
class RoleChange:
    time: float
    node: int
    role: str
    cluster: int


@dataclass
class RunInfo:
    seed: int
    duration: float
    airtime_mode: str
    node_count: int
    ble_utilization: float = 0.0
    lora_utilization: float = 0.0
    ble_frames: int = 0
    lora_frames: int = 0
    quiescence_time: float = 0.0
    expected_alpha: float = math.nan


@dataclass
class MetricsReport:
    run: RunInfo
    messages: list[MessageRecord] = field(default_factory=list)
    energy: list[NodeEnergy] = field(default_factory=list)
    roles: list[RoleChange] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    membership: dict[int, int] = field(default_factory=dict)

    # -- derived ------------------------------------------------------------

    @property
    def originated(self) -> int:
        return len(self.messages)

    @property
    def delivered(self) -> int:
        return sum(m.fate == "delivered" for m in self.messages)

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.originated if self.messages else 0.0

    def fates(self, inter_cluster: bool | None = None) -> dict[str, int]:
        counts = Counter(m.fate for m in self.messages
                         if inter_cluster is None or m.inter_cluster == inter_cluster)
        return {f: counts.get(f, 0) for f in FATES}

    @property
    def measured_alpha(self) -> float:
        generated = [m for m in self.messages if not m.scripted]
        if not generated:
            return math.nan
        return sum(m.inter_cluster for m in generated) / len(generated)

    def ble_carried_share(self, settle: float = 15.0) -> float:
        """Share of generated messages that never needed the backbone.

        Messages originated in the last ``settle`` seconds are left out: their
        route discovery may still be running when the run stops.
        """
        cutoff = self.run.duration - settle
        pool = [m for m in self.messages if not m.scripted and m.origin_time < cutoff]
        if not pool:
            return math.nan
        return sum(not m.escalated for m in pool) / len(pool)

    def latency_samples(self, category: str) -> list[float]:
        return [m.latency for m in self.messages if m.fate == "delivered" and m.category == category]

    @property
    def total_energy(self) -> float:
        return math.fsum(e.total for e in self.energy)

    @property
    def energy_per_delivered(self) -> float:
        return self.total_energy / self.delivered if self.delivered else math.nan

    def cluster_heads(self) -> list[int]:
        return sorted({c for c in self.membership.values()})

    # -- rendering ------------------------------------------------------------

    def summary(self) -> str:
        r = self.run
        lines = [
            f"run: seed={r.seed} duration={r.duration:g}s nodes={r.node_count} "
            f"airtime={r.airtime_mode}",
            f"messages: originated={self.originated} delivered={self.delivered} "
            f"delivery_ratio={self.delivery_ratio:.4f}",
            "fates: " + " ".join(f"{k}={v}" for k, v in self.fates().items()),
        ]
        if not math.isnan(self.measured_alpha):
            lines.append(f"inter-cluster fraction: measured={self.measured_alpha:.4f} "
                         f"expected={r.expected_alpha:.4f}")
            lines.append(f"kept on BLE: {self.ble_carried_share():.4f}")
        for cat in CATEGORIES:
            samples = self.latency_samples(cat)
            if samples:
                mean = math.fsum(samples) / len(samples)
                lines.append(f"latency[{cat}]: n={len(samples)} mean={mean * 1000:.3f} ms "
                             f"min={min(samples) * 1000:.3f} ms max={max(samples) * 1000:.3f} ms")
        lines.append(f"utilization: ble={r.ble_utilization:.5f} lora={r.lora_utilization:.5f} "
                     f"(frames ble={r.ble_frames} lora={r.lora_frames})")
        lines.append(f"energy: total={self.total_energy * 1000:.3f} mJ "
                     f"per delivered message={self.energy_per_delivered * 1000:.3f} mJ")
        heads = self.cluster_heads()
        lines.append(f"cluster heads at end: {', '.join(map(str, heads)) or 'none'}")
        for m in self.messages:
            if m.scripted:
                lines.append(
                    f"message {m.src}->{m.dst} seq {m.seq}: {m.fate}"
                    + (f" via {m.category}, {m.ble_tx} BLE + {m.lora_tx} LoRa transmissions, "
                       f"latency {m.latency * 1000:.3f} ms, delay {m.delay:.3f} s, "
                       f"energy {m.energy * 1000:.3f} mJ" if m.fate == "delivered" else ""))
        return "\n".join(lines)

    # -- CSV ----------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", SCHEMA_VERSION])
        w.writerow(["record", "key", "field", "value"])
        for f in fields(self.run):
            w.writerow(["run", "", f.name, _fmt(getattr(self.run, f.name))])
        for name, rows in (("message", self.messages), ("node_energy", self.energy),
                           ("role", self.roles)):
            for i, row in enumerate(rows):
                for f in fields(row):
                    w.writerow([name, i, f.name, _fmt(getattr(row, f.name))])
        for k in sorted(self.counters):
            w.writerow(["counter", k, "value", self.counters[k]])
        for node in sorted(self.membership):
            w.writerow(["membership", node, "cluster", self.membership[node]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> MetricsReport:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["schema_version", str(SCHEMA_VERSION)]:
            raise CsvSchemaError(f"first row must be schema_version,{SCHEMA_VERSION}")
        if len(rows) < 2 or rows[1] != ["record", "key", "field", "value"]:
            raise CsvSchemaError("second row must be the column header")
        run: dict[str, str] = {}
        tables: dict[str, dict[int, dict[str, str]]] = {"message": {}, "node_energy": {},
                                                        "role": {}}
        counters: dict[str, int] = {}
        membership: dict[int, int] = {}
        for lineno, row in enumerate(rows[2:], start=3):
            if len(row) != 4:
                raise CsvSchemaError(f"row {lineno}: expected 4 columns")
            record, key, name, value = row
            if record == "run":
                run[name] = value
            elif record in tables:
                tables[record].setdefault(int(key), {})[name] = value
            elif record == "counter":
                counters[key] = int(value)
            elif record == "membership":
                membership[int(key)] = int(value)
            else:
                raise CsvSchemaError(f"row {lineno}: unknown record {record!r}")
        return cls(
            run=_build(RunInfo, run),
            messages=[_build(MessageRecord, tables["message"][i]) for i in sorted(tables["message"])],
            energy=[_build(NodeEnergy, tables["node_energy"][i])
                    for i in sorted(tables["node_energy"])],
            roles=[_build(RoleChange, tables["role"][i]) for i in sorted(tables["role"])],
            counters=counters,
            membership=membership,
        )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(kind, text: str):
    if kind is bool:
        if text not in ("true", "false"):
            raise CsvSchemaError(f"bad boolean {text!r}")
        return text == "true"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _build(cls, values: dict[str, str]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise CsvSchemaError(f"{cls.__name__}: unknown fields {sorted(unknown)}")
    try:
        return cls(**{k: _parse(hints[k], v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise CsvSchemaError(f"{cls.__name__}: {exc}") from None


def aggregate_rows(reports: Iterable[tuple[str, MetricsReport]]) -> list[dict[str, object]]:
    """One summary row per (label, report), independent of arrival order."""
    rows = []
    for label, rep in sorted(reports, key=lambda item: item[0]):
        row: dict[str, object] = {
            "value": label,
            "originated": rep.originated,
            "delivered": rep.delivered,
            "delivery_ratio": rep.delivery_ratio,
            "measured_alpha": rep.measured_alpha,
            "ble_carried_share": rep.ble_carried_share(),
            "ble_utilization": rep.run.ble_utilization,
            "lora_utilization": rep.run.lora_utilization,
            "energy_per_delivered": rep.energy_per_delivered,
        }
        for cat in CATEGORIES:
            s = rep.latency_samples(cat)
            row[f"latency_{cat}"] = math.fsum(s) / len(s) if s else math.nan
        rows.append(row)
    return rows
