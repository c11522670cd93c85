"""Scenario configuration and the INI-style scenario file format.

Example::

    [scenario]
    duration = 120
    seed = 1
    airtime_mode = paper
    lora_range = 5000

    [traffic]
    beta = 0.82
    rate_per_node = 6
    start = 30

    [nodes]
    1 = -1400, 0
    2 = -700, 0

    [messages]
    first = 40.0, 1, 7, 15      ; time, src, dst, payload bytes

    [battery]
    drop = 60.0, 4, 15          ; time, node, battery percent

Unknown sections or keys are rejected, and every error names the line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from ..analytics import PAPER_AIRTIMES, LoraPhyConfig, TrafficParams
from ..fragmentation import MAX_MESSAGE_PAYLOAD

AIRTIME_MODES = ("formula", "paper")


class ScenarioError(ValueError):
    """Invalid scenario; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class NodeSpec:
    id: int
    x: float
    y: float
    battery_pct: int = 100


@dataclass(frozen=True)
class ScriptedMessage:
    time: float
    src: int
    dst: int
    payload_bytes: int


@dataclass(frozen=True)
class BatteryEvent:
    time: float
    node: int
    pct: int


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[NodeSpec, ...]
    duration: float
    seed: int = 1
    ble_range: float = 800.0
    lora_range: float = 2500.0
    airtime_mode: str = "formula"
    spreading_factor: int = 10
    lora_bandwidth: int = 125_000
    ble_airtime: float | None = None  # overrides the mode's BLE packet time
    lora_airtime: float | None = None  # overrides the mode's LoRa time-on-air
    ble_tx_power_mw: float = 8.0
    lora_tx_power_mw: float = 50.0
    lora_rx_current_ma: float = 4.2
    supply_voltage: float = 3.3
    ble_channels: int = 1
    traffic: TrafficParams | None = None
    traffic_start: float = 30.0
    payload_bytes: int = 50
    beacon_interval: float = 3.0
    listen_period: float = 30.0
    listen_window: float = 2.0
    messages: tuple[ScriptedMessage, ...] = ()
    battery_events: tuple[BatteryEvent, ...] = ()
    check_invariants: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if not ids:
            raise ScenarioError("at least one node is required", field="nodes")
        if len(set(ids)) != len(ids):
            raise ScenarioError("node ids must be unique", field="nodes")
        for n in self.nodes:
            if not 0 < n.id < 0xFFFF:
                raise ScenarioError(f"node id {n.id} outside 1..65534", field="nodes")
            if not 0 <= n.battery_pct <= 100:
                raise ScenarioError(f"node {n.id} battery outside 0..100", field="nodes")
        if not self.duration > 0:
            raise ScenarioError("duration must be > 0", field="duration")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be an unsigned 64-bit integer", field="seed")
        if self.airtime_mode not in AIRTIME_MODES:
            raise ScenarioError(f"airtime_mode must be one of {AIRTIME_MODES}",
                                field="airtime_mode")
        for name in ("ble_range", "lora_range", "beacon_interval", "listen_period",
                     "listen_window"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be > 0", field=name)
        for name in ("ble_tx_power_mw", "lora_tx_power_mw", "lora_rx_current_ma",
                     "supply_voltage", "traffic_start"):
            if not getattr(self, name) >= 0:
                raise ScenarioError(f"{name} must be >= 0", field=name)
        for name in ("ble_airtime", "lora_airtime"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ScenarioError(f"{name} must be > 0", field=name)
        if self.listen_window > self.listen_period:
            raise ScenarioError("listen_window exceeds listen_period", field="listen_window")
        if self.ble_channels not in (1, 3):
            raise ScenarioError("ble_channels must be 1 or 3", field="ble_channels")
        if not 1 <= self.payload_bytes <= MAX_MESSAGE_PAYLOAD:
            raise ScenarioError(f"payload_bytes must be in 1..{MAX_MESSAGE_PAYLOAD}",
                                field="payload_bytes")
        try:
            LoraPhyConfig.for_sf(self.spreading_factor, self.lora_bandwidth)
        except ValueError as exc:
            raise ScenarioError(str(exc), field="spreading_factor") from None
        if self.airtime_mode == "paper" and self.lora_airtime is None:
            try:
                PAPER_AIRTIMES.lora(self.spreading_factor)
            except ValueError as exc:
                raise ScenarioError(str(exc), field="spreading_factor") from None
        known = set(ids)
        for m in self.messages:
            if m.src not in known or m.dst not in known or m.src == m.dst:
                raise ScenarioError(f"message {m.src}->{m.dst} needs two distinct known nodes",
                                    field="messages")
            if not 1 <= m.payload_bytes <= MAX_MESSAGE_PAYLOAD:
                raise ScenarioError(f"message payload must be in 1..{MAX_MESSAGE_PAYLOAD}",
                                    field="messages")
            if m.time < 0:
                raise ScenarioError("message time must be >= 0", field="messages")
        for b in self.battery_events:
            if b.node not in known or not 0 <= b.pct <= 100 or b.time < 0:
                raise ScenarioError(f"bad battery event {b}", field="battery")

    def with_overrides(self, **changes: Any) -> ScenarioConfig:
        return replace(self, **changes)


# -- file format -------------------------------------------------------------

_SCALAR_KEYS: dict[str, type] = {
    "duration": float, "seed": int, "ble_range": float, "lora_range": float,
    "airtime_mode": str, "spreading_factor": int, "lora_bandwidth": int,
    "ble_airtime": float, "lora_airtime": float, "ble_tx_power_mw": float,
    "lora_tx_power_mw": float, "lora_rx_current_ma": float, "supply_voltage": float,
    "ble_channels": int, "payload_bytes": int, "beacon_interval": float,
    "listen_period": float, "listen_window": float, "check_invariants": bool,
}
_TRAFFIC_KEYS = {"beta": float, "rate_per_node": float, "start": float, "clusters": int}
_SECTIONS = ("scenario", "traffic", "nodes", "messages", "battery")

#: Scenario keys that ``sweep --param`` may vary.
SWEEPABLE = tuple(sorted(set(_SCALAR_KEYS) - {"check_invariants"}
                         | {"traffic.beta", "traffic.rate_per_node"}))

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:\s;#][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map (section, key) to 1-based line numbers; key None marks the header."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), lineno)
            continue
        if raw[:1] in (" ", "\t") or section is None:
            continue
        m = _KEY_RE.match(raw)
        if m:
            index.setdefault((section, m.group(1).strip().lower()), lineno)
    return index


def _convert(kind: type, value: str, *, line: int | None, name: str) -> Any:
    value = value.strip()
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(value, 0)
        return kind(value)
    except ValueError:
        raise ScenarioError(f"cannot parse {value!r} as {kind.__name__}",
                            line=line, field=name) from None


def _numbers(value: str, count: int, *, line: int | None, name: str) -> list[str]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != count or not all(parts):
        raise ScenarioError(f"expected {count} comma-separated values, got {value!r}",
                            line=line, field=name)
    return parts


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                       interpolation=None, default_section="__none__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ScenarioError(str(exc).splitlines()[0], line=line) from None
    lines = _line_index(text)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ScenarioError(f"unknown section [{section}]", line=lines.get((section, None)),
                                field=section)
    if not parser.has_section("scenario"):
        raise ScenarioError("missing [scenario] section", field="scenario")

    kwargs: dict[str, Any] = {}
    for key, value in parser.items("scenario"):
        line = lines.get(("scenario", key))
        if key not in _SCALAR_KEYS:
            raise ScenarioError("unknown key", line=line, field=f"scenario.{key}")
        kwargs[key] = _convert(_SCALAR_KEYS[key], value, line=line, name=f"scenario.{key}")
    if "duration" not in kwargs:
        raise ScenarioError("duration is required", line=lines.get(("scenario", None)),
                            field="scenario.duration")

    if parser.has_section("traffic"):
        t: dict[str, Any] = {}
        for key, value in parser.items("traffic"):
            line = lines.get(("traffic", key))
            if key not in _TRAFFIC_KEYS:
                raise ScenarioError("unknown key", line=line, field=f"traffic.{key}")
            t[key] = _convert(_TRAFFIC_KEYS[key], value, line=line, name=f"traffic.{key}")
        if "beta" not in t or "rate_per_node" not in t:
            raise ScenarioError("traffic needs beta and rate_per_node",
                                line=lines.get(("traffic", None)), field="traffic")
        try:
            kwargs["traffic"] = TrafficParams(t["beta"], t.get("clusters", 1), t["rate_per_node"])
        except ValueError as exc:
            raise ScenarioError(str(exc), line=lines.get(("traffic", None)),
                                field="traffic") from None
        if "start" in t:
            kwargs["traffic_start"] = t["start"]

    nodes = []
    if parser.has_section("nodes"):
        for key, value in parser.items("nodes"):
            line = lines.get(("nodes", key))
            name = f"nodes.{key}"
            node_id = _convert(int, key, line=line, name=name)
            parts = [p.strip() for p in value.split(",")]
            if len(parts) not in (2, 3):
                raise ScenarioError("expected 'x, y' or 'x, y, battery'", line=line, field=name)
            x = _convert(float, parts[0], line=line, name=name)
            y = _convert(float, parts[1], line=line, name=name)
            battery = _convert(int, parts[2], line=line, name=name) if len(parts) == 3 else 100
            nodes.append(NodeSpec(node_id, x, y, battery))
    kwargs["nodes"] = tuple(nodes)

    messages = []
    if parser.has_section("messages"):
        for key, value in parser.items("messages"):
            line = lines.get(("messages", key))
            name = f"messages.{key}"
            p = _numbers(value, 4, line=line, name=name)
            messages.append(ScriptedMessage(
                _convert(float, p[0], line=line, name=name), _convert(int, p[1], line=line, name=name),
                _convert(int, p[2], line=line, name=name), _convert(int, p[3], line=line, name=name)))
    kwargs["messages"] = tuple(messages)

    battery = []
    if parser.has_section("battery"):
        for key, value in parser.items("battery"):
            line = lines.get(("battery", key))
            name = f"battery.{key}"
            p = _numbers(value, 3, line=line, name=name)
            battery.append(BatteryEvent(_convert(float, p[0], line=line, name=name),
                                        _convert(int, p[1], line=line, name=name),
                                        _convert(int, p[2], line=line, name=name)))
    kwargs["battery_events"] = tuple(battery)

    try:
        return ScenarioConfig(**kwargs)
    except ScenarioError as exc:
        if exc.line is None and exc.field is not None:
            section = exc.field if exc.field in _SECTIONS else "scenario"
            line = lines.get((section, exc.field)) or lines.get((section, None))
            raise ScenarioError(str(exc).split(": ", 1)[-1], line=line, field=exc.field) from None
        raise


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, source=str(path))


def apply_param(config: ScenarioConfig, name: str, raw: str) -> ScenarioConfig:
    """Return ``config`` with one sweepable parameter set from its text value."""
    if name.startswith("traffic."):
        key = name.split(".", 1)[1]
        if key not in ("beta", "rate_per_node") or config.traffic is None:
            raise ScenarioError("parameter needs a [traffic] section", field=name)
        value = _convert(float, raw, line=None, name=name)
        try:
            traffic = replace(config.traffic, **{key: value})
        except ValueError as exc:
            raise ScenarioError(str(exc), field=name) from None
        return replace(config, traffic=traffic)
    if name not in _SCALAR_KEYS or name == "check_invariants":
        raise ScenarioError(f"not a sweepable parameter; choose from {', '.join(SWEEPABLE)}",
                            field=name)
    return replace(config, **{name: _convert(_SCALAR_KEYS[name], raw, line=None, name=name)})


def config_fields() -> list[str]:
    return [f.name for f in fields(ScenarioConfig)]
