"""Closed-form traffic, energy, latency and capacity models.

Everything here is a pure function of its arguments.  The simulator uses the
same functions as oracles for its measured counterparts, and the ``analyze``
command renders them as tables.

Units: powers in milliwatts, currents in milliamps, times in seconds and
energies in joules unless a name says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

BANDWIDTHS_HZ = (125_000, 250_000, 500_000)

#: Returned by the capacity helpers when the denominator vanishes.
UNBOUNDED = math.inf


@dataclass(frozen=True)
class TrafficParams:
    """Locality bias, cluster count and per-node message rate (msgs/min)."""

    beta: float
    clusters: int = 1
    rate_per_node: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if int(self.clusters) != self.clusters or self.clusters < 1:
            raise ValueError(f"clusters must be a positive integer, got {self.clusters}")
        if self.rate_per_node < 0:
            raise ValueError(f"rate_per_node must be >= 0, got {self.rate_per_node}")


@dataclass(frozen=True)
class RadioProfile:
    """Transmit-side energy parameters of one radio.

    ``airtime`` is the packet time used for energy (T_pkt for BLE, the
    time-on-air for LoRa).
    """

    tx_power: float  # mW
    airtime: float  # s
    range: float = 0.0  # m
    active_current: float = 0.0  # mA
    sleep_current: float = 0.0  # mA

    def __post_init__(self) -> None:
        for name in ("tx_power", "airtime", "range", "active_current", "sleep_current"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @property
    def per_packet_energy(self) -> float:
        return radio_energy_per_packet(self)


@dataclass(frozen=True)
class PathShape:
    """Hop counts of an end-to-end path, split by radio."""

    ble_hops: int = 0
    lora_hops: int = 0

    def __post_init__(self) -> None:
        if self.ble_hops < 0 or self.lora_hops < 0:
            raise ValueError("hop counts must be >= 0")

    @property
    def total_hops(self) -> int:
        return self.ble_hops + self.lora_hops

    def __add__(self, other: PathShape) -> PathShape:
        return PathShape(self.ble_hops + other.ble_hops, self.lora_hops + other.lora_hops)


@dataclass(frozen=True)
class LoraPhyConfig:
    spreading_factor: int = 10
    bandwidth: int = 125_000
    coding_rate_index: int = 1  # 1..4 -> 4/5..4/8
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_opt: bool = False

    def __post_init__(self) -> None:
        if not 5 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading_factor must be in 5..12, got {self.spreading_factor}")
        if self.bandwidth not in BANDWIDTHS_HZ:
            raise ValueError(f"bandwidth must be one of {BANDWIDTHS_HZ}, got {self.bandwidth}")
        if not 1 <= self.coding_rate_index <= 4:
            raise ValueError(f"coding_rate_index must be in 1..4, got {self.coding_rate_index}")
        if self.preamble_symbols < 0:
            raise ValueError("preamble_symbols must be >= 0")

    @classmethod
    def for_sf(cls, spreading_factor: int, bandwidth: int = 125_000, **kwargs) -> LoraPhyConfig:
        """Config with low-data-rate optimisation switched on where the radio mandates it."""
        symbol_time = 2**spreading_factor / bandwidth
        kwargs.setdefault("low_data_rate_opt", symbol_time > 0.016)
        return cls(spreading_factor=spreading_factor, bandwidth=bandwidth, **kwargs)

    @property
    def symbol_time(self) -> float:
        return 2**self.spreading_factor / self.bandwidth


# -- traffic -----------------------------------------------------------------


def inter_cluster_ratio(params: TrafficParams) -> float:
    """Fraction of messages that leave the sender's cluster: (1-beta)(1-1/C)."""
    return (1.0 - params.beta) * (params.clusters - 1) / params.clusters


def utilization_reduction(alpha: float, shape: PathShape) -> float:
    """LoRa channel utilisation saved relative to a LoRa-only mesh."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if shape.total_hops <= 0:
        raise ValueError("path shape must contain at least one hop")
    return 1.0 - alpha - alpha * (shape.lora_hops / shape.total_hops)


# -- energy ------------------------------------------------------------------


def radio_energy_per_packet(profile: RadioProfile) -> float:
    return profile.tx_power / 1000.0 * profile.airtime


def path_energy(shape: PathShape, e_ble: float = 0.0, e_lora: float = 0.0) -> float:
    """Energy of one packet carried along ``shape``.

    Summed with ``math.fsum`` over the individual hops so that a ledger which
    adds the same per-hop energies in any order lands on the identical float.
    """
    if e_ble < 0 or e_lora < 0:
        raise ValueError("per-hop energies must be >= 0")
    return math.fsum([e_ble] * shape.ble_hops + [e_lora] * shape.lora_hops)


def mean_message_energy(alpha: float, e_intra_path: float, e_inter_path: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * e_intra_path + alpha * e_inter_path


def energy_savings(e_dual: float, e_baseline: float) -> float:
    """Relative saving of ``e_dual`` against ``e_baseline`` (0.79 means 79%)."""
    if e_baseline <= 0:
        raise ValueError("baseline energy must be positive")
    return 1.0 - e_dual / e_baseline


# -- capacity ----------------------------------------------------------------


def aloha_throughput(offered_load: float) -> float:
    """Pure-ALOHA throughput S = G exp(-2G)."""
    if offered_load < 0:
        raise ValueError("offered load must be >= 0")
    return offered_load * math.exp(-2.0 * offered_load)


def aloha_peak() -> tuple[float, float]:
    """Location and value of the pure-ALOHA maximum, (0.5, 1/(2e))."""
    return 0.5, aloha_throughput(0.5)


def ble_cluster_capacity(s_max: float, t_pkt: float, channels: int = 3) -> float:
    """Messages per second a cluster carries across its advertising channels."""
    if t_pkt <= 0:
        raise ValueError("t_pkt must be positive")
    if channels < 1:
        raise ValueError("channels must be >= 1")
    return channels * s_max / t_pkt


def lora_backbone_capacity(s_max: float, toa: float) -> float:
    """Messages per second through the single-channel backbone."""
    if toa <= 0:
        raise ValueError("toa must be positive")
    return s_max / toa


def max_network_size(capacity_per_min: float, alpha: float, rate_per_node: float) -> float:
    """Node count at which inter-cluster load saturates the backbone.

    Returned unrounded; ``UNBOUNDED`` when no traffic crosses clusters.
    """
    load = alpha * rate_per_node
    if load <= 0:
        return UNBOUNDED
    return capacity_per_min / load


# -- airtime -----------------------------------------------------------------


def lora_time_on_air(phy: LoraPhyConfig, payload_bytes: int) -> float:
    """LoRa packet duration in seconds (SX126x datasheet airtime formula)."""
    if not 1 <= payload_bytes <= 255:
        raise ValueError(f"payload_bytes must be in 1..255, got {payload_bytes}")
    sf = phy.spreading_factor
    crc_bits = 16 if phy.crc_on else 0
    header_bits = 20 if phy.explicit_header else 0
    if sf < 7:
        # SF5/SF6 use a longer sync sequence and no +8 term in the numerator
        fixed = phy.preamble_symbols + 6.25 + 8
        numerator = 8 * payload_bytes + crc_bits - 4 * sf + header_bits
    else:
        fixed = phy.preamble_symbols + 4.25 + 8
        numerator = 8 * payload_bytes + crc_bits - 4 * sf + 8 + header_bits
    bits_per_block = 4 * (sf - 2 if phy.low_data_rate_opt else sf)
    blocks = math.ceil(max(numerator, 0) / bits_per_block)
    n_symbols = fixed + blocks * (phy.coding_rate_index + 4)
    return n_symbols * phy.symbol_time


def ble_coded_airtime(payload_bytes: int) -> float:
    """Duration of one BLE Coded PHY (S8) advertising PDU carrying ``payload_bytes``.

    Preamble 80 us, access address 256 us, CI 16 us, TERM1 24 us, then the PDU
    (2 B header + 6 B AdvA + payload) and 3 B CRC at 8 us/bit, then TERM2 24 us.
    """
    if not 0 <= payload_bytes <= 31:
        raise ValueError(f"legacy advertising payload is 0..31 bytes, got {payload_bytes}")
    coded_bits = (2 + 6 + payload_bytes + 3) * 8
    return (80 + 256 + 16 + 24 + coded_bits * 8 + 24) * 1e-6


# -- latency and power -------------------------------------------------------


def path_latency(shape: PathShape, t_ble: float = 0.0, t_lora: float = 0.0) -> float:
    """Transmission time of one packet along ``shape`` (no queueing)."""
    if t_ble < 0 or t_lora < 0:
        raise ValueError("per-hop times must be >= 0")
    return math.fsum([t_ble] * shape.ble_hops + [t_lora] * shape.lora_hops)


def duty_cycled_current(active_ma: float, sleep_ma: float, duty: float) -> float:
    if not 0.0 <= duty <= 1.0:
        raise ValueError(f"duty must lie in [0, 1], got {duty}")
    return duty * active_ma + (1.0 - duty) * sleep_ma


def battery_life_days(capacity_mah: float, avg_current_ma: float) -> float:
    if avg_current_ma < 0:
        raise ValueError("current must be >= 0")
    if avg_current_ma == 0:
        return UNBOUNDED
    return capacity_mah / (avg_current_ma * 24.0)


# -- published constants ---------------------------------------------------


@dataclass(frozen=True)
class AirtimeConstants:
    """Fixed per-packet airtimes used by the paper airtime mode."""

    ble: float = 0.016
    lora_sf10: float = 0.370
    lora_sf7: float = 0.051
    lora_sf12: float = 2.5

    def lora(self, spreading_factor: int) -> float:
        table = {7: self.lora_sf7, 10: self.lora_sf10, 12: self.lora_sf12}
        try:
            return table[spreading_factor]
        except KeyError:
            raise ValueError(
                f"no published airtime for SF{spreading_factor}; use formula mode"
            ) from None


PAPER_AIRTIMES = AirtimeConstants()
BLE_TX_POWER_MW = 8.0
LORA_TX_POWER_MW = 50.0
LORA_RX_CURRENT_MA = 4.2
SUPPLY_VOLTAGE = 3.3
