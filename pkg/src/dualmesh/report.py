"""Closed-form analysis report: latency, energy, capacity and battery tables.

Every number is produced by an ``analytics`` call on inputs that are echoed
next to it.  Published reference values are compared at their printed
precision (or a stated relative tolerance) and any disagreement is flagged;
flags are always rendered.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .analytics import (BLE_TX_POWER_MW, LORA_RX_CURRENT_MA, LORA_TX_POWER_MW, PAPER_AIRTIMES,
                        LoraPhyConfig, PathShape, RadioProfile, TrafficParams, aloha_throughput,
                        battery_life_days, ble_cluster_capacity, ble_coded_airtime,
                        duty_cycled_current, energy_savings, inter_cluster_ratio,
                        lora_backbone_capacity, lora_time_on_air, max_network_size,
                        mean_message_energy, path_energy, path_latency, utilization_reduction)
from .backbone import aggregation_airtime_ratio
from .frames import BLE_MAX_FRAME, MAX_FRAGMENT_PAYLOAD

AIRTIME_MODES = ("paper", "formula")


@dataclass(frozen=True)
class AnalysisInputs:
    beta: float = 0.82
    clusters: int = 3
    rate_per_node: float = 1.0  # msgs/min
    airtime_mode: str = "paper"
    spreading_factor: int = 10
    baseline_spreading_factor: int = 12  # flat LoRa mesh
    message_bytes: int = 50  # LoRa payload for formula-mode airtime
    ble_tx_power_mw: float = BLE_TX_POWER_MW
    lora_tx_power_mw: float = LORA_TX_POWER_MW
    s_max: float = 0.184  # operating ALOHA throughput
    ble_channels: int = 3
    rounded_capacity_per_min: float = 30.0
    intra_ble_hops: int = 2
    inter_ble_hops: int = 4
    lora_only_hops: int = 5
    battery_mah: float = 500.0
    current_non_ch_ma: float = 6.5
    current_ch_ma: float = 9.2
    current_lora_only_ma: float = 12.8
    lora_rx_current_ma: float = LORA_RX_CURRENT_MA
    lora_sleep_current_ma: float = 0.0
    listen_window_s: float = 2.0
    listen_period_s: float = 30.0
    ble_only_max_nodes: str = "15"
    lora_only_max_nodes: str = "50-80"
    ble_coverage_km: float = 2.4
    lora_coverage_km: float = 10.0
    beta_sweep: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 0.82, 0.9, 1.0)

    def __post_init__(self) -> None:
        if self.airtime_mode not in AIRTIME_MODES:
            raise ValueError(f"airtime_mode: expected one of {AIRTIME_MODES}, "
                             f"got {self.airtime_mode!r}")
        TrafficParams(self.beta, self.clusters, self.rate_per_node)
        for sf_field in ("spreading_factor", "baseline_spreading_factor"):
            LoraPhyConfig.for_sf(getattr(self, sf_field))
        for name in ("intra_ble_hops", "inter_ble_hops", "lora_only_hops", "ble_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name}: must be >= 1")
        for name in ("battery_mah", "current_non_ch_ma", "current_ch_ma", "current_lora_only_ma",
                     "listen_period_s", "s_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be > 0")
        if not 0 < self.listen_window_s <= self.listen_period_s:
            raise ValueError("listen_window_s: must lie in (0, listen_period_s]")
        if not 1 <= self.message_bytes <= 255:
            raise ValueError("message_bytes: must lie in 1..255")
        for b in self.beta_sweep:
            if not 0 <= b <= 1:
                raise ValueError(f"beta_sweep: {b} is outside [0, 1]")

    def lora_airtime(self, sf: int) -> float:
        if self.airtime_mode == "paper":
            return PAPER_AIRTIMES.lora(sf)
        return lora_time_on_air(LoraPhyConfig.for_sf(sf), self.message_bytes)

    @property
    def ble_airtime(self) -> float:
        if self.airtime_mode == "paper":
            return PAPER_AIRTIMES.ble
        return ble_coded_airtime(BLE_MAX_FRAME - 6)


@dataclass
class Item:
    """One computed value with its inputs and, optionally, a published counterpart."""

    section: str
    name: str
    value: float | None
    unit: str
    inputs: str
    published: str = ""
    status: str = ""  # "", "match" or "DISCREPANCY"
    note: str = ""

    def shown(self, digits: int = 4) -> str:
        if self.value is None:
            return "---"
        if math.isinf(self.value):
            return "unbounded"
        return f"{self.value:.{digits}g}"


@dataclass
class AnalysisReport:
    inputs: AnalysisInputs
    items: list[Item] = field(default_factory=list)

    def item(self, name: str) -> Item:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    @property
    def flags(self) -> list[Item]:
        return [it for it in self.items if it.status == "DISCREPANCY"]

    def render(self) -> str:
        out: list[str] = [f"analysis (airtime mode: {self.inputs.airtime_mode})"]
        section = None
        for it in self.items:
            if it.section != section:
                section = it.section
                out.append("")
                out.append(f"== {section} ==")
            line = f"  {it.name:<34} {it.shown():>10} {it.unit:<8}  [{it.inputs}]"
            if it.published:
                line += f"  published {it.published} -> {it.status}"
            out.append(line)
            if it.note:
                out.append(f"      note: {it.note}")
        out.append("")
        out.append(f"== discrepancy flags ({len(self.flags)}) ==")
        for it in self.flags:
            out.append(f"  FLAG {it.name}: computed {it.shown()} {it.unit} vs published "
                       f"{it.published}. {it.note}".rstrip())
        return "\n".join(out)

    def rows(self) -> list[dict[str, object]]:
        return [asdict(it) for it in self.items]


def matches_printed(value: float, printed: str) -> bool:
    """True when ``value`` rounds to ``printed`` at the printed number of decimals."""
    text = printed.strip()
    decimals = len(text.split(".")[1]) if "." in text else 0
    return round(value, decimals) == round(float(text), decimals)


def _compare(it: Item, printed: str, rel_tol: float | None = None, note: str = "") -> Item:
    it.published = printed
    if rel_tol is None:
        ok = matches_printed(it.value, printed)
    else:
        ok = math.isclose(it.value, float(printed), rel_tol=rel_tol)
    it.status = "match" if ok else "DISCREPANCY"
    if note:
        it.note = note
    return it


def analyze(inp: AnalysisInputs | None = None) -> AnalysisReport:
    inp = inp or AnalysisInputs()
    rep = AnalysisReport(inp)
    add = rep.items.append
    traffic = TrafficParams(inp.beta, inp.clusters, inp.rate_per_node)
    alpha = inter_cluster_ratio(traffic)
    t_ble = inp.ble_airtime
    t_lora = inp.lora_airtime(inp.spreading_factor)
    t_base = inp.lora_airtime(inp.baseline_spreading_factor)
    sf, bsf = inp.spreading_factor, inp.baseline_spreading_factor
    ble = RadioProfile(inp.ble_tx_power_mw, t_ble)
    lora = RadioProfile(inp.lora_tx_power_mw, t_lora)
    e_ble, e_lora = ble.per_packet_energy, lora.per_packet_energy

    # traffic locality
    s = "traffic locality"
    add(_compare(Item(s, "inter_cluster_ratio", alpha, "",
                      f"beta={inp.beta}, C={inp.clusters}"), "0.12"))
    inter_shape = PathShape(inp.inter_ble_hops, 1)
    add(Item(s, "utilization_reduction", utilization_reduction(alpha, inter_shape), "",
             f"alpha={alpha:.4g}, {inter_shape.ble_hops} BLE + 1 LoRa"))
    for b in inp.beta_sweep:
        a = inter_cluster_ratio(TrafficParams(b, inp.clusters))
        add(Item(s, f"alpha(beta={b:g})", a, "", f"C={inp.clusters}"))

    # energy
    s = "energy per packet and path"
    add(_compare(Item(s, "e_ble", e_ble * 1e6, "uJ",
                      f"{inp.ble_tx_power_mw:g} mW x {t_ble * 1000:g} ms"), "128"))
    add(_compare(Item(s, "e_lora", e_lora * 1e3, "mJ",
                      f"{inp.lora_tx_power_mw:g} mW x {t_lora * 1000:g} ms (SF{sf})"), "18.5"))
    e_dual = path_energy(inter_shape, e_ble, e_lora)
    e_flat = path_energy(PathShape(0, inp.lora_only_hops), e_ble, e_lora)
    e_intra = path_energy(PathShape(inp.intra_ble_hops, 0), e_ble, e_lora)
    e_intra_1 = path_energy(PathShape(1, 0), e_ble, e_lora)
    add(_compare(Item(s, "path_energy_dual_inter", e_dual * 1e3, "mJ",
                      f"{inter_shape.ble_hops} BLE + 1 LoRa"), "19.0"))
    add(_compare(Item(s, "path_energy_lora_only", e_flat * 1e3, "mJ",
                      f"{inp.lora_only_hops} LoRa hops"), "92.5"))
    add(_compare(Item(s, "energy_savings", energy_savings(e_dual, e_flat) * 100, "%",
                      "dual vs LoRa-only inter-cluster path"), "79"))
    add(_compare(Item(s, "path_energy_ble_intra", e_intra * 1e3, "mJ",
                      f"{inp.intra_ble_hops} BLE hops"), "0.26"))
    mean2 = mean_message_energy(alpha, e_intra, e_dual)
    mean1 = mean_message_energy(alpha, e_intra_1, e_dual)
    add(_compare(Item(s, "mean_energy_2hop_intra", mean2 * 1e3, "mJ",
                      f"alpha={alpha:.4g}, intra {inp.intra_ble_hops} BLE hops"), "2.5"))
    add(_compare(Item(s, "mean_energy_1hop_intra", mean1 * 1e3, "mJ",
                      f"alpha={alpha:.4g}, intra 1 BLE hop"), "2.5",
                 note="one-hop reading of the intra-cluster cost"))

    # capacity
    s = "capacity"
    grid = [i / 10000 for i in range(0, 20001)]
    g_best = max(grid, key=aloha_throughput)
    add(_compare(Item(s, "aloha_peak_load", g_best, "G", "grid 0..2 step 1e-4"), "0.500"))
    add(_compare(Item(s, "aloha_peak_throughput", aloha_throughput(g_best), "S",
                      "grid 0..2 step 1e-4"), "0.184"))
    c_ble = ble_cluster_capacity(inp.s_max, t_ble, inp.ble_channels)
    add(_compare(Item(s, "ble_cluster_capacity", c_ble, "msg/s",
                      f"{inp.ble_channels} x {inp.s_max} / {t_ble * 1000:g} ms"), "110", 0.05,
                 note="literal evaluation; the published figure implies a packet time "
                      f"of {inp.ble_channels * inp.s_max / 110 * 1000:.2f} ms"))
    c_lora = lora_backbone_capacity(inp.s_max, t_lora)
    add(_compare(Item(s, f"lora_backbone_capacity_sf{sf}", c_lora, "msg/s",
                      f"{inp.s_max} / {t_lora * 1000:g} ms"), "0.50"))
    n_exact = max_network_size(c_lora * 60, alpha, inp.rate_per_node)
    add(Item(s, f"max_nodes_sf{sf}_exact", n_exact, "nodes",
             f"{c_lora * 60:.4g} msg/min, alpha={alpha:.4g}, r={inp.rate_per_node:g}/min"))
    n_round = max_network_size(inp.rounded_capacity_per_min, alpha, inp.rate_per_node)
    add(_compare(Item(s, f"max_nodes_sf{sf}_rounded_input", n_round, "nodes",
                      f"{inp.rounded_capacity_per_min:g} msg/min, alpha={alpha:.4g}, "
                      f"r={inp.rate_per_node:g}/min"), "250", 0.01))
    t7 = inp.lora_airtime(7)
    n7 = max_network_size(lora_backbone_capacity(inp.s_max, t7) * 60, alpha, inp.rate_per_node)
    add(_compare(Item(s, "max_nodes_sf7", n7, "nodes",
                      f"{inp.s_max} / {t7 * 1000:g} ms x 60, alpha={alpha:.4g}, "
                      f"r={inp.rate_per_node:g}/min"), "562", 0.05,
                 note="the published SF7 node count does not follow from the capacity "
                      "and network-size formulas"))

    # airtime
    s = "airtime"
    phy = LoraPhyConfig.for_sf(10)
    add(_compare(Item(s, "toa_formula_sf10_50B", lora_time_on_air(phy, 50) * 1000, "ms",
                      "SF10/125 kHz, CR 4/5, 8-symbol preamble, explicit header, CRC"),
                 "370", 0.05, note="the paper airtime mode uses the published value"))
    singles, aggregate, ratio = aggregation_airtime_ratio(phy)
    add(Item(s, "aggregate_frame_toa", aggregate * 1000, "ms",
             f"8 x {MAX_FRAGMENT_PAYLOAD} B fragments, SF10 formula"))
    add(Item(s, "single_fragment_frames_toa", singles * 1000, "ms",
             f"8 frames of one {MAX_FRAGMENT_PAYLOAD} B fragment, SF10 formula"))
    add(_compare(Item(s, "aggregation_airtime_ratio", ratio, "x", "singles / aggregate"), "5",
                 0.05, note="preamble and header overhead is too small at SF10 for a 5x gain"))

    # latency table
    s = "latency table (transmission time)"
    rows = (("intra_2hop", PathShape(inp.intra_ble_hops, 0), PathShape(0, 2), "0.032", "5.0"),
            ("inter_1_lora", PathShape(inp.inter_ble_hops, 1), PathShape(0, 1), "0.4", "2.5"),
            ("inter_2_lora", PathShape(inp.inter_ble_hops, 2), PathShape(0, 2), "0.8", "5.0"))
    for name, dual, flat, pub_dual, pub_flat in rows:
        if dual.lora_hops == 0:
            add(_compare(Item(s, f"{name}_ble_only", path_latency(dual, t_ble, t_lora), "s",
                              f"{dual.ble_hops} BLE x {t_ble * 1000:g} ms"), pub_dual))
        else:
            add(Item(s, f"{name}_ble_only", None, "s", "unreachable without a backbone"))
        add(_compare(Item(s, f"{name}_lora_only", path_latency(flat, t_ble, t_base), "s",
                          f"{flat.lora_hops} LoRa x {t_base * 1000:g} ms (SF{bsf})"), pub_flat))
        add(_compare(Item(s, f"{name}_dual", path_latency(dual, t_ble, t_lora), "s",
                          f"{dual.ble_hops} BLE x {t_ble * 1000:g} ms + {dual.lora_hops} LoRa x "
                          f"{t_lora * 1000:g} ms"), pub_dual))

    # battery table
    s = "battery table"
    listen = duty_cycled_current(inp.lora_rx_current_ma, inp.lora_sleep_current_ma,
                                 inp.listen_window_s / inp.listen_period_s)
    add(_compare(Item(s, "lora_listen_current", listen, "mA",
                      f"{inp.lora_rx_current_ma:g} mA x {inp.listen_window_s:g}/"
                      f"{inp.listen_period_s:g} s"), "0.28"))
    for name, current, pub in (("non_ch", inp.current_non_ch_ma, "3.2"),
                               ("ch", inp.current_ch_ma, "2.3"),
                               ("lora_only", inp.current_lora_only_ma, "1.6")):
        add(_compare(Item(s, f"battery_days_{name}", battery_life_days(inp.battery_mah, current),
                          "days", f"{inp.battery_mah:g} mAh / {current:g} mA"), pub))
    add(_compare(Item(s, "ch_current_from_parts", inp.current_non_ch_ma + listen, "mA",
                      f"non-CH {inp.current_non_ch_ma:g} mA + listen {listen:.4g} mA"),
                 f"{inp.current_ch_ma:g}", 0.02,
                 note="the head's average current is not the non-head current plus the "
                      "duty-cycled receive current"))

    # comparison table
    s = "comparison table"
    add(Item(s, "latency_2hop_ble_only", path_latency(PathShape(inp.intra_ble_hops, 0), t_ble),
             "s", f"{inp.intra_ble_hops} BLE hops"))
    add(Item(s, "latency_2hop_lora_only", path_latency(PathShape(0, 2), 0.0, t_base), "s",
             f"2 LoRa hops (SF{bsf})"))
    add(Item(s, "latency_2hop_dual", path_latency(PathShape(inp.intra_ble_hops, 0), t_ble), "s",
             f"{inp.intra_ble_hops} BLE hops"))
    add(Item(s, "energy_avg_ble_only", e_intra * 1e3, "mJ", f"{inp.intra_ble_hops} BLE hops"))
    add(Item(s, "energy_avg_lora_only", e_flat * 1e3, "mJ", f"{inp.lora_only_hops} LoRa hops"))
    add(Item(s, "energy_avg_dual", mean2 * 1e3, "mJ", f"alpha={alpha:.4g}"))
    add(Item(s, f"max_nodes_dual_sf{sf}", n_round, "nodes",
             f"{inp.rounded_capacity_per_min:g} msg/min input"))
    add(Item(s, "max_nodes_dual_sf7", n7, "nodes", "capacity formula at SF7"))
    add(Item(s, "max_nodes_ble_only", float(inp.ble_only_max_nodes), "nodes", "quoted input"))
    lo, hi = (float(x) for x in inp.lora_only_max_nodes.split("-"))
    add(Item(s, "max_nodes_lora_only_low", lo, "nodes", "quoted input"))
    add(Item(s, "max_nodes_lora_only_high", hi, "nodes", "quoted input"))
    add(Item(s, "coverage_ble_only", inp.ble_coverage_km, "km", "quoted input"))
    add(Item(s, "coverage_lora_only", inp.lora_coverage_km, "km", "quoted input"))
    add(Item(s, "coverage_dual", inp.lora_coverage_km, "km", "backbone range"))
    add(Item(s, "battery_ble_only", battery_life_days(inp.battery_mah, inp.current_non_ch_ma),
             "days", f"{inp.current_non_ch_ma:g} mA"))
    add(Item(s, "battery_lora_only",
             battery_life_days(inp.battery_mah, inp.current_lora_only_ma), "days",
             f"{inp.current_lora_only_ma:g} mA"))
    add(Item(s, "battery_dual_ch", battery_life_days(inp.battery_mah, inp.current_ch_ma), "days",
             f"{inp.current_ch_ma:g} mA"))
    add(Item(s, "battery_dual_non_ch",
             battery_life_days(inp.battery_mah, inp.current_non_ch_ma), "days",
             f"{inp.current_non_ch_ma:g} mA"))
    return rep
