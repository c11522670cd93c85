"""Theory-versus-implementation checks, one per acceptance criterion.

Each check returns a :class:`Check` carrying pass/fail, the measured values
and the tolerance it was judged against.  ``run_checks`` runs a selection and
``render`` prints one line per check.
"""

from __future__ import annotations

import importlib.resources
import math
import random
import time
from dataclasses import dataclass
from typing import Callable

from . import analytics as an
from .backbone import Backbone, aggregation_airtime_ratio
from .blemesh import link_quality
from .cluster import MAX_CLUSTER_DEPTH
from .footprint import RAM_BUDGET, max_footprint
from .fragmentation import ReassemblyBuffers, fragment_message
from .frames import (BLE_MAX_FRAME, BROADCAST, FLAG_CH, FLAG_DEMOTING, HDR_FLAG_DIGEST,
                     MAX_BEACON_NEIGHBORS, MAX_DIGEST_MEMBERS, MAX_FRAGMENT_PAYLOAD,
                     MAX_FRAGMENTS, MAX_MESSAGE_PAYLOAD, Beacon, BeaconNeighbor, DataFragment,
                     InterClusterHeader, LoraFrame, Rrep, Rreq, decode_frame, decode_lora_frame,
                     encode_frame)
from .report import analyze
from .sim.channel import GraphTopology, aloha_experiment
from .sim.engine import Simulation, run_scenario
from .sim.layouts import ring_clusters
from .sim.scenario import NodeSpec, ScenarioConfig, load_scenario

E_BLE = an.RadioProfile(an.BLE_TX_POWER_MW, an.PAPER_AIRTIMES.ble).per_packet_energy
E_LORA = an.RadioProfile(an.LORA_TX_POWER_MW, an.PAPER_AIRTIMES.lora_sf10).per_packet_energy


@dataclass
class Check:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.key}  {self.title}: {self.detail}"


def _close(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol


# -- closed forms --------------------------------------------------------------


def check_inter_cluster_ratio(**_) -> Check:
    a = an.inter_cluster_ratio(an.TrafficParams(0.82, 3))
    b = an.inter_cluster_ratio(an.TrafficParams(0.0, 3))
    ok = _close(a, 0.12, 1e-12) and _close(b, 2 / 3, 1e-12)
    return Check("c01", "inter-cluster ratio closed form", ok,
                 f"alpha(0.82,3)={a:.4f} alpha(0,3)={b:.4f} (tolerance 1e-12)")


def check_path_energy(**_) -> Check:
    dual = an.path_energy(an.PathShape(4, 1), E_BLE, E_LORA)
    flat = an.path_energy(an.PathShape(0, 5), E_BLE, E_LORA)
    saving = an.energy_savings(dual, flat)
    ok = (_close(dual, 19.012e-3, 1e-12) and _close(flat, 92.5e-3, 1e-12)
          and round(saving * 100) == 79)
    return Check("c02", "path energy and savings", ok,
                 f"dual={dual * 1e3:.3f} mJ lora-only={flat * 1e3:.3f} mJ "
                 f"savings={saving * 100:.1f}% (exact to 1e-12 J, savings rounds to 79%)")


def check_mean_energy(**_) -> Check:
    alpha = an.inter_cluster_ratio(an.TrafficParams(0.82, 3))
    dual = an.path_energy(an.PathShape(4, 1), E_BLE, E_LORA)
    two = an.mean_message_energy(alpha, an.path_energy(an.PathShape(2, 0), E_BLE), dual)
    one = an.mean_message_energy(alpha, an.path_energy(an.PathShape(1, 0), E_BLE), dual)
    ok = 2.4e-3 <= two <= 2.6e-3 and round(two * 1e3, 2) == 2.51 and round(one * 1e3, 2) == 2.39
    return Check("c03", "mean message energy", ok,
                 f"2-hop intra {two * 1e3:.2f} mJ (in [2.4, 2.6]); 1-hop intra {one * 1e3:.2f} mJ")


def check_aloha(seed: int = 1, **_) -> Check:
    grid = [i / 10000 for i in range(0, 20001)]
    g = max(grid, key=an.aloha_throughput)
    s = an.aloha_throughput(g)
    m = aloha_experiment(0.5, 20000, random.Random(f"{seed}:aloha"))
    ok = (_close(g, 0.5, 0.001) and _close(s, 0.1839, 0.0001) and m.frames >= 10_000
          and _close(m.throughput, 0.184, 0.03))
    return Check("c04", "ALOHA peak and Monte-Carlo", ok,
                 f"grid peak G={g:.4f} S={s:.4f}; simulated S={m.throughput:.4f} at "
                 f"G={m.offered_load:.4f} over {m.frames} frames (G 0.5±0.001, S 0.1839±0.0001, "
                 f"MC 0.184±0.03)")


def check_backbone_capacity(**_) -> Check:
    alpha = an.inter_cluster_ratio(an.TrafficParams(0.82, 3))
    c = an.lora_backbone_capacity(0.184, an.PAPER_AIRTIMES.lora_sf10)
    exact = an.max_network_size(c * 60, alpha, 1.0)
    rounded = an.max_network_size(30.0, alpha, 1.0)
    ok = round(c, 3) == 0.497 and round(exact, 1) == 248.6 and math.isclose(rounded, 250,
                                                                             rel_tol=0.01)
    return Check("c05", "backbone capacity and network size", ok,
                 f"C_LoRa={c:.3f} msg/s, N_max exact={exact:.1f}, from 30 msg/min={rounded:.1f} "
                 f"(within 1% of 250)")


def check_latency_table(**_) -> Check:
    t_b, t_l, t_12 = an.PAPER_AIRTIMES.ble, an.PAPER_AIRTIMES.lora_sf10, an.PAPER_AIRTIMES.lora_sf12
    dual = [an.path_latency(an.PathShape(2, 0), t_b, t_l),
            an.path_latency(an.PathShape(4, 1), t_b, t_l),
            an.path_latency(an.PathShape(4, 2), t_b, t_l)]
    flat = [an.path_latency(an.PathShape(0, 2), 0, t_12),
            an.path_latency(an.PathShape(0, 1), 0, t_12),
            an.path_latency(an.PathShape(0, 2), 0, t_12)]
    ok = (all(_close(v, t, 1e-12) for v, t in zip(dual, (0.032, 0.434, 0.804)))
          and all(_close(v, t, 1e-12) for v, t in zip(flat, (5.0, 2.5, 5.0))))
    return Check("c06", "latency table (published airtimes)", ok,
                 "dual " + " / ".join(f"{v * 1000:.0f} ms" for v in dual)
                 + "; LoRa-only " + " / ".join(f"{v:.1f} s" for v in flat))


def check_battery_table(**_) -> Check:
    days = [an.battery_life_days(500, i) for i in (6.5, 9.2, 12.8)]
    listen = an.duty_cycled_current(4.2, 0.0, 2 / 30)
    ok = ([round(d, 2) for d in days] == [3.21, 2.26, 1.63]
          and [round(d, 1) for d in days] == [3.2, 2.3, 1.6] and _close(listen, 0.28, 1e-12))
    return Check("c07", "battery table", ok,
                 " / ".join(f"{d:.2f}" for d in days) + f" days; listen current {listen:.2f} mA")


# -- simulation ----------------------------------------------------------------


def criterion8_config(seed: int = 1, airtime_mode: str = "formula") -> ScenarioConfig:
    return ScenarioConfig(nodes=ring_clusters(3, 10), duration=1230.0, seed=seed,
                          airtime_mode=airtime_mode,
                          traffic=an.TrafficParams(0.82, 3, 10.0), traffic_start=30.0)


def check_simulated_locality(seed: int = 1, airtime_mode: str = "formula",
                             lq_fn: Callable[[int], int] = link_quality, **_) -> Check:
    cfg = criterion8_config(seed, airtime_mode)
    t0 = time.perf_counter()
    rep = run_scenario(cfg, lq_fn=lq_fn)
    elapsed = time.perf_counter() - t0
    generated = sum(not m.scripted for m in rep.messages)
    alpha, share = rep.measured_alpha, rep.ble_carried_share()
    ok = generated >= 5000 and _close(alpha, 0.12, 0.01) and 0.82 <= share <= 0.90 and elapsed < 30
    return Check("c08", "simulated locality vs closed form", ok,
                 f"{generated} messages, measured alpha={alpha:.4f} (0.12±0.01), "
                 f"kept on BLE={share:.4f} (0.82..0.90), runtime {elapsed:.1f} s (< 30 s)")


def fig1_report():
    path = importlib.resources.files("dualmesh.scenarios") / "fig1.scenario"
    return run_scenario(load_scenario(str(path)))


def check_fig1(**_) -> Check:
    rep = fig1_report()
    scripted = [m for m in rep.messages if m.scripted]
    if len(scripted) != 1:
        return Check("c09", "two-cluster end-to-end", False, f"{len(scripted)} scripted messages")
    m = scripted[0]
    shape = an.PathShape(4, 1)
    e = an.path_energy(shape, E_BLE, E_LORA)
    t = an.path_latency(shape, an.PAPER_AIRTIMES.ble, an.PAPER_AIRTIMES.lora_sf10)
    ok = m.fate == "delivered" and m.hops == "BBLBB" and m.energy == e and m.latency == t
    return Check("c09", "two-cluster end-to-end", ok,
                 f"fate={m.fate} hops={m.hops or '-'} energy={m.energy * 1e3:.3f} mJ "
                 f"(closed form {e * 1e3:.3f}) latency={m.latency * 1e3:.3f} ms "
                 f"(closed form {t * 1e3:.3f}); exact equality")


# -- election ------------------------------------------------------------------


def connected_graphs(max_nodes: int = 6):
    """Every connected graph on 1..max_nodes vertices, one per isomorphism class."""
    import networkx as nx

    for g in nx.graph_atlas_g():
        if 1 <= g.number_of_nodes() <= max_nodes and nx.is_connected(g):
            yield g


def clustering_valid(sim: Simulation, hops: dict[int, dict[int, int]]) -> bool:
    """Every cluster has exactly one head, named by the cluster id, within reach."""
    state = {n: rt.node.election for n, rt in sim.rt.items()}
    for n, e in state.items():
        head = state.get(e.cluster)
        if head is None or not head.is_ch or head.cluster != e.cluster:
            return False
        if e.is_ch and e.cluster != n:
            return False
        if hops[n].get(e.cluster, math.inf) > MAX_CLUSTER_DEPTH:
            return False
    return True


@dataclass
class ElectionRun:
    nodes: int
    converged: bool
    settle: float  # last role change minus quiescence
    demotion_ok: bool
    demotion_settle: float
    edges: tuple = ()
    victim: int | None = None
    stranded: bool = False  # victim still heads a valid clustering: no neighbour can adopt it


DEMOTE_AT = 45.0
ELECTION_END = 75.0


def election_trial(graph, labels: dict, seed: int = 1, beacon_interval: float = 3.0,
                   lq_fn: Callable[[int], int] = link_quality) -> ElectionRun:
    import networkx as nx

    ids = sorted(labels.values())
    links = [(labels[a], labels[b]) for a, b in graph.edges]
    cfg = ScenarioConfig(nodes=tuple(NodeSpec(i, 0.0, 0.0) for i in ids), duration=ELECTION_END,
                         seed=seed, beacon_interval=beacon_interval, check_invariants=True)
    sim = Simulation(cfg, lq_fn=lq_fn, topology=GraphTopology(ids, links))
    relabeled = nx.relabel_nodes(graph, labels)
    hops = {n: dict(nx.single_source_shortest_path_length(relabeled, n)) for n in ids}
    track = {"snap": None, "changed": 0.0, "q_before": 0.0, "valid_before": False,
             "changed_before": 0.0, "victim": None,
             "demote_at": DEMOTE_AT}

    def observe(s: Simulation) -> None:
        snap = tuple((n, rt.node.election.role, rt.node.election.cluster)
                     for n, rt in sorted(s.rt.items()))
        if snap != track["snap"]:
            track["snap"] = snap
            track["changed"] = s.now
        if s.now < DEMOTE_AT:
            track["q_before"] = s.quiescence
            track["changed_before"] = track["changed"]
            track["valid_before"] = clustering_valid(s, hops)
        if track["victim"] is None and len(ids) > 1 and s.now >= DEMOTE_AT - 1.0:
            heads = [n for n, rt in s.rt.items() if rt.node.is_ch]
            track["victim"] = max(heads, key=lambda n: s.rt[n].node.election.rank)
            track["demote_at"] = max(DEMOTE_AT, s.now)
            s.schedule_battery(track["demote_at"], track["victim"], 10)

    sim.observers.append(observe)
    sim.run()
    settle = track["changed_before"] - track["q_before"]
    converged = track["valid_before"] and settle <= 2 * beacon_interval + 1e-9
    if len(ids) == 1:
        return ElectionRun(1, converged, settle, True, 0.0, ())
    start = max(track["demote_at"], sim.quiescence)
    d_settle = track["changed"] - start
    victim = sim.rt[track["victim"]].node
    valid = clustering_valid(sim, hops)
    demotion_ok = valid and not victim.is_ch and d_settle <= 2 * beacon_interval + 1e-9
    return ElectionRun(len(ids), converged, settle, demotion_ok, d_settle,
                       tuple(sorted(tuple(sorted(e)) for e in links)), track["victim"],
                       valid and victim.is_ch)


def check_election(seed: int = 1, **_) -> Check:
    runs = []
    for g in connected_graphs(6):
        for order in (sorted(g.nodes), sorted(g.nodes, reverse=True)):
            runs.append(election_trial(g, {v: i + 1 for i, v in enumerate(order)}, seed=seed))
    bad = [r for r in runs if not (r.converged and r.demotion_ok)]
    worst = max(r.settle for r in runs)
    worst_d = max(r.demotion_settle for r in runs)
    detail = (f"{len(runs)} runs over {len(runs) // 2} connected topologies of <= 6 nodes, "
              f"{len(bad)} failed; slowest settle {worst:.2f} s after quiescence, slowest "
              f"demotion handover {worst_d:.2f} s (limit 6 s each)")
    for r in bad:
        why = ("victim kept the head role, no neighbour can adopt it within "
               f"{MAX_CLUSTER_DEPTH} hops" if r.stranded else "invalid or late clustering")
        detail += f"\n      links {list(r.edges)} victim {r.victim}: {why}"
    return Check("c10", "cluster-head election", not bad, detail)


# -- state, codec, aggregation -------------------------------------------------


def check_footprint(**_) -> Check:
    used = max_footprint()
    return Check("c11", "protocol state budget", used <= RAM_BUDGET,
                 f"{used} B at every table's cap (limit {RAM_BUDGET} B)")


def random_frame(rng: random.Random):
    u16 = lambda: rng.randrange(0x10000)  # noqa: E731
    kind = rng.randrange(6)
    if kind == 0:
        flags = rng.choice((0, FLAG_CH, FLAG_DEMOTING, FLAG_CH | FLAG_DEMOTING)) | (
            rng.randrange(4) << 2)
        return Beacon(node=u16(), advertised_key=u16(), flags=flags,
                      battery_pct=rng.randrange(101), cluster=u16(),
                      neighbors=tuple(BeaconNeighbor(u16(), rng.randrange(256))
                                      for _ in range(rng.randrange(MAX_BEACON_NEIGHBORS + 1))))
    if kind == 1:
        return Rreq(rreq_id=rng.randrange(256), origin=u16(), origin_seq=u16(), dest=u16(),
                    dest_seq=u16(), hop_count=rng.randrange(256), path_cost=u16(),
                    ttl=rng.randrange(256))
    if kind == 2:
        return Rrep(origin=u16(), dest=u16(), dest_seq=u16(), hop_count=rng.randrange(256),
                    path_cost=u16(), lifetime=rng.randrange(256), rreq_id=rng.randrange(256),
                    ttl=rng.randrange(256))
    if kind == 3:
        return _random_fragment(rng, to_ch=rng.random() < 0.3)
    header = InterClusterHeader(dest_ch=u16(), hop_limit=rng.randrange(16),
                                backbone_seq=rng.randrange(256))
    if kind == 4:
        header = InterClusterHeader(header.dest_ch, header.hop_limit, HDR_FLAG_DIGEST,
                                    header.backbone_seq)
        return LoraFrame(header=header, src_ch=u16(),
                         members=tuple(u16() for _ in range(rng.randrange(MAX_DIGEST_MEMBERS + 1))))
    frags = tuple(_random_fragment(rng) for _ in range(rng.randrange(1, MAX_FRAGMENTS + 1)))
    return LoraFrame(header=header, src_ch=u16(), fragments=frags)


def _random_fragment(rng: random.Random, to_ch: bool = False) -> DataFragment:
    count = rng.randrange(1, MAX_FRAGMENTS + 1)
    return DataFragment(src=rng.randrange(0x10000), dst=rng.randrange(0x10000),
                        msg_seq=rng.randrange(0x10000), frag_index=rng.randrange(count),
                        frag_count=count,
                        payload=rng.randbytes(rng.randrange(MAX_FRAGMENT_PAYLOAD + 1)),
                        ttl=rng.randrange(256), to_ch=to_ch)


def check_codec(seed: int = 1, frames: int = 100_000, messages: int = 2000, **_) -> Check:
    rng = random.Random(f"{seed}:codec")
    failures = oversize = 0
    for _ in range(frames):
        f = random_frame(rng)
        data = encode_frame(f)
        if isinstance(f, LoraFrame):
            back = decode_lora_frame(data)
        else:
            back = decode_frame(data)
            oversize += len(data) > BLE_MAX_FRAME
        failures += back != f
    reasm_fail = 0
    for seq in range(messages):
        payload = rng.randbytes(rng.randrange(1, MAX_MESSAGE_PAYLOAD + 1))
        frags = fragment_message(rng.randrange(1, 0xFFFF), BROADCAST - 1, seq, payload)
        arrivals = frags + [rng.choice(frags) for _ in range(rng.randrange(4))]
        rng.shuffle(arrivals)
        buffers = ReassemblyBuffers()
        got = [p for p in (buffers.add(f, 0.0) for f in arrivals) if p is not None]
        reasm_fail += not got or got[0] != payload
    ok = failures == 0 and oversize == 0 and reasm_fail == 0
    return Check("c12", "codec and fragmentation properties", ok,
                 f"{frames} frames round-tripped with {failures} mismatches, {oversize} BLE "
                 f"frames over {BLE_MAX_FRAME} B; {messages} messages reassembled from shuffled, "
                 f"duplicated fragments with {reasm_fail} failures")


def check_aggregation(**_) -> Check:
    bb = Backbone(1)
    frags = fragment_message(5, 9, 1, bytes(range(MAX_MESSAGE_PAYLOAD)))
    out = bb.enqueue_for_backbone(True, frags, 9, 0.0)
    singles, aggregate, ratio = aggregation_airtime_ratio(an.LoraPhyConfig.for_sf(10))
    flagged = analyze().item("aggregation_airtime_ratio").status == "DISCREPANCY"
    ok = (len(out) == 1 and out[0].fragment_count == MAX_FRAGMENTS and ratio >= 2.0 and flagged)
    return Check("c13", "fragment aggregation", ok,
                 f"{len(out)} frame(s) with {out[0].fragment_count if out else 0} fragments for a "
                 f"{MAX_MESSAGE_PAYLOAD} B message; SF10 airtime 8 singles {singles * 1e3:.1f} ms vs "
                 f"aggregate {aggregate * 1e3:.1f} ms, ratio {ratio:.3f} (>= 2.0); 5x flagged as "
                 f"not reproduced: {flagged}")


def check_discrepancy_flags(**_) -> Check:
    rep = analyze()
    flags = {it.name: it for it in rep.flags}
    eq7 = flags.get("ble_cluster_capacity")
    sf7 = flags.get("max_nodes_sf7")
    ok = (eq7 is not None and round(eq7.value, 1) == 34.5 and eq7.published == "110"
          and sf7 is not None and 1750 <= sf7.value <= 1850 and sf7.published == "562")
    return Check("c14", "documented discrepancy flags", ok,
                 f"cluster capacity {eq7.value if eq7 else float('nan'):.1f} vs 110 flagged: "
                 f"{eq7 is not None}; SF7 size {sf7.value if sf7 else float('nan'):.0f} vs 562 "
                 f"flagged: {sf7 is not None}")


def check_path_cost(seed: int = 1, lq_fn: Callable[[int], int] = link_quality, **_) -> Check:
    cfg = ScenarioConfig(nodes=ring_clusters(2, 10), duration=200.0, seed=seed,
                         traffic=an.TrafficParams(0.82, 2, 4.0), traffic_start=30.0)
    rep = run_scenario(cfg, lq_fn=lq_fn)
    checked = rep.counters.get("path_cost_checked", 0)
    bad = rep.counters.get("path_cost_mismatch", 0)
    ok = checked > 0 and bad == 0
    return Check("path_cost", "installed route costs vs true links", ok,
                 f"{checked} route installs checked against reference LQ, {bad} mismatches")


CHECKS: dict[str, Callable[..., Check]] = {
    "c01": check_inter_cluster_ratio,
    "c02": check_path_energy,
    "c03": check_mean_energy,
    "c04": check_aloha,
    "c05": check_backbone_capacity,
    "c06": check_latency_table,
    "c07": check_battery_table,
    "c08": check_simulated_locality,
    "c09": check_fig1,
    "c10": check_election,
    "c11": check_footprint,
    "c12": check_codec,
    "c13": check_aggregation,
    "c14": check_discrepancy_flags,
    "path_cost": check_path_cost,
}


def run_checks(keys: list[str] | None = None, **kwargs) -> list[Check]:
    out = []
    for key in keys or list(CHECKS):
        if key not in CHECKS:
            raise KeyError(f"unknown check {key!r}; choose from {', '.join(CHECKS)}")
        t0 = time.perf_counter()
        result = CHECKS[key](**kwargs)
        result.seconds = time.perf_counter() - t0
        out.append(result)
    return out


def render(results: list[Check]) -> str:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)
