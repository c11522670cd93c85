import random

import pytest

from dualmesh.analytics import TrafficParams
from dualmesh.sim.channel import (Outcome, Radio, Topology, Transmission, measure_offered_load,
                                  propagate)
from dualmesh.sim.engine import run_scenario
from dualmesh.sim.layouts import ring_clusters
from dualmesh.sim.metrics import MetricsReport
from dualmesh.sim.scenario import ScenarioConfig, ScenarioError, apply_param, parse_scenario
from dualmesh.sim.traffic import generate_traffic

BLE = Radio.BLE


def line_topology(*xs):
    return Topology({i + 1: (x, 0.0) for i, x in enumerate(xs)}, {BLE: 800.0, Radio.LORA: 5000.0})


def tx(i, sender, start, end):
    return Transmission(id=i, sender=sender, radio=BLE, start=start, end=end)


def test_propagate_range():
    topo = line_topology(0, 700, 1600)
    out = propagate(tx(0, 1, 0.0, 0.016), topo, [])
    assert out[2] is Outcome.RECEIVED
    assert out[3] is Outcome.OUT_OF_RANGE


def test_overlap_at_common_receiver_loses_both():
    topo = line_topology(0, 500, 1000)
    a, b = tx(0, 1, 0.0, 0.016), tx(1, 3, 0.008, 0.024)
    assert propagate(a, topo, [a, b], receivers=[2])[2] is Outcome.COLLISION
    assert propagate(b, topo, [a, b], receivers=[2])[2] is Outcome.COLLISION


def test_load_measurement_edges():
    one = tx(0, 1, 1.0, 1.5)
    one.success = True
    m = measure_offered_load([one], 0.0, 10.0)
    assert m.success_fraction == 1.0 and m.offered_load == pytest.approx(0.05)
    assert measure_offered_load([], 0.0, 10.0).offered_load == 0.0
    assert measure_offered_load([one], 5.0, 5.0).offered_load == 0.0


def membership(clusters=3, per=10):
    return {c * per + k + 1: c for c in range(clusters) for k in range(per)}


def inter_fraction(beta, n=6000, seed=1):
    msgs = generate_traffic(TrafficParams(beta, 3, 10.0), membership(), random.Random(seed),
                            max_messages=n)
    return sum(m.inter_cluster for m in msgs) / len(msgs)


def test_full_locality_keeps_traffic_local():
    assert inter_fraction(1.0, n=2000) == 0.0


def test_no_locality_approaches_two_thirds():
    assert inter_fraction(0.0, n=20000) == pytest.approx(2 / 3, abs=0.01)


def test_locality_bias_matches_closed_form():
    assert inter_fraction(0.82) == pytest.approx(0.12, abs=0.01)


TWO_NODES = """
[scenario]
duration = 60
seed = 3
airtime_mode = paper

[nodes]
1 = 0, 0
2 = 500, 0

[messages]
m = 30.0, 1, 2, 50
"""


def test_single_link_message_latency():
    rep = run_scenario(parse_scenario(TWO_NODES))
    (m,) = [m for m in rep.messages if m.scripted]
    assert m.fate == "delivered"
    assert m.ble_tx == 4 and m.lora_tx == 0
    assert m.latency == pytest.approx(4 * 0.016, abs=1e-12)


def small_traffic_config(seed=5, **kw):
    return ScenarioConfig(nodes=ring_clusters(2, 6), duration=150.0, seed=seed,
                          traffic=TrafficParams(0.8, 2, 6.0), traffic_start=30.0,
                          check_invariants=True, **kw)


def test_same_seed_same_report():
    a = run_scenario(small_traffic_config()).to_csv()
    b = run_scenario(small_traffic_config()).to_csv()
    assert a == b


def test_different_seed_differs():
    a = run_scenario(small_traffic_config(seed=5)).to_csv()
    b = run_scenario(small_traffic_config(seed=6)).to_csv()
    assert a != b


def test_csv_round_trip():
    rep = run_scenario(small_traffic_config())
    back = MetricsReport.from_csv(rep.to_csv())
    assert back == rep
    assert back.to_csv() == rep.to_csv()


def test_every_message_accounted_for():
    rep = run_scenario(small_traffic_config())
    fates = rep.fates()
    assert sum(fates.values()) == rep.originated > 0
    assert rep.delivered > 0


def test_unknown_key_is_rejected_with_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("[scenario]\nduration = 10\ncolour = blue\n[nodes]\n1 = 0, 0\n")
    assert err.value.line == 3 and "colour" in str(err.value)


def test_bad_number_names_field():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("[scenario]\nduration = soon\n[nodes]\n1 = 0, 0\n")
    assert "duration" in str(err.value)


def test_message_to_unknown_node_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario("[scenario]\nduration = 10\n[nodes]\n1 = 0, 0\n2 = 10, 0\n"
                       "[messages]\nm = 1.0, 1, 9, 10\n")


def test_apply_param():
    cfg = small_traffic_config()
    assert apply_param(cfg, "traffic.beta", "0.5").traffic.beta == 0.5
    assert apply_param(cfg, "seed", "9").seed == 9
    with pytest.raises(ScenarioError):
        apply_param(cfg, "nodes", "1")
