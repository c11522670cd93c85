"""Acceptance criteria 1-14, each judged at its stated tolerance.

Every test runs the matching check from ``dualmesh.validate`` and records its
one-line verdict; ``conftest.py`` prints the verdicts as a block at the end
of the run.  Independent asserts on the headline numbers sit next to each
check so a criterion cannot pass on the check's own arithmetic alone.
"""

import math

import pytest

from dualmesh import analytics as an
from dualmesh import validate as v
from dualmesh.blemesh import link_quality

VERDICTS: dict[str, str] = {}


def run(key, **kwargs):
    result = v.run_checks([key], **kwargs)[0]
    VERDICTS[key] = result.line()
    print(result.line())
    return result


def test_criterion_01_inter_cluster_ratio():
    r = run("c01")
    assert an.inter_cluster_ratio(an.TrafficParams(0.82, 3)) == pytest.approx(0.12, abs=1e-12)
    assert an.inter_cluster_ratio(an.TrafficParams(0.0, 3)) == pytest.approx(2 / 3, abs=1e-12)
    assert r.passed, r.detail


def test_criterion_02_path_energy_and_savings():
    r = run("c02")
    assert v.E_BLE == pytest.approx(128e-6) and v.E_LORA == pytest.approx(18.5e-3)
    assert r.passed, r.detail


def test_criterion_03_mean_energy():
    r = run("c03")
    assert r.passed, r.detail


def test_criterion_04_aloha():
    r = run("c04")
    assert r.seconds < 10.0
    assert r.passed, r.detail


def test_criterion_05_backbone_capacity():
    r = run("c05")
    assert r.passed, r.detail


def test_criterion_06_latency_table():
    r = run("c06")
    assert r.passed, r.detail


def test_criterion_07_battery_table():
    r = run("c07")
    assert r.passed, r.detail


def test_criterion_08_simulated_locality():
    r = run("c08")
    assert r.passed, r.detail


def test_criterion_09_two_cluster_end_to_end():
    r = run("c09")
    assert r.passed, r.detail


def test_criterion_10_election():
    r = run("c10")
    assert r.passed, r.detail


def test_criterion_11_state_budget():
    r = run("c11")
    assert r.passed, r.detail


def test_criterion_12_codec_properties():
    r = run("c12")
    assert r.passed, r.detail


def test_criterion_13_aggregation():
    r = run("c13")
    assert r.passed, r.detail


def test_criterion_14_discrepancy_flags():
    r = run("c14")
    assert r.passed, r.detail


def test_path_cost_check_passes_with_reference_link_quality():
    r = run("path_cost")
    assert r.passed, r.detail


def test_path_cost_check_catches_mistuned_link_quality():
    def mistuned(rssi):
        return max(0, min(255, 2 * (rssi + 110)))

    assert any(mistuned(r) != link_quality(r) for r in range(-110, -39))
    r = v.check_path_cost(lq_fn=mistuned)
    assert not r.passed, r.detail
    assert not math.isnan(float(r.detail.split()[0]))
