import pytest

from dualmesh import analytics as an
from dualmesh.report import AnalysisInputs, analyze, matches_printed


def test_defaults_trace_to_closed_forms():
    rep = analyze()
    alpha = an.inter_cluster_ratio(an.TrafficParams(0.82, 3))
    assert rep.item("inter_cluster_ratio").value == alpha
    e_b = an.radio_energy_per_packet(an.RadioProfile(8.0, 0.016))
    e_l = an.radio_energy_per_packet(an.RadioProfile(50.0, 0.370))
    # energies are reported in mJ and ratios in percent
    dual = an.path_energy(an.PathShape(4, 1), e_b, e_l)
    assert rep.item("path_energy_dual_inter").value == dual * 1e3
    assert rep.item("energy_savings").value == pytest.approx(100 * (1 - 19.012 / 92.5))
    assert round(rep.item("max_nodes_sf10_exact").value, 1) == 248.6


def test_dual_column_values():
    rep = analyze()
    assert rep.item("intra_2hop_dual").value == pytest.approx(0.032)
    assert rep.item("mean_energy_2hop_intra").value == pytest.approx(2.50672)
    assert rep.item("max_nodes_sf10_rounded_input").value == pytest.approx(250)


def test_beta_sweep_endpoints():
    rep = analyze()
    assert rep.item("alpha(beta=0)").value == pytest.approx(2 / 3)
    assert rep.item("alpha(beta=1)").value == 0.0


def test_discrepancies_are_always_flagged():
    for mode in ("paper", "formula"):
        names = {it.name for it in analyze(AnalysisInputs(airtime_mode=mode)).flags}
        assert {"ble_cluster_capacity", "max_nodes_sf7", "aggregation_airtime_ratio"} <= names


def test_render_lists_flags_and_savings():
    text = analyze().render()
    assert "FLAG ble_cluster_capacity" in text and "FLAG max_nodes_sf7" in text
    assert "energy_savings" in text and "79.45 %" in text


def test_invalid_inputs_name_the_field():
    with pytest.raises(ValueError, match="airtime_mode"):
        AnalysisInputs(airtime_mode="guess")
    with pytest.raises(ValueError, match="listen_window_s"):
        AnalysisInputs(listen_window_s=40.0)


@pytest.mark.parametrize("value,printed,ok", [(0.4339, "0.4", True), (2.264, "2.3", True),
                                              (34.5, "110", False), (248.6, "250", False)])
def test_matches_printed(value, printed, ok):
    assert matches_printed(value, printed) is ok
