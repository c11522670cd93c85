import importlib.resources

from dualmesh import cli, validate
from dualmesh.sim.engine import InvariantViolation
from dualmesh.sim.metrics import MetricsReport

FIG1 = str(importlib.resources.files("dualmesh.scenarios") / "fig1.scenario")

TRAFFIC = """
[scenario]
duration = 80
seed = 2

[traffic]
beta = 0.8
rate_per_node = 6
start = 30

[nodes]
1 = 0, 0
2 = 300, 0
3 = 600, 0
4 = 3000, 0
5 = 3300, 0
6 = 3600, 0
"""


def test_analyze_prints_tables_and_flags(capsys):
    assert cli.main(["analyze"]) == 0
    out = capsys.readouterr().out
    assert "discrepancy flags" in out and "FLAG max_nodes_sf7" in out


def test_analyze_csv(capsys):
    assert cli.main(["analyze", "--csv", "--airtime-mode", "formula"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert header.startswith("section,name,value")


def test_analyze_bad_input_exit_2(capsys):
    assert cli.main(["analyze", "--beta", "1.5"]) == 2
    assert "beta" in capsys.readouterr().err


def test_simulate_fig1(capsys):
    assert cli.main(["simulate", FIG1]) == 0
    out = capsys.readouterr().out
    assert "delivered via inter_1_lora, 4 BLE + 1 LoRa" in out


def test_simulate_malformed_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text("[scenario]\nduration = 10\nwidth = 3\n[nodes]\n1 = 0, 0\n")
    assert cli.main(["simulate", str(bad)]) == 2
    assert "width" in capsys.readouterr().err


def test_simulate_missing_file_exit_2(tmp_path):
    assert cli.main(["simulate", str(tmp_path / "none.scenario")]) == 2


def test_seeded_csv_is_byte_identical(tmp_path, capsys):
    path = tmp_path / "t.scenario"
    path.write_text(TRAFFIC)
    outs = []
    for _ in range(2):
        assert cli.main(["simulate", str(path), "--seed", "7", "--csv"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert MetricsReport.from_csv(outs[0]).run.seed == 7


def test_simulate_writes_out_dir(tmp_path):
    assert cli.main(["simulate", FIG1, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "summary.txt").exists()
    assert (tmp_path / "o" / "metrics.csv").read_text().startswith("schema_version,")


def test_invariant_violation_exit_3(monkeypatch):
    def boom(cfg):
        raise InvariantViolation("copy count went negative")
    monkeypatch.setattr(cli, "run_scenario", boom)
    assert cli.main(["simulate", FIG1]) == 3


def test_sweep_with_workers(tmp_path, capsys):
    path = tmp_path / "t.scenario"
    path.write_text(TRAFFIC)
    out = tmp_path / "sweep"
    assert cli.main(["sweep", str(path), "--param", "traffic.beta", "--values", "0.5,1.0",
                     "--workers", "2", "--out", str(out)]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("value,")
    assert (out / "run_traffic.beta_0.5.csv").exists()


def test_sweep_is_independent_of_worker_count(tmp_path, capsys):
    path = tmp_path / "t.scenario"
    path.write_text(TRAFFIC)
    texts = []
    for workers in ("1", "2"):
        assert cli.main(["sweep", str(path), "--param", "seed", "--values", "3,4", "--csv",
                         "--workers", workers]) == 0
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1]


def test_sweep_bad_param_exit_2(capsys):
    assert cli.main(["sweep", FIG1, "--param", "colour", "--values", "1"]) == 2


def test_validate_subset(capsys):
    assert cli.main(["validate", "--checks", "c01,c02,c11"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "3/3 checks passed" in out


def test_validate_unknown_check_exit_2():
    assert cli.main(["validate", "--checks", "c99"]) == 2


def test_validate_failure_exit_4(monkeypatch, capsys):
    monkeypatch.setitem(validate.CHECKS, "c01",
                        lambda **_: validate.Check("c01", "forced", False, "forced failure"))
    assert cli.main(["validate", "--checks", "c01"]) == 4
    assert "FAIL  c01" in capsys.readouterr().out


def test_usage_error_exit_2():
    assert cli.main(["nonsense"]) == 2
