import json

import pytest

from kanesim import hamiltonian as hm
from kanesim.cli import main


def test_params_show_echoes_table(capsys):
    assert main(["params", "show", "--preset", "table1"]) == 0
    out = capsys.readouterr().out
    for desc, sym, value in hm.TABLE1_ROWS:
        assert desc in out and value in out
    assert "0.1211 x 10^-3 meV" in out
    assert "0.0423 meV" in out


def test_params_show_json(capsys):
    assert main(["params", "show", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["J_U"] == 0.0423


def test_gate_table(capsys):
    assert main(["gate", "--name", "cnot", "--t2e", "60e-3", "--t2n", "1.0"]) == 0
    out = capsys.readouterr().out
    assert "Systematic Error" in out and "Typical Error" in out
    assert "|00+11>" in out and "Maximum" in out
    assert len(out.strip().splitlines()) == 2 + 9


def test_gate_csv(tmp_path, capsys):
    path = tmp_path / "x.csv"
    assert main(["gate", "--name", "x", "--gamma-e", "0", "--gamma-n", "10", "--csv", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "gate,state,gamma_e,gamma_n,fidelity,error"
    assert len(lines) == 1 + 2 * 3


def test_sweep_z_plus_log_grid(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["sweep", "--gate", "z", "--probe", "+", "--grid-log", "1", "1e8", "17",
                 "--output", str(out), "--workers", "1"]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) - 1 == 289


def test_sweep_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": {"gamma_e_values": [0.0], "gamma_n_values": [0.0, 1.0], "gate": "x"},
                               "workers": 1, "output": str(tmp_path / "o.csv")}))
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert len((tmp_path / "o.csv").read_text().splitlines()) == 1 + 2 * 3


def test_free_evolution_cli(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["free-evolution", "--t2n", "1.0", "--duration", "1", "--samples", "3", "-o", str(out)]) == 0
    last = out.read_text().splitlines()[-1].split(",")
    assert float(last[0]) == 1.0
    assert float(last[1]) == pytest.approx(0.367879441171, rel=1e-10)


def test_calibrate_cli(tmp_path):
    out = tmp_path / "z.json"
    assert main(["calibrate", "--gate", "z(pi/2)", "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["target_gate"]["name"] == "Z"
    assert data["calibration"]["max_error"] < 1e-5


@pytest.mark.parametrize("argv", [
    [], ["gate"], ["sweep", "--grid-log", "1", "2"], ["free-evolution", "--duration", "-1"],
    ["gate", "--name", "x", "--t2n", "abc"], ["params"], ["bogus"],
])
def test_bad_flags_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    for cmd in (["--help"], ["gate", "--help"], ["sweep", "--help"], ["calibrate", "--help"],
                ["free-evolution", "--help"], ["params", "show", "--help"]):
        with pytest.raises(SystemExit) as exc:
            main(cmd)
        assert exc.value.code == 0


@pytest.mark.parametrize("argv", [
    ["gate", "--name", "toffoli"],
    ["gate", "--name", "x", "--sequence", "/nonexistent/seq.json"],
    ["params", "show", "--preset", "nope"],
    ["sweep", "--config", "/nonexistent.json"],
])
def test_runtime_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err
