import csv
import json

from hyfi_ee.cli import main
from hyfi_ee.convex_solver import ConvexProgram, format_program
import numpy as np


def test_optimize_command(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    channels = tmp_path / "channels.csv"
    code = main(["optimize", "--seed", "7", "--slices", "eMBB,URLLC,mMTC",
                 "--trace-out", str(trace), "--dump-channels", str(channels)])
    assert code == 0
    out = capsys.readouterr().out
    assert "energy efficiency" in out
    with open(trace, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "phi", "psi", "sum_rate_nats", "p_wifi_w",
                       "p_lifi_w", "solver_status", "wall_ms"]
    assert len(rows) > 2
    with open(channels, newline="") as fh:
        dump = list(csv.DictReader(fh))
    # 3 users x (8 wifi antennas + 9 leds)
    assert len(dump) == 3 * (8 + 9)
    assert {r["tech"] for r in dump} == {"wifi", "lifi"}


def test_config_file_workflow(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("users: {count: 2}\nroom: {led_grid_count: 2}\nseed: 4\n")
    code = main(["optimize", "--config", str(cfg)])
    assert code == 0
    assert "iterations" in capsys.readouterr().out


def test_predictor_workflow(tmp_path, capsys):
    data = tmp_path / "kpi.csv"
    model = tmp_path / "model.json"
    preds = tmp_path / "preds.csv"
    assert main(["generate-kpi", "--n", "400", "--seed", "3",
                 "--out", str(data)]) == 0
    assert main(["train-predictor", "--data", str(data), "--seed", "3",
                 "--epochs", "60", "--out", str(model)]) == 0
    out = capsys.readouterr().out
    assert "test accuracy" in out
    payload = json.loads(model.read_text())
    assert payload["format_version"] == 1
    assert main(["predict", "--model", str(model), "--input", str(data),
                 "--out", str(preds)]) == 0
    with open(preds, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 400
    assert set(rows[0]) == {"predicted", "p_embb", "p_urllc", "p_mmtc"}


def test_experiment_command(tmp_path, capsys):
    out_dir = tmp_path / "exp"
    code = main(["experiment", "latency", "--out", str(out_dir)])
    assert code == 0
    assert (out_dir / "latency.csv").exists()


def test_program_dump_round_readable():
    program = ConvexProgram(n=2, objective=np.array([1.0, 0.0]),
                            a_ub=np.array([[1.0, 2.0]]), b_ub=np.array([3.0]))
    text = format_program(program)
    assert "variables: 2" in text
    assert "lin: 1.0 2.0 | 3.0" in text
