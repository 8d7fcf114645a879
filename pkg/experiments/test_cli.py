# experiments/test_cli.py
import json

import numpy as np
import pandas as pd
import pytest
import yaml

from core.synthesis import Certificate
from experiments.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_TRUNCATED, main
from server.artifact_io import load_certificate, save_certificate


def _write_config(tmp_path, name="study.yaml", **overrides):
    doc = {
        "models": [{"A": [[1.2]], "B": [[1.0]]}, {"A": [[1.2]], "B": [[-1.0]]}],
        "game": {"Q": 1.0, "R": 1.0, "gamma": 6.0},
        "simulation": {
            "x0": [1.0],
            "horizon": 25,
            "runs": [{"name": "white", "disturbance": {"kind": "white", "sigma": 0.2, "seed": 3}, "seeds": 2}],
        },
        "dpcheck": {"samples": 500, "k_max": 3},
        "output": {"out_dir": str(tmp_path / "out")},
        "logging": {"event_log": str(tmp_path / "logs" / "runs.jsonl"), "db_path": str(tmp_path / "logs" / "runs.sqlite")},
    }
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return str(path)


@pytest.fixture
def certified(tmp_path):
    config = _write_config(tmp_path)
    assert main(["synth", "--config", config]) == EXIT_OK
    return config, str(tmp_path / "out" / "certificate.json")


def test_synth_then_verify(certified, capsys):
    config, cert_path = certified
    assert main(["verify", "--config", config, "--cert", cert_path]) == EXIT_OK
    out = capsys.readouterr().out
    assert "feasible     : True" in out
    assert "bellman check" in out


def test_verify_rejects_shrunken_cross_term(certified, tmp_path):
    config, cert_path = certified
    cert = load_certificate(cert_path)
    P = cert.P.copy()
    P[0, 1] *= 0.5
    P[1, 0] *= 0.5
    broken = str(tmp_path / "broken.json")
    save_certificate(Certificate(cert.gamma, cert.K, P), broken)
    assert main(["verify", "--config", config, "--cert", broken]) == EXIT_INFEASIBLE


def test_verify_rejects_certificate_of_other_dimension(certified, tmp_path):
    config, _ = certified
    other = str(tmp_path / "other.json")
    save_certificate(Certificate(6.0, np.zeros((2, 1, 2)), np.tile(np.eye(2), (2, 2, 1, 1))), other)
    assert main(["verify", "--config", config, "--cert", other]) == EXIT_INPUT


def test_malformed_config_writes_nothing(tmp_path):
    config = _write_config(tmp_path, game={"gamma": 6.0, "bogus": 1})
    assert main(["synth", "--config", config]) == EXIT_INPUT
    assert not (tmp_path / "out").exists()
    assert not (tmp_path / "logs").exists()


def test_infeasible_gamma_exits_with_two(tmp_path):
    config = _write_config(tmp_path, game={"gamma": 1.0})
    assert main(["synth", "--config", config]) == EXIT_INFEASIBLE
    assert not (tmp_path / "out" / "certificate.json").exists()


def test_bisection_flag(tmp_path, capsys):
    config = _write_config(tmp_path, game={"gamma_range": [1.0, 20.0], "bisection_steps": 6})
    assert main(["synth", "--config", config, "--bisect"]) == EXIT_OK
    assert "smallest feasible gamma" in capsys.readouterr().out
    assert load_certificate(str(tmp_path / "out" / "certificate.json")).gamma <= 20.0


def test_zero_simulation_writes_zero_csv(tmp_path):
    config = _write_config(tmp_path, simulation={
        "x0": [0.0],
        "horizon": 10,
        "runs": [{"name": "quiet", "disturbance": {"kind": "zero"}}],
    })
    assert main(["simulate", "--config", config]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "out" / "quiet.csv")
    assert list(frame.columns) == ["t", "x_1", "u_1", "w_1", "k", "stage_cost", "cum_cost"]
    assert (frame.drop(columns="t").to_numpy() == 0.0).all()
    assert (tmp_path / "out" / "quiet.svg").exists()
    summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
    assert summary["truncated"] is False and summary["value_bound"] == 0.0


def test_simulation_outputs_are_reproducible(certified, tmp_path):
    config, cert_path = certified
    for out in ("a", "b"):
        args = ["simulate", "--config", config, "--cert", cert_path, "--out-dir", str(tmp_path / out)]
        assert main(args) == EXIT_OK
    for name in ("white_0.csv", "white_1.csv", "summary.csv", "white_0.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_truncated_run_exits_with_four(certified, tmp_path):
    _, cert_path = certified
    config = _write_config(tmp_path, name="pinned.yaml", simulation={
        "x0": [1.0],
        "horizon": 60,
        "overflow_limit": 1000.0,
        "runs": [{"name": "pinned", "disturbance": {"kind": "adversarial", "pair": [0, 1]}}],
    })
    assert main(["simulate", "--config", config, "--cert", cert_path]) == EXIT_TRUNCATED


def test_dpcheck_on_scalar_pair(tmp_path):
    config = _write_config(tmp_path)
    assert main(["dpcheck", "--config", config]) == EXIT_OK
    grids = pd.read_csv(tmp_path / "out" / "value_grids.csv")
    assert sorted(grids["k"].unique()) == [0, 1, 2, 3]


def test_dpcheck_with_no_iterations(tmp_path):
    config = _write_config(tmp_path, dpcheck={"samples": 200, "k_max": 0})
    assert main(["dpcheck", "--config", config]) == EXIT_OK


def test_certificate_file_round_trips_exactly(certified):
    _, cert_path = certified
    cert = load_certificate(cert_path)
    again_path = cert_path.replace("certificate.json", "again.json")
    save_certificate(cert, again_path)
    again = load_certificate(again_path)
    np.testing.assert_array_equal(again.P, cert.P)
    np.testing.assert_array_equal(again.K, cert.K)
    assert again.margin == cert.margin
    with open(cert_path, "rb") as a, open(again_path, "rb") as b:
        assert a.read() == b.read()


def test_runs_are_logged(certified, tmp_path):
    lines = (tmp_path / "logs" / "runs.jsonl").read_text(encoding="utf-8").splitlines()
    record = json.loads(lines[-1])
    assert record["command"] == "synth" and record["verdict"] == "OK"


def test_example_report_command(tmp_path):
    config = _write_config(tmp_path)
    out = tmp_path / "example"
    assert main(["example-double-integrator", "--config", config, "--out-dir", str(out), "--seeds", "2"]) == EXIT_OK
    report = json.loads((out / "example_report.json").read_text(encoding="utf-8"))
    assert len(report["white_gains"]) == 2
    assert max(report["white_gains"]) <= 19.0 * (1.0 + 1e-6)
    assert (out / "gain_bracket.svg").exists()


def test_example_report_honours_horizon(tmp_path):
    config = _write_config(tmp_path)
    out = tmp_path / "short"
    args = ["example-double-integrator", "--config", config, "--out-dir", str(out), "--seeds", "2", "--horizon", "20"]
    assert main(args) == EXIT_OK
    report = json.loads((out / "example_report.json").read_text(encoding="utf-8"))
    assert report["horizon"] == 20
    assert len(report["white_gains"]) == 2


def test_example_report_rejects_bad_horizon(tmp_path):
    config = _write_config(tmp_path)
    args = ["example-double-integrator", "--config", config, "--out-dir", str(tmp_path / "bad"), "--horizon", "0"]
    assert main(args) == EXIT_INPUT
