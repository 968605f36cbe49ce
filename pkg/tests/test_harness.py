import json
import os

import numpy as np
import pytest
import yaml

from byzfuse._validation import ConfigError
from byzfuse.game import PayoffMatrix
from byzfuse.harness import io
from byzfuse.harness.cli import main
from byzfuse.harness.config import bundled_names, config_hash, load_config, validate
from byzfuse.harness.runner import load_record, run_experiment


def _write(tmp_path, raw):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def test_bundled_configs_validate():
    names = bundled_names()
    assert "smoke" in names and len(names) >= 15
    for n in names:
        cfg = load_config(n)
        assert cfg["description"] and cfg["trials"] >= 1


@pytest.mark.parametrize("raw,path", [
    ({"scenario": "nope"}, "scenario"),
    ({"scenario": "optimal_game", "trials": 0}, "trials"),
    ({"scenario": "optimal_game", "model": {"epsilon": 1.5}}, "model.epsilon"),
    ({"scenario": "optimal_game", "model": {"prior": {"kind": "FixedCount"}}}, "model.prior"),
    ({"scenario": "optimal_game", "grid": {"attacker": [0.6, 0.5]}}, "grid.attacker"),
    ({"scenario": "optimal_game", "bogus": 1}, "bogus"),
    ({"scenario": "mp_benchmark", "options": {"schemes": ["BP"]}}, "options.schemes[0]"),
    ({"scenario": "consensus_game", "options": {"policy": "vote"}}, "options.policy"),
])
def test_config_errors_name_the_field(raw, path):
    with pytest.raises(ConfigError) as exc:
        validate(raw)
    assert path in str(exc.value)


def test_config_hash_ignores_output_and_threads():
    a = validate({"scenario": "optimal_game", "output": "x", "threads": 2})
    b = validate({"scenario": "optimal_game", "output": "y", "threads": 4})
    c = validate({"scenario": "optimal_game", "seed": 1})
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_unknown_config_name():
    with pytest.raises(ConfigError):
        load_config("does_not_exist")


def test_payoff_csv_roundtrip(tmp_path):
    v = np.array([[1 / 3, 2e-17], [0.1, 0.2]])
    pm = PayoffMatrix(v, (0.5, 1.0), (0.25, 0.75), samples=10)
    p = str(tmp_path / "payoff.csv")
    io.write_payoff_csv(p, pm, "p_mal_B", "p_mal_FC")
    io.write_json(str(tmp_path / "payoff.json"), {"trials": 5, "samples": 10, "seed": 3})
    back = io.read_payoff_csv(p)
    assert np.array_equal(back.v, v)
    assert back.attacker == (0.5, 1.0) and back.defender == (0.25, 0.75)
    assert back.metadata["attacker_name"] == "p_mal_B" and back.samples == 10


def test_series_csv_roundtrip(tmp_path):
    p = str(tmp_path / "s.csv")
    io.write_series_csv(p, {"x": [1, 2], "y": [0.5, 0.25]})
    assert io.read_series_csv(p) == {"x": [1.0, 2.0], "y": [0.5, 0.25]}


def test_run_record_and_threads(tmp_path):
    cfg = load_config("smoke")
    r1 = run_experiment(cfg, str(tmp_path / "t1"), threads=1)
    run_experiment(dict(cfg, trials=4000, block_size=500), str(tmp_path / "a"), threads=1)
    run_experiment(dict(cfg, trials=4000, block_size=500), str(tmp_path / "b"), threads=3)
    a = (tmp_path / "a" / "payoff.csv").read_bytes()
    b = (tmp_path / "b" / "payoff.csv").read_bytes()
    assert a == b
    rec = load_record(str(tmp_path / "t1"))
    assert rec["config_hash"] == r1.config_hash
    assert set(os.listdir(tmp_path / "t1")) >= {"payoff.csv", "payoff.json", "record.json"}


def test_cli_roundtrip(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["run", "--config", "smoke", "--trials", "1000", "--out", out]) == 0
    capsys.readouterr()
    assert main(["solve", os.path.join(out, "payoff.csv")]) == 0
    solved = json.loads(capsys.readouterr().out)
    assert solved["kind"] in ("PureDominant", "PureNash", "Mixed") and "surviving_attacker" in solved
    assert main(["plot-data", out, "--kind", "payoff"]) == 0
    assert os.path.exists(os.path.join(out, "payoff.csv"))
    assert main(["list-configs"]) == 0


def test_cli_error_exit(tmp_path, capsys):
    bad = _write(tmp_path, {"scenario": "optimal_game", "trials": -1})
    assert main(["run", "--config", bad]) == 2
    assert "trials" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["cdd_n20_alpha01_mu1", "df_hard", "mp_near_optimal"])
def test_other_scenarios_run_small(name, tmp_path):
    cfg = load_config(name, {"trials": 600})
    if cfg["scenario"] == "consensus_game":
        cfg["options"].update(delta_stop=2.0, eta_stop=2.0, step=0.5, sweep_trials=1000)
    if cfg["scenario"] == "mp_benchmark":
        cfg["options"]["alphas"] = [0.1, 0.3]
    rec = run_experiment(cfg, str(tmp_path), threads=1)
    assert rec.payoff is not None or rec.series
