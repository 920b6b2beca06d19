import json
import subprocess
import sys
from functools import partial
from pathlib import Path

import numpy as np
import pytest

from betaspec import cli, experiments
from betaspec.config import ConfigError, parse_config
from betaspec.errors import SolverError
from betaspec.experiments import Check, default_checkpoints, map_realizations, spectra_block


def run_cli(*args):
    return cli.main([str(a) for a in args])


# -- config -------------------------------------------------------------------


def test_minimal_flags_valid():
    cfg = parse_config(None, "transfer-growth", beta="1", n="100000", realizations="100", seed="7")
    assert cfg.beta == (1.0,) and cfg.n == 100_000 and cfg.realizations == 100 and cfg.seed == 7
    assert cfg.lam == 0.0 and cfg.fit_window == (100, 1_000_000)


def test_flags_override_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "density", "n": 64, "realizations": 5, "beta": [1, 2]}))
    cfg = parse_config(p, None, n="32")
    assert cfg.n == 32 and cfg.realizations == 5 and cfg.beta == (1.0, 2.0)
    assert parse_config(p).n == 64


def test_list_and_scientific_values():
    cfg = parse_config(None, "density", beta="0.5,1,4", realizations="1e3")
    assert cfg.beta == (0.5, 1.0, 4.0) and cfg.realizations == 1000


@pytest.mark.parametrize(
    "flags, fragment",
    [
        ({"beta": "0"}, "beta"),
        ({"n": "-3"}, "n"),
        ({"realizations": "2.5"}, "realizations"),
        ({"seed": "-1"}, "seed"),
        ({"central_fraction": "1.5"}, "central_fraction"),
        ({"fit_window": "10"}, "fit_window"),
        ({"checkpoints": "5,3,9"}, "checkpoints"),
    ],
)
def test_invalid_numerics_rejected(flags, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(None, "density", **flags)


def test_unknown_experiment_and_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown experiment"):
        parse_config(None, "nonsense")
    p = tmp_path / "c.json"
    p.write_text('{\n  "experiment": "density",\n  "gamma": 3\n}\n')
    with pytest.raises(ConfigError, match=r"c\.json:3: unknown config key 'gamma'"):
        parse_config(p)


def test_malformed_file_line_reference(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "experiment": "density",\n  "n": 64,,\n}\n')
    with pytest.raises(ConfigError, match=r"bad\.json:3"):
        parse_config(p)


def test_invalid_value_in_file_references_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "experiment": "density",\n  "beta": 0\n}\n')
    with pytest.raises(ConfigError, match=r"c\.json:3"):
        parse_config(p)


def test_config_echo_roundtrip(tmp_path):
    cfg = parse_config(None, "eigvec-decay", seed="11", out=str(tmp_path))
    p = tmp_path / "echo.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert parse_config(p) == cfg


# -- exit codes ---------------------------------------------------------------


def test_beta_zero_exit_2(capsys):
    assert run_cli("run", "density", "--beta", "0") == 2
    assert "beta" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        run_cli("run", "not-an-experiment")
    assert e.value.code == 2
    p = tmp_path / "c.json"
    p.write_text('{"gamma": 1}')
    assert run_cli("run", "density", "--config", p) == 2


def test_pass_exit_0_and_summary(tmp_path, capsys):
    out = tmp_path / "mh"
    assert run_cli("run", "mean-hamiltonian", "--n", "12", "--seed", "5", "--out", out) == 0
    s = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert s["passed"] is True and s["master_seed"] == 5 and s["config"]["n"] == 12
    assert all(set(c) >= {"measured", "target", "tolerance", "passed"} for c in s["checks"])
    assert s["wall_time_s"] >= 0
    text = (out / "summary.json").read_text()
    assert text == json.dumps(json.loads(text), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    assert "PASS" in capsys.readouterr().out


def test_target_miss_exit_1(tmp_path, monkeypatch):
    def failing(cfg, out):
        return [Check("always", 1.0, 0.0, 0.1, False)], []

    monkeypatch.setitem(experiments.RUNNERS, "density", failing)
    assert run_cli("run", "density", "--out", tmp_path) == 1
    assert json.loads((tmp_path / "summary.json").read_text())["passed"] is False


def test_numeric_failure_exit_3(tmp_path, monkeypatch, capsys):
    def broken(cfg, out):
        (out / "partial.csv").write_text("x\r\n")
        raise SolverError("stalled")

    monkeypatch.setitem(experiments.RUNNERS, "density", broken)
    assert run_cli("run", "density", "--out", tmp_path) == 3
    assert (tmp_path / "partial.csv").exists()
    assert "numeric failure" in capsys.readouterr().err


def test_eigvec_target_reported(tmp_path):
    assert run_cli("run", "eigvec-decay", "--n", "256", "--realizations", "3", "--growth-n", "2000", "--fit-window", "20,2000", "--out", tmp_path) in (0, 1)
    s = json.loads((tmp_path / "summary.json").read_text())
    decay = [c for c in s["checks"] if c["name"].startswith("decay_exponent")][0]
    assert decay["target"] == -1.5


def test_transfer_target_beta2(tmp_path):
    run_cli("run", "transfer-growth", "--beta", "2", "--n", "2000", "--realizations", "2", "--out", tmp_path)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["checks"][0]["target"] == 0.0
    header = (tmp_path / "transfer_beta2.csv").read_bytes().split(b"\r\n")[0]
    assert header == b"realization,n,log_norm"


# -- determinism ----------------------------------------------------------------


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


@pytest.mark.parametrize(
    "experiment, extra",
    [
        ("density", ["--n", "24", "--realizations", "9", "--bins", "10"]),
        ("transfer-growth", ["--beta", "1,4", "--n", "3000", "--realizations", "5"]),
        ("ipr-scan", ["--n", "64", "--realizations", "5"]),
        ("lyapunov", ["--n", "500", "--det-n", "100", "--realizations", "7"]),
        ("goe-crosscheck", ["--n", "8", "--realizations", "30"]),
    ],
)
def test_byte_identical_across_runs_and_workers(tmp_path, experiment, extra):
    dirs = []
    for tag, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        d = tmp_path / tag
        run_cli("run", experiment, "--seed", "123", "--workers", workers, "--out", d, *extra)
        dirs.append(outputs(d))
    assert dirs[0] and dirs[0] == dirs[1] == dirs[2]


def test_map_realizations_block_order():
    cfg1 = parse_config(None, "density", realizations="23")
    cfg3 = parse_config(None, "density", realizations="23", workers="3")
    fn = partial(spectra_block, 1.0, 6, 9)
    ref = spectra_block(1.0, 6, 9, 0, 23)
    for cfg, block in ((cfg1, 4), (cfg1, 23), (cfg3, 5)):
        np.testing.assert_array_equal(np.concatenate(map_realizations(fn, cfg, block=block)), ref)


def test_default_checkpoints():
    ck = default_checkpoints(10**6)
    assert ck[0] == 10 and ck[-1] == 10**6 and np.all(np.diff(ck) > 0)
    assert len(ck) == 51


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "betaspec", "run", "mean-hamiltonian", "--n", "5", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "summary.json").exists()


def test_verify_all_runs_every_experiment(tmp_path, monkeypatch):
    seen = []

    def fake(cfg, out):
        seen.append((cfg.experiment, cfg.seed))
        return [Check("ok", 0.0, 0.0, 1.0, cfg.experiment != "spacing")], []

    for name in list(experiments.RUNNERS):
        monkeypatch.setitem(experiments.RUNNERS, name, fake)
    assert run_cli("verify-all", "--seed", "9", "--out", tmp_path) == 1
    assert [s[0] for s in seen] == list(experiments.RUNNERS)
    assert all(s[1] == 9 for s in seen)
    assert (tmp_path / "lyapunov" / "summary.json").exists()
