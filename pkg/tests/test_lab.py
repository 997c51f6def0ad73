import json
import warnings

import pytest

from lenscat import lab
from lenscat.cli import main
from lenscat.lab import ExperimentConfig, cmd_ensemble, cmd_run, load_config, parse_seeds, summarize
from lenscat.snapshot import load_snapshot


def test_parse_seeds():
    assert parse_seeds("7") == (7,)
    assert parse_seeds("1, 4,9") == (1, 4, 9)
    assert parse_seeds("0:3,10") == (0, 1, 2, 10)
    with pytest.raises(ValueError):
        parse_seeds(",")


def test_ini_and_overrides(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[experiment]\nn = 3\ns = -0.25\nclusters = 10\ndt = 2e-3\nseeds = 0:4\ndealias = no\n")
    cfg = load_config(ini, dt=1e-3, law="rademacher")
    assert (cfg.n, cfg.J, cfg.s, cfg.dt, cfg.law) == (3, 10, -0.25, 1e-3, "rademacher")
    assert cfg.seeds == (0, 1, 2, 3)
    assert cfg.resolved()["M"] == 2 * 9 + 1
    with pytest.raises(ValueError):
        load_config(ini, bogus=1)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.ini")


def test_s_table_warns_not_errors():
    with pytest.warns(UserWarning):
        ExperimentConfig(n=2, s=0.0)
    with pytest.warns(UserWarning):
        ExperimentConfig(n=3, s=-0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ExperimentConfig(n=3, s=-0.25)


def test_big_gate():
    with pytest.raises(ValueError):
        ExperimentConfig(n=4, s=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(n=3, J=16, s=0.0, dealias=True)
    assert ExperimentConfig(n=4, s=0.0, J=6, big=True).quad_points() == 9


def test_zero_amplitude_record(tmp_path):
    cfg = ExperimentConfig(J=8, amplitude=0.0, out=str(tmp_path), dt=2e-3)
    rec = cmd_run(cfg, 1)
    assert rec["K"]["total"] == 0 and rec["r0_plus_norm_H1"] == 0
    assert rec["rate"]["verdict"] == "inconclusive" and rec["rate"]["mu"] is None
    assert rec["valid"]


def test_run_outputs_are_deterministic(tmp_path):
    a = tmp_path / "a"
    names = ("trial_5.json", "trial_5.csv", "trial_5_u0.lens", "trial_5_r0_plus.lens")
    cmd_run(ExperimentConfig(J=12, out=str(a), dt=2e-3), 5)
    first = {name: (a / name).read_bytes() for name in names}
    cmd_run(ExperimentConfig(J=12, out=str(a), dt=2e-3), 5)
    for name in names:
        assert (a / name).read_bytes() == first[name]
    rec = json.loads((a / "trial_5.json").read_text())
    assert {"meta", "K", "energy", "norms", "r0_plus_norm_H1", "rate", "config"} <= set(rec)
    assert set(rec["meta"]) >= {"seed", "n", "p", "s", "J", "M", "dt", "law"}
    header = (a / "trial_5.csv").read_text().splitlines()[0]
    assert header == "tau,t,E_H1,energy,mass"
    snap = load_snapshot(a / "trial_5_r0_plus.lens")
    assert snap.metadata["seed"] == 5 and snap.metadata["formulation"] == "remainder_v"


def test_ensemble_is_order_and_thread_independent(tmp_path, monkeypatch):
    base = ExperimentConfig(J=8, dt=4e-3, seeds=(3, 1, 2), out=str(tmp_path))
    monkeypatch.setenv("LENSCAT_THREADS", "1")
    one = cmd_ensemble(base)
    first = (tmp_path / "records.json").read_bytes()
    monkeypatch.setenv("LENSCAT_THREADS", "2")
    two = cmd_ensemble(base.with_(seeds=(2, 3, 1)))
    assert (tmp_path / "records.json").read_bytes() == first
    assert one.as_dict() | {"config": None} == two.as_dict() | {"config": None}
    assert one.total == 3 and one.valid == 3


def test_single_seed_summary():
    cfg = ExperimentConfig(J=8, dt=4e-3, seeds=(4,))
    s = cmd_ensemble(cfg, write=False)
    assert s.total == 1 and s.tail is None


def test_crash_isolation(monkeypatch):
    real = lab.run_trial

    def flaky(config, seed):
        if seed == 2:
            raise RuntimeError("boom")
        return real(config, seed)

    monkeypatch.setattr(lab, "run_trial", flaky)
    monkeypatch.setenv("LENSCAT_THREADS", "1")
    cfg = ExperimentConfig(J=8, dt=4e-3, seeds=(1, 2, 3))
    records = lab.run_ensemble(cfg)
    s = summarize(records, cfg)
    assert s.total == 3 and s.valid == 2 and "boom" in s.failures["2"]


def test_cli_check_and_export(tmp_path, capsys):
    assert main(["check", "gram", "snapshot"]) == 0
    out = tmp_path / "run"
    assert main(["run", "--clusters", "8", "--dt", "4e-3", "--seeds", "2", "--out", str(out)]) == 0
    snap = out / "trial_2_u0.lens"
    assert main(["export", str(snap), "--format", "csv", "--out", str(tmp_path / "c.csv")]) == 0
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,alpha0,alpha1,re,im" and len(lines) > 10
    bad = tmp_path / "bad.lens"
    bad.write_bytes(b"NOPE!" + snap.read_bytes()[5:])
    assert main(["export", str(bad)]) == 2
    assert main(["run", "--n", "4"]) == 2


def test_cli_rates(tmp_path, capsys):
    assert main(["rates", "--clusters", "8", "--dt", "2e-3", "--seeds", "1", "--out", str(tmp_path)]) == 0
    assert "mu=" in capsys.readouterr().out
    assert (tmp_path / "rates_n2.json").exists()
