import json

import numpy as np
import pytest

from wganlab import cli, training
from wganlab.transport import read_points_csv

TINY = {"dataset": "8gaussians", "critic_widths": [2, 8, 1], "generator_widths": [2, 8, 2], "batch": 8,
        "warmup_gen_iters": 1, "warmup_n_critic": 2, "n_critic": 2, "iterations": 1, "emd_every": 1,
        "emd_sample_size": 16, "levelset_iters": [1], "levelset_resolution": 8, "seed": 4}


def write_config(tmp_path, name="c.json", **kw):
    doc = dict(TINY)
    doc.update(kw)
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def test_train_writes_declared_files(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    for name in ("runlog.csv", "final.ckpt", "config-echo.json", "levelset_00001.csv", "levelset_00001.pgm",
                 "levelset_00001.json", "levelset_final.csv", "levelset_final.pgm", "levelset_final.json"):
        assert (out / name).is_file(), name
    log = training.RunLog.from_csv((out / "runlog.csv").read_text())
    assert len(log.records) == 1 and log.records[0].emd is not None
    assert json.loads((out / "config-echo.json").read_text())["status"] == "ok"
    side = json.loads((out / "levelset_final.json").read_text())
    assert side["resolution"] == 8 and len(side["bounds"]) == 4
    assert training.read_pgm(out / "levelset_final.pgm").shape == (8, 8)


def test_train_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, iterations=3)
    for d in ("a", "b"):
        assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("runlog.csv", "final.ckpt", "levelset_final.csv", "levelset_final.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_levelset_csv_parses_back(tmp_path):
    out = tmp_path / "run"
    cli.main(["train", "--config", write_config(tmp_path), "--out", str(out)])
    pts = read_points_csv(out / "levelset_final.csv")
    state = training.load_checkpoint(out / "final.ckpt")
    grid = training.levelset_grid(state.critic, training.levelset_bounds("8gaussians"), 8)
    assert np.array_equal(pts[:, 2], grid.ravel())


@pytest.mark.parametrize("bad,needle", [
    ({"regularizer": {"kind": "lp", "lam": -1.0}}, "lam"),
    ({"learning_rate": 1e-3}, "learning_rate"),
    ({"regularizer": {"kind": "lp", "lambda": 1.0}}, "lambda"),
    ({"batch": 2.5}, "batch"),
    ({"dataset": "moons"}, "moons"),
])
def test_invalid_config_exit_2(tmp_path, capsys, bad, needle):
    assert cli.main(["train", "--config", write_config(tmp_path, **bad), "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_json_syntax_error_reports_line(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "batch": 8,\n  "seed": ,\n}\n')
    assert cli.main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_abort_exit_3_with_partial_outputs(tmp_path):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", write_config(tmp_path, lr=1e300, iterations=3), "--out", str(out)]) == 3
    echo = json.loads((out / "config-echo.json").read_text())
    assert echo["status"] == "failed" and echo["failure"]
    assert (out / "runlog.csv").is_file()


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    monkeypatch.setenv("WGANLAB_SEED", "11")
    cli.main(["train", "--config", cfg, "--out", str(tmp_path / "env")])
    assert json.loads((tmp_path / "env" / "config-echo.json").read_text())["seed"] == 11
    monkeypatch.delenv("WGANLAB_SEED")
    cli.main(["train", "--config", write_config(tmp_path, "d.json", seed=11), "--out", str(tmp_path / "direct")])
    assert (tmp_path / "env" / "final.ckpt").read_bytes() == (tmp_path / "direct" / "final.ckpt").read_bytes()


def read_agg(path):
    rows = path.read_text().strip().splitlines()
    assert tuple(rows[0].split(",")) == cli.AGG_COLUMNS
    return [dict(zip(cli.AGG_COLUMNS, r.split(","))) for r in rows[1:]]


def test_sweep_median_of_two_is_midpoint(tmp_path):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", write_config(tmp_path, seeds=[1, 2]), "--out", str(out), "--jobs", "2"]) == 0
    d = [training.RunLog.from_csv((out / f"seed_{s}" / "runlog.csv").read_text()).records[0].d_loss for s in (1, 2)]
    row = read_agg(out / "aggregate.csv")[0]
    assert row["n_runs"] == "2"
    assert float(row["d_loss_median"]) == pytest.approx((d[0] + d[1]) / 2, rel=1e-15, abs=1e-300)
    assert min(d) <= float(row["d_loss_q25"]) <= float(row["d_loss_median"]) <= float(row["d_loss_q75"]) <= max(d)


def test_sweep_rerun_identical(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1, 2], iterations=2)
    cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "a"), "--jobs", "1"])
    cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"])
    assert (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()


def test_sweep_survives_failing_seed(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1, 2], iterations=2, seed_overrides={"1": {"lr": 1e300}})
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--jobs", "1"]) != 0
    summary = json.loads((out / "sweep.json").read_text())
    assert list(summary["failed"]) == ["1"]
    rows = read_agg(out / "aggregate.csv")
    assert [r["n_runs"] for r in rows] == ["2", "2"]
    survivors = [training.RunLog.from_csv((out / f"seed_{s}" / "runlog.csv").read_text()) for s in (0, 2)]
    for k, row in enumerate(rows):
        vals = [lg.records[k].d_loss for lg in survivors]
        assert float(row["d_loss_median"]) == pytest.approx(np.median(vals), rel=1e-15)


def test_aggregate_medians_within_range():
    logs = []
    g = np.random.default_rng(0)
    for _ in range(5):
        lg = training.RunLog()
        for t in range(1, 4 + int(g.integers(0, 3))):
            lg.records.append(training.IterRecord(t, float(g.normal()), 0.0, 1.0, 1.0, float(g.random())))
        logs.append(lg)
    for row in cli.aggregate(logs):
        d = [r.d_loss for lg in logs for r in lg.records if r.iter == row["iter"]]
        assert row["n_runs"] == len(d)
        assert min(d) <= row["d_loss_median"] <= max(d)


@pytest.mark.parametrize("suite", ["duality", "gaussian", "clipping"])
def test_verify_suites_pass(capsys, suite):
    assert cli.main(["verify", suite]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_failure_exit_1(monkeypatch):
    from wganlab import verify
    monkeypatch.setattr(verify, "run_suite", lambda name: [verify.Check("x", 1.0, 0.0, 0.1, False, "")])
    assert cli.main(["verify", "gaussian"]) == 1


def test_verify_gaussian_reports_value(capsys):
    cli.main(["verify", "gaussian"])
    assert "0.3687" in capsys.readouterr().out


def test_emd_command(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("x,y\n0.5,1\n-2,3\n4,0.25\n")
    assert cli.main(["emd", str(a), str(a)]) == 0
    assert capsys.readouterr().out.strip() == "0.000000000"
    (tmp_path / "p.csv").write_text("0\n2\n")
    (tmp_path / "q.csv").write_text("1\n3\n")
    assert cli.main(["emd", str(tmp_path / "p.csv"), str(tmp_path / "q.csv")]) == 0
    assert capsys.readouterr().out.strip() == "1.000000000"


def test_emd_command_errors(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("0\n2\n")
    (tmp_path / "r.csv").write_text("0\n2\n5\n")
    assert cli.main(["emd", str(tmp_path / "p.csv"), str(tmp_path / "r.csv")]) == 2
    (tmp_path / "bad.csv").write_text("1,2\n3,4\nfive,6\n")
    (tmp_path / "ok.csv").write_text("1,2\n3,4\n5,6\n")
    capsys.readouterr()
    assert cli.main(["emd", str(tmp_path / "ok.csv"), str(tmp_path / "bad.csv")]) == 2
    assert "row 3" in capsys.readouterr().err
    assert cli.main(["emd", str(tmp_path / "missing.csv"), str(tmp_path / "ok.csv")]) == 2


def test_levelset_command(tmp_path):
    cli.main(["train", "--config", write_config(tmp_path), "--out", str(tmp_path / "run")])
    out = tmp_path / "ls"
    assert cli.main(["levelset", "--ckpt", str(tmp_path / "run" / "final.ckpt"), "--out", str(out),
                     "--res", "16", "--bounds", "-1,1,-2,2"]) == 0
    side = json.loads((out / "levelset_00001.json").read_text())
    assert side["bounds"] == [-1, 1, -2, 2] and side["resolution"] == 16
    assert cli.main(["levelset", "--ckpt", str(tmp_path / "run" / "final.ckpt"), "--out", str(out),
                     "--bounds", "1,-1,0,1"]) == 2
    assert cli.main(["levelset", "--ckpt", str(tmp_path / "nope"), "--out", str(out)]) == 2


def test_sample_command(tmp_path):
    assert cli.main(["sample", "--dataset", "25gaussians", "-n", "50", "--out", str(tmp_path / "s.csv")]) == 0
    assert read_points_csv(tmp_path / "s.csv").shape == (50, 2)


def test_bad_arguments_exit_2():
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["verify", "nonsense"]) == 2
