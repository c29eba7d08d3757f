"""End-to-end runs of every subcommand on the smoke config (well under a minute)."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from genco import cli, data, trainer

SMOKE = str(Path(__file__).resolve().parents[1] / "configs" / "smoke.cfg")


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("GENCO_SEED", raising=False)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert cli.main(["train", "--config", SMOKE, "--out", str(out)]) == 0
    return out


def test_train_writes_artifacts(trained):
    assert (trained / "metrics.csv").exists() and (trained / "summary.json").exists()
    assert (trained / "checkpoint.bin").exists()
    rows = list(csv.DictReader(open(trained / "metrics.csv")))
    assert [int(r["step"]) for r in rows] == [0, 20, 40]


def test_train_override_is_echoed(tmp_path):
    assert cli.main(["train", "--config", SMOKE, "--override", "P=0.3", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["P"] == 0.3


def test_train_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("steps = 3\n")
    assert cli.main(["train", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    bad.write_text("seed = 1\nwidth = 3\n")
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert f"{bad}:2" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["train"]) == 2


def test_train_abort_exits_3(tmp_path, monkeypatch, capsys):
    def boom(state):
        raise trainer.TrainingAborted("non-finite loss at step 1; last good checkpoint: none")

    monkeypatch.setattr(trainer, "train_step", boom)
    assert cli.main(["train", "--config", SMOKE, "--out", str(tmp_path)]) == 3
    assert "last good checkpoint" in capsys.readouterr().err


def test_env_seed_applies(tmp_path, monkeypatch):
    monkeypatch.setenv("GENCO_SEED", "17")
    assert cli.main(["train", "--config", SMOKE, "--override", "steps=1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["seed"] == 17


def test_eval_checkpoint(trained, tmp_path, capsys):
    assert cli.main(["eval", "--checkpoint", str(trained / "checkpoint.bin"),
                     "--out", str(tmp_path / "e.json")]) == 0
    row = json.loads((tmp_path / "e.json").read_text())
    assert row["step"] == 40
    assert row == json.loads(capsys.readouterr().out)
    last = list(csv.DictReader(open(trained / "metrics.csv")))[-1]
    assert row["proxy_fid"] == float(last["proxy_fid"])
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "e.json")]) == 2


def _sweep_cfg(tmp_path, extra):
    cfg = tmp_path / "sweep.cfg"
    text = Path(SMOKE).read_text().replace("steps = 40", "steps = 4").replace("eval_every = 20", "eval_every = 2")
    cfg.write_text(text + extra)
    return cfg


def test_sweep_grid_and_aggregate(tmp_path):
    cfg = _sweep_cfg(tmp_path, "sweep.P = [0.1, 0.2]\nsweep.seed = [1, 2, 3]\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--jobs", "2"]) == 0
    cells = [p for p in (tmp_path / "s").iterdir() if p.is_dir()]
    assert len(cells) == 6
    assert all((c / "metrics.csv").exists() for c in cells)
    rows = list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))
    assert [r["P"] for r in rows] == ["0.1", "0.2"]
    assert all(r["n"] == "3" for r in rows)
    fids = [json.loads((tmp_path / "s" / f"P=0.1_seed={s}" / "summary.json").read_text())["proxy_fid_tail"]
            for s in (1, 2, 3)]
    assert float(rows[0]["proxy_fid_mean"]) == pytest.approx(np.mean(fids), rel=1e-12)
    assert float(rows[0]["proxy_fid_std"]) == pytest.approx(np.std(fids, ddof=1), rel=1e-12)


def test_sweep_without_axes_runs_base(tmp_path):
    cfg = _sweep_cfg(tmp_path, "")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "base" / "summary.json").exists()
    assert len(list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))) == 1


def test_sweep_ablation_matrix(tmp_path):
    cfg = _sweep_cfg(tmp_path, "sweep.weco_on = [false, true]\nsweep.daco_on = [false, true]\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "aggregate.csv")))
    assert {(r["weco_on"], r["daco_on"]) for r in rows} == {
        ("false", "false"), ("false", "true"), ("true", "false"), ("true", "true")}


def test_sweep_failed_cell_is_recorded(tmp_path, monkeypatch, capsys):
    real = trainer.run_experiment

    def flaky(cfg, out=None, **kw):
        if cfg.P == 0.2:
            raise trainer.TrainingAborted("diverged")
        return real(cfg, out, **kw)

    monkeypatch.setattr(trainer, "run_experiment", flaky)
    cfg = _sweep_cfg(tmp_path, "sweep.P = [0.1, 0.2]\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) != 0
    rows = {r["P"]: r for r in csv.DictReader(open(tmp_path / "s" / "aggregate.csv"))}
    assert rows["0.2"]["failed"] == "1" and rows["0.1"]["failed"] == "0"
    assert "diverged" in capsys.readouterr().err


def test_sweep_bad_axis_exits_2(tmp_path):
    cfg = _sweep_cfg(tmp_path, "sweep.colour = [1]\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2


def test_data_gen(tmp_path):
    out = tmp_path / "d.bin"
    assert cli.main(["data", "gen", "--kind", "tinyimage", "--size", "16", "--seed", "2",
                     "--out", str(out)]) == 0
    ds = data.load_dataset(out)
    assert ds.train.shape == (64, 16, 16, 1)
    assert ds.train.tobytes() == data.make_tinyimages("mixed", 16, 64, 256, seed=2).train.tobytes()
    assert cli.main(["data", "gen", "--kind", "tinyimage", "--size", "12", "--out", str(out)]) == 2


def _pgm(tmp_path, img):
    path = tmp_path / "in.pgm"
    path.write_bytes(b"P5\n# test\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes())
    return path


def test_reject_pgm(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(8, 8), dtype=np.uint8)
    src = _pgm(tmp_path, img)

    def run(p, name, seed=0):
        out = tmp_path / name
        assert cli.main(["reject", "--input", str(src), "--output", str(out), "--P", str(p),
                         "--N", "16", "--seed", str(seed)]) == 0
        return cli.read_pgm(out.read_bytes())

    np.testing.assert_array_equal(run(0.0, "p0.pgm"), img)
    assert np.all(run(1.0, "p1.pgm") == 128)
    a, b = run(0.5, "a.pgm", 3), run(0.5, "b.pgm", 3)
    np.testing.assert_array_equal(a, b)
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()


def test_reject_dataset_file(tmp_path):
    src = tmp_path / "d.bin"
    data.save_dataset(src, data.make_tinyimages("mixed", 8, 4, 4, seed=0))
    out = tmp_path / "r.bin"
    assert cli.main(["reject", "--input", str(src), "--output", str(out), "--P", "1.0"]) == 0
    assert np.abs(data.load_dataset(out).train).max() < 1e-12


def test_reject_unreadable_input(tmp_path):
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    assert cli.main(["reject", "--input", str(bad), "--output", str(tmp_path / "o")]) == 2
    assert cli.main(["reject", "--input", str(tmp_path / "nope"), "--output", str(tmp_path / "o")]) == 2
    bad.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    assert cli.main(["reject", "--input", str(bad), "--output", str(tmp_path / "o")]) == 2


def test_plot(trained, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    metrics = str(trained / "metrics.csv")
    assert cli.main(["plot", "--metrics", metrics, "--out", str(out_a)]) == 0
    assert cli.main(["plot", "--metrics", metrics, "--out", str(out_b)]) == 0
    names = sorted(p.name for p in out_a.iterdir())
    assert names == sorted(f"{k}.svg" for k in cli.PLOT_KINDS)
    for n in names:
        text = (out_a / n).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
        assert (out_a / n).read_bytes() == (out_b / n).read_bytes()


def test_plot_schema_errors(trained, tmp_path, capsys):
    header = (trained / "metrics.csv").read_text().splitlines()[0]
    empty = tmp_path / "empty.csv"
    empty.write_text(header + "\n")
    assert cli.main(["plot", "--metrics", str(empty), "--out", str(tmp_path / "o")]) == 2
    partial = tmp_path / "partial.csv"
    partial.write_text("step,loss_d1\n0,1.0\n")
    assert cli.main(["plot", "--metrics", str(partial), "--out", str(tmp_path / "o")]) == 2
    assert "proxy_fid" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "genco", "data", "gen", "--out", str(tmp_path / "d.bin")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "genco", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
