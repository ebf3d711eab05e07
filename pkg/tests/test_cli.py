import csv
import json

import numpy as np
import pytest

from qjet.cli import main
from qjet.config import ConfigError, ExperimentConfig, format_config, parse_config
from qjet.data import read_cache
from qjet.experiment import parameter_count, plan_sweep, write_sweep_configs


def write_cfg(path, **kw):
    base = dict(model="gnn", hidden=4, layers=1, epochs=2, checkpoint_start=1, synth_n=200, n_train=80, n_val=30,
                n_test=30, batch=16, output_dir=str(path.parent / "runs"))
    base.update(kw)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def test_config_round_trip():
    cfg = ExperimentConfig(model="egnn", lr=0.0123456789, wrap_phi=True, synth_n=5).resolved()
    assert parse_config(format_config(cfg)) == cfg


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("model = gnn\nbogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("epochs = many\n")
    with pytest.raises(ConfigError, match="hidden"):
        ExperimentConfig(model="qgnn", hidden=10, synth_n=10).validate()


def test_reference_defaults():
    shapes = {m: ExperimentConfig(model=m).resolved() for m in ("gnn", "egnn", "qgnn", "eqgnn")}
    assert (shapes["gnn"].hidden, shapes["gnn"].layers) == (10, 5)
    assert (shapes["egnn"].hidden, shapes["egnn"].layers) == (10, 4)
    assert (shapes["qgnn"].hidden, shapes["qgnn"].layers) == (8, 6)
    assert (shapes["eqgnn"].hidden, shapes["eqgnn"].layers) == (8, 6)
    for cfg in shapes.values():
        assert (cfg.lr, cfg.epochs, cfg.checkpoint_start) == (1e-3, 20, 15)
        assert (cfg.n_train, cfg.n_val, cfg.n_test) == (10000, 1250, 1250)


def test_synth_and_ingest(tmp_path, capsys):
    assert main(["synth", "--n", "40", "--seed", "1", "--output", str(tmp_path / "j.jsonl")]) == 0
    assert main(["ingest", "--input", str(tmp_path / "j.jsonl"), "--output", str(tmp_path / "c.bin")]) == 0
    out = capsys.readouterr()
    jets, _ = read_cache(tmp_path / "c.bin")
    assert f"cached {len(jets)} jets" in out.out
    if len(jets) < 40:
        assert "excluded" in out.err


def test_ingest_corrupt_line(tmp_path, capsys):
    main(["synth", "--n", "3", "--output", str(tmp_path / "j.jsonl")])
    lines = (tmp_path / "j.jsonl").read_text().splitlines()
    lines[1] = lines[1][:-5]
    (tmp_path / "j.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["ingest", "--input", str(tmp_path / "j.jsonl"), "--output", str(tmp_path / "c.bin")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path):
    assert main(["ingest", "--input", str(tmp_path / "nope.jsonl"), "--output", str(tmp_path / "c.bin")]) == 2


def test_invalid_quantum_config_exits_2(tmp_path):
    cfg = write_cfg(tmp_path / "q.cfg", model="qgnn", hidden=10)
    assert main(["train", "--config", str(cfg)]) == 2


def test_train_and_eval(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "g.cfg", model="egnn")
    assert main(["train", "--config", str(cfg)]) == 0
    run_dir = next((tmp_path / "runs").iterdir())
    report = json.loads((run_dir / "report.json").read_text())
    with open(run_dir / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 + 1
    for row, rec in zip(rows, report["history"]):
        assert int(row["epoch"]) == rec["epoch"]
        for key in ("train_loss", "val_loss", "train_acc", "val_acc", "val_auc"):
            assert float(row[key]) == rec[key]
    with open(run_dir / "roc.csv") as fh:
        roc = list(csv.DictReader(fh))
    assert [float(r["fpr"]) for r in roc] == report["roc_fpr"]

    main(["synth", "--n", "50", "--seed", "9", "--output", str(tmp_path / "new.jsonl")])
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(run_dir / "checkpoint.qjck"), "--data", str(tmp_path / "new.jsonl")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["model"] == "egnn" and 0.0 <= result["accuracy"] <= 1.0


def test_empty_sweep(tmp_path):
    (tmp_path / "cfgs").mkdir()
    assert main(["sweep", "--configs", str(tmp_path / "cfgs")]) == 0
    text = (tmp_path / "cfgs" / "auc_vs_params.csv").read_text()
    assert text.strip() == "config,model,n_params,test_auc,status"


def test_sweep_records_failures(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    write_cfg(d / "a.cfg")
    write_cfg(d / "b.cfg", n_train=100000)
    assert main(["sweep", "--configs", str(d)]) == 1
    with open(d / "auc_vs_params.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] == "ok" for r in rows] == [True, False]
    assert int(rows[0]["n_params"]) > 0 and 0 <= float(rows[0]["test_auc"]) <= 1


@pytest.mark.parametrize("model", ["gnn", "egnn", "qgnn", "eqgnn"])
def test_sweep_plan_hits_targets(model, tmp_path):
    base = ExperimentConfig(model=model, synth_n=10)
    plans = plan_sweep(base)
    counts = [parameter_count(c) for c in plans]
    for target, count in zip((500, 1200, 1600, 2800, 3500, 5100), counts):
        assert abs(count - target) / target < 0.05
    paths = write_sweep_configs(base, tmp_path)
    assert len(paths) == 6 and all(p.suffix == ".cfg" for p in paths)
    assert np.all(np.diff(counts) > 0)
