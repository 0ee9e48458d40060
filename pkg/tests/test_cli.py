"""CLI tests: subcommands, exit codes, and produced files. Most run the
entry point in-process; one subprocess test covers the installed script."""

import json
import subprocess
import sys

from qpbench import cli, harness
from qpbench.datagen import FACADE_PALETTE, gen_facade_like, save_labeled_dir
from qpbench.errors import ExperimentError


def tiny_config(tmp_path, **extra):
    cfg = {
        "dataset": {"kind": "toy", "seed": 7, "width": 32, "height": 32},
        "arch": {"kind": "toy"},
        "optimizer": "gd",
        "optim": {"learning_rate": 0.05},
        "epochs": 1,
        "iterations_per_epoch": 10,
        "repetitions": 1,
        "out": str(tmp_path / "out.csv"),
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_gen_toy_writes_loadable_files(tmp_path):
    out = tmp_path / "toy"
    assert cli.main(["gen-toy", "--out", str(out), "--seed", "3", "--size", "32x32"]) == 0
    assert (out / "toy_0000.ppm").exists()
    assert (out / "toy_0000_labels.ppm").exists()
    assert (out / "palette.json").exists()


def test_gen_facade_writes_files(tmp_path):
    out = tmp_path / "facade"
    assert cli.main(["gen-facade", "--out", str(out), "--count", "2", "--size", "32x32"]) == 0
    assert (out / "facade_0001.ppm").exists()


def test_gen_toy_bad_size_is_usage_error(tmp_path):
    assert cli.main(["gen-toy", "--out", str(tmp_path), "--size", "banana"]) == 1


def test_train_writes_csv_and_aggregate(tmp_path, capsys):
    cfg = tiny_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "out.csv").exists()
    assert (tmp_path / "out_aggregate.csv").exists()
    records = harness.read_csv(tmp_path / "out.csv")
    assert len(records) == 2  # one epoch, train + test
    assert "final test loss" in capsys.readouterr().out


def test_train_flags_override_config(tmp_path):
    cfg = tiny_config(tmp_path)
    out = tmp_path / "qp.csv"
    code = cli.main(
        ["train", "--config", str(cfg), "--optimizer", "quickprop",
         "--lr", "0.02", "--mu", "2.0", "--epochs", "2", "--seed", "9",
         "--out", str(out)]
    )
    assert code == 0
    records = harness.read_csv(out)
    assert {r.optimizer for r in records} == {"quickprop"}
    assert {r.epoch for r in records} == {1, 2}


def test_train_saves_model_for_eval(tmp_path, capsys):
    cfg = tiny_config(tmp_path)
    model = tmp_path / "model.json"
    assert cli.main(["train", "--config", str(cfg), "--save-model", str(model)]) == 0
    data_dir = tmp_path / "data"
    save_labeled_dir(gen_facade_like(5, 32, 32, 1), data_dir, FACADE_PALETTE)
    # toy model on facade data mismatches channels -> data error
    assert cli.main(["eval", "--model", str(model), "--data", str(data_dir)]) == 2


def test_eval_reports_metrics(tmp_path, capsys):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({
        "dataset": {"kind": "facade", "seed": 3, "width": 32, "height": 32, "count": 2},
        "arch": {"kind": "facade", "k": 1, "l": 0},
        "epochs": 1,
        "iterations_per_epoch": 5,
        "repetitions": 1,
        "out": str(tmp_path / "f.csv"),
    }))
    model = tmp_path / "model.json"
    assert cli.main(["train", "--config", str(cfg_path), "--save-model", str(model)]) == 0
    data_dir = tmp_path / "data"
    save_labeled_dir(gen_facade_like(5, 32, 32, 2), data_dir, FACADE_PALETTE)
    capsys.readouterr()
    assert cli.main(["eval", "--model", str(model), "--data", str(data_dir)]) == 0
    out = capsys.readouterr().out
    assert "overall_acc" in out and "mean_class_acc" in out


def test_missing_required_flag_is_usage_error():
    assert cli.main(["train"]) == 1


def test_unknown_subcommand_is_usage_error():
    assert cli.main(["frobnicate"]) == 1


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0


def test_malformed_config_is_format_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["train", "--config", str(bad)]) == 2


def test_unknown_config_field_is_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epochz": 3}))
    assert cli.main(["train", "--config", str(bad)]) == 1


def test_eval_missing_data_dir_is_data_error(tmp_path):
    model = tmp_path / "m.json"
    cfg = tiny_config(tmp_path)
    assert cli.main(["train", "--config", str(cfg), "--save-model", str(model)]) == 0
    assert cli.main(["eval", "--model", str(model), "--data", str(tmp_path / "nope")]) == 2


def test_all_diverged_exit_code(tmp_path, monkeypatch):
    cfg = tiny_config(tmp_path)

    def boom(config):
        raise ExperimentError("all 1 repetitions diverged")

    monkeypatch.setattr(harness, "run_repetitions", boom)
    monkeypatch.setattr(cli.harness, "run_repetitions", boom)
    assert cli.main(["train", "--config", str(cfg)]) == 3


def test_experiment_scale_filters_cli(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps({
        "dataset": {"kind": "facade", "seed": 3, "width": 32, "height": 32, "count": 2},
        "epochs": 1,
        "iterations_per_epoch": 5,
        "repetitions": 1,
        "out": str(tmp_path / "sweep.csv"),
    }))
    code = cli.main(["experiment", "scale-filters", "--config", str(cfg_path), "--k", "1,2"])
    assert code == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) - 1 == 2 * 2 * 1 * 2
    assert (tmp_path / "sweep_summary.csv").exists()


def test_experiment_scale_layers_cli(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps({
        "dataset": {"kind": "facade", "seed": 3, "width": 32, "height": 32, "count": 2},
        "arch": {"kind": "facade", "k": 1, "l": 0},
        "epochs": 1,
        "iterations_per_epoch": 5,
        "repetitions": 1,
        "out": str(tmp_path / "layers.csv"),
    }))
    code = cli.main(["experiment", "scale-layers", "--config", str(cfg_path), "--l", "0,1"])
    assert code == 0
    rows = (tmp_path / "layers.csv").read_text().splitlines()
    assert len(rows) - 1 == 2 * 2 * 1 * 2


def test_bench_quick(capsys):
    assert cli.main(["bench", "--quick", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "conv fwd" in out and "active backend" in out


def test_console_script_subprocess(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "qpbench.cli", "gen-toy", "--out",
         str(tmp_path / "d"), "--size", "32x32"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "d" / "toy_0000.ppm").exists()


def test_csv_bytes_identical_across_cli_invocations(tmp_path):
    blobs = []
    for name in ("r1.csv", "r2.csv"):
        out = tmp_path / name
        cfg = tiny_config(tmp_path, out=str(out))
        assert cli.main(["train", "--config", str(cfg)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]
