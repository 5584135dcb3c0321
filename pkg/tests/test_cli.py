"""Command-line interface: flag precedence, subcommand dispatch, errors."""

import os

import pytest

from cimarl.cli import build_parser, main
from cimarl.config import load_config_file
from cimarl.metrics import load_metrics

QUICK = ["--task", "synthetic_coupled", "--agents", "2", "--episodes", "3",
         "--warmup", "30", "--batch-size", "16", "--mc-samples", "4",
         "--buffer-capacity", "200", "--seed", "4"]


def test_train_subcommand_runs_and_reports(tmp_path, capsys):
    out = str(tmp_path / "run")
    code = main(["train", *QUICK, "--out", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert "episodes: 3" in printed
    assert "final return:" in printed
    assert os.path.exists(os.path.join(out, "metrics.csv"))
    assert load_metrics(os.path.join(out, "metrics.csv"))["episode"] == [0, 1, 2]


def test_flags_override_config_file(tmp_path):
    cfg_file = tmp_path / "base.cfg"
    cfg_file.write_text("task = synthetic_coupled\nagents = 2\nepisodes = 5\n"
                        "warmup = 30\nbatch_size = 16\nmc_samples = 4\n"
                        "buffer_capacity = 200\n")
    out = str(tmp_path / "run")
    code = main(["train", "--config", str(cfg_file), "--episodes", "2",
                 "--out", out])
    assert code == 0
    echoed = load_config_file(os.path.join(out, "config.txt"))
    assert echoed["episodes"] == 2       # flag beat the file
    assert echoed["task"] == "synthetic_coupled"
    assert echoed["batch_size"] == 16    # file value survived


def test_evaluate_subcommand(tmp_path, capsys):
    out = str(tmp_path / "run")
    main(["train", *QUICK, "--out", out])
    capsys.readouterr()
    code = main(["evaluate", "--checkpoint",
                 os.path.join(out, "checkpoint.bin"), "--episodes", "2",
                 "--seed", "1"])
    assert code == 0
    printed = capsys.readouterr().out
    assert "return mean:" in printed


def test_ablate_subcommand_sets_mode(tmp_path):
    out = str(tmp_path / "run")
    code = main(["ablate", *QUICK, "--out", out])
    assert code == 0
    echoed = load_config_file(os.path.join(out, "config.txt"))
    assert echoed["ablation"] == "no_intervention"


def test_sweep_subcommand_prints_ranking(tmp_path, capsys):
    out = str(tmp_path / "sweep")
    code = main(["sweep", *QUICK, "--episodes", "2", "--out", out])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed.startswith("rank,alpha,final100_mean")
    assert len(printed.strip().splitlines()) == 6
    assert os.path.exists(os.path.join(out, "summary.csv"))


def test_bad_config_exits_nonzero(tmp_path, capsys):
    code = main(["train", "--task", "synthetic_coupled", "--agents", "2",
                 "--mc-samples", "1", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "error:" in capsys.readouterr().err
    code = main(["train", "--config", str(tmp_path / "missing.cfg"),
                 "--out", str(tmp_path / "y")])
    assert code == 2


def test_corrupt_checkpoint_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "broken.bin"
    bad.write_bytes(b"CIMARLCK" + b"\x00" * 40)
    code = main(["evaluate", "--checkpoint", str(bad)])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_parser_rejects_unknown_choices():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["train", "--task", "bogus"])
    with pytest.raises(SystemExit):
        parser.parse_args(["bogus-command"])
