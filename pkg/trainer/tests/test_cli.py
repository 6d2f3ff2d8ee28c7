"""Trainer command-line interface."""

import json

import pytest

from metatrain.cli import build_parser, main


def test_parser_defaults():
    args = build_parser().parse_args(["--out", "x.ptxf"])
    assert args.steps == 20000
    assert args.n == 5 and args.k == 1
    assert args.dataset == "synthetic"


def test_cli_trains_and_exports(tmp_path, capsys):
    float_path = tmp_path / "m.ptxf"
    quant_path = tmp_path / "m.q.ptxf"
    rc = main([
        "--out", str(float_path), "--quant-out", str(quant_path),
        "--layers", "1", "--embed-dim", "32", "--heads", "2",
        "--window", "8", "--image-pixels", "8", "--num-classes", "2",
        "--n", "2", "--k", "1", "--steps", "20", "--warmup-steps", "5",
        "--eval-episodes", "16", "--seed", "1", "--quiet",
    ])
    assert rc == 0
    assert float_path.exists() and quant_path.exists()
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["final_loss"] is not None
    assert 0.0 <= manifest["eval_accuracy"] <= 1.0
    assert manifest["quantization"]  # per-tensor quant stats present


def test_cli_rejects_omniglot_without_root(tmp_path, capsys):
    rc = main(["--out", str(tmp_path / "m.ptxf"), "--dataset", "omniglot",
               "--steps", "1", "--quiet"])
    assert rc == 2
    assert "data_root" in capsys.readouterr().err
