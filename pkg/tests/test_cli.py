import hashlib

import numpy as np
import pytest

from specsar.cli import main
from specsar.counting import count_params
from specsar.data.patchio import read_label_file
from specsar.model import NetConfig, build_network

SMALL = ["--set", "data.n_patches=3", "--set", "data.patch_size=32", "--set", "optim.steps=2",
         "--set", "optim.batch_size=2"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and not line.startswith("#"))


def test_synth_is_deterministic(workdir, capsys):
    assert main(["synth", *SMALL]) == 0
    first = hashlib.sha256((workdir / "data" / "manifest.txt").read_bytes()).hexdigest()
    blob = (workdir / "data" / "patch-00000.dwpx").read_bytes()
    assert main(["synth", *SMALL]) == 0
    assert hashlib.sha256((workdir / "data" / "manifest.txt").read_bytes()).hexdigest() == first
    assert (workdir / "data" / "patch-00000.dwpx").read_bytes() == blob


def test_zero_patches_gives_empty_manifest(workdir):
    assert main(["synth", "--set", "data.n_patches=0"]) == 0
    assert (workdir / "data" / "manifest.txt").read_text() == ""


def test_train_eval_infer(workdir, capsys):
    assert main(["synth", *SMALL]) == 0
    assert main(["train", *SMALL]) == 0
    log = (workdir / "run" / "loss.log").read_text().splitlines()
    assert len(log) == 2 and all(len(line.split()) == 3 for line in log)
    capsys.readouterr()
    assert main(["eval", "run/model.ssfw"]) == 0
    report = _kv(capsys.readouterr().out)
    keys = {"miou", "oa", "f1", "params", "flops", "fps"} | {f"iou_c{k}" for k in range(9)}
    assert keys <= set(report)
    assert int(report["params"]) == count_params(build_network(NetConfig.desk(), init=False))
    assert main(["infer", "run/model.ssfw", "data/patch-00000.dwpx", "--out", "pred.dwpx"]) == 0
    labels, pid = read_label_file(workdir / "pred.dwpx")
    assert labels.shape == (32, 32) and pid == "patch-00000"


def test_count_matches_module_counters(workdir, capsys):
    assert main(["count", "--size", "32"]) == 0
    report = _kv(capsys.readouterr().out)
    net = build_network(NetConfig.desk(), init=False)
    assert int(report["params"]) == sum(p.size for p in net.parameters())
    assert int(report["flops"]) == sum(net.flops_breakdown(32, 32).values())


def test_exit_codes(workdir, capsys):
    assert main(["train", "--set", "optim.unknown=1"]) == 2
    assert main(["train", "--set", "data.manifest=missing/manifest.txt"]) == 3
    assert main(["eval", "missing.ssfw"]) == 3
    (workdir / "junk.ssfw").write_bytes(b"nope")
    assert main(["eval", "junk.ssfw"]) == 3


def test_incompatible_geometry_rejected_before_training(workdir, capsys):
    assert main(["synth", "--set", "data.n_patches=1", "--set", "data.patch_size=20"]) == 0
    assert main(["train", "--set", "optim.steps=1"]) == 2
    assert not (workdir / "run" / "loss.log").exists() or not (workdir / "run" / "loss.log").read_text()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_exits_4(workdir, capsys):
    assert main(["synth", *SMALL]) == 0
    assert main(["train", *SMALL, "--set", "optim.lr=1e30", "--set", "optim.steps=4"]) == 4
    assert "non-finite loss" in capsys.readouterr().err


def test_gradcheck_ops(capsys):
    assert main(["gradcheck", "--skip-network"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "passed=" in out
