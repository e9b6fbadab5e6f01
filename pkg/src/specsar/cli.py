"""Command-line entry point: ``specsar <command> [--config FILE] [--set section.key=value ...]``.

Exit codes: 0 success, 2 configuration error, 3 data or format error,
4 numerical failure (non-finite loss or failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from specsar.autodiff.checkpoint import load_checkpoint, save_checkpoint
from specsar.counting import count_params, format_report
from specsar.data.patchio import read_patch, write_label_file
from specsar.data.synth import class_histogram
from specsar.errors import ConfigError, NumericalError, SpecSarError
from specsar.metrics import metrics
from specsar.model.network import build_network
from specsar.runconfig import RunConfig, load_config
from specsar.training import (
    TrainSettings,
    evaluate,
    load_dataset,
    measure_fps,
    predict,
    reference_mode,
    synthesize,
    train_model,
)

log = logging.getLogger("specsar")

CHECKPOINT_NAME = "model.ssfw"
LOSS_LOG_NAME = "loss.log"
CONFIG_SNAPSHOT = "run.ini"


def _out(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    sys.stdout.flush()


def _load(args) -> RunConfig:
    return load_config(args.config, args.set or ())


def _config_for_checkpoint(args) -> RunConfig:
    """Explicit --config wins; otherwise use the snapshot written next to the checkpoint."""
    if args.config is None:
        snapshot = Path(args.checkpoint).with_name(CONFIG_SNAPSHOT)
        if snapshot.exists():
            return load_config(str(snapshot), args.set or ())
    return _load(args)


def _network_from_checkpoint(cfg: RunConfig, path):
    net = build_network(cfg.net_config(), init=False)
    net.load_state_dict(load_checkpoint(path))
    return net


# ---- commands ------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load(args)
    manifest = Path(cfg.data.manifest)
    d = cfg.data
    rep = synthesize(manifest.parent, d.n_patches, cfg.run.seed, d.patch_size, d.n_classes,
                     d.window_days, d.coverage, d.world_seed, manifest.name)
    _out(f"patches={len(rep.paths)}")
    _out(f"discarded={len(rep.discarded)}")
    _out("histogram=" + ",".join(str(int(c)) for c in rep.histogram))
    _out(f"manifest={manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    samples = load_dataset(cfg.data.manifest)
    if not samples:
        raise ConfigError(f"manifest {cfg.data.manifest} lists no patches")
    net = build_network(cfg.net_config(), seed=cfg.run.seed)
    net.check_geometry(samples[0].size, samples[0].size)
    o = cfg.optim
    settings = TrainSettings(
        lr=o.lr, batch_size=o.batch_size, epochs=o.epochs, steps=o.steps, betas=(o.beta1, o.beta2),
        eps=o.eps, weight_decay=o.weight_decay, augment=o.augment, loss=cfg.loss.kind,
        focal=cfg.focal_config(class_histogram(samples)), seed=cfg.run.seed,
    )
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_SNAPSHOT).write_text(cfg.to_text(), encoding="utf-8")
    ckpt = out_dir / CHECKPOINT_NAME

    with open(out_dir / LOSS_LOG_NAME, "w", encoding="utf-8") as loss_log, reference_mode(cfg.run.reference_mode):
        def on_step(rec):
            loss_log.write(rec.line() + "\n")

        def on_epoch(epoch):
            loss_log.flush()
            save_checkpoint(ckpt, net.state_dict())
            log.info("epoch %d checkpoint written", epoch)

        save_checkpoint(ckpt, net.state_dict())
        records = train_model(net, samples, settings, on_step, on_epoch)
        save_checkpoint(ckpt, net.state_dict())
    _out(f"steps={len(records)}")
    if records:
        _out(f"initial_loss={records[0].loss!r}")
        _out(f"final_loss={records[-1].loss!r}")
    _out(f"checkpoint={ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_for_checkpoint(args)
    net = _network_from_checkpoint(cfg, args.checkpoint)
    samples = load_dataset(args.manifest or cfg.data.manifest)
    if not samples:
        raise ConfigError("evaluation manifest lists no patches")
    with reference_mode(cfg.run.reference_mode):
        cm = evaluate(net, samples, cfg.net_config().n_classes)
        fps = measure_fps(net, samples[0])
    m = metrics(cm)
    size = samples[0].size
    flops = sum(net.flops_breakdown(size, size).values())
    _out(f"# {len(samples)} patches, {cm.total} pixels")
    _out(f"miou={m['miou']!r}")
    _out(f"oa={m['oa']!r}")
    _out(f"f1={m['f1']!r}")
    for k, v in enumerate(m["per_class_iou"]):
        _out(f"iou_c{k}={v!r}")
    _out(f"params={count_params(net)}")
    _out(f"flops={flops}")
    _out(f"fps={fps:.3f}")
    return 0


def cmd_infer(args) -> int:
    cfg = _config_for_checkpoint(args)
    net = _network_from_checkpoint(cfg, args.checkpoint)
    sample = read_patch(args.patch)
    with reference_mode(cfg.run.reference_mode):
        labels = predict(net, sample)
    write_label_file(labels, args.out, sample.patch_id)
    _out(f"labels={args.out}")
    return 0


def cmd_count(args) -> int:
    cfg = _load(args)
    net = build_network(cfg.net_config(), init=False)
    size = args.size or (510 if cfg.model.preset == "full" else cfg.data.patch_size)
    _out(format_report(net, size, size, compare_paper=cfg.model.preset == "full"))
    return 0


def cmd_gradcheck(args) -> int:
    from specsar.gradsuite import run_suite

    cfg = _load(args)

    def report(res, seconds):
        status = "PASS" if res.passed else "FAIL"
        _out(f"{res.name} {status} max_rel_err={res.max_rel_error:.3e} probes={res.checked} time={seconds:.2f}s")

    results = run_suite(cfg.run.seed, include_network=not args.skip_network, report=report)
    failed = [r.name for r in results if not r.passed]
    _out(f"passed={len(results) - len(failed)} failed={len(failed)}")
    if failed:
        raise NumericalError("gradient check failed for: " + ", ".join(failed))
    return 0


def cmd_ablate(args) -> int:
    from specsar.experiments import format_table, run_ablation

    cfg = _load(args)
    e = cfg.experiment

    def progress(res):
        log.info("%s mIoU per seed %s", res.variant.label, res.mious)

    switches, splits = run_ablation(cfg.seeds(), e.steps, e.bench_patches, e.bench_size,
                                    e.test_patches, e.lr, progress)
    table = format_table(switches, splits)
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.txt").write_text(table, encoding="utf-8")
    _out(table)
    return 0


COMMANDS = {
    "synth": (cmd_synth, "synthesize patches and a manifest"),
    "train": (cmd_train, "train a model; writes checkpoint, loss log and config snapshot"),
    "eval": (cmd_eval, "metrics report for a checkpoint on a dataset"),
    "infer": (cmd_infer, "predict a label file for one patch"),
    "count": (cmd_count, "parameter and FLOP report"),
    "gradcheck": (cmd_gradcheck, "finite-difference gradient suite"),
    "ablate": (cmd_ablate, "desk-scale module and split-ratio ablations"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specsar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="config file with [section] key = value lines")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        if name in ("eval", "infer"):
            p.add_argument("checkpoint")
        if name == "eval":
            p.add_argument("manifest", nargs="?", help="defaults to data.manifest")
        if name == "infer":
            p.add_argument("patch")
            p.add_argument("--out", required=True, help="output label file")
        if name == "count":
            p.add_argument("--size", type=int, default=0, help="input side length")
        if name == "gradcheck":
            p.add_argument("--skip-network", action="store_true",
                           help="only check individual ops and modules")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except SpecSarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
