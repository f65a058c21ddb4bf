"""Command-line entry points.

Subcommands: ``train``, ``eval``, ``infer``, ``analyze``, ``synth``.
Configuration comes from a JSON file (see ``config.RunConfig``) plus
overrides: dedicated flags and repeatable ``--set section.key=value``
assignments; flags win over the file.  Log verbosity is controlled by
the ``SCTRANSNET_LOG`` environment variable (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import backend
from .config import (ModelConfig, RunConfig, apply_overrides, load_run_config,
                     run_config_to_dict, save_run_config)
from .data import (Sample, SynthSpec, crop_back, load_dataset, normalize_image,
                   pad_to_multiple, save_dataset, synth_generate)
from .errors import CheckpointError, ConfigurationError, DataError
from .evaluate import evaluate_model, evaluate_pred_dir
from .metrics import (binarize, format_table, write_metrics_file,
                      write_roc_file)
from .model.analysis import format_report
from .model.network import SCTransNet
from .nn.params import read_checkpoint
from .train import train

log = logging.getLogger("sctransnet")


def _setup_logging() -> None:
    level = os.environ.get("SCTRANSNET_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"train.seed={args.seed}"])
    if getattr(args, "threshold", None) is not None:
        cfg = apply_overrides(cfg, [f"model.threshold={args.threshold}"])
    if getattr(args, "out", None):
        cfg = apply_overrides(cfg, [f"out={args.out}"])
    return cfg


def _model_from_checkpoint(path, override_cfg=None) -> SCTransNet:
    _, meta = read_checkpoint(path)
    if override_cfg is not None:
        cfg = override_cfg
    else:
        raw = meta.get("model_config")
        if raw is None:
            raise CheckpointError(f"{path}: checkpoint has no embedded model "
                                  "config; pass --config")
        cfg = ModelConfig(**raw)
    model = SCTransNet(cfg, seed=0)
    model.load_checkpoint(path)
    return model


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    if not cfg.data.root or not cfg.data.train_split:
        raise ConfigurationError("train requires data.root and "
                                 "data.train_split in the config")
    samples = load_dataset(cfg.data.root, cfg.data.train_split)
    val = (load_dataset(cfg.data.root, cfg.data.test_split)
           if cfg.data.test_split else samples)
    model = SCTransNet(cfg.model, seed=cfg.train.seed)
    out.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg, out / "config.json")
    log.info("training on %d samples (%d val), backend=%s",
             len(samples), len(val), backend.active_backend())
    history = train(model, samples, cfg.train, out_dir=out, val_samples=val)
    log.info("done: %d steps, final loss %.6f", len(history),
             history[-1]["loss"])
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if not cfg.data.root or not cfg.data.test_split:
        raise ConfigurationError("eval requires data.root and data.test_split")
    samples = load_dataset(cfg.data.root, cfg.data.test_split)
    threshold = cfg.model.threshold
    if args.pred_dir:
        results, acc = evaluate_pred_dir(args.pred_dir, samples, threshold)
    else:
        if not args.checkpoint:
            raise ConfigurationError("eval needs --checkpoint or --pred-dir")
        model = _model_from_checkpoint(
            args.checkpoint, cfg.model if args.config else None)
        results, acc = evaluate_model(model, samples, threshold,
                                      shards=args.shards)
    table = format_table(results)
    print(table)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(table + "\n")
    write_metrics_file(results, out / "metrics.dat")
    write_roc_file(acc.roc_points(), out / "roc.dat")
    log.info("wrote %s", out / "metrics.dat")
    return 0


def cmd_infer(args) -> int:
    model = _model_from_checkpoint(args.checkpoint)
    threshold = args.threshold if args.threshold is not None \
        else model.cfg.threshold
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    for path in args.images:
        path = Path(path)
        try:
            with Image.open(path) as im:
                gray = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        except Exception as exc:  # unreadable file: report, keep going
            log.error("cannot read %s: %s", path, exc)
            failures.append(str(path))
            continue
        padded, orig = pad_to_multiple(normalize_image(gray))
        saliency = crop_back(
            model.predict(padded[None, None].astype(model.cfg.np_dtype))[0, 0],
            orig)
        sal8 = np.round(saliency * 255.0).astype(np.uint8)
        mask8 = binarize(saliency, threshold) * 255
        Image.fromarray(sal8, mode="L").save(out / f"{path.stem}_saliency.png")
        Image.fromarray(mask8.astype(np.uint8), mode="L").save(
            out / f"{path.stem}_mask.png")
        log.info("%s -> %s", path, out / f"{path.stem}_saliency.png")
    if failures:
        log.error("failed on %d input(s): %s", len(failures),
                  ", ".join(failures))
        return 1
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    model = SCTransNet(cfg.model, seed=cfg.train.seed)
    print(format_report(model, args.size, args.size, args.convention))
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(height=args.size, width=args.size, count=args.count,
                     seed=args.seed if args.seed is not None else 0)
    samples = synth_generate(spec)
    train_path, test_path = save_dataset(samples, args.out, args.name)
    print(f"wrote {len(samples)} samples under {args.out} "
          f"(splits: {train_path.name}, {test_path.name})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sctransnet",
        description="Infrared small target detection: train, evaluate, "
                    "infer, analyze, synthesize.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (repeatable)")
        p.add_argument("--seed", type=int, help="override train.seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threshold", type=float,
                       help="binarization threshold")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or prediction dir")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--pred-dir", help="directory of <id>.png saliency maps "
                                      "to score instead of running a model")
    p.add_argument("--shards", type=int, default=1,
                   help="evaluate in k merged shards")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run inference on image files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="inference")
    p.add_argument("--threshold", type=float)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("analyze", help="report parameter and FLOP budgets")
    common(p)
    p.add_argument("--size", type=int, default=256, help="input extent")
    p.add_argument("--convention", default="mac", choices=("mac", "flop2"))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--name", default="synth")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, DataError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
