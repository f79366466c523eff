"""Command-line entry point: train, eval, reconstruct, render, gradcheck, gallery."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluation, gradcheck, inr, training
from .config import ConfigError, Config, apply_overrides, parse_file
from .imageio import write_png
from .masking import apply_mask


def _load_config(args):
    cfg = parse_file(args.config) if args.config else Config()
    return apply_overrides(cfg, args.set or [])


def _add_config_args(p):
    p.add_argument("--config", help="config file of section.key = value lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap; 1 is the reproducibility reference")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="minr",
        description="Masked implicit neural representations at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, write checkpoint + trace")
    _add_config_args(p)
    p.add_argument("--out", default="runs/train", help="output directory")
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("eval", help="ID/OOD PSNR report for checkpoints")
    _add_config_args(p)
    p.add_argument("--ckpt", action="append", required=True,
                   help="checkpoint path (repeatable)")
    p.add_argument("--out", default="runs/eval", help="output directory")
    p.add_argument("--ood-source",
                   help="extra data source to evaluate out of distribution "
                        "(default: the twin synthetic domain)")

    p = sub.add_parser("reconstruct", help="reconstruct one masked instance")
    _add_config_args(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--id", required=True, help="instance id")
    p.add_argument("--out", default="runs/reconstruct")

    p = sub.add_parser("render", help="render a predicted INR at any resolution")
    _add_config_args(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--size", required=True, metavar="HxW")
    p.add_argument("--out", default="render.png")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    _add_config_args(p)

    p = sub.add_parser("gallery", help="grid PNG: masked | models... | truth")
    _add_config_args(p)
    p.add_argument("--ckpt", action="append", required=True)
    p.add_argument("--count", type=int, default=3, help="instances per gallery")
    p.add_argument("--out", default="gallery.png")
    return parser


def _restore(path):
    model, cfg, step, _ = training.restore_model(path)
    return model, cfg


def _twin_source(source):
    twins = {"synth:faces_like": "synth:scenes_like",
             "synth:scenes_like": "synth:faces_like"}
    return twins.get(source)


def cmd_train(args):
    cfg = _load_config(args)
    out = Path(args.out)
    ckpt, trace = training.train(cfg, out, resume_from=args.resume)
    print(f"checkpoint: {ckpt}")
    print(f"loss trace: {out / 'loss_trace.csv'} ({len(trace)} steps)")
    return 0


def cmd_eval(args):
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    strategies = [s.strip() for s in cfg["eval.strategies"].split(",") if s.strip()]
    ratios = [float(r) for r in cfg["eval.ratios"].split(",") if r.strip()]
    rows = []
    for ckpt_path in args.ckpt:
        model, ckpt_cfg = _restore(ckpt_path)
        train_source = ckpt_cfg["data.source"]
        splits = [training.load_dataset(ckpt_cfg)]
        ood = args.ood_source or _twin_source(train_source)
        if ood:
            splits.append(training.load_dataset(ckpt_cfg, source=ood))
        rows.extend(evaluation.evaluate(
            model, splits[0].domain_tag, splits, strategies, ratios,
            cfg["eval.seed"]))
    report = out / "report.csv"
    evaluation.write_report(report, rows)
    print(f"report: {report} ({len(rows)} rows)")
    return 0


def _find_instance(cfg, instance_id):
    split = training.load_dataset(cfg)
    return split.find(instance_id)


def cmd_reconstruct(args):
    cfg = _load_config(args)
    model, ckpt_cfg = _restore(args.ckpt)
    inst = _find_instance(ckpt_cfg, args.id)
    mask = evaluation.eval_mask(cfg["eval.seed"], cfg["mask.strategy"],
                                cfg["mask.ratio"], 0, model.patch_grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = model.reconstruct(inst.pixels, mask)
    write_png(out / f"{args.id}_masked.png",
              apply_mask(inst.pixels, mask).masked_image)
    write_png(out / f"{args.id}_recon.png", raw)
    write_png(out / f"{args.id}_recon_pasted.png",
              evaluation.paste_visible(raw, inst.pixels, mask))
    write_png(out / f"{args.id}_truth.png", inst.pixels)
    print(f"wrote 4 images to {out}")
    return 0


def cmd_render(args):
    cfg = _load_config(args)
    model, ckpt_cfg = _restore(args.ckpt)
    if model.mode == "mae":
        print("error: render requires an INR-producing checkpoint", file=sys.stderr)
        return 1
    try:
        h, w = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        print(f"error: bad --size {args.size!r}, expected HxW", file=sys.stderr)
        return 2
    inst = _find_instance(ckpt_cfg, args.id)
    mask = evaluation.eval_mask(cfg["eval.seed"], cfg["mask.strategy"],
                                cfg["mask.ratio"], 0, model.patch_grid)
    weights = model.predict_weights(inst.pixels, mask)
    write_png(args.out, inr.render(weights, h, w))
    print(f"rendered {h}x{w} image: {args.out}")
    return 0


def cmd_gradcheck(args):
    reports = gradcheck.run_all(log=print)
    return 0 if all(r["passed"] for r in reports.values()) else 1


def cmd_gallery(args):
    cfg = _load_config(args)
    models = []
    ckpt_cfg = None
    for path in args.ckpt:
        model, ckpt_cfg = _restore(path)
        label = model.mode
        recon = (model.reconstruct_pasted if hasattr(model, "reconstruct_pasted")
                 else model.reconstruct)
        models.append((label, recon))
    split = training.load_dataset(ckpt_cfg)
    instances = split.test[:args.count] or split.train[:args.count]
    grid = models and training.restore_model(args.ckpt[0])[0].patch_grid
    masks = [evaluation.eval_mask(cfg["eval.seed"], cfg["mask.strategy"],
                                  cfg["mask.ratio"], i, grid)
             for i in range(len(instances))]
    evaluation.emit_gallery(args.out, instances, masks, models)
    print(f"gallery: {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "reconstruct": cmd_reconstruct,
    "render": cmd_render,
    "gradcheck": cmd_gradcheck,
    "gallery": cmd_gallery,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError, KeyError,
            training.TrainingAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
