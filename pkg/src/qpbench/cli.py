"""Command-line entry point.

Subcommands: gen-toy, gen-facade, train, experiment scale-filters,
experiment scale-layers, eval, bench. Exit codes: 0 success, 1 usage error,
2 data/format error, 3 all runs diverged.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen, harness, nn
from .errors import (
    DataError,
    DimensionError,
    ExperimentError,
    FormatError,
    NumericError,
    ParameterError,
)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ParameterError(f"size must look like 64x64, got {text!r}") from None


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise ParameterError(f"expected a comma-separated integer list, got {text!r}") from None


def _load_raw_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from exc


def _config_from_raw(raw: dict, base: harness.ExperimentConfig) -> harness.ExperimentConfig:
    merged = harness.config_to_dict(base)
    merged.update(raw)
    try:
        return harness.config_from_dict(merged)
    except TypeError as exc:
        raise ParameterError(f"bad config field: {exc}") from exc


def _apply_overrides(cfg, args) -> harness.ExperimentConfig:
    if getattr(args, "optimizer", None):
        cfg = replace(cfg, optimizer=args.optimizer)
    optim = cfg.optim
    if getattr(args, "lr", None) is not None:
        optim = replace(optim, learning_rate=args.lr)
    if getattr(args, "mu", None) is not None:
        optim = replace(optim, mu=args.mu)
    cfg = replace(cfg, optim=optim)
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if getattr(args, "iterations", None) is not None:
        cfg = replace(cfg, iterations_per_epoch=args.iterations)
    if getattr(args, "repetitions", None) is not None:
        cfg = replace(cfg, repetitions=args.repetitions)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, out=args.out)
    return cfg


def _cmd_gen_toy(args) -> int:
    img = datagen.gen_toy(args.seed, *_parse_size(args.size))
    written = datagen.save_labeled_dir([img], args.out, datagen.TOY_PALETTE, prefix="toy")
    print(f"wrote {len(written)} image pair(s) and palette.json to {args.out}")
    return 0


def _cmd_gen_facade(args) -> int:
    w, h = _parse_size(args.size)
    imgs = datagen.gen_facade_like(args.seed, w, h, args.count)
    written = datagen.save_labeled_dir(imgs, args.out, datagen.FACADE_PALETTE, prefix="facade")
    print(f"wrote {len(written)} image pair(s) and palette.json to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_raw(_load_raw_config(args.config), harness.ExperimentConfig())
    cfg = _apply_overrides(cfg, args)
    summary = harness.run_repetitions(cfg)
    records = [rec for run in summary.runs for rec in run.records]
    harness.write_csv(records, cfg.out, metadata=harness.run_metadata(cfg))
    agg_path = Path(cfg.out).with_name(Path(cfg.out).stem + "_aggregate.csv")
    harness.write_aggregate_csv(summary, agg_path)
    if args.save_model:
        survivor = next(run for run in summary.runs if not run.diverged)
        nn.save_model(survivor.network, args.save_model)
        print(f"model of run {survivor.run_id} saved to {args.save_model}")
    final = summary.final_row("test")
    print(f"wrote {cfg.out} and {agg_path}")
    print(
        f"{cfg.optimizer}: final test loss {final.loss_mean:.6f}, "
        f"overall acc {final.overall_acc_mean:.4f}, "
        f"mean class acc {final.mean_class_acc_mean:.4f} "
        f"({summary.diverged_runs} of {cfg.repetitions} runs diverged)"
    )
    return 0


def _sweep_base_config(args, sweep: str) -> harness.ExperimentConfig:
    raw = _load_raw_config(args.config)
    base = harness.sweep_protocol()
    if sweep == "k" and "arch" not in raw:
        base = replace(base, arch=harness.ArchConfig("facade", k=2, l=0))
    cfg = _config_from_raw(raw, base)
    return _apply_overrides(cfg, args)


def _write_sweep_outputs(cells, cfg) -> int:
    out = Path(cfg.out)
    harness.write_sweep_csv(cells, out)
    summary_path = out.with_name(out.stem + "_summary.csv")
    harness.write_sweep_summary_csv(cells, summary_path)
    print(f"wrote {out} and {summary_path}")
    failed = [c for c in cells if c.summary is None]
    for cell in failed:
        print(f"cell {cell.sweep}={cell.value} {cell.optimizer}: {cell.error}")
    if len(failed) == len(cells):
        raise ExperimentError("every sweep cell diverged")
    return 0


def _cmd_scale_filters(args) -> int:
    cfg = _sweep_base_config(args, "k")
    cells = harness.experiment_scale_filters(cfg, _parse_int_list(args.k))
    return _write_sweep_outputs(cells, cfg)


def _cmd_scale_layers(args) -> int:
    cfg = _sweep_base_config(args, "l")
    cells = harness.experiment_scale_layers(cfg, _parse_int_list(args.l))
    return _write_sweep_outputs(cells, cfg)


def _collapse_gray(images, channels: int):
    """PPM stores grayscale images as replicated RGB; undo that losslessly
    when the model expects a single channel."""
    if channels != 1:
        return images
    out = []
    for img in images:
        arr = img.image
        if arr.shape[0] == 3 and (arr[0] == arr[1]).all() and (arr[0] == arr[2]).all():
            img = datagen.LabeledImage(arr[:1], img.labels, img.num_classes)
        out.append(img)
    return out


def _cmd_eval(args) -> int:
    net = nn.load_model(args.model)
    palette = (
        datagen.ClassPalette.load(args.palette) if args.palette else datagen.FACADE_PALETTE
    )
    images, report = datagen.load_labeled_dir(args.data, palette)
    if not images:
        raise DataError(f"no labeled images in {args.data}")
    images = _collapse_gray(images, net.spec.input_channels)
    loss, cm = harness.evaluate(net, images, palette.background)
    if report.issues:
        print(f"warning: {report.unknown_pixels()} pixels with unknown label colors")
    print(f"images: {len(images)}")
    print(f"loss: {loss:.6f}")
    print(f"overall_acc: {cm.overall_accuracy():.4f}")
    print(f"mean_class_acc: {cm.mean_class_accuracy():.4f}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import run_benchmark

    print(run_benchmark(repeats=args.repeats, quick=args.quick))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpbench",
        description="QuickProp vs. gradient descent on desk-scale semantic segmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate the striped toy image")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--size", default="64x64")
    p.set_defaults(func=_cmd_gen_toy)

    p = sub.add_parser("gen-facade", help="generate facade-like street scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", default="48x48")
    p.set_defaults(func=_cmd_gen_facade)

    p = sub.add_parser("train", help="run seeded training repetitions")
    p.add_argument("--config", required=True)
    p.add_argument("--optimizer", choices=["gd", "momentum", "quickprop"])
    p.add_argument("--lr", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--save-model")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("experiment", help="network-complexity scaling sweeps")
    esub = p.add_subparsers(dest="experiment", required=True)
    pf = esub.add_parser("scale-filters", help="sweep the width scale k")
    pf.add_argument("--config", required=True)
    pf.add_argument("--k", required=True, help="comma-separated k values, e.g. 2,7,12,17,22")
    for flag, kind in (("--epochs", int), ("--iterations", int), ("--repetitions", int),
                       ("--seed", int), ("--lr", float), ("--mu", float)):
        pf.add_argument(flag, type=kind)
    pf.add_argument("--out")
    pf.set_defaults(func=_cmd_scale_filters)
    pl = esub.add_parser("scale-layers", help="sweep the repeated-layer count l")
    pl.add_argument("--config", required=True)
    pl.add_argument("--l", required=True, help="comma-separated l values, e.g. 0,1,2,3,4,5")
    for flag, kind in (("--epochs", int), ("--iterations", int), ("--repetitions", int),
                       ("--seed", int), ("--lr", float), ("--mu", float)):
        pl.add_argument(flag, type=kind)
    pl.add_argument("--out")
    pl.set_defaults(func=_cmd_scale_layers)

    p = sub.add_parser("eval", help="evaluate a saved model on a labeled directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--palette")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time the kernel backends")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; remap to our usage code.
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DimensionError, FormatError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
