"""Command-line entry points: train, eval, infer, bench, ablate, gen-data.

Options may come from a flat ``key = value`` config file (# comments allowed)
via --config; explicit flags always override file values. Every source of
randomness hangs off --seed / --data-seed, so identical invocations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import io_formats
from .ablation import VARIANTS, compare_error_map_scales, run_ablation
from .data import SampleStream
from .errors import InvalidArgumentError
from .flops import flops_count, reference_3d_flops_count
from .model import (
    ModelConfig,
    infer,
    load_checkpoint,
    save_checkpoint,
)
from .train import (
    KITTI_WEIGHTS,
    SCENEFLOW_WEIGHTS,
    evaluate,
    normalize_colors,
    train_model,
    zero_disparity_baseline,
)

WEIGHT_PRESETS = {"sceneflow": SCENEFLOW_WEIGHTS, "kitti": KITTI_WEIGHTS}


def load_config_file(path) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}"
                )
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args, parser):
    if not getattr(args, "config", None):
        return args
    values = load_config_file(args.config)
    sub = parser.sk_subparsers[args.command]
    defaults = {
        a.dest: a.default for a in sub._actions if a.dest != "help"
    }
    for key, raw in values.items():
        if key not in defaults:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        current = getattr(args, key)
        if current != defaults[key]:
            continue  # an explicit flag wins
        template = defaults[key]
        if template is None:
            value = raw
            setattr(args, key, value)
            continue
        if isinstance(template, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(template, int):
            value = int(raw)
        elif isinstance(template, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)
    return args


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        max_disparity=args.max_disparity,
        width_multiplier=args.width_multiplier,
        input_height=args.height,
        input_width=args.width,
        seed=args.seed,
    )


def _add_model_flags(p):
    p.add_argument("--max-disparity", type=int, default=24,
                   help="full-resolution disparity range in pixels")
    p.add_argument("--width-multiplier", type=float, default=0.25)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--seed", type=int, default=0,
                   help="parameter initialization seed")


def _add_data_flags(p):
    p.add_argument("--data-seed", type=int, default=1234)
    p.add_argument("--max-disparity-px", type=float, default=16.0,
                   help="largest synthetic ground-truth disparity")


def _parse_resolution(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InvalidArgumentError(
            f"resolution must look like HxW, got {text!r}"
        ) from None
    return h, w


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereokit", description="Stereo disparity estimation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.sk_subparsers = {}

    def add_parser(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        parser.sk_subparsers[name] = sp
        return sp

    p = add_parser("train", help="train on synthetic stereo pairs")
    p.add_argument("--config", help="key=value option file")
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-mode", choices=("sceneflow", "kitti"),
                   default="sceneflow")
    p.add_argument("--weights", choices=tuple(WEIGHT_PRESETS),
                   default="sceneflow")
    p.add_argument("--train-samples", type=int, default=2000)
    p.add_argument("--val-samples", type=int, default=200)
    p.add_argument("--eval-every", type=int, default=250)
    p.add_argument("--target-epe", type=float, default=None,
                   help="stop once full validation EPE beats this")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSONL metrics log path")

    p = add_parser("eval", help="evaluate a checkpoint on synthetic data")
    p.add_argument("--config", help="key=value option file")
    p.add_argument("--checkpoint", required=True)
    _add_data_flags(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="unused; accepted "
                   "for uniformity")

    p = add_parser("infer", help="predict disparity for one image pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True,
                   help=".pfm or .png (16-bit) disparity output")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted "
                   "for uniformity")

    p = add_parser("bench", help="report analytic FLOPs and peak memory")
    p.add_argument("--config", help="key=value option file")
    p.add_argument("--resolution", default="384x1248", help="HxW")
    p.add_argument("--width", type=float, default=1.0,
                   help="channel width multiplier")
    p.add_argument("--max-disparity", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--measure", action="store_true",
                   help="also time one desk-scale forward pass")

    p = add_parser("ablate", help="train component-ablation variants")
    p.add_argument("--config", help="key=value option file")
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--variants", default=",".join(VARIANTS),
                   help="comma-separated subset of the named variants")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--train-samples", type=int, default=2000)
    p.add_argument("--val-samples", type=int, default=200)
    p.add_argument("--error-map-scales", action="store_true",
                   help="run the error-map scale-count comparison instead")
    p.add_argument("--out", help="JSON report path")

    p = add_parser("gen-data", help="write synthetic sample files")
    _add_data_flags(p)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0, help="alias of --data-seed "
                   "when given")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_train(args) -> int:
    config = _model_config(args)
    result = train_model(
        config,
        steps=args.steps,
        batch_size=args.batch_size,
        base_lr=args.lr,
        lr_mode=args.lr_mode,
        weights=WEIGHT_PRESETS[args.weights],
        data_seed=args.data_seed,
        train_samples=args.train_samples,
        val_samples=args.val_samples,
        max_disparity_px=args.max_disparity_px,
        eval_every=args.eval_every,
        target_epe=args.target_epe,
        log_path=args.log,
        progress=lambda rec: print(json.dumps(rec), flush=True),
    )
    save_checkpoint(args.out, result.params)
    print(json.dumps({
        "steps": result.steps_run,
        "wall_time_s": round(result.wall_time_s, 2),
        "val": result.val_metrics,
        "train_checksum": result.train_checksum,
        "checkpoint": args.out,
    }))
    return 0


def _cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    cfg = params.config
    stream = SampleStream(args.data_seed, cfg.input_height, cfg.input_width,
                          max_disparity=args.max_disparity_px)
    samples = stream.take(args.samples)
    report = evaluate(params, samples)
    report["zero_baseline_epe"] = zero_disparity_baseline(samples)
    print(json.dumps(report))
    return 0


def _cmd_infer(args) -> int:
    params = load_checkpoint(args.checkpoint)
    left = io_formats.read_image_png(args.left)
    right = io_formats.read_image_png(args.right)
    pred = infer(params, normalize_colors(left), normalize_colors(right))
    if args.out.lower().endswith(".pfm"):
        io_formats.write_pfm(args.out, pred)
    elif args.out.lower().endswith(".png"):
        io_formats.write_kitti_png(args.out, pred)
    else:
        raise InvalidArgumentError("--out must end in .pfm or .png")
    print(json.dumps({"out": args.out, "mean_disparity":
                      float(pred.data.mean())}))
    return 0


def _cmd_bench(args) -> int:
    h, w = _parse_resolution(args.resolution)
    config = ModelConfig(
        max_disparity=args.max_disparity, width_multiplier=args.width,
        input_height=64, input_width=128, seed=args.seed,
    )
    combined = flops_count(config, (h, w))
    reference = reference_3d_flops_count(config, (h, w))
    if args.measure:
        from .model import build
        from .tensor import Tensor, no_grad
        import numpy as np
        desk = ModelConfig(max_disparity=24, width_multiplier=0.25,
                           input_height=64, input_width=128, seed=args.seed)
        params = build(desk)
        rng = np.random.default_rng(args.seed)
        left = Tensor(rng.uniform(size=(1, 3, 64, 128)))
        right = Tensor(rng.uniform(size=(1, 3, 64, 128)))
        with no_grad():
            t0 = time.time()
            infer(params, left, right)
            combined.wall_time_s = time.time() - t0
    print(combined.summary())
    print(reference.summary())
    print(json.dumps({
        "combined_gflops": combined.total_flops / 1e9,
        "reference_gflops": reference.total_flops / 1e9,
        "flops_ratio": reference.total_flops / combined.total_flops,
        "combined_peak_gib": combined.peak_activation_bytes / 2**30,
        "reference_peak_gib": reference.peak_activation_bytes / 2**30,
        "memory_ratio": (reference.peak_activation_bytes
                         / combined.peak_activation_bytes),
    }))
    return 0


def _cmd_ablate(args) -> int:
    config = _model_config(args)
    if args.error_map_scales:
        report = compare_error_map_scales(
            config, steps=args.steps, data_seed=args.data_seed,
            train_samples=args.train_samples, val_samples=args.val_samples,
            max_disparity_px=args.max_disparity_px,
        )
        payload = {k: {"scales": list(v["scales"]), "epe": v["epe"],
                       "final_loss": v["loss_curve"][-1]}
                   for k, v in report.items()}
        print(json.dumps(payload, indent=2))
    else:
        names = [v.strip() for v in args.variants.split(",") if v.strip()]
        report = run_ablation(
            config, variants=names, steps=args.steps,
            data_seed=args.data_seed, train_samples=args.train_samples,
            val_samples=args.val_samples,
            progress=lambda row: print(f"done: {row.name} "
                                       f"epe={row.epe:.3f}", flush=True),
        )
        print(report.table())
        payload = [vars(r) for r in report.rows]
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    return 0


def _cmd_gen_data(args) -> int:
    import os

    os.makedirs(args.out, exist_ok=True)
    seed = args.seed if args.seed else args.data_seed
    stream = SampleStream(seed, args.height, args.width,
                          max_disparity=args.max_disparity_px)
    for i in range(args.count):
        sample = stream.next()
        prefix = f"{args.out}/sample{i:04d}"
        io_formats.write_image_png(f"{prefix}_left.png", sample.left)
        io_formats.write_image_png(f"{prefix}_right.png", sample.right)
        io_formats.write_pfm(f"{prefix}_disp.pfm", sample.gt_disparity)
    print(json.dumps({"count": args.count, "dir": args.out,
                      "checksum": stream.checksum}))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "bench": _cmd_bench,
    "ablate": _cmd_ablate,
    "gen-data": _cmd_gen_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, parser)
        return _COMMANDS[args.command](args)
    except (InvalidArgumentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
