"""Command-line entry point.

Subcommands: synth, train, detect, eval, watch, bench. Configuration comes
from built-in defaults, then an optional `key = value` config file, then
command-line flags (flag wins). Exit codes: 0 success, 1 usage or config
error, 2 data error, 3 runtime failure.
"""

import argparse
import json
import os
import signal
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig, TrainConfig, load_config_file
from .data.annotations import AnnotationError, CLASS_NAMES, load_dataset
from .data.ppm import PpmError, read_ppm
from .data.synthetic import SceneSpec, write_synthetic_dataset
from .detector.boxes import center_offset
from .evalx import format_report, report_records
from .netcore.checkpoint import CheckpointError, load_checkpoint
from .netcore.network import build_network
from .pipeline import (
    DirectorySource,
    Recorder,
    StreamSource,
    measure_latency,
    run_watch,
)
from .train import checkpoint_name, detect_image, evaluate_split, preprocess_image, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_interrupted = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _opt(parser, flag, type_, help_, default):
    parser.add_argument(
        flag, type=type_, default=argparse.SUPPRESS, help=f"{help_} (default: {default})"
    )


def _common_flags(parser: argparse.ArgumentParser) -> None:
    d = RunConfig()
    parser.add_argument("--config", default=None, help="key = value config file")
    _opt(parser, "--seed", int, "PRNG seed", d.seed)
    _opt(parser, "--model", str, "model config: default | improved", d.model)
    _opt(parser, "--data-dir", str, "dataset root", d.data_dir)
    _opt(parser, "--checkpoint", str, "checkpoint base path", d.checkpoint)
    _opt(parser, "--clip-dir", str, "event clip directory", d.clip_dir)
    _opt(parser, "--event-log", str, "event log (JSON per line)", d.event_log)
    _opt(parser, "--out-dir", str, "report output directory", d.out_dir)
    _opt(parser, "--conf", float, "detection confidence threshold", d.conf_threshold)
    _opt(parser, "--nms-iou", float, "NMS IoU threshold", d.nms_iou)
    _opt(parser, "--eval-iou", float, "evaluation IoU threshold", d.eval_iou)
    _opt(parser, "--center-tol", float, "centering tolerance (pixels)", d.center_tolerance)
    parser.add_argument(
        "--deterministic", action="store_true", default=argparse.SUPPRESS,
        help="replace wall timestamps with frame indices (default: off)",
    )


def _train_flags(parser: argparse.ArgumentParser) -> None:
    t = TrainConfig()
    _opt(parser, "--iterations", int, "training iterations", t.iterations)
    _opt(parser, "--batch-size", int, "batch size", t.batch_size)
    _opt(parser, "--subdivision", int, "gradient accumulation slices", t.subdivision)
    _opt(parser, "--learning-rate", float, "SGD learning rate", t.learning_rate)
    _opt(parser, "--momentum", float, "SGD momentum", t.momentum)
    _opt(parser, "--decay", float, "weight decay", t.decay)
    _opt(parser, "--exposure", float, "value-scale augmentation range", t.exposure)
    _opt(parser, "--saturation", float, "saturation-scale augmentation range", t.saturation)
    _opt(parser, "--hue", float, "hue shift range (fraction of circle)", t.hue)
    _opt(parser, "--checkpoint-every", int, "periodic checkpoint interval", t.checkpoint_every)
    _opt(parser, "--lambda-coord", float, "coordinate loss weight", t.lambda_coord)
    _opt(parser, "--lambda-noobj", float, "no-object confidence loss weight", t.lambda_noobj)
    _opt(parser, "--grad-clip", float, "per-layer gradient norm clip, 0 disables", t.grad_clip)
    parser.add_argument(
        "--no-augment", action="store_true", default=argparse.SUPPRESS,
        help="disable HSV augmentation (default: augmentation on)",
    )


_RUN_FLAG_MAP = {
    "seed": "seed",
    "model": "model",
    "data_dir": "data_dir",
    "checkpoint": "checkpoint",
    "clip_dir": "clip_dir",
    "event_log": "event_log",
    "out_dir": "out_dir",
    "conf": "conf_threshold",
    "nms_iou": "nms_iou",
    "eval_iou": "eval_iou",
    "center_tol": "center_tolerance",
    "deterministic": "deterministic",
}

_TRAIN_FLAG_MAP = {
    "iterations": "iterations",
    "batch_size": "batch_size",
    "subdivision": "subdivision",
    "learning_rate": "learning_rate",
    "momentum": "momentum",
    "decay": "decay",
    "exposure": "exposure",
    "saturation": "saturation",
    "hue": "hue",
    "checkpoint_every": "checkpoint_every",
    "lambda_coord": "lambda_coord",
    "lambda_noobj": "lambda_noobj",
    "grad_clip": "grad_clip",
}


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, cfg)
    run_updates = {}
    for flag, field_name in _RUN_FLAG_MAP.items():
        if hasattr(args, flag):
            run_updates[field_name] = getattr(args, flag)
    train_updates = {}
    for flag, field_name in _TRAIN_FLAG_MAP.items():
        if hasattr(args, flag):
            train_updates[field_name] = getattr(args, flag)
    if hasattr(args, "no_augment"):
        train_updates["augment"] = False
    if train_updates:
        cfg = replace(cfg, train=replace(cfg.train, **train_updates))
    if run_updates:
        cfg = replace(cfg, **run_updates)
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trashwatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shape dataset")
    _common_flags(p)
    spec = SceneSpec()
    _opt(p, "--count", int, "number of scenes", 80)
    _opt(p, "--min-objects", int, "minimum objects per scene", spec.min_objects)
    _opt(p, "--max-objects", int, "maximum objects per scene", spec.max_objects)
    _opt(p, "--min-size", int, "minimum shape size (pixels)", spec.min_size)
    _opt(p, "--max-size", int, "maximum shape size (pixels)", spec.max_size)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on the dataset")
    _common_flags(p)
    _train_flags(p)
    _opt(p, "--eval-every", int, "test-split mAP every N iterations (0 = never)", 0)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="detect objects in one image")
    _common_flags(p)
    p.add_argument("image", help="input image (PPM)")
    p.add_argument("--draw", action="store_true", help="write an annotated copy to --out-dir")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    _common_flags(p)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--compare", default=None, metavar="CHECKPOINT",
                   help="second checkpoint for a side-by-side report")
    p.add_argument("--compare-model", choices=("default", "improved"), default=None,
                   help="model config of the --compare checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("watch", help="watch a frame stream and record events")
    _common_flags(p)
    p.add_argument("--source", default=None, help="frame directory to replay")
    p.add_argument("--stdin", action="store_true", help="read raw RGB24 frames from stdin")
    _opt(p, "--width", int, "stream frame width", 416)
    _opt(p, "--height", int, "stream frame height", 416)
    _opt(p, "--fps", float, "frames per second", 30.0)
    p.set_defaults(func=cmd_watch)

    p = sub.add_parser("bench", help="measure forward latency per model config")
    _common_flags(p)
    _opt(p, "--repetitions", int, "timed repetitions after warm-up", 50)
    p.add_argument("--image", default=None, help="input image (default: synthetic)")
    p.set_defaults(func=cmd_bench)

    return parser


def _load_net(cfg: RunConfig, num_classes: int):
    path = checkpoint_name(cfg.checkpoint)
    if not os.path.exists(path):
        if os.path.exists(cfg.checkpoint):
            path = cfg.checkpoint
        else:
            raise FileNotFoundError(f"checkpoint {path} not found")
    net = build_network(cfg.model, num_classes=num_classes, seed=cfg.seed)
    load_checkpoint(path, net)
    return net


def _class_names(cfg: RunConfig):
    try:
        return load_dataset(cfg.data_dir).class_names
    except (AnnotationError, OSError):
        return list(CLASS_NAMES)


def cmd_synth(cfg: RunConfig, args) -> int:
    spec = SceneSpec(
        min_objects=getattr(args, "min_objects", SceneSpec.min_objects),
        max_objects=getattr(args, "max_objects", SceneSpec.max_objects),
        min_size=getattr(args, "min_size", SceneSpec.min_size),
        max_size=getattr(args, "max_size", SceneSpec.max_size),
    ).validate()
    count = getattr(args, "count", 80)
    annotations = write_synthetic_dataset(cfg.data_dir, count, seed=cfg.seed, spec=spec)
    boxes = sum(len(a.boxes) for a in annotations)
    print(f"wrote {count} scenes ({boxes} boxes) under {cfg.data_dir}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    from .report import render_training_curves

    dataset = load_dataset(cfg.data_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, "training_log.csv")

    def progress(iteration, loss):
        if iteration % 10 == 0 or iteration == 1:
            print(f"iter {iteration}: loss {loss.total:.4f}", file=sys.stderr)

    summary = train(
        cfg,
        dataset=dataset,
        log_path=log_path,
        eval_every=getattr(args, "eval_every", 0),
        resume=args.resume,
        should_stop=lambda: _interrupted,
        progress=progress,
    )
    if summary["log_rows"]:
        render_training_curves(log_path, os.path.join(cfg.out_dir, "training_curves.png"))
    print(
        f"trained {summary['iterations_run']} iterations; "
        f"final checkpoint {summary['final_checkpoint']}"
    )
    return EXIT_OK


def cmd_detect(cfg: RunConfig, args) -> int:
    image = read_ppm(args.image)
    names = _class_names(cfg)
    net = _load_net(cfg, len(names))
    detections = detect_image(net, image, cfg.conf_threshold, cfg.nms_iou)
    h, w = image.shape[:2]
    for det in detections:
        record = {
            "image": args.image,
            "classId": det.class_id,
            "className": names[det.class_id],
            "cx": round(det.cx, 6),
            "cy": round(det.cy, 6),
            "w": round(det.w, 6),
            "h": round(det.h, 6),
            "score": round(det.score, 6),
        }
        print(json.dumps(record, sort_keys=True))
        ax, ay, centered = center_offset(det, w, h, cfg.center_tolerance)
        print(
            f"# {names[det.class_id]}: center offset ({ax:+.1f}, {ay:+.1f}) px, "
            f"centered={str(centered).lower()} (tol {cfg.center_tolerance})",
            file=sys.stderr,
        )
    if args.draw:
        from .report import render_annotated_image

        os.makedirs(cfg.out_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(args.image))[0]
        out_path = os.path.join(cfg.out_dir, f"{stem}.annotated.ppm")
        render_annotated_image(image, detections, names, out_path)
        print(f"# annotated image: {out_path}", file=sys.stderr)
    return EXIT_OK


def _eval_one(cfg: RunConfig, dataset, split: str):
    net = _load_net(cfg, dataset.num_classes)
    return evaluate_split(net, dataset, split, cfg)


def cmd_eval(cfg: RunConfig, args) -> int:
    from .report import render_pr_curves, write_pr_csv

    dataset = load_dataset(cfg.data_dir)
    if not dataset.split(args.split):
        raise AnnotationError(f"{args.split} split is empty")
    report = _eval_one(cfg, dataset, args.split)
    text = format_report(report)

    if args.compare:
        other_cfg = replace(
            cfg,
            checkpoint=args.compare,
            model=args.compare_model or cfg.model,
        )
        other = _eval_one(other_cfg, dataset, args.split)
        left = [f"[{cfg.model}] {cfg.checkpoint}"] + text.splitlines()
        right = [f"[{other_cfg.model}] {other_cfg.checkpoint}"] + format_report(other).splitlines()
        width = max(len(line) for line in left) + 4
        rows = max(len(left), len(right))
        left += [""] * (rows - len(left))
        right += [""] * (rows - len(right))
        for l, r in zip(left, right):
            print(l.ljust(width) + r)
    else:
        print(text, end="")

    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "eval_report.txt"), "w") as f:
        f.write(text)
    with open(os.path.join(cfg.out_dir, "eval_report.jsonl"), "w") as f:
        for record in report_records(report):
            f.write(json.dumps(record, sort_keys=True) + "\n")
    for row in report.per_class:
        if row.curve is not None:
            slug = row.name.replace(" ", "_")
            write_pr_csv(row.curve, os.path.join(cfg.out_dir, f"pr_{slug}.csv"))
    render_pr_curves(report, os.path.join(cfg.out_dir, "pr_curves.png"))
    return EXIT_OK


def cmd_watch(cfg: RunConfig, args) -> int:
    if bool(args.source) == bool(args.stdin):
        raise ConfigError("watch needs exactly one of --source or --stdin")
    names = _class_names(cfg)
    net = _load_net(cfg, len(names))
    fps = getattr(args, "fps", 30.0)
    if args.source:
        source = DirectorySource(args.source, fps=fps)
    else:
        source = StreamSource(
            sys.stdin.buffer,
            width=getattr(args, "width", 416),
            height=getattr(args, "height", 416),
            fps=fps,
        )
    os.makedirs(cfg.clip_dir, exist_ok=True)
    recorder = Recorder(
        cfg.clip_dir, fps=fps, event_log_path=cfg.event_log,
        deterministic=cfg.deterministic,
    )

    def detect_fn(frame):
        return detect_image(net, frame, cfg.conf_threshold, cfg.nms_iou)

    summary = run_watch(source, detect_fn, recorder, should_stop=lambda: _interrupted)
    print(
        f"frames: {summary.frames}  detections: {summary.detections}  "
        f"events: {summary.events}  partial: {summary.partial_events}  "
        f"latency mean {summary.mean_latency_ms:.1f} ms p95 {summary.p95_latency_ms:.1f} ms"
    )
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    if args.image:
        image = read_ppm(args.image)
    else:
        from .data.synthetic import generate_scene

        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        image, _ = generate_scene(rng)
    reps = getattr(args, "repetitions", 50)
    models = [cfg.model] if hasattr(args, "model") else ["default", "improved"]
    stats = {}
    for model in models:
        net = build_network(model, seed=cfg.seed)
        stats[model] = measure_latency(net, image, reps, preprocess=lambda im: preprocess_image(im)[None])
        s = stats[model]
        print(
            f"{model}: mean {s['mean_ms']:.1f} ms  p95 {s['p95_ms']:.1f} ms  "
            f"min {s['min_ms']:.1f}  max {s['max_ms']:.1f}  (n={reps})"
        )
    if len(stats) == 2:
        faster = min(stats, key=lambda m: stats[m]["mean_ms"])
        print(f"faster config: {faster}")
    return EXIT_OK


def _handle_interrupt(signum, frame):
    global _interrupted
    _interrupted = True


def main(argv=None) -> int:
    global _interrupted
    _interrupted = False
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    previous = signal.signal(signal.SIGINT, _handle_interrupt)
    try:
        cfg = build_config(args)
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationError, PpmError, CheckpointError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        signal.signal(signal.SIGINT, previous)


if __name__ == "__main__":
    sys.exit(main())
