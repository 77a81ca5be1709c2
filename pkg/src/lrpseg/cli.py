"""Command-line surface: gen-data, train-toy, classify, explain, segment, evaluate.

Subcommands compose through files. Exit codes: 0 success, 1 domain error,
2 usage error. The LRPSEG_THREADS environment variable caps the worker pool
used for per-image work items.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import imgio, lrp, metrics, network, segmentation, synth, training, weights as weightsmod
from .errors import LrpsegError

IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp"}


def _pool_size() -> int:
    env = os.environ.get("LRPSEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise LrpsegError(f"LRPSEG_THREADS must be an integer, got {env!r}") from None
    return min(8, os.cpu_count() or 1)


def _map_items(fn, items):
    items = list(items)
    workers = _pool_size()
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _image_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTS)
        if not found:
            raise LrpsegError(f"no image files found in directory {path}")
        return found
    if not path.exists():
        raise LrpsegError(f"missing file {path}: check the path")
    return [path]


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise LrpsegError(f"missing {what} {path}: check the path")
    return path


def cmd_gen_data(args) -> int:
    scene = synth.SceneSpec(
        seed=0, size=args.size,
        width_range=(args.width_min, args.width_max),
        contrast_range=(args.contrast_min, args.contrast_max),
        noise_amplitude=args.noise,
        control_points=(args.points_min, args.points_max),
    )
    ds = synth.make_dataset(args.n_pos, args.n_neg, seed=args.seed, scene=scene)
    synth.save_dataset(ds, args.out)
    counts = {s: len(getattr(ds, s)) for s in ("train", "val", "test")}
    print(f"wrote dataset to {args.out}: {counts}")
    return 0


def cmd_train_toy(args) -> int:
    ds = synth.load_dataset(_require_file(Path(args.data), "dataset directory"))
    arch = network.toy()
    cfg = training.TrainConfig(
        learning_rate_head=args.lr_head, learning_rate_conv=args.lr_conv,
        momentum=args.momentum, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
    )
    container, history = training.train(
        arch, ds.train.images, ds.train.labels, cfg,
        val=(ds.val.images, ds.val.labels),
        manifest=weightsmod.Manifest(variant="toy"),
    )
    weightsmod.save_weights(container, args.out)
    if args.csv:
        training.write_training_log(history, args.csv)
    last = history[-1]
    print(f"trained {cfg.epochs} epochs; final loss {last.loss:.4f}, "
          f"val balanced accuracy {last.balanced_accuracy:.3f}; weights -> {args.out}")
    return 0


def cmd_classify(args) -> int:
    container = weightsmod.load_weights(_require_file(Path(args.weights), "weights file"))
    arch = network.architecture_for(container.manifest.variant)
    paths = _image_paths(Path(args.image))

    def run(path: Path):
        trace = network.forward(arch, container, imgio.load_image(path))
        label, logits = network.classify(trace)
        d = container.manifest.damage_index
        return (path.stem, label, float(logits[d]), float(logits[1 - d]))

    rows = _map_items(run, paths)
    for row in rows:
        print(f"{row[0]},{row[1]},{row[2]:.6g},{row[3]:.6g}")
    if args.csv:
        with imgio.atomic_writer(args.csv) as f:
            w = csv.writer(f)
            w.writerow(["id", "label", "logit_damage", "logit_no_damage"])
            w.writerows(rows)
    return 0


def _target_index(name: str, manifest) -> int:
    return manifest.damage_index if name == "damage" else 1 - manifest.damage_index


def cmd_explain(args) -> int:
    container = weightsmod.load_weights(_require_file(Path(args.weights), "weights file"))
    arch = network.architecture_for(container.manifest.variant)
    assignment = lrp.resolve_assignment(args.rules, arch)
    target = _target_index(args.klass, container.manifest)
    paths = _image_paths(Path(args.image))
    out = Path(args.out)
    single = len(paths) == 1 and out.suffix.lower() == ".png"

    def run(path: Path):
        trace = network.forward(arch, container, imgio.load_image(path))
        rmap = lrp.propagate(trace, container, assignment, target, image_id=path.stem)
        png = out if single else out / f"{path.stem}_heat.png"
        imgio.save_heatmap_png(rmap.values, png)
        imgio.save_float_map(rmap.values, png.with_suffix(".npy"))
        return png

    written = _map_items(run, paths)
    print(f"wrote {len(written)} heatmap(s) (+ float dumps) to {out}")
    return 0


def _relevance_paths(path: Path) -> list[Path]:
    if path.is_dir():
        found = sorted(path.glob("*.npy"))
        if not found:
            raise LrpsegError(f"no .npy relevance dumps found in directory {path}")
        return found
    return [_require_file(path, "relevance dump")]


def cmd_segment(args) -> int:
    paths = _relevance_paths(Path(args.relevance))
    out = Path(args.out)
    single = len(paths) == 1 and out.suffix.lower() == ".png"

    def run(path: Path):
        values = imgio.load_float_map(path)
        result = segmentation.segment(values, args.method, seed=args.seed)
        stem = path.stem.removesuffix("_heat")
        png = out if single else out / f"{stem}_mask.png"
        imgio.save_mask_png(result.mask, png)
        if result.score is not None:
            imgio.save_float_map(result.score, png.with_suffix(".score.npy"))
            imgio.save_gray_png(result.score, png.with_suffix(".score.png"))
        return result.status

    statuses = _map_items(run, paths)
    degraded = [s for s in statuses if s != "ok"]
    note = f" ({len(degraded)} degraded: {sorted(set(degraded))})" if degraded else ""
    print(f"wrote {len(statuses)} mask(s) with method {args.method} to {out}{note}")
    return 0


def _mask_stem(path: Path) -> str:
    return path.stem.removesuffix("_mask")


def cmd_evaluate(args) -> int:
    pred_dir = _require_file(Path(args.pred), "prediction directory")
    truth_dir = _require_file(Path(args.truth), "truth directory")
    preds = {_mask_stem(p): p for p in sorted(pred_dir.glob("*.png")) if not p.name.endswith(".score.png")}
    if not preds:
        raise LrpsegError(f"no prediction masks (*.png) in {pred_dir}")
    rows = []
    pooled = dict(tp=0, fp=0, fn=0, tn=0)
    for stem, pred_path in preds.items():
        truth_path = truth_dir / f"{stem}.png"
        if not truth_path.exists():
            raise LrpsegError(f"no truth mask for '{stem}' in {truth_dir}")
        conf = metrics.confusion(imgio.load_mask_png(pred_path), imgio.load_mask_png(truth_path))
        pooled["tp"] += conf.tp
        pooled["fp"] += conf.fp
        pooled["fn"] += conf.fn
        pooled["tn"] += conf.tn
        rows.append((stem, metrics.iou(conf), metrics.precision(conf), metrics.recall(conf)))
    total = metrics.PixelConfusion(**pooled)
    summary = ("ALL", metrics.iou(total), metrics.precision(total), metrics.recall(total))

    fmt = lambda v: f"{v:.10g}" if v is not None else ""
    with imgio.atomic_writer(args.csv) as f:
        w = csv.writer(f)
        w.writerow(["id", "iou", "precision", "recall"])
        for row in rows:
            w.writerow([row[0], fmt(row[1]), fmt(row[2]), fmt(row[3])])
        w.writerow([summary[0], fmt(summary[1]), fmt(summary[2]), fmt(summary[3])])

    if args.scores and args.pr_csv:
        score_maps, truths = [], []
        for stem in preds:
            score_path = Path(args.scores) / f"{stem}_mask.score.npy"
            if score_path.exists():
                score_maps.append(imgio.load_float_map(score_path))
                truths.append(imgio.load_mask_png(truth_dir / f"{stem}.png"))
        if not score_maps:
            raise LrpsegError(f"no score dumps (*.score.npy) found in {args.scores}")
        curve = metrics.pr_curve(score_maps, truths)
        metrics.write_pr_csv(curve, args.pr_csv)
        tail = f", saturated at precision {curve.terminal_precision:.3f}" if curve.saturated else ""
        print(f"PR curve: {len(curve.points)} points, no-skill precision {curve.no_skill:.4g}{tail}")

    print(metrics.summary_table([("pooled",) + summary[1:]]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrpseg",
                                     description="Classify, explain, and segment surface damage.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-pos", type=int, default=100)
    p.add_argument("--n-neg", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--width-min", type=float, default=1.0)
    p.add_argument("--width-max", type=float, default=4.0)
    p.add_argument("--contrast-min", type=float, default=0.1)
    p.add_argument("--contrast-max", type=float, default=0.6)
    p.add_argument("--noise", type=float, default=0.06)
    p.add_argument("--points-min", type=int, default=3)
    p.add_argument("--points-max", type=int, default=7)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-toy", help="train the toy classifier on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="training log CSV (epoch, loss, balanced_accuracy)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr-head", type=float, default=0.001)
    p.add_argument("--lr-conv", type=float, default=0.0001)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("classify", help="run the classifier on an image or directory")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--csv")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("explain", help="write relevance heatmaps for an image or directory")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--rules", default="ours", help="'ours', 'montavon', or a rule-config file")
    p.add_argument("--class", dest="klass", choices=["damage", "no_damage"], default="damage")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("segment", help="turn relevance dumps into binary masks")
    p.add_argument("--relevance", required=True, help=".npy dump or directory of dumps")
    p.add_argument("--method", choices=list(segmentation.METHODS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("evaluate", help="score predicted masks against truth masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--scores", help="directory of *.score.npy dumps for the PR curve")
    p.add_argument("--pr-csv", help="output CSV for the pooled PR curve")
    p.set_defaults(fn=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LrpsegError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: missing file {e.filename}: check the path", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
