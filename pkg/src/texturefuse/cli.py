"""Command-line interface: preprocess, train, eval, predict, bench, inspect.

Errors are reported as a single "error: ..." line on stderr with exit code
1; usage problems exit 2 (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import data, haptic, visual, weights
from .builders import build_fusion_head, build_net, receptive_field, spec_from_weights
from .infer import classify_fused, classify_haptic, classify_image
from .network import Network

NET_CHOICES = ("haptic", "visual", "visual-tcnn", "fusion")


def _load_net(name: str, path) -> Network:
    spec = spec_from_weights(name, path)
    return Network(spec, weights.load_network_params(spec, path))


# ---------------------------------------------------------------------------
# preprocess

def cmd_preprocess(args) -> int:
    if not args.haptic and not args.images:
        raise ValueError("preprocess needs --haptic and/or --images")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"classes": [], "entries": []}
    if args.haptic:
        index = data.load_tum(args.haptic)
        manifest["classes"] = list(index.classes)
        for label, name in enumerate(index.classes):
            cdir = out / name
            cdir.mkdir(exist_ok=True)
            for src in index.haptic_files[name]:
                spec = haptic.trace_file_to_spectrogram(src, trim_samples=args.trim)
                dst = cdir / (src.stem + ".spec")
                weights.save_tensor(dst, spec.frames)
                manifest["entries"].append(
                    {"kind": "haptic", "class": name, "label": label,
                     "source": str(src), "file": str(dst.relative_to(out)),
                     "frames": spec.num_frames}
                )
    if args.images:
        index = data.load_tum(args.images)
        manifest["classes"] = list(index.classes)
        for label, name in enumerate(index.classes):
            cdir = out / name
            cdir.mkdir(exist_ok=True)
            for src in index.image_files[name]:
                pixels = visual.half_resize(visual.load_image(src))
                dst = cdir / (src.stem + ".img")
                weights.save_tensor(dst, pixels)
                manifest["entries"].append(
                    {"kind": "image", "class": name, "label": label,
                     "source": str(src), "file": str(dst.relative_to(out)),
                     "shape": list(pixels.shape)}
                )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"cached {len(manifest['entries'])} entries under {out}")
    return 0


# ---------------------------------------------------------------------------
# train

def _fold_split(index, args):
    folds = data.make_folds(index, folds=args.folds, seed=args.fold_seed)
    if not 0 <= args.fold < len(folds):
        raise ValueError(f"fold {args.fold} outside 0..{len(folds) - 1}")
    return folds[args.fold]


def _read_config(args, net_name) -> data.TrainConfig:
    cfg = data.DEFAULT_CONFIGS[net_name]
    if args.config:
        cfg = data.parse_config(Path(args.config).read_text(), cfg)
    return cfg


def cmd_train(args) -> int:
    index = data.load_tum(args.data)
    split = _fold_split(index, args)
    cfg = _read_config(args, args.net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "classes.txt").write_text("\n".join(index.classes) + "\n")
    (out / "config.txt").write_text(data.format_config(cfg))
    if args.net == "haptic":
        items = data.load_haptic_items(index, split.train_haptic, trim=args.trim)
        result = data.train_haptic(items, cfg, index.class_count)
        weights.save_network(result.model.net, out / "haptic.weights")
    elif args.net in ("visual", "visual-tcnn"):
        items = data.load_visual_items(index, split.train_image)
        result = data.train_visual(items, cfg, index.class_count, net_name=args.net,
                                   pretrained=args.pretrained)
        weights.save_network(result.model.net, out / f"{args.net}.weights")
        weights.save_tensor(out / f"{args.net}.means", result.model.channel_means)
    else:
        if not args.haptic_weights or not args.visual_weights:
            raise ValueError("fusion training needs --haptic-weights and --visual-weights")
        h_model = data.HapticModel(_load_net("haptic", args.haptic_weights))
        v_name = args.visual_net
        v_net = _load_net(v_name, args.visual_weights)
        means_file = Path(args.visual_weights).with_suffix(".means")
        means = weights.load_tensor(means_file) if means_file.exists() else np.zeros(3, np.float32)
        v_model = data.VisualModel(v_net, means)
        h_items = data.load_haptic_items(index, split.train_haptic, trim=args.trim)
        v_items = data.load_visual_items(index, split.train_image)
        result = data.train_fusion(h_items, v_items, cfg, h_model, v_model,
                                   layer_choice=args.layer_choice)
        model = result.model
        weights.save_network(model.head, out / f"fusion-{args.layer_choice}.weights")
        weights.save_network(model.haptic.net, out / "fusion-haptic.weights")
        weights.save_network(model.visual.net, out / "fusion-visual.weights")
        weights.save_tensor(out / "fusion-visual.means", model.visual.channel_means)
    losses = "\n".join(f"{i},{l:.6f}" for i, l in result.loss_trace)
    (out / "loss_trace.csv").write_text("iteration,loss\n" + losses + "\n")
    last = result.loss_trace[-1]
    print(f"trained {args.net} fold {args.fold}: final loss {last[1]:.4f} at iteration {last[0]}")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    index = data.load_tum(args.data)
    split = _fold_split(index, args)
    wdir = Path(args.weights)
    if args.net == "haptic":
        model = data.HapticModel(_load_net("haptic", wdir / "haptic.weights"))
        h_items = data.load_haptic_items(index, split.test_haptic, trim=args.trim)
        metrics = data.evaluate(model, h_items=h_items, class_count=index.class_count)
    elif args.net in ("visual", "visual-tcnn"):
        net = _load_net(args.net, wdir / f"{args.net}.weights")
        means = weights.load_tensor(wdir / f"{args.net}.means")
        model = data.VisualModel(net, means)
        v_items = data.load_visual_items(index, split.test_image)
        metrics = data.evaluate(model, v_items=v_items, class_count=index.class_count)
    else:
        h_net = _load_net("haptic", wdir / "fusion-haptic.weights")
        v_net = _load_net(args.visual_net, wdir / "fusion-visual.weights")
        means = weights.load_tensor(wdir / "fusion-visual.means")
        head = _load_net("fusion", wdir / f"fusion-{args.layer_choice}.weights")
        model = data.FusionModel(data.HapticModel(h_net), data.VisualModel(v_net, means),
                                 head, args.layer_choice)
        h_items = data.load_haptic_items(index, split.test_haptic, trim=args.trim)
        v_items = data.load_visual_items(index, split.test_image)
        metrics = data.evaluate(model, h_items=h_items, v_items=v_items,
                                class_count=index.class_count, k=args.k, seed=args.seed)
    if args.report:
        data.write_report(metrics, index.classes, args.report)
    print(json.dumps({"net": args.net, "fold": args.fold,
                      "fragment_accuracy": metrics.fragment_accuracy,
                      "voting_accuracy": metrics.voting_accuracy}))
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    if not args.haptic and not args.image:
        raise ValueError("predict needs --haptic and/or --image")
    wdir = Path(args.weights)
    classes_file = wdir / "classes.txt"
    classes = classes_file.read_text().split() if classes_file.exists() else None
    if args.haptic and args.image:
        hw = wdir / ("fusion-haptic.weights" if (wdir / "fusion-haptic.weights").exists() else "haptic.weights")
        vw_name = args.visual_net
        vw = wdir / ("fusion-visual.weights" if (wdir / "fusion-visual.weights").exists() else f"{vw_name}.weights")
        h_net = _load_net("haptic", hw)
        v_net = _load_net(vw_name, vw)
        means_file = wdir / ("fusion-visual.means" if (wdir / "fusion-visual.means").exists() else f"{vw_name}.means")
        means = weights.load_tensor(means_file) if means_file.exists() else np.zeros(3, np.float32)
        head = _load_net("fusion", wdir / f"fusion-{args.fusion}.weights")
        spec = haptic.normalize_channels(haptic.trace_file_to_spectrogram(args.haptic, trim_samples=args.trim))
        pixels = visual.mean_subtract(visual.half_resize(visual.load_image(args.image)), means)
        vote = classify_fused(h_net, v_net, head, spec, pixels, k=args.k,
                              rng=np.random.default_rng(args.seed), layer_choice=args.fusion)
    elif args.haptic:
        net = _load_net("haptic", wdir / "haptic.weights")
        spec = haptic.normalize_channels(haptic.trace_file_to_spectrogram(args.haptic, trim_samples=args.trim))
        vote = classify_haptic(net, spec)
    else:
        name = args.visual_net
        net = _load_net(name, wdir / f"{name}.weights")
        means = weights.load_tensor(wdir / f"{name}.means")
        pixels = visual.mean_subtract(visual.half_resize(visual.load_image(args.image)), means)
        vote = classify_image(net, pixels)
    out = {
        "label": int(vote.label),
        "class": classes[vote.label] if classes else None,
        "counts": [int(c) for c in vote.counts],
        "fragment_labels": np.asarray(vote.fragment_labels).tolist(),
    }
    print(json.dumps(out))
    return 0


# ---------------------------------------------------------------------------
# bench / inspect

def cmd_bench(args) -> int:
    report = bench_mod.bench(
        args.net,
        frames=args.frames,
        image_size=args.size,
        runs=args.runs,
        warmup=args.warmup,
        seed=args.seed,
        width_scale=args.width_scale,
        class_count=args.classes,
    )
    print(report.table())
    print(bench_mod.CSV_HEADER)
    print(report.csv_row())
    if args.csv:
        Path(args.csv).write_text(bench_mod.CSV_HEADER + "\n" + report.csv_row() + "\n")
    return 0 if report.passed else 1


def cmd_inspect(args) -> int:
    spec = build_net(args.net, args.classes, args.width_scale)
    print(spec.describe())
    info = receptive_field(spec)
    print(f"receptive field: {info.rf[0]}x{info.rf[1]}")
    print(f"jump: {info.jump[0]}x{info.jump[1]}")
    print(f"min input: {info.min_input[0]}x{info.min_input[1]}")
    grid = spec.grid_shape(*info.min_input)
    print(f"grid at min input: {grid[0]}x{grid[1]}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="texturefuse",
                                 description="surface-material classification toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="cache spectrograms / resized images for a dataset tree")
    p.add_argument("--haptic", help="dataset root with <class>/haptic/*.acc3")
    p.add_argument("--images", help="dataset root with <class>/image/*")
    p.add_argument("--out", required=True, help="cache directory")
    p.add_argument("--trim", type=int, default=0, help="leading samples to drop from each trace")
    p.set_defaults(func=cmd_preprocess)

    def add_fold_args(p):
        p.add_argument("--fold", type=int, default=0)
        p.add_argument("--folds", type=int, default=10)
        p.add_argument("--fold-seed", type=int, default=0)
        p.add_argument("--trim", type=int, default=0)

    p = sub.add_parser("train", help="train one network on one fold")
    p.add_argument("--net", choices=NET_CHOICES, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value training configuration file")
    p.add_argument("--pretrained", help="optional trunk weight container (visual nets)")
    p.add_argument("--haptic-weights", help="trained haptic net (fusion)")
    p.add_argument("--visual-weights", help="trained visual net (fusion)")
    p.add_argument("--visual-net", choices=("visual", "visual-tcnn"), default="visual")
    p.add_argument("--layer-choice", choices=("fc2", "fc3"), default="fc2")
    add_fold_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained weights on a fold's test items")
    p.add_argument("--net", choices=NET_CHOICES, required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="directory for metrics.json and CSV reports")
    p.add_argument("--visual-net", choices=("visual", "visual-tcnn"), default="visual")
    p.add_argument("--layer-choice", choices=("fc2", "fc3"), default="fc2")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    add_fold_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one trace and/or image")
    p.add_argument("--haptic", help="trace file")
    p.add_argument("--image", help="image file")
    p.add_argument("--weights", required=True)
    p.add_argument("--fusion", choices=("fc2", "fc3"), default="fc2")
    p.add_argument("--visual-net", choices=("visual", "visual-tcnn"), default="visual")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trim", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="dense vs sliding-window timing and equivalence")
    p.add_argument("--net", choices=("haptic", "visual", "visual-tcnn"), required=True)
    p.add_argument("--frames", type=int, default=800)
    p.add_argument("--size", type=int, default=384)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.add_argument("--classes", type=int, default=69)
    p.add_argument("--csv", help="also write the CSV line to this file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print a network's layer table and receptive field")
    p.add_argument("--net", choices=("haptic", "visual", "visual-tcnn"), required=True)
    p.add_argument("--classes", type=int, default=69)
    p.add_argument("--width-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # single-line machine-parsable failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
