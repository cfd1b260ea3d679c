"""segpipe command line: every pipeline phase as a subcommand.

gen -> cluster/labelgen -> recolor/augment/split -> train -> infer/eval ->
bench. Flags override config-file values, which override built-in
defaults; every resolved configuration can be echoed with --print-config.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 diverged
training.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import (
    kmeans_assign,
    kmeans_fit,
    load_cluster_model,
    recolor,
    save_cluster_model,
)
from .dataset import (
    AUGMENT_OPS,
    augment,
    generate_synthetic_scene,
    load_split,
    split_dataset,
    save_split,
)
from .errors import (
    ConfigError,
    DataError,
    SegpipeError,
    TrainingDivergedError,
    UsageError,
)
from .imageio import load_image, load_label_map, save_image, save_label_map
from .metrics import (
    confusion_counts,
    format_class_table,
    fps_benchmark,
    report_from_counts,
    write_fps_report,
    write_report,
)
from .network import (
    NetworkConfig,
    build_network,
    load_checkpoint,
    param_millions,
    predict,
    save_checkpoint,
    save_train_report,
    train,
)
from .palette import default_palette, encode_labels, load_palette, save_palette

DEFAULTS = {
    "data_dir": ".",
    "palette_file": None,
    "checkpoint": "model.ckpt",
    "report_dir": None,
    "k": 12,
    "seed": 42,
    "split_ratio": 0.8,
    "epochs": 100,
    "batch_size": 2,
    "learning_rate": None,
    "optimizer": "adam",
    "num_classes": 12,
}

_CONFIG_TYPES = {
    "data_dir": str,
    "palette_file": str,
    "checkpoint": str,
    "report_dir": str,
    "k": int,
    "seed": int,
    "split_ratio": float,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "optimizer": str,
    "num_classes": int,
}


def load_config(path) -> dict:
    """Load and validate a JSON config file (documented keys only)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    config = {}
    for key, value in raw.items():
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}: unknown config key \"{key}\"")
        expected = _CONFIG_TYPES[key]
        if isinstance(value, bool) or not isinstance(
            value, (expected, int) if expected is float else expected
        ):
            raise ConfigError(
                f"{path}: key \"{key}\" must be {expected.__name__}, "
                f"got {type(value).__name__}"
            )
        if key == "optimizer" and value not in ("sgd", "adam"):
            raise ConfigError(f"{path}: optimizer must be 'sgd' or 'adam'")
        config[key] = float(value) if expected is float else value
    return config


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file with default settings")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved settings as JSON and exit")
    parser.add_argument("--seed", type=int, help="PRNG seed (default 42)")


def _resolve(args, flag, key=None, default=None):
    """Flag value if given, else config-file value, else default."""
    value = getattr(args, flag)
    if value is not None:
        return value
    if key is not None:
        if key in args._config:
            return args._config[key]
        if key in DEFAULTS and DEFAULTS[key] is not None:
            return DEFAULTS[key]
    return default


def _maybe_print_config(args, cfg) -> bool:
    if args.print_config:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return True
    return False


def _palette_from(args):
    path = getattr(args, "palette", None)
    if path is None:
        path = args._config.get("palette_file")
    return (load_palette(path), path) if path else (default_palette(), None)


def _image_stems(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    stems = sorted(p.stem for p in directory.glob("*.ppm"))
    if not stems:
        raise DataError(f"{directory}: contains no .ppm images")
    return stems


def _load_samples(images_dir, labels_dir, stems) -> list:
    samples = []
    for stem in stems:
        img = load_image(Path(images_dir) / f"{stem}.ppm")
        lab = load_label_map(Path(labels_dir) / f"{stem}.pgm")
        if img.shape[:2] != lab.shape:
            raise DataError(f"{stem}: image size {img.shape[:2]} != "
                            f"label size {lab.shape}")
        samples.append((img, lab))
    return samples


def _parse_widths(text) -> tuple:
    try:
        widths = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--widths must be a comma list of ints, got {text!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise UsageError(f"--widths entries must be positive, got {text!r}")
    return widths


def cmd_gen(args) -> int:
    cfg = {
        "out": _resolve(args, "out", "data_dir"),
        "count": args.count,
        "width": args.width,
        "height": args.height,
        "seed": _resolve(args, "seed", "seed"),
    }
    if _maybe_print_config(args, cfg):
        return 0
    palette, _ = _palette_from(args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for i in range(cfg["count"]):
        image, labels = generate_synthetic_scene(cfg["width"], cfg["height"],
                                                 cfg["seed"] + i, palette)
        save_image(image, out / f"scene_{i:03d}.ppm")
        save_label_map(labels, out / f"scene_{i:03d}.pgm")
    save_palette(palette, out / "palette.csv")
    print(f"gen: wrote {cfg['count']} scenes ({cfg['width']}x{cfg['height']}, "
          f"seed {cfg['seed']}) and palette.csv to {out}")
    return 0


def cmd_cluster(args) -> int:
    cfg = {
        "input": args.input,
        "k": _resolve(args, "k", "k"),
        "seed": _resolve(args, "seed", "seed"),
        "max_iters": args.max_iters,
        "tol": args.tol,
        "out": args.out,
    }
    if _maybe_print_config(args, cfg):
        return 0
    image = load_image(cfg["input"])
    model = kmeans_fit(image.reshape(-1, 3), cfg["k"], seed=cfg["seed"],
                       max_iters=cfg["max_iters"], tol=cfg["tol"])
    save_cluster_model(model, cfg["out"])
    print(f"cluster: k={model.k} seed={model.seed} "
          f"iterations={model.iterations_run} inertia={model.inertia:.6f} "
          f"-> {cfg['out']}")
    return 0


def cmd_labelgen(args) -> int:
    cfg = {
        "images": _resolve(args, "images", "data_dir"),
        "k": _resolve(args, "k", "k"),
        "seed": _resolve(args, "seed", "seed"),
        "out": args.out,
        "model_out": args.model_out,
        "max_iters": args.max_iters,
        "tol": args.tol,
    }
    if _maybe_print_config(args, cfg):
        return 0
    palette, _ = _palette_from(args)
    stems = _image_stems(cfg["images"])
    images = [load_image(Path(cfg["images"]) / f"{s}.ppm") for s in stems]
    pixels = np.concatenate([img.reshape(-1, 3) for img in images])
    model = kmeans_fit(pixels, cfg["k"], seed=cfg["seed"],
                       max_iters=cfg["max_iters"], tol=cfg["tol"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for stem, image in zip(stems, images):
        clusters = kmeans_assign(image, model)
        quantized = recolor(clusters, model.centroids)
        save_label_map(encode_labels(quantized, palette), out / f"{stem}.pgm")
    if cfg["model_out"]:
        save_cluster_model(model, cfg["model_out"])
    print(f"labelgen: k={model.k} seed={model.seed} "
          f"inertia={model.inertia:.6f}, labeled {len(stems)} images -> {out}")
    return 0


def cmd_recolor(args) -> int:
    cfg = {"labels": args.labels, "model": args.model,
           "palette": args.palette, "out": args.out}
    if _maybe_print_config(args, cfg):
        return 0
    if (args.model is None) == (args.palette is None):
        raise UsageError("recolor: give exactly one of --model or --palette")
    labels = load_label_map(cfg["labels"])
    if args.model:
        colors = load_cluster_model(cfg["model"]).centroids
    else:
        colors = load_palette(cfg["palette"]).color_array()
    save_image(recolor(labels, colors), cfg["out"])
    print(f"recolor: {cfg['labels']} -> {cfg['out']}")
    return 0


def cmd_augment(args) -> int:
    ops = tuple(args.ops.split(","))
    for op in ops:
        if op not in AUGMENT_OPS:
            raise UsageError(f"unknown augmentation {op!r}, "
                             f"expected any of {','.join(AUGMENT_OPS)}")
    cfg = {"images": args.images, "labels": args.labels, "ops": list(ops),
           "out_images": args.out_images, "out_labels": args.out_labels}
    if _maybe_print_config(args, cfg):
        return 0
    images_path = Path(args.images)
    if images_path.is_dir():
        stems = _image_stems(images_path)
        pairs = [(images_path / f"{s}.ppm", Path(args.labels) / f"{s}.pgm")
                 for s in stems]
    else:
        pairs = [(images_path, Path(args.labels))]
    out_images = Path(args.out_images)
    out_labels = Path(args.out_labels)
    out_images.mkdir(parents=True, exist_ok=True)
    out_labels.mkdir(parents=True, exist_ok=True)
    written = 0
    for img_path, lab_path in pairs:
        image = load_image(img_path)
        labels = load_label_map(lab_path)
        for op in ops:
            aug_img, aug_lab = augment(image, labels, op)
            save_image(aug_img, out_images / f"{img_path.stem}_{op}.ppm")
            save_label_map(aug_lab, out_labels / f"{img_path.stem}_{op}.pgm")
            written += 1
    print(f"augment: wrote {written} augmented samples "
          f"({','.join(ops)}) to {out_images}")
    return 0


def cmd_split(args) -> int:
    cfg = {
        "images": _resolve(args, "images", "data_dir"),
        "ratio": _resolve(args, "ratio", "split_ratio"),
        "seed": _resolve(args, "seed", "seed"),
        "out": args.out,
    }
    if _maybe_print_config(args, cfg):
        return 0
    stems = _image_stems(cfg["images"])
    split = split_dataset(stems, cfg["ratio"], seed=cfg["seed"])
    save_split(split, cfg["out"])
    print(f"split: {len(split.train)} train / {len(split.val)} val "
          f"(ratio {cfg['ratio']}, seed {cfg['seed']}) -> {cfg['out']}")
    return 0


def cmd_train(args) -> int:
    cfg = {
        "images": _resolve(args, "images", "data_dir"),
        "labels": args.labels,
        "split": args.split,
        "out": _resolve(args, "out", "checkpoint"),
        "epochs": _resolve(args, "epochs", "epochs"),
        "batch_size": _resolve(args, "batch_size", "batch_size"),
        "learning_rate": _resolve(args, "lr", "learning_rate"),
        "optimizer": _resolve(args, "optimizer", "optimizer"),
        "seed": _resolve(args, "seed", "seed"),
        "num_classes": _resolve(args, "classes", "num_classes"),
        "widths": args.widths,
        "report": args.report,
    }
    if _maybe_print_config(args, cfg):
        return 0
    labels_dir = cfg["labels"] if cfg["labels"] else cfg["images"]
    stems = _image_stems(cfg["images"])
    if cfg["split"]:
        split = load_split(cfg["split"])
        train_stems, val_stems = split.train, split.val
    else:
        train_stems, val_stems = stems, []
    train_samples = _load_samples(cfg["images"], labels_dir, train_stems)
    val_samples = _load_samples(cfg["images"], labels_dir, val_stems)
    net_config = NetworkConfig(num_classes=cfg["num_classes"],
                               stage_widths=_parse_widths(cfg["widths"]))
    net = build_network(net_config, seed=cfg["seed"])
    report = train(net, train_samples, val_samples,
                   optimizer=cfg["optimizer"], epochs=cfg["epochs"],
                   batch_size=cfg["batch_size"],
                   learning_rate=cfg["learning_rate"], seed=cfg["seed"])
    save_checkpoint(net, cfg["out"])
    if cfg["report"]:
        save_train_report(report, cfg["report"])
    loss = report.final_loss
    miou = report.final_val_miou
    print(f"train: {cfg['epochs']} epochs on {len(train_samples)} samples "
          f"(seed {cfg['seed']}), final loss "
          f"{'n/a' if loss is None else f'{loss:.4f}'}, "
          f"val MIoU {'n/a' if miou is None else f'{miou:.4f}'}, "
          f"params {param_millions(net):.2f}M -> {cfg['out']}")
    return 0


def _select_eval_stems(args, truth_dir) -> list:
    stems = sorted(p.stem for p in Path(truth_dir).glob("*.pgm"))
    if not stems:
        raise DataError(f"{truth_dir}: contains no .pgm label maps")
    if args.split:
        split = load_split(args.split)
        subset = {"train": split.train, "val": split.val,
                  "all": split.train + split.val}[args.subset]
        stems = [s for s in stems if s in set(subset)]
        if not stems:
            raise DataError(f"no ground-truth labels match the {args.subset} subset")
    return stems


def cmd_eval(args) -> int:
    cfg = {
        "pred": args.pred,
        "checkpoint": args.checkpoint,
        "images": _resolve(args, "images", "data_dir"),
        "truth": args.truth,
        "num_classes": _resolve(args, "classes", "num_classes"),
        "report": args.report,
        "split": args.split,
        "subset": args.subset,
    }
    if _maybe_print_config(args, cfg):
        return 0
    if (args.pred is None) == (args.checkpoint is None):
        raise UsageError("eval: give exactly one of --pred or --checkpoint")
    stems = _select_eval_stems(args, cfg["truth"])
    num_classes = cfg["num_classes"]
    net = None
    if args.checkpoint:
        net = load_checkpoint(cfg["checkpoint"])
        num_classes = net.config.num_classes
    counts = None
    for stem in stems:
        truth = load_label_map(Path(cfg["truth"]) / f"{stem}.pgm")
        if net is not None:
            pred = predict(net, load_image(Path(cfg["images"]) / f"{stem}.ppm"))
        else:
            pred = load_label_map(Path(cfg["pred"]) / f"{stem}.pgm")
        c = confusion_counts(pred, truth, num_classes)
        counts = c if counts is None else counts + c
    report = report_from_counts(counts)
    palette, _ = _palette_from(args)
    names = palette.names if len(palette) == num_classes else None
    print(format_class_table(report, counts, names))
    report_path = cfg["report"]
    if report_path is None and args._config.get("report_dir"):
        report_path = Path(args._config["report_dir"]) / "eval.csv"
        Path(args._config["report_dir"]).mkdir(parents=True, exist_ok=True)
    if report_path:
        pm = param_millions(net) if net is not None else None
        write_report(report_path, report, counts, names, param_millions=pm)
    print(f"eval: mean_iou {report.mean_iou:.4f} over "
          f"{report.classes_counted} classes, {len(stems)} images")
    return 0


def cmd_bench(args) -> int:
    cfg = {
        "checkpoint": _resolve(args, "checkpoint", "checkpoint"),
        "images": _resolve(args, "images", "data_dir"),
        "warmup": args.warmup,
        "repeats": args.repeats,
        "report": args.report,
    }
    if _maybe_print_config(args, cfg):
        return 0
    net = load_checkpoint(cfg["checkpoint"])
    stems = _image_stems(cfg["images"])
    images = [load_image(Path(cfg["images"]) / f"{s}.ppm") for s in stems]
    result = fps_benchmark(net, images, warmup=cfg["warmup"],
                           repeats=cfg["repeats"])
    report_path = cfg["report"]
    if report_path is None and args._config.get("report_dir"):
        report_path = Path(args._config["report_dir"]) / "bench.json"
        Path(args._config["report_dir"]).mkdir(parents=True, exist_ok=True)
    if report_path:
        write_fps_report(report_path, result)
    print(f"bench: {result.fps:.2f} FPS ({result.images_processed} images in "
          f"{result.wall_seconds:.4f} s, warmup {result.warmup_iters}, "
          f"params {param_millions(net):.2f}M, {result.machine})")
    return 0


def cmd_infer(args) -> int:
    cfg = {
        "checkpoint": _resolve(args, "checkpoint", "checkpoint"),
        "images": _resolve(args, "images", "data_dir"),
        "out": args.out,
    }
    if _maybe_print_config(args, cfg):
        return 0
    net = load_checkpoint(cfg["checkpoint"])
    images_path = Path(cfg["images"])
    stems = _image_stems(images_path) if images_path.is_dir() else [images_path.stem]
    base = images_path if images_path.is_dir() else images_path.parent
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    palette = load_palette(args.palette) if args.palette else None
    for stem in stems:
        pred = predict(net, load_image(base / f"{stem}.ppm"))
        save_label_map(pred, out / f"{stem}.pgm")
        if palette is not None:
            save_image(recolor(pred, palette.color_array()), out / f"{stem}_color.ppm")
    print(f"infer: predicted {len(stems)} images -> {out}")
    return 0


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="segpipe",
                             description="pixel labeling pipeline")
    parser.add_argument("--version", action="version",
                        version=f"segpipe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{gen,cluster,labelgen,recolor,augment,"
                                        "split,train,eval,bench,infer}")

    p = sub.add_parser("gen", help="generate synthetic scenes with labels")
    _add_common(p)
    p.add_argument("--out", help="output directory (default: data_dir)")
    p.add_argument("--count", type=int, default=8, help="number of scenes (default 8)")
    p.add_argument("--width", type=int, default=64, help="scene width (default 64)")
    p.add_argument("--height", type=int, default=64, help="scene height (default 64)")
    p.add_argument("--palette", help="palette CSV to draw with (default: built-in)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("cluster", help="fit k-means colors on one image")
    _add_common(p)
    p.add_argument("--input", required=True, help="input PPM image")
    p.add_argument("--k", type=int, help="cluster count (default 12)")
    p.add_argument("--max-iters", type=int, default=100,
                   help="Lloyd iteration cap (default 100)")
    p.add_argument("--tol", type=float, default=0.5,
                   help="centroid shift stop threshold (default 0.5)")
    p.add_argument("--out", required=True, help="cluster model output path")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("labelgen",
                       help="pseudo-label images via k-means color clustering")
    _add_common(p)
    p.add_argument("--images", help="directory of PPM images (default: data_dir)")
    p.add_argument("--k", type=int, help="cluster count (default 12)")
    p.add_argument("--max-iters", type=int, default=100,
                   help="Lloyd iteration cap (default 100)")
    p.add_argument("--tol", type=float, default=0.5,
                   help="centroid shift stop threshold (default 0.5)")
    p.add_argument("--palette", help="palette CSV for class mapping (default: built-in)")
    p.add_argument("--out", required=True, help="output directory for PGM labels")
    p.add_argument("--model-out", help="also save the fitted cluster model here")
    p.set_defaults(func=cmd_labelgen)

    p = sub.add_parser("recolor", help="paint a label map with colors")
    _add_common(p)
    p.add_argument("--labels", required=True, help="input PGM label map")
    p.add_argument("--model", help="cluster model file (centroid colors)")
    p.add_argument("--palette", help="palette CSV (class colors)")
    p.add_argument("--out", required=True, help="output PPM image")
    p.set_defaults(func=cmd_recolor)

    p = sub.add_parser("augment", help="flip/rotate image+label pairs")
    _add_common(p)
    p.add_argument("--images", required=True, help="PPM image file or directory")
    p.add_argument("--labels", required=True, help="PGM label file or directory")
    p.add_argument("--ops", required=True,
                   help=f"comma list from {','.join(AUGMENT_OPS)}")
    p.add_argument("--out-images", required=True, help="output image directory")
    p.add_argument("--out-labels", required=True, help="output label directory")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("split", help="deterministic train/val split")
    _add_common(p)
    p.add_argument("--images", help="directory of PPM images (default: data_dir)")
    p.add_argument("--ratio", type=float, help="train fraction (default 0.8)")
    p.add_argument("--out", required=True, help="split file output path")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the segmentation network")
    _add_common(p)
    p.add_argument("--images", help="directory of PPM images (default: data_dir)")
    p.add_argument("--labels", help="directory of PGM labels (default: --images)")
    p.add_argument("--split", help="split file; train on its train ids")
    p.add_argument("--out", help="checkpoint output path (default: model.ckpt)")
    p.add_argument("--epochs", type=int, help="epoch count (default 100)")
    p.add_argument("--batch-size", type=int, dest="batch_size",
                   help="batch size (default 2)")
    p.add_argument("--lr", type=float, help="learning rate (default: per optimizer)")
    p.add_argument("--optimizer", choices=("sgd", "adam"),
                   help="optimizer (default adam)")
    p.add_argument("--classes", type=int, help="class count (default 12)")
    p.add_argument("--widths", default="16,32,64",
                   help="encoder stage widths (default 16,32,64)")
    p.add_argument("--report", help="write per-epoch training report CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class IOU against ground truth")
    _add_common(p)
    p.add_argument("--pred", help="directory of predicted PGM labels")
    p.add_argument("--checkpoint", help="predict on the fly with this checkpoint")
    p.add_argument("--images", help="PPM directory for --checkpoint mode")
    p.add_argument("--truth", required=True, help="directory of ground-truth PGMs")
    p.add_argument("--classes", type=int, help="class count (default 12)")
    p.add_argument("--palette", help="palette CSV for class names")
    p.add_argument("--split", help="restrict to a subset of a split file")
    p.add_argument("--subset", choices=("train", "val", "all"), default="all",
                   help="which split subset to evaluate (default all)")
    p.add_argument("--report", help="write the report here (.csv or .json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="inference throughput benchmark")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint to benchmark")
    p.add_argument("--images", help="directory of PPM images (default: data_dir)")
    p.add_argument("--warmup", type=int, default=10,
                   help="untimed warmup inferences (default 10)")
    p.add_argument("--repeats", type=int, default=3,
                   help="timed passes over the image list (default 3)")
    p.add_argument("--report", help="write the benchmark report here (.json or .csv)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("infer", help="predict label maps for images")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint to load")
    p.add_argument("--images", help="PPM image file or directory (default: data_dir)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--palette", help="also write recolored PPMs with this palette")
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        args._config = load_config(args.config) if args.config else {}
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"segpipe: {exc}", file=sys.stderr)
        return 3
    except (SegpipeError, OSError) as exc:
        print(f"segpipe: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
