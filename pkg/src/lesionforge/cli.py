"""Command-line surface: extract, synth, eval, montage, preprocess."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .config import ConfigError, load_config
from .imgcore import Image, PixelDomain, read_image, read_mask, write_image
from .lesion_bank import LesionType, extract_patches, load_bank, save_bank
from .preprocess import (
    DEFAULT_CT_WINDOW,
    DEFAULT_FOV_THRESHOLD,
    WindowSpec,
    preprocess_fundus,
    resize_canonical,
    window_ct,
)
from .synth import read_dataset_manifest, synthesize_dataset

_MASK_FLAGS = [(f"--mask-{t.value.lower()}", t) for t in LesionType]


def _cmd_extract(args: argparse.Namespace) -> int:
    image = read_image(args.image)
    annotations = {}
    for flag, ltype in _MASK_FLAGS:
        path = getattr(args, flag[2:].replace("-", "_"))
        if path:
            annotations[ltype] = read_mask(path)
    if not annotations:
        print("error: at least one --mask-* flag is required", file=sys.stderr)
        return 2
    source_id = args.source_id or Path(args.image).stem
    bank = extract_patches(image, annotations, source_id=source_id, connectivity=args.connectivity)
    save_bank(bank, args.out)
    counts = ", ".join(f"{t.value}:{c}" for t, c in sorted(bank.type_counts().items(), key=lambda kv: kv[0].value))
    print(f"extracted {bank.n_l} lesion regions ({counts}) -> {args.out}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    config, config_text = load_config(args.config)
    bank = load_bank(args.bank)
    records = synthesize_dataset(
        args.normals, bank, config, args.out, threads=args.threads, config_text=config_text
    )
    n_anom = sum(1 for r in records if r["label"] == 1)
    print(f"synthesized {n_anom} anomalous + {len(records) - n_anom} normal samples -> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    a = metrics.read_scores_csv(args.scores)
    b = metrics.read_scores_csv(args.scores_b) if args.scores_b else None
    report = metrics.eval_report(a, b)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if args.roc_csv:
        points = metrics.roc_curve(a)
        with open(args.roc_csv, "w") as fh:
            fh.write("fpr,tpr\n")
            for fpr, tpr in points:
                fh.write(f"{fpr!r},{tpr!r}\n")
    return 0


def _to_rgb(img: Image) -> np.ndarray:
    px = img.pixels
    if img.depth == 16:
        px = (px.astype(np.float64) / 65535.0 * 255.0 + 0.5).astype(np.uint8)
    if px.ndim == 2:
        px = np.stack([px] * 3, axis=-1)
    return px.copy()


def _outline(tile: np.ndarray, x: int, y: int, w: int, h: int) -> None:
    color = np.array([255, 0, 0], dtype=np.uint8)
    x1, y1 = min(x + w, tile.shape[1]) - 1, min(y + h, tile.shape[0]) - 1
    tile[y, x : x1 + 1] = color
    tile[y1, x : x1 + 1] = color
    tile[y : y1 + 1, x] = color
    tile[y : y1 + 1, x1] = color


def _cmd_montage(args: argparse.Namespace) -> int:
    dataset = Path(args.dataset)
    records = read_dataset_manifest(dataset)
    anomalous = [r for r in records if r["label"] == 1][: args.k]
    if not anomalous:
        print("error: dataset has no anomalous samples", file=sys.stderr)
        return 2
    normal_by_source = {r["source"]: r for r in records if r["label"] == 0}
    rows = []
    for record in anomalous:
        synth_img = _to_rgb(read_image(dataset / record["path"]))
        normal_rec = normal_by_source.get(record["source"])
        if normal_rec is None:
            print(f"error: no normal pass-through for source {record['source']}", file=sys.stderr)
            return 2
        normal_img = _to_rgb(read_image(dataset / normal_rec["path"]))
        for paste in record["paste_log"]:
            _outline(synth_img, paste["x"], paste["y"], paste["width"], paste["height"])
        rows.append(np.concatenate([normal_img, synth_img], axis=1))
    canvas = np.concatenate(rows, axis=0)
    write_image(Image(canvas), args.out)
    print(f"montage with {len(anomalous)} pairs -> {args.out}")
    return 0


def _cmd_preprocess(args: argparse.Namespace) -> int:
    src = Path(args.input)
    paths = sorted(src.glob("*.png")) if src.is_dir() else [src]
    if not paths:
        print(f"error: no .png inputs under {src}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in paths:
        if args.mode == "ct":
            img = read_image(path, domain=PixelDomain.HU_OFFSET16)
            spec = WindowSpec(level=args.window_level, width=args.window_width)
            out = resize_canonical(window_ct(img, spec), side=args.size)
        else:
            img = read_image(path)
            out, _ = preprocess_fundus(
                img,
                side=args.size,
                fov_crop=args.fov_crop == "on",
                threshold=args.fov_threshold,
            )
        write_image(out, out_dir / path.name)
    print(f"preprocessed {len(paths)} image(s) -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionforge",
        description="Synthesize anomalous medical images from one annotated sample.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="build a lesion bank from an annotated image")
    p.add_argument("--image", required=True, help="annotated anomalous image (PNG)")
    for flag, ltype in _MASK_FLAGS:
        p.add_argument(flag, help=f"binary annotation mask for {ltype.value} lesions")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--source-id", default=None, help="provenance id (default: image stem)")
    p.add_argument("--out", required=True, help="output bank directory")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("synth", help="synthesize an anomalous dataset from normals")
    p.add_argument("--bank", required=True, help="lesion bank directory")
    p.add_argument("--normals", required=True, help="normals manifest JSON or directory of PNGs")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="ROC/AUC report, optionally comparing two score files")
    p.add_argument("--scores", required=True, help="CSV with columns id,score,label")
    p.add_argument("--scores-b", default=None, help="second CSV for a DeLong comparison")
    p.add_argument("--out", default=None, help="write the JSON report here as well")
    p.add_argument("--roc-csv", default=None, help="write the ROC polyline as CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("montage", help="tile synthetic samples beside their source normals")
    p.add_argument("--dataset", required=True, help="dataset directory from `synth`")
    p.add_argument("--k", type=int, default=4, help="number of pairs to show")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=_cmd_montage)

    p = sub.add_parser("preprocess", help="CT windowing or fundus FOV crop + canonical resize")
    p.add_argument("--input", required=True, help="PNG file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("fundus", "ct"), default="fundus")
    p.add_argument("--window-level", type=float, default=DEFAULT_CT_WINDOW.level)
    p.add_argument("--window-width", type=float, default=DEFAULT_CT_WINDOW.width)
    p.add_argument("--fov-crop", choices=("on", "off"), default="on")
    p.add_argument("--fov-threshold", type=float, default=DEFAULT_FOV_THRESHOLD)
    p.add_argument("--size", type=int, default=256)
    p.set_defaults(func=_cmd_preprocess)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
