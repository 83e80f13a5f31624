"""Command line interface: cxrextract {extract, synth}.

Exit codes: 0 on success, 2 on invalid input, unreadable dataset, or a
missing framework extra.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ExtractError
from .extract import extract_features
from .spec import (
    BACKBONES,
    FINE_TUNE_BATCH_SIZES,
    FINE_TUNE_LEARNING_RATES,
    ExtractionSpec,
    FineTuneSpec,
)
from .synth import DEFAULT_CLASS_NAMES, write_synth


def _parse_indices(text: str):
    text = text.strip()
    if not text:
        return []
    return [int(part) for part in text.split(",")]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxrextract",
        description="Turn chest X-ray images (or a synthetic generator) into "
        "feature matrices for the cxrpipe classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="extract backbone activations from an image folder")
    ex.add_argument("--data-dir", required=True, help="dataset root with one subfolder per class")
    ex.add_argument("--backbone", required=True, choices=sorted(BACKBONES))
    ex.add_argument("--layer", default=None, help="named layer to read (default: backbone's standard tap)")
    ex.add_argument("--input-size", type=int, default=None, help="square input side (default: backbone's native size)")
    ex.add_argument("--out", required=True, help="output feature matrix (.fmx)")
    ex.add_argument("--labels", required=True, help="output labels file")
    ex.add_argument("--manifest", required=True, help="output manifest (.json)")
    ex.add_argument("--no-pretrained", action="store_true", help="use seeded random weights instead of pretrained ones")
    ex.add_argument("--refine-pneumonia", action="store_true",
                    help="split a pneumonia folder into bacterial/viral by filename")
    ex.add_argument("--batch-size", type=int, default=16, help="images per forward pass")
    ex.add_argument("--dataset-name", default=None, help="name recorded in the manifest")
    ex.add_argument("--fine-tune", action="store_true", help="run a short supervised fine-tune before extraction")
    ex.add_argument("--learning-rate", type=float, default=FINE_TUNE_LEARNING_RATES[0],
                    choices=FINE_TUNE_LEARNING_RATES)
    ex.add_argument("--fine-tune-batch", type=int, default=FINE_TUNE_BATCH_SIZES[0],
                    choices=FINE_TUNE_BATCH_SIZES)
    ex.add_argument("--epochs", type=int, default=3)
    ex.add_argument("--augment-resize", action="store_true")
    ex.add_argument("--augment-rotate", action="store_true")
    ex.add_argument("--augment-reflect", action="store_true")

    sy = sub.add_parser("synth", help="write a synthetic dataset with a planted signal")
    sy.add_argument("--n", required=True, type=int, help="rows per class")
    sy.add_argument("--d", required=True, type=int, help="feature count")
    sy.add_argument("--informative", default="", help='comma-separated column indices, e.g. "3,17,40"')
    sy.add_argument("--shift", required=True, type=float, help="class mean offset in noise standard deviations")
    sy.add_argument("--seed", required=True, type=int)
    sy.add_argument("--classes", default=",".join(DEFAULT_CLASS_NAMES),
                    help="comma-separated class names")
    sy.add_argument("--out", required=True, help="output feature matrix (.fmx)")
    sy.add_argument("--labels", required=True, help="output labels file")
    sy.add_argument("--manifest", required=True, help="output manifest (.json)")
    return parser


def _run_extract(args) -> int:
    fine_tune = None
    if args.fine_tune:
        fine_tune = FineTuneSpec(
            learning_rate=args.learning_rate,
            batch_size=args.fine_tune_batch,
            epochs=args.epochs,
        )
    spec = ExtractionSpec(
        backbone=args.backbone,
        layer=args.layer,
        input_size=args.input_size,
        augment_resize=args.augment_resize,
        augment_rotate=args.augment_rotate,
        augment_reflect=args.augment_reflect,
        fine_tune=fine_tune,
    )
    result = extract_features(
        args.data_dir,
        spec,
        features_out=args.out,
        labels_out=args.labels,
        manifest_out=args.manifest,
        pretrained=not args.no_pretrained,
        refine_pneumonia=args.refine_pneumonia,
        batch_size=args.batch_size,
        dataset_name=args.dataset_name,
    )
    print(f"extracted {result.n_rows} rows x {result.feature_dim} features")
    print(f"classes: {', '.join(result.class_names)}")
    if result.skipped:
        print(f"skipped {len(result.skipped)} files (listed in the manifest)")
    print(f"artifacts -> {result.features_path} {result.labels_path} {result.manifest_path}")
    return 0


def _run_synth(args) -> int:
    result = write_synth(
        args.out,
        args.labels,
        args.manifest,
        n_per_class=args.n,
        d=args.d,
        informative=_parse_indices(args.informative),
        shift=args.shift,
        seed=args.seed,
        class_names=[c.strip() for c in args.classes.split(",") if c.strip()],
    )
    print(f"wrote {result.n_rows} rows x {result.feature_dim} features")
    print(f"artifacts -> {result.features_path} {result.labels_path} {result.manifest_path}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            return _run_extract(args)
        return _run_synth(args)
    except (ExtractError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
