"""Feature extraction from a directory of chest X-ray images.

The dataset layout is one subfolder per class, images inside. Class ids
are assigned by case-insensitive folder-name order, so the mapping is
stable regardless of filesystem order. Grayscale images are replicated
to three channels; unreadable files are skipped and recorded in the
manifest rather than aborting the run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import build_backbone
from .errors import InvalidInputError
from .fmx import write_fmx, write_labels, write_manifest
from .spec import ExtractionSpec

log = logging.getLogger("cxrextract")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class ExtractionResult:
    features_path: Path
    labels_path: Path
    manifest_path: Path
    n_rows: int
    feature_dim: int
    class_names: list
    skipped: list


def scan_dataset(data_dir, refine_pneumonia: bool = False):
    """Map class-named subfolders to (class_names, [(image_id, path, class_id)]).

    With refine_pneumonia, a folder whose name contains "pneumonia" is
    split into classes named "bacterial" and "viral" by filename
    ("bacteria"/"virus" substring); files matching neither are skipped.
    The plain names keep the split usable by downstream task selection.
    """
    root = Path(data_dir)
    if not root.is_dir():
        raise InvalidInputError(f"not a directory: {root}")
    folders = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name.lower())
    if not folders:
        raise InvalidInputError(f"no class subfolders under {root}")

    class_names = []
    entries = []  # (image_id, path, class_name)
    skipped = []
    for folder in folders:
        refine = refine_pneumonia and "pneumonia" in folder.name.lower()
        if refine:
            names = ["bacterial", "viral"]
        else:
            names = [folder.name]
        for name in names:
            if name in class_names:
                raise InvalidInputError(f"duplicate class name {name!r}")
            class_names.append(name)
        for path in sorted(folder.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            image_id = path.relative_to(root).as_posix()
            if refine:
                stem = path.name.lower()
                if "bacteria" in stem:
                    entries.append((image_id, path, names[0]))
                elif "virus" in stem:
                    entries.append((image_id, path, names[1]))
                else:
                    skipped.append(image_id)
            else:
                entries.append((image_id, path, names[0]))
    if not entries:
        raise InvalidInputError(f"no images found under {root}")
    class_id = {name: i for i, name in enumerate(class_names)}
    return class_names, [(iid, p, class_id[c]) for iid, p, c in entries], skipped


def load_image(path, size: int) -> np.ndarray:
    """Decode to an RGB uint8 array of shape (size, size, 3); single-channel
    inputs come out with the gray value replicated across channels."""
    with Image.open(path) as im:
        im = im.convert("RGB").resize((size, size), Image.BILINEAR)
        return np.asarray(im, dtype=np.uint8)


def extract_features(
    data_dir,
    spec: ExtractionSpec,
    features_out,
    labels_out,
    manifest_out,
    pretrained: bool = True,
    refine_pneumonia: bool = False,
    batch_size: int = 16,
    dataset_name: str | None = None,
) -> ExtractionResult:
    """Run every image through the backbone and write the three artifacts.

    Output row order follows the manifest's image_ids exactly. Images
    that fail to decode are skipped, logged, and listed under "skipped"
    in the manifest.
    """
    class_names, entries, skipped = scan_dataset(data_dir, refine_pneumonia)
    backbone = build_backbone(spec, pretrained=pretrained)

    images = []
    labels = []
    image_ids = []
    for image_id, path, cid in entries:
        try:
            images.append(load_image(path, spec.input_size))
        except (OSError, ValueError):
            log.warning("skipping unreadable image %s", image_id)
            skipped.append(image_id)
            continue
        labels.append(cid)
        image_ids.append(image_id)
    if not image_ids:
        raise InvalidInputError(f"no readable images under {data_dir}")
    stack = np.stack(images)
    y = np.asarray(labels, dtype=np.int64)

    if spec.fine_tune is not None:
        backbone.fine_tune(stack, y, spec.fine_tune, n_classes=len(class_names))

    rows = [
        backbone(stack[start : start + batch_size])
        for start in range(0, len(stack), batch_size)
    ]
    values = np.concatenate(rows, axis=0)

    features_out = Path(features_out)
    labels_out = Path(labels_out)
    manifest_out = Path(manifest_out)
    write_fmx(values, features_out)
    write_labels(y, labels_out)
    manifest = {
        "dataset_name": dataset_name or Path(data_dir).name,
        "class_names": {str(i): name for i, name in enumerate(class_names)},
        "backbone": spec.backbone,
        "layer": spec.layer,
        "image_ids": image_ids,
        "input_size": spec.input_size,
        "normalization": spec.normalization,
        "pretrained": pretrained,
        "fine_tuned": spec.fine_tune is not None,
        "feature_dim": backbone.feature_dim,
        "skipped": sorted(skipped),
    }
    write_manifest(manifest, manifest_out)
    return ExtractionResult(
        features_path=features_out,
        labels_path=labels_out,
        manifest_path=manifest_out,
        n_rows=len(image_ids),
        feature_dim=backbone.feature_dim,
        class_names=class_names,
        skipped=sorted(skipped),
    )
