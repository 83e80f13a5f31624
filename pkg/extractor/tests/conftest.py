"""Shared fixtures: a small mixed-quality image dataset and one extraction
run per expensive backbone, reused across test modules."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from cxrextract import ExtractionSpec, extract_features

# fixed pixel pattern reused in both classes to prove feature rows depend
# on pixels only
_DUP_PATTERN = (np.arange(48 * 48 * 3, dtype=np.uint8).reshape(48, 48, 3) * 7) % 251


def _save_rgb(path, seed, size=(50, 60)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 255, size=(size[0], size[1], 3), dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


@pytest.fixture(scope="session")
def image_root(tmp_path_factory):
    """Two-class folder tree:

    normal/: RGB image, grayscale image, nested image, duplicate pattern
    pneumonia/: RGB image, duplicate pattern, one corrupt file, one non-image
    """
    root = tmp_path_factory.mktemp("images")
    normal = root / "normal"
    pneumonia = root / "pneumonia"
    (normal / "deep").mkdir(parents=True)
    pneumonia.mkdir()

    _save_rgb(normal / "a.png", seed=10)
    _save_rgb(normal / "deep" / "nested.png", seed=11, size=(30, 30))
    Image.fromarray(_DUP_PATTERN, mode="RGB").save(normal / "dup.png")
    gray = np.random.default_rng(12).integers(0, 255, size=(64, 64), dtype=np.uint8)
    Image.fromarray(gray, mode="L").save(normal / "gray.png")

    _save_rgb(pneumonia / "c.png", seed=13, size=(70, 45))
    Image.fromarray(_DUP_PATTERN, mode="RGB").save(pneumonia / "dup.png")
    (pneumonia / "broken.png").write_bytes(b"this is not a png")
    (pneumonia / "notes.txt").write_text("ignored\n")
    return root


# readable ids in extraction order, then the labels they should get
_EXPECTED_IDS = [
    "normal/a.png",
    "normal/deep/nested.png",
    "normal/dup.png",
    "normal/gray.png",
    "pneumonia/c.png",
    "pneumonia/dup.png",
]
_EXPECTED_LABELS = [0, 0, 0, 0, 1, 1]


@pytest.fixture(scope="session")
def resnet_run(image_root, tmp_path_factory):
    """One resnet18 extraction over image_root with seeded random weights."""
    out = tmp_path_factory.mktemp("resnet_out")
    spec = ExtractionSpec(backbone="resnet18")
    result = extract_features(
        image_root,
        spec,
        features_out=out / "feats.fmx",
        labels_out=out / "labels.txt",
        manifest_out=out / "manifest.json",
        pretrained=False,
    )
    return {
        "out": out,
        "result": result,
        "root": image_root,
        "expected_ids": _EXPECTED_IDS,
        "expected_labels": _EXPECTED_LABELS,
    }


@pytest.fixture(scope="session")
def inception_run(image_root, tmp_path_factory):
    """One inception_resnet_v2 extraction (expensive; shared by every test
    that needs the keras backbone)."""
    out = tmp_path_factory.mktemp("inception_out")
    spec = ExtractionSpec(backbone="inception_resnet_v2")
    result = extract_features(
        image_root,
        spec,
        features_out=out / "feats.fmx",
        labels_out=out / "labels.txt",
        manifest_out=out / "manifest.json",
        pretrained=False,
    )
    return {"out": out, "result": result, "root": image_root}
