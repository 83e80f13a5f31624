"""Synthetic feature matrices with a controllable planted signal.

Rows are unit-variance Gaussian noise; the informative columns get a
mean offset of shift * class_id, so shift is expressed in noise
standard deviations. shift=0 leaves the classes indistinguishable (a
classifier should sit near chance) and shift around 5 makes the
informative columns dominate any reasonable relevance ranking.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .fmx import write_fmx, write_labels, write_manifest

DEFAULT_CLASS_NAMES = ("normal", "bacterial", "viral")


def synth_features(
    n_per_class: int,
    d: int,
    informative,
    shift: float,
    seed: int,
    class_names=DEFAULT_CLASS_NAMES,
):
    """Return (values float32 (n_per_class * k, d), labels int64, class_names).

    Row order is class-blocked and fully determined by the seed.
    """
    class_names = list(class_names)
    if n_per_class < 1:
        raise InvalidInputError("n_per_class must be at least 1")
    if d < 1:
        raise InvalidInputError("d must be at least 1")
    if len(class_names) < 2 or len(set(class_names)) != len(class_names):
        raise InvalidInputError("need at least two distinct class names")
    informative = [int(i) for i in informative]
    if len(set(informative)) != len(informative):
        raise InvalidInputError("informative indices must be unique")
    for i in informative:
        if not 0 <= i < d:
            raise InvalidInputError(f"informative index {i} outside [0, {d})")
    if not np.isfinite(shift):
        raise InvalidInputError("shift must be finite")

    rng = np.random.default_rng(seed)
    n = n_per_class * len(class_names)
    values = rng.standard_normal((n, d))
    labels = np.repeat(np.arange(len(class_names), dtype=np.int64), n_per_class)
    if informative:
        values[:, informative] += shift * labels[:, None]
    return values.astype(np.float32), labels, class_names


@dataclass
class SynthResult:
    features_path: Path
    labels_path: Path
    manifest_path: Path
    n_rows: int
    feature_dim: int


def write_synth(
    features_out,
    labels_out,
    manifest_out,
    n_per_class: int,
    d: int,
    informative,
    shift: float,
    seed: int,
    class_names=DEFAULT_CLASS_NAMES,
    dataset_name: str = "synthetic",
) -> SynthResult:
    """Generate a synthetic dataset and write the three artifacts to the
    given paths."""
    values, labels, class_names = synth_features(
        n_per_class, d, informative, shift, seed, class_names
    )
    features_out = Path(features_out)
    labels_out = Path(labels_out)
    manifest_out = Path(manifest_out)
    write_fmx(values, features_out)
    write_labels(labels, labels_out)
    write_manifest(
        {
            "dataset_name": dataset_name,
            "class_names": {str(i): name for i, name in enumerate(class_names)},
            "backbone": "synthetic",
            "layer": "none",
            "image_ids": [f"synth_{i:05d}" for i in range(len(labels))],
            "feature_dim": d,
            "informative": sorted(int(i) for i in informative),
            "shift": float(shift),
            "seed": int(seed),
        },
        manifest_out,
    )
    return SynthResult(
        features_path=features_out,
        labels_path=labels_out,
        manifest_path=manifest_out,
        n_rows=len(labels),
        feature_dim=d,
    )


def write_synth_dataset(
    out_dir,
    n_per_class: int,
    d: int,
    informative,
    shift: float,
    seed: int,
    class_names=DEFAULT_CLASS_NAMES,
    dataset_name: str = "synthetic",
) -> SynthResult:
    """Convenience wrapper: feats.fmx, labels.txt, manifest.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return write_synth(
        out / "feats.fmx",
        out / "labels.txt",
        out / "manifest.json",
        n_per_class,
        d,
        informative,
        shift,
        seed,
        class_names,
        dataset_name,
    )
