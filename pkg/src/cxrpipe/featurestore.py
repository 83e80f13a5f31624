"""Feature-matrix data model and I/O: FMX files, balancing, splits, scaling.

All randomized operations take an explicit integer seed and use numpy's
PCG64 (``np.random.default_rng``) consumed in a documented order, so the
same inputs and seed reproduce the same output on every platform. File
writes go through a temp file and ``os.replace`` so readers never see a
partial file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError

FMX_MAGIC = b"FMX1"
# magic, u32 n_rows, u32 n_cols, u8 dtype code (0 = f32 LE), 7 reserved zero bytes
_FMX_HEADER = struct.Struct("<4sIIB7x")

#: Fraction of the balanced set carved out first as the final hold-out.
TEST2_FRACTION = 0.10
#: Train / validation / test-1 fractions of what remains after the carve-out.
HOLDOUT_FRACTIONS = (0.60, 0.20, 0.20)

MANIFEST_KEYS = ("dataset_name", "class_names", "backbone", "layer", "image_ids")


@dataclass
class FeatureMatrix:
    """Dense (n_rows, n_cols) float32 matrix, one row per sample.

    ``feature_origin`` optionally records where the columns came from
    (e.g. a backbone/layer tag); it travels through column slicing.
    """

    values: np.ndarray
    feature_origin: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise InvalidInputError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("feature matrix contains non-finite values")
        self.values = np.ascontiguousarray(arr)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass
class LabelVector:
    """Per-row class ids plus the id -> name table they refer to."""

    labels: np.ndarray
    class_names: dict[int, str]

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 1:
            raise InvalidInputError("labels must be a 1-D sequence")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            raise InvalidInputError("labels must be integers")
        arr = arr.astype(np.int64, copy=False)
        if arr.size and arr.min() < 0:
            raise InvalidInputError("class ids must be non-negative")
        missing = set(np.unique(arr).tolist()) - set(self.class_names)
        if missing:
            raise InvalidInputError(f"labels contain ids missing from class_names: {sorted(missing)}")
        self.labels = arr

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


@dataclass
class SplitPlan:
    """Disjoint row-index sets for the four evaluation strata."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test1_idx: np.ndarray
    test2_idx: np.ndarray
    seed: int

    def __post_init__(self):
        for name in ("train_idx", "val_idx", "test1_idx", "test2_idx"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    def strata(self) -> dict[str, np.ndarray]:
        return {
            "train": self.train_idx,
            "val": self.val_idx,
            "test1": self.test1_idx,
            "test2": self.test2_idx,
        }

    def validate(self, n_rows: int | None = None) -> None:
        seen: set[int] = set()
        for name, idx in self.strata().items():
            part = set(idx.tolist())
            if len(part) != len(idx):
                raise InvalidInputError(f"{name} contains duplicate indices")
            if part & seen:
                raise InvalidInputError(f"{name} overlaps another stratum")
            seen |= part
            if n_rows is not None and len(idx) and idx.max() >= n_rows:
                raise InvalidInputError(f"{name} contains an index >= {n_rows}")
            if len(idx) and idx.min() < 0:
                raise InvalidInputError(f"{name} contains a negative index")

    def to_json(self) -> str:
        payload = {"schema_version": 1, "seed": int(self.seed)}
        payload.update({k: v.tolist() for k, v in self.strata().items()})
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        try:
            payload = json.loads(text)
            plan = cls(
                train_idx=payload["train"],
                val_idx=payload["val"],
                test1_idx=payload["test1"],
                test2_idx=payload["test2"],
                seed=int(payload["seed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed split plan: {exc}") from exc
        plan.validate()
        return plan


@dataclass
class StandardizationParams:
    """Per-feature location/scale fitted on training rows only.

    Uses the population (1/n) standard deviation. Features whose training
    spread is negligible are marked degenerate and transform to 0.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise InvalidInputError("mean/std must be 1-D and the same length")
        if np.any(self.std < 0):
            raise InvalidInputError("standard deviations must be >= 0")

    def degenerate_mask(self) -> np.ndarray:
        return self.std <= 1e-12 * np.maximum(1.0, np.abs(self.mean))


def _check_paired(matrix: FeatureMatrix, labels: LabelVector) -> None:
    if matrix.n_rows != len(labels):
        raise InvalidInputError(
            f"matrix has {matrix.n_rows} rows but labels has {len(labels)} entries"
        )


# ---------------------------------------------------------------------------
# Balancing and splitting
# ---------------------------------------------------------------------------

def balance_downsample(labels: LabelVector, seed: int) -> np.ndarray:
    """Downsample every class to the size of the smallest one.

    For each class id in ascending order, a uniform subset of its row
    indices is drawn as the first m entries of a seeded permutation
    (one ``default_rng(seed)`` consumed across classes in that order).
    The returned indices are sorted ascending.
    """
    counts = labels.class_counts()
    if len(counts) < 2:
        raise InvalidInputError("balancing needs at least 2 classes present")
    empty = [cid for cid in labels.class_names if cid not in counts]
    if empty:
        raise InvalidInputError(f"declared classes have no samples: {empty}")
    m = min(counts.values())
    rng = np.random.default_rng(seed)
    kept: list[np.ndarray] = []
    for cid in sorted(counts):
        members = np.flatnonzero(labels.labels == cid)
        pick = rng.permutation(len(members))[:m]
        kept.append(members[pick])
    return np.sort(np.concatenate(kept))


def _largest_remainder(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Apportion n items to strata by quota floors plus largest remainders.

    Ties in the fractional remainder are broken in favor of the earlier
    stratum, so the result is deterministic.
    """
    quotas = [n * f for f in fractions]
    base = [int(np.floor(q)) for q in quotas]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split_holdout(indices: np.ndarray, labels: LabelVector, seed: int) -> SplitPlan:
    """Stratified hold-out split of a balanced index set.

    Per class, 10% of the rows are carved out for test2 first; the rest
    go 60/20/20 to train/val/test1. Counts are rounded per class with the
    largest-remainder rule. One ``default_rng(seed)`` shuffles each
    class's members, consumed in ascending class-id order.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= len(labels)):
        raise InvalidInputError("split indices out of range of the label vector")
    sub = labels.labels[indices]
    class_ids = np.unique(sub)
    if class_ids.size < 2:
        raise InvalidInputError("splitting needs at least 2 classes present")
    rng = np.random.default_rng(seed)
    buckets: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test1": [], "test2": []}
    for cid in class_ids:
        members = indices[sub == cid]
        if len(members) < 10:
            raise InvalidInputError(
                f"class {cid} has {len(members)} rows; at least 10 are needed "
                "to populate all four strata"
            )
        shuffled = members[rng.permutation(len(members))]
        n_test2, n_rest = _largest_remainder(len(members), (TEST2_FRACTION, 1 - TEST2_FRACTION))
        n_train, n_val, n_test1 = _largest_remainder(n_rest, HOLDOUT_FRACTIONS)
        cursor = 0
        for name, count in (
            ("test2", n_test2),
            ("train", n_train),
            ("val", n_val),
            ("test1", n_test1),
        ):
            buckets[name].append(shuffled[cursor : cursor + count])
            cursor += count
    plan = SplitPlan(
        train_idx=np.sort(np.concatenate(buckets["train"])),
        val_idx=np.sort(np.concatenate(buckets["val"])),
        test1_idx=np.sort(np.concatenate(buckets["test1"])),
        test2_idx=np.sort(np.concatenate(buckets["test2"])),
        seed=seed,
    )
    plan.validate(n_rows=len(labels))
    return plan


# ---------------------------------------------------------------------------
# FMX binary container
# ---------------------------------------------------------------------------

def _atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_fmx(matrix: FeatureMatrix, path: str | Path) -> None:
    """Serialize a matrix to the FMX container (atomic write)."""
    header = _FMX_HEADER.pack(FMX_MAGIC, matrix.n_rows, matrix.n_cols, 0)
    payload = matrix.values.astype("<f4", copy=False).tobytes(order="C")
    _atomic_write_bytes(path, header + payload)


def read_fmx(path: str | Path) -> FeatureMatrix:
    """Load and validate an FMX file; raises FormatError on any defect."""
    data = Path(path).read_bytes()
    if len(data) < _FMX_HEADER.size:
        raise FormatError("truncated", f"{path}: file shorter than the 20-byte header")
    magic, n_rows, n_cols, dtype_code = _FMX_HEADER.unpack_from(data)
    if magic != FMX_MAGIC:
        raise FormatError("magic", f"{path}: bad magic {magic!r}, expected {FMX_MAGIC!r}")
    if dtype_code != 0:
        raise FormatError("dtype", f"{path}: unsupported dtype code {dtype_code}")
    expected = _FMX_HEADER.size + 4 * n_rows * n_cols
    if len(data) < expected:
        raise FormatError(
            "truncated", f"{path}: payload holds {len(data) - _FMX_HEADER.size} bytes, "
            f"expected {expected - _FMX_HEADER.size}"
        )
    if len(data) > expected:
        raise FormatError("trailing", f"{path}: {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype="<f4", offset=_FMX_HEADER.size).reshape(n_rows, n_cols)
    if not np.all(np.isfinite(values)):
        raise FormatError("non-finite", f"{path}: payload contains NaN or Inf")
    return FeatureMatrix(values=values.copy())


def write_labels(labels: np.ndarray | LabelVector, path: str | Path) -> None:
    """Write one integer class id per line, row-aligned with the matrix."""
    arr = labels.labels if isinstance(labels, LabelVector) else np.asarray(labels)
    text = "".join(f"{int(v)}\n" for v in arr)
    _atomic_write_bytes(path, text.encode("utf-8"))


def read_labels(path: str | Path, class_names: dict[int, str] | None = None) -> LabelVector:
    """Read a labels file; class names default to 'class_<id>' per id seen."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        ids = [int(line) for line in raw.split()]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: labels file must hold one integer per line") from exc
    arr = np.asarray(ids, dtype=np.int64)
    if class_names is None:
        class_names = {int(i): f"class_{int(i)}" for i in np.unique(arr)}
    return LabelVector(labels=arr, class_names=class_names)


def write_manifest(manifest: dict, path: str | Path) -> None:
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise InvalidInputError(f"manifest missing keys: {missing}")
    _atomic_write_bytes(path, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))


def read_manifest(path: str | Path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: manifest is not valid JSON: {exc}") from exc
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise InvalidInputError(f"{path}: manifest missing keys: {missing}")
    manifest["class_names"] = {int(k): str(v) for k, v in manifest["class_names"].items()}
    return manifest


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def fit_standardizer(matrix: FeatureMatrix, train_idx: np.ndarray) -> StandardizationParams:
    """Fit per-feature mean and population stddev on the training rows."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise InvalidInputError("cannot fit a standardizer on an empty training set")
    if train_idx.min() < 0 or train_idx.max() >= matrix.n_rows:
        raise InvalidInputError("train_idx out of range")
    block = matrix.values[train_idx].astype(np.float64)
    mean = block.mean(axis=0)
    std = np.sqrt(((block - mean) ** 2).mean(axis=0))
    return StandardizationParams(mean=mean, std=std)


def apply_standardizer(params: StandardizationParams, matrix: FeatureMatrix) -> FeatureMatrix:
    """Map x to (x - mean) / std per feature; degenerate features map to 0."""
    if len(params.mean) != matrix.n_cols:
        raise InvalidInputError(
            f"standardizer fitted on {len(params.mean)} features, matrix has {matrix.n_cols}"
        )
    degenerate = params.degenerate_mask()
    safe_std = np.where(degenerate, 1.0, params.std)
    z = (matrix.values.astype(np.float64) - params.mean) / safe_std
    z[:, degenerate] = 0.0
    return FeatureMatrix(values=z.astype(np.float32), feature_origin=matrix.feature_origin)
