"""Writers for the FMX interchange format and its sidecar files.

FMX layout (little-endian): 16-byte header of magic ``FMX1``, u32 row
count, u32 column count, u8 dtype tag (0 = float32), 7 zero bytes, then
the row-major float32 payload. The classification side validates these
files strictly (magic, dtype, exact payload length, finiteness), so the
writer refuses anything that would fail validation there.

Labels are one integer class id per line, row-aligned with the matrix.
The manifest is JSON and must carry dataset_name, class_names, backbone,
layer, and image_ids; extra keys are allowed and preserved.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

FMX_MAGIC = b"FMX1"
_FMX_HEADER = struct.Struct("<4sIIB7x")
MANIFEST_KEYS = ("dataset_name", "class_names", "backbone", "layer", "image_ids")


def _atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_fmx(values: np.ndarray, path: str | Path) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise InvalidInputError(f"feature matrix must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("feature matrix contains non-finite values")
    header = _FMX_HEADER.pack(FMX_MAGIC, values.shape[0], values.shape[1], 0)
    payload = values.astype("<f4", copy=False).tobytes(order="C")
    _atomic_write_bytes(path, header + payload)


def write_labels(labels: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1 or (len(arr) and arr.min() < 0):
        raise InvalidInputError("labels must be a 1-D array of non-negative class ids")
    _atomic_write_bytes(path, "".join(f"{int(v)}\n" for v in arr).encode("utf-8"))


def write_manifest(manifest: dict, path: str | Path) -> None:
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise InvalidInputError(f"manifest missing keys: {missing}")
    _atomic_write_bytes(path, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
