"""Soft-margin binary SVM with an RBF kernel.

Training uses sequential minimal optimization with Platt's second-choice
heuristic, a full error cache, and deterministic ascending-index scan
order (no randomized working-set selection), so a given input always
produces the same model. Labels are handled internally as {-1, +1};
``label_map`` translates back to caller class ids.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, FormatError, InvalidInputError
from .featurestore import StandardizationParams, _atomic_write_bytes

#: Full Gram matrix is precomputed up to this many rows; beyond it kernel
#: rows are computed on demand and memoized (desk scale keeps n <= 4500).
KERNEL_CACHE_LIMIT = 4096

SVM_MAGIC = b"SVM1"
_SVM_HEADER = struct.Struct("<4sIIB3x")  # magic, n_features, n_support, flags
_SVM_PARAMS = struct.Struct("<dddii")  # C, gamma, bias, class id for -1, for +1
_FLAG_STANDARDIZER = 1


@dataclass
class SvmHyperparams:
    C: float
    gamma: float

    def __post_init__(self):
        for name in ("C", "gamma"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be finite and > 0, got {v}")
            setattr(self, name, v)


@dataclass
class CvSpec:
    """Stratified k-fold specification; assignment is seeded round-robin."""

    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidInputError(f"folds must be >= 2, got {self.folds}")


@dataclass
class SvmModel:
    """Trained classifier: support vectors, dual coefficients alpha_i*y_i,
    bias, the hyperparameters used, an optional input standardizer, and
    the map from internal {-1, +1} labels back to class ids."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    hyperparams: SvmHyperparams
    standardizer: StandardizationParams | None = None
    label_map: dict[int, int] = field(default_factory=lambda: {-1: -1, +1: +1})

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=np.float64)
        self.dual_coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        if self.support_vectors.ndim != 2 or len(self.dual_coefs) != len(self.support_vectors):
            raise InvalidInputError("support vectors and dual coefficients must align")
        if set(self.label_map) != {-1, +1}:
            raise InvalidInputError("label_map must have exactly the keys -1 and +1")

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - z||^2) for a pair of equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape or x.ndim != 1:
        raise InvalidInputError(f"kernel arguments must be equal-length vectors, got {x.shape} and {z.shape}")
    diff = x - z
    return float(np.exp(-gamma * np.dot(diff, diff)))


def _rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of a and the rows of b."""
    sq_a = (a * a).sum(axis=1)[:, None]
    sq_b = (b * b).sum(axis=1)[None, :]
    sq = np.maximum(sq_a + sq_b - 2.0 * (a @ b.T), 0.0)
    return np.exp(-gamma * sq)


class _KernelCache:
    """Row access to the training Gram matrix, precomputed when small."""

    def __init__(self, x: np.ndarray, gamma: float):
        self.x = x
        self.gamma = gamma
        n = len(x)
        self.full = _rbf_gram(x, x, gamma) if n <= KERNEL_CACHE_LIMIT else None
        self._rows: dict[int, np.ndarray] = {}

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        if i not in self._rows:
            self._rows[i] = _rbf_gram(self.x[i : i + 1], self.x, self.gamma)[0]
        return self._rows[i]


def _apply_standardizer(params: StandardizationParams, x: np.ndarray) -> np.ndarray:
    """Float64 twin of featurestore.apply_standardizer for raw arrays."""
    degenerate = params.degenerate_mask()
    safe = np.where(degenerate, 1.0, params.std)
    z = (np.asarray(x, dtype=np.float64) - params.mean) / safe
    z[:, degenerate] = 0.0
    return z


def _validate_training_input(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise InvalidInputError("X must be 2-D and y 1-D with matching lengths")
    if len(x) < 2:
        raise InvalidInputError("training needs at least 2 samples")
    present = set(np.unique(y).tolist())
    if present != {-1.0, +1.0}:
        raise InvalidInputError(f"y must contain both -1 and +1 (and nothing else), got {sorted(present)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("training data contains non-finite values")
    return x, y


def kkt_residual(x: np.ndarray, y: np.ndarray, alpha: np.ndarray, bias: float, params: SvmHyperparams) -> float:
    """Largest violation of the margin conditions over all training rows.

    For alpha = 0 the margin y*f(x) must be >= 1, for alpha = C it must be
    <= 1, and free points must sit on the margin; the residual is the max
    shortfall, 0 when every condition holds exactly.
    """
    gram = _rbf_gram(np.asarray(x, np.float64), np.asarray(x, np.float64), params.gamma)
    f = gram @ (alpha * y) + bias
    margin = y * f
    res_zero = np.maximum(0.0, 1.0 - margin[alpha <= 0])
    res_c = np.maximum(0.0, margin[alpha >= params.C] - 1.0)
    free = (alpha > 0) & (alpha < params.C)
    res_free = np.abs(margin[free] - 1.0)
    pieces = [r.max() for r in (res_zero, res_c, res_free) if r.size]
    return float(max(pieces)) if pieces else 0.0


def _bias_from_state(y: np.ndarray, alpha: np.ndarray, errors: np.ndarray, bias: float, C: float) -> float:
    """Final bias: mean of y_i - sum_j alpha_j y_j k(x_j, x_i) over free
    support vectors; with none free, the midpoint of the feasible interval
    the bound points leave for b."""
    # errors[i] = f(x_i) - y_i under the current bias, so the per-point
    # exact-margin bias is g_i = bias - errors[i].
    g = bias - errors
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        return float(g[free].mean())
    lower_side = ((alpha <= 0) & (y > 0)) | ((alpha >= C) & (y < 0))
    upper_side = ((alpha <= 0) & (y < 0)) | ((alpha >= C) & (y > 0))
    lo = g[lower_side].max() if np.any(lower_side) else -np.inf
    hi = g[upper_side].min() if np.any(upper_side) else np.inf
    if not (np.isfinite(lo) or np.isfinite(hi)):
        return float(bias)
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


class _SmoState:
    def __init__(self, x: np.ndarray, y: np.ndarray, params: SvmHyperparams, tol: float):
        self.x = x
        self.y = y
        self.C = params.C
        self.tol = tol
        self.kernel = _KernelCache(x, params.gamma)
        self.alpha = np.zeros(len(x))
        self.bias = 0.0
        # f(x_i) - y_i with alpha = 0, b = 0
        self.errors = -y.copy()

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1_old, a2_old = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            lo = max(0.0, a2_old + a1_old - self.C)
            hi = min(self.C, a2_old + a1_old)
        else:
            lo = max(0.0, a2_old - a1_old)
            hi = min(self.C, self.C + a2_old - a1_old)
        if lo == hi:
            return False
        k11 = self.kernel.row(i1)[i1]
        k12 = self.kernel.row(i1)[i2]
        k22 = self.kernel.row(i2)[i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # flat or concave direction: compare the objective at both ends
            # (error cache is f(x) - y with f including +bias, hence e - bias)
            f1 = y1 * (e1 - self.bias) - a1_old * k11 - s * a2_old * k12
            f2 = y2 * (e2 - self.bias) - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - lo)
            h1 = a1_old + s * (a2_old - hi)
            obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12
            obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12
            if obj_lo < obj_hi - 1e-12:
                a2 = lo
            elif obj_lo > obj_hi + 1e-12:
                a2 = hi
            else:
                return False
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)
        # snap to the box so bound/free tests stay exact
        if a1 < 1e-10:
            a2 += s * a1
            a1 = 0.0
        elif a1 > self.C - 1e-10 * self.C:
            a2 += s * (a1 - self.C)
            a1 = self.C
        a2 = min(max(a2, 0.0), self.C)
        if a2 < 1e-10:
            a2 = 0.0
        elif a2 > self.C - 1e-10 * self.C:
            a2 = self.C

        d1, d2 = a1 - a1_old, a2 - a2_old
        k1, k2 = self.kernel.row(i1), self.kernel.row(i2)
        b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1 < self.C:
            new_bias = b1
        elif 0.0 < a2 < self.C:
            new_bias = b2
        else:
            new_bias = (b1 + b2) / 2.0
        self.errors += y1 * d1 * k1 + y2 * d2 * k2 + (new_bias - self.bias)
        self.bias = new_bias
        self.alpha[i1] = a1
        self.alpha[i2] = a2
        self.errors[i1] = self._recompute_error(i1)
        self.errors[i2] = self._recompute_error(i2)
        return True

    def _recompute_error(self, i: int) -> float:
        return float(self.kernel.row(i) @ (self.alpha * self.y) + self.bias - self.y[i])

    def examine(self, i2: int) -> bool:
        y2, a2, e2 = self.y[i2], self.alpha[i2], self.errors[i2]
        r2 = e2 * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return False
        non_bound = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
        if len(non_bound) > 1:
            gaps = np.abs(self.errors[non_bound] - e2)
            i1 = int(non_bound[int(np.argmax(gaps))])
            if self.take_step(i1, i2):
                return True
        for i1 in non_bound:
            if self.take_step(int(i1), i2):
                return True
        for i1 in range(len(self.alpha)):
            if self.take_step(i1, i2):
                return True
        return False


def smo_train(
    x: np.ndarray,
    y: np.ndarray,
    params: SvmHyperparams,
    tol: float = 1e-3,
    max_passes: int | None = None,
    standardizer: StandardizationParams | None = None,
    label_map: dict[int, int] | None = None,
) -> SvmModel:
    """Train by SMO; raises ConvergenceError (carrying the best iterate and
    its KKT residual) if the sweep budget runs out before the working set
    settles. ``standardizer``, when given, is applied to x first and
    stored on the model so prediction accepts raw inputs.
    """
    x, y = _validate_training_input(x, y)
    if standardizer is not None:
        x = _apply_standardizer(standardizer, x)
    n = len(x)
    if max_passes is None:
        max_passes = 10 * n
    state = _SmoState(x, y, params, tol)

    passes = 0
    examine_all = True
    num_changed = 1
    converged = False
    while num_changed > 0 or examine_all:
        if passes >= max_passes:
            break
        passes += 1
        num_changed = 0
        if examine_all:
            for i in range(n):
                num_changed += state.examine(i)
        else:
            for i in np.flatnonzero((state.alpha > 0) & (state.alpha < params.C)):
                num_changed += state.examine(int(i))
        if examine_all:
            examine_all = False
            if num_changed == 0:
                converged = True
                break
        elif num_changed == 0:
            examine_all = True

    bias = _bias_from_state(y, state.alpha, state.errors, state.bias, params.C)
    sv = np.flatnonzero(state.alpha > 0)
    model = SvmModel(
        support_vectors=x[sv],
        dual_coefs=state.alpha[sv] * y[sv],
        bias=bias,
        hyperparams=params,
        standardizer=standardizer,
        label_map=dict(label_map) if label_map else {-1: -1, +1: +1},
    )
    if not converged:
        residual = kkt_residual(x, y, state.alpha, bias, params)
        raise ConvergenceError(
            f"SMO did not satisfy KKT within {max_passes} sweeps (residual {residual:.3g})",
            model=model,
            residual=residual,
        )
    return model


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """f(x) = sum_i alpha_i y_i k(s_i, x) + b for each row of x."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise InvalidInputError(
            f"input must be 2-D with {model.n_features} features, got shape {x.shape}"
        )
    if model.standardizer is not None:
        x = _apply_standardizer(model.standardizer, x)
    gram = _rbf_gram(model.support_vectors, x, model.hyperparams.gamma)
    return model.dual_coefs @ gram + model.bias


def predict(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Class ids via label_map; the boundary itself (f = 0) predicts +1."""
    f = decision_values(model, x)
    internal = np.where(f >= 0, 1, -1)
    return np.where(internal > 0, model.label_map[+1], model.label_map[-1]).astype(np.int64)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def stratified_fold_assignment(y: np.ndarray, spec: CvSpec) -> np.ndarray:
    """Fold id per row: members of each class (classes ascending) are
    shuffled by one default_rng(seed) and dealt round-robin to folds."""
    y = np.asarray(y)
    folds = np.empty(len(y), dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if len(members) < spec.folds:
            raise InvalidInputError(
                f"class {cls} has {len(members)} rows, fewer than {spec.folds} folds"
            )
        shuffled = members[rng.permutation(len(members))]
        folds[shuffled] = np.arange(len(shuffled)) % spec.folds
    return folds


def cv_loss(x: np.ndarray, y: np.ndarray, params: SvmHyperparams, spec: CvSpec) -> float:
    """Mean 0-1 error over stratified folds; each fold refits the
    standardizer on its own training part before training."""
    x, y = _validate_training_input(x, y)
    folds = stratified_fold_assignment(y, spec)
    fold_errors = []
    for f in range(spec.folds):
        held = folds == f
        train_x, train_y = x[~held], y[~held]
        mean = train_x.mean(axis=0)
        std = np.sqrt(((train_x - mean) ** 2).mean(axis=0))
        scaler = StandardizationParams(mean=mean, std=std)
        model = smo_train(_apply_standardizer(scaler, train_x), train_y, params)
        pred = predict(model, _apply_standardizer(scaler, x[held]))
        fold_errors.append(float(np.mean(pred != y[held])))
    return float(np.mean(fold_errors))


# ---------------------------------------------------------------------------
# SVM1 model container
# ---------------------------------------------------------------------------

def save_model(model: SvmModel, path: str | Path) -> None:
    flags = _FLAG_STANDARDIZER if model.standardizer is not None else 0
    blocks = [
        _SVM_HEADER.pack(SVM_MAGIC, model.n_features, len(model.dual_coefs), flags),
        _SVM_PARAMS.pack(
            model.hyperparams.C,
            model.hyperparams.gamma,
            model.bias,
            model.label_map[-1],
            model.label_map[+1],
        ),
    ]
    if model.standardizer is not None:
        blocks.append(model.standardizer.mean.astype("<f8").tobytes())
        blocks.append(model.standardizer.std.astype("<f8").tobytes())
    blocks.append(model.dual_coefs.astype("<f8").tobytes())
    blocks.append(model.support_vectors.astype("<f4").tobytes(order="C"))
    _atomic_write_bytes(path, b"".join(blocks))


def load_model(path: str | Path) -> SvmModel:
    data = Path(path).read_bytes()
    if len(data) < _SVM_HEADER.size:
        raise FormatError("truncated", f"{path}: file shorter than the fixed header")
    magic, n_features, n_support, flags = _SVM_HEADER.unpack_from(data)
    if magic != SVM_MAGIC:
        raise FormatError("magic", f"{path}: bad magic {magic!r}, expected {SVM_MAGIC!r}")
    if len(data) < _SVM_HEADER.size + _SVM_PARAMS.size:
        raise FormatError("truncated", f"{path}: file shorter than the parameter block")
    c, gamma, bias, neg_id, pos_id = _SVM_PARAMS.unpack_from(data, _SVM_HEADER.size)
    offset = _SVM_HEADER.size + _SVM_PARAMS.size
    expected = offset + 8 * n_support + 4 * n_support * n_features
    if flags & _FLAG_STANDARDIZER:
        expected += 16 * n_features
    if len(data) < expected:
        raise FormatError("truncated", f"{path}: expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise FormatError("trailing", f"{path}: {len(data) - expected} trailing bytes")
    standardizer = None
    if flags & _FLAG_STANDARDIZER:
        mean = np.frombuffer(data, "<f8", count=n_features, offset=offset)
        offset += 8 * n_features
        std = np.frombuffer(data, "<f8", count=n_features, offset=offset)
        offset += 8 * n_features
        standardizer = StandardizationParams(mean=mean.copy(), std=std.copy())
    dual = np.frombuffer(data, "<f8", count=n_support, offset=offset)
    offset += 8 * n_support
    sv = np.frombuffer(data, "<f4", count=n_support * n_features, offset=offset)
    pieces = [dual, sv, np.array([c, gamma, bias])]
    if standardizer is not None:
        pieces += [standardizer.mean, standardizer.std]
    if not all(np.all(np.isfinite(p)) for p in pieces):
        raise FormatError("non-finite", f"{path}: model contains NaN or Inf")
    return SvmModel(
        support_vectors=sv.reshape(n_support, n_features).astype(np.float64),
        dual_coefs=dual.copy(),
        bias=bias,
        hyperparams=SvmHyperparams(C=c, gamma=gamma),
        standardizer=standardizer,
        label_map={-1: neg_id, +1: pos_id},
    )
