"""Config-driven experiment orchestration and two-stage cascade prediction.

An experiment runs balance -> split -> (optional score + select, training
rows only) -> standardize -> tune -> train -> evaluate on all four
splits, writing every intermediate artifact into the output directory.
Everything downstream of the config seed is deterministic, so two runs
of the same config produce byte-identical artifacts; wall-clock timings
are therefore kept out of the reports and written to run_meta.json only.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures, metrics, selection
from .bayesopt import SearchSpace, tune, tune_result_to_json
from .errors import InvalidInputError, StageError
from .featurestore import (
    FeatureMatrix,
    LabelVector,
    SplitPlan,
    _atomic_write_bytes,
    balance_downsample,
    fit_standardizer,
    read_fmx,
    read_labels,
    read_manifest,
    split_holdout,
)
from .svm import CvSpec, SvmHyperparams, SvmModel, predict, save_model, smo_train

TASKS = ("normal_vs_pneumonia", "viral_vs_bacterial")
PIPELINES = ("svm_direct", "reduce_relieff_svm", "reduce_chi2_svm")
SPLIT_ORDER = ("training", "validation", "test1", "test2")


@dataclass
class ExperimentConfig:
    task: str
    pipeline: str
    features: Path
    labels: Path
    manifest: Path
    out_dir: Path
    seed: int = 0
    tune_budget: int = 30
    cv_folds: int = 10
    k_neighbors: int = 10
    n_bins: int = 10
    n_sample_rounds: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidInputError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.pipeline not in PIPELINES:
            raise InvalidInputError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        for name in ("features", "labels", "manifest", "out_dir"):
            setattr(self, name, Path(getattr(self, name)))

    @classmethod
    def from_json_file(cls, path: str | Path, out_dir: str | Path | None = None) -> "ExperimentConfig":
        """Load a config; relative input paths resolve against the file's
        directory. ``out_dir`` overrides the config's own value."""
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"{path}: cannot read config: {exc}") from exc
        if payload.get("schema_version") != 1:
            raise InvalidInputError(f"{path}: unsupported schema_version {payload.get('schema_version')!r}")
        base = path.parent
        sel = payload.get("selection", {})
        resolved_out = out_dir if out_dir is not None else payload.get("out_dir")
        if resolved_out is None:
            raise InvalidInputError(f"{path}: out_dir missing (set it in the config or pass --out-dir)")
        try:
            return cls(
                task=payload["task"],
                pipeline=payload["pipeline"],
                features=base / payload["features"],
                labels=base / payload["labels"],
                manifest=base / payload["manifest"],
                out_dir=Path(resolved_out) if out_dir is not None else base / resolved_out,
                seed=int(payload.get("seed", 0)),
                tune_budget=int(payload.get("tune_budget", 30)),
                cv_folds=int(payload.get("cv_folds", 10)),
                k_neighbors=int(sel.get("k_neighbors", 10)),
                n_bins=int(sel.get("n_bins", 10)),
                n_sample_rounds=sel.get("n_sample_rounds"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"{path}: malformed config: {exc}") from exc


@dataclass
class TaskLabels:
    """Binary view of the original taxonomy for one task.

    ``usable`` marks rows that belong to the task; ``signed`` holds the
    internal -1/+1 label per row (0 where unusable); ``label_map`` goes
    back to reported class ids and ``positive_id`` names the class whose
    precision/recall the report quotes.
    """

    usable: np.ndarray
    signed: np.ndarray
    label_map: dict[int, int]
    positive_id: int
    class_names: dict[int, str]


def _find_class(class_names: dict[int, str], prefix: str) -> int | None:
    hits = sorted(cid for cid, name in class_names.items() if name.lower().startswith(prefix))
    return hits[0] if hits else None


def resolve_task(labels: LabelVector, task: str) -> TaskLabels:
    """Map the dataset taxonomy onto a binary task.

    normal_vs_pneumonia keeps every row and merges all non-normal classes
    into a synthetic pneumonia metaclass (id = max existing id + 1);
    viral_vs_bacterial keeps only rows of those two classes, matched by
    name prefix ("vir", "bact"). The lower class id maps to -1.
    """
    names = labels.class_names
    if task == "normal_vs_pneumonia":
        normal = _find_class(names, "normal")
        if normal is None:
            raise InvalidInputError("normal_vs_pneumonia needs a class named 'normal'")
        if not np.any(labels.labels != normal) or not np.any(labels.labels == normal):
            raise InvalidInputError("both normal and non-normal rows are required")
        meta_id = max(names) + 1
        signed = np.where(labels.labels == normal, -1, +1).astype(np.int64)
        return TaskLabels(
            usable=np.ones(len(labels), dtype=bool),
            signed=signed,
            label_map={-1: normal, +1: meta_id},
            positive_id=meta_id,
            class_names={normal: names[normal], meta_id: "pneumonia"},
        )
    viral = _find_class(names, "vir")
    bacterial = _find_class(names, "bact")
    if viral is None or bacterial is None:
        raise InvalidInputError(
            "viral_vs_bacterial needs classes named like 'viral' and 'bacterial', "
            f"got {sorted(names.values())}"
        )
    usable = (labels.labels == viral) | (labels.labels == bacterial)
    if not (np.any(labels.labels[usable] == viral) and np.any(labels.labels[usable] == bacterial)):
        raise InvalidInputError("both viral and bacterial rows are required")
    neg, pos = sorted((viral, bacterial))
    signed = np.zeros(len(labels), dtype=np.int64)
    signed[labels.labels == neg] = -1
    signed[labels.labels == pos] = +1
    return TaskLabels(
        usable=usable,
        signed=signed,
        label_map={-1: neg, +1: pos},
        positive_id=viral,
        class_names={viral: names[viral], bacterial: names[bacterial]},
    )


@dataclass
class ExperimentReport:
    task: str
    pipeline: str
    seed: int
    split_reports: list[metrics.MetricsReport]
    initial_dims: int
    retained_dims: int
    tuned_c: float
    tuned_gamma: float
    label_map: dict[int, int]
    positive_id: int
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def reduction_ratio(self) -> float:
        return 1.0 - self.retained_dims / self.initial_dims


def render_report(report: ExperimentReport, fmt: str = "table") -> str:
    """CSV (metrics rows only, reparseable) or an aligned text table with
    the selection/tuning summary below it. Percentages use 2 decimals."""
    if fmt == "csv":
        return metrics.render_metrics_csv(report.split_reports)
    if fmt != "table":
        raise InvalidInputError(f"unknown report format {fmt!r}")
    lines = [
        f"task: {report.task}",
        f"pipeline: {report.pipeline}",
        f"seed: {report.seed}",
        "",
        metrics.render_metrics_table(report.split_reports).rstrip("\n"),
        "",
        f"initial features: {report.initial_dims}",
        f"retained features: {report.retained_dims}",
        f"reduction: {100.0 * report.reduction_ratio:.2f}%",
        f"tuned C: {report.tuned_c:.6g}",
        f"tuned gamma: {report.tuned_gamma:.6g}",
    ]
    return "\n".join(lines) + "\n"


def _report_summary_json(report: ExperimentReport) -> str:
    payload = {
        "schema_version": 1,
        "task": report.task,
        "pipeline": report.pipeline,
        "seed": report.seed,
        "initial_dims": report.initial_dims,
        "retained_dims": report.retained_dims,
        "reduction_ratio": report.reduction_ratio,
        "tuned": {"C": report.tuned_c, "gamma": report.tuned_gamma},
        "label_map": {str(k): int(v) for k, v in sorted(report.label_map.items())},
        "positive_class_id": report.positive_id,
        "metrics": {
            r.split: {
                "accuracy": r.accuracy,
                "precision": r.precision,
                "recall": r.recall,
                "f1": r.f1,
            }
            for r in report.split_reports
        },
    }
    return json.dumps(payload, indent=2) + "\n"


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(stage, exc) from exc
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - start
        return result


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Execute the full pipeline and write artifacts into config.out_dir.

    Selection, standardization, tuning, and training see training rows
    only; artifacts written before a failing stage stay on disk and the
    failure is wrapped in StageError naming the stage.
    """
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    clock = _StageClock()
    stage_seeds = np.random.default_rng(config.seed).integers(2**63, size=4)

    def load():
        matrix = read_fmx(config.features)
        manifest = read_manifest(config.manifest)
        labels = read_labels(config.labels, class_names=manifest["class_names"])
        if matrix.n_rows != len(labels):
            raise InvalidInputError(
                f"features have {matrix.n_rows} rows but labels has {len(labels)}"
            )
        ids = manifest.get("image_ids")
        if ids and len(ids) != matrix.n_rows:
            raise InvalidInputError(
                f"manifest lists {len(ids)} image_ids but features have {matrix.n_rows} rows"
            )
        return matrix, labels, manifest

    matrix, labels, _ = clock.run("load", load)
    task_labels = clock.run("map_task", resolve_task, labels, config.task)

    balanced = clock.run("balance", balance_downsample, labels, int(stage_seeds[0]))
    plan = clock.run("split", split_holdout, balanced, labels, int(stage_seeds[1]))
    _atomic_write_bytes(out / "split.json", plan.to_json().encode("utf-8"))

    split_rows = {
        name: idx[task_labels.usable[idx]] for name, idx in plan.strata().items()
    }
    train_rows = split_rows["train"]

    def select_features():
        if config.pipeline == "svm_direct":
            return None, None
        train_block = FeatureMatrix(matrix.values[train_rows])
        y01 = ((task_labels.signed[train_rows] + 1) // 2).astype(np.int64)
        train_labels = LabelVector(labels=y01, class_names={0: "neg", 1: "pos"})
        if config.pipeline == "reduce_relieff_svm":
            scores = selection.relieff_scores(
                train_block,
                train_labels,
                k_neighbors=config.k_neighbors,
                n_sample_rounds=config.n_sample_rounds,
                seed=int(stage_seeds[2]),
            )
        else:
            scores = selection.chi_square_scores(train_block, train_labels, n_bins=config.n_bins)
        ranking, result = selection.select_by_elbow(scores)
        selection.write_scores_csv(scores, out / "scores.csv")
        selection.write_selected_indices(result, out / "selected.txt")
        figures.save_score_curve(
            scores.scores[ranking.order], result.cutoff_k, out / "score_curve.png"
        )
        return scores, result

    _, selected = clock.run("select", select_features)
    if selected is None:
        columns = np.arange(matrix.n_cols, dtype=np.int64)
    else:
        columns = selected.selected

    def tune_stage():
        x = matrix.values[train_rows][:, columns].astype(np.float64)
        y = task_labels.signed[train_rows].astype(np.float64)
        result = tune(
            x,
            y,
            space=SearchSpace(),
            budget=config.tune_budget,
            seed=int(stage_seeds[3]),
            cv_spec=CvSpec(folds=config.cv_folds, seed=int(stage_seeds[3])),
        )
        _atomic_write_bytes(
            out / "tune.json",
            tune_result_to_json(result, SearchSpace(), config.tune_budget, config.seed).encode("utf-8"),
        )
        return result

    tuned = clock.run("tune", tune_stage)

    def train_stage():
        x = matrix.values[train_rows][:, columns].astype(np.float64)
        y = task_labels.signed[train_rows].astype(np.float64)
        scaler = fit_standardizer(FeatureMatrix(matrix.values[train_rows][:, columns]), np.arange(len(train_rows)))
        params = SvmHyperparams(C=tuned.best_point[0], gamma=tuned.best_point[1])
        model = smo_train(x, y, params, standardizer=scaler, label_map=task_labels.label_map)
        save_model(model, out / "model.svm1")
        return model

    model = clock.run("train", train_stage)

    def evaluate():
        reports = []
        order = {"training": "train", "validation": "val", "test1": "test1", "test2": "test2"}
        for tag in SPLIT_ORDER:
            rows = split_rows[order[tag]]
            x = matrix.values[rows][:, columns].astype(np.float64)
            y_true = np.where(
                task_labels.signed[rows] > 0,
                task_labels.label_map[+1],
                task_labels.label_map[-1],
            )
            y_pred = predict(model, x)
            cm = metrics.confusion(y_true, y_pred, positive_class=task_labels.positive_id)
            reports.append(metrics.compute_metrics(cm, split=tag))
        return reports

    split_reports = clock.run("evaluate", evaluate)

    report = ExperimentReport(
        task=config.task,
        pipeline=config.pipeline,
        seed=config.seed,
        split_reports=split_reports,
        initial_dims=matrix.n_cols,
        retained_dims=len(columns),
        tuned_c=tuned.best_point[0],
        tuned_gamma=tuned.best_point[1],
        label_map=task_labels.label_map,
        positive_id=task_labels.positive_id,
        timings=clock.timings,
    )

    def write_reports():
        _atomic_write_bytes(out / "report.csv", render_report(report, "csv").encode("utf-8"))
        _atomic_write_bytes(out / "report.txt", render_report(report, "table").encode("utf-8"))
        _atomic_write_bytes(out / "summary.json", _report_summary_json(report).encode("utf-8"))
        figures.save_metrics_bars(split_reports, out / "metrics_bars.png")

    clock.run("report", write_reports)
    # timings vary run to run, so they live outside the deterministic artifacts
    meta = {"stage_seconds": {k: round(v, 6) for k, v in clock.timings.items()}}
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# Two-stage cascade
# ---------------------------------------------------------------------------

@dataclass
class CascadeModel:
    """Stage 1 separates normal from the pneumonia metaclass; stage 2
    separates viral from bacterial. Each stage carries its own column
    selection (into the original feature space) and its model embeds its
    own standardizer, so the stages are fully independent."""

    stage1: SvmModel
    stage2: SvmModel
    stage1_columns: np.ndarray | None = None
    stage2_columns: np.ndarray | None = None

    def __post_init__(self):
        for name in ("stage1_columns", "stage2_columns"):
            cols = getattr(self, name)
            if cols is not None:
                setattr(self, name, np.asarray(cols, dtype=np.int64))

    @property
    def normal_id(self) -> int:
        return self.stage1.label_map[-1]

    @property
    def pneumonia_id(self) -> int:
        return self.stage1.label_map[+1]


def _stage_input(x: np.ndarray, columns: np.ndarray | None, n_features: int, stage: str) -> np.ndarray:
    if columns is None:
        if x.shape[1] != n_features:
            raise InvalidInputError(
                f"{stage} expects {n_features} features, got {x.shape[1]}"
            )
        return x
    if columns.max() >= x.shape[1]:
        raise InvalidInputError(f"{stage} selection indexes beyond the {x.shape[1]} input features")
    return x[:, columns]


def cascade_predict(cascade: CascadeModel, features: np.ndarray) -> np.ndarray:
    """Class id per row: stage 1's normal verdict short-circuits; rows
    called pneumonia go to stage 2 for the viral/bacterial call."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("cascade input must be 2-D")
    x1 = _stage_input(x, cascade.stage1_columns, cascade.stage1.n_features, "stage1")
    stage1_pred = predict(cascade.stage1, x1)
    out = np.full(len(x), cascade.normal_id, dtype=np.int64)
    pneumonia_rows = np.flatnonzero(stage1_pred == cascade.pneumonia_id)
    if len(pneumonia_rows):
        x2 = _stage_input(x[pneumonia_rows], cascade.stage2_columns, cascade.stage2.n_features, "stage2")
        out[pneumonia_rows] = predict(cascade.stage2, x2)
    return out
