"""Command-line interface.

Exit codes: 0 on success, 2 for invalid input or config (including file
format problems and missing files), 3 for numeric or convergence
failures. Argparse's own usage errors also exit 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import figures, metrics, selection
from .bayesopt import SearchSpace, tune, tune_result_to_json
from .errors import InvalidInputError, NumericError, StageError
from .featurestore import (
    FeatureMatrix,
    _atomic_write_bytes,
    balance_downsample,
    fit_standardizer,
    read_fmx,
    read_labels,
    split_holdout,
)
from .runner import CascadeModel, ExperimentConfig, cascade_predict, render_report, run_experiment
from .svm import SvmHyperparams, CvSpec, load_model, predict, save_model, smo_train


def _read_int_lines(path: str | Path) -> np.ndarray:
    try:
        return np.asarray([int(v) for v in Path(path).read_text(encoding="utf-8").split()], dtype=np.int64)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: expected one integer per line") from exc


def _signed_labels(y: np.ndarray) -> tuple[np.ndarray, dict[int, int]]:
    """Map a two-valued label file onto {-1, +1}, smaller value to -1."""
    distinct = np.unique(y)
    if len(distinct) != 2:
        raise InvalidInputError(f"expected exactly 2 distinct labels, got {len(distinct)}")
    lo, hi = int(distinct[0]), int(distinct[1])
    return np.where(y == lo, -1, +1).astype(np.float64), {-1: lo, +1: hi}


def _cmd_balance(args) -> int:
    labels = read_labels(args.labels)
    kept = balance_downsample(labels, seed=args.seed)
    _atomic_write_bytes(args.out, "".join(f"{i}\n" for i in kept.tolist()).encode("utf-8"))
    print(f"kept {len(kept)} of {len(labels)} rows -> {args.out}")
    return 0


def _cmd_split(args) -> int:
    labels = read_labels(args.labels)
    indices = (
        _read_int_lines(args.indices)
        if args.indices
        else np.arange(len(labels), dtype=np.int64)
    )
    plan = split_holdout(indices, labels, seed=args.seed)
    _atomic_write_bytes(args.out, plan.to_json().encode("utf-8"))
    sizes = {k: len(v) for k, v in plan.strata().items()}
    print(f"split sizes {sizes} -> {args.out}")
    return 0


def _cmd_score(args) -> int:
    matrix = read_fmx(args.input)
    labels = read_labels(args.labels)
    if args.method == "relieff":
        scores = selection.relieff_scores(
            matrix, labels, k_neighbors=args.k_neighbors, seed=args.seed
        )
    else:
        scores = selection.chi_square_scores(matrix, labels, n_bins=args.bins)
    selection.write_scores_csv(scores, args.out)
    print(f"scored {matrix.n_cols} features with {args.method} -> {args.out}")
    return 0


def _cmd_select(args) -> int:
    scores, ranking = selection.read_scores_csv(args.scores)
    k = selection.elbow_cutoff(scores[ranking.order])
    result = selection.SelectionResult(cutoff_k=k, selected=ranking.order[:k])
    selection.write_selected_indices(result, args.out)
    print(f"elbow cutoff k={k} of {len(scores)} -> {args.out}")
    return 0


def _cmd_plot_scores(args) -> int:
    scores, ranking = selection.read_scores_csv(args.scores)
    curve = scores[ranking.order]
    lines = ["rank,score"] + [f"{i},{v:.17g}" for i, v in enumerate(curve.tolist(), start=1)]
    _atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("utf-8"))
    png = Path(args.out).with_suffix(".png")
    figures.save_score_curve(curve, None, png)
    print(f"curve data -> {args.out}; figure -> {png}")
    return 0


def _cmd_svm_train(args) -> int:
    matrix = read_fmx(args.input)
    y_raw = _read_int_lines(args.labels)
    if len(y_raw) != matrix.n_rows:
        raise InvalidInputError(f"{matrix.n_rows} rows but {len(y_raw)} labels")
    y, label_map = _signed_labels(y_raw)
    scaler = fit_standardizer(matrix, np.arange(matrix.n_rows))
    params = SvmHyperparams(C=args.c, gamma=args.gamma)
    model = smo_train(
        matrix.values.astype(np.float64), y, params, standardizer=scaler, label_map=label_map
    )
    save_model(model, args.out)
    print(f"trained on {matrix.n_rows} rows, {len(model.dual_coefs)} support vectors -> {args.out}")
    return 0


def _cmd_svm_eval(args) -> int:
    model = load_model(args.model)
    matrix = read_fmx(args.input)
    y_true = _read_int_lines(args.labels)
    if len(y_true) != matrix.n_rows:
        raise InvalidInputError(f"{matrix.n_rows} rows but {len(y_true)} labels")
    y_pred = predict(model, matrix.values.astype(np.float64))
    cm = metrics.confusion(y_true, y_pred, positive_class=model.label_map[+1])
    report = metrics.compute_metrics(cm, split=args.split)
    sys.stdout.write(metrics.render_metrics_table([report]))
    if args.out:
        _atomic_write_bytes(args.out, metrics.render_metrics_csv([report]).encode("utf-8"))
        print(f"report -> {args.out}")
    return 0


def _cmd_svm_tune(args) -> int:
    matrix = read_fmx(args.input)
    y_raw = _read_int_lines(args.labels)
    if len(y_raw) != matrix.n_rows:
        raise InvalidInputError(f"{matrix.n_rows} rows but {len(y_raw)} labels")
    y, _ = _signed_labels(y_raw)
    space = SearchSpace()
    result = tune(
        matrix.values.astype(np.float64),
        y,
        space=space,
        budget=args.budget,
        seed=args.seed,
        cv_spec=CvSpec(folds=args.folds, seed=args.seed),
    )
    _atomic_write_bytes(args.out, tune_result_to_json(result, space, args.budget, args.seed).encode("utf-8"))
    print(
        f"best C={result.best_point[0]:.6g} gamma={result.best_point[1]:.6g} "
        f"(criterion {result.criterion_value:.6g}) -> {args.out}"
    )
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json_file(args.config, out_dir=args.out_dir)
    report = run_experiment(config)
    sys.stdout.write(render_report(report, "table"))
    print(f"artifacts -> {config.out_dir}")
    return 0


def _cmd_cascade_predict(args) -> int:
    cascade = CascadeModel(
        stage1=load_model(args.stage1),
        stage2=load_model(args.stage2),
        stage1_columns=(
            selection.read_selected_indices(args.stage1_selected).selected
            if args.stage1_selected
            else None
        ),
        stage2_columns=(
            selection.read_selected_indices(args.stage2_selected).selected
            if args.stage2_selected
            else None
        ),
    )
    matrix = read_fmx(args.input)
    pred = cascade_predict(cascade, matrix.values.astype(np.float64))
    _atomic_write_bytes(args.out, "".join(f"{int(p)}\n" for p in pred).encode("utf-8"))
    ids, counts = np.unique(pred, return_counts=True)
    summary = ", ".join(f"class {i}: {c}" for i, c in zip(ids.tolist(), counts.tolist()))
    print(f"predicted {len(pred)} rows ({summary}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxrpipe",
        description="Feature selection and Bayesian-tuned RBF-SVM pipeline for CNN-derived features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("balance", help="downsample every class to the smallest class size")
    p.add_argument("--labels", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_balance)

    p = sub.add_parser("split", help="stratified test2 carve-out then train/val/test1")
    p.add_argument("--labels", required=True)
    p.add_argument("--indices", help="optional row subset (e.g. balance output)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("score", help="per-feature relevance scores")
    p.add_argument("--method", choices=("relieff", "chi2"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-neighbors", type=int, default=10)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("select", help="cut the ranked scores at the elbow")
    p.add_argument("--scores", required=True)
    p.add_argument("--method", choices=("elbow",), default="elbow")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("plot-scores", help="ranked-score curve data and figure")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True, help="curve CSV path; a .png lands beside it")
    p.set_defaults(func=_cmd_plot_scores)

    svm = sub.add_parser("svm", help="train, evaluate, or tune the classifier")
    svm_sub = svm.add_subparsers(dest="svm_command", required=True)

    p = svm_sub.add_parser("train")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_svm_train)

    p = svm_sub.add_parser("eval")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", choices=metrics.SPLIT_TAGS, default="validation")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_svm_eval)

    p = svm_sub.add_parser("tune")
    p.add_argument("--input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--budget", type=int, default=30)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_svm_tune)

    p = sub.add_parser("experiment", help="run a full configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override the config's out_dir")
    p.set_defaults(func=_cmd_experiment)

    cascade = sub.add_parser("cascade", help="two-stage normal/viral/bacterial prediction")
    cascade_sub = cascade.add_subparsers(dest="cascade_command", required=True)
    p = cascade_sub.add_parser("predict")
    p.add_argument("--stage1", required=True, help="normal-vs-pneumonia model")
    p.add_argument("--stage2", required=True, help="viral-vs-bacterial model")
    p.add_argument("--stage1-selected", help="stage 1 column selection file")
    p.add_argument("--stage2-selected", help="stage 2 column selection file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cascade_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (InvalidInputError, FileNotFoundError)):
            return 2
        if isinstance(exc.cause, NumericError):
            return 3
        raise
    except (InvalidInputError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
