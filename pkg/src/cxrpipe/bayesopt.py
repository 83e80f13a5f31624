"""Gaussian-process Bayesian optimization of (C, gamma) over the
10-fold cross-validation loss.

The search runs in log10 coordinates inside a fixed box. Four scrambled
Sobol points seed the history; each later proposal maximizes expected
improvement over a fresh pool of 1000 seeded uniform candidates. A
budget of B means exactly B loss evaluations. The reported optimum is
not the raw argmin of the observed losses: it is the visited point with
the lowest upper confidence bound mean + 2*sigma under the final GP,
which discounts lucky noisy evaluations.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import qmc

from .errors import InvalidInputError, NumericError
from .svm import CvSpec, SvmHyperparams, cv_loss

TUNE_INIT_POINTS = 4
TUNE_CANDIDATE_POOL = 1000
TUNE_CV_FOLDS = 10
UCB_KAPPA = 2.0

GP_NOISE_VARIANCE = 1e-6
_GP_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
_LS_GRID = np.logspace(-1.5, 0.5, 5)  # multiples of the per-dimension data span
_SV_GRID = np.logspace(-1.0, 1.0, 5)  # multiples of the observed loss variance


@dataclass
class SearchSpace:
    """Box bounds for (log10 C, log10 gamma)."""

    log10_c: tuple[float, float] = (-3.0, 3.0)
    log10_gamma: tuple[float, float] = (-5.0, 1.0)

    def __post_init__(self):
        for name in ("log10_c", "log10_gamma"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidInputError(f"{name} bounds must be finite with lower < upper")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.log10_c[0], self.log10_gamma[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.log10_c[1], self.log10_gamma[1]])

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))


@dataclass
class Observation:
    """One evaluated point in log10 coordinates and its CV loss."""

    point: np.ndarray
    loss: float

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64)
        if self.point.shape != (2,):
            raise InvalidInputError("observation point must be (log10_C, log10_gamma)")
        if not (math.isfinite(self.loss) and 0.0 <= self.loss <= 1.0):
            raise InvalidInputError(f"loss must be finite in [0, 1], got {self.loss}")


@dataclass
class GpPosterior:
    """Fitted GP: squared-exponential kernel with per-dimension length
    scales, zero-mean residuals around the observed-loss average, and a
    cached Cholesky factor of the noisy kernel matrix."""

    train_points: np.ndarray
    prior_mean: float
    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float
    jitter: float
    chol_lower: np.ndarray
    weights: np.ndarray  # (K + (noise + jitter) I)^{-1} (y - prior_mean)


@dataclass
class TuneResult:
    best_point: tuple[float, float]  # (C, gamma) in natural units
    history: list[Observation]
    criterion_value: float
    best_index: int


def _se_kernel(a: np.ndarray, b: np.ndarray, ls: np.ndarray, sv: float) -> np.ndarray:
    d = (a[:, None, :] - b[None, :, :]) / ls
    return sv * np.exp(-0.5 * (d * d).sum(axis=2))


def _chol_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float] | None:
    for jitter in _GP_JITTERS:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(len(k))), jitter
        except np.linalg.LinAlgError:
            continue
    return None


def gp_fit(observations: list[Observation]) -> GpPosterior:
    """Fit the GP, picking kernel hyperparameters by log marginal
    likelihood over a fixed 5x5x5 grid: each dimension's length scale
    ranges over data-span multiples, signal variance over multiples of
    the loss variance; noise variance stays at the 1e-6 floor. Ties keep
    the first grid point, so the fit is deterministic.
    """
    if len(observations) < 2:
        raise InvalidInputError("gp_fit needs at least 2 observations")
    x = np.stack([o.point for o in observations])
    y = np.array([o.loss for o in observations])
    prior_mean = float(y.mean())
    yc = y - prior_mean

    spans = x.max(axis=0) - x.min(axis=0)
    spans = np.where(spans > 0, spans, 1.0)
    sv_base = max(float(yc.var()), 1e-8)

    best = None
    for ls0, ls1, sv_mult in itertools.product(_LS_GRID, _LS_GRID, _SV_GRID):
        ls = np.array([spans[0] * ls0, spans[1] * ls1])
        sv = sv_base * sv_mult
        k = _se_kernel(x, x, ls, sv) + GP_NOISE_VARIANCE * np.eye(len(x))
        factored = _chol_with_jitter(k)
        if factored is None:
            continue
        lower, jitter = factored
        w = cho_solve((lower, True), yc)
        lml = -0.5 * float(yc @ w) - float(np.log(np.diag(lower)).sum()) - 0.5 * len(x) * math.log(2 * math.pi)
        if best is None or lml > best[0]:
            best = (lml, ls, sv, jitter, lower, w)
    if best is None:
        raise NumericError("GP kernel matrix could not be factorized at any grid point (max jitter 1e-4)")
    _, ls, sv, jitter, lower, w = best
    return GpPosterior(
        train_points=x,
        prior_mean=prior_mean,
        length_scales=ls,
        signal_variance=sv,
        noise_variance=GP_NOISE_VARIANCE,
        jitter=jitter,
        chol_lower=lower,
        weights=w,
    )


def gp_posterior(gp: GpPosterior, point: np.ndarray) -> tuple[float, float]:
    """Posterior mean and latent variance (noise not added) at one point;
    variance is clamped at 0 against round-off."""
    mean, var = gp_posterior_batch(gp, np.asarray(point, dtype=np.float64)[None, :])
    return float(mean[0]), float(var[0])


def gp_posterior_batch(gp: GpPosterior, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k_star = _se_kernel(gp.train_points, points, gp.length_scales, gp.signal_variance)
    mean = gp.prior_mean + k_star.T @ gp.weights
    v = solve_triangular(gp.chol_lower, k_star, lower=True)
    var = gp.signal_variance - (v * v).sum(axis=0)
    return mean, np.maximum(var, 0.0)


def expected_improvement(gp: GpPosterior, point: np.ndarray, best_loss: float) -> float:
    mean, var = gp_posterior(gp, point)
    return float(_ei_from_moments(np.array([mean]), np.array([var]), best_loss)[0])


def _ei_from_moments(mean: np.ndarray, var: np.ndarray, best_loss: float) -> np.ndarray:
    """EI for minimization: (best - mu)*Phi(z) + sigma*phi(z) with
    z = (best - mu)/sigma; degenerate sigma collapses to max(0, best - mu)."""
    sigma = np.sqrt(var)
    improvement = best_loss - mean
    out = np.maximum(improvement, 0.0)
    live = sigma >= 1e-12
    if np.any(live):
        z = improvement[live] / sigma[live]
        out[live] = improvement[live] * stats.norm.cdf(z) + sigma[live] * stats.norm.pdf(z)
    return np.maximum(out, 0.0)


def tune(
    x: np.ndarray,
    y: np.ndarray,
    space: SearchSpace | None = None,
    budget: int = 30,
    seed: int = 0,
    cv_spec: CvSpec | None = None,
) -> TuneResult:
    """Run the optimization loop and return the UCB-selected best point.

    One default_rng(seed) drives everything in order: the scrambled Sobol
    initializer, then each iteration's candidate pool. If a loss
    evaluation raises, the exception propagates with the partial history
    attached as its ``tune_history`` attribute.
    """
    if budget < 5:
        raise InvalidInputError(f"budget must be >= 5, got {budget}")
    space = space or SearchSpace()
    cv_spec = cv_spec or CvSpec(folds=TUNE_CV_FOLDS, seed=seed)
    rng = np.random.default_rng(seed)
    history: list[Observation] = []

    def evaluate(point: np.ndarray) -> None:
        params = SvmHyperparams(C=10.0 ** point[0], gamma=10.0 ** point[1])
        try:
            loss = cv_loss(x, y, params, cv_spec)
        except Exception as exc:
            exc.tune_history = list(history)
            raise
        history.append(Observation(point=point.copy(), loss=loss))

    sobol = qmc.Sobol(d=2, scramble=True, seed=rng)
    init = qmc.scale(sobol.random(TUNE_INIT_POINTS), space.lower, space.upper)
    for point in init:
        evaluate(point)

    for _ in range(budget - TUNE_INIT_POINTS):
        gp = gp_fit(history)
        best_loss = min(o.loss for o in history)
        candidates = rng.uniform(space.lower, space.upper, size=(TUNE_CANDIDATE_POOL, 2))
        mean, var = gp_posterior_batch(gp, candidates)
        ei = _ei_from_moments(mean, var, best_loss)
        evaluate(candidates[int(np.argmax(ei))])

    gp = gp_fit(history)
    points = np.stack([o.point for o in history])
    mean, var = gp_posterior_batch(gp, points)
    ucb = mean + UCB_KAPPA * np.sqrt(var)
    best_idx = int(np.argmin(ucb))
    best = history[best_idx].point
    return TuneResult(
        best_point=(10.0 ** best[0], 10.0 ** best[1]),
        history=history,
        criterion_value=float(ucb[best_idx]),
        best_index=best_idx,
    )


def tune_result_to_json(result: TuneResult, space: SearchSpace, budget: int, seed: int) -> str:
    payload = {
        "schema_version": 1,
        "bounds": {"log10_C": list(space.log10_c), "log10_gamma": list(space.log10_gamma)},
        "budget": budget,
        "seed": seed,
        "history": [
            {"log10_C": float(o.point[0]), "log10_gamma": float(o.point[1]), "cv_loss": o.loss}
            for o in result.history
        ],
        "best": {
            "C": result.best_point[0],
            "gamma": result.best_point[1],
            "criterion_value": result.criterion_value,
            "history_index": result.best_index,
        },
    }
    return json.dumps(payload, indent=2) + "\n"
