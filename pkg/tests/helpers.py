"""Independent oracles and data generators shared across the test suite.

The oracles here deliberately avoid the library's own code paths: plain
Python loops for Relief weights, Counter-based tabulation for the
chi-square statistic, a brute-force scan for the knee, an interior-point
QP solve for the SVM dual, and dense linear algebra for GP posteriors.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from cxrpipe.featurestore import FeatureMatrix, LabelVector


# ---------------------------------------------------------------------------
# Relief oracle: naive O(n^2 d) loops
# ---------------------------------------------------------------------------

def naive_relieff(values: np.ndarray, labels: np.ndarray, k: int, n_sample_rounds: int | None, seed: int) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    n, d = x.shape
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    norm = np.zeros_like(x)
    for f in range(d):
        if span[f] > 0:
            norm[:, f] = (x[:, f] - lo[f]) / span[f]

    classes = sorted(set(y.tolist()))
    prior = {c: float(np.sum(y == c)) / n for c in classes}
    if n_sample_rounds is None or n_sample_rounds == n:
        rounds = list(range(n))
    else:
        rounds = np.random.default_rng(seed).permutation(n)[:n_sample_rounds].tolist()

    weights = np.zeros(d)
    for r in rounds:
        dist = [sum(abs(norm[i, f] - norm[r, f]) for f in range(d)) for i in range(n)]
        by_distance = sorted(range(n), key=lambda i: (dist[i], i))
        for c in classes:
            picked = [i for i in by_distance if i != r and y[i] == c][:k]
            for f in range(d):
                mean_diff = sum(abs(norm[i, f] - norm[r, f]) for i in picked) / k
                if c == y[r]:
                    weights[f] -= mean_diff
                else:
                    weights[f] += prior[c] / (1.0 - prior[y[r]]) * mean_diff
    return weights / len(rounds)


# ---------------------------------------------------------------------------
# Chi-square oracle: Counter tabulation of an induced discretization
# ---------------------------------------------------------------------------

def chi_square_of_table(bins: np.ndarray, classes: np.ndarray) -> float:
    n = len(bins)
    cell = Counter(zip(bins.tolist(), classes.tolist()))
    bin_totals = Counter(bins.tolist())
    class_totals = Counter(classes.tolist())
    if len(bin_totals) < 2:
        return 0.0
    stat = 0.0
    for b in bin_totals:
        for c in class_totals:
            expected = bin_totals[b] * class_totals[c] / n
            observed = cell.get((b, c), 0)
            stat += (observed - expected) ** 2 / expected
    return stat


# ---------------------------------------------------------------------------
# Knee oracle: brute-force max distance to the chord
# ---------------------------------------------------------------------------

def brute_force_knee(scores: np.ndarray) -> int:
    s = np.asarray(scores, dtype=np.float64)
    d = len(s)
    if s[0] == s[-1]:
        return 1
    best_i, best_dist = 0, -1.0
    for i in range(d):
        xi = i / (d - 1)
        yi = (s[i] - s[-1]) / (s[0] - s[-1])
        dist = abs(xi + yi - 1.0) / np.sqrt(2.0)
        # ties within rounding noise keep the earlier point
        if dist > best_dist + 1e-12:
            best_i, best_dist = i, dist
    return best_i + 1


# ---------------------------------------------------------------------------
# SVM dual oracle: interior-point QP
# ---------------------------------------------------------------------------

def qp_dual_solve(x: np.ndarray, y: np.ndarray, c: float, gamma: float) -> np.ndarray:
    """Solve the SVM dual with cvxopt and return the alpha vector."""
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-10
    cvxopt.solvers.options["reltol"] = 1e-10
    cvxopt.solvers.options["feastol"] = 1e-10
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    k = rbf_gram_oracle(x, x, gamma)
    q_mat = np.outer(y, y) * k
    p = cvxopt.matrix(q_mat + 1e-10 * np.eye(n))
    q = cvxopt.matrix(-np.ones(n))
    g = cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = cvxopt.matrix(np.concatenate([np.zeros(n), np.full(n, c)]))
    a = cvxopt.matrix(y.reshape(1, n))
    b = cvxopt.matrix(0.0)
    sol = cvxopt.solvers.qp(p, q, g, h, a, b)
    assert sol["status"] == "optimal", f"QP oracle failed: {sol['status']}"
    return np.asarray(sol["x"]).ravel()


def rbf_gram_oracle(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            diff = a[i] - b[j]
            out[i, j] = np.exp(-gamma * float(diff @ diff))
    return out


def dual_objective(x: np.ndarray, y: np.ndarray, alpha: np.ndarray, gamma: float) -> float:
    k = rbf_gram_oracle(x, x, gamma)
    q_mat = np.outer(y, y) * k
    return float(alpha.sum() - 0.5 * alpha @ q_mat @ alpha)


def bias_from_alpha(x: np.ndarray, y: np.ndarray, alpha: np.ndarray, c: float, gamma: float) -> float:
    """The documented bias rule applied to an arbitrary alpha vector:
    mean of y_i - sum_j alpha_j y_j k(x_j, x_i) over free support vectors,
    else the midpoint of the interval the bound points allow."""
    k = rbf_gram_oracle(x, x, gamma)
    g = y - k @ (alpha * y)
    # interior-point alphas approach bounds without reaching them; a generous
    # slack keeps near-bound points out of the free-SV mean (dropping a truly
    # free point is harmless, counting a bound one is not)
    slack = 1e-4 * c
    free = (alpha > slack) & (alpha < c - slack)
    if np.any(free):
        return float(g[free].mean())
    lower = ((alpha <= slack) & (y > 0)) | ((alpha >= c - slack) & (y < 0))
    upper = ((alpha <= slack) & (y < 0)) | ((alpha >= c - slack) & (y > 0))
    lo = g[lower].max() if np.any(lower) else -np.inf
    hi = g[upper].min() if np.any(upper) else np.inf
    if not np.isfinite(lo):
        return float(hi)
    if not np.isfinite(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def decisions_from_alpha(x_train, y_train, alpha, c, gamma, x_eval) -> np.ndarray:
    bias = bias_from_alpha(x_train, y_train, alpha, c, gamma)
    k = rbf_gram_oracle(x_train, x_eval, gamma)
    return (alpha * y_train) @ k + bias


# ---------------------------------------------------------------------------
# GP posterior oracle: dense solves, no Cholesky reuse
# ---------------------------------------------------------------------------

def gp_dense_posterior(gp, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recompute mean/variance from the stored hyperparameters with
    plain dense linear algebra."""
    xt = gp.train_points
    ls = gp.length_scales
    sv = gp.signal_variance

    def kernel(a, b):
        out = np.zeros((len(a), len(b)))
        for i in range(len(a)):
            for j in range(len(b)):
                z = (a[i] - b[j]) / ls
                out[i, j] = sv * np.exp(-0.5 * float(z @ z))
        return out

    k_train = kernel(xt, xt) + (gp.noise_variance + gp.jitter) * np.eye(len(xt))
    k_inv = np.linalg.inv(k_train)
    y = gp.prior_mean + k_train @ gp.weights  # reconstruct observed losses
    k_star = kernel(xt, np.atleast_2d(points))
    mean = gp.prior_mean + k_star.T @ k_inv @ (y - gp.prior_mean)
    var = sv - np.einsum("ij,ik,kj->j", k_star, k_inv, k_star)
    return mean, np.maximum(var, 0.0)


# ---------------------------------------------------------------------------
# Data generators
# ---------------------------------------------------------------------------

def planted_features(
    n_per_class: dict[int, int],
    d: int,
    informative: np.ndarray,
    shift: float,
    seed: int,
    class_names: dict[int, str] | None = None,
) -> tuple[FeatureMatrix, LabelVector]:
    """Standard-normal noise everywhere, plus class_id * shift added to the
    informative columns, so higher class ids sit further along them."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for cid in sorted(n_per_class):
        block = rng.normal(size=(n_per_class[cid], d))
        block[:, informative] += cid * shift
        rows.append(block)
        labels.extend([cid] * n_per_class[cid])
    names = class_names or {cid: f"class_{cid}" for cid in n_per_class}
    return (
        FeatureMatrix(np.vstack(rows).astype(np.float32)),
        LabelVector(np.asarray(labels, dtype=np.int64), names),
    )


def two_blobs(n_per_class: int, d: int, separation: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two spherical Gaussian blobs with centers `separation` apart along
    every axis; labels in {-1, +1}."""
    rng = np.random.default_rng(seed)
    neg = rng.normal(size=(n_per_class, d))
    pos = rng.normal(size=(n_per_class, d)) + separation
    x = np.vstack([neg, pos])
    y = np.concatenate([-np.ones(n_per_class), np.ones(n_per_class)])
    return x, y


def random_svm_instance(seed: int, max_n: int = 20, max_d: int = 5):
    """Small random training set guaranteed to contain both labels."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, max_n + 1))
    d = int(rng.integers(1, max_d + 1))
    x = rng.normal(size=(n, d))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = -1.0, 1.0
    c = float(rng.choice([0.5, 1.0, 5.0, 10.0]))
    gamma = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
    return x, y, c, gamma
