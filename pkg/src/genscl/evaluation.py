"""Evaluation harness: oddball scoring, Spearman correlation, logistic and
ridge probes with nested cross-validation, PCA projection, and bootstrap CIs.

The probes are deliberately self-contained iterative solvers (accelerated
gradient descent for logistic regression, conjugate gradients for ridge) with
a fixed tolerance, so reported metrics are deterministic and library-free.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .nets import EmbeddingNet
from .quads import OddballTrial, rasterize_quad

__all__ = [
    "OddballResult",
    "ProbeReport",
    "PcaResult",
    "oddball_error_rate",
    "predict_oddball_index",
    "spearman_rho",
    "logistic_probe",
    "ridge_probe",
    "pca_project",
    "bootstrap_ci",
]

_LAMBDA_GRID = tuple(10.0**k for k in range(-3, 4))  # 1e-3 .. 1e3, 7 points
_SOLVER_TOL = 1e-8
_SOLVER_MAX_ITER = 100_000


@dataclass(frozen=True)
class OddballResult:
    """Per-category oddball error rates."""

    error_rates: dict[str, float]
    n_trials: dict[str, int]
    n_ties: int = 0

    def __post_init__(self):
        for name, rate in self.error_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"error rate for {name!r} out of [0,1]: {rate}")


@dataclass(frozen=True)
class ProbeReport:
    """Five-fold cross-validated probe metric with a 95% CI over folds."""

    metric: str
    fold_values: tuple[float, float, float, float, float]
    mean: float
    ci: tuple[float, float]

    def __post_init__(self):
        if len(self.fold_values) != 5:
            raise ValueError("probe reports carry exactly 5 fold values")
        if not self.ci[0] <= self.mean <= self.ci[1]:
            raise ValueError("CI must contain the mean")


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray  # (k, d), orthonormal rows
    coordinates: np.ndarray  # (n, k)
    explained_variance: np.ndarray  # (k,), non-increasing
    truncated: bool = False


def _trial_inputs(net: EmbeddingNet, trial: OddballTrial) -> np.ndarray:
    if net.spec.kind == "conv":
        return np.stack([rasterize_quad(q, net.spec.input_side) for q in trial.items])
    return np.stack([q.as_array().reshape(-1) for q in trial.items])


def predict_oddball_index(embeddings: np.ndarray) -> tuple[int, bool]:
    """Index furthest (Euclidean) from the mean embedding; lowest index on ties."""
    center = embeddings.mean(axis=0)
    dists = np.linalg.norm(embeddings - center, axis=1)
    best = int(np.argmax(dists))  # argmax returns the first maximum
    tie = bool(np.sum(dists == dists[best]) > 1)
    return best, tie


def oddball_error_rate(net: EmbeddingNet, trials: Sequence[OddballTrial]) -> OddballResult:
    """Score trials by distance-from-mean-embedding; error is a miss rate per category."""
    if not trials:
        raise ValueError("trials must be nonempty")
    errors: dict[str, int] = {}
    counts: dict[str, int] = {}
    ties = 0
    for trial in trials:
        emb = net.embed_batch(_trial_inputs(net, trial))
        predicted, tie = predict_oddball_index(emb)
        ties += int(tie)
        name = trial.category.name
        counts[name] = counts.get(name, 0) + 1
        errors[name] = errors.get(name, 0) + int(predicted != trial.oddball_index)
    rates = {name: errors[name] / counts[name] for name in counts}
    return OddballResult(error_rates=rates, n_trials=counts, n_ties=ties)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _rank_correlation(xr: np.ndarray, yr: np.ndarray) -> float:
    xc = xr - xr.mean()
    yc = yr - yr.mean()
    denom = math.sqrt(float(np.sum(xc * xc)) * float(np.sum(yc * yc)))
    if denom == 0.0:
        raise ValueError("Spearman correlation is undefined for constant input")
    return float(np.sum(xc * yc)) / denom


def spearman_rho(xs, ys) -> tuple[float, float]:
    """Spearman rank correlation with average-rank ties.

    The p-value is a two-sided exact permutation probability for n <= 10 and
    the t-distribution approximation with n-2 degrees of freedom otherwise.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 3:
        raise ValueError("need two equal-length 1-D lists with at least 3 entries")
    n = len(xs)
    xr = _average_ranks(xs)
    yr = _average_ranks(ys)
    rho = _rank_correlation(xr, yr)
    if n <= 10:
        count = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            r = _rank_correlation(xr, yr[list(perm)])
            count += int(abs(r) >= abs(rho) - 1e-12)
            total += 1
        p = count / total
    else:
        from scipy.stats import t as t_dist

        if abs(rho) >= 1.0:
            p = 0.0
        else:
            t_stat = rho * math.sqrt((n - 2) / (1 - rho * rho))
            p = 2.0 * float(t_dist.sf(abs(t_stat), df=n - 2))
    return rho, p


def _standardize(train: np.ndarray, test: np.ndarray):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return (train - mean) / std, (test - mean) / std


def _logistic_objective(w, x, y, lam):
    z = x @ w
    # mean log(1 + exp(-y z)) + lam/2 ||w||^2, intercept unregularized
    loss = float(np.mean(np.logaddexp(0.0, -y * z))) + 0.5 * lam * float(np.sum(w[1:] ** 2))
    s = -y / (1.0 + np.exp(y * z))
    grad = x.T @ s / len(y)
    grad[1:] += lam * w[1:]
    return loss, grad


def _fit_logistic(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Nesterov-accelerated gradient descent with adaptive restart."""
    n, d = x.shape
    lip = float(np.linalg.norm(x, 2) ** 2) / (4.0 * n) + lam
    step = 1.0 / lip
    w = np.zeros(d)
    z = w.copy()
    t = 1.0
    _, grad = _logistic_objective(w, x, y, lam)
    for _ in range(_SOLVER_MAX_ITER):
        _, grad_z = _logistic_objective(z, x, y, lam)
        w_next = z - step * grad_z
        if float(np.dot(grad_z, w_next - w)) > 0:  # restart momentum
            t = 1.0
            z = w.copy()
            _, grad_z = _logistic_objective(z, x, y, lam)
            w_next = z - step * grad_z
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        z = w_next + (t - 1.0) / t_next * (w_next - w)
        delta = float(np.max(np.abs(w_next - w)))
        w, t = w_next, t_next
        if delta < _SOLVER_TOL * (1.0 + float(np.max(np.abs(w)))):
            break
    return w


def _fit_ridge(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Conjugate gradients on the regularized normal equations (intercept free)."""
    n, d = x.shape
    reg = np.full(d, lam * n)
    reg[0] = 0.0

    def apply(v):
        return x.T @ (x @ v) + reg * v

    b = x.T @ y
    w = np.zeros(d)
    r = b - apply(w)
    p = r.copy()
    rs = float(r @ r)
    b_norm = math.sqrt(float(b @ b)) or 1.0
    for _ in range(min(_SOLVER_MAX_ITER, 10 * d)):
        ap = apply(p)
        alpha = rs / float(p @ ap)
        w += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) < _SOLVER_TOL * b_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return w


def _kfold_indices(n: int, k: int) -> list[np.ndarray]:
    # Deterministic strided folds; callers shuffle their data beforehand if needed.
    return [np.arange(n)[i::k] for i in range(k)]


def _with_intercept(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(x)), x])


def logistic_probe(embeddings, labels) -> ProbeReport:
    """Five-fold CV accuracy of L2 logistic regression on frozen embeddings.

    The regularization strength is tuned on a fixed log grid by nested 4-fold
    cross-validation inside each training split.
    """
    x = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError("logistic probe needs exactly two classes")
    if min(int(np.sum(y == c)) for c in classes) < 10:
        raise ValueError("need at least 10 examples per class")
    sign = np.where(y == classes[1], 1.0, -1.0)

    accs = []
    for test_idx in _kfold_indices(len(y), 5):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        if len(np.unique(sign[train_idx])) < 2 or len(np.unique(sign[test_idx])) < 2:
            raise ValueError("a fold contains a single class")
        xtr_raw, xte_raw = x[train_idx], x[test_idx]
        ytr, yte = sign[train_idx], sign[test_idx]
        best_lam, best_score = None, -np.inf
        for lam in _LAMBDA_GRID:
            inner_scores = []
            for inner_test in _kfold_indices(len(ytr), 4):
                inner_train = np.setdiff1d(np.arange(len(ytr)), inner_test)
                xa, xb = _standardize(xtr_raw[inner_train], xtr_raw[inner_test])
                w = _fit_logistic(_with_intercept(xa), ytr[inner_train], lam)
                pred = np.sign(_with_intercept(xb) @ w)
                inner_scores.append(float(np.mean(pred == ytr[inner_test])))
            score = float(np.mean(inner_scores))
            if score > best_score:
                best_lam, best_score = lam, score
        xtr, xte = _standardize(xtr_raw, xte_raw)
        w = _fit_logistic(_with_intercept(xtr), ytr, best_lam)
        pred = np.sign(_with_intercept(xte) @ w)
        accs.append(float(np.mean(pred == yte)))
    return _report("accuracy", accs)


def ridge_probe(embeddings, targets, confound=None) -> ProbeReport:
    """Five-fold CV held-out R^2 of ridge regression on frozen embeddings.

    When a confound is given, targets are residualized against it by ordinary
    least squares fit on the training split only, and the held-out R^2 is
    measured on residualized test targets.  Regularization strength is tuned
    by nested 4-fold CV on the same grid as the logistic probe.
    """
    x = np.asarray(embeddings, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(x) < 20:
        raise ValueError("need at least 20 items")
    if float(np.std(y)) == 0.0:
        raise ValueError("targets are constant")
    conf = None if confound is None else np.asarray(confound, dtype=float)

    def residualize(train_idx, idx):
        if conf is None:
            return y[idx]
        c = _with_intercept(conf[train_idx, None])
        coef, *_ = np.linalg.lstsq(c, y[train_idx], rcond=None)
        return y[idx] - _with_intercept(conf[idx, None]) @ coef

    def r_squared(pred, truth):
        denom = float(np.sum((truth - truth.mean()) ** 2))
        if denom == 0.0:
            return 0.0
        return 1.0 - float(np.sum((truth - pred) ** 2)) / denom

    scores = []
    for test_idx in _kfold_indices(len(y), 5):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        ytr = residualize(train_idx, train_idx)
        yte = residualize(train_idx, test_idx)
        best_lam, best_score = None, -np.inf
        for lam in _LAMBDA_GRID:
            inner_scores = []
            for inner_test in _kfold_indices(len(train_idx), 4):
                inner_train = np.setdiff1d(np.arange(len(train_idx)), inner_test)
                xa, xb = _standardize(x[train_idx][inner_train], x[train_idx][inner_test])
                w = _fit_ridge(_with_intercept(xa), ytr[inner_train], lam)
                inner_scores.append(
                    r_squared(_with_intercept(xb) @ w, ytr[inner_test])
                )
            score = float(np.mean(inner_scores))
            if score > best_score:
                best_lam, best_score = lam, score
        xtr, xte = _standardize(x[train_idx], x[test_idx])
        w = _fit_ridge(_with_intercept(xtr), ytr, best_lam)
        scores.append(r_squared(_with_intercept(xte) @ w, yte))
    return _report("r_squared", scores)


def _report(metric: str, fold_values: list[float]) -> ProbeReport:
    mean = float(np.mean(fold_values))
    half = 1.96 * float(np.std(fold_values, ddof=1)) / math.sqrt(len(fold_values))
    return ProbeReport(
        metric=metric,
        fold_values=tuple(fold_values),
        mean=mean,
        ci=(mean - half, mean + half),
    )


def pca_project(embeddings, k: int) -> PcaResult:
    """Principal components by deflated power iteration on the covariance.

    Components are orthonormal with non-increasing explained variances.  When
    k exceeds the data rank, the available components are returned and the
    result is flagged truncated.
    """
    x = np.asarray(embeddings, dtype=float)
    n, d = x.shape
    if k > d:
        raise ValueError(f"k={k} exceeds embedding dimension {d}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(n - 1, 1)
    total = float(np.trace(cov))
    comps: list[np.ndarray] = []
    variances: list[float] = []
    truncated = False
    for _ in range(k):
        v = np.ones(d) + 1e-3 * np.arange(d)  # deterministic start
        for c in comps:
            v -= (v @ c) * c
        norm = float(np.linalg.norm(v))
        if norm < 1e-12:
            truncated = True
            break
        v /= norm
        for _ in range(20_000):
            w = cov @ v
            for c in comps:
                w -= (w @ c) * c
            norm = float(np.linalg.norm(w))
            if norm <= 1e-15 * max(total, 1.0):
                break
            w /= norm
            # Covariance is PSD, so the iterates converge without sign flips.
            done = abs(float(w @ v)) > 1.0 - 1e-14
            v = w
            if done:
                break
        lam = float(v @ cov @ v)
        if lam <= 1e-12 * max(total, 1.0):
            truncated = True
            break
        comps.append(v)
        variances.append(lam)
    components = np.array(comps) if comps else np.zeros((0, d))
    coords = centered @ components.T
    return PcaResult(
        components=components,
        coordinates=coords,
        explained_variance=np.array(variances),
        truncated=truncated or len(comps) < k,
    )


def bootstrap_ci(
    values,
    n_boot: int = 2000,
    level: float = 0.95,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float]:
    """Seeded percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("values must be nonempty")
    rng = rng or np.random.default_rng(0)
    means = rng.choice(v, size=(n_boot, v.size), replace=True).mean(axis=1)
    alpha = (1.0 - level) / 2.0
    return (
        float(np.quantile(means, alpha)),
        float(np.quantile(means, 1.0 - alpha)),
    )
