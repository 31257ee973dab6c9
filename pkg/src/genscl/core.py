"""Hierarchical generative processes, triplet sampling, and the same-source
vs. different-source log-odds estimated by Monte Carlo.

A hierarchical process is a two-stage sampler: draw a parameter value from a
prior, then draw data conditioned on it.  The similarity between two data
points is the log of the Bayes odds that they share one parameter draw versus
coming from two independent draws.  When the parameter integrals are
intractable the odds are estimated with a paired Monte-Carlo estimator over a
single shared parameter sample set, which also yields a delete-one jackknife
standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateDensityError, SamplingError

__all__ = [
    "HierarchicalProcess",
    "Triplet",
    "SimilarityValue",
    "PairDistanceStats",
    "sample_triplet",
    "sample_triplet_batch",
    "mc_log_gen_sim",
    "expected_pair_distances",
]


@dataclass(frozen=True)
class HierarchicalProcess:
    """Two-level generative model: parameters from a prior, data given parameters.

    Parameter values are opaque; only the owning process interprets them.  The
    scalar callables are the contract; ``param_batch`` and ``loglik_batch``
    are optional vectorized fast paths used by the Monte-Carlo estimator when
    present (they must agree with the scalar versions distributionally).

    Fields:
        param_sampler: rng -> parameter value.
        datum_sampler: (parameter, rng) -> datum (real vector or raster).
        likelihood: optional (datum, parameter) -> nonnegative density.
        label_of: optional parameter -> integer component/grammar label.
        param_batch: optional (rng, n) -> sequence of n parameter values.
        loglik_batch: optional (datum, parameters) -> array of log densities.
    """

    param_sampler: Callable[[np.random.Generator], Any]
    datum_sampler: Callable[[Any, np.random.Generator], np.ndarray]
    likelihood: Optional[Callable[[np.ndarray, Any], float]] = None
    label_of: Optional[Callable[[Any], int]] = None
    param_batch: Optional[Callable[[np.random.Generator, int], Sequence[Any]]] = None
    loglik_batch: Optional[Callable[[np.ndarray, Sequence[Any]], np.ndarray]] = None


@dataclass(frozen=True)
class Triplet:
    """Anchor/positive from one parameter draw, negative from an independent one."""

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    theta_plus_label: Optional[int] = None
    theta_minus_label: Optional[int] = None


@dataclass(frozen=True)
class SimilarityValue:
    """Natural-log odds of same-source vs. different-source, with optional MC error."""

    log_odds: float
    std_error: Optional[float] = None

    def __post_init__(self):
        if self.std_error is not None and not self.std_error >= 0.0:
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")


@dataclass(frozen=True)
class PairDistanceStats:
    """Mean embedding distances for same/different pairs with 1.96-sigma CIs."""

    mean_same: float
    mean_diff: float
    ci_same: tuple[float, float]
    ci_diff: tuple[float, float]


def _call_stage(stage: str, fn, *args):
    try:
        return fn(*args)
    except SamplingError:
        raise
    except Exception as exc:  # noqa: BLE001 - samplers are user callables
        raise SamplingError(stage, str(exc)) from exc


def sample_triplet(process: HierarchicalProcess, rng: np.random.Generator) -> Triplet:
    """Draw one (anchor, positive, negative) triplet.

    Two parameter values are drawn independently from the prior; anchor and
    positive share the first, the negative uses the second.  The draw order is
    fixed (theta+, theta-, anchor, positive, negative) so a given RNG state
    always yields the same triplet.
    """
    theta_plus = _call_stage("param_plus", process.param_sampler, rng)
    theta_minus = _call_stage("param_minus", process.param_sampler, rng)
    anchor = _call_stage("anchor", process.datum_sampler, theta_plus, rng)
    positive = _call_stage("positive", process.datum_sampler, theta_plus, rng)
    negative = _call_stage("negative", process.datum_sampler, theta_minus, rng)
    label_plus = label_minus = None
    if process.label_of is not None:
        label_plus = int(process.label_of(theta_plus))
        label_minus = int(process.label_of(theta_minus))
    return Triplet(anchor, positive, negative, label_plus, label_minus)


def sample_triplet_batch(
    process: HierarchicalProcess, rng: np.random.Generator, n: int
) -> list[Triplet]:
    """n independent triplets from one RNG stream; identical to n sequential calls."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return [sample_triplet(process, rng) for _ in range(n)]


def _logsumexp(values: np.ndarray) -> float:
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


def _delete_one_logsumexp(values: np.ndarray) -> np.ndarray:
    """Log-sum-exp of each leave-one-out subset of ``values``."""
    m = np.max(values)
    if not np.isfinite(m):
        return np.full(values.shape, m)
    shifted = np.exp(values - m)
    total = np.sum(shifted)
    rest = total - shifted
    with np.errstate(divide="ignore"):
        out = m + np.log(np.maximum(rest, 0.0))
    return out


def _log_likelihoods(process: HierarchicalProcess, x: np.ndarray, thetas) -> np.ndarray:
    if process.loglik_batch is not None:
        return np.asarray(process.loglik_batch(x, thetas), dtype=float)
    vals = np.array([process.likelihood(x, t) for t in thetas], dtype=float)
    if np.any(vals < 0):
        raise ValueError("likelihood returned a negative density")
    with np.errstate(divide="ignore"):
        return np.log(vals)


def mc_log_gen_sim(
    process: HierarchicalProcess,
    x1: np.ndarray,
    x2: np.ndarray,
    n_theta: int,
    rng: np.random.Generator,
) -> SimilarityValue:
    """Monte-Carlo estimate of the same/different log-odds for a pair of data.

    Uses the paired estimator: one parameter sample set theta_1..theta_n serves
    both the joint term mean_k p(x1|theta_k) p(x2|theta_k) and the two marginal
    terms, which cancels a large share of the sampling variance.  All sums are
    done in the log domain with max-shift stabilization.  The returned
    std_error is a delete-one jackknife of the log-odds.

    Raises DegenerateDensityError when a marginal likelihood estimate is zero
    (the odds denominator vanishes).
    """
    if process.likelihood is None and process.loglik_batch is None:
        raise ValueError("process must provide a likelihood for similarity estimation")
    if n_theta < 2:
        raise ValueError(f"n_theta must be >= 2, got {n_theta}")

    if process.param_batch is not None:
        thetas = process.param_batch(rng, n_theta)
    else:
        thetas = [_call_stage("param", process.param_sampler, rng) for _ in range(n_theta)]

    la = _log_likelihoods(process, x1, thetas)
    lb = _log_likelihoods(process, x2, thetas)

    lse_a = _logsumexp(la)
    lse_b = _logsumexp(lb)
    if not np.isfinite(lse_a) or not np.isfinite(lse_b):
        raise DegenerateDensityError(
            "marginal likelihood estimate is zero for at least one datum"
        )
    lse_ab = _logsumexp(la + lb)
    log_odds = lse_ab - lse_a - lse_b + math.log(n_theta)

    # Jackknife over theta draws: recompute the log-odds without each draw.
    loo = (
        _delete_one_logsumexp(la + lb)
        - _delete_one_logsumexp(la)
        - _delete_one_logsumexp(lb)
        + math.log(n_theta - 1)
    )
    if np.all(np.isfinite(loo)):
        center = float(np.mean(loo))
        var = (n_theta - 1) / n_theta * float(np.sum((loo - center) ** 2))
        std_error = math.sqrt(max(var, 0.0))
    else:
        std_error = None
    return SimilarityValue(log_odds=float(log_odds), std_error=std_error)


def expected_pair_distances(
    net,
    process: HierarchicalProcess,
    rng: np.random.Generator,
    n: int,
) -> PairDistanceStats:
    """Mean embedding distance for same pairs vs. different pairs over n triplets.

    ``net`` is an EmbeddingNet (see genscl.nets).  Returns normal-approximation
    1.96-sigma confidence intervals for both means.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    triplets = sample_triplet_batch(process, rng, n)
    anchors = np.stack([t.anchor for t in triplets])
    positives = np.stack([t.positive for t in triplets])
    negatives = np.stack([t.negative for t in triplets])
    ea = net.embed_batch(anchors)
    ep = net.embed_batch(positives)
    en = net.embed_batch(negatives)
    d_same = np.linalg.norm(ea - ep, axis=1)
    d_diff = np.linalg.norm(ea - en, axis=1)

    def _mean_ci(d: np.ndarray) -> tuple[float, tuple[float, float]]:
        mean = float(np.mean(d))
        half = 1.96 * float(np.std(d, ddof=1)) / math.sqrt(len(d))
        return mean, (mean - half, mean + half)

    mean_same, ci_same = _mean_ci(d_same)
    mean_diff, ci_diff = _mean_ci(d_diff)
    return PairDistanceStats(mean_same, mean_diff, ci_same, ci_diff)
