"""Isotropic Gaussian mixtures: hierarchical-process adapter, closed-form
same/different log-odds for the two-component case, and the linear-projection
analysis (analytic loss, its Monte-Carlo estimate, and the optimal direction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import HierarchicalProcess

__all__ = [
    "GaussianMixture",
    "as_process",
    "closed_form_log_gen_sim",
    "analytic_linear_loss",
    "empirical_linear_loss",
    "optimal_projection",
    "fit_linear_projection",
]

_UNIT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture of isotropic Gaussians with one shared variance.

    means: (k, d) array; variance: shared sigma^2 > 0; weights: probability
    vector over components (uniform by default).
    """

    means: np.ndarray
    variance: float
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        object.__setattr__(self, "means", means)
        if means.ndim != 2 or means.shape[0] < 1:
            raise ValueError("means must be a nonempty list of equal-dimension vectors")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        if self.weights is None:
            weights = np.full(means.shape[0], 1.0 / means.shape[0])
        else:
            weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (means.shape[0],):
            raise ValueError("weights must have one entry per component")
        if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-12")
        object.__setattr__(self, "weights", weights)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def component_log_density(self, x: np.ndarray, index) -> np.ndarray:
        """log N(x; mu_index, sigma^2 I); index may be a scalar or an int array."""
        x = np.asarray(x, dtype=float)
        mus = self.means[np.asarray(index)]
        sq = np.sum((x - mus) ** 2, axis=-1)
        d = self.dim
        return -0.5 * sq / self.variance - 0.5 * d * math.log(2.0 * math.pi * self.variance)


def as_process(mix: GaussianMixture) -> HierarchicalProcess:
    """Wrap a mixture as a hierarchical process over component indices."""
    sigma = mix.sigma

    def param_sampler(rng: np.random.Generator) -> int:
        return int(rng.choice(mix.n_components, p=mix.weights))

    def param_batch(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(mix.n_components, size=n, p=mix.weights)

    def datum_sampler(theta: int, rng: np.random.Generator) -> np.ndarray:
        return mix.means[int(theta)] + sigma * rng.standard_normal(mix.dim)

    def likelihood(x: np.ndarray, theta: int) -> float:
        return float(np.exp(mix.component_log_density(x, int(theta))))

    def loglik_batch(x: np.ndarray, thetas) -> np.ndarray:
        return mix.component_log_density(x, np.asarray(thetas, dtype=int))

    return HierarchicalProcess(
        param_sampler=param_sampler,
        datum_sampler=datum_sampler,
        likelihood=likelihood,
        label_of=lambda theta: int(theta),
        param_batch=param_batch,
        loglik_batch=loglik_batch,
    )


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if not np.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(v - m))))


def closed_form_log_gen_sim(mix: GaussianMixture, x1: np.ndarray, x2: np.ndarray) -> float:
    """Exact same/different log-odds for a uniform two-component mixture.

    Computed in the log domain:
        log[ (1/2) sum_i N(x1;mu_i) N(x2;mu_i) ]
        - log[ (1/2) sum_i N(x1;mu_i) ] - log[ (1/2) sum_i N(x2;mu_i) ]
    the Gaussian normalization constants cancel between numerator and
    denominator.
    """
    if mix.n_components != 2:
        raise ValueError("closed form requires exactly 2 components")
    if not np.allclose(mix.weights, 0.5, atol=1e-12):
        raise ValueError("closed form requires uniform component weights")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (mix.dim,) or x2.shape != (mix.dim,):
        raise ValueError(
            f"data dimension mismatch: expected ({mix.dim},), got {x1.shape} and {x2.shape}"
        )
    idx = np.arange(2)
    la = mix.component_log_density(x1, idx)
    lb = mix.component_log_density(x2, idx)
    return _logsumexp(la + lb) - _logsumexp(la) - _logsumexp(lb) + math.log(2.0)


def _check_unit(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if abs(float(np.linalg.norm(phi)) - 1.0) > _UNIT_TOL:
        raise ValueError("phi must be a unit vector")
    return phi


def analytic_linear_loss(phi: np.ndarray, mu: np.ndarray) -> float:
    """Expected linear-projection contrast for a symmetric mixture with means +-mu.

    Equals -4 ||mu||^2 cos^2(angle between phi and mu) = -4 (phi . mu)^2 for
    unit phi; the scale-4 convention keeps the conventional constant in front
    of the Monte-Carlo estimate (which averages the raw contrast and is
    exactly 1/4 of this value in expectation).
    """
    phi = _check_unit(phi)
    mu = np.asarray(mu, dtype=float)
    if float(np.linalg.norm(mu)) == 0.0:
        raise ValueError("mu must be nonzero")
    if phi.shape != mu.shape:
        raise ValueError("phi and mu must have equal dimension")
    return -4.0 * float(np.dot(phi, mu)) ** 2


def _require_symmetric_two_component(mix: GaussianMixture) -> np.ndarray:
    if mix.n_components != 2:
        raise ValueError("symmetric two-component mixture required")
    mu = mix.means[0]
    if not np.allclose(mix.means[1], -mu, atol=1e-9 * (1 + float(np.abs(mu).max()))):
        raise ValueError("mixture means must be +-mu (symmetric about the origin)")
    if not np.allclose(mix.weights, 0.5, atol=1e-12):
        raise ValueError("uniform weights required")
    return mu


def _sample_triplet_arrays(
    mix: GaussianMixture, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized triplet draw (anchor/positive share a component, negative is free)."""
    comp_plus = rng.choice(mix.n_components, size=n, p=mix.weights)
    comp_minus = rng.choice(mix.n_components, size=n, p=mix.weights)
    sigma = mix.sigma
    x = mix.means[comp_plus] + sigma * rng.standard_normal((n, mix.dim))
    xp = mix.means[comp_plus] + sigma * rng.standard_normal((n, mix.dim))
    xn = mix.means[comp_minus] + sigma * rng.standard_normal((n, mix.dim))
    return x, xp, xn


def empirical_linear_loss(
    phi: np.ndarray,
    mix: GaussianMixture,
    rng: np.random.Generator,
    n_triplets: int,
) -> float:
    """Monte-Carlo mean of (phi.x)(phi.x-) - (phi.x)(phi.x+) over sampled triplets."""
    phi = _check_unit(phi)
    _require_symmetric_two_component(mix)
    x, xp, xn = _sample_triplet_arrays(mix, rng, n_triplets)
    px, pp, pn = x @ phi, xp @ phi, xn @ phi
    return float(np.mean(px * pn - px * pp))


def optimal_projection(mu1: np.ndarray, mu2: np.ndarray) -> np.ndarray:
    """Unit vector along mu1 - mu2, signed so its first nonzero coordinate is positive."""
    mu1 = np.asarray(mu1, dtype=float)
    mu2 = np.asarray(mu2, dtype=float)
    diff = mu1 - mu2
    norm = float(np.linalg.norm(diff))
    if norm < 1e-12 * (1 + float(np.abs(mu1).max())):
        raise ValueError("means must differ")
    unit = diff / norm
    for coord in unit:
        if abs(coord) > 1e-12:
            if coord < 0:
                unit = -unit
            break
    return unit


def fit_linear_projection(
    mix: GaussianMixture,
    rng: np.random.Generator,
    n_triplets: int = 20000,
    steps: int = 400,
    lr: float = 0.05,
) -> np.ndarray:
    """Projected gradient descent on the empirical linear contrast.

    The empirical objective over a fixed triplet sample is the quadratic form
    phi' A phi with A the symmetrized mean of x x-' minus x x+', so the descent
    renormalizes onto the unit sphere after every step and converges to the
    minimal-eigenvalue direction (the mixture axis, up to sign).
    """
    _require_symmetric_two_component(mix)
    x, xp, xn = _sample_triplet_arrays(mix, rng, n_triplets)
    a = (x.T @ xn + xn.T @ x - x.T @ xp - xp.T @ x) / (2.0 * n_triplets)
    phi = rng.standard_normal(mix.dim)
    phi /= np.linalg.norm(phi)
    for _ in range(steps):
        grad = 2.0 * a @ phi
        phi = phi - lr * grad
        phi /= np.linalg.norm(phi)
    return phi
