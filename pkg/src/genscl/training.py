"""Loss functions, raster augmentations, optimizers, and the deterministic
training loop.

Every loss returns its value together with exact gradients w.r.t. the
embeddings involved; the loop backpropagates those through the network and
applies SGD or Adam.  All randomness (init, data order, augmentations) is
derived from the config seed through spawned seed sequences, so two runs with
one seed produce bitwise-identical parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np
from scipy import ndimage

from . import nets
from .errors import NumericError, TrainingAbortedError
from .nets import NetSpec, ParamVector

__all__ = [
    "LinearTriplet",
    "SoftmaxTriplet",
    "QuadraticTriplet",
    "GenSimRegression",
    "InfoNce",
    "LossKind",
    "TrainConfig",
    "AugmentSpec",
    "AdamState",
    "EpochStats",
    "TrainResult",
    "TripletSource",
    "PairTargetSource",
    "AugmentedPairSource",
    "triplet_loss",
    "gensim_regression_loss",
    "infonce_loss",
    "augment",
    "adam_step",
    "train_run",
    "write_epoch_csv",
]


@dataclass(frozen=True)
class LinearTriplet:
    """loss = d(anchor, positive) - d(anchor, negative)."""


@dataclass(frozen=True)
class SoftmaxTriplet:
    """loss = log(1 + exp(d(anchor, positive) - d(anchor, negative)))."""


@dataclass(frozen=True)
class QuadraticTriplet:
    """loss = d(anchor, positive)^2 - d(anchor, negative)^2."""


@dataclass(frozen=True)
class GenSimRegression:
    """loss = (||e1 - e2|| - target_distance)^2."""


@dataclass(frozen=True)
class InfoNce:
    """Softmax cross-entropy over cosine similarities of matched pairs."""

    temperature: float = 0.5

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


LossKind = Union[LinearTriplet, SoftmaxTriplet, QuadraticTriplet, GenSimRegression, InfoNce]


def _check_same_dim(*embeddings: np.ndarray) -> list[np.ndarray]:
    arrs = [np.asarray(e, dtype=float) for e in embeddings]
    dim = arrs[0].shape
    if any(a.shape != dim for a in arrs):
        raise ValueError(f"embedding dimension mismatch: {[a.shape for a in arrs]}")
    return arrs


def _unit_difference(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance and d||a-b||/da, with zero subgradient at coincident points."""
    diff = a - b
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        return 0.0, np.zeros_like(diff)
    return dist, diff / dist


def triplet_loss(kind: LossKind, e_a, e_p, e_n):
    """Triplet contrast value and exact gradients w.r.t. the three embeddings."""
    e_a, e_p, e_n = _check_same_dim(e_a, e_p, e_n)
    if isinstance(kind, QuadraticTriplet):
        loss = float(np.sum((e_a - e_p) ** 2) - np.sum((e_a - e_n) ** 2))
        ga = 2.0 * (e_n - e_p)
        gp = -2.0 * (e_a - e_p)
        gn = 2.0 * (e_a - e_n)
        return loss, (ga, gp, gn)
    d_p, u_p = _unit_difference(e_a, e_p)
    d_n, u_n = _unit_difference(e_a, e_n)
    delta = d_p - d_n
    if isinstance(kind, LinearTriplet):
        loss, scale = delta, 1.0
    elif isinstance(kind, SoftmaxTriplet):
        loss = float(np.logaddexp(0.0, delta))
        scale = float(1.0 / (1.0 + np.exp(-delta)))
    else:
        raise TypeError(f"not a triplet loss kind: {kind!r}")
    return loss, (scale * (u_p - u_n), -scale * u_p, scale * u_n)


def gensim_regression_loss(e1, e2, target_distance: float):
    """Squared gap between embedding distance and a nonnegative target distance."""
    if target_distance < 0:
        raise ValueError("target distance must be nonnegative")
    e1, e2 = _check_same_dim(e1, e2)
    dist, unit = _unit_difference(e1, e2)
    gap = dist - float(target_distance)
    loss = gap * gap
    g1 = 2.0 * gap * unit
    return loss, (g1, -g1)


def infonce_loss(pairs, temperature: float):
    """InfoNCE over matched pairs with cosine similarity.

    ``pairs`` is a sequence of (embedding, augmented_embedding) or a pair of
    stacked (n, d) arrays.  Returns the mean loss and gradients for both
    stacks.  The loss for row i scores the matched column against all
    augmented columns:
        -log softmax_j(cos(e_i, e'_j) / temperature) at j = i.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.asarray(pairs[0]).ndim == 2:
        u = np.asarray(pairs[0], dtype=float)
        v = np.asarray(pairs[1], dtype=float)
    else:
        u = np.stack([np.asarray(p[0], dtype=float) for p in pairs])
        v = np.stack([np.asarray(p[1], dtype=float) for p in pairs])
    if u.shape != v.shape or u.ndim != 2:
        raise ValueError("pairs must form two equal (n, d) stacks")
    n = u.shape[0]
    if n < 2:
        raise ValueError("InfoNCE needs at least 2 pairs")
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise ValueError("zero-norm embedding in InfoNCE")
    uh = u / nu[:, None]
    vh = v / nv[:, None]
    sims = uh @ vh.T
    logits = sims / temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(p[np.arange(n), np.arange(n)])))
    # dL/dsims = (softmax - identity) / (n * temperature)
    dsims = (p - np.eye(n)) / (n * temperature)
    # cos(u_i, v_j) gradients through both normalizations.
    du = dsims @ vh
    du -= (dsims * sims).sum(axis=1, keepdims=True) * uh
    du /= nu[:, None]
    dv = dsims.T @ uh
    dv -= (dsims * sims).sum(axis=0)[:, None] * vh
    dv /= nv[:, None]
    return loss, (du, dv)


@dataclass(frozen=True)
class AugmentSpec:
    """Random resize-crop, horizontal flip, and Gaussian blur settings."""

    crop_scale_range: tuple[float, float] = (0.6, 1.0)
    flip_prob: float = 0.5
    blur_sigma_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not (0 < lo <= hi <= 1):
            raise ValueError("crop_scale_range must be an interval within (0, 1]")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must be in [0, 1]")
        blo, bhi = self.blur_sigma_range
        if not (0 <= blo <= bhi):
            raise ValueError("blur_sigma_range must be a well-ordered interval >= 0")


def _bilinear_resize(img: np.ndarray, out_side: int) -> np.ndarray:
    side = img.shape[0]
    if side == out_side:
        return img.copy()
    # Sample output pixel centers back in input coordinates.
    coords = (np.arange(out_side) + 0.5) * side / out_side - 0.5
    coords = np.clip(coords, 0, side - 1)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, side - 1)
    frac = coords - i0
    top = img[np.ix_(i0, i0)] * np.outer(1 - frac, 1 - frac)
    top += img[np.ix_(i0, i1)] * np.outer(1 - frac, frac)
    bot = img[np.ix_(i1, i0)] * np.outer(frac, 1 - frac)
    bot += img[np.ix_(i1, i1)] * np.outer(frac, frac)
    return top + bot


def augment(raster: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Crop-resize, maybe flip, then blur; output has the input size, in [0,1].

    All three random draws happen unconditionally so the RNG stream does not
    depend on the parameter values.
    """
    img = np.asarray(raster, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError("raster must be square")
    size = img.shape[0]
    area = rng.uniform(*spec.crop_scale_range)
    u_pos = rng.random(2)
    do_flip = rng.random() < spec.flip_prob
    sigma = rng.uniform(*spec.blur_sigma_range)

    side = max(1, int(round(size * np.sqrt(area))))
    if side < size:
        r0 = int(u_pos[0] * (size - side + 1))
        c0 = int(u_pos[1] * (size - side + 1))
        img = _bilinear_resize(img[r0 : r0 + side, c0 : c0 + side], size)
    if do_flip:
        img = img[:, ::-1]
    if sigma > 0:
        img = ndimage.gaussian_filter(img, sigma=sigma)
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; the seed drives init, data order, and augmentation."""

    loss: LossKind
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    compute_dtype: str = "float64"

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size >= 1 and self.epochs >= 0):
            raise ValueError("learning_rate > 0, batch_size >= 1, epochs >= 0 required")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.compute_dtype not in ("float64", "float32"):
            raise ValueError("compute_dtype must be 'float64' or 'float32'")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(n: int, dtype=float) -> "AdamState":
        return AdamState(m=np.zeros(n, dtype=dtype), v=np.zeros(n, dtype=dtype), t=0)


def adam_step(
    params: ParamVector, grads: ParamVector, state: AdamState, config: TrainConfig
) -> tuple[ParamVector, AdamState]:
    """Standard bias-corrected Adam update; rejects non-finite gradients."""
    g = grads.values
    if g.shape != params.values.shape:
        raise ValueError("gradient length does not match parameters")
    if not np.all(np.isfinite(g)):
        bad = int(np.sum(~np.isfinite(g)))
        raise NumericError(f"non-finite gradient in {bad} coordinate(s) at step {state.t + 1}")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new_values = params.values - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return ParamVector(new_values, params.layout), AdamState(m=m, v=v, t=t)


def _sgd_step(params: ParamVector, grads: ParamVector, lr: float) -> ParamVector:
    if not np.all(np.isfinite(grads.values)):
        raise NumericError("non-finite gradient in SGD step")
    return ParamVector(params.values - lr * grads.values, params.layout)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    wall_ms: float


@dataclass(frozen=True)
class TrainResult:
    params: ParamVector
    log: tuple[EpochStats, ...]


class TripletSource:
    """Fixed (anchor, positive, negative) arrays, reshuffled every epoch."""

    kind = "triplet"

    def __init__(self, anchors, positives, negatives):
        self.anchors = np.asarray(anchors, dtype=float)
        self.positives = np.asarray(positives, dtype=float)
        self.negatives = np.asarray(negatives, dtype=float)
        n = len(self.anchors)
        if not (len(self.positives) == len(self.negatives) == n) or n == 0:
            raise ValueError("anchor/positive/negative arrays must be nonempty, equal length")

    def __len__(self) -> int:
        return len(self.anchors)

    def epoch_batches(self, rng: np.random.Generator, batch_size: int) -> Iterator[dict]:
        order = rng.permutation(len(self.anchors))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            yield {
                "anchors": self.anchors[idx],
                "positives": self.positives[idx],
                "negatives": self.negatives[idx],
            }


class PairTargetSource:
    """Fixed (x1, x2, target_distance) arrays, reshuffled every epoch."""

    kind = "pair_target"

    def __init__(self, first, second, targets):
        self.first = np.asarray(first, dtype=float)
        self.second = np.asarray(second, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        n = len(self.first)
        if not (len(self.second) == len(self.targets) == n) or n == 0:
            raise ValueError("pair/target arrays must be nonempty, equal length")
        if np.any(self.targets < 0):
            raise ValueError("target distances must be nonnegative")

    def __len__(self) -> int:
        return len(self.first)

    def epoch_batches(self, rng: np.random.Generator, batch_size: int) -> Iterator[dict]:
        order = rng.permutation(len(self.first))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            yield {
                "first": self.first[idx],
                "second": self.second[idx],
                "targets": self.targets[idx],
            }


class AugmentedPairSource:
    """Base rasters paired with a fresh augmentation of each, per epoch."""

    kind = "augmented_pair"

    def __init__(self, rasters, augment_spec: AugmentSpec):
        self.rasters = np.asarray(rasters, dtype=float)
        if self.rasters.ndim != 3 or len(self.rasters) == 0:
            raise ValueError("rasters must be a nonempty (n, h, w) stack")
        self.augment_spec = augment_spec

    def __len__(self) -> int:
        return len(self.rasters)

    def epoch_batches(self, rng: np.random.Generator, batch_size: int) -> Iterator[dict]:
        order = rng.permutation(len(self.rasters))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            originals = self.rasters[idx]
            views = []
            for r in originals:
                view = augment(r, self.augment_spec, rng)
                # A crop that misses the ink entirely carries no contrastive
                # signal (and collapses cosine similarity); keep the original.
                views.append(r if not view.any() else view)
            yield {"originals": originals, "augmented": np.stack(views)}


DataSource = Union[TripletSource, PairTargetSource, AugmentedPairSource]

_SOURCE_FOR_LOSS = {
    LinearTriplet: "triplet",
    SoftmaxTriplet: "triplet",
    QuadraticTriplet: "triplet",
    GenSimRegression: "pair_target",
    InfoNce: "augmented_pair",
}


def _unit_rows(diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dist = np.linalg.norm(diff, axis=1)
    safe = np.where(dist == 0.0, 1.0, dist)
    units = diff / safe[:, None]
    units[dist == 0.0] = 0.0
    return dist, units


def _batch_triplet_grads(kind: LossKind, ea, ep, en):
    """Vectorized mean triplet loss and per-row gradients (already /batch)."""
    b = len(ea)
    if isinstance(kind, QuadraticTriplet):
        losses = np.sum((ea - ep) ** 2, axis=1) - np.sum((ea - en) ** 2, axis=1)
        ga = 2.0 * (en - ep) / b
        gp = -2.0 * (ea - ep) / b
        gn = 2.0 * (ea - en) / b
        return float(np.mean(losses)), ga, gp, gn
    dp, up = _unit_rows(ea - ep)
    dn, un = _unit_rows(ea - en)
    delta = dp - dn
    if isinstance(kind, LinearTriplet):
        losses = delta
        scale = np.ones_like(delta)
    else:
        losses = np.logaddexp(0.0, delta)
        scale = 1.0 / (1.0 + np.exp(-delta))
    s = (scale / b)[:, None]
    return float(np.mean(losses)), s * (up - un), -s * up, s * un


def train_run(
    spec: NetSpec,
    config: TrainConfig,
    data_source: DataSource,
    checkpoint_dir=None,
) -> TrainResult:
    """Minimize the configured loss over the data source.

    The data source kind must match the loss kind.  With a checkpoint
    directory, parameters are saved after every epoch; on a non-finite loss
    the run aborts and the last finished epoch's parameters stay on disk and
    in the raised error.
    """
    expected = _SOURCE_FOR_LOSS[type(config.loss)]
    if data_source.kind != expected:
        raise ValueError(
            f"loss {type(config.loss).__name__} needs a {expected!r} source, "
            f"got {data_source.kind!r}"
        )
    master = np.random.SeedSequence(config.seed)
    init_seed, epochs_seed = master.spawn(2)
    params = nets.init(spec, np.random.default_rng(init_seed))
    if config.compute_dtype == "float32":
        params = ParamVector(params.values.astype(np.float32), params.layout)
    state = AdamState.zeros(params.values.size, dtype=params.values.dtype)
    log: list[EpochStats] = []
    epoch_streams = epochs_seed.spawn(max(config.epochs, 1))

    for epoch in range(config.epochs):
        rng = np.random.default_rng(epoch_streams[epoch])
        t0 = time.perf_counter()
        losses = []
        last_good = params
        for batch in data_source.epoch_batches(rng, config.batch_size):
            loss, grads = _batch_gradients(spec, params, config.loss, batch)
            if not np.isfinite(loss):
                raise TrainingAbortedError(epoch, "non-finite loss", last_params=last_good)
            if config.optimizer == "adam":
                params, state = adam_step(params, grads, state, config)
            else:
                params = _sgd_step(params, grads, config.learning_rate)
            losses.append(loss)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        log.append(EpochStats(epoch=epoch, mean_loss=float(np.mean(losses)), wall_ms=wall_ms))
        if checkpoint_dir is not None:
            nets.save_checkpoint(f"{checkpoint_dir}/epoch_{epoch:04d}.ckpt", spec, params)
    return TrainResult(params=params, log=tuple(log))


def _batch_gradients(spec, params, loss_kind, batch):
    """One batch: forward, loss + embedding grads, backward to parameter grads."""
    if isinstance(loss_kind, (LinearTriplet, SoftmaxTriplet, QuadraticTriplet)):
        stacked = np.concatenate([batch["anchors"], batch["positives"], batch["negatives"]])
        emb, cache = nets.forward(spec, params, stacked)
        n = len(batch["anchors"])
        loss, ga, gp, gn = _batch_triplet_grads(loss_kind, emb[:n], emb[n : 2 * n], emb[2 * n :])
        grads = nets.backward(spec, params, cache, np.concatenate([ga, gp, gn]))
        return loss, grads
    if isinstance(loss_kind, GenSimRegression):
        stacked = np.concatenate([batch["first"], batch["second"]])
        emb, cache = nets.forward(spec, params, stacked)
        n = len(batch["first"])
        e1, e2 = emb[:n], emb[n:]
        dist, unit = _unit_rows(e1 - e2)
        gap = dist - batch["targets"]
        g1 = (2.0 * gap / n)[:, None] * unit
        grads = nets.backward(spec, params, cache, np.concatenate([g1, -g1]))
        return float(np.mean(gap * gap)), grads
    if isinstance(loss_kind, InfoNce):
        stacked = np.concatenate([batch["originals"], batch["augmented"]])
        emb, cache = nets.forward(spec, params, stacked)
        n = len(batch["originals"])
        loss, (du, dv) = infonce_loss((emb[:n], emb[n:]), loss_kind.temperature)
        grads = nets.backward(spec, params, cache, np.concatenate([du, dv]))
        return loss, grads
    raise TypeError(f"unsupported loss kind {loss_kind!r}")


def write_epoch_csv(log: Sequence[EpochStats], path) -> None:
    """Write the per-epoch log as CSV: epoch, mean_loss, wall_ms."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("epoch,mean_loss,wall_ms\n")
        for row in log:
            fh.write(f"{row.epoch},{row.mean_loss:.9g},{row.wall_ms:.3f}\n")
