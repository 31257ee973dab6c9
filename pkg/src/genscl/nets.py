"""From-scratch differentiable embedding networks.

Two architectures: a ReLU MLP over flat vectors and a small convolutional net
over square rasters (blocks of 3x3 same-padded convolution, ReLU, 2x2
max-pool, then a linear map to the embedding).  Parameters live in one flat
float64 array with an explicit layout, forward passes cache activations for
the exact backward pass, and a central-difference checker validates gradients
coordinate by coordinate.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CheckpointError, StaleCacheError

__all__ = [
    "NetSpec",
    "ParamVector",
    "EmbeddingNet",
    "param_layout",
    "init",
    "forward",
    "backward",
    "finite_diff_check",
    "spec_hash",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"GENSCL-CKPT\x00\x00\x00\x001"
assert len(_MAGIC) == 16


@dataclass(frozen=True)
class NetSpec:
    """Architecture description.

    mlp: ``widths`` = (input, hidden..., output), ReLU between linear layers.
    conv: ``input_side`` square rasters through ``blocks`` blocks of
    ``filters``-filter 3x3 convolution + ReLU + 2x2 max-pool, flattened into a
    linear layer of width ``embed_dim``.
    """

    kind: str
    widths: tuple[int, ...] = ()
    input_side: int = 0
    blocks: int = 0
    filters: int = 0
    embed_dim: int = 0

    def __post_init__(self):
        if self.kind == "mlp":
            if len(self.widths) < 2 or any(w < 1 for w in self.widths):
                raise ValueError("mlp widths need at least (input, output), all >= 1")
        elif self.kind == "conv":
            if min(self.blocks, self.filters, self.embed_dim, self.input_side) < 1:
                raise ValueError("conv spec fields must be >= 1")
            if self.input_side % (2**self.blocks) != 0:
                raise ValueError(
                    f"input side {self.input_side} not divisible by 2^{self.blocks} pooling chain"
                )
        else:
            raise ValueError(f"unknown net kind {self.kind!r}")

    @staticmethod
    def mlp(widths) -> "NetSpec":
        return NetSpec(kind="mlp", widths=tuple(int(w) for w in widths))

    @staticmethod
    def conv(input_side: int, blocks: int, filters: int, embed_dim: int) -> "NetSpec":
        return NetSpec(
            kind="conv",
            input_side=int(input_side),
            blocks=int(blocks),
            filters=int(filters),
            embed_dim=int(embed_dim),
        )

    @property
    def output_dim(self) -> int:
        return self.widths[-1] if self.kind == "mlp" else self.embed_dim

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "widths": list(self.widths),
            "input_side": self.input_side,
            "blocks": self.blocks,
            "filters": self.filters,
            "embed_dim": self.embed_dim,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "NetSpec":
        return NetSpec(
            kind=d["kind"],
            widths=tuple(d.get("widths", ())),
            input_side=d.get("input_side", 0),
            blocks=d.get("blocks", 0),
            filters=d.get("filters", 0),
            embed_dim=d.get("embed_dim", 0),
        )


def param_layout(spec: NetSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) slices making up the flat parameter vector."""
    layout: list[tuple[str, tuple[int, ...]]] = []
    if spec.kind == "mlp":
        for i, (n_in, n_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            layout.append((f"w{i}", (n_out, n_in)))
            layout.append((f"b{i}", (n_out,)))
        return layout
    channels = 1
    for i in range(spec.blocks):
        layout.append((f"conv{i}_w", (spec.filters, channels, 3, 3)))
        layout.append((f"conv{i}_b", (spec.filters,)))
        channels = spec.filters
    side = spec.input_side // (2**spec.blocks)
    flat = spec.filters * side * side
    layout.append(("head_w", (spec.embed_dim, flat)))
    layout.append(("head_b", (spec.embed_dim,)))
    return layout


def _layout_size(layout) -> int:
    return sum(int(np.prod(shape)) for _, shape in layout)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float parameter array plus the layout that maps slices to layers.

    float64 by default; float32 is preserved when handed in (used by the
    training loop as a faster compute mode).
    """

    values: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype != np.float32:
            values = values.astype(float)
        layout = tuple((name, tuple(shape)) for name, shape in self.layout)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)
        if values.ndim != 1 or values.size != _layout_size(layout):
            raise ValueError(
                f"parameter length {values.size} does not match layout total "
                f"{_layout_size(layout)}"
            )

    def slices(self) -> dict[str, np.ndarray]:
        out = {}
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            out[name] = self.values[offset : offset + n].reshape(shape)
            offset += n
        return out

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.layout)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


def init(spec: NetSpec, rng: np.random.Generator) -> ParamVector:
    """He-uniform weights (std sqrt(2/fan_in)), zero biases."""
    layout = param_layout(spec)
    chunks = []
    for name, shape in layout:
        if name.endswith("_b") or name.startswith("b"):
            chunks.append(np.zeros(int(np.prod(shape))))
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = math.sqrt(6.0 / fan_in)
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    return ParamVector(np.concatenate(chunks), tuple(layout))


def _as_batch(spec: NetSpec, x: np.ndarray, dtype=float) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=dtype)
    if spec.kind == "mlp":
        if x.ndim == 1:
            return x[None, :], True
        if x.ndim == 2:
            return x, False
        raise ValueError(f"mlp input must be 1-D or 2-D, got shape {x.shape}")
    if x.ndim == 2:
        return x[None, :, :], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"conv input must be 2-D or 3-D, got shape {x.shape}")


_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


def _im2col(x: np.ndarray) -> np.ndarray:
    """Channels-last (n, h, w, c) input to (n*h*w, 9c) patch matrix."""
    n, h, w, c = x.shape
    xpad = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, h, w, 9 * c), dtype=x.dtype)
    for k, (di, dj) in enumerate(_OFFSETS):
        cols[..., k * c : (k + 1) * c] = xpad[:, di : di + h, dj : dj + w, :]
    return cols.reshape(n * h * w, 9 * c)


def _conv3x3_forward(x: np.ndarray, w9: np.ndarray, b: np.ndarray):
    """Same-padded 3x3 convolution in channels-last layout via one matmul.

    ``w9`` is the kernel reshaped to (9c, f).  Returns the (n, h, w, f)
    output and the patch matrix reused by the backward pass.
    """
    n, h, wd, _ = x.shape
    cols = _im2col(x)
    out = cols @ w9
    out += b
    return out.reshape(n, h, wd, -1), cols


def _conv3x3_backward(grad: np.ndarray, cols: np.ndarray, w9: np.ndarray, need_dx: bool):
    """Gradients w.r.t. the (9c, f) kernel, bias, and channels-last input."""
    n, h, wd, f = grad.shape
    c = w9.shape[0] // 9
    gmat = grad.reshape(n * h * wd, f)
    dw9 = cols.T @ gmat
    db = gmat.sum(axis=0)
    if not need_dx:
        return dw9, db, None
    dcols = (gmat @ w9.T).reshape(n, h, wd, 9 * c)
    dxpad = np.zeros((n, h + 2, wd + 2, c), dtype=grad.dtype)
    for k, (di, dj) in enumerate(_OFFSETS):
        dxpad[:, di : di + h, dj : dj + wd, :] += dcols[..., k * c : (k + 1) * c]
    return dw9, db, dxpad[:, 1:-1, 1:-1, :]


def _maxpool2(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    return x.reshape(n, h // 2, 2, w // 2, 2, c).max(axis=(2, 4))


def _unpool2(grad: np.ndarray, x: np.ndarray, pooled: np.ndarray) -> np.ndarray:
    """Route pooled gradients back, split evenly across tied maxima.

    Equal-split matches central differences whenever tied cells are
    functionally identical (uniform regions), which is the only way ties
    arise away from measure-zero parameter settings.
    """
    n, h, w, c = x.shape
    xr = x.reshape(n, h // 2, 2, w // 2, 2, c)
    mask = xr == pooled[:, :, None, :, None, :]
    counts = mask.sum(axis=(2, 4), dtype=grad.dtype)
    share = (grad / counts)[:, :, None, :, None, :]
    return (mask * share).reshape(n, h, w, c)


def forward(spec: NetSpec, params: ParamVector, x: np.ndarray):
    """Deterministic forward pass.

    Returns (embedding, cache); the cache holds everything backward needs and
    is tied to this exact (spec, params) pair.  A 1-D vector (mlp) or 2-D
    raster (conv) yields a single embedding; a batch dimension is passed
    through.
    """
    xb, squeeze = _as_batch(spec, x, dtype=params.values.dtype)
    p = params.slices()
    cache = {
        "spec": spec,
        "params_id": id(params.values),
        "squeeze": squeeze,
    }
    if spec.kind == "mlp":
        if xb.shape[1] != spec.widths[0]:
            raise ValueError(f"expected input dim {spec.widths[0]}, got {xb.shape[1]}")
        acts = [xb]
        n_layers = len(spec.widths) - 1
        for i in range(n_layers):
            z = acts[-1] @ p[f"w{i}"].T + p[f"b{i}"]
            acts.append(np.maximum(z, 0.0) if i < n_layers - 1 else z)
        cache["acts"] = acts
        out = acts[-1]
    else:
        if xb.shape[1] != spec.input_side or xb.shape[2] != spec.input_side:
            raise ValueError(
                f"expected {spec.input_side}x{spec.input_side} rasters, got {xb.shape[1:]}"
            )
        h = xb[:, :, :, None]  # channels-last with one input channel
        blocks = []
        for i in range(spec.blocks):
            w = p[f"conv{i}_w"]
            w9 = w.transpose(2, 3, 1, 0).reshape(9 * w.shape[1], w.shape[0])
            z, cols = _conv3x3_forward(h, w9, p[f"conv{i}_b"])
            a = np.maximum(z, 0.0)
            pooled = _maxpool2(a)
            blocks.append({"cols": cols, "w9": w9, "z": z, "a": a, "pooled": pooled})
            h = pooled
        flat = h.reshape(h.shape[0], -1)
        out = flat @ p["head_w"].T + p["head_b"]
        cache["blocks"] = blocks
        cache["flat"] = flat
        cache["pre_flat_shape"] = h.shape
    return (out[0] if squeeze else out), cache


def backward(
    spec: NetSpec, params: ParamVector, cache: dict, output_grad: np.ndarray
) -> ParamVector:
    """Exact gradient of sum(output * output_grad) with respect to the parameters."""
    if cache.get("spec") != spec or cache.get("params_id") != id(params.values):
        raise StaleCacheError("cache does not belong to this spec/parameter pair")
    g = np.asarray(output_grad, dtype=params.values.dtype)
    if cache["squeeze"]:
        g = g[None, :]
    p = params.slices()
    grads = {name: None for name, _ in params.layout}
    if spec.kind == "mlp":
        acts = cache["acts"]
        n_layers = len(spec.widths) - 1
        delta = g
        for i in reversed(range(n_layers)):
            grads[f"w{i}"] = delta.T @ acts[i]
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ p[f"w{i}"]) * (acts[i] > 0)
    else:
        flat = cache["flat"]
        grads["head_w"] = g.T @ flat
        grads["head_b"] = g.sum(axis=0)
        delta = (g @ p["head_w"]).reshape(cache["pre_flat_shape"])
        for i in reversed(range(spec.blocks)):
            blk = cache["blocks"][i]
            delta = _unpool2(delta, blk["a"], blk["pooled"])
            delta = delta * (blk["z"] > 0)
            dw9, db, dx = _conv3x3_backward(delta, blk["cols"], blk["w9"], need_dx=i > 0)
            f, c = p[f"conv{i}_w"].shape[:2]
            grads[f"conv{i}_w"] = dw9.reshape(3, 3, c, f).transpose(3, 2, 0, 1)
            grads[f"conv{i}_b"] = db
            delta = dx
    flat_parts = [grads[name].reshape(-1) for name, _ in params.layout]
    return ParamVector(np.concatenate(flat_parts), params.layout)


def finite_diff_check(
    spec: NetSpec,
    params: ParamVector,
    x: np.ndarray,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    eps: float = 1e-5,
    n_coords: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between backprop and central differences.

    ``loss_fn`` maps an embedding to (loss, dloss/dembedding).  The check
    compares the analytic parameter gradient against central differences on
    ``n_coords`` randomly chosen coordinates (all coordinates when the vector
    is smaller), using max(|a|, |b|, 1e-8) as the denominator.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    rng = rng or np.random.default_rng(0)
    emb, cache = forward(spec, params, x)
    _, demb = loss_fn(emb)
    analytic = backward(spec, params, cache, demb).values
    n = params.values.size
    coords = np.arange(n) if n <= n_coords else rng.choice(n, size=n_coords, replace=False)
    max_rel = 0.0
    for c in coords:
        plus = params.values.copy()
        plus[c] += eps
        minus = params.values.copy()
        minus[c] -= eps
        lp, _ = loss_fn(forward(spec, ParamVector(plus, params.layout), x)[0])
        lm, _ = loss_fn(forward(spec, ParamVector(minus, params.layout), x)[0])
        numeric = (lp - lm) / (2 * eps)
        denom = max(abs(numeric), abs(analytic[c]), 1e-8)
        max_rel = max(max_rel, abs(numeric - analytic[c]) / denom)
    return max_rel


@dataclass(frozen=True)
class EmbeddingNet:
    """A (spec, params) pair with convenience embedding calls."""

    spec: NetSpec
    params: ParamVector

    def embed(self, x: np.ndarray) -> np.ndarray:
        out, _ = forward(self.spec, self.params, x)
        return out

    def embed_batch(self, xs: np.ndarray) -> np.ndarray:
        out, _ = forward(self.spec, self.params, np.asarray(xs, dtype=float))
        return out


def spec_hash(spec: NetSpec) -> bytes:
    blob = json.dumps(spec.to_json_dict(), sort_keys=True).encode("ascii")
    return hashlib.sha256(blob).digest()


def save_checkpoint(path, spec: NetSpec, params: ParamVector) -> None:
    """Magic header + spec hash + spec/layout JSON + little-endian float64 data."""
    meta = json.dumps(
        {"spec": spec.to_json_dict(), "layout": [[n, list(s)] for n, s in params.layout]}
    ).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(spec_hash(spec))
        fh.write(struct.pack("<Q", len(meta)))
        fh.write(meta)
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path, expected_spec: Optional[NetSpec] = None):
    """Load (spec, params); refuses files with a wrong magic or spec hash."""
    with open(path, "rb") as fh:
        magic = fh.read(16)
        if magic != _MAGIC:
            raise CheckpointError(f"bad checkpoint magic in {path}")
        digest = fh.read(32)
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("ascii"))
        spec = NetSpec.from_json_dict(meta["spec"])
        if spec_hash(spec) != digest:
            raise CheckpointError(f"spec hash mismatch in {path}")
        if expected_spec is not None and spec != expected_spec:
            raise CheckpointError(
                f"checkpoint spec {spec} does not match expected {expected_spec}"
            )
        layout = tuple((n, tuple(s)) for n, s in meta["layout"])
        data = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    return spec, ParamVector(data, layout)
