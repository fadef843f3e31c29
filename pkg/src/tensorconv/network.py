"""Layer-level machinery: activations, pooling, losses, layer configuration.

Activations are strictly coordinate-wise, so their gradients are diagonal and
never materialized: every contraction against an activation gradient reduces
to a coordinate-wise product with the slope array.  Pooling is a stride-1
window reduction.  Losses are scalar-valued with analytic gradients taken
with respect to the prediction argument.

The private ``*_data`` helpers operate on raw arrays and tolerate trailing
passthrough axes; the training module reuses them so that batch-mode tensors
take exactly the same arithmetic path as per-sample ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .convolution import FilterSpec, ConvGeometry, conv_geometry, convolve
from .errors import DimensionMismatch, DomainError, EmptyBatch, GeometryError
from .tensor import DenseTensor

__all__ = [
    "ActivationKind",
    "PoolSpec",
    "LossKind",
    "LayerConfig",
    "NetworkConfig",
    "activate",
    "activate_derivative",
    "layer_forward",
    "pool",
    "pool_backward",
    "pooled_dims",
    "feature_map_forward",
    "loss",
    "loss_gradient",
    "batch_loss",
]


class ActivationKind(str, Enum):
    IDENTITY = "identity"
    SIGMOID = "sigmoid"
    RELU = "relu"
    TANH = "tanh"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: stable for large |x|, exact at 0
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activation_value(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    if kind == ActivationKind.IDENTITY:
        return x
    if kind == ActivationKind.SIGMOID:
        return _sigmoid(x)
    if kind == ActivationKind.RELU:
        return np.maximum(0.0, x)
    if kind == ActivationKind.TANH:
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_slope(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    if kind == ActivationKind.IDENTITY:
        return np.ones_like(x)
    if kind == ActivationKind.SIGMOID:
        s = _sigmoid(x)
        return s * (1.0 - s)
    if kind == ActivationKind.RELU:
        return (x > 0.0).astype(float)  # slope 0 at the kink
    if kind == ActivationKind.TANH:
        t = np.tanh(x)
        return 1.0 - t * t
    raise ValueError(f"unknown activation {kind!r}")


def activate(kind: ActivationKind, t: DenseTensor) -> DenseTensor:
    """Apply the scalar activation rule to every coordinate."""
    return DenseTensor._wrap(_activation_value(kind, t.data))


def activate_derivative(kind: ActivationKind, t: DenseTensor) -> DenseTensor:
    """Coordinate-wise activation slope.

    Because activations are elementwise, their full gradient is diagonal;
    contracting it against another tensor is the coordinate-wise product of
    this result with that tensor.
    """
    return DenseTensor._wrap(_activation_slope(kind, t.data))


# ---------------------------------------------------------------------------
# pooling


@dataclass(frozen=True)
class PoolSpec:
    """Stride-1 window reduction; output dims are n - window + 1 per order."""

    window: tuple[int, ...]
    kind: str = "max"  # "max" or "average"

    def __post_init__(self) -> None:
        object.__setattr__(self, "window", tuple(int(w) for w in self.window))
        if not self.window or any(w < 1 for w in self.window):
            raise GeometryError(f"invalid pooling window {self.window}")
        if self.kind not in ("max", "average"):
            raise GeometryError(f"unknown pooling kind {self.kind!r}")


def pooled_dims(spec: PoolSpec, dims: Sequence[int]) -> tuple[int, ...]:
    if len(spec.window) != len(dims):
        raise GeometryError(
            f"window order {len(spec.window)} != tensor order {len(dims)}"
        )
    for w, n in zip(spec.window, dims):
        if w > n:
            raise GeometryError(f"pooling window {w} exceeds dimension {n}")
    return tuple(n - w + 1 for w, n in zip(spec.window, dims))


def _pool_data(data: np.ndarray, window: tuple[int, ...], kind: str) -> np.ndarray:
    # Accumulates window offsets in lexicographic order so results are
    # reproducible and identical with or without trailing passthrough axes.
    q = len(window)
    out_dims = tuple(n - w + 1 for n, w in zip(data.shape[:q], window))
    acc: Optional[np.ndarray] = None
    for off in np.ndindex(window):
        block = data[tuple(slice(o, o + n) for o, n in zip(off, out_dims))]
        if acc is None:
            acc = block.astype(float, copy=True)
        elif kind == "max":
            acc = np.maximum(acc, block)
        else:
            acc = acc + block
    assert acc is not None
    if kind == "average":
        acc = acc / math.prod(window)
    return acc


def _pool_backward_data(
    data: np.ndarray, window: tuple[int, ...], kind: str, upstream: np.ndarray
) -> np.ndarray:
    q = len(window)
    out_dims = tuple(n - w + 1 for n, w in zip(data.shape[:q], window))
    grad = np.zeros_like(data, dtype=float)
    if kind == "average":
        inv = 1.0 / math.prod(window)
        for off in np.ndindex(window):
            grad[tuple(slice(o, o + n) for o, n in zip(off, out_dims))] += (
                upstream * inv
            )
        return grad
    # max: route each upstream coordinate to the first (row-major) argmax of
    # its window, accumulating where windows overlap
    view = np.lib.stride_tricks.sliding_window_view(
        data, window, axis=tuple(range(q))
    )
    extra = data.shape[q:]
    flat = view.reshape(out_dims + extra + (math.prod(window),))
    best = np.argmax(flat, axis=-1)
    offs = np.unravel_index(best, window)
    base = np.indices(out_dims)
    pad = (1,) * len(extra)
    index = tuple(
        base[axis].reshape(out_dims + pad) + offs[axis] for axis in range(q)
    )
    if extra:
        egrid = np.indices(extra)
        index = index + tuple(
            egrid[axis].reshape((1,) * q + extra) for axis in range(len(extra))
        )
    np.add.at(grad, index, upstream)
    return grad


def pool(spec: PoolSpec, t: DenseTensor) -> DenseTensor:
    """Slide the window with stride 1 and reduce each sub-array (max or mean)."""
    pooled_dims(spec, t.dims)  # validates
    return DenseTensor._wrap(_pool_data(t.data, spec.window, spec.kind))


def pool_backward(spec: PoolSpec, t: DenseTensor, upstream: DenseTensor) -> DenseTensor:
    """Adjoint-style backward map of :func:`pool` at the point ``t``.

    Average pooling spreads each upstream coordinate uniformly over its
    window; max pooling routes it to the window's argmax position (first in
    lexicographic order on ties).  Overlapping windows accumulate.
    """
    expect = pooled_dims(spec, t.dims)
    if upstream.dims != expect:
        raise GeometryError(
            f"upstream dims {upstream.dims} != pooled dims {expect}"
        )
    return DenseTensor._wrap(
        _pool_backward_data(t.data, spec.window, spec.kind, upstream.data)
    )


# ---------------------------------------------------------------------------
# losses


class LossKind(str, Enum):
    MSE = "MSE"
    MAE = "MAE"
    LCH = "LCH"
    MSLE = "MSLE"
    POI = "POI"


def _check_domain(kind: LossKind, x: np.ndarray, y: np.ndarray) -> None:
    if kind == LossKind.MSLE:
        if (x <= -1.0).any() or (y <= -1.0).any():
            raise DomainError("MSLE requires every coordinate > -1")
    elif kind == LossKind.POI:
        if (y <= 0.0).any():
            raise DomainError("POI requires target coordinates > 0")


def _log_cosh(d: np.ndarray) -> np.ndarray:
    # log(cosh(d)) = |d| + log1p(exp(-2|d|)) - log(2), stable for large |d|
    a = np.abs(d)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _loss_value_data(kind: LossKind, x: np.ndarray, y: np.ndarray, m: int) -> float:
    _check_domain(kind, x, y)
    if kind == LossKind.MSE:
        d = x - y
        return float(np.sum(d * d)) / m
    if kind == LossKind.MAE:
        return float(np.sum(np.abs(x - y))) / m
    if kind == LossKind.LCH:
        return float(np.sum(_log_cosh(x - y))) / m
    if kind == LossKind.MSLE:
        d = np.log1p(x) - np.log1p(y)
        return float(np.sum(d * d)) / m
    if kind == LossKind.POI:
        return float(np.sum(x - x * np.log(y))) / m
    raise ValueError(f"unknown loss {kind!r}")


def _loss_grad_data(kind: LossKind, x: np.ndarray, y: np.ndarray, m: int) -> np.ndarray:
    _check_domain(kind, x, y)
    if kind == LossKind.MSE:
        return (2.0 / m) * (x - y)
    if kind == LossKind.MAE:
        return (1.0 / m) * np.sign(x - y)
    if kind == LossKind.LCH:
        return (1.0 / m) * np.tanh(x - y)
    if kind == LossKind.MSLE:
        return (2.0 / m) * (np.log1p(x) - np.log1p(y)) / (x + 1.0)
    if kind == LossKind.POI:
        return (1.0 / m) * (1.0 - np.log(y)) * np.ones_like(x)
    raise ValueError(f"unknown loss {kind!r}")


def loss(kind: LossKind, x: DenseTensor, y: DenseTensor) -> float:
    """Scalar loss between prediction ``x`` and target ``y``, averaged by the
    total dimension m of the output space."""
    x._check_dims(y)
    return _loss_value_data(kind, x.data, y.data, x.size)


def loss_gradient(kind: LossKind, x: DenseTensor, y: DenseTensor) -> DenseTensor:
    """Gradient of :func:`loss` with respect to the prediction ``x``."""
    x._check_dims(y)
    return DenseTensor._wrap(_loss_grad_data(kind, x.data, y.data, x.size))


def batch_loss(
    kind: LossKind,
    predictions: Sequence[DenseTensor],
    targets: Sequence[DenseTensor],
) -> float:
    """Mean of the loss over a batch of (prediction, target) pairs."""
    if len(predictions) != len(targets):
        raise DimensionMismatch(
            f"{len(predictions)} predictions vs {len(targets)} targets"
        )
    if not predictions:
        raise EmptyBatch("batch loss of an empty batch")
    total = 0.0
    for x, y in zip(predictions, targets):
        total += loss(kind, x, y)
    return total / len(predictions)


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class LayerConfig:
    """One convolution layer: filter, bias and activation, plus an optional
    pooling step applied to this layer's activated output before the next
    layer sees it."""

    filter_spec: FilterSpec
    bias: DenseTensor
    activation: ActivationKind
    pool: Optional[PoolSpec] = None


def layer_forward(cfg: LayerConfig, x: DenseTensor) -> tuple[DenseTensor, DenseTensor]:
    """Constituent layer map.

    Returns ``(pre_activation, output)`` where pre_activation is
    convolve(filter, x) + bias and output is the activated pre-activation.
    The pre-activation is returned because the backward pass needs it.
    """
    k = convolve(cfg.filter_spec, x) + cfg.bias
    return k, activate(cfg.activation, k)


def feature_map_forward(
    filters: Sequence[FilterSpec],
    biases: Sequence[DenseTensor],
    kind: ActivationKind,
    x: DenseTensor,
) -> DenseTensor:
    """Stack per-filter activated outputs along a new trailing order.

    All filters must produce the same output geometry; slice ``a`` of the
    result along the new order equals the single-filter layer output for
    filter ``a``.
    """
    if len(filters) != len(biases):
        raise DimensionMismatch(f"{len(filters)} filters vs {len(biases)} biases")
    if not filters:
        raise EmptyBatch("feature map stack needs at least one filter")
    slices = []
    for spec, bias in zip(filters, biases):
        z = activate(kind, convolve(spec, x) + bias)
        if slices and z.dims != slices[0].shape:
            raise GeometryError(
                f"feature maps disagree on output dims: {z.dims} vs {slices[0].shape}"
            )
        slices.append(z.data)
    return DenseTensor._wrap(np.stack(slices, axis=-1))


@dataclass(frozen=True)
class NetworkConfig:
    """Layer chain with a fixed input geometry.

    Construction validates the whole chain: each layer's filter must fit its
    input, the bias must have the convolution output dims, pooling windows
    must fit, and pooling is not allowed after the last layer (the network
    output is the last activated value).
    """

    input_dims: tuple[int, ...]
    layers: tuple[LayerConfig, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_dims", tuple(int(n) for n in self.input_dims))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise GeometryError("a network needs at least one layer")
        self._chain()

    def _chain(self) -> tuple[list[ConvGeometry], list[tuple[int, ...]], tuple[int, ...]]:
        geoms: list[ConvGeometry] = []
        feeds: list[tuple[int, ...]] = []  # dims entering each layer's convolution
        dims = self.input_dims
        last = len(self.layers)
        for num, layer in enumerate(self.layers, 1):
            feeds.append(dims)
            try:
                geom = conv_geometry(layer.filter_spec, dims)
            except GeometryError as exc:
                raise GeometryError(f"layer {num}: {exc}") from None
            if layer.bias.dims != geom.output_dims:
                raise GeometryError(
                    f"layer {num}: bias dims {layer.bias.dims} != "
                    f"output dims {geom.output_dims}"
                )
            dims = geom.output_dims
            if layer.pool is not None:
                if num == last:
                    raise GeometryError(
                        "pooling after the last layer is not supported"
                    )
                try:
                    dims = pooled_dims(layer.pool, dims)
                except GeometryError as exc:
                    raise GeometryError(f"layer {num}: {exc}") from None
            geoms.append(geom)
        return geoms, feeds, dims

    def geometries(self) -> list[ConvGeometry]:
        return self._chain()[0]

    def layer_input_dims(self) -> list[tuple[int, ...]]:
        """Dims of the tensor entering each layer's convolution (pre-padding)."""
        return self._chain()[1]

    @property
    def output_dims(self) -> tuple[int, ...]:
        return self._chain()[2]

    @property
    def layer_count(self) -> int:
        return len(self.layers)
