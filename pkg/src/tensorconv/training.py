"""Backward pass, gradients, optimizer step, and the batch training loop.

Per-sample and batch-mode computation share one arithmetic path: the forward
and backward engines work on raw arrays with an optional trailing sample
axis, so slice j of every batch tensor is bitwise identical to the
corresponding per-sample run.

The training loop is full-batch: one iteration is one epoch.  Each epoch runs
the batched forward pass, evaluates the validation batch loss, checks the
stopping tolerance against the previous epoch, and, while the tolerance is
not met, backpropagates deltas and applies a gradient-descent update to every
layer's filter and bias.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .convolution import (
    ConvGeometry,
    FilterSpec,
    _crop,
    _embed,
    _gradient_pattern,
    compounded_filter,
    conv_geometry,
    output_dims,
)
from .errors import DimensionMismatch, EmptyBatch, GeometryError
from .network import (
    ActivationKind,
    LayerConfig,
    LossKind,
    NetworkConfig,
    PoolSpec,
    _activation_slope,
    _activation_value,
    _loss_grad_data,
    _pool_backward_data,
    _pool_data,
    batch_loss,
)
from .tensor import DenseTensor, SparseTensor, inner_product

__all__ = [
    "TrainConfig",
    "ForwardTrace",
    "BatchedTrace",
    "EpochRecord",
    "TrainResult",
    "forward_pass",
    "batched_forward",
    "delta_output",
    "delta_backward",
    "grad_filter",
    "grad_bias",
    "sgd_step",
    "batch_gather",
    "batch_gradients",
    "initialize_network",
    "train",
]

_INIT_KINDS = ("uniform", "zeros", "keep")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``init`` selects how parameters are initialized before epoch 1:
    "uniform" draws filters from [-init_scale, init_scale] with a seeded
    generator and zeroes biases, "zeros" zeroes everything, "keep" trains
    from the parameter values already stored in the network.
    """

    loss: LossKind
    learning_rate: float
    tolerance: float
    max_epochs: int
    init: str = "uniform"
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_epochs < 1:
            raise ValueError(f"max epochs must be >= 1, got {self.max_epochs}")
        if self.init not in _INIT_KINDS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.init_scale < 0:
            raise ValueError(f"init scale must be >= 0, got {self.init_scale}")


@dataclass
class ForwardTrace:
    """Per-layer tensors captured by a forward pass.

    conv_inputs[l] is the tensor entering layer l's convolution (the previous
    layer's pooled output; conv_inputs[0] is the network input).
    padded_inputs[l] is the same tensor after zero padding, identical when
    the layer's padding is "valid".  outputs[l] is the activated value before
    any pooling, so outputs[-1] is the network prediction.
    """

    input: DenseTensor
    conv_inputs: list[DenseTensor]
    padded_inputs: list[DenseTensor]
    pre_activations: list[DenseTensor]
    outputs: list[DenseTensor]

    @property
    def prediction(self) -> DenseTensor:
        return self.outputs[-1]


@dataclass
class BatchedTrace:
    """Batch-mode forward tensors; every field carries a trailing sample
    order of size p, and slice j along it equals the per-sample trace."""

    input: DenseTensor
    conv_inputs: list[DenseTensor]
    padded_inputs: list[DenseTensor]
    pre_activations: list[DenseTensor]
    outputs: list[DenseTensor]

    @property
    def sample_count(self) -> int:
        return self.input.dims[-1]

    @property
    def predictions(self) -> DenseTensor:
        return self.outputs[-1]


def _apply_operator(w: SparseTensor, arr: np.ndarray, r: int) -> np.ndarray:
    return inner_product(w, DenseTensor._wrap(arr), r).data


def _forward_arrays(net: NetworkConfig, x: np.ndarray, extra: int):
    conv_inputs, padded_inputs, pre_acts, outputs = [], [], [], []
    cur = x
    for layer in net.layers:
        in_dims = cur.shape[: cur.ndim - extra]
        geom = conv_geometry(layer.filter_spec, in_dims)
        w = compounded_filter(layer.filter_spec, in_dims)
        conv_inputs.append(cur)
        px = _embed(cur, geom)
        padded_inputs.append(px)
        k = _apply_operator(w, px, layer.filter_spec.order)
        k = k + layer.bias.data.reshape(layer.bias.dims + (1,) * extra)
        z = _activation_value(layer.activation, k)
        pre_acts.append(k)
        outputs.append(z)
        if layer.pool is not None:
            cur = _pool_data(z, layer.pool.window, layer.pool.kind)
        else:
            cur = z
    return conv_inputs, padded_inputs, pre_acts, outputs


def forward_pass(net: NetworkConfig, input: DenseTensor) -> ForwardTrace:
    """Run the layer chain, recording everything backpropagation needs."""
    if input.dims != net.input_dims:
        raise GeometryError(
            f"input dims {input.dims} != network input dims {net.input_dims}"
        )
    ci, pi, ka, za = _forward_arrays(net, input.data, extra=0)
    wrap = DenseTensor._wrap
    return ForwardTrace(
        input,
        [wrap(a) for a in ci],
        [wrap(a) for a in pi],
        [wrap(a) for a in ka],
        [wrap(a) for a in za],
    )


def batched_forward(net: NetworkConfig, batch: DenseTensor) -> BatchedTrace:
    """Forward pass over a gathered batch (trailing order = sample index)."""
    if batch.order != len(net.input_dims) + 1 or batch.dims[:-1] != net.input_dims:
        raise GeometryError(
            f"batch dims {batch.dims} do not extend network input dims "
            f"{net.input_dims} by a sample order"
        )
    ci, pi, ka, za = _forward_arrays(net, batch.data, extra=1)
    wrap = DenseTensor._wrap
    return BatchedTrace(
        batch,
        [wrap(a) for a in ci],
        [wrap(a) for a in pi],
        [wrap(a) for a in ka],
        [wrap(a) for a in za],
    )


# ---------------------------------------------------------------------------
# deltas


def delta_output(
    net: NetworkConfig,
    trace: ForwardTrace,
    target: DenseTensor,
    loss_kind: LossKind,
) -> DenseTensor:
    """Output-layer delta: activation slope times the loss gradient, both at
    the traced pre-activation."""
    z = trace.prediction
    if target.dims != z.dims:
        raise DimensionMismatch(
            f"target dims {target.dims} != prediction dims {z.dims}"
        )
    g = _loss_grad_data(loss_kind, z.data, target.data, z.size)
    slope = _activation_slope(net.layers[-1].activation, trace.pre_activations[-1].data)
    return DenseTensor._wrap(slope * g)


def _delta_step(
    delta_next: np.ndarray,
    w_next: SparseTensor,
    q: int,
    geom_next: Optional[ConvGeometry],
    pool_spec: Optional[PoolSpec],
    pool_input: Optional[np.ndarray],
    kind: ActivationKind,
    k_curr: np.ndarray,
) -> np.ndarray:
    upstream = _apply_operator(w_next.block_transpose(q), delta_next, q)
    if geom_next is not None:
        upstream = _crop(upstream, geom_next)
    if pool_spec is not None:
        upstream = _pool_backward_data(
            pool_input, pool_spec.window, pool_spec.kind, upstream
        )
    return _activation_slope(kind, k_curr) * upstream


def delta_backward(
    delta_next: DenseTensor,
    w_next: SparseTensor,
    k_curr: DenseTensor,
    kind: ActivationKind,
    *,
    next_geometry: Optional[ConvGeometry] = None,
    pool: Optional[PoolSpec] = None,
    pool_input: Optional[DenseTensor] = None,
) -> DenseTensor:
    """One step of the delta recursion.

    Contracts ``delta_next`` against the leading half of ``w_next`` (the next
    layer's compounded filter), undoes that layer's zero padding when
    ``next_geometry`` recorded one, routes the result through the pooling
    backward map when the current layer pooled its output (``pool`` plus the
    pre-pooling tensor ``pool_input``), and finally multiplies coordinate-wise
    by the activation slope at ``k_curr``.
    """
    q = w_next.order // 2
    if pool is not None and pool_input is None:
        raise ValueError("pool_input is required when pool is given")
    return DenseTensor._wrap(
        _delta_step(
            delta_next.data,
            w_next,
            q,
            next_geometry,
            pool,
            None if pool_input is None else pool_input.data,
            kind,
            k_curr.data,
        )
    )


def _backward_deltas(
    net: NetworkConfig,
    pre_acts: Sequence[np.ndarray],
    outputs: Sequence[np.ndarray],
    targets: np.ndarray,
    loss_kind: LossKind,
    geoms: Sequence[ConvGeometry],
) -> list[np.ndarray]:
    """Deltas for every layer, last to first, on raw (possibly batched) arrays."""
    k = len(net.layers)
    m = int(np.prod(net.output_dims))
    g = _loss_grad_data(loss_kind, outputs[-1], targets, m)
    deltas: list[Optional[np.ndarray]] = [None] * k
    deltas[-1] = _activation_slope(net.layers[-1].activation, pre_acts[-1]) * g
    for r in range(k - 1, 0, -1):
        layer_next = net.layers[r]
        layer_curr = net.layers[r - 1]
        w = compounded_filter(layer_next.filter_spec, geoms[r].input_dims)
        deltas[r - 1] = _delta_step(
            deltas[r],
            w,
            layer_next.filter_spec.order,
            geoms[r],
            layer_curr.pool,
            outputs[r - 1] if layer_curr.pool is not None else None,
            layer_curr.activation,
            pre_acts[r - 1],
        )
    return deltas  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# parameter gradients and updates


def grad_filter(
    trace_inputs: Sequence[DenseTensor],
    deltas: Sequence[DenseTensor],
    spec: FilterSpec,
) -> DenseTensor:
    """Mean gradient of the batch loss with respect to the filter entries.

    ``trace_inputs`` must be the tensors the compounded filter was contracted
    against (already padded when the spec pads); ``deltas`` are the matching
    per-sample deltas of the layer.  Coordinate t of the result is the mean
    over samples of sum_i delta[1+i] * input[t + s*i], computed by contracting
    through the constant :func:`filter_gradient` pattern.
    """
    if len(trace_inputs) != len(deltas):
        raise DimensionMismatch(
            f"{len(trace_inputs)} inputs vs {len(deltas)} deltas"
        )
    if not trace_inputs:
        raise EmptyBatch("gradient of an empty batch")
    in_dims = trace_inputs[0].dims
    out = output_dims(in_dims, spec.kernel_dims, spec.strides)
    dims, idx = _gradient_pattern(in_dims, spec.kernel_dims, spec.strides)
    grad_op = SparseTensor._trusted(dims, idx, np.ones(len(idx)))
    q = spec.order
    acc = np.zeros(spec.kernel_dims)
    for z, d in zip(trace_inputs, deltas):
        if z.dims != in_dims:
            raise DimensionMismatch(f"input dims {z.dims} != {in_dims}")
        if d.dims != out:
            raise DimensionMismatch(f"delta dims {d.dims} != {out}")
        per_coeff = _apply_operator(grad_op, z.data, q)  # (kernel, output)
        acc = acc + np.tensordot(per_coeff, d.data, axes=q)
    return DenseTensor._wrap(acc / len(trace_inputs))


def grad_bias(deltas: Sequence[DenseTensor]) -> DenseTensor:
    """Coordinate-wise mean of the per-sample deltas."""
    if not deltas:
        raise EmptyBatch("gradient of an empty batch")
    dims = deltas[0].dims
    acc = np.zeros(dims)
    for d in deltas:
        if d.dims != dims:
            raise DimensionMismatch(f"delta dims {d.dims} != {dims}")
        acc = acc + d.data
    return DenseTensor._wrap(acc / len(deltas))


def sgd_step(param: DenseTensor, grad: DenseTensor, learning_rate: float) -> DenseTensor:
    """One gradient-descent update: param - learning_rate * grad."""
    param._check_dims(grad)
    return DenseTensor._wrap(param.data - learning_rate * grad.data)


def batch_gather(samples: Sequence[DenseTensor]) -> DenseTensor:
    """Stack equal-shaped tensors along a new trailing sample order, so that
    slice j along that order is sample j."""
    if not samples:
        raise EmptyBatch("cannot gather an empty batch")
    dims = samples[0].dims
    for s in samples:
        if s.dims != dims:
            raise DimensionMismatch(f"sample dims {s.dims} != {dims}")
    return DenseTensor._wrap(np.stack([s.data for s in samples], axis=-1))


def _slice_samples(arr: np.ndarray, p: int) -> list[DenseTensor]:
    return [DenseTensor._wrap(arr[..., j]) for j in range(p)]


def batch_gradients(
    net: NetworkConfig,
    samples: Sequence[tuple[DenseTensor, DenseTensor]],
    loss_kind: LossKind,
) -> list[tuple[DenseTensor, DenseTensor]]:
    """(filter gradient, bias gradient) of the batch loss for every layer.

    ``samples`` is a list of (input, target) pairs; the whole list is one
    batch.
    """
    if not samples:
        raise EmptyBatch("gradients of an empty batch")
    inputs = batch_gather([x for x, _ in samples])
    targets = batch_gather([y for _, y in samples])
    trace = batched_forward(net, inputs)
    geoms = net.geometries()
    deltas = _backward_deltas(
        net,
        [k.data for k in trace.pre_activations],
        [z.data for z in trace.outputs],
        targets.data,
        loss_kind,
        geoms,
    )
    p = len(samples)
    grads = []
    for layer, padded, delta in zip(net.layers, trace.padded_inputs, deltas):
        gf = grad_filter(
            _slice_samples(padded.data, p), _slice_samples(delta, p), layer.filter_spec
        )
        gb = grad_bias(_slice_samples(delta, p))
        grads.append((gf, gb))
    return grads


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochRecord:
    """One epoch: its index, the validation batch loss, and whether the
    stopping tolerance was satisfied at this epoch."""

    epoch: int
    validation_loss: float
    tolerance_met: bool


@dataclass
class TrainResult:
    net: NetworkConfig
    records: list[EpochRecord]
    stop_reason: str  # "tolerance" or "max_epochs"


def initialize_network(
    net: NetworkConfig,
    init: str = "uniform",
    scale: float = 0.5,
    rng: Optional[np.random.Generator] = None,
) -> NetworkConfig:
    """Network with freshly initialized parameters.

    "uniform" draws each filter from [-scale, scale] (layer by layer, from
    ``rng``) and zeroes biases; "zeros" zeroes everything; "keep" returns the
    network unchanged.
    """
    if init not in _INIT_KINDS:
        raise ValueError(f"unknown init {init!r}")
    if init == "keep":
        return net
    if init == "uniform" and rng is None:
        rng = np.random.default_rng(0)
    layers = []
    for layer, bias_dims in zip(net.layers, _bias_dims(net)):
        if init == "uniform":
            f = rng.uniform(-scale, scale, size=layer.filter_spec.kernel_dims)
        else:
            f = np.zeros(layer.filter_spec.kernel_dims)
        layers.append(
            replace(
                layer,
                filter_spec=replace(layer.filter_spec, filter=DenseTensor(f)),
                bias=DenseTensor.zeros(bias_dims),
            )
        )
    return replace(net, layers=tuple(layers))


def _bias_dims(net: NetworkConfig) -> list[tuple[int, ...]]:
    return [g.output_dims for g in net.geometries()]


def _with_params(
    net: NetworkConfig, params: Sequence[tuple[DenseTensor, DenseTensor]]
) -> NetworkConfig:
    layers = tuple(
        replace(layer, filter_spec=replace(layer.filter_spec, filter=f), bias=b)
        for layer, (f, b) in zip(net.layers, params)
    )
    return replace(net, layers=layers)


def train(
    net: NetworkConfig,
    train_set: Sequence[tuple[DenseTensor, DenseTensor]],
    validation_set: Sequence[tuple[DenseTensor, DenseTensor]],
    cfg: TrainConfig,
) -> TrainResult:
    """Batch-mode backpropagation with validation-based stopping.

    Runs epochs while |theta_e - theta_(e-1)| > tolerance and the epoch count
    has not passed max_epochs, where theta_e is the validation batch loss.
    The comparison value before epoch 1 is the largest float, so the first
    epoch only stops for an enormous tolerance.  When an epoch meets the
    tolerance its backward pass is skipped.  Deterministic for a fixed seed.
    """
    if not train_set or not validation_set:
        raise EmptyBatch("training needs non-empty train and validation sets")
    for x, y in list(train_set) + list(validation_set):
        if x.dims != net.input_dims:
            raise GeometryError(
                f"sample input dims {x.dims} != network input dims {net.input_dims}"
            )
        if y.dims != net.output_dims:
            raise GeometryError(
                f"sample target dims {y.dims} != network output dims {net.output_dims}"
            )
    rng = np.random.default_rng(cfg.seed)
    work = initialize_network(net, cfg.init, cfg.init_scale, rng)
    geoms = work.geometries()
    x_train = batch_gather([x for x, _ in train_set])
    y_train = batch_gather([y for _, y in train_set])
    x_val = batch_gather([x for x, _ in validation_set])
    val_targets = [y for _, y in validation_set]
    p = len(train_set)
    p_val = len(validation_set)
    gamma = cfg.learning_rate
    max_float = float(np.finfo(np.float64).max)

    records: list[EpochRecord] = []
    c = max_float
    theta_prev = max_float
    epoch = 1
    while c > cfg.tolerance and epoch <= cfg.max_epochs:
        trace = batched_forward(work, x_train)
        val_trace = batched_forward(work, x_val)
        theta = batch_loss(
            cfg.loss, _slice_samples(val_trace.predictions.data, p_val), val_targets
        )
        c = abs(theta - theta_prev)
        if c >= cfg.tolerance:
            deltas = _backward_deltas(
                work,
                [k.data for k in trace.pre_activations],
                [z.data for z in trace.outputs],
                y_train.data,
                cfg.loss,
                geoms,
            )
            params = []
            for layer, padded, delta in zip(work.layers, trace.padded_inputs, deltas):
                gf = grad_filter(
                    _slice_samples(padded.data, p),
                    _slice_samples(delta, p),
                    layer.filter_spec,
                )
                gb = grad_bias(_slice_samples(delta, p))
                params.append(
                    (
                        sgd_step(layer.filter_spec.filter, gf, gamma),
                        sgd_step(layer.bias, gb, gamma),
                    )
                )
            work = _with_params(work, params)
        records.append(EpochRecord(epoch, theta, c <= cfg.tolerance))
        theta_prev = theta
        epoch += 1
    reason = "tolerance" if c <= cfg.tolerance else "max_epochs"
    return TrainResult(work, records, reason)
