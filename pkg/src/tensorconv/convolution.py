"""Convolution as contraction with a materialized sparse filter operator.

A filter array of order r is lowered ("compounded") into a sparse order-2r
operator: the leading r orders index output positions, the trailing r orders
index (padded) input positions, and entry ((1+i), (j + s*i)) holds filter
coefficient j.  Convolving a tensor is then a single r-order inner product
with this operator, which for r = 1, k = 2 is the familiar banded Toeplitz
matrix acting on a vector.

The same index pattern with unit values is the (constant) gradient of the
lowering map with respect to the filter coefficients; backpropagation uses it
to turn deltas into filter gradients.  Patterns depend only on geometry and
are cached; values are refreshed from the current filter on every call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import GeometryError
from .tensor import DenseTensor, SparseTensor, inner_product

__all__ = [
    "VALID",
    "ZERO",
    "FilterSpec",
    "ConvGeometry",
    "output_dims",
    "conv_geometry",
    "zero_pad",
    "compounded_filter",
    "convolve",
    "filter_gradient",
]

VALID = "valid"
ZERO = "zero"
_PADDINGS = (VALID, ZERO)

Dims = Union[int, Iterable[int]]


def _dims_arg(value: Dims) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class FilterSpec:
    """Filter coefficients plus stride and padding policy.

    ``strides`` gives one positive step per order.  ``padding`` is either
    "valid" (no padding) or "zero" (the input is embedded in a zero tensor
    sized so the strided convolution output has the input's dims).
    """

    filter: DenseTensor
    strides: tuple[int, ...]
    padding: str = VALID

    def __post_init__(self) -> None:
        object.__setattr__(self, "strides", _dims_arg(self.strides))
        if self.filter.order == 0:
            raise GeometryError("filter must have order >= 1")
        if len(self.strides) != self.filter.order:
            raise GeometryError(
                f"{len(self.strides)} strides for an order-{self.filter.order} filter"
            )
        if any(s < 1 for s in self.strides):
            raise GeometryError(f"strides must be positive, got {self.strides}")
        if self.padding not in _PADDINGS:
            raise GeometryError(f"unknown padding {self.padding!r}")

    @property
    def kernel_dims(self) -> tuple[int, ...]:
        return self.filter.dims

    @property
    def order(self) -> int:
        return self.filter.order


@dataclass(frozen=True)
class ConvGeometry:
    """Resolved shapes of one convolution: input, padded, offsets, output."""

    input_dims: tuple[int, ...]
    padded_dims: tuple[int, ...]
    offsets: tuple[int, ...]
    output_dims: tuple[int, ...]


def output_dims(input_dims: Dims, kernel_dims: Dims, strides: Dims) -> tuple[int, ...]:
    """Window count per order: floor((n - k) / s) + 1."""
    n = _dims_arg(input_dims)
    k = _dims_arg(kernel_dims)
    s = _dims_arg(strides)
    if not len(n) == len(k) == len(s):
        raise GeometryError(
            f"orders disagree: dims {n}, kernel {k}, strides {s}"
        )
    out = []
    for ni, ki, si in zip(n, k, s):
        if ki < 1 or si < 1:
            raise GeometryError(
                f"kernel dims and strides must be positive, got k={ki}, s={si}"
            )
        if ki > ni:
            raise GeometryError(f"kernel dim {ki} exceeds input dim {ni}")
        out.append((ni - ki) // si + 1)
    return tuple(out)


def _check_stride_bound(n: tuple[int, ...], k: tuple[int, ...], s: tuple[int, ...]) -> None:
    # s <= n - k per order; a full-width kernel (k = n) slides once with s = 1.
    for ni, ki, si in zip(n, k, s):
        if ki == ni:
            if si != 1:
                raise GeometryError(
                    f"full-width kernel (k = n = {ni}) requires stride 1, got {si}"
                )
        elif si > ni - ki:
            raise GeometryError(
                f"stride {si} exceeds n - k = {ni - ki}"
            )


def conv_geometry(spec: FilterSpec, input_dims: Dims) -> ConvGeometry:
    """Validate a filter against an input and resolve all shapes."""
    n = _dims_arg(input_dims)
    k = spec.kernel_dims
    s = spec.strides
    if len(n) != spec.order:
        raise GeometryError(
            f"order-{spec.order} filter applied to order-{len(n)} input"
        )
    for ni, ki in zip(n, k):
        if ki > ni:
            raise GeometryError(f"kernel dim {ki} exceeds input dim {ni}")
    if spec.padding == VALID:
        _check_stride_bound(n, k, s)
        return ConvGeometry(n, n, (0,) * len(n), output_dims(n, k, s))
    padded = tuple((ni - 1) * si + ki for ni, ki, si in zip(n, k, s))
    offsets = tuple(-((ni - pi) // 2) for ni, pi in zip(n, padded))  # ceil((p-n)/2)
    _check_stride_bound(padded, k, s)
    out = output_dims(padded, k, s)  # equals n by construction
    return ConvGeometry(n, padded, offsets, out)


def _embed(data: np.ndarray, geom: ConvGeometry) -> np.ndarray:
    """Embed an array at the geometry's offsets; trailing axes pass through."""
    if geom.padded_dims == geom.input_dims:
        return data
    q = len(geom.input_dims)
    out = np.zeros(geom.padded_dims + data.shape[q:])
    out[tuple(slice(g, g + n) for g, n in zip(geom.offsets, geom.input_dims))] = data
    return out


def _crop(data: np.ndarray, geom: ConvGeometry) -> np.ndarray:
    """Adjoint of :func:`_embed`: restrict to the embedded region."""
    if geom.padded_dims == geom.input_dims:
        return data
    return data[tuple(slice(g, g + n) for g, n in zip(geom.offsets, geom.input_dims))]


def zero_pad(t: DenseTensor, spec: FilterSpec) -> DenseTensor:
    """Embed ``t`` at the centered offset g = ceil((n* - n) / 2) inside a zero
    tensor of dims n* = (n - 1) s + k, so that a following strided convolution
    yields output dims equal to the input dims."""
    geom = conv_geometry(spec, t.dims)
    if spec.padding == VALID:
        return t
    return DenseTensor._wrap(_embed(t.data, geom))


@lru_cache(maxsize=None)
def _compounded_pattern(in_dims, k_dims, strides):
    out = output_dims(in_dims, k_dims, strides)
    q = len(in_dims)
    n_out = math.prod(out)
    n_ker = math.prod(k_dims)
    i_grid = np.indices(out).reshape(q, n_out)
    j_grid = np.indices(k_dims).reshape(q, n_ker)
    s = np.asarray(strides, dtype=np.intp)
    lead = np.broadcast_to((i_grid + 1)[:, :, None], (q, n_out, n_ker))
    trail = (j_grid + 1)[:, None, :] + s[:, None, None] * i_grid[:, :, None]
    idx = np.concatenate([lead, trail], axis=0).reshape(2 * q, n_out * n_ker).T
    idx = np.ascontiguousarray(idx, dtype=np.intp)
    idx.flags.writeable = False
    coeff = np.tile(np.arange(n_ker), n_out)  # flat filter index per entry
    coeff.flags.writeable = False
    return out + in_dims, idx, coeff


def compounded_filter(spec: FilterSpec, input_dims: Dims) -> SparseTensor:
    """Sparse order-2r operator equivalent to convolving with the filter.

    ``input_dims`` are the dims of the tensor the convolution is applied to,
    before any padding; with zero padding the operator acts on the padded
    space, so its dims are (input_dims, padded_dims).  Every output-position/
    coefficient pair stores one entry, so nnz = prod(output) * prod(kernel)
    regardless of the coefficient values.
    """
    geom = conv_geometry(spec, input_dims)
    dims, idx, coeff = _compounded_pattern(
        geom.padded_dims, spec.kernel_dims, spec.strides
    )
    values = spec.filter.data.ravel()[coeff]
    return SparseTensor._trusted(dims, idx, values)


@lru_cache(maxsize=None)
def _gradient_pattern(in_dims, k_dims, strides):
    out = output_dims(in_dims, k_dims, strides)
    q = len(in_dims)
    n_out = math.prod(out)
    n_ker = math.prod(k_dims)
    t_grid = np.indices(k_dims).reshape(q, n_ker)
    i_grid = np.indices(out).reshape(q, n_out)
    s = np.asarray(strides, dtype=np.intp)
    lead = np.broadcast_to((t_grid + 1)[:, :, None], (q, n_ker, n_out))
    mid = np.broadcast_to((i_grid + 1)[:, None, :], (q, n_ker, n_out))
    trail = (t_grid + 1)[:, :, None] + s[:, None, None] * i_grid[:, None, :]
    idx = np.concatenate([lead, mid, trail], axis=0).reshape(3 * q, n_ker * n_out).T
    idx = np.ascontiguousarray(idx, dtype=np.intp)
    idx.flags.writeable = False
    return k_dims + out + in_dims, idx


def filter_gradient(spec: FilterSpec, input_dims: Dims) -> SparseTensor:
    """Constant gradient of the filter-lowering map.

    Order-3r unit-valued pattern with dims (kernel, output, padded input):
    entry (t, 1+i, t + s*i) = 1 records that coefficient t is read at input
    position t + s*i when producing output position 1+i.  Contracting the
    leading block against a filter array reproduces the compounded filter;
    contracting the trailing blocks against an input tensor and a delta
    yields the filter gradient of the loss.
    """
    geom = conv_geometry(spec, input_dims)
    dims, idx = _gradient_pattern(geom.padded_dims, spec.kernel_dims, spec.strides)
    return SparseTensor._trusted(dims, idx, np.ones(len(idx)))


def convolve(spec: FilterSpec, t: DenseTensor) -> DenseTensor:
    """Convolve the filter over ``t``: pad when the spec says so, then take
    the r-order inner product with the compounded filter."""
    geom = conv_geometry(spec, t.dims)
    w = compounded_filter(spec, t.dims)
    x = DenseTensor._wrap(_embed(t.data, geom))
    return inner_product(w, x, spec.order)
