"""Dense and sparse coordinate-level tensors and their algebra.

A tensor here is a finite multiway array of float64 coordinates over an
implicit orthonormal basis, so every operation is defined directly on
coordinates.  The workhorse is :func:`inner_product`, which contracts the
trailing ``r`` orders of its left operand against the leading ``r`` orders of
its right operand; convolution and backpropagation elsewhere in the library
are built entirely on top of it.

Index semantics are 1-based wherever indices are part of the public surface
(sparse entries, sub-array ranges, the diagonal of an identity tensor).  The
row-major storage offset underneath is an implementation detail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, OrderError, RangeError

__all__ = [
    "DenseTensor",
    "SparseTensor",
    "IndexRange",
    "tensor_product",
    "inner_product",
    "identity_tensor",
    "subarray",
    "add",
    "sub",
    "scale",
    "frobenius_norm",
]


def _as_dims(dims: Iterable[int]) -> tuple[int, ...]:
    out = tuple(int(n) for n in dims)
    if any(n < 1 for n in out):
        raise ValueError(f"dimensions must be positive, got {out}")
    return out


class DenseTensor:
    """Order-``q`` real tensor: a dimension tuple plus a row-major array.

    ``dims`` may be empty, in which case the tensor is an order-0 scalar
    holding one coordinate.  Instances are immutable: ``data`` is read-only
    and every operation returns a new tensor.
    """

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=float)
        arr.flags.writeable = False
        self.data: np.ndarray = arr

    @classmethod
    def zeros(cls, dims: Iterable[int]) -> "DenseTensor":
        return cls._wrap(np.zeros(_as_dims(dims)))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "DenseTensor":
        # Internal fast path: adopt a freshly computed array without copying.
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=float)
        if not arr.flags.c_contiguous:  # ascontiguousarray would 1-d-ify 0-d
            arr = np.ascontiguousarray(arr)
        if arr.flags.writeable:
            arr.flags.writeable = False
        t.data = arr
        return t

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def at(self, *indices: int) -> float:
        """Coordinate at a 1-based index tuple."""
        if len(indices) != self.order:
            raise IndexError(
                f"expected {self.order} indices, got {len(indices)}"
            )
        for ix, n in zip(indices, self.dims):
            if not 1 <= ix <= n:
                raise IndexError(f"index {ix} outside 1..{n}")
        return float(self.data[tuple(ix - 1 for ix in indices)])

    def item(self) -> float:
        """The single coordinate of a scalar (order-0 or one-element) tensor."""
        if self.size != 1:
            raise ValueError(f"tensor with dims {self.dims} is not a scalar")
        return float(self.data.ravel()[0])

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    def _check_dims(self, other: "DenseTensor") -> None:
        if self.dims != other.dims:
            raise DimensionMismatch(
                f"dims disagree: {self.dims} vs {other.dims}"
            )

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        self._check_dims(other)
        return DenseTensor._wrap(self.data + other.data)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        self._check_dims(other)
        return DenseTensor._wrap(self.data - other.data)

    def __mul__(self, alpha: float) -> "DenseTensor":
        return DenseTensor._wrap(self.data * float(alpha))

    __rmul__ = __mul__

    def __neg__(self) -> "DenseTensor":
        return DenseTensor._wrap(-self.data)

    def __repr__(self) -> str:
        if self.size <= 8:
            return f"DenseTensor({self.data.tolist()!r})"
        return f"DenseTensor(dims={self.dims!r})"


def add(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    return a + b


def sub(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    return a - b


def scale(alpha: float, t: DenseTensor) -> DenseTensor:
    return t * alpha


def frobenius_norm(t: DenseTensor) -> float:
    return t.frobenius_norm()


@dataclass(frozen=True)
class IndexRange:
    """Closed 1-based index interval ``lo..hi`` along a single order."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not 1 <= self.lo <= self.hi:
            raise RangeError(f"invalid index range {self.lo}:{self.hi}")

    def __len__(self) -> int:
        return self.hi - self.lo + 1


def subarray(t: DenseTensor, ranges: Sequence) -> DenseTensor:
    """Contiguous sub-array of ``t``: one 1-based inclusive range per order.

    Ranges may be :class:`IndexRange` instances or plain ``(lo, hi)`` pairs.
    """
    norm = [r if isinstance(r, IndexRange) else IndexRange(*r) for r in ranges]
    if len(norm) != t.order:
        raise RangeError(
            f"expected {t.order} ranges for an order-{t.order} tensor, got {len(norm)}"
        )
    for r, n in zip(norm, t.dims):
        if r.hi > n:
            raise RangeError(f"range {r.lo}:{r.hi} exceeds dimension {n}")
    window = tuple(slice(r.lo - 1, r.hi) for r in norm)
    return DenseTensor._wrap(t.data[window].copy())


def tensor_product(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    """Tensor (outer) product; the result order is order(a) + order(b)."""
    return DenseTensor._wrap(np.multiply.outer(a.data, b.data))


class SparseTensor:
    """Coordinate-list tensor: (1-based index tuple, value) entries.

    Entries are kept sorted lexicographically by index tuple with no
    duplicates, so any accumulation over entries is deterministic.  Values
    are normally nonzero; structural patterns built by the convolution
    module (a compounded filter whose current coefficient happens to be
    zero) may carry explicit zeros so the pattern is independent of the
    values it is refreshed with.  :meth:`sparsify` always drops exact zeros.
    """

    __slots__ = ("_dims", "_indices", "_values")

    def __init__(self, dims: Iterable[int], entries: Iterable) -> None:
        dims = _as_dims(dims)
        if not dims:
            raise ValueError("a sparse tensor needs order >= 1")
        entries = list(entries)
        q = len(dims)
        idx = np.zeros((len(entries), q), dtype=np.intp)
        vals = np.zeros(len(entries))
        for e, (index, value) in enumerate(entries):
            index = tuple(int(i) for i in index)
            if len(index) != q:
                raise DimensionMismatch(
                    f"index tuple {index} has length {len(index)}, expected {q}"
                )
            idx[e] = index
            vals[e] = float(value)
        self._init_checked(dims, idx, vals)

    def _init_checked(self, dims, idx, vals) -> None:
        if len(idx) and ((idx < 1).any() or (idx > np.asarray(dims)).any()):
            bad = idx[((idx < 1) | (idx > np.asarray(dims))).any(axis=1)][0]
            raise RangeError(f"index tuple {tuple(bad)} outside dims {dims}")
        if len(idx):
            order = np.lexsort(idx.T[::-1])
            idx = idx[order]
            vals = vals[order]
            if len(idx) > 1 and (np.diff(idx, axis=0) == 0).all(axis=1).any():
                dup = idx[1:][(np.diff(idx, axis=0) == 0).all(axis=1)][0]
                raise ValueError(f"duplicate index tuple {tuple(dup)}")
        self._dims = dims
        self._indices = idx
        self._values = vals

    @classmethod
    def _trusted(cls, dims, indices, values) -> "SparseTensor":
        # Internal: indices already lexicographically sorted, in range, unique.
        t = cls.__new__(cls)
        t._dims = tuple(dims)
        t._indices = indices
        t._values = np.asarray(values, dtype=float)
        return t

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def order(self) -> int:
        return len(self._dims)

    @property
    def nnz(self) -> int:
        return len(self._values)

    def entries(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Entries as (1-based index tuple, value), lexicographic order."""
        for row, v in zip(self._indices, self._values):
            yield tuple(int(i) for i in row), float(v)

    def densify(self) -> DenseTensor:
        out = np.zeros(self._dims)
        if self.nnz:
            out[tuple((self._indices - 1).T)] = self._values
        return DenseTensor._wrap(out)

    @classmethod
    def sparsify(cls, t: DenseTensor) -> "SparseTensor":
        """Sparse form of a dense tensor, dropping exact zeros."""
        if t.order == 0:
            raise ValueError("cannot sparsify an order-0 tensor")
        mask = t.data != 0.0
        idx = (np.argwhere(mask) + 1).astype(np.intp)  # argwhere scans row-major
        vals = t.data[mask].astype(float)
        return cls._trusted(t.dims, idx, vals.copy())

    def with_values(self, values) -> "SparseTensor":
        """Same index pattern, new values (pattern refresh)."""
        vals = np.asarray(values, dtype=float)
        if vals.shape != self._values.shape:
            raise DimensionMismatch(
                f"expected {self.nnz} values, got {vals.shape}"
            )
        return SparseTensor._trusted(self._dims, self._indices, vals)

    def block_transpose(self, r: int) -> "SparseTensor":
        """Move the leading ``r`` orders to the end (entries re-sorted).

        For an order-2q operator this is the operator transpose when r = q.
        """
        if not 0 < r < self.order:
            raise OrderError(f"cannot split {r} leading orders off order {self.order}")
        idx = np.concatenate([self._indices[:, r:], self._indices[:, :r]], axis=1)
        dims = self._dims[r:] + self._dims[:r]
        if len(idx):
            order = np.lexsort(idx.T[::-1])
            idx = np.ascontiguousarray(idx[order])
            vals = self._values[order]
        else:
            vals = self._values.copy()
        return SparseTensor._trusted(dims, idx, vals)

    def __repr__(self) -> str:
        return f"SparseTensor(dims={self._dims!r}, nnz={self.nnz})"


def identity_tensor(dims: Iterable[int]) -> SparseTensor:
    """Order-2q sparse identity for the q-order inner product.

    Entries sit exactly on the diagonal (i_1..i_q, i_1..i_q) with value 1.
    """
    dims = _as_dims(dims)
    if not dims:
        raise ValueError("identity tensor needs at least one order")
    grid = np.indices(dims).reshape(len(dims), -1).T + 1  # row-major, so sorted
    idx = np.hstack([grid, grid]).astype(np.intp)
    return SparseTensor._trusted(dims + dims, idx, np.ones(len(grid)))


Tensor = Union[DenseTensor, SparseTensor]


def inner_product(t: Tensor, s: Tensor, r: int) -> DenseTensor:
    """``r``-order inner product of ``t`` and ``s``.

    Contracts the trailing ``r`` orders of ``t`` against the leading ``r``
    orders of ``s``; the result has the remaining orders of ``t`` followed by
    the remaining orders of ``s``.  When both operands have order exactly
    ``r`` the result is an order-0 scalar tensor.

    One operand (either side) may be sparse; contraction then visits only
    stored entries, accumulating in lexicographic entry order.
    """
    r = int(r)
    if r < 1:
        raise OrderError(f"contraction order must be positive, got {r}")
    if r > t.order or r > s.order:
        raise OrderError(
            f"contraction order {r} exceeds an operand order "
            f"({t.order} and {s.order})"
        )
    t_tail = t.dims[t.order - r:]
    s_lead = s.dims[:r]
    if t_tail != s_lead:
        raise DimensionMismatch(
            f"contracted dims disagree: {t_tail} vs {s_lead}"
        )
    t_sparse = isinstance(t, SparseTensor)
    s_sparse = isinstance(s, SparseTensor)
    if t_sparse and s_sparse:
        raise TypeError("inner_product of two sparse tensors is not supported")
    if t_sparse:
        return _contract_sparse_left(t, s, r)
    if s_sparse:
        return _contract_sparse_right(t, s, r)
    return DenseTensor._wrap(np.tensordot(t.data, s.data, axes=r))


def _contract_sparse_left(t: SparseTensor, s: DenseTensor, r: int) -> DenseTensor:
    lead_dims = t.dims[: t.order - r]
    tail_dims = t.dims[t.order - r:]
    rest_dims = s.dims[r:]
    lead_n = math.prod(lead_dims)
    tail_n = math.prod(tail_dims)
    rest_n = math.prod(rest_dims)
    out = np.zeros((lead_n, rest_n))
    if t.nnz:
        idx0 = t._indices - 1
        if lead_dims:
            lead_flat = np.ravel_multi_index(tuple(idx0[:, : t.order - r].T), lead_dims)
        else:
            lead_flat = np.zeros(t.nnz, dtype=np.intp)
        tail_flat = np.ravel_multi_index(tuple(idx0[:, t.order - r:].T), tail_dims)
        contrib = t._values[:, None] * s.data.reshape(tail_n, rest_n)[tail_flat]
        np.add.at(out, lead_flat, contrib)
    return DenseTensor._wrap(out.reshape(lead_dims + rest_dims))


def _contract_sparse_right(t: DenseTensor, s: SparseTensor, r: int) -> DenseTensor:
    lead_dims = t.dims[: t.order - r]
    mid_dims = s.dims[:r]
    rest_dims = s.dims[r:]
    lead_n = math.prod(lead_dims)
    mid_n = math.prod(mid_dims)
    rest_n = math.prod(rest_dims)
    out_t = np.zeros((rest_n, lead_n))
    if s.nnz:
        idx0 = s._indices - 1
        mid_flat = np.ravel_multi_index(tuple(idx0[:, :r].T), mid_dims)
        if rest_dims:
            rest_flat = np.ravel_multi_index(tuple(idx0[:, r:].T), rest_dims)
        else:
            rest_flat = np.zeros(s.nnz, dtype=np.intp)
        contrib = s._values[:, None] * t.data.reshape(lead_n, mid_n).T[mid_flat]
        np.add.at(out_t, rest_flat, contrib)
    return DenseTensor._wrap(out_t.T.reshape(lead_dims + rest_dims))
