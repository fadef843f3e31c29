"""Independent brute-force reference implementations used as test oracles.

Everything here is written with explicit index loops and no calls into the
library, so the oracles stay independent of the code paths they check.
"""

import itertools
import math

import numpy as np


def outer_product_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(a.shape + b.shape)
    for ia in itertools.product(*(range(n) for n in a.shape)):
        for ib in itertools.product(*(range(n) for n in b.shape)):
            out[ia + ib] = a[ia] * b[ib]
    return out


def contract_oracle(a: np.ndarray, b: np.ndarray, r: int) -> np.ndarray:
    """Trailing-r-against-leading-r contraction by triple loop."""
    lead = a.shape[: a.ndim - r]
    shared = a.shape[a.ndim - r:]
    rest = b.shape[r:]
    assert shared == b.shape[:r]
    out = np.zeros(lead + rest)
    for li in itertools.product(*(range(n) for n in lead)):
        for ri in itertools.product(*(range(n) for n in rest)):
            acc = 0.0
            for si in itertools.product(*(range(n) for n in shared)):
                acc += a[li + si] * b[si + ri]
            out[li + ri] = acc
    return out


def subarray_oracle(a: np.ndarray, ranges) -> np.ndarray:
    """1-based inclusive ranges, one per order, by index shifting."""
    dims = tuple(hi - lo + 1 for lo, hi in ranges)
    out = np.zeros(dims)
    for idx in itertools.product(*(range(n) for n in dims)):
        src = tuple(i + lo - 1 for i, (lo, _) in zip(idx, ranges))
        out[idx] = a[src]
    return out


def conv_output_dims(n, k, s):
    return tuple((ni - ki) // si + 1 for ni, ki, si in zip(n, k, s))


def sliding_window_conv(filt: np.ndarray, data: np.ndarray, strides) -> np.ndarray:
    """Direct convolution: out[i] = sum_j filt[j] * data[j + s*i]."""
    out_dims = conv_output_dims(data.shape, filt.shape, strides)
    out = np.zeros(out_dims)
    for i in itertools.product(*(range(n) for n in out_dims)):
        acc = 0.0
        for j in itertools.product(*(range(k) for k in filt.shape)):
            pos = tuple(jl + sl * il for jl, sl, il in zip(j, strides, i))
            acc += filt[j] * data[pos]
        out[i] = acc
    return out


def zero_pad_oracle(data: np.ndarray, k, s) -> np.ndarray:
    """Embed at g = ceil((n* - n)/2) inside zeros of n* = (n-1)s + k."""
    n = data.shape
    padded = tuple((ni - 1) * si + ki for ni, ki, si in zip(n, k, s))
    g = tuple(math.ceil((pi - ni) / 2) for ni, pi in zip(n, padded))
    out = np.zeros(padded)
    out[tuple(slice(gi, gi + ni) for gi, ni in zip(g, n))] = data
    return out


def pool_oracle(data: np.ndarray, window, kind: str) -> np.ndarray:
    """Stride-1 window reduction by explicit window enumeration."""
    out_dims = tuple(n - w + 1 for n, w in zip(data.shape, window))
    out = np.zeros(out_dims)
    for i in itertools.product(*(range(n) for n in out_dims)):
        values = [
            data[tuple(il + wl for il, wl in zip(i, off))]
            for off in itertools.product(*(range(w) for w in window))
        ]
        out[i] = max(values) if kind == "max" else sum(values) / len(values)
    return out


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        grad[i] = (f(plus.reshape(x.shape)) - f(minus.reshape(x.shape))) / (2 * h)
    return grad.reshape(x.shape)


def gradient_close(
    analytic: np.ndarray,
    reference: np.ndarray,
    rel: float = 1e-6,
    abs_floor: float = 1e-8,
    switch: float = 1e-6,
) -> bool:
    """Two-tier gradient comparison: relative error up to ``rel`` where the
    reference is larger than ``switch`` in magnitude, absolute error up to
    ``abs_floor`` below it."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    diff = np.abs(analytic - reference)
    small = np.abs(reference) < switch
    ok_small = diff[small] <= abs_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        ok_large = diff[~small] <= rel * np.abs(reference)[~small]
    return bool(ok_small.all() and ok_large.all())
