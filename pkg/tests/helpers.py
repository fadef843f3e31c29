"""Shared generators and finite-difference evaluators for the test suite."""

import dataclasses

import numpy as np

import tensorconv as tc
from oracles import central_diff

ALL_ACTIVATIONS = list(tc.ActivationKind)
ALL_LOSSES = list(tc.LossKind)


def random_geometry(rng, order=None, max_dim=8, max_kernel=3, stride_choices=(1, 2)):
    """Random (input_dims, kernel_dims, strides) satisfying the stride bound
    s <= n - k (s = 1 when k = n)."""
    q = order if order is not None else int(rng.integers(1, 4))
    dims, kernel, strides = [], [], []
    for _ in range(q):
        n = int(rng.integers(1, max_dim + 1))
        k = int(rng.integers(1, min(n, max_kernel) + 1))
        if k == n:
            s = 1
        else:
            choices = [s for s in stride_choices if s <= n - k]
            s = int(rng.choice(choices)) if choices else 1
        dims.append(n)
        kernel.append(k)
        strides.append(s)
    return tuple(dims), tuple(kernel), tuple(strides)


def positive_network(rng, input_dims, layer_count, activation, padding="valid",
                     pool_layers=()):
    """Network with strictly positive filters and biases, so that every
    pre-activation stays away from the relu kink and all intermediate values
    stay positive (safe for finite differencing and for log-based losses)."""
    layers = []
    dims = input_dims
    for index in range(layer_count):
        q = len(dims)
        kernel = tuple(min(2, n) for n in dims)
        spec = tc.FilterSpec(
            tc.DenseTensor(rng.uniform(0.1, 0.5, size=kernel)), (1,) * q, padding
        )
        geom = tc.conv_geometry(spec, dims)
        bias = tc.DenseTensor(rng.uniform(0.05, 0.2, size=geom.output_dims))
        pool = None
        dims = geom.output_dims
        if index in pool_layers and index != layer_count - 1:
            window = tuple(min(2, n) for n in dims)
            pool = tc.PoolSpec(window, "average")
            dims = tc.pooled_dims(pool, dims)
        layers.append(tc.LayerConfig(spec, bias, activation, pool))
    return tc.NetworkConfig(input_dims, tuple(layers))


def random_network(rng, order=1, layer_count=2, max_dim=6, paddings=("valid", "zero"),
                   with_pool=False):
    """Random small network with mixed activations, for equivalence tests."""
    input_dims = tuple(int(rng.integers(3, max_dim + 1)) for _ in range(order))
    layers = []
    dims = input_dims
    for index in range(layer_count):
        kernel = tuple(int(rng.integers(1, min(n, 3) + 1)) for n in dims)
        strides = tuple(
            1 if k == n else int(rng.integers(1, min(2, n - k) + 1))
            for k, n in zip(kernel, dims)
        )
        padding = str(rng.choice(list(paddings)))
        spec = tc.FilterSpec(
            tc.DenseTensor(rng.uniform(-1.0, 1.0, size=kernel)), strides, padding
        )
        geom = tc.conv_geometry(spec, dims)
        bias = tc.DenseTensor(rng.uniform(-0.5, 0.5, size=geom.output_dims))
        activation = tc.ActivationKind(rng.choice([a.value for a in ALL_ACTIVATIONS]))
        pool = None
        dims = geom.output_dims
        if (
            with_pool
            and index != layer_count - 1
            and rng.random() < 0.5
            and all(n >= 2 for n in dims)
        ):
            kind = str(rng.choice(["max", "average"]))
            window = tuple(int(rng.integers(1, min(n, 2) + 1)) for n in dims)
            pool = tc.PoolSpec(window, kind)
            dims = tc.pooled_dims(pool, dims)
        layers.append(tc.LayerConfig(spec, bias, activation, pool))
    return tc.NetworkConfig(input_dims, tuple(layers))


def in_domain_targets(rng, kind, dims):
    if kind == tc.LossKind.POI:
        return tc.DenseTensor(rng.uniform(0.5, 1.5, size=dims))
    if kind == tc.LossKind.MSLE:
        return tc.DenseTensor(rng.uniform(0.1, 1.0, size=dims))
    return tc.DenseTensor(rng.uniform(-1.0, 1.0, size=dims))


def replace_filter(net, layer, values):
    layers = list(net.layers)
    spec = layers[layer].filter_spec
    layers[layer] = dataclasses.replace(
        layers[layer],
        filter_spec=dataclasses.replace(spec, filter=tc.DenseTensor(values)),
    )
    return dataclasses.replace(net, layers=tuple(layers))


def replace_bias(net, layer, values):
    layers = list(net.layers)
    layers[layer] = dataclasses.replace(layers[layer], bias=tc.DenseTensor(values))
    return dataclasses.replace(net, layers=tuple(layers))


def batch_loss_of(net, samples, kind):
    predictions = [tc.forward_pass(net, x).prediction for x, _ in samples]
    return tc.batch_loss(kind, predictions, [y for _, y in samples])


def fd_filter_gradient(net, samples, kind, layer, h=1e-5):
    """Central differences of the batch loss in one layer's filter entries,
    evaluated through forward passes only."""
    base = net.layers[layer].filter_spec.filter.data

    def f(values):
        return batch_loss_of(replace_filter(net, layer, values), samples, kind)

    return central_diff(f, base, h)


def fd_bias_gradient(net, samples, kind, layer, h=1e-5):
    base = net.layers[layer].bias.data

    def f(values):
        return batch_loss_of(replace_bias(net, layer, values), samples, kind)

    return central_diff(f, base, h)


def min_abs_preactivation(net, samples):
    smallest = np.inf
    for x, _ in samples:
        trace = tc.forward_pass(net, x)
        for k in trace.pre_activations:
            smallest = min(smallest, float(np.min(np.abs(k.data))))
    return smallest


def min_abs_residual(net, samples):
    smallest = np.inf
    for x, y in samples:
        z = tc.forward_pass(net, x).prediction
        smallest = min(smallest, float(np.min(np.abs(z.data - y.data))))
    return smallest
