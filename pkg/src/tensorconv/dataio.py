"""Plain-text file formats: datasets, single tensors, trained models.

All scalars are written with 17 significant digits so float64 values
round-trip bit-exactly, and files are line-oriented so they diff cleanly.

Dataset file::

    tensor-dataset v1 q=<order> dims=<n1,...,nq> out_dims=<...> count=<p>
    <input coordinates, row-major, space-separated>
    <target coordinates>
    ... (one pair of lines per sample)

Single tensor file::

    tensor v1 dims=<n1,...,nq>
    <coordinates, row-major>

Model file::

    tensor-model v1 input_dims=<...> layers=<k>
    layer=<l> filter_dims=<...> strides=<...> padding=<valid|zero> \
        activation=<name> pool=<none|max:<dims>|average:<dims>>
    <filter coordinates>
    <bias coordinates>
    ... (three lines per layer)
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .convolution import FilterSpec, conv_geometry
from .errors import DatasetFormatError, EmptyBatch
from .network import ActivationKind, LayerConfig, NetworkConfig, PoolSpec, pooled_dims
from .tensor import DenseTensor

__all__ = [
    "write_dataset",
    "read_dataset",
    "write_tensor",
    "read_tensor",
    "write_model",
    "read_model",
]

Sample = tuple[DenseTensor, DenseTensor]


def _fmt_floats(values: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in values.ravel())


def _fmt_dims(dims: Sequence[int]) -> str:
    return ",".join(str(d) for d in dims)


def _parse_dims(text: str, where: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise DatasetFormatError(f"{where}: cannot parse dims {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise DatasetFormatError(f"{where}: dims must be positive, got {text!r}")
    return dims


def _parse_fields(line: str, magic: str, keys: Sequence[str], where: str) -> dict[str, str]:
    tokens = line.split()
    if len(tokens) < 2 or tokens[0] != magic or tokens[1] != "v1":
        raise DatasetFormatError(f"{where}: expected header '{magic} v1 ...'")
    fields = {}
    for token in tokens[2:]:
        if "=" not in token:
            raise DatasetFormatError(f"{where}: malformed field {token!r}")
        key, value = token.split("=", 1)
        fields[key] = value
    for key in keys:
        if key not in fields:
            raise DatasetFormatError(f"{where}: missing field {key!r}")
    return fields


def _parse_floats(line: str, count: int, where: str) -> np.ndarray:
    parts = line.split()
    if len(parts) != count:
        raise DatasetFormatError(
            f"{where}: expected {count} coordinates, got {len(parts)}"
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise DatasetFormatError(f"{where}: cannot parse coordinates") from None


def _nonempty_lines(path: Path) -> list[tuple[int, str]]:
    lines = []
    for number, raw in enumerate(path.read_text().splitlines(), 1):
        if raw.strip():
            lines.append((number, raw))
    return lines


def write_dataset(path, samples: Sequence[Sample]) -> None:
    if not samples:
        raise EmptyBatch("cannot write an empty dataset")
    in_dims = samples[0][0].dims
    out_dims = samples[0][1].dims
    lines = [
        f"tensor-dataset v1 q={len(in_dims)} dims={_fmt_dims(in_dims)} "
        f"out_dims={_fmt_dims(out_dims)} count={len(samples)}"
    ]
    for x, y in samples:
        if x.dims != in_dims or y.dims != out_dims:
            raise DatasetFormatError("samples disagree on dims")
        lines.append(_fmt_floats(x.data))
        lines.append(_fmt_floats(y.data))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> list[Sample]:
    path = Path(path)
    lines = _nonempty_lines(path)
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty dataset file")
    number, header = lines[0]
    where = f"{path}:{number}"
    fields = _parse_fields(
        header, "tensor-dataset", ("q", "dims", "out_dims", "count"), where
    )
    dims = _parse_dims(fields["dims"], where)
    out_dims = _parse_dims(fields["out_dims"], where)
    try:
        q = int(fields["q"])
        count = int(fields["count"])
    except ValueError:
        raise DatasetFormatError(f"{where}: q and count must be integers") from None
    if q != len(dims):
        raise DatasetFormatError(f"{where}: q={q} but dims has {len(dims)} entries")
    if count < 1:
        raise DatasetFormatError(f"{where}: count must be >= 1")
    body = lines[1:]
    if len(body) != 2 * count:
        raise DatasetFormatError(
            f"{path}: expected {2 * count} sample lines, found {len(body)}"
        )
    samples = []
    in_size = int(np.prod(dims))
    out_size = int(np.prod(out_dims))
    for j in range(count):
        num_x, line_x = body[2 * j]
        num_y, line_y = body[2 * j + 1]
        x = _parse_floats(line_x, in_size, f"{path}:{num_x}")
        y = _parse_floats(line_y, out_size, f"{path}:{num_y}")
        samples.append(
            (DenseTensor(x.reshape(dims)), DenseTensor(y.reshape(out_dims)))
        )
    return samples


def write_tensor(path, t: DenseTensor) -> None:
    Path(path).write_text(
        f"tensor v1 dims={_fmt_dims(t.dims)}\n{_fmt_floats(t.data)}\n"
    )


def read_tensor(path) -> DenseTensor:
    path = Path(path)
    lines = _nonempty_lines(path)
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty tensor file")
    number, header = lines[0]
    fields = _parse_fields(header, "tensor", ("dims",), f"{path}:{number}")
    dims = _parse_dims(fields["dims"], f"{path}:{number}")
    if len(lines) != 2:
        raise DatasetFormatError(f"{path}: expected one coordinate line")
    num, line = lines[1]
    data = _parse_floats(line, int(np.prod(dims)), f"{path}:{num}")
    return DenseTensor(data.reshape(dims))


def _fmt_pool(pool) -> str:
    if pool is None:
        return "none"
    return f"{pool.kind}:{_fmt_dims(pool.window)}"


def _parse_pool(text: str, where: str):
    if text == "none":
        return None
    if ":" not in text:
        raise DatasetFormatError(f"{where}: malformed pool {text!r}")
    kind, dims = text.split(":", 1)
    if kind not in ("max", "average"):
        raise DatasetFormatError(f"{where}: unknown pool kind {kind!r}")
    return PoolSpec(_parse_dims(dims, where), kind)


def write_model(path, net: NetworkConfig) -> None:
    lines = [
        f"tensor-model v1 input_dims={_fmt_dims(net.input_dims)} "
        f"layers={net.layer_count}"
    ]
    for number, layer in enumerate(net.layers, 1):
        spec = layer.filter_spec
        lines.append(
            f"layer={number} filter_dims={_fmt_dims(spec.kernel_dims)} "
            f"strides={_fmt_dims(spec.strides)} padding={spec.padding} "
            f"activation={layer.activation.value} pool={_fmt_pool(layer.pool)}"
        )
        lines.append(_fmt_floats(spec.filter.data))
        lines.append(_fmt_floats(layer.bias.data))
    Path(path).write_text("\n".join(lines) + "\n")


def read_model(path) -> NetworkConfig:
    path = Path(path)
    lines = _nonempty_lines(path)
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty model file")
    number, header = lines[0]
    where = f"{path}:{number}"
    fields = _parse_fields(header, "tensor-model", ("input_dims", "layers"), where)
    input_dims = _parse_dims(fields["input_dims"], where)
    try:
        layer_count = int(fields["layers"])
    except ValueError:
        raise DatasetFormatError(f"{where}: layers must be an integer") from None
    body = lines[1:]
    if len(body) != 3 * layer_count:
        raise DatasetFormatError(
            f"{path}: expected {3 * layer_count} layer lines, found {len(body)}"
        )
    layers = []
    for j in range(layer_count):
        num_meta, meta = body[3 * j]
        where = f"{path}:{num_meta}"
        tokens = meta.split()
        fields = {}
        for token in tokens:
            if "=" not in token:
                raise DatasetFormatError(f"{where}: malformed field {token!r}")
            key, value = token.split("=", 1)
            fields[key] = value
        for key in ("layer", "filter_dims", "strides", "padding", "activation", "pool"):
            if key not in fields:
                raise DatasetFormatError(f"{where}: missing field {key!r}")
        k_dims = _parse_dims(fields["filter_dims"], where)
        strides = _parse_dims(fields["strides"], where)
        if fields["padding"] not in ("valid", "zero"):
            raise DatasetFormatError(f"{where}: unknown padding {fields['padding']!r}")
        try:
            activation = ActivationKind(fields["activation"])
        except ValueError:
            raise DatasetFormatError(
                f"{where}: unknown activation {fields['activation']!r}"
            ) from None
        pool = _parse_pool(fields["pool"], where)
        num_f, line_f = body[3 * j + 1]
        num_b, line_b = body[3 * j + 2]
        filt = _parse_floats(line_f, int(np.prod(k_dims)), f"{path}:{num_f}")
        spec = FilterSpec(DenseTensor(filt.reshape(k_dims)), strides, fields["padding"])
        bias_line = line_b.split()
        try:
            bias = np.array([float(p) for p in bias_line])
        except ValueError:
            raise DatasetFormatError(f"{path}:{num_b}: cannot parse bias") from None
        layers.append((spec, bias, activation, pool, num_b))
    # bias dims follow from the geometry chain; resolve then validate counts
    built = []
    dims = input_dims
    for spec, bias, activation, pool, num_b in layers:
        geom = conv_geometry(spec, dims)
        if bias.size != int(np.prod(geom.output_dims)):
            raise DatasetFormatError(
                f"{path}:{num_b}: expected {int(np.prod(geom.output_dims))} "
                f"bias coordinates, got {bias.size}"
            )
        built.append(
            LayerConfig(spec, DenseTensor(bias.reshape(geom.output_dims)), activation, pool)
        )
        dims = geom.output_dims
        if pool is not None:
            dims = pooled_dims(pool, dims)
    return NetworkConfig(input_dims, tuple(built))
