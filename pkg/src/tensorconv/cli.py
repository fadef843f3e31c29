"""Command-line front end.

Subcommands: ``generate`` (synthetic teacher datasets), ``train``, ``eval``,
``conv`` (one-shot convolution of a tensor file), ``gradcheck``
(finite-difference audit of the analytic gradients).

Exit codes: 0 success, 1 usage or parse errors, 2 geometry or domain errors,
3 gradient-check failure.

The run configuration is a JSON file::

    {
      "network": {
        "input_dims": [6, 6],
        "layers": [
          {"filter_dims": [3, 3], "strides": [1, 1], "padding": "valid",
           "activation": "identity", "pool": {"kind": "max", "window": [2, 2]}}
        ]
      },
      "training": {"loss": "MSE", "learning_rate": 0.01, "tolerance": 1e-10,
                   "max_epochs": 500, "seed": 0, "init": "uniform",
                   "init_scale": 0.5},
      "data": {"train": "train.txt", "validation": "val.txt", "split": 0.8}
    }

``strides``, ``padding``, ``activation`` and ``pool`` are optional per layer;
the data section is optional and can be overridden with ``--data``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataio
from .convolution import FilterSpec, conv_geometry, convolve
from .errors import (
    ConfigError,
    DatasetFormatError,
    DimensionMismatch,
    DomainError,
    EmptyBatch,
    GeometryError,
    OrderError,
    RangeError,
    TensorConvError,
)
from .network import (
    ActivationKind,
    LayerConfig,
    LossKind,
    NetworkConfig,
    PoolSpec,
    batch_loss,
    loss,
    loss_gradient,
    pooled_dims,
)
from .tensor import DenseTensor
from .training import (
    TrainConfig,
    batch_gradients,
    forward_pass,
    initialize_network,
    train,
)

__all__ = ["main", "console_main", "load_run_config"]

GRADCHECK_TOLERANCE = 1e-6
GRADCHECK_STEP = 1e-5


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _dims_from_config(value, where: str) -> tuple[int, ...]:
    _require(
        isinstance(value, list) and value and all(isinstance(v, int) for v in value),
        f"{where} must be a non-empty list of integers",
    )
    return tuple(value)


def load_run_config(path) -> tuple[NetworkConfig, TrainConfig, dict]:
    """Parse a JSON run configuration into validated network and training
    configs (filters and biases are zero placeholders until initialized)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    _require(isinstance(raw, dict), f"{path}: top level must be an object")
    _require("network" in raw, f"{path}: missing 'network' section")
    net_raw = raw["network"]
    _require(isinstance(net_raw, dict), f"{path}: 'network' must be an object")
    _require("input_dims" in net_raw, f"{path}: network.input_dims is required")
    input_dims = _dims_from_config(net_raw["input_dims"], "network.input_dims")
    layers_raw = net_raw.get("layers")
    _require(
        isinstance(layers_raw, list) and layers_raw,
        f"{path}: network.layers must be a non-empty list",
    )

    layers = []
    dims = input_dims
    for number, layer_raw in enumerate(layers_raw, 1):
        where = f"network.layers[{number}]"
        _require(isinstance(layer_raw, dict), f"{where} must be an object")
        _require("filter_dims" in layer_raw, f"{where}.filter_dims is required")
        k_dims = _dims_from_config(layer_raw["filter_dims"], f"{where}.filter_dims")
        strides = layer_raw.get("strides", [1] * len(k_dims))
        strides = _dims_from_config(strides, f"{where}.strides")
        padding = layer_raw.get("padding", "valid")
        _require(padding in ("valid", "zero"), f"{where}.padding must be valid|zero")
        act_name = layer_raw.get("activation", "identity")
        try:
            activation = ActivationKind(act_name)
        except ValueError:
            raise ConfigError(f"{where}.activation: unknown {act_name!r}") from None
        pool = None
        if layer_raw.get("pool") is not None:
            pool_raw = layer_raw["pool"]
            _require(isinstance(pool_raw, dict), f"{where}.pool must be an object")
            kind = pool_raw.get("kind", "max")
            _require(kind in ("max", "average"), f"{where}.pool.kind must be max|average")
            window = _dims_from_config(pool_raw.get("window"), f"{where}.pool.window")
            pool = PoolSpec(window, kind)
        spec = FilterSpec(DenseTensor.zeros(k_dims), strides, padding)
        geom = conv_geometry(spec, dims)  # GeometryError before any arithmetic
        layers.append(LayerConfig(spec, DenseTensor.zeros(geom.output_dims), activation, pool))
        dims = geom.output_dims
        if pool is not None:
            dims = pooled_dims(pool, dims)
    net = NetworkConfig(input_dims, tuple(layers))

    training_raw = raw.get("training", {})
    _require(isinstance(training_raw, dict), f"{path}: 'training' must be an object")
    loss_name = training_raw.get("loss", "MSE")
    try:
        loss_kind = LossKind(loss_name)
    except ValueError:
        raise ConfigError(f"{path}: unknown loss {loss_name!r}") from None
    try:
        train_cfg = TrainConfig(
            loss=loss_kind,
            learning_rate=float(training_raw.get("learning_rate", 0.01)),
            tolerance=float(training_raw.get("tolerance", 1e-8)),
            max_epochs=int(training_raw.get("max_epochs", 100)),
            init=str(training_raw.get("init", "uniform")),
            seed=int(training_raw.get("seed", 0)),
            init_scale=float(training_raw.get("init_scale", 0.5)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: training section: {exc}") from None

    data_raw = raw.get("data", {})
    _require(isinstance(data_raw, dict), f"{path}: 'data' must be an object")
    return net, train_cfg, data_raw


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise ConfigError(f"cannot parse scalar list {text!r}") from None


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part != "")
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    net, cfg, _ = load_run_config(args.config)
    if args.train_count < 1 or args.val_count < 1:
        raise EmptyBatch("sample counts must be >= 1")
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    teacher = initialize_network(net, "uniform", cfg.init_scale, rng)

    def draw(count: int):
        samples = []
        for _ in range(count):
            x = DenseTensor(rng.uniform(-1.0, 1.0, size=net.input_dims))
            samples.append((x, forward_pass(teacher, x).prediction))
        return samples

    dataio.write_dataset(args.train_out, draw(args.train_count))
    dataio.write_dataset(args.val_out, draw(args.val_count))
    if args.teacher_out:
        dataio.write_model(args.teacher_out, teacher)
    print(
        f"wrote {args.train_count} train and {args.val_count} validation samples"
    )
    return 0


def _resolve_data_paths(args, data_section) -> tuple[list, list]:
    if args.data:
        paths = args.data.split(",")
        if len(paths) == 2:
            return dataio.read_dataset(paths[0]), dataio.read_dataset(paths[1])
        if len(paths) == 1:
            samples = dataio.read_dataset(paths[0])
            split = float(data_section.get("split", 0.8))
            cut = max(1, min(len(samples) - 1, round(split * len(samples))))
            if len(samples) < 2:
                raise EmptyBatch("need at least 2 samples to split")
            return samples[:cut], samples[cut:]
        raise ConfigError("--data takes one path or 'train,validation'")
    train_path = data_section.get("train")
    val_path = data_section.get("validation")
    _require(
        train_path is not None and val_path is not None,
        "no --data given and the config data section lacks train/validation paths",
    )
    return dataio.read_dataset(train_path), dataio.read_dataset(val_path)


def _cmd_train(args) -> int:
    net, cfg, data_section = load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.loss is not None:
        cfg = dataclasses.replace(cfg, loss=LossKind(args.loss))
    train_set, val_set = _resolve_data_paths(args, data_section)
    result = train(net, train_set, val_set, cfg)
    lines = [
        f"epoch={record.epoch} loss={record.validation_loss:.17g}"
        for record in result.records
    ]
    lines.append(f"stopped={result.stop_reason}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    dataio.write_model(args.out, result.net)
    Path(str(args.out) + ".log").write_text(text)
    return 0


def _cmd_eval(args) -> int:
    net = dataio.read_model(args.model)
    samples = dataio.read_dataset(args.data)
    kind = LossKind(args.loss)
    predictions = []
    targets = []
    for x, y in samples:
        predictions.append(forward_pass(net, x).prediction)
        targets.append(y)
    value = batch_loss(kind, predictions, targets)
    print(f"{value:.12g}")
    return 0


def _cmd_conv(args) -> int:
    values = _parse_float_list(args.filter)
    if args.filter_dims:
        k_dims = _parse_int_list(args.filter_dims)
    else:
        k_dims = (len(values),)
    if int(np.prod(k_dims)) != len(values):
        raise ConfigError(
            f"filter has {len(values)} values but dims {k_dims} need "
            f"{int(np.prod(k_dims))}"
        )
    strides = _parse_int_list(args.strides) if args.strides else (1,) * len(k_dims)
    spec = FilterSpec(
        DenseTensor(np.array(values).reshape(k_dims)), strides, args.padding
    )
    t = dataio.read_tensor(args.data)
    result = convolve(spec, t)
    print(" ".join(f"{v:.17g}" for v in result.data.ravel()))
    return 0


def _max_rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    scale = np.maximum(np.abs(reference), GRADCHECK_TOLERANCE)
    return float(np.max(np.abs(analytic - reference) / scale)) if analytic.size else 0.0


def _fd_param_gradients(net, samples, kind, layer, which):
    """Central finite differences of the batch loss in one parameter block."""

    def eval_loss(candidate) -> float:
        preds = [forward_pass(candidate, x).prediction for x, _ in samples]
        return batch_loss(kind, preds, [y for _, y in samples])

    layer_cfg = net.layers[layer]
    base = (
        layer_cfg.filter_spec.filter.data
        if which == "filter"
        else layer_cfg.bias.data
    )
    grad = np.zeros_like(base)
    flat = base.ravel()
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += GRADCHECK_STEP
        minus = flat.copy()
        minus[i] -= GRADCHECK_STEP
        candidates = []
        for values in (plus, minus):
            new = DenseTensor(values.reshape(base.shape))
            if which == "filter":
                layers = list(net.layers)
                spec = layers[layer].filter_spec
                layers[layer] = LayerConfig(
                    FilterSpec(new, spec.strides, spec.padding),
                    layers[layer].bias,
                    layers[layer].activation,
                    layers[layer].pool,
                )
            else:
                layers = list(net.layers)
                layers[layer] = LayerConfig(
                    layers[layer].filter_spec,
                    new,
                    layers[layer].activation,
                    layers[layer].pool,
                )
            candidates.append(NetworkConfig(net.input_dims, tuple(layers)))
        grad.ravel()[i] = (eval_loss(candidates[0]) - eval_loss(candidates[1])) / (
            2 * GRADCHECK_STEP
        )
    return grad


def _cmd_gradcheck(args) -> int:
    net, cfg, _ = load_run_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    net = initialize_network(net, "uniform", 0.3, rng)
    lows, highs = {
        LossKind.POI: (0.5, 1.5),
        LossKind.MSLE: (0.1, 1.0),
    }.get(cfg.loss, (-1.0, 1.0))
    samples = []
    for _ in range(2):
        x = DenseTensor(rng.uniform(-1.0, 1.0, size=net.input_dims))
        y = DenseTensor(rng.uniform(lows, highs, size=net.output_dims))
        samples.append((x, y))
    analytic = batch_gradients(net, samples, cfg.loss)
    failed = False
    for number, (gf, gb) in enumerate(analytic, 1):
        fd_f = _fd_param_gradients(net, samples, cfg.loss, number - 1, "filter")
        fd_b = _fd_param_gradients(net, samples, cfg.loss, number - 1, "bias")
        gf_data = gf.data
        if args.corrupt and number == 1:
            gf_data = gf_data + 1e-3  # test hook: force a detectable failure
        for name, got, want in (("filter", gf_data, fd_f), ("bias", gb.data, fd_b)):
            err = _max_rel_error(got, want)
            ok = err <= GRADCHECK_TOLERANCE
            failed = failed or not ok
            print(
                f"layer={number} param={name} max_rel_err={err:.3e} "
                f"status={'ok' if ok else 'FAIL'}"
            )
    # loss gradient against finite differences of the loss itself; keep the
    # prediction inside the loss domain where one applies
    x_lo, x_hi = (lows, highs) if cfg.loss == LossKind.MSLE else (-1.0, 1.0)
    x = DenseTensor(rng.uniform(x_lo, x_hi, size=net.output_dims))
    y = DenseTensor(rng.uniform(lows, highs, size=net.output_dims))
    analytic_g = loss_gradient(cfg.loss, x, y).data
    fd_g = np.zeros_like(x.data)
    flat = x.data.ravel()
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += GRADCHECK_STEP
        minus = flat.copy()
        minus[i] -= GRADCHECK_STEP
        fd_g.ravel()[i] = (
            loss(cfg.loss, DenseTensor(plus.reshape(x.dims)), y)
            - loss(cfg.loss, DenseTensor(minus.reshape(x.dims)), y)
        ) / (2 * GRADCHECK_STEP)
    err = _max_rel_error(analytic_g, fd_g)
    ok = err <= GRADCHECK_TOLERANCE
    failed = failed or not ok
    print(f"param=loss_gradient max_rel_err={err:.3e} status={'ok' if ok else 'FAIL'}")
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# parser and dispatch


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensorconv",
        description="Sparse tensor convolution networks: data, training, audits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate teacher-labelled datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-count", type=int, required=True)
    p.add_argument("--val-count", type=int, required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--val-out", required=True)
    p.add_argument("--teacher-out", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a network on dataset files")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None, help="TRAIN,VALIDATION or one file to split")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss", default=None, choices=[k.value for k in LossKind])
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="batch loss of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--loss", default="MSE", choices=[k.value for k in LossKind])
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("conv", help="convolve a filter over a tensor file")
    p.add_argument("--filter", required=True, help="comma-separated coefficients")
    p.add_argument("--filter-dims", default=None, help="comma-separated dims")
    p.add_argument("--strides", default=None, help="comma-separated strides")
    p.add_argument("--padding", default="valid", choices=["valid", "zero"])
    p.add_argument("--data", required=True, help="tensor file")
    p.set_defaults(func=_cmd_conv)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if (exc.code or 0) == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        GeometryError,
        DomainError,
        DimensionMismatch,
        OrderError,
        RangeError,
        EmptyBatch,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TensorConvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())
