"""The learnable vector field: a tanh MLP stored as one flat parameter vector.

Layout of the flat vector: for each affine layer in forward order, the weight
matrix (row-major, shape ``(fan_out, fan_in)``) followed by its bias.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

WRAPPERS = ("none", "tanh_bound", "squared", "clamp")
WRAPPER_CODES = {name: i for i, name in enumerate(WRAPPERS)}
DEFAULT_BOUNDS = {"none": 20.0, "tanh_bound": 18.0, "squared": 20.0, "clamp": 20.0}


@dataclass(frozen=True)
class NetSpec:
    input_dim: int = 2
    hidden: tuple = (128, 128, 128)
    output_dim: int | None = None
    wrapper: str = "clamp"
    wrapper_bound: float | None = None

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden)
        object.__setattr__(self, "hidden", hidden)
        if self.output_dim is None:
            object.__setattr__(self, "output_dim", self.input_dim)
        if self.wrapper_bound is None:
            object.__setattr__(self, "wrapper_bound", DEFAULT_BOUNDS.get(self.wrapper, 20.0))
        if self.input_dim != self.output_dim:
            raise ContractError("vector field must map R^d to R^d")
        if not hidden or min(hidden) <= 0:
            raise ContractError("hidden widths must be a non-empty list of positive ints")
        if self.wrapper not in WRAPPER_CODES:
            raise ContractError(f"unknown wrapper {self.wrapper!r}; expected one of {WRAPPERS}")
        if self.wrapper_bound <= 0:
            raise ContractError("wrapper bound must be positive")

    @property
    def layer_shapes(self):
        """(fan_in, fan_out) per affine layer."""
        dims = (self.input_dim,) + self.hidden + (self.output_dim,)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self):
        return sum(fi * fo + fo for fi, fo in self.layer_shapes)

    def with_wrapper(self, wrapper, bound=None):
        return NetSpec(self.input_dim, self.hidden, self.output_dim, wrapper, bound)


def unpack(spec: NetSpec, theta):
    """Views ``[(W, b), ...]`` into the flat vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ContractError(f"expected {spec.n_params} parameters, got shape {theta.shape}")
    layers, off = [], 0
    for fi, fo in spec.layer_shapes:
        W = theta[off:off + fi * fo].reshape(fo, fi)
        off += fi * fo
        b = theta[off:off + fo]
        off += fo
        layers.append((W, b))
    return layers


def init_xavier(spec: NetSpec, seed: int) -> np.ndarray:
    """Xavier-normal weights (gain 1), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fi, fo in spec.layer_shapes:
        std = np.sqrt(2.0 / (fi + fo))
        chunks.append(rng.normal(0.0, std, size=fi * fo))
        chunks.append(np.zeros(fo))
    return np.concatenate(chunks)


def apply_wrapper(raw, wrapper: str, bound: float | None = None):
    if bound is None:
        bound = DEFAULT_BOUNDS[wrapper]
    raw = np.asarray(raw, dtype=float)
    if wrapper == "none":
        return raw.copy()
    if wrapper == "tanh_bound":
        return bound * np.tanh(raw / bound)
    if wrapper == "squared":
        return raw * np.abs(raw)
    if wrapper == "clamp":
        return np.clip(raw, -bound, bound)
    raise ContractError(f"unknown wrapper {wrapper!r}")


def wrapper_derivative(raw, wrapper: str, bound: float | None = None):
    """Elementwise derivative; clamp uses 1 on the closed interval, squared uses 2|r|."""
    if bound is None:
        bound = DEFAULT_BOUNDS[wrapper]
    raw = np.asarray(raw, dtype=float)
    if wrapper == "none":
        return np.ones_like(raw)
    if wrapper == "tanh_bound":
        t = np.tanh(raw / bound)
        return 1.0 - t * t
    if wrapper == "squared":
        return 2.0 * np.abs(raw)
    if wrapper == "clamp":
        return (np.abs(raw) <= bound).astype(float)
    raise ContractError(f"unknown wrapper {wrapper!r}")


def _forward_cache(spec, theta, states):
    z = np.asarray(states, dtype=float)
    if z.shape[-1] != spec.input_dim:
        raise ContractError(f"state dimension {z.shape[-1]} != {spec.input_dim}")
    if not np.all(np.isfinite(z)):
        raise ContractError("non-finite input state")
    layers = unpack(spec, theta)
    acts = [np.atleast_2d(z)]
    for W, b in layers[:-1]:
        acts.append(np.tanh(acts[-1] @ W.T + b))
    W, b = layers[-1]
    raw = acts[-1] @ W.T + b
    return layers, acts, raw


def forward_raw(spec: NetSpec, theta, states):
    """Network output before the wrapper, same leading shape as ``states``."""
    _, _, raw = _forward_cache(spec, theta, states)
    return raw.reshape(np.shape(states)[:-1] + (spec.output_dim,))


def forward(spec: NetSpec, theta, states):
    """f_theta evaluated on one state ``(d,)`` or a stack ``(n, d)``."""
    raw = forward_raw(spec, theta, states)
    return apply_wrapper(raw, spec.wrapper, spec.wrapper_bound)


def count_saturated(raw, bound):
    return int(np.count_nonzero(np.abs(np.asarray(raw)) > bound))


def forward_vjp(spec: NetSpec, theta, states, out_adjoint):
    """Outputs, parameter gradient of ``sum(out_adjoint * f_theta(states))`` and raw outputs.

    States are treated as constants.
    """
    cache = _forward_cache(spec, theta, states)
    out = apply_wrapper(cache[2], spec.wrapper, spec.wrapper_bound)
    return out, backward_from_cache(spec, cache, out_adjoint), cache[2]


def backward_from_cache(spec, cache, out_adjoint):
    layers, acts, raw = cache
    delta = np.atleast_2d(out_adjoint) * wrapper_derivative(raw, spec.wrapper, spec.wrapper_bound)
    grads = []
    for layer in range(len(layers) - 1, -1, -1):
        W, _ = layers[layer]
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ acts[layer]).ravel())
        if layer > 0:
            a = acts[layer]
            delta = (delta @ W) * (1.0 - a * a)
    grads.reverse()
    return np.concatenate(grads)


def param_l1(theta) -> float:
    return float(np.sum(np.abs(theta)))


def param_l1_grad(theta):
    return np.sign(theta)


class MLPField:
    """Callable ``z -> f_theta(z)`` bound to a parameter vector; the solver dispatches on it."""

    def __init__(self, spec: NetSpec, theta):
        self.spec = spec
        self.theta = np.array(theta, dtype=float)
        unpack(spec, self.theta)
        self.dim = spec.input_dim

    def __call__(self, z):
        return forward(self.spec, self.theta, z)

    def layers(self):
        return unpack(self.spec, self.theta)


# checkpoint text format -------------------------------------------------------

_HEADER = ("spec_input_dim", "spec_hidden", "spec_wrapper", "spec_wrapper_bound",
           "seed", "epoch", "val_mse")


def save_checkpoint(path, spec: NetSpec, theta, seed=0, epoch=0, val_mse=float("nan")):
    """One ``key = value`` header line per field, then one shortest-round-trip float per line."""
    theta = np.asarray(theta, dtype=float)
    unpack(spec, theta)
    lines = [
        f"spec_input_dim = {spec.input_dim}",
        f"spec_hidden = {','.join(str(h) for h in spec.hidden)}",
        f"spec_wrapper = {spec.wrapper}",
        f"spec_wrapper_bound = {spec.wrapper_bound!r}",
        f"seed = {int(seed)}",
        f"epoch = {int(epoch)}",
        f"val_mse = {float(val_mse)!r}",
    ]
    lines.extend(repr(float(v)) for v in theta)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Returns ``(spec, theta, meta)``."""
    header, values = {}, []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        else:
            values.append(float(line))
    missing = [k for k in _HEADER if k not in header and k != "spec_wrapper_bound"]
    if missing:
        raise ContractError(f"checkpoint {path} lacks header fields {missing}")
    bound = header.get("spec_wrapper_bound")
    spec = NetSpec(
        input_dim=int(header["spec_input_dim"]),
        hidden=tuple(int(h) for h in header["spec_hidden"].split(",")),
        wrapper=header["spec_wrapper"],
        wrapper_bound=float(bound) if bound is not None else None,
    )
    theta = np.array(values)
    unpack(spec, theta)
    meta = {"seed": int(header["seed"]), "epoch": int(header["epoch"]),
            "val_mse": float(header["val_mse"])}
    return spec, theta, meta
