"""Fixed-topology multilayer perceptrons with analytic gradients.

All parameters of a network live in one flat float64 vector; per-layer
weight/bias arrays are views into it. That keeps Adam and Polyak updates to a
single vectorised kernel call and makes snapshots trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from infoflow.backend import kernels

ACTIVATIONS = {"linear": 0, "tanh": 1, "relu": 2}

SNAPSHOT_MAGIC = "infoflow-mlp"


class ShapeError(ValueError):
    """Input or parameter shape does not match the network."""


class NumericError(FloatingPointError):
    """A non-finite value reached a loss, gradient or parameter."""


def _n_params(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(eq=False)
class MlpNet:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_activation: str = "linear"
    output_scale: float = 1.0
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ShapeError(f"invalid layer sizes {self.layer_sizes}")
        if self.hidden_activation not in ("tanh", "relu"):
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        n = _n_params(self.layer_sizes)
        if self.params is None:
            self.params = np.zeros(n)
        else:
            self.params = np.ascontiguousarray(self.params, dtype=np.float64)
            if self.params.shape != (n,):
                raise ShapeError(f"expected {n} parameters, got {self.params.shape}")
        self._sizes = np.asarray(self.layer_sizes, dtype=np.int64)
        self._hid = ACTIVATIONS[self.hidden_activation]
        self._out = ACTIVATIONS[self.output_activation]

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def unflatten(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat parameter-shaped vector into per-layer (W, b) views."""
        out = []
        off = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = flat[off:off + n_in * n_out].reshape(n_in, n_out)
            off += n_in * n_out
            out.append((W, flat[off:off + n_out]))
            off += n_out
        return out

    @property
    def weights(self) -> list[np.ndarray]:
        return [W for W, _ in self.unflatten(self.params)]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self.unflatten(self.params)]

    def param_path(self, index: int) -> str:
        """Human-readable name of the flat parameter at ``index``."""
        off = 0
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if index < off + n_in * n_out:
                r, c = divmod(index - off, n_out)
                return f"layer{i}.weight[{r},{c}]"
            off += n_in * n_out
            if index < off + n_out:
                return f"layer{i}.bias[{index - off}]"
            off += n_out
        raise IndexError(index)

    def copy(self) -> MlpNet:
        return MlpNet(self.layer_sizes, self.hidden_activation, self.output_activation,
                      self.output_scale, self.params.copy())

    def same_architecture(self, other: MlpNet) -> bool:
        return (self.layer_sizes == other.layer_sizes
                and self.hidden_activation == other.hidden_activation
                and self.output_activation == other.output_activation
                and self.output_scale == other.output_scale)


def init_mlp(layer_sizes, rng: np.random.Generator, hidden_activation: str = "tanh",
             output_activation: str = "linear", output_scale: float = 1.0,
             final_layer_scale: float = 1.0) -> MlpNet:
    """Fan-in scaled uniform init: W ~ U(-1/sqrt(n_in), 1/sqrt(n_in)), same for b.

    ``final_layer_scale`` shrinks the last layer, as is customary for DDPG
    actor/critic heads.
    """
    net = MlpNet(layer_sizes, hidden_activation, output_activation, output_scale)
    layers = net.unflatten(net.params)
    for i, (W, b) in enumerate(layers):
        bound = 1.0 / np.sqrt(W.shape[0])
        if i == len(layers) - 1:
            bound *= final_layer_scale
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return net


def _as_batch(net: MlpNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ShapeError(f"input shape {x.shape} incompatible with network input dim {net.n_inputs}")
    return np.ascontiguousarray(x), single


def _workspace(net: MlpNet, batch: int) -> np.ndarray:
    return np.empty(batch * sum(net.layer_sizes))


@dataclass
class ForwardCache:
    """Activations of one forward pass, consumed by :func:`backward`."""
    work: np.ndarray
    batch: int
    single: bool


def forward(net: MlpNet, x) -> np.ndarray:
    """Evaluate the network on one input vector or a (B, n_in) batch."""
    xb, single = _as_batch(net, x)
    out = kernels.mlp_forward(net.params, net._sizes, net._hid, net._out,
                              float(net.output_scale), xb, _workspace(net, xb.shape[0]))
    return out[0] if single else out


def forward_cached(net: MlpNet, x) -> tuple[np.ndarray, ForwardCache]:
    xb, single = _as_batch(net, x)
    work = _workspace(net, xb.shape[0])
    out = kernels.mlp_forward(net.params, net._sizes, net._hid, net._out,
                              float(net.output_scale), xb, work)
    return (out[0] if single else out), ForwardCache(work, xb.shape[0], single)


def backward(net: MlpNet, cache: ForwardCache, dout) -> tuple[np.ndarray, np.ndarray]:
    """Return (flat parameter gradient, input gradient) for output gradient ``dout``.

    Parameter gradients are summed over the batch.
    """
    d = np.asarray(dout, dtype=np.float64)
    if cache.single and d.ndim == 1:
        d = d[None, :]
    if d.shape != (cache.batch, net.n_outputs):
        raise ShapeError(f"output gradient shape {d.shape} != {(cache.batch, net.n_outputs)}")
    g = np.empty_like(net.params)
    dx = np.empty((cache.batch, net.n_inputs))
    kernels.mlp_backward(net.params, net._sizes, net._hid, net._out, float(net.output_scale),
                         cache.work, np.ascontiguousarray(d), g, dx)
    return g, (dx[0] if cache.single else dx)


def grad(net: MlpNet, x, loss_grad_at_output) -> np.ndarray:
    """Flat gradient of a loss w.r.t. every parameter, given dL/d(output)."""
    _, cache = forward_cached(net, x)
    g, _ = backward(net, cache, loss_grad_at_output)
    return g


@dataclass
class Adam:
    """Optimizer state: first/second moment accumulators mirroring the parameters."""
    lr: float
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_net(cls, net: MlpNet, lr: float, **kw) -> Adam:
        return cls(lr=lr, m=np.zeros_like(net.params), v=np.zeros_like(net.params), **kw)


def optimizer_step(net: MlpNet, grads: np.ndarray, state: Adam) -> None:
    """Apply one Adam step to ``net`` in place."""
    if grads.shape != net.params.shape or state.m.shape != net.params.shape:
        raise ShapeError("gradient / optimizer state shape does not match parameters")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericError(f"non-finite gradient at {net.param_path(bad)}")
    state.step_count += 1
    kernels.adam_update(net.params, np.ascontiguousarray(grads), state.m, state.v,
                        state.lr, state.beta1, state.beta2, state.eps, state.step_count)


def polyak_update(target: MlpNet, source: MlpNet, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, in place."""
    if not target.same_architecture(source):
        raise ShapeError(f"architecture mismatch: {target.layer_sizes} vs {source.layer_sizes}")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    kernels.polyak(target.params, source.params, float(tau))


def save_params(net: MlpNet, path) -> None:
    """Write a plain-text snapshot.

    Line 1 is a header
    ``# infoflow-mlp layers=4,64,64,2 hidden=tanh output=linear scale=1.0``;
    then one parameter per line in ``%.17g`` (round-trips float64 exactly),
    in flat layout order.
    """
    header = (f"{SNAPSHOT_MAGIC} layers={','.join(map(str, net.layer_sizes))} "
              f"hidden={net.hidden_activation} output={net.output_activation} "
              f"scale={net.output_scale!r}")
    np.savetxt(Path(path), net.params, fmt="%.17g", header=header)


def load_params(path) -> MlpNet:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
    fields = header.lstrip("#").split()
    if not fields or fields[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not an infoflow network snapshot")
    meta = dict(f.split("=", 1) for f in fields[1:])
    params = np.atleast_1d(np.loadtxt(path, dtype=np.float64))
    return MlpNet(tuple(int(n) for n in meta["layers"].split(",")), meta["hidden"],
                  meta["output"], float(meta["scale"]), params)
