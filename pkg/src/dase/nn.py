"""Small dense networks with hand-written backprop, Adam and soft target updates.

Everything runs in float64 on numpy arrays. Inputs may be a single vector
or a 2-D batch of row vectors; outputs follow the same shape convention.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Callable

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")
_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
_MAGIC = b"DNET"


class ShapeError(ValueError):
    """Raised when array shapes do not line up with a network."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class GradientBundle:
    """Per-parameter gradients in the same order as ``DenseNet.params``."""

    grads: list[np.ndarray]
    input_grad: np.ndarray
    loss: float = 0.0


class DenseNet:
    """Feed-forward MLP. ``output_scale`` multiplies the final activation."""

    def __init__(self, layers: list[Layer], output_scale: float = 1.0):
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        for layer in layers:
            if layer.activation not in _ACT_CODE:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError("bias shape does not match weight rows")
        self.layers = layers
        self.output_scale = float(output_scale)

    @classmethod
    def mlp(
        cls,
        sizes: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        output_scale: float = 1.0,
    ) -> "DenseNet":
        """Build an MLP with fan-in uniform init, U(-1/sqrt(in), 1/sqrt(in))."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            act = output_activation if i == len(sizes) - 2 else hidden_activation
            layers.append(Layer(w, b, act))
        return cls(layers, output_scale=output_scale)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "DenseNet":
        return copy.deepcopy(self)

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.input_dim:
            raise ShapeError(f"expected input with last dim {self.input_dim}, got shape {x.shape}")
        return x

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        h = x
        for layer in self.layers:
            h = _affine_activate(h, layer)
        return h * self.output_scale if self.output_scale != 1.0 else h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass that also returns the per-layer activations for ``backward_cached``."""
        x = self._check_input(x)
        acts = [x]
        h = x
        for layer in self.layers:
            h = _affine_activate(h, layer)
            acts.append(h)
        out = h * self.output_scale if self.output_scale != 1.0 else h
        return out, acts

    def backward_cached(
        self, acts: list[np.ndarray], upstream: np.ndarray, param_grads: bool = True, input_grad: bool = True
    ) -> GradientBundle:
        """Gradient of ``sum(upstream * output)`` w.r.t. every parameter and the input.

        Switching off ``param_grads`` or ``input_grad`` skips that work; the skipped
        entries come back empty.
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != acts[-1].shape:
            raise ShapeError(f"upstream shape {upstream.shape} != output shape {acts[-1].shape}")
        batched = acts[0].ndim == 2
        g = upstream * self.output_scale if self.output_scale != 1.0 else upstream
        grads: list[np.ndarray] = []
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            g = g * _activation_grad(acts[idx + 1], layer.activation)
            h_in = acts[idx]
            if param_grads:
                if batched:
                    grads.append(g.sum(axis=0))
                    grads.append(g.T @ h_in)
                else:
                    grads.append(g.copy())
                    grads.append(np.outer(g, h_in))
            if idx > 0 or input_grad:
                g = g @ layer.weight
        grads.reverse()
        return GradientBundle(grads=grads, input_grad=g if input_grad else np.empty(0))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _affine_activate(h: np.ndarray, layer: Layer) -> np.ndarray:
    # same arithmetic as _activate(h @ W.T + b), without the temporaries
    z = h @ layer.weight.T
    z += layer.bias
    if layer.activation == "relu":
        np.maximum(z, 0.0, out=z)
    elif layer.activation == "tanh":
        np.tanh(z, out=z)
    return z


def _activation_grad(out: np.ndarray, kind: str) -> np.ndarray | float:
    # expressed through the layer output, which is what the cache keeps
    if kind == "relu":
        return (out > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - out * out
    return 1.0


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return net(x)


def backward(net: DenseNet, x: np.ndarray, upstream_grad: np.ndarray) -> GradientBundle:
    _, acts = net.forward_cached(x)
    return net.backward_cached(acts, upstream_grad)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float, **kw) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """One bias-corrected Adam update, applied in place to ``params``.

    Non-finite gradients raise ``FloatingPointError`` before anything is touched.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient passed to adam_step")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    step_size = state.lr / bc1
    inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        gg = g * g
        gg *= 1.0 - b2
        v += gg
        # lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections folded into scalars
        denom = np.sqrt(v, out=gg)
        denom *= inv_sqrt_bc2
        denom += state.eps
        step = m * step_size
        step /= denom
        p -= step
    return params


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> DenseNet:
    """Polyak averaging: target <- tau * source + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    tp, sp = target.params, source.params
    if len(tp) != len(sp) or any(a.shape != b.shape for a, b in zip(tp, sp)):
        raise ShapeError("target and source networks have different shapes")
    for t, s in zip(tp, sp):
        if tau == 1.0:
            t[...] = s
        else:
            t *= 1.0 - tau
            t += tau * s
    return target


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + h
        fp = f()
        arr[idx] = orig - h
        fm = f()
        arr[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


# -- serialization -----------------------------------------------------------
# Layout (little-endian): b"DNET", u32 n_layers, f64 output_scale, then per layer
# u8 activation code, u32 out, u32 in; followed by every layer's weight then bias
# as raw float64 in C order.


def save_net(net: DenseNet, fh: BinaryIO) -> None:
    fh.write(_MAGIC)
    fh.write(struct.pack("<Id", len(net.layers), net.output_scale))
    for layer in net.layers:
        fh.write(struct.pack("<BII", _ACT_CODE[layer.activation], layer.out_dim, layer.in_dim))
    for layer in net.layers:
        fh.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_net(fh: BinaryIO) -> DenseNet:
    if fh.read(4) != _MAGIC:
        raise ValueError("not a serialized DenseNet")
    n_layers, scale = struct.unpack("<Id", fh.read(12))
    shapes = [struct.unpack("<BII", fh.read(9)) for _ in range(n_layers)]
    layers = []
    for code, out_dim, in_dim in shapes:
        w = np.frombuffer(fh.read(8 * out_dim * in_dim), dtype="<f8").reshape(out_dim, in_dim)
        b = np.frombuffer(fh.read(8 * out_dim), dtype="<f8")
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64), ACTIVATIONS[code]))
    return DenseNet(layers, output_scale=scale)


def save_arrays(arrays: list[np.ndarray], fh: BinaryIO) -> None:
    """Shape header (u32 count; per array u32 ndim + u32 dims) then float64 data."""
    fh.write(struct.pack("<I", len(arrays)))
    for a in arrays:
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
    for a in arrays:
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_arrays(fh: BinaryIO) -> list[np.ndarray]:
    (count,) = struct.unpack("<I", fh.read(4))
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", fh.read(4))
        shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
    out = []
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        out.append(np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape).astype(np.float64))
    return out
