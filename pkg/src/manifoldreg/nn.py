"""Feedforward networks: layer specs, Glorot init, forward pass, and backward
passes with respect to both parameters and inputs.

The backward-by-input pathway is what makes the input-gradient and
input-Jacobian penalties computable; it shares the forward trace with the
ordinary parameter backprop.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, FormatError, LengthError, ParameterError
from .tensor import RngState, as_tensor


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel_h: int
    kernel_w: int
    in_channels: int


@dataclass(frozen=True)
class MaxPool2D:
    pool_h: int
    pool_w: int


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Relu, Conv2D, MaxPool2D, Flatten]


def _chain_shape(shape: tuple[int, ...], layer: LayerSpec, index: int) -> tuple[int, ...]:
    """Output shape of `layer` applied to per-instance input `shape`."""
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise DimensionError(f"layer {index}: Dense needs a flat input, got {shape}")
        if shape[0] != layer.in_dim:
            raise DimensionError(f"layer {index}: Dense expects {layer.in_dim} inputs, got {shape[0]}")
        return (layer.out_dim,)
    if isinstance(layer, Relu):
        return shape
    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise DimensionError(f"layer {index}: Conv2D needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if c != layer.in_channels:
            raise DimensionError(f"layer {index}: Conv2D expects {layer.in_channels} channels, got {c}")
        if h < layer.kernel_h or w < layer.kernel_w:
            raise DimensionError(f"layer {index}: kernel {layer.kernel_h}x{layer.kernel_w} larger than input {h}x{w}")
        # valid convolution, stride 1
        return (layer.filters, h - layer.kernel_h + 1, w - layer.kernel_w + 1)
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            raise DimensionError(f"layer {index}: MaxPool2D needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if h % layer.pool_h or w % layer.pool_w:
            raise DimensionError(
                f"layer {index}: pool {layer.pool_h}x{layer.pool_w} does not tile input {h}x{w}"
            )
        return (c, h // layer.pool_h, w // layer.pool_w)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise ParameterError(f"unknown layer spec {layer!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: input shape plus an ordered layer list ending in a Dense
    (scores stay unbounded reals; any squashing lives in the loss)."""

    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if any(d <= 0 for d in self.input_shape):
            raise ParameterError(f"input shape must be positive, got {self.input_shape}")
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ParameterError("network must end with a Dense layer producing the class scores")
        self.layer_shapes()  # validates chaining

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Per-instance output shape after each layer."""
        shapes = []
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _chain_shape(shape, layer, i)
            shapes.append(shape)
        return shapes

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def input_size(self) -> int:
        return int(np.prod(self.input_shape))


@dataclass
class Params:
    """Learnable weights/biases, one (possibly None) entry per layer."""

    spec: NetworkSpec
    weights: list[Optional[np.ndarray]]
    biases: list[Optional[np.ndarray]]

    def copy(self) -> "Params":
        return Params(
            self.spec,
            [None if w is None else w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (weights then bias per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            if w is not None:
                out.extend([w, b])
        return out


def zeros_like_params(spec: NetworkSpec) -> Params:
    weights: list[Optional[np.ndarray]] = []
    biases: list[Optional[np.ndarray]] = []
    for layer in spec.layers:
        if isinstance(layer, Dense):
            weights.append(np.zeros((layer.out_dim, layer.in_dim)))
            biases.append(np.zeros(layer.out_dim))
        elif isinstance(layer, Conv2D):
            weights.append(np.zeros((layer.filters, layer.in_channels, layer.kernel_h, layer.kernel_w)))
            biases.append(np.zeros(layer.filters))
        else:
            weights.append(None)
            biases.append(None)
    return Params(spec, weights, biases)


def params_add_(dst: Params, src: Params, scale: float = 1.0) -> Params:
    """In-place dst += scale * src over every parameter array."""
    for dw, sw in zip(dst.weights, src.weights):
        if dw is not None:
            dw += scale * sw
    for db, sb in zip(dst.biases, src.biases):
        if db is not None:
            db += scale * sb
    return dst


def init_glorot(spec: NetworkSpec, rng: RngState) -> Params:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases.

    Each layer draws from its own derived stream, so editing one layer does
    not reshuffle the others.
    """
    params = zeros_like_params(spec)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            fan_in, fan_out = layer.in_dim, layer.out_dim
        elif isinstance(layer, Conv2D):
            fan_in = layer.in_channels * layer.kernel_h * layer.kernel_w
            fan_out = layer.filters * layer.kernel_h * layer.kernel_w
        else:
            continue
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        gen = rng.derive(i).generator()
        params.weights[i] = gen.uniform(-bound, bound, size=params.weights[i].shape)
    return params


@dataclass
class ForwardTrace:
    """Cached per-layer inputs (plus pooling argmax / convolution patches)
    from one forward pass; required by both backward passes."""

    params: Params
    inputs: list[np.ndarray] = field(default_factory=list)
    aux: list[Optional[np.ndarray]] = field(default_factory=list)
    scores: Optional[np.ndarray] = None

    @property
    def batch(self) -> int:
        return self.inputs[0].shape[0]


def forward(params: Params, x) -> tuple[np.ndarray, ForwardTrace]:
    """Scores (B, K) for a batch x of shape (B, *input_shape), plus the trace."""
    spec = params.spec
    h = as_tensor(x)
    if h.shape[1:] != spec.input_shape:
        raise DimensionError(f"input shape {h.shape[1:]} does not match network input {spec.input_shape}")
    trace = ForwardTrace(params)
    for i, layer in enumerate(spec.layers):
        trace.inputs.append(h)
        aux = None
        if isinstance(layer, Dense):
            h = h @ params.weights[i].T + params.biases[i]
        elif isinstance(layer, Relu):
            h = np.maximum(h, 0.0)
        elif isinstance(layer, Conv2D):
            h, aux = _conv_forward(layer, params.weights[i], params.biases[i], h)
        elif isinstance(layer, MaxPool2D):
            h, aux = _pool_forward(layer, h)
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
        trace.aux.append(aux)
    trace.scores = h
    return h, trace


def _conv_forward(layer: Conv2D, w: np.ndarray, b: np.ndarray, x: np.ndarray):
    bsz, _, h, wid = x.shape
    oh = h - layer.kernel_h + 1
    ow = wid - layer.kernel_w + 1
    win = sliding_window_view(x, (layer.kernel_h, layer.kernel_w), axis=(2, 3))
    # (B, C, OH, OW, kh, kw) -> (B, OH*OW, C*kh*kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(bsz, oh * ow, -1)
    wmat = w.reshape(layer.filters, -1)
    out = cols @ wmat.T + b
    return out.transpose(0, 2, 1).reshape(bsz, layer.filters, oh, ow), cols


def _pool_forward(layer: MaxPool2D, x: np.ndarray):
    bsz, c, h, w = x.shape
    hp, wp = h // layer.pool_h, w // layer.pool_w
    win = x.reshape(bsz, c, hp, layer.pool_h, wp, layer.pool_w)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, hp, wp, -1)
    idx = win.argmax(axis=-1)  # first maximum wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _backward(trace: ForwardTrace, upstream, want_params: bool, want_input: bool):
    params = trace.params
    spec = params.spec
    g = as_tensor(upstream)
    if g.shape != trace.scores.shape:
        raise DimensionError(f"upstream shape {g.shape} does not match scores {trace.scores.shape}")
    grads = zeros_like_params(spec) if want_params else None
    n_layers = len(spec.layers)
    for i in range(n_layers - 1, -1, -1):
        layer = spec.layers[i]
        x_in = trace.inputs[i]
        propagate = i > 0 or want_input
        if isinstance(layer, Dense):
            if want_params:
                grads.weights[i] = g.T @ x_in
                grads.biases[i] = g.sum(axis=0)
            if propagate:
                g = g @ params.weights[i]
        elif isinstance(layer, Relu):
            if propagate:
                g = g * (x_in > 0.0)
        elif isinstance(layer, Conv2D):
            dx, dw, db = _conv_backward(layer, params.weights[i], x_in, trace.aux[i], g,
                                        want_params, propagate)
            if want_params:
                grads.weights[i] = dw
                grads.biases[i] = db
            if propagate:
                g = dx
        elif isinstance(layer, MaxPool2D):
            if propagate:
                g = _pool_backward(layer, x_in.shape, trace.aux[i], g)
        elif isinstance(layer, Flatten):
            if propagate:
                g = g.reshape(x_in.shape)
    return grads, (g if want_input else None)


def _conv_backward(layer: Conv2D, w, x_in, cols, g, want_params, want_dx):
    bsz, f, oh, ow = g.shape
    gmat = g.reshape(bsz, f, oh * ow).transpose(0, 2, 1)  # (B, OH*OW, F)
    dw = db = dx = None
    if want_params:
        dw = np.einsum("bpf,bpc->fc", gmat, cols).reshape(w.shape)
        db = g.sum(axis=(0, 2, 3))
    if want_dx:
        dcols = gmat @ w.reshape(f, -1)  # (B, OH*OW, C*kh*kw)
        dcols = dcols.reshape(bsz, oh, ow, layer.in_channels, layer.kernel_h, layer.kernel_w)
        dx = np.zeros_like(x_in)
        for ki in range(layer.kernel_h):
            for kj in range(layer.kernel_w):
                dx[:, :, ki:ki + oh, kj:kj + ow] += dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_backward(layer: MaxPool2D, in_shape, idx, g):
    bsz, c, hp, wp = g.shape
    win = np.zeros((bsz, c, hp, wp, layer.pool_h * layer.pool_w))
    np.put_along_axis(win, idx[..., None], g[..., None], axis=-1)
    win = win.reshape(bsz, c, hp, wp, layer.pool_h, layer.pool_w).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(in_shape)


def backward_params(trace: ForwardTrace, upstream) -> Params:
    """Gradient of sum_b upstream[b] . scores[b] w.r.t. every parameter."""
    return _backward(trace, upstream, want_params=True, want_input=False)[0]


def backward_input(trace: ForwardTrace, upstream) -> np.ndarray:
    """Gradient of sum_b upstream[b] . scores[b] w.r.t. the inputs, (B, *input_shape)."""
    return _backward(trace, upstream, want_params=False, want_input=True)[1]


def input_jacobian(params: Params, x) -> np.ndarray:
    """Jacobian d scores / d input for a single instance, shape (K, d).

    K backward passes over one shared trace; dense, so intended for small
    diagnostic networks rather than the training path.
    """
    x = as_tensor(x)
    if x.shape != params.spec.input_shape:
        raise DimensionError(f"expected a single instance of shape {params.spec.input_shape}, got {x.shape}")
    _, trace = forward(params, x[None])
    k = params.spec.output_dim
    jac = np.empty((k, params.spec.input_size))
    basis = np.zeros((1, k))
    for row in range(k):
        basis[0, :] = 0.0
        basis[0, row] = 1.0
        jac[row] = backward_input(trace, basis).reshape(-1)
    return jac


def predict(scores) -> np.ndarray | int:
    """Argmax class per row; ties go to the lowest index."""
    scores = as_tensor(scores)
    if scores.ndim == 1:
        return int(np.argmax(scores))
    return np.argmax(scores, axis=1)


# --- flat binary container for Params -------------------------------------
#
#   magic "MREG1" | u64 layer count | per layer:
#       u64 kind tag | u64 #shape ints | shape ints (u64 each) |
#       weight f64 data then bias f64 data (Dense/Conv2D only), row-major.
#   All integers and floats little-endian.

_MAGIC = b"MREG1"
_TAGS = {Dense: 1, Relu: 2, Conv2D: 3, MaxPool2D: 4, Flatten: 5}


def _layer_shape_ints(layer: LayerSpec) -> tuple[int, ...]:
    if isinstance(layer, Dense):
        return (layer.out_dim, layer.in_dim)
    if isinstance(layer, Conv2D):
        return (layer.filters, layer.in_channels, layer.kernel_h, layer.kernel_w)
    if isinstance(layer, MaxPool2D):
        return (layer.pool_h, layer.pool_w)
    return ()


def params_to_bytes(params: Params) -> bytes:
    chunks = [_MAGIC, struct.pack("<Q", len(params.spec.layers))]
    for i, layer in enumerate(params.spec.layers):
        ints = _layer_shape_ints(layer)
        chunks.append(struct.pack("<QQ", _TAGS[type(layer)], len(ints)))
        chunks.append(struct.pack(f"<{len(ints)}Q", *ints))
        if params.weights[i] is not None:
            chunks.append(np.ascontiguousarray(params.weights[i], dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(params.biases[i], dtype="<f8").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthError("params file truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u64(self, count: int = 1):
        vals = struct.unpack(f"<{count}Q", self.take(8 * count))
        return vals[0] if count == 1 else vals

    def f64_array(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def params_from_bytes(data: bytes, input_shape: Optional[tuple[int, ...]] = None) -> Params:
    """Rebuild Params; input_shape may be omitted when the first layer is Dense."""
    r = _Reader(data)
    if r.take(5) != _MAGIC:
        raise FormatError("bad magic: not a params file")
    n_layers = r.u64()
    layers: list[LayerSpec] = []
    payloads: list[Optional[tuple[np.ndarray, np.ndarray]]] = []
    for _ in range(n_layers):
        tag = r.u64()
        n_ints = r.u64()
        ints = [r.u64() for _ in range(n_ints)]
        if tag == 1:
            if len(ints) != 2:
                raise FormatError("Dense record needs 2 shape ints")
            out_dim, in_dim = ints
            layers.append(Dense(in_dim, out_dim))
            payloads.append((r.f64_array((out_dim, in_dim)), r.f64_array((out_dim,))))
        elif tag == 2:
            layers.append(Relu())
            payloads.append(None)
        elif tag == 3:
            if len(ints) != 4:
                raise FormatError("Conv2D record needs 4 shape ints")
            f, c, kh, kw = ints
            layers.append(Conv2D(f, kh, kw, c))
            payloads.append((r.f64_array((f, c, kh, kw)), r.f64_array((f,))))
        elif tag == 4:
            if len(ints) != 2:
                raise FormatError("MaxPool2D record needs 2 shape ints")
            layers.append(MaxPool2D(ints[0], ints[1]))
            payloads.append(None)
        elif tag == 5:
            layers.append(Flatten())
            payloads.append(None)
        else:
            raise FormatError(f"unknown layer tag {tag}")
    if r.pos != len(data):
        raise LengthError("trailing bytes after last layer record")
    if input_shape is None:
        if not layers or not isinstance(layers[0], Dense):
            raise ParameterError("input_shape required unless the first layer is Dense")
        input_shape = (layers[0].in_dim,)
    spec = NetworkSpec(tuple(input_shape), tuple(layers))
    params = zeros_like_params(spec)
    for i, payload in enumerate(payloads):
        if payload is not None:
            w, b = payload
            if w.shape != params.weights[i].shape:
                raise FormatError(f"layer {i} payload shape {w.shape} does not match spec")
            params.weights[i] = w
            params.biases[i] = b
    return params


def save_params(params: Params, path) -> None:
    with open(path, "wb") as f:
        f.write(params_to_bytes(params))


def load_params(path, input_shape: Optional[tuple[int, ...]] = None) -> Params:
    with open(path, "rb") as f:
        return params_from_bytes(f.read(), input_shape)
