"""Two-conv-block CNN built on plain numpy arrays.

Layers are pure functions: every forward pass takes explicit inputs (plus an
explicit RNG for dropout) and returns explicit outputs, so the same code runs
in float32 for training and float64 for gradient checking. Convolutions are
valid (no padding), stride 1; pooling uses floor semantics (a trailing odd
row/column is dropped).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import ShapeError

HEADS = ("sigmoid", "svm")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    conv_blocks lists (kernel_count, kernel_side, pool_side) per block;
    dense_widths lists hidden fully-connected widths. The output layer always
    has output_units linear units, passed through the configured head.
    """

    input_side: int = 64
    conv_blocks: tuple[tuple[int, int, int], ...] = ((128, 3, 2), (256, 3, 2))
    dense_widths: tuple[int, ...] = (64, 32, 16)
    output_units: int = 2
    dropout_rate: float = 0.2
    head: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks",
                           tuple(tuple(b) for b in self.conv_blocks))
        object.__setattr__(self, "dense_widths", tuple(self.dense_widths))
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if not self.conv_blocks:
            raise ValueError("at least one conv block is required")
        if self.output_units < 1:
            raise ValueError("output_units must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for kernels, kside, pside in self.conv_blocks:
            if kernels < 1 or kside < 1 or pside < 1:
                raise ValueError(f"invalid conv block ({kernels}, {kside}, {pside})")
        if any(w < 1 for w in self.dense_widths):
            raise ValueError("dense widths must be positive")
        self.spatial_sides()  # raises if any extent collapses below 1

    def spatial_sides(self) -> list[int]:
        """Spatial side after each stage: input, then conv and pool per block."""
        sides = [self.input_side]
        for i, (_, kside, pside) in enumerate(self.conv_blocks):
            after_conv = sides[-1] - (kside - 1)
            if after_conv < 1:
                raise ShapeError(
                    f"conv block {i + 1}: side {sides[-1]} too small for "
                    f"{kside}x{kside} kernel")
            after_pool = after_conv // pside
            if after_pool < 1:
                raise ShapeError(
                    f"conv block {i + 1}: side {after_conv} too small for "
                    f"{pside}x{pside} pooling")
            sides.extend([after_conv, after_pool])
        return sides

    @property
    def flatten_size(self) -> int:
        return self.conv_blocks[-1][0] * self.spatial_sides()[-1] ** 2

    def to_dict(self) -> dict:
        return {
            "input_side": self.input_side,
            "conv_blocks": [list(b) for b in self.conv_blocks],
            "dense_widths": list(self.dense_widths),
            "output_units": self.output_units,
            "dropout_rate": self.dropout_rate,
            "head": self.head,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            input_side=int(d["input_side"]),
            conv_blocks=tuple(tuple(int(v) for v in b) for b in d["conv_blocks"]),
            dense_widths=tuple(int(w) for w in d["dense_widths"]),
            output_units=int(d["output_units"]),
            dropout_rate=float(d["dropout_rate"]),
            head=str(d["head"]),
        )


@dataclass
class ParamSet:
    """Learnable tensors in fixed declaration order: conv blocks first, then
    hidden dense layers, then the output layer."""

    conv_weights: list[np.ndarray]
    conv_biases: list[np.ndarray]
    dense_weights: list[np.ndarray]  # hidden layers, output layer last
    dense_biases: list[np.ndarray]

    def named_tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, (w, b) in enumerate(zip(self.conv_weights, self.conv_biases), 1):
            yield f"conv{i}.weight", w
            yield f"conv{i}.bias", b
        last = len(self.dense_weights)
        for i, (w, b) in enumerate(zip(self.dense_weights, self.dense_biases), 1):
            name = "output" if i == last else f"dense{i}"
            yield f"{name}.weight", w
            yield f"{name}.bias", b

    def tensors(self) -> Iterator[np.ndarray]:
        for _, t in self.named_tensors():
            yield t

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParamSet":
        return ParamSet(
            conv_weights=[fn(t) for t in self.conv_weights],
            conv_biases=[fn(t) for t in self.conv_biases],
            dense_weights=[fn(t) for t in self.dense_weights],
            dense_biases=[fn(t) for t in self.dense_biases],
        )


def zip_map(fn: Callable[..., np.ndarray], *sets: ParamSet) -> ParamSet:
    """Apply fn elementwise across the matching tensors of several ParamSets."""
    def over(lists):
        return [fn(*ts) for ts in zip(*lists)]

    return ParamSet(
        conv_weights=over([s.conv_weights for s in sets]),
        conv_biases=over([s.conv_biases for s in sets]),
        dense_weights=over([s.dense_weights for s in sets]),
        dense_biases=over([s.dense_biases for s in sets]),
    )


def param_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Expected tensor shapes in declaration order, fully determined by spec."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    in_channels = 1
    for i, (kernels, kside, _) in enumerate(spec.conv_blocks, 1):
        shapes.append((f"conv{i}.weight", (kernels, in_channels, kside, kside)))
        shapes.append((f"conv{i}.bias", (kernels,)))
        in_channels = kernels
    fan = spec.flatten_size
    widths = list(spec.dense_widths) + [spec.output_units]
    last = len(widths)
    for i, width in enumerate(widths, 1):
        name = "output" if i == last else f"dense{i}"
        shapes.append((f"{name}.weight", (width, fan)))
        shapes.append((f"{name}.bias", (width,)))
        fan = width
    return shapes


def validate_params(spec: NetworkSpec, params: ParamSet) -> None:
    expected = param_shapes(spec)
    actual = list(params.named_tensors())
    if len(actual) != len(expected):
        raise ShapeError(
            f"parameter count mismatch: expected {len(expected)} tensors, "
            f"got {len(actual)}")
    for (name, shape), (aname, tensor) in zip(expected, actual):
        if tensor.shape != shape:
            raise ShapeError(
                f"{name}: expected shape {shape}, got {tensor.shape}")
        if aname != name:
            raise ShapeError(f"parameter order mismatch: {aname} where {name} expected")


def init_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> ParamSet:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.

    The same seed always yields bit-identical parameters.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    conv_w, conv_b = [], []
    in_channels = 1
    for kernels, kside, _ in spec.conv_blocks:
        fan_in = in_channels * kside * kside
        fan_out = kernels * kside * kside
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        shape = (kernels, in_channels, kside, kside)
        conv_w.append(rng.uniform(-bound, bound, shape).astype(dtype))
        conv_b.append(np.zeros(kernels, dtype=dtype))
        in_channels = kernels
    dense_w, dense_b = [], []
    fan = spec.flatten_size
    for width in list(spec.dense_widths) + [spec.output_units]:
        bound = np.sqrt(6.0 / (fan + width))
        dense_w.append(rng.uniform(-bound, bound, (width, fan)).astype(dtype))
        dense_b.append(np.zeros(width, dtype=dtype))
        fan = width
    return ParamSet(conv_w, conv_b, dense_w, dense_b)


def zeros_like_params(params: ParamSet) -> ParamSet:
    return params.map(np.zeros_like)


# ---------------------------------------------------------------------------
# Individual layers. Spatial ops accept a single image (C, H, W) or a batch
# (B, C, H, W) and return the matching rank.
# ---------------------------------------------------------------------------

def _as_batch(x: np.ndarray, expected_ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == expected_ndim:
        return x[None], True
    if x.ndim == expected_ndim + 1:
        return x, False
    raise ShapeError(
        f"expected a {expected_ndim}-d tensor or a batch of them, "
        f"got ndim={x.ndim}")


def conv2d_forward(x: np.ndarray, kernels: np.ndarray,
                   bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1.

    out[k, i, j] = bias[k] + sum_{c,u,v} x[c, i+u, j+v] * kernels[k, c, u, v].
    """
    xb, squeeze = _as_batch(x, 3)
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be 4-d (K, C, kh, kw), got ndim={kernels.ndim}")
    K, C, kh, kw = kernels.shape
    if xb.shape[1] != C:
        raise ShapeError(
            f"input channels ({xb.shape[1]}) do not match kernel channels ({C})")
    if bias.shape != (K,):
        raise ShapeError(f"bias must have shape ({K},), got {bias.shape}")
    if xb.shape[2] < kh or xb.shape[3] < kw:
        raise ShapeError(
            f"input {xb.shape[2]}x{xb.shape[3]} smaller than kernel {kh}x{kw}")
    windows = np.lib.stride_tricks.sliding_window_view(xb, (kh, kw), axis=(2, 3))
    out = np.einsum("bcijuv,kcuv->bkij", windows, kernels, optimize=True)
    out += bias[None, :, None, None]
    out = out.astype(xb.dtype, copy=False)
    return out[0] if squeeze else out


def conv2d_backward(x: np.ndarray, kernels: np.ndarray,
                    upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of conv2d_forward: (input_grad, kernel_grad, bias_grad).

    When x carries a batch dimension the parameter gradients sum over it, so
    the result is the vector-Jacobian product for the whole batch.
    """
    xb, squeeze = _as_batch(x, 3)
    ub, usq = _as_batch(upstream, 3)
    if squeeze != usq:
        raise ShapeError("input and upstream gradient disagree on batching")
    K, C, kh, kw = kernels.shape
    oh, ow = xb.shape[2] - kh + 1, xb.shape[3] - kw + 1
    if ub.shape != (xb.shape[0], K, oh, ow):
        raise ShapeError(
            f"upstream gradient shape {ub.shape} does not match forward "
            f"output ({xb.shape[0]}, {K}, {oh}, {ow})")

    windows = np.lib.stride_tricks.sliding_window_view(xb, (kh, kw), axis=(2, 3))
    kernel_grad = np.einsum("bcijuv,bkij->kcuv", windows, ub, optimize=True)
    bias_grad = ub.sum(axis=(0, 2, 3))

    # Full correlation of the padded upstream with 180-degree-flipped kernels.
    padded = np.pad(ub, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    up_windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    flipped = kernels[:, :, ::-1, ::-1]
    input_grad = np.einsum("bkxyuv,kcuv->bcxy", up_windows, flipped, optimize=True)

    dt = xb.dtype
    input_grad = input_grad.astype(dt, copy=False)
    kernel_grad = kernel_grad.astype(dt, copy=False)
    bias_grad = bias_grad.astype(dt, copy=False)
    if squeeze:
        input_grad = input_grad[0]
    return input_grad, kernel_grad, bias_grad


def maxpool2d_forward(x: np.ndarray, pool_side: int = 2
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint pool_side x pool_side max pooling with floor semantics.

    Returns (output, argmax) where argmax holds, per output cell, the flat
    index of the winning position within its (H, W) plane; ties resolve to
    the first occurrence in row-major order.
    """
    xb, squeeze = _as_batch(x, 3)
    B, C, H, W = xb.shape
    if H < pool_side or W < pool_side:
        raise ShapeError(f"input {H}x{W} smaller than pool window {pool_side}")
    oh, ow = H // pool_side, W // pool_side
    cropped = xb[:, :, :oh * pool_side, :ow * pool_side]
    tiles = cropped.reshape(B, C, oh, pool_side, ow, pool_side)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, oh, ow, -1)
    local = tiles.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(tiles, local[..., None], axis=-1)[..., 0]

    rows = (np.arange(oh) * pool_side)[None, None, :, None] + local // pool_side
    cols = (np.arange(ow) * pool_side)[None, None, None, :] + local % pool_side
    argmax = rows * W + cols
    if squeeze:
        return out[0], argmax[0]
    return out, argmax


def maxpool2d_backward(argmax: np.ndarray, upstream: np.ndarray,
                       input_hw: tuple[int, int]) -> np.ndarray:
    """Route each upstream value to its recorded argmax position."""
    ab, squeeze = _as_batch(argmax, 3)
    ub, usq = _as_batch(upstream, 3)
    if ab.shape != ub.shape:
        raise ShapeError(
            f"argmax shape {argmax.shape} does not match upstream {upstream.shape}")
    H, W = input_hw
    if ab.size and (ab.min() < 0 or ab.max() >= H * W):
        raise ShapeError("argmax index out of range; pooling trace is corrupt")
    B, C = ab.shape[:2]
    grad = np.zeros((B, C, H * W), dtype=ub.dtype)
    b_idx, c_idx = np.meshgrid(np.arange(B), np.arange(C), indexing="ij")
    b_idx = b_idx[:, :, None, None]
    c_idx = c_idx[:, :, None, None]
    np.add.at(grad, (b_idx, c_idx, ab), ub)
    grad = grad.reshape(B, C, H, W)
    return grad[0] if squeeze and usq else grad


def dense_forward(x: np.ndarray, weights: np.ndarray,
                  bias: np.ndarray) -> np.ndarray:
    """out = weights @ x + bias, vectorized over an optional batch axis."""
    if weights.ndim != 2:
        raise ShapeError(f"weights must be 2-d, got ndim={weights.ndim}")
    M, N = weights.shape
    if bias.shape != (M,):
        raise ShapeError(f"bias must have shape ({M},), got {bias.shape}")
    if x.shape[-1] != N:
        raise ShapeError(
            f"input features ({x.shape[-1]}) do not match weight columns ({N})")
    return x @ weights.T + bias


def dense_backward(x: np.ndarray, weights: np.ndarray, upstream: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Transpose-product rule: (input_grad, weight_grad, bias_grad)."""
    if upstream.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"upstream features ({upstream.shape[-1]}) do not match "
            f"weight rows ({weights.shape[0]})")
    input_grad = upstream @ weights
    if x.ndim == 1:
        weight_grad = np.outer(upstream, x)
        bias_grad = upstream.copy()
    else:
        weight_grad = upstream.T @ x
        bias_grad = upstream.sum(axis=0)
    return input_grad, weight_grad, bias_grad


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient 0 at x == 0
    return upstream * (x > 0)


def dropout(x: np.ndarray, rate: float, training: bool,
            rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout: zero with probability rate, scale survivors by
    1/(1-rate). Inference mode is the identity. Returns (output, keep_mask)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("training-mode dropout requires an explicit rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * mask / (1.0 - rate), mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function; output strictly in (0, 1)."""
    out = np.empty_like(x, dtype=np.result_type(x.dtype, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# Whole-network forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Per-layer caches for the backward pass."""

    training: bool
    conv_inputs: list[np.ndarray] = field(default_factory=list)
    conv_pre_relu: list[np.ndarray] = field(default_factory=list)
    pool_argmax: list[np.ndarray] = field(default_factory=list)
    pool_input_hw: list[tuple[int, int]] = field(default_factory=list)
    dense_inputs: list[np.ndarray] = field(default_factory=list)
    dense_pre_relu: list[np.ndarray] = field(default_factory=list)
    dropout_masks: list[np.ndarray] = field(default_factory=list)
    head_input: np.ndarray | None = None
    head_output: np.ndarray | None = None


def forward(spec: NetworkSpec, params: ParamSet, batch: np.ndarray,
            training: bool = False, rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network on a batch (B, 1, S, S).

    The sigmoid head squashes the two output units elementwise; the svm head
    leaves them as raw margins. Returns (head outputs (B, output_units), trace).
    """
    if batch.ndim != 4:
        raise ShapeError(f"batch must be 4-d (B, 1, S, S), got ndim={batch.ndim}")
    side = spec.input_side
    if batch.shape[1] != 1 or batch.shape[2] != side or batch.shape[3] != side:
        raise ShapeError(
            f"batch shape {batch.shape[1:]} does not match spec input (1, {side}, {side})")
    if training and spec.dropout_rate > 0 and rng is None:
        raise ValueError("training-mode forward requires an explicit rng for dropout")

    trace = ForwardTrace(training=training)
    x = batch
    for (kernels_n, _, pool_side), w, b in zip(spec.conv_blocks,
                                               params.conv_weights,
                                               params.conv_biases):
        trace.conv_inputs.append(x)
        z = conv2d_forward(x, w, b)
        trace.conv_pre_relu.append(z)
        a = relu(z)
        trace.pool_input_hw.append(a.shape[-2:])
        x, argmax = maxpool2d_forward(a, pool_side)
        trace.pool_argmax.append(argmax)

    x = x.reshape(x.shape[0], -1)
    n_hidden = len(spec.dense_widths)
    for i in range(n_hidden):
        trace.dense_inputs.append(x)
        z = dense_forward(x, params.dense_weights[i], params.dense_biases[i])
        trace.dense_pre_relu.append(z)
        a = relu(z)
        x, mask = dropout(a, spec.dropout_rate, training, rng)
        trace.dropout_masks.append(mask)

    trace.dense_inputs.append(x)
    z = dense_forward(x, params.dense_weights[-1], params.dense_biases[-1])
    trace.head_input = z
    out = sigmoid(z) if spec.head == "sigmoid" else z
    trace.head_output = out
    return out, trace


def backward(spec: NetworkSpec, params: ParamSet, trace: ForwardTrace,
             output_grad: np.ndarray) -> ParamSet:
    """Exact vector-Jacobian product of forward with respect to every parameter.

    output_grad is the gradient of the training scalar with respect to the
    head outputs; when that scalar is a per-batch mean (as both losses are),
    the returned ParamSet is the batch-averaged gradient.
    """
    if trace.head_output is None or trace.head_input is None:
        raise ShapeError("trace is incomplete; run forward first")
    if output_grad.shape != trace.head_output.shape:
        raise ShapeError(
            f"output_grad shape {output_grad.shape} does not match head "
            f"outputs {trace.head_output.shape}")
    n_hidden = len(spec.dense_widths)
    if len(trace.dense_inputs) != n_hidden + 1 or \
            len(trace.conv_inputs) != len(spec.conv_blocks):
        raise ShapeError("trace does not match the given spec")

    if spec.head == "sigmoid":
        y = trace.head_output
        g = output_grad * y * (1.0 - y)
    else:
        g = output_grad

    dense_w_grads = [None] * (n_hidden + 1)
    dense_b_grads = [None] * (n_hidden + 1)
    g, dense_w_grads[-1], dense_b_grads[-1] = dense_backward(
        trace.dense_inputs[-1], params.dense_weights[-1], g)

    keep = 1.0 - spec.dropout_rate
    for i in reversed(range(n_hidden)):
        if trace.training and spec.dropout_rate > 0:
            g = g * trace.dropout_masks[i] / keep
        g = relu_backward(trace.dense_pre_relu[i], g)
        g, dense_w_grads[i], dense_b_grads[i] = dense_backward(
            trace.dense_inputs[i], params.dense_weights[i], g)

    last_channels = spec.conv_blocks[-1][0]
    last_side = spec.spatial_sides()[-1]
    g = g.reshape(g.shape[0], last_channels, last_side, last_side)

    conv_w_grads = [None] * len(spec.conv_blocks)
    conv_b_grads = [None] * len(spec.conv_blocks)
    for i in reversed(range(len(spec.conv_blocks))):
        g = maxpool2d_backward(trace.pool_argmax[i], g, trace.pool_input_hw[i])
        g = relu_backward(trace.conv_pre_relu[i], g)
        g, conv_w_grads[i], conv_b_grads[i] = conv2d_backward(
            trace.conv_inputs[i], params.conv_weights[i], g)

    return ParamSet(conv_w_grads, conv_b_grads, dense_w_grads, dense_b_grads)
