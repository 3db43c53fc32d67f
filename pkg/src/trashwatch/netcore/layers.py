"""Layer zoo: convolution, max-pooling, activations and the detection head.

Every layer has an exact backward pass. Forward functions return an
opaque cache that the matching backward consumes, so layers hold weights
but no per-call state and inference stays thread-safe.

Convolution is cross-correlation (no kernel flip) over NCHW tensors,
implemented as im2col plus one matrix product per direction.
"""

import numpy as np

from .tensor import DTYPE, Tensor, zeros


class ShapeError(ValueError):
    """Raised when an input does not fit a layer's declared geometry."""


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _im2col(x: Tensor, kernel: int, stride: int, pad: int):
    """Unfold x (N,C,H,W) into columns of shape (C*k*k, N*oh*ow)."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - kernel) // stride + 1
    ow = (wp - kernel) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(c, kernel, kernel, n, oh, ow),
        strides=(s1, s2, s3, s0, s2 * stride, s3 * stride),
        writeable=False,
    )
    cols = np.ascontiguousarray(view).reshape(c * kernel * kernel, n * oh * ow)
    return cols, oh, ow


def _col2im(col_grad: Tensor, x_shape, kernel: int, stride: int, pad: int, oh: int, ow: int) -> Tensor:
    """Scatter-add column gradients back onto the (padded) input."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    gx = np.zeros((n, c, hp, wp), dtype=col_grad.dtype)
    col_grad = col_grad.reshape(c, kernel, kernel, n, oh, ow)
    for ki in range(kernel):
        for kj in range(kernel):
            gx[:, :, ki : ki + oh * stride : stride, kj : kj + ow * stride : stride] += (
                col_grad[:, ki, kj].transpose(1, 0, 2, 3)
            )
    if pad:
        gx = gx[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(gx)


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, pad: int = 0):
    """Cross-correlate x (N,C,H,W) with weights (O,C,k,k) plus bias.

    Returns (y, cache); y has shape (N, O, oh, ow) with
    oh = floor((H + 2*pad - k)/stride) + 1 and likewise ow.
    """
    n, c, h, w = x.shape
    out_ch, in_ch, k, k2 = weights.shape
    if k != k2:
        raise ShapeError(f"kernel must be square, got {k}x{k2}")
    if c != in_ch:
        raise ShapeError(f"input has {c} channels, layer expects {in_ch}")
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ShapeError(f"spatial dims {h}x{w} (pad {pad}) smaller than kernel {k}")
    cols, oh, ow = _im2col(x, k, stride, pad)
    y = weights.reshape(out_ch, -1) @ cols
    y += bias[:, None]
    y = np.ascontiguousarray(y.reshape(out_ch, n, oh, ow).transpose(1, 0, 2, 3))
    return y, (x.shape, cols, oh, ow)


def conv2d_backward(
    weights: Tensor,
    cache,
    grad: Tensor,
    stride: int = 1,
    pad: int = 0,
    need_input_grad: bool = True,
):
    """Gradients of conv2d_forward. Returns (input_grad, weight_grad, bias_grad).

    input_grad is None when need_input_grad is False (first layer of a net).
    """
    x_shape, cols, oh, ow = cache
    out_ch, in_ch, k, _ = weights.shape
    n = x_shape[0]
    if grad.shape != (n, out_ch, oh, ow):
        raise ShapeError(
            f"upstream grad shape {grad.shape} != forward output {(n, out_ch, oh, ow)}"
        )
    gf = np.ascontiguousarray(grad.transpose(1, 0, 2, 3)).reshape(out_ch, -1)
    weight_grad = (gf @ cols.T).reshape(weights.shape)
    bias_grad = gf.sum(axis=1)
    input_grad = None
    if need_input_grad:
        col_grad = weights.reshape(out_ch, -1).T @ gf
        input_grad = _col2im(col_grad, x_shape, k, stride, pad, oh, ow)
    return input_grad, weight_grad, bias_grad


def maxpool2d_forward(x: Tensor, size: int = 2, stride: int = 2):
    """Window maxima over (N,C,H,W); odd edges padded with -inf.

    Returns (y, cache). Ties route to the first window position in
    row-major order, which backward honors.
    """
    if size != stride:
        raise ShapeError("pooling supports size == stride only")
    n, c, h, w = x.shape
    ph = (-h) % stride
    pw = (-w) % stride
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
    hp, wp = h + ph, w + pw
    oh, ow = hp // stride, wp // stride
    windows = (
        x.reshape(n, c, oh, size, ow, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh, ow, size * size)
    )
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), ((n, c, h, w), idx, size, stride)


def maxpool2d_backward(cache, grad: Tensor) -> Tensor:
    """Route each upstream element to its argmax position."""
    (n, c, h, w), idx, size, stride = cache
    oh, ow = idx.shape[2], idx.shape[3]
    if grad.shape != (n, c, oh, ow):
        raise ShapeError(f"upstream grad shape {grad.shape} != pooled shape {(n, c, oh, ow)}")
    hp, wp = oh * stride, ow * stride
    gx = np.zeros((n, c, oh, ow, size * size), dtype=grad.dtype)
    np.put_along_axis(gx, idx[..., None], grad[..., None], axis=-1)
    gx = gx.reshape(n, c, oh, ow, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hp, wp)
    return np.ascontiguousarray(gx[:, :, :h, :w])


ACTIVATIONS = ("relu", "leaky_relu", "mish")
LEAKY_SLOPE = 0.1


def _softplus(x: Tensor) -> Tensor:
    return np.logaddexp(np.asarray(0, dtype=x.dtype), x)


def activate(x: Tensor, kind: str) -> Tensor:
    """Elementwise relu / leaky_relu (slope 0.1) / mish = x*tanh(softplus(x))."""
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "leaky_relu":
        return np.where(x > 0, x, LEAKY_SLOPE * x).astype(x.dtype, copy=False)
    if kind == "mish":
        return x * np.tanh(_softplus(x))
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(x: Tensor, kind: str, grad: Tensor) -> Tensor:
    if kind == "relu":
        return grad * (x > 0)
    if kind == "leaky_relu":
        return grad * np.where(x > 0, 1.0, LEAKY_SLOPE).astype(x.dtype, copy=False)
    if kind == "mish":
        t = np.tanh(_softplus(x))
        sig = 1.0 / (1.0 + np.exp(-x))
        return grad * (t + x * (1.0 - t * t) * sig).astype(x.dtype, copy=False)
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Base record: a kind tag plus optional weights and their buffers."""

    kind = "unknown"

    def params(self):
        """Yield (weights, grads, momentum) triples for weighted layers."""
        return ()

    def param_count(self) -> int:
        return sum(w.size for w, _, _ in self.params())

    def forward(self, x: Tensor):
        raise NotImplementedError

    def backward(self, cache, grad: Tensor) -> Tensor:
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, pad=0, dtype=DTYPE):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.pad = pad
        self.weights = zeros((out_channels, in_channels, kernel_size, kernel_size), dtype)
        self.bias = zeros(out_channels, dtype)
        self.grad_w = np.zeros_like(self.weights)
        self.grad_b = np.zeros_like(self.bias)
        self.mom_w = np.zeros_like(self.weights)
        self.mom_b = np.zeros_like(self.bias)
        self.need_input_grad = True

    def params(self):
        yield self.weights, self.grad_w, self.mom_w
        yield self.bias, self.grad_b, self.mom_b

    def forward(self, x):
        return conv2d_forward(x, self.weights, self.bias, self.stride, self.pad)

    def backward(self, cache, grad):
        gx, gw, gb = conv2d_backward(
            self.weights, cache, grad, self.stride, self.pad, self.need_input_grad
        )
        self.grad_w += gw
        self.grad_b += gb
        return gx


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, size=2, stride=2):
        self.size = size
        self.stride = stride

    def forward(self, x):
        return maxpool2d_forward(x, self.size, self.stride)

    def backward(self, cache, grad):
        return maxpool2d_backward(cache, grad)


class Activation(Layer):
    kind = "activation"

    def __init__(self, name):
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}")
        self.name = name

    def forward(self, x):
        return activate(x, self.name), x

    def backward(self, cache, grad):
        return activate_backward(cache, self.name, grad)


class DetectionHead(Conv2d):
    """The final 1x1 convolution producing the raw head tensor.

    Output is linear: the loss consumes it directly, and decoding squashes
    offsets/scores into range on the way out.
    """

    kind = "detectionHead"

    def __init__(self, in_channels, num_classes, boxes_per_cell, dtype=DTYPE):
        super().__init__(in_channels, (num_classes + 5) * boxes_per_cell, 1,
                         stride=1, pad=0, dtype=dtype)
        self.num_classes = num_classes
        self.boxes_per_cell = boxes_per_cell
