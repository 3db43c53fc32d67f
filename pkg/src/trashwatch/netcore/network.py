"""Network assembly for the two detector configurations.

`default`: six 3x3 conv stages (16..512 channels), leaky-ReLU, 2x2 max-pool
after each of the first five, then a 1x1 detection head with (classes+5)*B
filters. 416x416 input downsamples to a 13x13 grid; head output is linear.

`improved`: the same trunk plus two extra 3x3 conv layers with 1024 channels
before the head, with Mish on every activation site.
"""

import numpy as np

from .layers import Activation, Conv2d, DetectionHead, Layer, MaxPool2d
from .tensor import DTYPE, Tensor

MODEL_CONFIGS = ("default", "improved")

GRID_SIZE = 13
INPUT_SIZE = 416
NUM_CLASSES = 8
BOXES_PER_CELL = 5

_STAGE_CHANNELS = (16, 32, 64, 128, 256, 512)
_EXTRA_CHANNELS = (1024, 1024)


class Network:
    def __init__(self, layers, input_shape, num_classes, boxes_per_cell, grid_size, config):
        self.layers: list[Layer] = layers
        self.input_shape = input_shape
        self.num_classes = num_classes
        self.boxes_per_cell = boxes_per_cell
        self.grid_size = grid_size
        self.config = config

    @property
    def head_channels(self) -> int:
        return (self.num_classes + 5) * self.boxes_per_cell

    def weighted_layers(self):
        return [l for l in self.layers if isinstance(l, Conv2d)]

    def param_count(self) -> int:
        return sum(l.param_count() for l in self.layers)

    def forward(self, x: Tensor):
        """Run all layers; returns (head, caches) for a later backward."""
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def predict(self, x: Tensor) -> Tensor:
        """Inference-only forward; pure over the weights, safe to share."""
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def backward(self, caches, grad: Tensor) -> None:
        """Accumulate weight gradients from a head-tensor gradient."""
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad = layer.backward(cache, grad)

    def zero_grads(self) -> None:
        for layer in self.weighted_layers():
            layer.grad_w[:] = 0
            layer.grad_b[:] = 0


def _kaiming_init(layer: Conv2d, rng: np.random.Generator) -> None:
    fan_in = layer.in_channels * layer.kernel_size * layer.kernel_size
    bound = np.sqrt(6.0 / fan_in)
    layer.weights[:] = rng.uniform(-bound, bound, size=layer.weights.shape).astype(
        layer.weights.dtype
    )
    layer.bias[:] = 0


def build_network(
    config: str = "default",
    num_classes: int = NUM_CLASSES,
    boxes_per_cell: int = BOXES_PER_CELL,
    seed: int = 0,
    dtype=DTYPE,
) -> Network:
    if config not in MODEL_CONFIGS:
        raise ValueError(f"unknown model config {config!r}, expected one of {MODEL_CONFIGS}")
    act = "mish" if config == "improved" else "leaky_relu"
    layers: list[Layer] = []
    in_ch = 3
    for i, out_ch in enumerate(_STAGE_CHANNELS):
        layers.append(Conv2d(in_ch, out_ch, 3, stride=1, pad=1, dtype=dtype))
        layers.append(Activation(act))
        if i < 5:
            layers.append(MaxPool2d(2, 2))
        in_ch = out_ch
    if config == "improved":
        for out_ch in _EXTRA_CHANNELS:
            layers.append(Conv2d(in_ch, out_ch, 3, stride=1, pad=1, dtype=dtype))
            layers.append(Activation(act))
            in_ch = out_ch
    layers.append(DetectionHead(in_ch, num_classes, boxes_per_cell, dtype=dtype))

    convs = [l for l in layers if isinstance(l, Conv2d)]
    convs[0].need_input_grad = False
    ss = np.random.SeedSequence([seed, 0x7729])
    for layer, child in zip(convs, ss.spawn(len(convs))):
        _kaiming_init(layer, np.random.Generator(np.random.PCG64(child)))

    net = Network(
        layers,
        input_shape=(3, INPUT_SIZE, INPUT_SIZE),
        num_classes=num_classes,
        boxes_per_cell=boxes_per_cell,
        grid_size=GRID_SIZE,
        config=config,
    )
    return net
