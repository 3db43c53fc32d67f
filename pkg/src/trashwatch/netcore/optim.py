"""SGD with momentum and weight decay, plus subdivision accumulation.

The update rule per weight tensor:

    v <- momentum * v - lr * (g + decay * w)
    w <- w + v

Gradients are accumulated across `subdivision` mini-batch slices before a
single step, so a full batch never has to fit in memory at once.
"""

import numpy as np


class AccumulationError(RuntimeError):
    """Stepping the optimizer in the middle of a subdivision run."""


def sgd_step(net, momentum: float, learning_rate: float, decay: float) -> None:
    """Apply one momentum step to every weighted layer and zero the grads."""
    for layer in net.weighted_layers():
        for w, g, v in layer.params():
            v *= momentum
            v -= learning_rate * (g + decay * w)
            w += v
            g[:] = 0


class SubdivisionAccumulator:
    """Collects gradients from batch slices; one optimizer step per batch.

    The caller backpropagates each slice through `net` (which sums into the
    layer grad buffers) and reports it via `slice_done()`. `step()` refuses
    to run until exactly `subdivision` slices have been reported.
    """

    def __init__(self, net, cfg):
        self.net = net
        self.cfg = cfg
        self.pending = 0

    def slice_done(self) -> None:
        if self.pending >= self.cfg.subdivision:
            raise AccumulationError(
                f"batch already has {self.pending} of {self.cfg.subdivision} slices"
            )
        self.pending += 1

    def step(self) -> None:
        if self.pending != self.cfg.subdivision:
            raise AccumulationError(
                f"optimizer step mid-accumulation: {self.pending} of "
                f"{self.cfg.subdivision} slices seen"
            )
        # Per-sample mean: slices contribute loss sums, the step averages.
        scale = 1.0 / self.cfg.batch_size
        clip = getattr(self.cfg, "grad_clip", 0.0)
        for layer in self.net.weighted_layers():
            layer.grad_w *= scale
            layer.grad_b *= scale
            if clip:
                # Per-layer L2-norm clip: rescale, never redirect.
                norm = float(np.sqrt((layer.grad_w**2).sum() + (layer.grad_b**2).sum()))
                if norm > clip:
                    layer.grad_w *= clip / norm
                    layer.grad_b *= clip / norm
        sgd_step(self.net, self.cfg.momentum, self.cfg.learning_rate, self.cfg.decay)
        self.pending = 0
