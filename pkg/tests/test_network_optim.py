import numpy as np
import pytest

from trashwatch.config import TrainConfig
from trashwatch.detector.boxes import BBox
from trashwatch.detector.grid import encode_targets
from trashwatch.detector.loss import LossWeights, loss_with_gradient
from trashwatch.netcore.layers import Conv2d
from trashwatch.netcore.network import build_network
from trashwatch.netcore.optim import AccumulationError, SubdivisionAccumulator, sgd_step

from conftest import toy_network


def single_weight_net(w0: float) -> object:
    layer = Conv2d(1, 1, 1, dtype=np.float64)
    layer.weights[:] = w0

    class Net:
        def weighted_layers(self):
            return [layer]

    net = Net()
    net.layer = layer
    return net


class TestSgdStep:
    def test_zero_gradient_zero_velocity_is_fixed_point(self):
        net = single_weight_net(1.25)
        sgd_step(net, momentum=0.9, learning_rate=0.001, decay=0.0)
        assert net.layer.weights[0, 0, 0, 0] == 1.25

    def test_single_step_hand_computation(self):
        # v = -lr * (g + decay*w) = -0.001 * (0.5 + 0.0005*1.0) = -0.0005005
        net = single_weight_net(1.0)
        net.layer.grad_w[:] = 0.5
        sgd_step(net, momentum=0.9, learning_rate=0.001, decay=0.0005)
        assert net.layer.mom_w[0, 0, 0, 0] == pytest.approx(-0.0005005, abs=1e-12)
        assert net.layer.weights[0, 0, 0, 0] == pytest.approx(0.9994995, abs=1e-12)
        assert net.layer.grad_w[0, 0, 0, 0] == 0.0  # reset after the step

    def test_two_steps_match_scalar_recurrence(self):
        momentum, lr, decay, g = 0.9, 0.01, 0.002, 0.3
        net = single_weight_net(2.0)
        w, v = 2.0, 0.0
        for _ in range(2):
            net.layer.grad_w[:] = g
            sgd_step(net, momentum, lr, decay)
            v = momentum * v - lr * (g + decay * w)
            w = w + v
        assert net.layer.weights[0, 0, 0, 0] == pytest.approx(w, rel=1e-12)
        assert net.layer.mom_w[0, 0, 0, 0] == pytest.approx(v, rel=1e-12)


def _run_slices(net, images, targets_boxes, cfg):
    """Forward/backward `images` in cfg-sized slices; returns loss sums."""
    acc = SubdivisionAccumulator(net, cfg)
    weights = LossWeights(cfg.lambda_coord, cfg.lambda_noobj)
    losses = []
    for s in range(cfg.subdivision):
        sl = slice(s * cfg.slice_size, (s + 1) * cfg.slice_size)
        head, caches = net.forward(images[sl])
        grads = np.zeros_like(head)
        total = 0.0
        for k, boxes in enumerate(targets_boxes[sl]):
            target = encode_targets(boxes, net.grid_size, net.boxes_per_cell,
                                    net.num_classes, pred_head=head[k])
            breakdown, grad = loss_with_gradient(head[k], target, weights)
            grads[k] = grad
            total += breakdown.total
        net.backward(caches, grads)
        acc.slice_done()
        losses.append(total)
    return acc, losses


def _batch_fixture(seed=21):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0, 1, size=(4, 3, 16, 16)).astype(np.float32)
    boxes = [
        [BBox(0.3, 0.4, 0.3, 0.3, 0)],
        [BBox(0.7, 0.6, 0.25, 0.4, 1)],
        [],
        [BBox(0.5, 0.5, 0.5, 0.5, 2), BBox(0.1, 0.9, 0.15, 0.15, 0)],
    ]
    return images, boxes


class TestSubdivisionAccumulation:
    def grads_of(self, net):
        return [(l.grad_w.copy(), l.grad_b.copy()) for l in net.weighted_layers()]

    def test_subdivision_equals_whole_batch(self):
        images, boxes = _batch_fixture()
        whole = toy_network(seed=5)
        _run_slices(whole, images, boxes, TrainConfig(batch_size=4, subdivision=1))
        split = toy_network(seed=5)
        _run_slices(split, images, boxes, TrainConfig(batch_size=4, subdivision=2))
        # 1e-5 relative to the gradient scale; float32 reorders sums.
        for (w1, b1), (w2, b2) in zip(self.grads_of(whole), self.grads_of(split)):
            assert np.abs(w1 - w2).max() <= 1e-5 * np.abs(w1).max()
            assert np.abs(b1 - b2).max() <= 1e-5 * np.abs(b1).max()

    def test_loss_sum_additivity(self):
        images, boxes = _batch_fixture()
        net = toy_network(seed=5)
        _, whole_losses = _run_slices(net, images, boxes, TrainConfig(batch_size=4, subdivision=1))
        net2 = toy_network(seed=5)
        _, split_losses = _run_slices(net2, images, boxes, TrainConfig(batch_size=4, subdivision=2))
        assert sum(split_losses) == pytest.approx(sum(whole_losses), rel=1e-6)

    def test_step_mid_accumulation_rejected(self):
        images, boxes = _batch_fixture()
        net = toy_network(seed=5)
        cfg = TrainConfig(batch_size=4, subdivision=2)
        acc = SubdivisionAccumulator(net, cfg)
        head, caches = net.forward(images[:2])
        net.backward(caches, np.zeros_like(head))
        acc.slice_done()
        with pytest.raises(AccumulationError, match="mid-accumulation"):
            acc.step()

    def test_step_after_full_batch_runs_and_resets(self):
        images, boxes = _batch_fixture()
        net = toy_network(seed=5)
        cfg = TrainConfig(batch_size=4, subdivision=2, learning_rate=1e-3)
        acc, _ = _run_slices(net, images, boxes, cfg)
        acc.step()
        assert acc.pending == 0
        for layer in net.weighted_layers():
            assert not layer.grad_w.any()


class TestTrajectoryDeterminism:
    def train_toy(self, iterations=10):
        images, boxes = _batch_fixture(seed=33)
        net = toy_network(seed=9)
        cfg = TrainConfig(batch_size=4, subdivision=2, learning_rate=1e-3)
        for _ in range(iterations):
            acc, _ = _run_slices(net, images, boxes, cfg)
            acc.step()
        return [l.weights.copy() for l in net.weighted_layers()]

    def test_fixed_seed_bit_identical_for_10_iterations(self):
        a = self.train_toy()
        b = self.train_toy()
        for wa, wb in zip(a, b):
            assert np.array_equal(wa, wb)


class TestBuildNetwork:
    def test_head_channel_invariant(self):
        net = build_network("default")
        assert net.weighted_layers()[-1].out_channels == (8 + 5) * 5 == 65

    def test_improved_has_more_parameters(self):
        assert build_network("improved").param_count() > build_network("default").param_count()

    def test_grid_spatial_size(self):
        net = build_network("default")
        x = np.zeros((1, 3, 416, 416), dtype=np.float32)
        head = net.predict(x)
        assert head.shape == (1, 65, 13, 13)

    def test_improved_activation_is_mish(self):
        kinds = {l.name for l in build_network("improved").layers if l.kind == "activation"}
        assert kinds == {"mish"}
        kinds = {l.name for l in build_network("default").layers if l.kind == "activation"}
        assert kinds == {"leaky_relu"}

    def test_unknown_config_rejected(self):
        with pytest.raises(ValueError, match="unknown model config"):
            build_network("huge")

    def test_inference_is_pure(self):
        net = toy_network(seed=2)
        x = np.random.default_rng(0).uniform(size=(1, 3, 16, 16)).astype(np.float32)
        first = net.predict(x)
        second = net.predict(x)
        assert np.array_equal(first, second)
