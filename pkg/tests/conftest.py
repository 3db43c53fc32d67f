import numpy as np
import pytest

from trashwatch.config import RunConfig, TrainConfig
from trashwatch.data.annotations import load_dataset
from trashwatch.data.synthetic import SceneSpec, write_synthetic_dataset
from trashwatch.netcore.layers import Activation, Conv2d, DetectionHead, MaxPool2d
from trashwatch.netcore.network import Network


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """Six-scene dataset on disk; enough for loop/CLI plumbing tests."""
    root = tmp_path_factory.mktemp("micro_ds")
    write_synthetic_dataset(
        root, 6, seed=11,
        spec=SceneSpec(min_objects=1, max_objects=2, min_size=100, max_size=170),
    )
    return root


@pytest.fixture(scope="session")
def micro_dataset_loaded(micro_dataset):
    return load_dataset(micro_dataset)


def micro_run_config(data_dir, tmp_path, **overrides) -> RunConfig:
    train_overrides = overrides.pop("train", {})
    defaults = dict(
        iterations=2, batch_size=2, subdivision=1, checkpoint_every=1000,
        augment=False, learning_rate=1e-4,
    )
    defaults.update(train_overrides)
    return RunConfig(
        data_dir=str(data_dir),
        checkpoint=str(tmp_path / "ck" / "net.twnet"),
        out_dir=str(tmp_path / "out"),
        clip_dir=str(tmp_path / "clips"),
        event_log=str(tmp_path / "events.jsonl"),
        train=TrainConfig(**defaults),
        **overrides,
    )


def toy_network(seed=0, grid=4, num_classes=3, boxes_per_cell=2, dtype=np.float32) -> Network:
    """Small real network on 16x16 inputs; same layer kinds as the big ones."""
    rng = np.random.default_rng(seed)
    layers = [
        Conv2d(3, 6, 3, stride=1, pad=1, dtype=dtype),
        Activation("leaky_relu"),
        MaxPool2d(2, 2),
        Conv2d(6, 8, 3, stride=1, pad=1, dtype=dtype),
        Activation("mish"),
        MaxPool2d(2, 2),
        DetectionHead(8, num_classes, boxes_per_cell, dtype=dtype),
    ]
    for layer in layers:
        if isinstance(layer, Conv2d):
            bound = np.sqrt(6.0 / (layer.in_channels * layer.kernel_size**2))
            layer.weights[:] = rng.uniform(-bound, bound, layer.weights.shape).astype(dtype)
    layers[0].need_input_grad = False
    return Network(
        layers, input_shape=(3, 16, 16), num_classes=num_classes,
        boxes_per_cell=boxes_per_cell, grid_size=grid, config="toy",
    )
