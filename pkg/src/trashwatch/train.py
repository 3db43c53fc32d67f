"""Training loop: subdivision accumulation, CSV logging, checkpoints.

Epoch order, augmentation draws and weight init all derive from the run
seed, so a fixed seed gives a bit-identical trajectory and a run resumed
from a checkpoint matches an uninterrupted one.
"""

import csv
import os

import numpy as np

from .config import RunConfig
from .data.annotations import Dataset, load_dataset
from .data.augment import augment_hsv, resize_bilinear
from .data.ppm import read_ppm
from .detector.boxes import nms
from .detector.grid import decode, encode_targets
from .detector.loss import ZERO_LOSS, LossWeights, loss_with_gradient
from .evalx import EvalReport, evaluate_dataset
from .netcore.checkpoint import load_checkpoint, save_checkpoint
from .netcore.network import INPUT_SIZE, Network, build_network
from .netcore.optim import SubdivisionAccumulator

LOG_HEADER = ("iteration", "total", "coordErr", "iouErr", "clsErr", "mAP")


def preprocess_image(image: np.ndarray, input_size: int = INPUT_SIZE) -> np.ndarray:
    """uint8 HWC image -> float32 CHW in [0, 1] at the network input size."""
    h, w = image.shape[:2]
    if (h, w) != (input_size, input_size):
        image = resize_bilinear(image, input_size, input_size)
    return np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)


def _epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE90C4, epoch])))
    return rng.permutation(n)


def batch_indices(seed: int, iteration: int, batch_size: int, n: int) -> list:
    """Sample indices for one iteration of the deterministic epoch stream.

    Iteration t covers positions [t*B, (t+1)*B) of the concatenated
    per-epoch permutations, so any iteration is reconstructible on resume.
    """
    start = iteration * batch_size
    perms = {}
    out = []
    for pos in range(start, start + batch_size):
        epoch, offset = divmod(pos, n)
        if epoch not in perms:
            perms[epoch] = _epoch_permutation(seed, epoch, n)
        out.append(int(perms[epoch][offset]))
    return out


def _sample_rng(seed: int, iteration: int, slot: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xA06, iteration, slot])))


class SampleLoader:
    """Loads, resizes and (optionally) augments samples; caches decoded
    images since desk-scale datasets easily fit in memory."""

    def __init__(self, dataset: Dataset, cfg: RunConfig):
        self.samples = dataset.split("train")
        self.cfg = cfg
        self._cache = {}

    def image(self, index: int) -> np.ndarray:
        if index not in self._cache:
            raw = read_ppm(self.samples[index].image_path)
            h, w = raw.shape[:2]
            if (h, w) != (INPUT_SIZE, INPUT_SIZE):
                raw = resize_bilinear(raw, INPUT_SIZE, INPUT_SIZE)
            self._cache[index] = raw
        return self._cache[index]

    def training_input(self, index: int, iteration: int, slot: int):
        image = self.image(index)
        if self.cfg.train.augment:
            image = augment_hsv(image, self.cfg.train, _sample_rng(self.cfg.seed, iteration, slot))
        x = np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)
        return x, self.samples[index].boxes


def checkpoint_name(base: str, iteration: int | None = None) -> str:
    root, ext = os.path.splitext(base)
    ext = ext or ".twnet"
    if iteration is None:
        return root + "_final" + ext
    return f"{root}_{iteration:06d}{ext}"


def train(
    cfg: RunConfig,
    dataset: Dataset | None = None,
    log_path=None,
    eval_every: int = 0,
    resume: str | None = None,
    should_stop=None,
    progress=None,
) -> dict:
    """Run cfg.train.iterations of SGD; returns a summary dict.

    Writes the CSV training log, periodic checkpoints every
    checkpoint_every iterations and a final checkpoint. `eval_every`
    adds a test-split mAP column on matching iterations.
    """
    cfg.validate()
    tcfg = cfg.train
    if dataset is None:
        dataset = load_dataset(cfg.data_dir)
    if not dataset.train:
        raise ValueError("training split is empty")
    net = build_network(cfg.model, num_classes=dataset.num_classes, seed=cfg.seed)
    start_iteration = 0
    if resume:
        start_iteration = load_checkpoint(resume, net)
    loader = SampleLoader(dataset, cfg)
    accumulator = SubdivisionAccumulator(net, tcfg)
    weights = LossWeights(tcfg.lambda_coord, tcfg.lambda_noobj)
    n = len(dataset.train)

    os.makedirs(os.path.dirname(os.path.abspath(cfg.checkpoint)) or ".", exist_ok=True)
    log_rows = []
    periodic = []
    log_file = None
    writer = None
    if log_path:
        fresh = not (resume and os.path.exists(log_path))
        log_file = open(log_path, "a" if not fresh else "w", newline="")
        writer = csv.writer(log_file)
        if fresh:
            writer.writerow(LOG_HEADER)

    stopped = False
    iteration = start_iteration
    try:
        for iteration in range(start_iteration + 1, tcfg.iterations + 1):
            indices = batch_indices(cfg.seed, iteration - 1, tcfg.batch_size, n)
            batch_loss = ZERO_LOSS
            for s in range(tcfg.subdivision):
                slice_indices = indices[s * tcfg.slice_size : (s + 1) * tcfg.slice_size]
                inputs = []
                gts = []
                for k, idx in enumerate(slice_indices):
                    x, boxes = loader.training_input(idx, iteration - 1, s * tcfg.slice_size + k)
                    inputs.append(x)
                    gts.append(boxes)
                x = np.stack(inputs)
                head, caches = net.forward(x)
                grads = np.zeros_like(head)
                for k, boxes in enumerate(gts):
                    target = encode_targets(
                        boxes, net.grid_size, net.boxes_per_cell, net.num_classes,
                        pred_head=head[k],
                    )
                    breakdown, grad = loss_with_gradient(head[k], target, weights)
                    batch_loss = batch_loss + breakdown
                    grads[k] = grad
                net.backward(caches, grads)
                accumulator.slice_done()
            accumulator.step()

            mean_loss = batch_loss.scaled(1.0 / tcfg.batch_size)
            map_value = ""
            if eval_every and iteration % eval_every == 0 and dataset.test:
                report = evaluate_split(net, dataset, "test", cfg)
                if report.map_percent is not None:
                    map_value = f"{report.map_percent:.4f}"
            row = (
                iteration,
                f"{mean_loss.total:.6f}",
                f"{mean_loss.coord_err:.6f}",
                f"{mean_loss.iou_err:.6f}",
                f"{mean_loss.cls_err:.6f}",
                map_value,
            )
            log_rows.append(row)
            if writer:
                writer.writerow(row)
                log_file.flush()
            if progress:
                progress(iteration, mean_loss)
            if iteration % tcfg.checkpoint_every == 0:
                path = checkpoint_name(cfg.checkpoint, iteration)
                save_checkpoint(net, iteration, path)
                periodic.append(path)
            if should_stop and should_stop():
                stopped = True
                break
    finally:
        if log_file:
            log_file.close()

    final_path = checkpoint_name(cfg.checkpoint)
    save_checkpoint(net, iteration, final_path)
    return {
        "net": net,
        "iterations_run": iteration - start_iteration,
        "final_iteration": iteration,
        "final_checkpoint": final_path,
        "periodic_checkpoints": periodic,
        "log_rows": log_rows,
        "stopped_early": stopped,
    }


def detect_image(net: Network, image: np.ndarray, conf_threshold: float, nms_iou: float):
    """Forward one image and return post-NMS detections."""
    head = net.predict(preprocess_image(image)[None])[0]
    return nms(
        decode(head, conf_threshold, net.num_classes, net.boxes_per_cell),
        nms_iou,
    )


def evaluate_split(
    net: Network, dataset: Dataset, split: str, cfg: RunConfig, chunk: int = 8
) -> EvalReport:
    """Evaluate a dataset split with the current weights."""
    samples = dataset.split(split)
    results = []
    for start in range(0, len(samples), chunk):
        group = samples[start : start + chunk]
        x = np.stack([preprocess_image(read_ppm(a.image_path)) for a in group])
        heads = net.predict(x)
        for annotation, head in zip(group, heads):
            dets = nms(
                decode(head, cfg.conf_threshold, net.num_classes, net.boxes_per_cell),
                cfg.nms_iou,
            )
            results.append((annotation.image_path, annotation.boxes, dets))
    return evaluate_dataset(results, dataset.class_names, cfg.eval_iou)
