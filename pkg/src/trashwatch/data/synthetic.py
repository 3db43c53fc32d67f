"""Synthetic dataset generator.

Eight shape kinds with distinct colors stand in for the eight trash
classes so that detector runs have exact, machine-made ground truth.
Scenes are colored shapes on a textured gray background; annotation boxes
are the exact pixel bounds of each rendered shape.
"""

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..detector.boxes import BBox
from .annotations import CLASS_NAMES, Annotation, serialize_annotation
from .ppm import write_ppm

SHAPE_KINDS = ("square", "disk", "triangle", "ring", "cross", "diamond", "hbar", "vbar")

CLASS_COLORS = (
    (220, 40, 40),
    (40, 200, 60),
    (50, 90, 230),
    (230, 220, 50),
    (220, 60, 220),
    (60, 220, 220),
    (240, 140, 40),
    (140, 60, 220),
)

_PLACEMENT_RETRIES = 40


@dataclass(frozen=True)
class SceneSpec:
    image_size: int = 416
    min_objects: int = 1
    max_objects: int = 3
    min_size: int = 88
    max_size: int = 176
    classes: tuple = tuple(range(8))
    gap: int = 6

    def validate(self) -> "SceneSpec":
        if self.min_objects < 0 or self.max_objects < self.min_objects:
            raise ValueError("object count range is empty")
        if not (8 <= self.min_size <= self.max_size <= self.image_size):
            raise ValueError("size range must fit the image")
        if not self.classes or any(not 0 <= c < 8 for c in self.classes):
            raise ValueError("classes must be a nonempty subset of 0..7")
        return self


def _shape_mask(kind: str, size: int) -> np.ndarray:
    s = (size - 1) / 2.0
    dy, dx = np.mgrid[0:size, 0:size] - s
    third = max(s / 3.0, 1.0)
    if kind == "square":
        return np.ones((size, size), dtype=bool)
    if kind == "disk":
        return dx * dx + dy * dy <= s * s
    if kind == "triangle":
        return np.abs(dx) <= (dy + s) / 2.0
    if kind == "ring":
        r2 = dx * dx + dy * dy
        return (r2 <= s * s) & (r2 >= (0.55 * s) ** 2)
    if kind == "cross":
        return (np.abs(dx) <= third) | (np.abs(dy) <= third)
    if kind == "diamond":
        return np.abs(dx) + np.abs(dy) <= s
    if kind == "hbar":
        return np.abs(dy) <= third
    if kind == "vbar":
        return np.abs(dx) <= third
    raise ValueError(f"unknown shape kind {kind!r}")


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(90, 150)
    ramp = np.linspace(-18, 18, size)
    field_ = base + ramp[None, :] * rng.uniform(-1, 1) + ramp[:, None] * rng.uniform(-1, 1)
    noise = rng.normal(0.0, 7.0, size=(size, size))
    gray = np.clip(field_ + noise, 0, 255)
    return np.repeat(gray[:, :, None], 3, axis=2).astype(np.uint8)


def generate_scene(rng: np.random.Generator, spec: SceneSpec = SceneSpec()):
    """Render one scene. Returns (image, boxes); boxes are exact bounds.

    Placement avoids overlap by rejection sampling; when a shape cannot be
    placed within the retry budget the scene simply holds fewer objects.
    """
    spec.validate()
    size = spec.image_size
    image = _background(rng, size)
    occupied = []  # (x0, y0, x1, y1) inclusive pixel rects, with gap applied
    boxes = []
    count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    for _ in range(count):
        class_id = int(rng.choice(np.asarray(spec.classes)))
        placed = False
        for _ in range(_PLACEMENT_RETRIES):
            side = int(rng.integers(spec.min_size, spec.max_size + 1))
            x0 = int(rng.integers(0, size - side + 1))
            y0 = int(rng.integers(0, size - side + 1))
            rect = (x0 - spec.gap, y0 - spec.gap, x0 + side + spec.gap, y0 + side + spec.gap)
            if any(
                rect[0] < r[2] and r[0] < rect[2] and rect[1] < r[3] and r[1] < rect[3]
                for r in occupied
            ):
                continue
            mask = _shape_mask(SHAPE_KINDS[class_id], side)
            ys, xs = np.nonzero(mask)
            ymin, ymax = y0 + ys.min(), y0 + ys.max()
            xmin, xmax = x0 + xs.min(), x0 + xs.max()
            color = np.array(CLASS_COLORS[class_id], dtype=np.float64)
            color = np.clip(color * rng.uniform(0.88, 1.08), 0, 255)
            image[y0 : y0 + side, x0 : x0 + side][mask] = color.astype(np.uint8)
            boxes.append(
                BBox(
                    cx=(xmin + xmax + 1) / (2.0 * size),
                    cy=(ymin + ymax + 1) / (2.0 * size),
                    w=(xmax - xmin + 1) / size,
                    h=(ymax - ymin + 1) / size,
                    class_id=class_id,
                )
            )
            occupied.append(rect)
            placed = True
            break
        if not placed:
            warnings.warn("could not place a shape without overlap; scene has fewer objects",
                          stacklevel=2)
    return image, boxes


def write_synthetic_dataset(
    root,
    count: int,
    seed: int = 0,
    spec: SceneSpec = SceneSpec(),
    train_fraction: float = 0.8,
    class_names=CLASS_NAMES,
):
    """Write a full dataset layout under `root`; re-runs are byte-identical.

    Returns the list of annotations in file order.
    """
    root = str(root)
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "labels"), exist_ok=True)
    annotations = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        image, boxes = generate_scene(rng, spec)
        rel = os.path.join("images", f"scene_{i:05d}.ppm")
        write_ppm(os.path.join(root, rel), image)
        with open(os.path.join(root, "labels", f"scene_{i:05d}.txt"), "w") as f:
            f.write(serialize_annotation(boxes))
        annotations.append(Annotation(image_path=rel, boxes=boxes))
    with open(os.path.join(root, "classes.txt"), "w") as f:
        f.write("".join(name + "\n" for name in class_names))
    order = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, 0x5971]))
    ).permutation(count)
    n_train = int(round(count * train_fraction))
    train = sorted(order[:n_train].tolist())
    test = sorted(order[n_train:].tolist())
    for name, indices in (("train.txt", train), ("test.txt", test)):
        with open(os.path.join(root, name), "w") as f:
            f.write("".join(annotations[i].image_path + "\n" for i in indices))
    return annotations
