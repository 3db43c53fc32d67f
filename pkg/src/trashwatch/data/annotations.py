"""Annotation text format and dataset layout.

Label files carry one box per line as five whitespace-separated decimal
tokens: `classId cx cy w h`, all but classId normalized to [0, 1]. The
dataset root holds `images/*.ppm`, `labels/*.txt` with matching stems,
`classes.txt` (one name per line, index = line number) and `train.txt` /
`test.txt` listing image paths relative to the root.
"""

import os
from dataclasses import dataclass, field

from ..detector.boxes import BBox

CLASS_NAMES = (
    "mask",
    "tissue papers",
    "shoppers",
    "boxes",
    "automobile parts",
    "pampers",
    "bottles",
    "juice boxes",
)


class AnnotationError(ValueError):
    """Parse or validation failure; message carries file, line and token."""


@dataclass
class Annotation:
    image_path: str
    boxes: list[BBox] = field(default_factory=list)


def parse_annotation_text(text: str, num_classes: int = 8, where: str = "<string>"):
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise AnnotationError(
                f"{where}:{lineno}: expected 5 tokens `classId cx cy w h`, got {len(tokens)}"
            )
        try:
            class_id = int(tokens[0])
        except ValueError:
            raise AnnotationError(
                f"{where}:{lineno}: token 1: malformed class id {tokens[0]!r}"
            ) from None
        values = []
        for col, token in enumerate(tokens[1:], start=2):
            try:
                values.append(float(token))
            except ValueError:
                raise AnnotationError(
                    f"{where}:{lineno}: token {col}: malformed number {token!r}"
                ) from None
        box = BBox(cx=values[0], cy=values[1], w=values[2], h=values[3], class_id=class_id)
        try:
            box.validate(num_classes)
        except ValueError as e:
            raise AnnotationError(f"{where}:{lineno}: {e}") from None
        boxes.append(box)
    return boxes


def parse_annotation(path, num_classes: int = 8, image_path: str = "") -> Annotation:
    with open(path, "r", encoding="ascii") as f:
        text = f.read()
    return Annotation(
        image_path=image_path or str(path),
        boxes=parse_annotation_text(text, num_classes, where=str(path)),
    )


def serialize_annotation(boxes) -> str:
    """Canonical text form: 5 tokens per line, newline terminated."""
    return "".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in boxes
    )


@dataclass
class Dataset:
    root: str
    class_names: list[str]
    train: list[Annotation]
    test: list[Annotation]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def split(self, name: str) -> list[Annotation]:
        if name == "train":
            return self.train
        if name == "test":
            return self.test
        raise ValueError(f"unknown split {name!r}")


def _label_path(root: str, image_rel: str) -> str:
    stem = os.path.splitext(os.path.basename(image_rel))[0]
    return os.path.join(root, "labels", stem + ".txt")


def _load_split(root: str, list_name: str, num_classes: int) -> list[Annotation]:
    list_path = os.path.join(root, list_name)
    if not os.path.exists(list_path):
        raise AnnotationError(f"{list_path}: missing split list")
    out = []
    with open(list_path, "r", encoding="ascii") as f:
        for rel in (line.strip() for line in f):
            if not rel:
                continue
            image_path = os.path.join(root, rel)
            if not os.path.exists(image_path):
                raise AnnotationError(f"{list_path}: listed image {rel} not found")
            label = _label_path(root, rel)
            boxes = []
            if os.path.exists(label):
                boxes = parse_annotation(label, num_classes).boxes
            out.append(Annotation(image_path=image_path, boxes=boxes))
    return out


def load_class_names(root: str) -> list[str]:
    path = os.path.join(root, "classes.txt")
    if not os.path.exists(path):
        raise AnnotationError(f"{path}: missing classes.txt")
    with open(path, "r", encoding="utf-8") as f:
        names = [line.rstrip("\n") for line in f if line.strip()]
    if not names:
        raise AnnotationError(f"{path}: no class names")
    if len(set(names)) != len(names):
        raise AnnotationError(f"{path}: duplicate class names")
    return names


def load_dataset(root) -> Dataset:
    """Load and validate the whole dataset; invalid samples fail here, never
    mid-epoch."""
    root = str(root)
    names = load_class_names(root)
    return Dataset(
        root=root,
        class_names=names,
        train=_load_split(root, "train.txt", len(names)),
        test=_load_split(root, "test.txt", len(names)),
    )
