"""Box geometry: center-format boxes, IoU, center offsets and NMS.

Boxes are normalized to the image: cx, cy, w, h are fractions of image
width/height, center format. Corners may legally extend past the image
edge for boxes centered near it.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Ground-truth style box; confidence-free."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int

    def validate(self, num_classes: int = 8) -> "BBox":
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size ({self.w}, {self.h}) outside (0, 1]")
        if not 0 <= self.class_id < num_classes:
            raise ValueError(f"class {self.class_id} out of range ({num_classes} classes)")
        return self

    def corners(self):
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )


@dataclass(frozen=True)
class Detection:
    """A decoded prediction: box, class and score."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int
    score: float

    def corners(self):
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )


def corners_to_center(xmin: float, ymin: float, xmax: float, ymax: float):
    """Center of a corner-format box (pixel coordinates)."""
    if xmin > xmax or ymin > ymax:
        raise ValueError(f"inverted corners ({xmin},{ymin})..({xmax},{ymax})")
    return (xmin + xmax) / 2.0, (ymin + ymax) / 2.0


def center_offset(box, img_width: float, img_height: float, tolerance: float):
    """Offset of a box center from the image center, in pixels.

    Returns (ax, ay, centered); centered holds iff both offsets are within
    the tolerance.
    """
    if img_width <= 0 or img_height <= 0:
        raise ValueError(f"image dims {img_width}x{img_height} must be positive")
    x0 = box.cx * img_width
    y0 = box.cy * img_height
    ax = x0 - img_width / 2.0
    ay = y0 - img_height / 2.0
    return ax, ay, abs(ax) <= tolerance and abs(ay) <= tolerance


def iou(a, b) -> float:
    """Intersection over union of two center-format boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_xywh(a_cx, a_cy, a_w, a_h, b_cx, b_cy, b_w, b_h) -> float:
    """IoU on raw components; negative sizes count as empty boxes."""
    a_w = max(a_w, 0.0)
    a_h = max(a_h, 0.0)
    b_w = max(b_w, 0.0)
    b_h = max(b_h, 0.0)
    iw = min(a_cx + a_w / 2, b_cx + b_w / 2) - max(a_cx - a_w / 2, b_cx - b_w / 2)
    ih = min(a_cy + a_h / 2, b_cy + b_h / 2) - max(a_cy - a_h / 2, b_cy - b_h / 2)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a_w * a_h + b_w * b_h - inter
    if union <= 0:
        return 0.0
    return inter / union


def nms(detections, iou_threshold: float = 0.45):
    """Greedy per-class suppression by descending score.

    A detection is dropped iff its IoU with an already kept detection of the
    same class exceeds the threshold. Kept items come back in processing
    order (descending score, input order on ties), so the result is stable.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = []
    kept_by_class = {}
    for i in order:
        det = detections[i]
        suppressed = any(
            iou(det, other) > iou_threshold for other in kept_by_class.get(det.class_id, ())
        )
        if not suppressed:
            kept.append(det)
            kept_by_class.setdefault(det.class_id, []).append(det)
    return kept
