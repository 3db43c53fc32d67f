"""Grid target encoding and head decoding.

The detector head is a (B*(C+5), G, G) tensor of raw (linear) values. Per
box slot b the channel block is [tx, ty, tw, th, conf, class scores...]:
tx, ty are cell-relative center offsets, tw, th normalized box sizes.
Training drives the raw values toward their targets directly; decoding
squashes offsets/scores through a logistic and sizes through min(|v|, 1)
so every emitted box is valid whatever the head contains.

A ground-truth object belongs to the cell containing its center; exactly
one slot of that cell is responsible for it.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .boxes import BBox, Detection, iou_xywh


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class GridTarget:
    """Training target mirroring the head layout.

    obj[row, col, b] marks the responsible slot; tx/ty/tw/th hold the
    encoded geometry and class_id the object class for that slot.
    """

    grid_size: int
    boxes_per_cell: int
    obj: np.ndarray        # (G, G, B) bool
    tx: np.ndarray         # (G, G, B) float64
    ty: np.ndarray
    tw: np.ndarray
    th: np.ndarray
    class_id: np.ndarray   # (G, G, B) int

    @classmethod
    def empty(cls, grid_size: int, boxes_per_cell: int) -> "GridTarget":
        shape = (grid_size, grid_size, boxes_per_cell)
        return cls(
            grid_size=grid_size,
            boxes_per_cell=boxes_per_cell,
            obj=np.zeros(shape, dtype=bool),
            tx=np.zeros(shape),
            ty=np.zeros(shape),
            tw=np.zeros(shape),
            th=np.zeros(shape),
            class_id=np.zeros(shape, dtype=np.int64),
        )

    def gt_box(self, row: int, col: int, slot: int) -> BBox:
        """Reconstruct the normalized ground-truth box stored in a slot."""
        g = self.grid_size
        return BBox(
            cx=(col + self.tx[row, col, slot]) / g,
            cy=(row + self.ty[row, col, slot]) / g,
            w=self.tw[row, col, slot],
            h=self.th[row, col, slot],
            class_id=int(self.class_id[row, col, slot]),
        )

    def object_count(self) -> int:
        return int(self.obj.sum())


def split_head(head: np.ndarray, num_classes: int, boxes_per_cell: int):
    """View a head tensor as (B, C+5, G, G)."""
    per_box = num_classes + 5
    ch, g1, g2 = head.shape
    if ch != per_box * boxes_per_cell:
        raise ValueError(
            f"head has {ch} channels, expected {per_box}*{boxes_per_cell}={per_box * boxes_per_cell}"
        )
    return head.reshape(boxes_per_cell, per_box, g1, g2)


def _cell_index(coord: float, grid_size: int) -> int:
    return min(int(coord * grid_size), grid_size - 1)


def encode_targets(
    ground_truth,
    grid_size: int = 13,
    boxes_per_cell: int = 5,
    num_classes: int = 8,
    pred_head: np.ndarray | None = None,
) -> GridTarget:
    """Encode ground-truth boxes into a grid target.

    The responsible slot per object is the free slot of its cell whose
    current prediction has the highest IoU with the object (lowest index on
    ties); without predictions it is the lowest free slot. Objects beyond
    the cell capacity are dropped with a warning.
    """
    target = GridTarget.empty(grid_size, boxes_per_cell)
    pred = None
    if pred_head is not None:
        pred = split_head(pred_head, num_classes, boxes_per_cell)
    for box in ground_truth:
        box.validate(num_classes)
        col = _cell_index(box.cx, grid_size)
        row = _cell_index(box.cy, grid_size)
        free = [b for b in range(boxes_per_cell) if not target.obj[row, col, b]]
        if not free:
            warnings.warn(
                f"cell ({row}, {col}) already holds {boxes_per_cell} objects; dropping one",
                stacklevel=2,
            )
            continue
        slot = free[0]
        if pred is not None:
            best = -1.0
            for b in free:
                p_cx = (col + pred[b, 0, row, col]) / grid_size
                p_cy = (row + pred[b, 1, row, col]) / grid_size
                overlap = iou_xywh(
                    p_cx, p_cy, pred[b, 2, row, col], pred[b, 3, row, col],
                    box.cx, box.cy, box.w, box.h,
                )
                if overlap > best:
                    best = overlap
                    slot = b
        target.obj[row, col, slot] = True
        target.tx[row, col, slot] = box.cx * grid_size - col
        target.ty[row, col, slot] = box.cy * grid_size - row
        target.tw[row, col, slot] = box.w
        target.th[row, col, slot] = box.h
        target.class_id[row, col, slot] = box.class_id
    return target


def decode(
    head: np.ndarray,
    conf_threshold: float = 0.25,
    num_classes: int = 8,
    boxes_per_cell: int = 5,
):
    """Turn a raw head tensor into detections.

    Offsets, confidence and class scores pass through a logistic; sizes
    through min(|v|, 1). Per slot: center (col+tx)/G, (row+ty)/G, size
    (tw, th), score = confidence times the best class score. Slots at or
    above the threshold are emitted in (row, col, slot) order.
    """
    v = split_head(head, num_classes, boxes_per_cell)
    g = v.shape[2]
    tx = _sigmoid(v[:, 0])
    ty = _sigmoid(v[:, 1])
    tw = np.minimum(np.abs(v[:, 2]), 1.0)
    th = np.minimum(np.abs(v[:, 3]), 1.0)
    cls = _sigmoid(v[:, 5:])            # (B, C, G, G)
    best_class = cls.argmax(axis=1)     # (B, G, G)
    best_score = cls.max(axis=1)
    score = _sigmoid(v[:, 4]) * best_score
    out = []
    for row in range(g):
        for col in range(g):
            for b in range(boxes_per_cell):
                s = float(score[b, row, col])
                if s >= conf_threshold:
                    out.append(
                        Detection(
                            cx=float((col + tx[b, row, col]) / g),
                            cy=float((row + ty[b, row, col]) / g),
                            w=float(tw[b, row, col]),
                            h=float(th[b, row, col]),
                            class_id=int(best_class[b, row, col]),
                            score=s,
                        )
                    )
    return out


_SILENT = -40.0  # logistic(-40) underflows to 0: a slot that never scores


def encode_boxes_as_head(
    boxes,
    grid_size: int = 13,
    boxes_per_cell: int = 5,
    num_classes: int = 8,
    confidence: float = 1.0 - 1e-9,
) -> np.ndarray:
    """Construct a noiseless raw head whose decode returns `boxes`.

    Inverts the decode squashing: offsets and scores go in as logits, so
    box centers must not sit exactly on cell boundaries. Each box lands in
    the first free slot of its cell; every other slot is silenced.
    """
    per_box = num_classes + 5
    head = np.full((boxes_per_cell * per_box, grid_size, grid_size), _SILENT)
    v = split_head(head, num_classes, boxes_per_cell)
    v[:, 0:4] = 0.0
    used = np.zeros((grid_size, grid_size, boxes_per_cell), dtype=bool)
    for box in boxes:
        conf = min(getattr(box, "score", confidence), 1.0 - 1e-12)
        if conf <= 0:
            raise ValueError(f"confidence {conf} not encodable as a logit")
        col = _cell_index(box.cx, grid_size)
        row = _cell_index(box.cy, grid_size)
        tx = box.cx * grid_size - col
        ty = box.cy * grid_size - row
        if not (0.0 < tx < 1.0 and 0.0 < ty < 1.0):
            raise ValueError("box center sits exactly on a cell boundary")
        free = [b for b in range(boxes_per_cell) if not used[row, col, b]]
        if not free:
            raise ValueError(f"more than {boxes_per_cell} boxes in cell ({row}, {col})")
        b = free[0]
        used[row, col, b] = True
        v[b, 0, row, col] = _logit(tx)
        v[b, 1, row, col] = _logit(ty)
        v[b, 2, row, col] = box.w
        v[b, 3, row, col] = box.h
        v[b, 4, row, col] = _logit(conf)
        v[b, 5 + box.class_id, row, col] = -_SILENT  # class score ~ 1.0
    return head
