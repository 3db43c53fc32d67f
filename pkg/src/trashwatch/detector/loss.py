"""Sum-squared detection loss and its exact gradient.

Per image the loss over all grid cells and box slots is

    lambda_coord * sum_obj [(tx - tx^)^2 + (ty - ty^)^2]
  + lambda_coord * sum_obj [(sqrt(tw) - sqrt(tw^))^2 + (sqrt(th) - sqrt(th^))^2]
  +                sum_obj (C - C^)^2
  + lambda_noobj * sum_noobj (C^)^2
  +                sum_obj sum_c (p_c - p^_c)^2

where the responsible-slot confidence target C is the IoU between the slot's
predicted box and its ground-truth box, and noobj slots have target 0. The
class term applies to responsible slots with a one-hot target.

Negative predicted sizes are clamped to 0 before the square root and before
the IoU geometry; the clamp's gradient is 0. The confidence target depends
on the predicted coordinates, and the analytic gradient differentiates
through that dependency so it matches finite differences of the loss.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridTarget, split_head


@dataclass(frozen=True)
class LossWeights:
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5

    def validate(self) -> "LossWeights":
        if self.lambda_coord <= 0 or self.lambda_noobj <= 0:
            raise ValueError("loss weights must be strictly positive")
        return self


@dataclass(frozen=True)
class LossBreakdown:
    coord_err: float
    iou_err: float
    cls_err: float

    @property
    def total(self) -> float:
        return self.coord_err + self.iou_err + self.cls_err

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(
            self.coord_err + other.coord_err,
            self.iou_err + other.iou_err,
            self.cls_err + other.cls_err,
        )

    def scaled(self, factor: float) -> "LossBreakdown":
        return LossBreakdown(
            self.coord_err * factor, self.iou_err * factor, self.cls_err * factor
        )


ZERO_LOSS = LossBreakdown(0.0, 0.0, 0.0)


def _iou_with_partials(p_cx, p_cy, p_w, p_h, g_cx, g_cy, g_w, g_h):
    """IoU of the predicted box against a fixed ground-truth box, plus the
    partial derivatives wrt the (already clamped) predicted cx, cy, w, h."""
    px1, px2 = p_cx - p_w / 2, p_cx + p_w / 2
    py1, py2 = p_cy - p_h / 2, p_cy + p_h / 2
    gx1, gx2 = g_cx - g_w / 2, g_cx + g_w / 2
    gy1, gy2 = g_cy - g_h / 2, g_cy + g_h / 2
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    if iw <= 0 or ih <= 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    inter = iw * ih
    union = p_w * p_h + g_w * g_h - inter
    if union <= 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    # Which box edge is active in each min/max decides the derivative.
    diw_dcx = (1.0 if px2 < gx2 else 0.0) - (1.0 if px1 > gx1 else 0.0)
    diw_dw = 0.5 * (1.0 if px2 < gx2 else 0.0) + 0.5 * (1.0 if px1 > gx1 else 0.0)
    dih_dcy = (1.0 if py2 < gy2 else 0.0) - (1.0 if py1 > gy1 else 0.0)
    dih_dh = 0.5 * (1.0 if py2 < gy2 else 0.0) + 0.5 * (1.0 if py1 > gy1 else 0.0)
    value = inter / union

    def d_iou(d_inter, d_area):
        d_union = d_area - d_inter
        return (d_inter * union - inter * d_union) / (union * union)

    return (
        value,
        d_iou(ih * diw_dcx, 0.0),
        d_iou(iw * dih_dcy, 0.0),
        d_iou(ih * diw_dw, p_h),
        d_iou(iw * dih_dh, p_w),
    )


def _loss_core(head, target: GridTarget, weights: LossWeights, want_grad: bool):
    g = target.grid_size
    bpc = target.boxes_per_cell
    per_box = head.shape[0] // bpc
    num_classes = per_box - 5
    if num_classes < 1 or head.shape != (bpc * per_box, g, g):
        raise ValueError(
            f"head shape {head.shape} does not match grid {g} with {bpc} boxes per cell"
        )
    v = split_head(head, num_classes, bpc)            # (B, C+5, G, G)
    grad = np.zeros_like(v) if want_grad else None

    obj = target.obj.transpose(2, 0, 1)               # (B, G, G)
    conf = v[:, 4]
    noobj = ~obj
    iou_err = float(weights.lambda_noobj * np.sum(np.square(conf, dtype=np.float64) * noobj))
    if want_grad:
        grad[:, 4] += 2.0 * weights.lambda_noobj * conf * noobj

    coord_err = 0.0
    cls_err = 0.0
    lc = weights.lambda_coord
    for row, col, b in zip(*np.nonzero(target.obj)):
        t_x = target.tx[row, col, b]
        t_y = target.ty[row, col, b]
        t_w = target.tw[row, col, b]
        t_h = target.th[row, col, b]
        p_x = float(v[b, 0, row, col])
        p_y = float(v[b, 1, row, col])
        p_w = float(v[b, 2, row, col])
        p_h = float(v[b, 3, row, col])
        p_c = float(v[b, 4, row, col])

        w_pos = p_w > 0.0
        h_pos = p_h > 0.0
        rw = math.sqrt(p_w) if w_pos else 0.0
        rh = math.sqrt(p_h) if h_pos else 0.0
        coord_err += lc * ((t_x - p_x) ** 2 + (t_y - p_y) ** 2)
        coord_err += lc * ((math.sqrt(t_w) - rw) ** 2 + (math.sqrt(t_h) - rh) ** 2)

        gt_cx = (col + t_x) / g
        gt_cy = (row + t_y) / g
        c_target, dc_dcx, dc_dcy, dc_dw, dc_dh = _iou_with_partials(
            (col + p_x) / g, (row + p_y) / g, max(p_w, 0.0), max(p_h, 0.0),
            gt_cx, gt_cy, t_w, t_h,
        )
        iou_err += (c_target - p_c) ** 2

        cls_t = np.zeros(num_classes)
        cls_t[target.class_id[row, col, b]] = 1.0
        cls_p = v[b, 5:, row, col].astype(np.float64)
        cls_err += float(np.sum((cls_t - cls_p) ** 2))

        if want_grad:
            resid = 2.0 * (c_target - p_c)
            grad[b, 0, row, col] += 2.0 * lc * (p_x - t_x) + resid * dc_dcx / g
            grad[b, 1, row, col] += 2.0 * lc * (p_y - t_y) + resid * dc_dcy / g
            if w_pos:
                grad[b, 2, row, col] += -lc * (math.sqrt(t_w) - rw) / rw + resid * dc_dw
            if h_pos:
                grad[b, 3, row, col] += -lc * (math.sqrt(t_h) - rh) / rh + resid * dc_dh
            # The dense noobj pull is zero on responsible slots.
            grad[b, 4, row, col] += 2.0 * (p_c - c_target)
            grad[b, 5:, row, col] += 2.0 * (cls_p - cls_t)

    breakdown = LossBreakdown(float(coord_err), float(iou_err), float(cls_err))
    if want_grad:
        return breakdown, grad.reshape(head.shape)
    return breakdown, None


def detection_loss(head, target: GridTarget, weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Evaluate the loss of a head tensor against an encoded target."""
    breakdown, _ = _loss_core(head, target, weights, want_grad=False)
    return breakdown


def loss_gradient(head, target: GridTarget, weights: LossWeights = LossWeights()):
    """Gradient of detection_loss wrt every head entry; shape matches head."""
    _, grad = _loss_core(head, target, weights, want_grad=True)
    return grad


def loss_with_gradient(head, target: GridTarget, weights: LossWeights = LossWeights()):
    """One-pass (breakdown, gradient) for the training loop."""
    return _loss_core(head, target, weights, want_grad=True)
