"""Shared test utilities: finite differences and independent oracles."""

import numpy as np


def fd_gradient(f, x, step=1e-3):
    """Central finite differences of scalar f() wrt array x (in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        hi = f()
        x[i] = orig - step
        lo = f()
        x[i] = orig
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(analytic, numeric):
    """Max abs difference normalized by the numeric gradient's scale."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(float(np.abs(numeric).max()), 1e-8)
    return float(np.abs(analytic - numeric).max()) / scale


def corner_iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    """Plain corner-format IoU, written independently of the package."""
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    a = (ax2 - ax1) * (ay2 - ay1)
    b = (bx2 - bx1) * (by2 - by1)
    if a + b - inter <= 0:
        return 0.0
    return inter / (a + b - inter)


def center_iou(acx, acy, aw, ah, bcx, bcy, bw, bh):
    aw, ah, bw, bh = max(aw, 0.0), max(ah, 0.0), max(bw, 0.0), max(bh, 0.0)
    return corner_iou(
        acx - aw / 2, acy - ah / 2, acx + aw / 2, acy + ah / 2,
        bcx - bw / 2, bcy - bh / 2, bcx + bw / 2, bcy + bh / 2,
    )


def naive_detection_loss(head, target, lambda_coord, lambda_noobj):
    """Independent per-cell-per-box loop evaluation of the detection loss.

    Returns (coord_err, iou_err, cls_err). Deliberately written as plain
    scalar loops with its own IoU so it shares nothing with the package
    implementation.
    """
    g = target.grid_size
    bpc = target.boxes_per_cell
    per_box = head.shape[0] // bpc
    num_classes = per_box - 5
    coord = 0.0
    iouerr = 0.0
    cls = 0.0
    for row in range(g):
        for col in range(g):
            for b in range(bpc):
                base = b * per_box
                px = head[base + 0, row, col]
                py = head[base + 1, row, col]
                pw = head[base + 2, row, col]
                ph = head[base + 3, row, col]
                pc = head[base + 4, row, col]
                if target.obj[row, col, b]:
                    tx = target.tx[row, col, b]
                    ty = target.ty[row, col, b]
                    tw = target.tw[row, col, b]
                    th = target.th[row, col, b]
                    coord += lambda_coord * ((tx - px) ** 2 + (ty - py) ** 2)
                    rw = np.sqrt(pw) if pw > 0 else 0.0
                    rh = np.sqrt(ph) if ph > 0 else 0.0
                    coord += lambda_coord * (
                        (np.sqrt(tw) - rw) ** 2 + (np.sqrt(th) - rh) ** 2
                    )
                    c_target = center_iou(
                        (col + px) / g, (row + py) / g, pw, ph,
                        (col + tx) / g, (row + ty) / g, tw, th,
                    )
                    iouerr += (c_target - pc) ** 2
                    for c in range(num_classes):
                        want = 1.0 if c == target.class_id[row, col, b] else 0.0
                        cls += (want - head[base + 5 + c, row, col]) ** 2
                else:
                    iouerr += lambda_noobj * pc * pc
    return float(coord), float(iouerr), float(cls)


def naive_nms(detections, iou_threshold):
    """Quadratic reference suppression: same contract, naive scan."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = []
    for i in order:
        d = detections[i]
        ok = True
        for k in kept:
            if k.class_id != d.class_id:
                continue
            overlap = center_iou(d.cx, d.cy, d.w, d.h, k.cx, k.cy, k.w, k.h)
            if overlap > iou_threshold:
                ok = False
                break
        if ok:
            kept.append(d)
    return kept


def naive_match(detections, ground_truth, iou_threshold):
    """Brute-force matcher: greedy by score, best unmatched same-class gt.

    Returns (flags, tp, fp, fn) where flags[i] is True iff detection i
    (input order) matched.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    taken = [False] * len(ground_truth)
    flags = [False] * len(detections)
    for i in order:
        d = detections[i]
        best, best_ov = None, 0.0
        for j, gt in enumerate(ground_truth):
            if taken[j] or gt.class_id != d.class_id:
                continue
            ov = center_iou(d.cx, d.cy, d.w, d.h, gt.cx, gt.cy, gt.w, gt.h)
            if ov >= iou_threshold and ov > best_ov:
                best, best_ov = j, ov
        if best is not None:
            taken[best] = True
            flags[i] = True
    tp = sum(flags)
    fp = len(detections) - tp
    fn = len(ground_truth) - tp
    return flags, tp, fp, fn


def sweep_ap(scored_flags, gt_count):
    """Exhaustive threshold-sweep AP oracle.

    Evaluates (recall, precision) at every distinct score threshold and
    integrates the running-max precision envelope over recall.
    """
    if gt_count < 1:
        raise ValueError("no ground truth")
    if not scored_flags:
        return 0.0
    thresholds = sorted({score for score, _ in scored_flags}, reverse=True)
    points = []
    for t in thresholds:
        kept = [flag for score, flag in scored_flags if score >= t]
        tp = sum(kept)
        points.append((tp / gt_count, tp / len(kept)))
    recalls = [0.0] + [p[0] for p in points]
    precisions = [0.0] + [p[1] for p in points]
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * precisions[i]
    return area
