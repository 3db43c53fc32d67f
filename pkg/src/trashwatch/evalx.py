"""Detection-vs-ground-truth matching and the full metric set.

Matching is greedy by descending detection score: a detection is a true
positive iff it shares the class of an unmatched ground-truth box with
IoU at or above the threshold (the best-overlapping one is consumed);
everything else is a false positive, and leftover ground truth is false
negatives. True negatives exist only at frame level: frames with neither
ground truth nor detections.

Precision and sensitivity are percentages; F1 and F2 stay on the scale of
their inputs. AP uses the all-point interpolated area under the
precision envelope at a single IoU threshold, and mAP is the unweighted
class mean, as a percentage.
"""

from dataclasses import dataclass, field

import numpy as np

from .detector.boxes import iou


@dataclass
class MatchResult:
    per_detection: list  # (detection, matched_gt_index or None, is_tp)
    tp: dict             # per class
    fp: dict
    fn: dict

    def counts(self, class_id):
        return self.tp.get(class_id, 0), self.fp.get(class_id, 0), self.fn.get(class_id, 0)


def match_detections(detections, ground_truth, iou_threshold: float = 0.5) -> MatchResult:
    """Match one image's detections against its ground truth."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    matched = [False] * len(ground_truth)
    per_detection = [None] * len(detections)
    tp, fp, fn = {}, {}, {}
    for i in order:
        det = detections[i]
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(ground_truth):
            if matched[j] or gt.class_id != det.class_id:
                continue
            overlap = iou(det, gt)
            if overlap >= iou_threshold and overlap > best_iou:
                best_j, best_iou = j, overlap
        if best_j is not None:
            matched[best_j] = True
            per_detection[i] = (det, best_j, True)
            tp[det.class_id] = tp.get(det.class_id, 0) + 1
        else:
            per_detection[i] = (det, None, False)
            fp[det.class_id] = fp.get(det.class_id, 0) + 1
    for j, gt in enumerate(ground_truth):
        if not matched[j]:
            fn[gt.class_id] = fn.get(gt.class_id, 0) + 1
    return MatchResult(per_detection=per_detection, tp=tp, fp=fp, fn=fn)


def precision(tp: int, fp: int):
    """TP / (TP + FP) * 100; None when undefined (no detections)."""
    if tp + fp == 0:
        return None
    return tp / (tp + fp) * 100.0


def sensitivity(tp: int, fn: int):
    """TP / (TP + FN) * 100; None when undefined (no ground truth)."""
    if tp + fn == 0:
        return None
    return tp / (tp + fn) * 100.0


def f1_score(pre, sen):
    """Harmonic mean on the inputs' scale; None when undefined."""
    if pre is None or sen is None or pre + sen == 0:
        return None
    return 2.0 * sen * pre / (sen + pre)


def f2_score(pre, sen):
    """Recall-weighted mean, 5*Pre*Sen / (4*Pre + Sen), inputs' scale."""
    if pre is None or sen is None or pre + sen == 0:
        return None
    return 5.0 * pre * sen / (4.0 * pre + sen)


@dataclass
class PRCurve:
    points: list          # (recall, precision) by descending score
    ap: float
    class_id: int
    gt_count: int
    scores: list = field(default_factory=list)


def _interpolated_ap(points) -> float:
    """Area under the precision envelope (all-point interpolation)."""
    if not points:
        return 0.0
    recalls = np.concatenate([[0.0], [p[0] for p in points]])
    precisions = np.concatenate([[0.0], [p[1] for p in points]])
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    steps = np.nonzero(np.diff(recalls))[0] + 1
    return float(np.sum((recalls[steps] - recalls[steps - 1]) * precisions[steps]))


def average_precision(scored_flags, gt_count: int, class_id: int = 0) -> PRCurve:
    """PR curve and AP for one class.

    `scored_flags` holds (score, is_tp) per detection of the class; the
    ranking is by descending score with input order breaking ties.
    """
    if gt_count < 1:
        raise ValueError("AP is undefined without ground truth for the class")
    order = sorted(range(len(scored_flags)), key=lambda i: (-scored_flags[i][0], i))
    points = []
    scores = []
    tp_cum = 0
    fp_cum = 0
    for rank, i in enumerate(order, start=1):
        score, is_tp = scored_flags[i]
        tp_cum += bool(is_tp)
        fp_cum += not is_tp
        points.append((tp_cum / gt_count, tp_cum / rank))
        scores.append(score)
    return PRCurve(
        points=points,
        ap=_interpolated_ap(points),
        class_id=class_id,
        gt_count=gt_count,
        scores=scores,
    )


@dataclass
class ClassReport:
    class_id: int
    name: str
    gt: int
    tp: int
    fp: int
    fn: int
    precision: float | None
    sensitivity: float | None
    f1: float | None
    f2: float | None
    ap: float | None
    curve: PRCurve | None


@dataclass
class EvalReport:
    per_class: list
    map_percent: float | None
    frame_tn: int
    frames: int
    excluded_classes: list

    def row(self, class_id) -> ClassReport:
        return next(r for r in self.per_class if r.class_id == class_id)


def evaluate_dataset(samples, class_names, iou_threshold: float = 0.5) -> EvalReport:
    """Full evaluation over (image_id, ground_truth, detections) samples.

    Counts for the tabulated metrics use every supplied detection; AP ranks
    detections across the whole dataset per class. Classes without ground
    truth are excluded from mAP.
    """
    samples = sorted(samples, key=lambda s: str(s[0]))
    num_classes = len(class_names)
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    gt_total = [0] * num_classes
    scored: list[list] = [[] for _ in range(num_classes)]
    frame_tn = 0
    for _, ground_truth, detections in samples:
        if not ground_truth and not detections:
            frame_tn += 1
        result = match_detections(detections, ground_truth, iou_threshold)
        for c in range(num_classes):
            t, f, n = result.counts(c)
            tp[c] += t
            fp[c] += f
            fn[c] += n
        for gt in ground_truth:
            gt_total[gt.class_id] += 1
        for det, _, is_tp in result.per_detection:
            scored[det.class_id].append((det.score, is_tp))

    per_class = []
    aps = []
    excluded = []
    for c in range(num_classes):
        curve = None
        ap = None
        if gt_total[c] > 0:
            curve = average_precision(scored[c], gt_total[c], class_id=c)
            ap = curve.ap
            aps.append(ap)
        elif scored[c]:
            excluded.append(class_names[c])
        pre = precision(tp[c], fp[c])
        sen = sensitivity(tp[c], fn[c])
        per_class.append(
            ClassReport(
                class_id=c,
                name=class_names[c],
                gt=gt_total[c],
                tp=tp[c],
                fp=fp[c],
                fn=fn[c],
                precision=pre,
                sensitivity=sen,
                f1=f1_score(pre, sen),
                f2=f2_score(pre, sen),
                ap=ap,
                curve=curve,
            )
        )
    map_percent = float(np.mean(aps) * 100.0) if aps else None
    return EvalReport(
        per_class=per_class,
        map_percent=map_percent,
        frame_tn=frame_tn,
        frames=len(samples),
        excluded_classes=excluded,
    )


def _fmt(value) -> str:
    return "undef" if value is None else f"{value:7.2f}"


def format_report(report: EvalReport) -> str:
    """Structured text rendering with per-class rows and a summary."""
    lines = []
    header = (
        f"{'class':<18} {'gt':>5} {'TP':>5} {'FP':>5} {'FN':>5} "
        f"{'prec':>7} {'sens':>7} {'F1':>7} {'F2':>7} {'AP':>7}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.per_class:
        ap = "  excl" if r.ap is None else f"{r.ap * 100:6.2f}"
        lines.append(
            f"{r.name:<18} {r.gt:>5} {r.tp:>5} {r.fp:>5} {r.fn:>5} "
            f"{_fmt(r.precision):>7} {_fmt(r.sensitivity):>7} "
            f"{_fmt(r.f1):>7} {_fmt(r.f2):>7} {ap:>7}"
        )
    lines.append("-" * len(header))
    map_str = "undefined" if report.map_percent is None else f"{report.map_percent:.2f}"
    lines.append(f"mAP: {map_str}   frames: {report.frames}   frame TN: {report.frame_tn}")
    if report.excluded_classes:
        lines.append(
            "note: no ground truth for " + ", ".join(report.excluded_classes)
            + "; excluded from mAP"
        )
    return "\n".join(lines) + "\n"


def report_records(report: EvalReport):
    """Flat dicts for the JSON-per-line rendering of the report."""
    records = []
    for r in report.per_class:
        records.append(
            {
                "classId": r.class_id,
                "className": r.name,
                "gt": r.gt,
                "TP": r.tp,
                "FP": r.fp,
                "FN": r.fn,
                "precision": r.precision,
                "sensitivity": r.sensitivity,
                "f1": r.f1,
                "f2": r.f2,
                "ap": r.ap,
            }
        )
    records.append(
        {
            "mAP": report.map_percent,
            "frames": report.frames,
            "frameTN": report.frame_tn,
        }
    )
    return records
