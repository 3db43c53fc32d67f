"""Figure rendering for the report paths.

Training and evaluation write delimited text first (CSV / JSON lines);
these helpers render the matching matplotlib figures next to them.
"""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data.ppm import write_ppm


def render_training_curves(log_path, figure_path) -> None:
    """Loss components (and mAP when present) against iteration."""
    iterations = []
    series = {"total": [], "coordErr": [], "iouErr": [], "clsErr": []}
    eval_points = []
    with open(log_path, newline="") as f:
        for row in csv.DictReader(f):
            iterations.append(int(row["iteration"]))
            for key in series:
                series[key].append(float(row[key]))
            if row.get("mAP"):
                eval_points.append((int(row["iteration"]), float(row["mAP"])))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for key, values in series.items():
        ax.plot(iterations, values, label=key, linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss (per image)")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    if eval_points:
        ax2 = ax.twinx()
        ax2.plot(*zip(*eval_points), "o--", color="tab:red", label="mAP", markersize=3)
        ax2.set_ylabel("mAP (%)")
        ax2.set_ylim(0, 105)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=110)
    plt.close(fig)


def write_pr_csv(curve, path) -> None:
    """Two-column recall,precision CSV for one class."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("recall", "precision"))
        for recall, prec in curve.points:
            writer.writerow((f"{recall:.6f}", f"{prec:.6f}"))


def render_pr_curves(report, figure_path) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    for row in report.per_class:
        if row.curve is None or not row.curve.points:
            continue
        recalls = [0.0] + [p[0] for p in row.curve.points]
        precisions = [1.0] + [p[1] for p in row.curve.points]
        ax.plot(recalls, precisions, label=f"{row.name} (AP {row.ap:.2f})", linewidth=1.2)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    title = "PR curves"
    if report.map_percent is not None:
        title += f" (mAP {report.map_percent:.2f}%)"
    ax.set_title(title)
    ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(figure_path, dpi=110)
    plt.close(fig)


def render_annotated_image(image: np.ndarray, detections, class_names, out_path) -> None:
    """Draw labeled detection rectangles and save as PPM."""
    h, w = image.shape[:2]
    dpi = 100.0
    fig = plt.figure(figsize=(w / dpi, h / dpi), dpi=dpi)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(image)
    ax.set_axis_off()
    for det in detections:
        x1, y1, x2, y2 = det.corners()
        ax.add_patch(
            plt.Rectangle(
                (x1 * w, y1 * h), (x2 - x1) * w, (y2 - y1) * h,
                fill=False, edgecolor="lime", linewidth=2,
            )
        )
        name = class_names[det.class_id] if det.class_id < len(class_names) else str(det.class_id)
        ax.text(
            x1 * w, max(y1 * h - 4, 2), f"{name} {det.score:.2f}",
            color="black", fontsize=8,
            bbox={"facecolor": "lime", "pad": 1, "edgecolor": "none"},
        )
    fig.canvas.draw()
    rgba = np.asarray(fig.canvas.buffer_rgba())
    plt.close(fig)
    write_ppm(out_path, rgba[:, :, :3].copy())
