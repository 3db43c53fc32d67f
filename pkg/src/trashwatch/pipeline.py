"""Watch-mode runtime: detect per frame, record a 10-second clip per event.

The recorder is a two-state machine. An idle recorder opens an event on the
first frame with detections at or above the watch threshold: it writes an
annotated snapshot of the trigger frame, logs the event, and starts a clip
of ceil(10 * fps) frames beginning with the trigger frame itself. While
recording it appends every frame regardless of detections (they are noted
in the manifest but never extend the window); when the window closes the
event is finalized and the recorder is idle again, ready to re-trigger.

Clips are directories of numbered PPM frames plus a manifest.json; the
event log is JSON-per-line and append-only. In deterministic mode wall
timestamps are replaced by frame indices so replays are byte-identical.
"""

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data.ppm import PpmError, read_ppm, write_ppm
from .data.frames import frame_number
from .detector.boxes import Detection


def clip_length(fps: float) -> int:
    """Frames in a 10-second clip."""
    return math.ceil(10.0 * fps)


def recorder_transition(recording: bool, remaining: int, triggered: bool, clip_frames: int):
    """Pure transition of the recorder core.

    Returns (recording', remaining', actions); actions is a tuple drawn
    from ("open", "append", "finalize").
    """
    if not recording:
        if not triggered:
            return False, 0, ()
        remaining = clip_frames - 1  # the trigger frame is appended now
        if remaining == 0:
            return False, 0, ("open", "append", "finalize")
        return True, remaining, ("open", "append")
    remaining -= 1
    if remaining == 0:
        return False, 0, ("append", "finalize")
    return True, remaining, ("append",)


@dataclass
class Event:
    event_id: int
    trigger_frame: int
    time: float
    detections: list
    clip_dir: str
    state: str = "recording"  # recording | complete | partial | failed
    frames_written: int = 0

    def log_record(self) -> dict:
        return {
            "eventId": self.event_id,
            "triggerFrame": self.trigger_frame,
            "time": self.time,
            "detections": [detection_record(d) for d in self.detections],
            "clipDir": self.clip_dir,
            "state": self.state,
        }


def detection_record(det: Detection) -> dict:
    return {
        "classId": det.class_id,
        "cx": det.cx,
        "cy": det.cy,
        "w": det.w,
        "h": det.h,
        "score": det.score,
    }


def detection_from_record(rec: dict) -> Detection:
    return Detection(
        cx=rec["cx"], cy=rec["cy"], w=rec["w"], h=rec["h"],
        class_id=rec["classId"], score=rec["score"],
    )


def draw_boxes(image: np.ndarray, detections, thickness: int = 2) -> np.ndarray:
    """Burn white box outlines into a copy of the image."""
    out = image.copy()
    h, w = out.shape[:2]
    for det in detections:
        x1, y1, x2, y2 = det.corners()
        x1 = int(np.clip(round(x1 * w), 0, w - 1))
        x2 = int(np.clip(round(x2 * w), 0, w - 1))
        y1 = int(np.clip(round(y1 * h), 0, h - 1))
        y2 = int(np.clip(round(y2 * h), 0, h - 1))
        t = thickness
        out[y1 : y1 + t, x1 : x2 + 1] = 255
        out[max(y2 - t + 1, 0) : y2 + 1, x1 : x2 + 1] = 255
        out[y1 : y2 + 1, x1 : x1 + t] = 255
        out[y1 : y2 + 1, max(x2 - t + 1, 0) : x2 + 1] = 255
    return out


class Recorder:
    """Owns recorder state and performs the clip/log side effects."""

    def __init__(self, clip_root, fps: float, event_log_path=None, deterministic: bool = False):
        if fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.clip_root = str(clip_root)
        self.fps = fps
        self.clip_frames = clip_length(fps)
        self.deterministic = deterministic
        self.event_log_path = event_log_path
        self.recording = False
        self.remaining = 0
        self.active: Event | None = None
        self.next_event_id = 1
        self.completed: list[Event] = []
        self._manifest_frames = []

    def _now(self, frame_index: int) -> float:
        return float(frame_index) if self.deterministic else time.time()

    def _append_log(self, event: Event) -> None:
        if self.event_log_path is None:
            return
        with open(self.event_log_path, "a", encoding="ascii") as f:
            f.write(json.dumps(event.log_record(), sort_keys=True) + "\n")

    def _open_event(self, frame_index: int, frame: np.ndarray, detections) -> None:
        event = Event(
            event_id=self.next_event_id,
            trigger_frame=frame_index,
            time=self._now(frame_index),
            detections=list(detections),
            clip_dir=os.path.join(self.clip_root, f"event-{self.next_event_id}"),
        )
        self.next_event_id += 1
        try:
            os.makedirs(event.clip_dir, exist_ok=True)
            write_ppm(
                os.path.join(event.clip_dir, "trigger.ppm"), draw_boxes(frame, detections)
            )
        except OSError as e:
            event.state = "failed"
            self._append_log(event)
            warnings.warn(f"clip directory unwritable ({e}); event {event.event_id} failed",
                          stacklevel=2)
            self.active = None
            self.recording = False
            self.remaining = 0
            return
        self.active = event
        self._manifest_frames = []
        self._append_log(event)

    def _append_frame(self, frame_index: int, frame: np.ndarray, detections) -> None:
        if self.active is None or self.active.state == "failed":
            return
        name = f"frame-{self.active.frames_written:06d}.ppm"
        write_ppm(os.path.join(self.active.clip_dir, name), frame)
        self.active.frames_written += 1
        self._manifest_frames.append(
            {
                "frame": frame_index,
                "file": name,
                "detections": [detection_record(d) for d in detections],
            }
        )

    def _finalize(self, partial: bool = False) -> None:
        if self.active is None:
            return
        event = self.active
        event.state = "partial" if partial else "complete"
        manifest = {
            "eventId": event.event_id,
            "triggerFrame": event.trigger_frame,
            "time": event.time,
            "fps": self.fps,
            "clipFrames": self.clip_frames,
            "framesWritten": event.frames_written,
            "state": event.state,
            "detections": [detection_record(d) for d in event.detections],
            "frames": self._manifest_frames,
        }
        with open(os.path.join(event.clip_dir, "manifest.json"), "w", encoding="ascii") as f:
            json.dump(manifest, f, sort_keys=True, indent=1)
            f.write("\n")
        self._append_log(event)
        self.completed.append(event)
        self.active = None
        self._manifest_frames = []

    def step(self, frame_index: int, frame: np.ndarray, detections) -> tuple:
        """Feed one frame and its detections; returns the actions taken."""
        triggered = bool(detections)
        self.recording, self.remaining, actions = recorder_transition(
            self.recording, self.remaining, triggered, self.clip_frames
        )
        for action in actions:
            if action == "open":
                self._open_event(frame_index, frame, detections)
            elif action == "append":
                self._append_frame(frame_index, frame, detections)
            elif action == "finalize":
                self._finalize()
        return actions

    def close(self) -> None:
        """Finalize a still-active recording (source ended mid-clip)."""
        if self.active is not None:
            self._finalize(partial=True)
        self.recording = False
        self.remaining = 0


class FrameSource:
    """Ordered frame supplier; replay from a directory or raw RGB24 stdin."""

    def __init__(self, kind: str, width: int, height: int, fps: float, directory=None):
        if fps <= 0:
            raise ValueError(f"fps must be positive, got {fps}")
        self.kind = kind
        self.width = width
        self.height = height
        self.fps = fps
        self.directory = directory

    def frames(self):
        raise NotImplementedError


class DirectorySource(FrameSource):
    def __init__(self, directory, fps: float):
        names = [
            n for n in os.listdir(directory)
            if n.endswith(".ppm") and frame_number(n) is not None
        ]
        if not names:
            self._paths = []
            width = height = 0
        else:
            names.sort(key=frame_number)
            self._paths = [os.path.join(str(directory), n) for n in names]
            first = read_ppm(self._paths[0])
            height, width = first.shape[:2]
        super().__init__(kind="directory", width=width, height=height, fps=fps,
                         directory=str(directory))

    def frames(self):
        for path in self._paths:
            try:
                yield read_ppm(path)
            except (PpmError, OSError) as e:
                warnings.warn(f"skipping malformed frame {path}: {e}", stacklevel=2)


class StreamSource(FrameSource):
    """Sequential raw RGB24 frames from a byte stream (standard input)."""

    def __init__(self, stream, width: int, height: int, fps: float):
        super().__init__(kind="stream", width=width, height=height, fps=fps)
        self._stream = stream

    def frames(self):
        frame_bytes = self.width * self.height * 3
        while True:
            buf = self._stream.read(frame_bytes)
            if not buf:
                return
            if len(buf) < frame_bytes:
                warnings.warn("stream ended mid-frame; dropping the partial frame",
                              stacklevel=2)
                return
            yield np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width, 3)


@dataclass
class WatchSummary:
    frames: int = 0
    detections: int = 0
    events: int = 0
    partial_events: int = 0
    latencies_ms: list = field(default_factory=list)

    @property
    def mean_latency_ms(self) -> float:
        return float(np.mean(self.latencies_ms)) if self.latencies_ms else 0.0

    @property
    def p95_latency_ms(self) -> float:
        return percentile95(self.latencies_ms)


def percentile95(samples) -> float:
    if not samples:
        return 0.0
    ordered = sorted(samples)
    index = max(0, math.ceil(0.95 * len(ordered)) - 1)
    return float(ordered[index])


def run_watch(source: FrameSource, detect_fn, recorder: Recorder, should_stop=None) -> WatchSummary:
    """Drive frames through detection and the recorder until the source ends.

    `detect_fn(frame) -> detections` holds the model; the recorder owns all
    event state. An active clip at source end (or stop signal) is finalized
    as partial.
    """
    summary = WatchSummary()
    for index, frame in enumerate(source.frames()):
        t0 = time.perf_counter()
        detections = detect_fn(frame)
        summary.latencies_ms.append((time.perf_counter() - t0) * 1e3)
        recorder.step(index, frame, detections)
        summary.frames += 1
        summary.detections += len(detections)
        if should_stop and should_stop():
            break
    if recorder.active is not None:
        summary.partial_events += 1
    recorder.close()
    summary.events = len(recorder.completed)
    return summary


def measure_latency(net, image: np.ndarray, repetitions: int, preprocess=None):
    """Wall-clock forward statistics after one warm-up pass.

    Returns a dict with mean/p95/min/max in milliseconds.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    x = preprocess(image) if preprocess else image
    net.predict(x)
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        net.predict(x)
        samples.append((time.perf_counter() - t0) * 1e3)
    return {
        "repetitions": repetitions,
        "mean_ms": float(np.mean(samples)),
        "p95_ms": percentile95(samples),
        "min_ms": float(min(samples)),
        "max_ms": float(max(samples)),
    }


def read_event_log(path):
    """Parse a JSON-per-line event log back into records."""
    records = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    return records
