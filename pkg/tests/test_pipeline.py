import json
import os

import numpy as np
import pytest

from trashwatch.data.ppm import read_ppm, write_ppm
from trashwatch.detector.boxes import Detection
from trashwatch.pipeline import (
    DirectorySource,
    Recorder,
    StreamSource,
    clip_length,
    detection_from_record,
    draw_boxes,
    measure_latency,
    percentile95,
    read_event_log,
    recorder_transition,
    run_watch,
)


def frame(value=100, size=8):
    return np.full((size, size, 3), value, dtype=np.uint8)


DET = Detection(0.5, 0.5, 0.4, 0.4, 2, 0.9)


def reference_trace(triggers, clip_frames):
    """Independent simulator of the recorder contract used as an oracle.

    State: -1 when idle, otherwise frames left to append after this one.
    """
    out = []
    left = 0
    recording = False
    for fired in triggers:
        if not recording:
            if fired:
                if clip_frames == 1:
                    out.append(("open", "append", "finalize"))
                else:
                    recording = True
                    left = clip_frames - 1
                    out.append(("open", "append"))
            else:
                out.append(())
        else:
            left -= 1
            if left == 0:
                recording = False
                out.append(("append", "finalize"))
            else:
                out.append(("append",))
    return out


class TestRecorderTransition:
    def test_quiescent(self):
        assert recorder_transition(False, 0, False, 10) == (False, 0, ())

    def test_trigger_opens_and_appends(self):
        rec, left, actions = recorder_transition(False, 0, True, 10)
        assert (rec, left) == (True, 9)
        assert actions == ("open", "append")

    def test_window_closes_after_clip_frames(self):
        state = (False, 0)
        seen = []
        for fired in [True] + [False] * 4:
            state = recorder_transition(state[0], state[1], fired, 3)[:2]
            seen.append(state)
        assert seen[:3] == [(True, 2), (True, 1), (False, 0)]

    def test_retrigger_during_recording_ignored(self):
        rec, left, actions = recorder_transition(True, 5, True, 10)
        assert (rec, left) == (True, 4)
        assert actions == ("append",)

    def test_separated_triggers_make_two_events(self):
        # fps=3 -> 30-frame window; triggers at frames 5 and 100.
        clip = clip_length(3)
        triggers = [False] * 200
        triggers[5] = triggers[100] = True
        opens = 0
        state = (False, 0)
        for fired in triggers:
            state0, state1, actions = recorder_transition(state[0], state[1], fired, clip)
            state = (state0, state1)
            opens += actions.count("open")
        assert clip == 30
        assert opens == 2

    def test_matches_reference_simulator_on_short_traces(self):
        rng = np.random.default_rng(0)
        for fps in (1, 2, 3):
            clip = clip_length(fps)
            for _ in range(50):
                triggers = [bool(rng.integers(0, 2)) for _ in range(12)]
                state = (False, 0)
                got = []
                for fired in triggers:
                    s0, s1, actions = recorder_transition(state[0], state[1], fired, clip)
                    state = (s0, s1)
                    got.append(actions)
                assert got == reference_trace(triggers, clip)


class TestRecorderSideEffects:
    def run_replay(self, tmp_path, triggers, fps, name="clips"):
        recorder = Recorder(tmp_path / name, fps=fps,
                            event_log_path=tmp_path / f"{name}.jsonl", deterministic=True)
        for i, fired in enumerate(triggers):
            recorder.step(i, frame(i % 255), [DET] if fired else [])
        recorder.close()
        return recorder

    def test_single_trigger_writes_full_clip(self, tmp_path):
        fps = 2
        triggers = [False, True] + [False] * 30
        recorder = self.run_replay(tmp_path, triggers, fps)
        assert len(recorder.completed) == 1
        event = recorder.completed[0]
        files = sorted(os.listdir(event.clip_dir))
        assert files == [f"frame-{i:06d}.ppm" for i in range(clip_length(fps))] + [
            "manifest.json", "trigger.ppm"
        ]
        manifest = json.loads((tmp_path / "clips" / "event-1" / "manifest.json").read_text())
        assert manifest["framesWritten"] == clip_length(fps) == 20
        assert manifest["state"] == "complete"

    def test_manifest_detections_revalidate(self, tmp_path):
        recorder = self.run_replay(tmp_path, [True] + [False] * 25, fps=1)
        manifest = json.loads(
            (tmp_path / "clips" / "event-1" / "manifest.json").read_text()
        )
        for record in manifest["detections"]:
            det = detection_from_record(record)
            assert 0 <= det.cx <= 1 and 0 < det.w <= 1

    def test_event_log_has_open_and_complete_lines(self, tmp_path):
        self.run_replay(tmp_path, [True] + [False] * 25, fps=1)
        records = read_event_log(tmp_path / "clips.jsonl")
        assert [r["state"] for r in records] == ["recording", "complete"]
        assert records[0]["eventId"] == records[1]["eventId"] == 1
        assert records[0]["time"] == 0  # deterministic mode: frame index

    def test_partial_clip_on_source_end(self, tmp_path):
        recorder = self.run_replay(tmp_path, [False, False, True], fps=1)
        assert len(recorder.completed) == 1
        assert recorder.completed[0].state == "partial"
        records = read_event_log(tmp_path / "clips.jsonl")
        assert records[-1]["state"] == "partial"

    def test_deterministic_replay_is_byte_identical(self, tmp_path):
        # Same source, same destination: the rerun must overwrite the log
        # and every clip file with identical bytes.
        triggers = [False, True] + [False] * 15 + [True] + [False] * 15
        self.run_replay(tmp_path, triggers, fps=1)
        first_log = (tmp_path / "clips.jsonl").read_bytes()
        first_clips = {
            f"{d}/{f}": (tmp_path / "clips" / d / f).read_bytes()
            for d in sorted(os.listdir(tmp_path / "clips"))
            for f in sorted(os.listdir(tmp_path / "clips" / d))
        }
        (tmp_path / "clips.jsonl").unlink()  # the log is append-only
        self.run_replay(tmp_path, triggers, fps=1)
        assert (tmp_path / "clips.jsonl").read_bytes() == first_log
        for key, blob in first_clips.items():
            assert (tmp_path / "clips" / key).read_bytes() == blob

    def test_unwritable_clip_dir_marks_failed_and_continues(self, tmp_path):
        blocked = tmp_path / "blocked"
        blocked.write_text("a file, not a directory")
        recorder = Recorder(blocked, fps=1, event_log_path=tmp_path / "log.jsonl")
        with pytest.warns(UserWarning, match="unwritable"):
            recorder.step(0, frame(), [DET])
        recorder.step(1, frame(), [])
        assert recorder.active is None and not recorder.recording
        records = read_event_log(tmp_path / "log.jsonl")
        assert records[0]["state"] == "failed"


class TestSources:
    def test_directory_replay_numeric_order(self, tmp_path):
        order = [3, 0, 11, 2]
        for n in order:
            write_ppm(tmp_path / f"f_{n}.ppm", frame(n))
        source = DirectorySource(tmp_path, fps=5)
        values = [int(f[0, 0, 0]) for f in source.frames()]
        assert values == sorted(order)

    def test_empty_directory(self, tmp_path):
        source = DirectorySource(tmp_path, fps=5)
        assert list(source.frames()) == []

    def test_malformed_frame_skipped(self, tmp_path):
        write_ppm(tmp_path / "f_0.ppm", frame(1))
        (tmp_path / "f_1.ppm").write_bytes(b"P6\n9 9\n255\nshort")
        write_ppm(tmp_path / "f_2.ppm", frame(3))
        source = DirectorySource(tmp_path, fps=5)
        with pytest.warns(UserWarning, match="malformed"):
            values = [int(f[0, 0, 0]) for f in source.frames()]
        assert values == [1, 3]

    def test_stream_source_reads_raw_rgb24(self):
        import io

        frames = [frame(10, size=4), frame(20, size=4)]
        blob = b"".join(f.tobytes() for f in frames) + b"abc"  # trailing partial
        source = StreamSource(io.BytesIO(blob), width=4, height=4, fps=2)
        with pytest.warns(UserWarning, match="mid-frame"):
            got = list(source.frames())
        assert len(got) == 2
        assert got[0][0, 0, 0] == 10 and got[1][0, 0, 0] == 20


class TestRunWatch:
    def test_empty_source_zero_everything(self, tmp_path):
        recorder = Recorder(tmp_path / "c", fps=1)
        summary = run_watch(DirectorySource(tmp_path, fps=1), lambda f: [], recorder)
        assert summary.frames == 0 and summary.events == 0

    def test_planted_trigger_yields_event(self, tmp_path):
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        for i in range(15):
            write_ppm(frames_dir / f"f_{i:03d}.ppm", frame(i))
        recorder = Recorder(tmp_path / "c", fps=1, deterministic=True)
        detect = lambda f: [DET] if int(f[0, 0, 0]) == 4 else []
        summary = run_watch(DirectorySource(frames_dir, fps=1), detect, recorder)
        assert summary.frames == 15
        assert summary.events == 1
        assert recorder.completed[0].trigger_frame == 4


class TestLatency:
    class FixedNet:
        def predict(self, x):
            return x * 2

    def test_single_repetition_degenerate_stats(self):
        stats = measure_latency(self.FixedNet(), frame(), repetitions=1,
                                preprocess=lambda im: im.astype(np.float32))
        assert stats["p95_ms"] == stats["mean_ms"] == stats["min_ms"] == stats["max_ms"]

    def test_repetitions_validated(self):
        with pytest.raises(ValueError):
            measure_latency(self.FixedNet(), frame(), repetitions=0)

    def test_percentile95(self):
        assert percentile95([5.0]) == 5.0
        assert percentile95(list(range(1, 101))) == 95.0

    def test_outputs_do_not_vary_across_runs(self):
        from conftest import toy_network

        net = toy_network(seed=3)
        x = np.random.default_rng(0).uniform(size=(1, 3, 16, 16)).astype(np.float32)
        assert np.array_equal(net.predict(x), net.predict(x))


def test_draw_boxes_burns_outline():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    out = draw_boxes(img, [Detection(0.5, 0.5, 0.5, 0.5, 0, 0.9)])
    assert out.max() == 255
    assert img.max() == 0  # original untouched
