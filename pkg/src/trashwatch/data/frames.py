"""Frame-sequence ingestion: a directory of numbered frames becomes
annotation stubs ready for labeling."""

import os
import re
import warnings

from .annotations import Annotation

_NUM_RE = re.compile(r"(\d+)")


def frame_number(name: str):
    """Last run of digits in the stem, or None."""
    stem = os.path.splitext(name)[0]
    matches = _NUM_RE.findall(stem)
    return int(matches[-1]) if matches else None


def ingest_frame_sequence(directory, every_k: int = 1, extensions=(".ppm",)):
    """List numbered frames in ascending numeric order, keeping every k-th.

    Returns annotation stubs with empty box lists. Gaps in the numbering
    only warn; the present frames are used.
    """
    if every_k < 1:
        raise ValueError(f"every_k must be >= 1, got {every_k}")
    entries = []
    for name in os.listdir(directory):
        if os.path.splitext(name)[1].lower() not in extensions:
            continue
        num = frame_number(name)
        if num is None:
            continue
        entries.append((num, name))
    entries.sort()
    numbers = [num for num, _ in entries]
    if numbers and numbers != list(range(numbers[0], numbers[0] + len(numbers))):
        warnings.warn(f"{directory}: frame numbering is not contiguous", stacklevel=2)
    return [
        Annotation(image_path=os.path.join(str(directory), name), boxes=[])
        for num, name in entries[::every_k]
    ]
