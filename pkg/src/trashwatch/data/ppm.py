"""Binary PPM (P6) codec, the project's bit-exact image carrier.

Images are numpy arrays of shape (height, width, 3), dtype uint8, RGB.
Only maxval 255 is supported. Header comments (# to end of line) are
accepted anywhere whitespace may appear between tokens.
"""

import numpy as np


class PpmError(ValueError):
    pass


def _next_token(data: bytes, pos: int):
    """Skip whitespace and comments, return (token, new_pos)."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PpmError("truncated header: expected a token")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise PpmError(f"wrong magic {data[:2]!r}, expected P6")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            value = int(token)
        except ValueError:
            raise PpmError(f"malformed {name} {token!r}") from None
        if value <= 0:
            raise PpmError(f"{name} must be positive, got {value}")
        fields.append(value)
    width, height, maxval = fields
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval}, only 255")
    # Exactly one whitespace byte separates the header from pixel data.
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PpmError("missing whitespace after maxval")
    pos += 1
    need = width * height * 3
    pixels = data[pos : pos + need]
    if len(pixels) != need:
        raise PpmError(f"truncated pixel data: have {len(pixels)} bytes, need {need}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise PpmError(f"image must be (h, w, 3) uint8, got {image.shape} {image.dtype}")
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image).tobytes()


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_ppm(path, image: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image))
