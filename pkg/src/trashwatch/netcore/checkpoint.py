"""Bit-exact checkpoint persistence.

File layout (all little-endian, no alignment padding):

    magic  7 bytes  b"TWNET1\\0"
    u32    weighted layer count
    u64    iteration counter
    per weighted layer:
        u32 rank, u32 dims[rank]      weight tensor shape
        f32 weights[prod(dims)]
        f32 biases[dims[0]]
        f32 weight momentum[prod(dims)]
        f32 bias momentum[dims[0]]
"""

import struct

import numpy as np

MAGIC = b"TWNET1\0"


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


def save_checkpoint(net, iteration: int, path) -> None:
    layers = net.weighted_layers()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", len(layers), iteration))
        for layer in layers:
            dims = layer.weights.shape
            f.write(struct.pack("<I", len(dims)))
            f.write(struct.pack(f"<{len(dims)}I", *dims))
            for arr in (layer.weights, layer.bias, layer.mom_w, layer.mom_b):
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(f, size: int, what: str) -> bytes:
    buf = f.read(size)
    if len(buf) != size:
        raise TruncatedError(f"truncated checkpoint: EOF while reading {what}")
    return buf


def load_checkpoint(path, net) -> int:
    """Fill `net`'s weights and momentum from `path`; returns the iteration.

    The checkpoint must match the network architecture layer by layer.
    """
    layers = net.weighted_layers()
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, not a checkpoint file")
        count, iteration = struct.unpack("<IQ", _read_exact(f, 12, "header"))
        if count != len(layers):
            raise ShapeMismatchError(
                f"checkpoint has {count} weighted layers, network has {len(layers)}"
            )
        for i, layer in enumerate(layers):
            (rank,) = struct.unpack("<I", _read_exact(f, 4, f"layer {i} rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, f"layer {i} dims"))
            if dims != layer.weights.shape:
                raise ShapeMismatchError(
                    f"layer {i}: checkpoint weights {dims} != network {layer.weights.shape}"
                )
            for arr, what in (
                (layer.weights, "weights"),
                (layer.bias, "biases"),
                (layer.mom_w, "weight momentum"),
                (layer.mom_b, "bias momentum"),
            ):
                raw = _read_exact(f, 4 * arr.size, f"layer {i} {what}")
                arr[:] = np.frombuffer(raw, dtype="<f4").reshape(arr.shape)
        extra = f.read(1)
        if extra:
            raise ShapeMismatchError("trailing bytes after final layer")
    return iteration
