"""Dense tensor support for the network core.

Tensors are plain numpy ndarrays in row-major order. Production code runs
in single precision; double precision exists only so that finite-difference
gradient checks can reach tight tolerances.
"""

import numpy as np

# Production dtype. Gradient-check builds pass CHECK_DTYPE explicitly.
DTYPE = np.float32
CHECK_DTYPE = np.float64

Tensor = np.ndarray


def as_tensor(data, dtype=DTYPE) -> Tensor:
    """Build a contiguous tensor of the requested precision."""
    return np.ascontiguousarray(np.asarray(data, dtype=dtype))


def zeros(shape, dtype=DTYPE) -> Tensor:
    return np.zeros(shape, dtype=dtype)


def assert_finite(t: Tensor, what: str = "tensor") -> Tensor:
    """Reject NaN/Inf values; layer outputs must stay finite on finite inputs."""
    if not np.all(np.isfinite(t)):
        raise FloatingPointError(f"{what} contains non-finite values")
    return t
