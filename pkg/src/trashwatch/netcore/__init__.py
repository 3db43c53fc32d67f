from .tensor import CHECK_DTYPE, DTYPE, Tensor, as_tensor, assert_finite, zeros
from .layers import (
    ACTIVATIONS,
    Activation,
    Conv2d,
    DetectionHead,
    Layer,
    MaxPool2d,
    ShapeError,
    activate,
    activate_backward,
    conv2d_backward,
    conv2d_forward,
    conv_out_size,
    maxpool2d_backward,
    maxpool2d_forward,
    sigmoid,
)
from .network import (
    BOXES_PER_CELL,
    GRID_SIZE,
    INPUT_SIZE,
    MODEL_CONFIGS,
    NUM_CLASSES,
    Network,
    build_network,
)
from .optim import AccumulationError, SubdivisionAccumulator, sgd_step
from .checkpoint import (
    BadMagicError,
    CheckpointError,
    ShapeMismatchError,
    TruncatedError,
    load_checkpoint,
    save_checkpoint,
)
