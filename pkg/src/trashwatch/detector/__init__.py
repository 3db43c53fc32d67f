from .boxes import BBox, Detection, center_offset, corners_to_center, iou, iou_xywh, nms
from .grid import GridTarget, decode, encode_boxes_as_head, encode_targets, split_head
from .loss import (
    ZERO_LOSS,
    LossBreakdown,
    LossWeights,
    detection_loss,
    loss_gradient,
    loss_with_gradient,
)
