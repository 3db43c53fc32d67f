from .annotations import (
    CLASS_NAMES,
    Annotation,
    AnnotationError,
    Dataset,
    load_class_names,
    load_dataset,
    parse_annotation,
    parse_annotation_text,
    serialize_annotation,
)
from .augment import augment_hsv, resize_bilinear
from .frames import frame_number, ingest_frame_sequence
from .ppm import PpmError, decode_ppm, encode_ppm, read_ppm, write_ppm
from .synthetic import (
    CLASS_COLORS,
    SHAPE_KINDS,
    SceneSpec,
    generate_scene,
    write_synthetic_dataset,
)
