"""trashwatch: a grid-cell object detector trained from scratch, with the
evaluation metrics and the event-recording watch pipeline around it."""

__version__ = "0.1.0"

from .config import ALTERNATE_TRAIN_PRESET, ConfigError, RunConfig, TrainConfig
