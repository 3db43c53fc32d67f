"""Run configuration: training hyperparameters, paths and thresholds.

The config file format is flat `key = value` text with `#` comments.
Every key has a matching command-line flag, and the flag wins.
"""

from dataclasses import dataclass, field, fields, replace


@dataclass(frozen=True)
class TrainConfig:
    momentum: float = 0.9
    iterations: int = 10_000
    batch_size: int = 32
    subdivision: int = 16
    learning_rate: float = 0.001
    decay: float = 0.0005
    exposure: float = 1.5
    saturation: float = 1.5
    hue: float = 0.1
    channels: int = 3
    checkpoint_every: int = 1000
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5
    augment: bool = True
    # The sqrt-size loss term has unbounded gradient as predicted sizes
    # approach zero; clipping each layer's averaged batch gradient to this
    # L2 norm keeps SGD stable. 0 disables.
    grad_clip: float = 10.0

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1 or self.subdivision < 1:
            raise ConfigError("batch_size and subdivision must be positive")
        if self.batch_size % self.subdivision != 0:
            raise ConfigError(
                f"batch_size {self.batch_size} not divisible by subdivision {self.subdivision}"
            )
        for name in ("momentum", "learning_rate", "decay", "exposure", "saturation",
                     "lambda_coord", "lambda_noobj"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if not 0.0 <= self.hue <= 0.5:
            raise ConfigError(f"hue {self.hue} outside [0, 0.5]")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be >= 0 (0 disables clipping)")
        if self.iterations < 0 or self.checkpoint_every < 1 or self.channels != 3:
            raise ConfigError("iterations >= 0, checkpoint_every >= 1, channels == 3 required")
        return self

    @property
    def slice_size(self) -> int:
        return self.batch_size // self.subdivision


# The prose variant of the training setup (batch 64, subdivision 8); kept as
# a named preset, not the default.
ALTERNATE_TRAIN_PRESET = TrainConfig(batch_size=64, subdivision=8)


@dataclass(frozen=True)
class RunConfig:
    model: str = "default"
    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: str = "data"
    checkpoint: str = "checkpoints/model.twnet"
    clip_dir: str = "clips"
    event_log: str = "events.jsonl"
    out_dir: str = "out"
    conf_threshold: float = 0.25
    nms_iou: float = 0.45
    eval_iou: float = 0.5
    center_tolerance: float = 20.0
    seed: int = 0
    deterministic: bool = False

    def validate(self) -> "RunConfig":
        if self.model not in ("default", "improved"):
            raise ConfigError(f"model must be default or improved, got {self.model!r}")
        for name in ("conf_threshold", "nms_iou", "eval_iou"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.5:
                raise ConfigError(f"{name} {value} out of range")
        if self.center_tolerance < 0:
            raise ConfigError("center_tolerance must be >= 0")
        self.train.validate()
        return self


class ConfigError(ValueError):
    pass


def _type_name(tp) -> str:
    return tp if isinstance(tp, str) else tp.__name__


_TRAIN_KEYS = {f.name: _type_name(f.type) for f in fields(TrainConfig)}
_RUN_KEYS = {f.name: _type_name(f.type) for f in fields(RunConfig) if f.name != "train"}


def _coerce(key: str, value: str, type_name: str):
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        if type_name == "bool":
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return value
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {value!r} as {type_name}") from None


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    train_updates = {}
    run_updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _TRAIN_KEYS:
            train_updates[key] = _coerce(key, value, _TRAIN_KEYS[key])
        elif key in _RUN_KEYS:
            run_updates[key] = _coerce(key, value, _RUN_KEYS[key])
        else:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    if train_updates:
        cfg = replace(cfg, train=replace(cfg.train, **train_updates))
    if run_updates:
        cfg = replace(cfg, **run_updates)
    return cfg


def load_config_file(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), base)
