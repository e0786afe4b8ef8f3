"""Flat key-value experiment configs with section prefixes.

The on-disk format is diff-friendly text, one `section.key = value` per line,
`#` comments. Sections: `scene.*` and `dataset.*` drive generation, `train.*`
the optimizer/model recipe, `loss.*` the joint loss. Unknown keys are
rejected so stale configs fail loudly.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import LossConfig
from .synthgen import DatasetConfig, SceneConfig

DETERMINISM_ENV_VAR = "S3M_DETERMINISTIC"


@dataclass
class TrainConfig:
    width_multiplier: float = 0.125
    iterations: int = 5000
    learning_rate: float = 2e-4
    epsilon: float = 1e-8
    weight_decay: float = 1e-5
    batch_size: int = 1
    crop_height: int = 64
    crop_width: int = 128
    max_disparity: int = 64
    gru_iters: int = 8
    corr_levels: int = 4
    corr_radius: int = 4
    fusion: str = "addition"
    deep_fusion_input: str = "fused"
    seed: int = 0
    deterministic: bool = True
    threads: int = 1  # 0 leaves torch's default; 1 is fastest at desk scale
    jitter: bool = True
    grad_clip: float = 1.0
    warmdown: bool = False
    log_every: int = 1
    checkpoint_every: int = 1000
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if self.crop_height % 32 or self.crop_width % 32:
            raise ConfigError(
                f"crop dims must be divisible by 32, got {self.crop_height}x{self.crop_width}"
            )
        # batch-norm statistics at the stride-32 level need > 1 value per channel
        if self.batch_size * (self.crop_height // 32) * (self.crop_width // 32) < 2:
            raise ConfigError(
                "crop/batch too small: batch_size * (crop_height/32) * (crop_width/32) must be >= 2"
            )
        if self.max_disparity > self.crop_width:
            raise ConfigError(
                f"max_disparity {self.max_disparity} exceeds crop_width {self.crop_width}"
            )
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        self.loss.validate()
        return self


@dataclass
class DatasetSettings:
    n_samples: int = 8
    val_fraction: float = 0.0


@dataclass
class FullConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    train: TrainConfig = field(default_factory=TrainConfig)

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(
            scene=self.scene,
            n_samples=self.dataset.n_samples,
            val_fraction=self.dataset.val_fraction,
        )


_SPECIAL_SCENE_KEYS = ("disparity_min", "disparity_max")


def _section_objects(config: FullConfig):
    return {
        "scene": config.scene,
        "dataset": config.dataset,
        "train": config.train,
        "loss": config.train.loss,
    }


def _convert(raw, target_type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if target_type is int:
        value = float(raw)
        if value != int(value):
            raise ConfigError(f"expected integer, got {raw!r}")
        return int(value)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw.strip()
    raise ConfigError(f"unsupported config field type {target_type}")


def parse_config_text(text):
    """Parse `key = value` lines into an ordered mapping."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def apply_mapping(config: FullConfig, mapping):
    """Set `section.key` entries on a FullConfig, rejecting unknown keys."""
    sections = _section_objects(config)
    for key, raw in mapping.items():
        if "." not in key:
            raise ConfigError(f"config key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        if section not in sections:
            raise ConfigError(f"unknown config section {section!r}")
        obj = sections[section]
        if section == "scene" and name in _SPECIAL_SCENE_KEYS:
            d_min, d_max = obj.disparity_range
            value = _convert(raw, float)
            obj.disparity_range = (
                (value, d_max) if name == "disparity_min" else (d_min, value)
            )
            continue
        hints = typing.get_type_hints(type(obj))
        known = {f.name: hints[f.name] for f in dataclasses.fields(obj)}
        known.pop("loss", None)
        known.pop("disparity_range", None)
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(obj, name, _convert(raw, known[name]))
    return config


def load_config(path=None, overrides=()):
    """Build a FullConfig from an optional file plus key=value overrides."""
    config = FullConfig()
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            apply_mapping(config, parse_config_text(fh.read()))
    pairs = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    apply_mapping(config, pairs)
    if os.environ.get(DETERMINISM_ENV_VAR) == "1":
        config.train.deterministic = True
    return config


def config_to_text(config: FullConfig):
    """Serialize in the canonical section order; inverse of parse+apply."""
    lines = []
    for section, obj in _section_objects(config).items():
        for f in dataclasses.fields(obj):
            if f.name == "loss":
                continue
            value = getattr(obj, f.name)
            if f.name == "disparity_range":
                lines.append(f"scene.disparity_min = {value[0]}")
                lines.append(f"scene.disparity_max = {value[1]}")
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"
