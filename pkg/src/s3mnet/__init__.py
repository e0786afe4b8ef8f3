"""Joint semantic segmentation and stereo matching, desk scale."""

from .config import FullConfig, TrainConfig, load_config
from .dataio import (
    IGNORE_LABEL,
    Manifest,
    StereoSample,
    decode_disparity_16bit,
    encode_disparity_16bit,
    load_manifest,
    load_sample,
    save_sample,
)
from .losses import (
    LossConfig,
    inter_class_volume,
    normalize_volume,
    one_hot_volume,
    scg_segmentation_loss,
    scg_stereo_loss,
    scg_weight_map,
    total_loss,
)
from .metrics import (
    MetricsReport,
    confusion_matrix,
    segmentation_metrics,
    stereo_metrics,
)
from .model import ModelConfig, S3MNet
from .synthgen import DatasetConfig, SceneConfig, generate_dataset, generate_scene

__all__ = [
    "FullConfig",
    "TrainConfig",
    "load_config",
    "IGNORE_LABEL",
    "Manifest",
    "StereoSample",
    "decode_disparity_16bit",
    "encode_disparity_16bit",
    "load_manifest",
    "load_sample",
    "save_sample",
    "LossConfig",
    "inter_class_volume",
    "normalize_volume",
    "one_hot_volume",
    "scg_segmentation_loss",
    "scg_stereo_loss",
    "scg_weight_map",
    "total_loss",
    "MetricsReport",
    "confusion_matrix",
    "segmentation_metrics",
    "stereo_metrics",
    "ModelConfig",
    "S3MNet",
    "DatasetConfig",
    "SceneConfig",
    "generate_dataset",
    "generate_scene",
]
