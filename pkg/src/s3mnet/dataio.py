"""On-disk sample format: 8-bit RGB stereo pairs, 16-bit disparity, 8-bit labels.

A sample directory holds `left.png`, `right.png`, `disp.png` (16-bit single
channel, value = disparity * 256, 0 = invalid), `labels.png` (8-bit class IDs)
and optionally `occl.png` (nonzero = occluded in the right view). The dataset
root carries one `manifest.json` naming class_count, class names, the
disparity bound and split membership.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConsistencyError, DataError, DimensionError, LabelError, RangeError

IGNORE_LABEL = 255
DISPARITY_SCALE = 256.0

MANIFEST_NAME = "manifest.json"
LEFT_NAME = "left.png"
RIGHT_NAME = "right.png"
DISPARITY_NAME = "disp.png"
LABELS_NAME = "labels.png"
OCCLUSION_NAME = "occl.png"


@dataclass
class StereoSample:
    """One rectified stereo pair with dense or sparse ground truth."""

    left: np.ndarray            # (H, W, 3) float32 in [0, 1]
    right: np.ndarray           # (H, W, 3) float32 in [0, 1]
    disparity_gt: np.ndarray    # (H, W) float32, pixels, >= 0
    disparity_valid: np.ndarray  # (H, W) bool
    labels_gt: np.ndarray       # (H, W) int64 in {0..C-1} or IGNORE_LABEL
    class_count: int
    meta: dict = field(default_factory=dict)

    @property
    def height(self):
        return self.left.shape[0]

    @property
    def width(self):
        return self.left.shape[1]

    def validate(self, max_disparity=None):
        """Check the rectified-pair and label invariants, raising on violation."""
        if self.left.shape != self.right.shape:
            raise ConsistencyError(
                f"left/right shape mismatch: {self.left.shape} vs {self.right.shape}"
            )
        hw = self.left.shape[:2]
        for name, arr in (
            ("disparity_gt", self.disparity_gt),
            ("disparity_valid", self.disparity_valid),
            ("labels_gt", self.labels_gt),
        ):
            if arr.shape != hw:
                raise ConsistencyError(f"{name} shape {arr.shape} != image shape {hw}")
        if self.class_count < 2:
            raise LabelError(f"class_count must be >= 2, got {self.class_count}")
        labels = self.labels_gt
        bad = (labels != IGNORE_LABEL) & ((labels < 0) | (labels >= self.class_count))
        if bad.any():
            offending = np.unique(labels[bad])
            raise LabelError(
                f"labels outside [0, {self.class_count}) and != {IGNORE_LABEL}: {offending.tolist()}"
            )
        valid_disp = self.disparity_gt[self.disparity_valid]
        if valid_disp.size and not np.isfinite(valid_disp).all():
            raise ConsistencyError("non-finite disparities marked valid")
        if valid_disp.size and valid_disp.min() < 0:
            raise ConsistencyError("negative disparities marked valid")
        if max_disparity is not None and valid_disp.size and valid_disp.max() > max_disparity:
            raise ConsistencyError(
                f"valid disparity {valid_disp.max():.3f} exceeds max_disparity {max_disparity}"
            )
        return self


@dataclass
class Manifest:
    """Dataset-level metadata stored as manifest.json at the dataset root."""

    class_count: int
    class_names: list[str]
    max_disparity: float
    splits: dict[str, list[str]]
    samples: dict[str, dict] = field(default_factory=dict)
    version: int = 1

    def to_json(self):
        return json.dumps(
            {
                "version": self.version,
                "class_count": self.class_count,
                "class_names": self.class_names,
                "max_disparity": self.max_disparity,
                "splits": self.splits,
                "samples": self.samples,
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text):
        data = json.loads(text)
        return Manifest(
            class_count=int(data["class_count"]),
            class_names=list(data["class_names"]),
            max_disparity=float(data["max_disparity"]),
            splits={k: list(v) for k, v in data["splits"].items()},
            samples=dict(data.get("samples", {})),
            version=int(data.get("version", 1)),
        )


def encode_disparity_16bit(disparity, valid):
    """Quantize a disparity map to the interchange uint16 format.

    Valid pixels map to round(d * 256) clamped into [1, 65535] so even
    near-zero valid disparities stay distinguishable from the 0 = invalid
    sentinel. Disparities must be finite, non-negative and < 256.
    """
    disparity = np.asarray(disparity)
    valid = np.asarray(valid, dtype=bool)
    if disparity.shape != valid.shape:
        raise DimensionError(
            f"disparity shape {disparity.shape} != valid shape {valid.shape}"
        )
    chosen = disparity[valid]
    if chosen.size:
        if not np.isfinite(chosen).all():
            raise RangeError("valid disparities must be finite")
        if chosen.min() < 0:
            raise RangeError("valid disparities must be >= 0")
        if chosen.max() >= 256.0:
            raise RangeError(
                f"disparity {chosen.max():.3f} not representable (must be < 256)"
            )
    raw = np.round(disparity * DISPARITY_SCALE)
    raw = np.clip(raw, 1, 65535).astype(np.uint16)
    raw[~valid] = 0
    return raw


def decode_disparity_16bit(raw):
    """Inverse of :func:`encode_disparity_16bit`: 0 means invalid."""
    raw = np.asarray(raw)
    valid = raw > 0
    disparity = raw.astype(np.float32) / DISPARITY_SCALE
    disparity[~valid] = 0.0
    return disparity, valid


def _read_image(path):
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    return np.asarray(Image.open(path))


def load_manifest(root):
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"missing manifest: {path}")
    return Manifest.from_json(path.read_text())


def save_manifest(root, manifest):
    path = Path(root) / MANIFEST_NAME
    path.write_text(manifest.to_json())
    return path


def load_sample(root, sample_id, manifest=None):
    """Load and validate one sample directory against the dataset manifest."""
    root = Path(root)
    if manifest is None:
        manifest = load_manifest(root)
    sdir = root / str(sample_id)
    left = _read_image(sdir / LEFT_NAME)
    right = _read_image(sdir / RIGHT_NAME)
    raw_disp = _read_image(sdir / DISPARITY_NAME)
    labels = _read_image(sdir / LABELS_NAME)
    if left.ndim != 3 or left.shape[2] != 3 or right.ndim != 3 or right.shape[2] != 3:
        raise ConsistencyError(f"images in {sdir} are not 3-channel RGB")
    if raw_disp.ndim != 2 or labels.ndim != 2:
        raise ConsistencyError(f"disparity/labels in {sdir} are not single channel")
    disparity, valid = decode_disparity_16bit(raw_disp.astype(np.uint16))
    meta = {}
    occl_path = sdir / OCCLUSION_NAME
    if occl_path.is_file():
        meta["occlusion"] = np.asarray(Image.open(occl_path)) > 0
    sample = StereoSample(
        left=left.astype(np.float32) / 255.0,
        right=right.astype(np.float32) / 255.0,
        disparity_gt=disparity,
        disparity_valid=valid,
        labels_gt=labels.astype(np.int64),
        class_count=manifest.class_count,
        meta=meta,
    )
    return sample.validate(max_disparity=manifest.max_disparity)


def save_sample(root, sample_id, sample, occlusion=None):
    """Write one sample directory in the on-disk layout."""
    sdir = Path(root) / str(sample_id)
    sdir.mkdir(parents=True, exist_ok=True)
    for name, img in ((LEFT_NAME, sample.left), (RIGHT_NAME, sample.right)):
        u8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(u8).save(sdir / name)
    raw = encode_disparity_16bit(sample.disparity_gt, sample.disparity_valid)
    Image.fromarray(raw).save(sdir / DISPARITY_NAME)
    Image.fromarray(sample.labels_gt.astype(np.uint8)).save(sdir / LABELS_NAME)
    if occlusion is None:
        occlusion = sample.meta.get("occlusion")
    if occlusion is not None:
        Image.fromarray((occlusion > 0).astype(np.uint8) * 255).save(sdir / OCCLUSION_NAME)
    return sdir
