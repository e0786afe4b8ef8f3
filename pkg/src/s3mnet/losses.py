"""Semantic consistency-guided joint loss.

A one-hot class volume is average-pooled per channel, squashed through
exp(-(2v-1)^2) and max-reduced over channels, giving a per-pixel weight in
[e^-1, 1] that peaks on class boundaries. Both task losses are reweighted by
(1-alpha) + alpha*W; the stereo loss additionally decays earlier refinement
iterations by gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .dataio import IGNORE_LABEL
from .errors import ConfigError, LabelError, UndefinedLossError


@dataclass
class LossConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    pool_kernel: int = 3
    ignore_label: int = IGNORE_LABEL

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.pool_kernel % 2 == 0 or self.pool_kernel < 1:
            raise ConfigError(f"pool_kernel must be odd, got {self.pool_kernel}")
        return self


def one_hot_volume(labels, class_count, ignore_label=IGNORE_LABEL, dtype=torch.float64):
    """(B, H, W) class IDs -> (B, C, H, W) indicator volume; ignore -> all zero."""
    if labels.dim() != 3:
        raise LabelError(f"labels must be (B, H, W), got {tuple(labels.shape)}")
    bad = (labels != ignore_label) & ((labels < 0) | (labels >= class_count))
    if bad.any():
        raise LabelError(
            f"labels outside [0, {class_count}) and != {ignore_label}"
        )
    keep = labels != ignore_label
    clamped = torch.where(keep, labels, torch.zeros_like(labels))
    volume = F.one_hot(clamped.long(), class_count).to(dtype)
    volume = volume * keep.unsqueeze(-1).to(dtype)
    return volume.permute(0, 3, 1, 2).contiguous()


def inter_class_volume(volume, pool_kernel):
    """Per-channel k x k mean with stride 1 and reflect padding."""
    if pool_kernel % 2 == 0 or pool_kernel < 1:
        raise ConfigError(f"pool_kernel must be odd, got {pool_kernel}")
    if pool_kernel == 1:
        return volume
    pad = pool_kernel // 2
    padded = F.pad(volume, (pad, pad, pad, pad), mode="reflect")
    return F.avg_pool2d(padded, kernel_size=pool_kernel, stride=1)


def normalize_volume(volume):
    """exp(-(2v - 1)^2), mapping 0 and 1 to e^-1 and 0.5 to 1."""
    return torch.exp(-((2.0 * volume - 1.0) ** 2))


def scg_weight_map(labels, class_count, pool_kernel, ignore_label=IGNORE_LABEL):
    """Per-pixel boundary weight: channel max of the normalized pooled volume.

    Computed in float64 regardless of downstream dtype; callers cast.
    """
    v3d = one_hot_volume(labels, class_count, ignore_label, dtype=torch.float64)
    v_int = inter_class_volume(v3d, pool_kernel)
    v_norm = normalize_volume(v_int)
    return v_norm.max(dim=1).values


def _pixel_weight(weight_map, alpha, dtype):
    return (1.0 - alpha) + alpha * weight_map.to(dtype)


def scg_segmentation_loss(logits, labels, weight_map, alpha=0.1, ignore_label=IGNORE_LABEL):
    """Weighted cross entropy, averaged over non-ignored pixels.

    logits (B, C, H, W), labels (B, H, W), weight_map (B, H, W).
    """
    keep = labels != ignore_label
    if not keep.any():
        raise UndefinedLossError("all pixels carry the ignore label")
    log_probs = F.log_softmax(logits, dim=1)
    clamped = torch.where(keep, labels, torch.zeros_like(labels))
    picked = log_probs.gather(1, clamped.long().unsqueeze(1)).squeeze(1)
    w = _pixel_weight(weight_map, alpha, logits.dtype)
    per_pixel = -(w * picked)
    return per_pixel[keep].mean()


def scg_stereo_loss(disparities, disparity_gt, valid, weight_map, alpha=0.1, gamma=0.9):
    """Exponentially decayed weighted L1 over the refinement sequence.

    disparities: iterable of (B, H, W) maps, earliest first; the i-th map is
    scaled by gamma^(n_iters - i) and each map contributes the mean weighted
    absolute error over valid pixels.
    """
    maps = list(disparities)
    if not maps:
        raise UndefinedLossError("empty disparity sequence")
    if not valid.any():
        raise UndefinedLossError("empty valid mask")
    n = len(maps)
    dtype = maps[0].dtype
    w = _pixel_weight(weight_map, alpha, dtype)
    gt = disparity_gt.to(dtype)
    total = maps[0].new_zeros(())
    for i, est in enumerate(maps, start=1):
        err = (w * (gt - est).abs())[valid].mean()
        total = total + (gamma ** (n - i)) * err
    return total


def total_loss(l_ss, l_sm):
    """Unit-weighted sum of the two task losses."""
    return l_ss + l_sm
