"""Full joint network: shared encoding, recurrent disparity refinement, and
disparity-conditioned semantic decoding, trained end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ConsistencyError
from .semantic import DenseSkipDecoder, FeatureFusionAdapter, FUSION_STRATEGIES, DEEP_FUSION_INPUTS
from .stereo import (
    DisparityRefiner,
    DisparitySequence,
    JointEncoder,
    build_correlation_pyramid,
    build_correlation_volume,
    pad_candidate_axis,
    scaled_channels,
)


@dataclass
class ModelConfig:
    width_multiplier: float = 0.125
    class_count: int = 5
    gru_iters: int = 8
    corr_levels: int = 4
    corr_radius: int = 4
    fusion: str = "addition"
    deep_fusion_input: str = "fused"

    def validate(self):
        if self.gru_iters < 1:
            raise ConfigError(f"gru_iters must be >= 1, got {self.gru_iters}")
        if self.corr_levels < 1 or self.corr_radius < 0:
            raise ConfigError("corr_levels must be >= 1 and corr_radius >= 0")
        if self.fusion not in FUSION_STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {self.fusion!r}")
        if self.deep_fusion_input not in DEEP_FUSION_INPUTS:
            raise ConfigError(f"unknown deep_fusion_input {self.deep_fusion_input!r}")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        scaled_channels(32, self.width_multiplier)
        return self


@dataclass
class ModelOutput:
    disparities: DisparitySequence  # full-resolution maps, earliest first
    logits: torch.Tensor            # (B, C, H, W)


class S3MNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        w = config.width_multiplier
        self.encoder = JointEncoder(w)
        feat_ch = self.encoder.head5[0].out_channels
        self.refiner = DisparityRefiner(
            feat_ch, w, corr_levels=config.corr_levels, corr_radius=config.corr_radius
        )
        self.ffa = FeatureFusionAdapter(
            w, strategy=config.fusion, deep_fusion_input=config.deep_fusion_input
        )
        self.decoder = DenseSkipDecoder(w, class_count=config.class_count)

    def forward(self, left, right, iters=None) -> ModelOutput:
        if left.shape != right.shape:
            raise ConsistencyError(
                f"left/right shapes differ: {tuple(left.shape)} vs {tuple(right.shape)}"
            )
        iters = self.config.gru_iters if iters is None else iters
        # One batched pass through the shared encoder (InstanceNorm is
        # per-sample, so this matches two separate calls).
        both = self.encoder(torch.cat([left, right], dim=0))
        b = left.shape[0]
        pyr_left = type(both)([lvl[:b] for lvl in both.levels], both.width_multiplier)
        pyr_right = type(both)([lvl[b:] for lvl in both.levels], both.width_multiplier)
        volume = build_correlation_volume(
            pyr_left.correlation_features, pyr_right.correlation_features
        )
        volume = pad_candidate_axis(volume, 2 ** (self.config.corr_levels - 1))
        pyramid = build_correlation_pyramid(volume, self.config.corr_levels)
        sequence = self.refiner(pyr_left.correlation_features, pyramid, iters)
        fused = self.ffa(pyr_left, sequence.final.unsqueeze(1))
        logits = self.decoder(fused)
        return ModelOutput(disparities=sequence, logits=logits)

    def parameter_groups(self):
        """Named parameter groups used by gradient-flow checks."""
        return {
            "encoder": list(self.encoder.parameters()),
            "gru": list(self.refiner.parameters()),
            "ffa": [p for name, p in self.ffa.named_parameters() if not name.startswith("disparity_encoder")],
            "disparity_encoder": list(self.ffa.disparity_encoder.parameters()),
            "decoder": list(self.decoder.parameters()),
        }


def pad_to_multiple(images, multiple=32):
    """Replicate-pad (B, C, H, W) symmetrically; returns padded and the pad box."""
    h, w = images.shape[2], images.shape[3]
    ph, pw = (-h) % multiple, (-w) % multiple
    top, left = ph // 2, pw // 2
    box = (left, pw - left, top, ph - top)
    if ph == 0 and pw == 0:
        return images, box
    return F.pad(images, box, mode="replicate"), box


def unpad(tensor, box):
    """Crop a (B, ..., H, W) tensor back through its pad box."""
    left, right, top, bottom = box
    h, w = tensor.shape[-2], tensor.shape[-1]
    return tensor[..., top:h - bottom if bottom else h, left:w - right if right else w]
