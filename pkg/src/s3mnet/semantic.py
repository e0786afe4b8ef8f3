"""Semantic branch: remapping of shared features into semantic space, a
residual encoder over the final disparity map, per-level fusion of the two,
and a densely-connected skip decoder emitting per-pixel class logits.

The fused pyramid contract is strides {2, 4, 8, 16, 32} with channels
w * {64, 256, 512, 1024, 2048}. Shallow fused levels come from remapped
shared levels 1/3/5; the two deep levels re-encode the previous fused level
(fused again with the matching disparity features) through a stride-2
residual block.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DimensionError
from .stereo import PYRAMID_BASE_CHANNELS, FeaturePyramid, scaled_channels

FUSED_STRIDES = (2, 4, 8, 16, 32)
FUSED_BASE_CHANNELS = (64, 256, 512, 1024, 2048)
SHALLOW_SOURCE_LEVELS = (0, 2, 4)  # shared levels 1, 3, 5
FUSION_STRATEGIES = ("addition", "concatenation")
DEEP_FUSION_INPUTS = ("fused", "adapted")


@dataclass
class FusedPyramid:
    levels: list  # (B, C_i, H/s_i, W/s_i)
    width_multiplier: float = 1.0

    def validate(self, height=None, width=None):
        if len(self.levels) != len(FUSED_STRIDES):
            raise DimensionError(f"expected {len(FUSED_STRIDES)} levels, got {len(self.levels)}")
        for i, (lvl, stride, base) in enumerate(zip(self.levels, FUSED_STRIDES, FUSED_BASE_CHANNELS)):
            want = scaled_channels(base, self.width_multiplier)
            if lvl.shape[1] != want:
                raise DimensionError(f"fused level {i + 1} has {lvl.shape[1]} channels, expected {want}")
            if height is not None and (lvl.shape[2] != height // stride or lvl.shape[3] != width // stride):
                raise DimensionError(
                    f"fused level {i + 1} spatial {tuple(lvl.shape[2:])} != stride-{stride} grid"
                )
        return self


def conv_bn_relu(in_ch, out_ch, kernel=3, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class BasicResBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride), nn.BatchNorm2d(out_ch)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.relu(y + self.shortcut(x))


class RemapBlock(nn.Module):
    """Shared-to-semantic remapping: 3x3 conv, stride 2, pad 1, BN, ReLU."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.op = conv_bn_relu(in_ch, out_ch, kernel=3, stride=2)

    def forward(self, x):
        return self.op(x)


class FusionBlock(nn.Module):
    """Elementwise sum, or channel concat projected back to the first operand."""

    def __init__(self, a_ch, b_ch, strategy):
        super().__init__()
        if strategy not in FUSION_STRATEGIES:
            raise ConfigError(f"unknown fusion strategy {strategy!r}")
        self.strategy = strategy
        self.a_ch = a_ch
        if strategy == "concatenation":
            self.project = nn.Conv2d(a_ch + b_ch, a_ch, 1)
        elif a_ch != b_ch:
            raise DimensionError(f"addition fusion needs equal channels, got {a_ch} vs {b_ch}")

    def forward(self, a, b):
        if a.shape[1] != self.a_ch:
            raise DimensionError(f"first operand has {a.shape[1]} channels, expected {self.a_ch}")
        if self.strategy == "addition":
            if a.shape != b.shape:
                raise DimensionError(
                    f"addition fusion needs equal shapes, got {tuple(a.shape)} vs {tuple(b.shape)}"
                )
            return a + b
        return self.project(torch.cat([a, b], dim=1))


class DisparityEncoder(nn.Module):
    """Residual encoder over the final disparity map, one tap per fused level."""

    def __init__(self, width_multiplier=1.0, blocks_per_stage=2):
        super().__init__()
        chans = [scaled_channels(b, width_multiplier) for b in FUSED_BASE_CHANNELS]
        self.stem = conv_bn_relu(1, chans[0], kernel=3, stride=2)
        stages = []
        for in_ch, out_ch in zip(chans[:-1], chans[1:]):
            blocks = [BasicResBlock(in_ch, out_ch, stride=2)]
            blocks += [BasicResBlock(out_ch, out_ch) for _ in range(blocks_per_stage - 1)]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)

    def forward(self, disparity):
        if disparity.dim() != 4 or disparity.shape[1] != 1:
            raise DimensionError(f"expected (B, 1, H, W) disparity, got {tuple(disparity.shape)}")
        taps = [self.stem(disparity)]
        for stage in self.stages:
            taps.append(stage(taps[-1]))
        return taps


class FeatureFusionAdapter(nn.Module):
    """Builds the fused pyramid from shared features and the final disparity.

    Shallow levels: remap(shared level) fused with the matching disparity
    tap. Deep levels: the previous fused level is fused again with the
    previous disparity tap (the literal written form; `deep_fusion_input =
    "adapted"` feeds the pre-fusion adapted map instead), re-encoded through
    a stride-2 residual block, then fused with the current disparity tap.
    """

    def __init__(self, width_multiplier=1.0, strategy="addition", deep_fusion_input="fused"):
        super().__init__()
        if deep_fusion_input not in DEEP_FUSION_INPUTS:
            raise ConfigError(f"unknown deep_fusion_input {deep_fusion_input!r}")
        self.width_multiplier = width_multiplier
        self.deep_fusion_input = deep_fusion_input
        fused_ch = [scaled_channels(b, width_multiplier) for b in FUSED_BASE_CHANNELS]
        shared_ch = [scaled_channels(b, width_multiplier) for b in PYRAMID_BASE_CHANNELS]
        self.remaps = nn.ModuleList(
            RemapBlock(shared_ch[src], fused_ch[i])
            for i, src in enumerate(SHALLOW_SOURCE_LEVELS)
        )
        self.disparity_encoder = DisparityEncoder(width_multiplier)
        self.deep_encoders = nn.ModuleList(
            BasicResBlock(fused_ch[i - 1], fused_ch[i], stride=2) for i in (3, 4)
        )
        self.fusions = nn.ModuleList(
            FusionBlock(fused_ch[i], fused_ch[i], strategy) for i in range(5)
        )
        self.pre_fusions = nn.ModuleList(
            FusionBlock(fused_ch[i], fused_ch[i], strategy) for i in (2, 3)
        )

    def forward(self, pyramid: FeaturePyramid, disparity) -> FusedPyramid:
        taps = self.disparity_encoder(disparity)
        fused, adapted = [], []
        for i, src in enumerate(SHALLOW_SOURCE_LEVELS):
            a = self.remaps[i](pyramid.levels[src])
            adapted.append(a)
            fused.append(self.fusions[i](a, taps[i]))
        for step, i in enumerate((3, 4)):
            prev = fused[i - 1] if self.deep_fusion_input == "fused" else adapted[i - 1]
            a = self.deep_encoders[step](self.pre_fusions[step](prev, taps[i - 1]))
            adapted.append(a)
            fused.append(self.fusions[i](a, taps[i]))
        return FusedPyramid(fused, self.width_multiplier)


class UpsampleBlock(nn.Module):
    """x2 interpolation followed by a 3x3 stride-1 conv."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.op = conv_bn_relu(in_ch, out_ch, kernel=3, stride=1)

    def forward(self, x, size):
        return self.op(F.interpolate(x, size=size, mode="bilinear", align_corners=True))


class FeatureExtractor(nn.Module):
    """Three 3x3 stride-1 convs, as used throughout the decoder grid."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.op = nn.Sequential(
            conv_bn_relu(in_ch, out_ch), conv_bn_relu(out_ch, out_ch), conv_bn_relu(out_ch, out_ch)
        )

    def forward(self, x):
        return self.op(x)


class DenseSkipDecoder(nn.Module):
    """Triangular grid of decoder nodes with dense same-resolution skips.

    node(r, c) consumes every earlier node of row r plus the upsampled
    node(r+1, c-1); rows run at strides {2, 4, 8, 16} with at most three
    columns. The last top-row node is upsampled to full resolution for the
    class logits.
    """

    def __init__(self, width_multiplier=1.0, class_count=2, max_columns=3):
        super().__init__()
        if class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {class_count}")
        self.class_count = class_count
        ch = [scaled_channels(b, width_multiplier) for b in FUSED_BASE_CHANNELS]
        self.columns = [min(len(ch) - 1 - r, max_columns) for r in range(len(ch) - 1)]
        self.extractors = nn.ModuleDict()
        self.upsamplers = nn.ModuleDict()
        for r, cols in enumerate(self.columns):
            for c in range(1, cols + 1):
                self.upsamplers[f"{r}_{c}"] = UpsampleBlock(ch[r + 1], ch[r])
                self.extractors[f"{r}_{c}"] = FeatureExtractor((c + 1) * ch[r], ch[r])
        self.final_up = UpsampleBlock(ch[0], ch[0])
        self.head = nn.Conv2d(ch[0], class_count, 3, padding=1)

    def forward(self, fused: FusedPyramid):
        rows = {(r, 0): lvl for r, lvl in enumerate(fused.levels)}
        for c in range(1, max(self.columns) + 1):
            for r, cols in enumerate(self.columns):
                if c > cols:
                    continue
                below = rows[(r + 1, c - 1)]
                same_row = [rows[(r, cc)] for cc in range(c)]
                up = self.upsamplers[f"{r}_{c}"](below, size=same_row[0].shape[2:])
                rows[(r, c)] = self.extractors[f"{r}_{c}"](torch.cat(same_row + [up], dim=1))
        top = rows[(0, self.columns[0])]
        full = self.final_up(top, size=(top.shape[2] * 2, top.shape[3] * 2))
        return self.head(full)
