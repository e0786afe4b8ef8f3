"""Stereo branch: shared feature encoder, all-pairs correlation pyramid, and
multi-level recurrent disparity refinement with learned convex upsampling.

The correlation volume holds the dot product of every left feature column
with every right feature column on the same row; coarser pyramid levels
average adjacent pairs along the candidate axis only. The refiner keeps a
recurrent state at strides 4/8/16, reads the pyramid through a windowed
linearly-interpolated lookup around the current estimate, and emits one
full-resolution map per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DimensionError

PYRAMID_STRIDES = (1, 1, 2, 4, 4)
PYRAMID_BASE_CHANNELS = (32, 48, 64, 96, 256)
HIDDEN_BASE_CHANNELS = 128
REFINER_STRIDE = 4


def scaled_channels(base, width_multiplier):
    c = int(round(base * width_multiplier))
    if c < 1:
        raise ConfigError(
            f"width_multiplier {width_multiplier} collapses {base} channels below 1"
        )
    return c


@dataclass
class FeaturePyramid:
    """Five shared feature maps; the last one feeds the correlation volume."""

    levels: list  # tensors (B, C_i, H/s_i, W/s_i)
    width_multiplier: float = 1.0

    def validate(self, height=None, width=None):
        if len(self.levels) != len(PYRAMID_STRIDES):
            raise DimensionError(f"expected {len(PYRAMID_STRIDES)} levels, got {len(self.levels)}")
        for i, (lvl, stride, base) in enumerate(
            zip(self.levels, PYRAMID_STRIDES, PYRAMID_BASE_CHANNELS)
        ):
            want = scaled_channels(base, self.width_multiplier)
            if lvl.shape[1] != want:
                raise DimensionError(f"level {i + 1} has {lvl.shape[1]} channels, expected {want}")
            if height is not None and (lvl.shape[2] != height // stride or lvl.shape[3] != width // stride):
                raise DimensionError(
                    f"level {i + 1} spatial {tuple(lvl.shape[2:])} != stride-{stride} grid"
                )
        return self

    @property
    def correlation_features(self):
        return self.levels[-1]


@dataclass
class CorrelationPyramid:
    volumes: list  # (B, H', W', W' / 2^k)


@dataclass
class DisparitySequence:
    """Per-iteration full-resolution disparity maps, earliest first."""

    maps: list  # (B, H, W)
    initial: torch.Tensor = None

    def __len__(self):
        return len(self.maps)

    @property
    def final(self):
        return self.maps[-1]


def conv_norm_act(in_ch, out_ch, kernel=3, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.ReLU(inplace=True),
    )


class ResidualBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.norm1 = nn.InstanceNorm2d(out_ch, affine=True)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(out_ch, affine=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride),
                nn.InstanceNorm2d(out_ch, affine=True),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        y = F.relu(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return F.relu(y + self.shortcut(x))


class JointEncoder(nn.Module):
    """Shared encoder applied with one parameter set to both stereo views."""

    def __init__(self, width_multiplier=1.0):
        super().__init__()
        self.width_multiplier = width_multiplier
        c1, c2, c3, c4, c5 = (
            scaled_channels(b, width_multiplier) for b in PYRAMID_BASE_CHANNELS
        )
        self.stem = conv_norm_act(3, c1, kernel=7)
        self.block2 = ResidualBlock(c1, c2, stride=1)
        self.block3 = ResidualBlock(c2, c3, stride=2)
        self.block4 = ResidualBlock(c3, c4, stride=2)
        self.head5 = conv_norm_act(c4, c5, kernel=3)

    def forward(self, image) -> FeaturePyramid:
        if image.dim() != 4 or image.shape[1] != 3:
            raise DimensionError(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
        h, w = image.shape[2], image.shape[3]
        if h % 32 or w % 32:
            raise DimensionError(f"H and W must be divisible by 32, got {h}x{w}")
        f1 = self.stem(image)
        f2 = self.block2(f1)
        f3 = self.block3(f2)
        f4 = self.block4(f3)
        f5 = self.head5(f4)
        return FeaturePyramid([f1, f2, f3, f4, f5], self.width_multiplier).validate(h, w)


def build_correlation_volume(f_left, f_right):
    """All-pairs per-row dot products: out[b, i, j, k] = <L[b,:,i,j], R[b,:,i,k]>."""
    if f_left.shape != f_right.shape:
        raise DimensionError(
            f"feature shapes differ: {tuple(f_left.shape)} vs {tuple(f_right.shape)}"
        )
    return torch.einsum("bchj,bchk->bhjk", f_left, f_right)


def pad_candidate_axis(volume, multiple):
    """Replicate-pad the candidate axis up to the next multiple."""
    w = volume.shape[-1]
    extra = (-w) % multiple
    if extra == 0:
        return volume
    return F.pad(volume, (0, extra, 0, 0), mode="replicate")


def build_correlation_pyramid(volume, levels) -> CorrelationPyramid:
    """Average adjacent candidate pairs per level; spatial axes untouched."""
    if levels < 1:
        raise ConfigError(f"pyramid needs >= 1 level, got {levels}")
    if volume.shape[-1] % (2 ** (levels - 1)):
        raise ConfigError(
            f"candidate axis {volume.shape[-1]} not divisible by 2^{levels - 1}; pad upstream"
        )
    vols = [volume]
    for _ in range(levels - 1):
        prev = vols[-1]
        vols.append(0.5 * (prev[..., 0::2] + prev[..., 1::2]))
    return CorrelationPyramid(vols)


def lookup_correlation(pyramid: CorrelationPyramid, disparity, radius):
    """Sample each level at (j - d)/2^k + delta, delta in [-radius, radius].

    disparity is (B, H', W') on the correlation grid; returns
    (B, levels*(2*radius+1), H', W'). Positions interpolate linearly along
    the candidate axis and clamp to the volume edges.
    """
    b, h, w = disparity.shape
    j = torch.arange(w, device=disparity.device, dtype=disparity.dtype)
    centers = j.view(1, 1, w) - disparity
    deltas = torch.arange(-radius, radius + 1, device=disparity.device, dtype=disparity.dtype)
    outs = []
    for level, vol in enumerate(pyramid.volumes):
        wk = vol.shape[-1]
        coords = centers.unsqueeze(-1) / (2 ** level) + deltas.view(1, 1, 1, -1)
        coords = coords.clamp(0.0, wk - 1.0)
        lo = coords.floor()
        frac = coords - lo
        lo_idx = lo.long()
        hi_idx = (lo_idx + 1).clamp(max=wk - 1)
        v_lo = torch.gather(vol, 3, lo_idx)
        v_hi = torch.gather(vol, 3, hi_idx)
        outs.append(v_lo + frac * (v_hi - v_lo))
    return torch.cat(outs, dim=-1).permute(0, 3, 1, 2).contiguous()


def upsample_weights(mask_logits, factor):
    """Softmax-normalized convex weights, (B, 9, factor, factor, H, W)."""
    b, c, h, w = mask_logits.shape
    if c != 9 * factor * factor:
        raise DimensionError(f"mask has {c} channels, expected {9 * factor * factor}")
    return torch.softmax(mask_logits.view(b, 9, factor, factor, h, w), dim=1)


def convex_upsample(disparity, mask_logits, factor):
    """Full-resolution map as learned convex combinations of 3x3 neighbors.

    disparity (B, 1, H, W) in coarse-grid units; output is scaled by factor
    to full-resolution pixel units.
    """
    b, _, h, w = disparity.shape
    weights = upsample_weights(mask_logits, factor)
    padded = F.pad(factor * disparity, (1, 1, 1, 1), mode="replicate")
    neighbors = F.unfold(padded, [3, 3])
    neighbors = neighbors.view(b, 9, 1, 1, h, w)
    up = (weights * neighbors).sum(dim=1)
    up = up.permute(0, 3, 1, 4, 2).reshape(b, 1, factor * h, factor * w)
    return up


class SepConv2d(nn.Module):
    """Separable spatial conv: 1 x k then k x 1."""

    def __init__(self, in_ch, out_ch, kernel=5):
        super().__init__()
        p = kernel // 2
        self.horizontal = nn.Conv2d(in_ch, out_ch, (1, kernel), padding=(0, p))
        self.vertical = nn.Conv2d(out_ch, out_ch, (kernel, 1), padding=(p, 0))

    def forward(self, x):
        return self.vertical(self.horizontal(x))


class ConvGRU(nn.Module):
    """Gated recurrent cell over feature maps with additive context injection."""

    def __init__(self, hidden_ch, input_ch, kernel=5):
        super().__init__()
        self.convz = SepConv2d(hidden_ch + input_ch, hidden_ch, kernel)
        self.convr = SepConv2d(hidden_ch + input_ch, hidden_ch, kernel)
        self.convq = SepConv2d(hidden_ch + input_ch, hidden_ch, kernel)

    def forward(self, h, x, injections):
        cz, cr, cq = injections
        hx = torch.cat([h, x], dim=1)
        z = torch.sigmoid(self.convz(hx) + cz)
        r = torch.sigmoid(self.convr(hx) + cr)
        q = torch.tanh(self.convq(torch.cat([r * h, x], dim=1)) + cq)
        return (1 - z) * h + z * q


class MotionEncoder(nn.Module):
    def __init__(self, corr_ch, hidden_ch):
        super().__init__()
        self.convc1 = nn.Conv2d(corr_ch, 2 * hidden_ch, 1)
        self.convc2 = nn.Conv2d(2 * hidden_ch, hidden_ch, 3, padding=1)
        self.convd1 = nn.Conv2d(1, hidden_ch, 3, padding=1)
        self.convd2 = nn.Conv2d(hidden_ch, hidden_ch // 2, 3, padding=1)
        self.merge = nn.Conv2d(hidden_ch + hidden_ch // 2, 2 * hidden_ch - 1, 3, padding=1)

    def forward(self, corr_feats, disparity):
        c = F.relu(self.convc2(F.relu(self.convc1(corr_feats))))
        d = F.relu(self.convd2(F.relu(self.convd1(disparity))))
        x = F.relu(self.merge(torch.cat([c, d], dim=1)))
        return torch.cat([x, disparity], dim=1)


class ContextAdapter(nn.Module):
    """Derives recurrent state and gate injections at strides 4/8/16 from the
    shared pyramid's correlation-level features."""

    def __init__(self, feat_ch, hidden_ch):
        super().__init__()
        self.hidden_ch = hidden_ch
        self.base4 = conv_norm_act(feat_ch, 2 * hidden_ch)
        self.base8 = conv_norm_act(2 * hidden_ch, 2 * hidden_ch, stride=2)
        self.base16 = conv_norm_act(2 * hidden_ch, 2 * hidden_ch, stride=2)
        self.hidden_heads = nn.ModuleList(
            nn.Conv2d(2 * hidden_ch, hidden_ch, 3, padding=1) for _ in range(3)
        )
        self.inject_heads = nn.ModuleList(
            nn.Conv2d(2 * hidden_ch, 3 * hidden_ch, 3, padding=1) for _ in range(3)
        )

    def forward(self, correlation_features):
        bases = []
        x = self.base4(correlation_features)
        bases.append(x)
        x = self.base8(x)
        bases.append(x)
        x = self.base16(x)
        bases.append(x)
        hiddens = [torch.tanh(head(b)) for head, b in zip(self.hidden_heads, bases)]
        injections = [
            torch.chunk(head(b), 3, dim=1) for head, b in zip(self.inject_heads, bases)
        ]
        return hiddens, injections


class DisparityRefiner(nn.Module):
    """Multi-level recurrent update operator producing a disparity sequence."""

    def __init__(self, feat_ch, width_multiplier=1.0, corr_levels=4, corr_radius=4):
        super().__init__()
        self.corr_levels = corr_levels
        self.corr_radius = corr_radius
        h = scaled_channels(HIDDEN_BASE_CHANNELS, width_multiplier)
        self.hidden_ch = h
        self.context = ContextAdapter(feat_ch, h)
        corr_ch = corr_levels * (2 * corr_radius + 1)
        self.motion = MotionEncoder(corr_ch, h)
        self.gru4 = ConvGRU(h, 2 * h + h)
        self.gru8 = ConvGRU(h, 2 * h)
        self.gru16 = ConvGRU(h, h)
        self.disparity_head = nn.Sequential(
            nn.Conv2d(h, 2 * h, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(2 * h, 1, 3, padding=1),
        )
        self.mask_head = nn.Sequential(
            nn.Conv2d(h, 2 * h, 3, padding=1), nn.ReLU(inplace=True),
            nn.Conv2d(2 * h, 9 * REFINER_STRIDE ** 2, 1),
        )

    def update_modules(self):
        """Everything that turns state into increments (zeroing these freezes D at 0)."""
        return [self.motion, self.gru4, self.gru8, self.gru16,
                self.disparity_head, self.mask_head]

    def forward(self, correlation_features, pyramid: CorrelationPyramid, iters) -> DisparitySequence:
        if iters < 1:
            raise ConfigError(f"iters must be >= 1, got {iters}")
        b, _, h4, w4 = correlation_features.shape
        hiddens, injections = self.context(correlation_features)
        h_4, h_8, h_16 = hiddens
        disparity = correlation_features.new_zeros(b, 1, h4, w4)
        maps = []
        for _ in range(iters):
            h_16 = self.gru16(h_16, F.avg_pool2d(h_8, 2), injections[2])
            up16 = F.interpolate(h_16, size=h_8.shape[2:], mode="bilinear", align_corners=True)
            h_8 = self.gru8(h_8, torch.cat([F.avg_pool2d(h_4, 2), up16], dim=1), injections[1])
            corr_feats = lookup_correlation(pyramid, disparity.squeeze(1), self.corr_radius)
            motion = self.motion(corr_feats, disparity)
            up8 = F.interpolate(h_8, size=h_4.shape[2:], mode="bilinear", align_corners=True)
            h_4 = self.gru4(h_4, torch.cat([motion, up8], dim=1), injections[0])
            disparity = disparity + self.disparity_head(h_4)
            mask = 0.25 * self.mask_head(h_4)
            maps.append(convex_upsample(disparity, mask, REFINER_STRIDE).squeeze(1))
        full_h, full_w = h4 * REFINER_STRIDE, w4 * REFINER_STRIDE
        initial = correlation_features.new_zeros(b, full_h, full_w)
        return DisparitySequence(maps=maps, initial=initial)
