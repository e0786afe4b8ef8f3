"""Deterministic raster rendering of disparity maps, label maps, and
consistency-weight heatmaps (no figure chrome, no timestamps).
"""

from __future__ import annotations

import math

import matplotlib
import numpy as np
from PIL import Image

from .errors import ConfigError
from .synthgen import CLASS_COLORS

matplotlib.use("Agg")

WEIGHT_FLOOR = math.exp(-1.0)


def _apply_colormap(values, vmin, vmax, cmap_name):
    cmap = matplotlib.colormaps[cmap_name]
    span = max(vmax - vmin, 1e-12)
    normed = np.clip((np.asarray(values, dtype=np.float64) - vmin) / span, 0.0, 1.0)
    rgba = cmap(normed)
    return (rgba[..., :3] * 255.0 + 0.5).astype(np.uint8)


def render_disparity(disparity, max_disparity=192.0):
    """Perceptually-uniform colormap over the fixed range [0, max_disparity]."""
    return _apply_colormap(disparity, 0.0, float(max_disparity), "viridis")


def render_labels(labels, class_count=None):
    """Fixed per-class palette; IGNORE and out-of-palette IDs cycle."""
    labels = np.asarray(labels, dtype=np.int64)
    palette = CLASS_COLORS.astype(np.uint8)
    return palette[labels % len(palette)]


def render_scg_weight(weights):
    """Heatmap pinned to the attainable weight range [e^-1, 1]."""
    return _apply_colormap(weights, WEIGHT_FLOOR, 1.0, "magma")


def save_render(rgb, out_path):
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ConfigError(f"expected (H, W, 3) render, got {rgb.shape}")
    Image.fromarray(rgb).save(out_path)
    return out_path
