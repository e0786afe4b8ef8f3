"""Procedural rectified stereo scenes with exact dense ground truth.

A scene is a textured background plane plus K textured axis-aligned
rectangles, each at its own integer disparity. The right image is built by
shifting every layer left by its disparity and compositing near-to-far, so
photometric warp consistency holds exactly (zero resampling error) and
occlusion masks are closed-form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Manifest, StereoSample, save_manifest, save_sample
from .errors import ConfigError

# Distinct per-class color anchors (uint8); reused cyclically past 10 classes.
CLASS_COLORS = np.array(
    [
        [96, 96, 96],     # background gray
        [200, 60, 60],
        [60, 170, 60],
        [70, 90, 210],
        [210, 180, 50],
        [170, 60, 190],
        [60, 190, 190],
        [230, 130, 40],
        [120, 200, 90],
        [150, 100, 60],
    ],
    dtype=np.float64,
)


@dataclass
class SceneConfig:
    width: int = 128
    height: int = 64
    layer_count: int = 4
    disparity_range: tuple[float, float] = (8, 24)
    background_disparity: float = 4
    texture_noise_amplitude: float = 0.25
    class_palette_size: int = 5
    seed: int = 0
    subpixel: bool = False  # fractional layer disparities, linear resampling

    def validate(self):
        d_min, d_max = self.disparity_range
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("width and height must be positive")
        if not (0 < d_min <= d_max < self.width / 4):
            raise ConfigError(
                f"need 0 < d_min <= d_max < width/4, got ({d_min}, {d_max}) with width {self.width}"
            )
        if self.layer_count < 0:
            raise ConfigError("layer_count must be >= 0")
        if self.class_palette_size < self.layer_count + 1:
            raise ConfigError(
                f"class_palette_size {self.class_palette_size} < layer_count+1 "
                f"({self.layer_count + 1})"
            )
        if self.class_palette_size > 255:
            raise ConfigError("class_palette_size must fit 8-bit labels (<= 255)")
        if not 0.0 <= self.texture_noise_amplitude <= 1.0:
            raise ConfigError("texture_noise_amplitude must be in [0, 1]")
        bg = self.background_disparity
        if bg != int(bg) or not (1 <= bg <= d_min):
            raise ConfigError(
                f"background_disparity must be an integer in [1, d_min], got {bg}"
            )
        if self.layer_count > int(np.floor(d_max)) - int(np.ceil(d_min)) + 1:
            raise ConfigError(
                f"disparity budget infeasible: cannot place {self.layer_count} distinct "
                f"integer disparities in [{d_min}, {d_max}]"
            )
        return self


def _class_color(class_id):
    return CLASS_COLORS[class_id % len(CLASS_COLORS)]


def _layer_texture(rng, class_id, height, width, amplitude):
    """Per-layer uint8 texture: class color anchor plus seeded noise."""
    bias = _class_color(class_id)[None, None, :]
    noise = rng.uniform(-1.0, 1.0, size=(height, width, 3)) * (amplitude * 127.5)
    return np.clip(np.round(bias + noise), 0, 255).astype(np.uint8)


def generate_scene(config: SceneConfig) -> StereoSample:
    """Render one stereo sample with dense disparity and semantic ground truth."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    h, w = config.height, config.width
    d_min, d_max = config.disparity_range
    d_lo, d_hi = int(np.ceil(d_min)), int(np.floor(d_max))

    # Layer 0 is the background plane; rectangles follow in increasing
    # disparity so later (nearer) layers overwrite earlier ones.
    disparities = [int(config.background_disparity)]
    if config.layer_count:
        picks = rng.choice(np.arange(d_lo, d_hi + 1), size=config.layer_count, replace=False)
        disparities.extend(int(d) for d in np.sort(picks))
    if config.subpixel:
        fracs = [0.0] + list(np.round(rng.uniform(0.0, 1.0, size=config.layer_count), 2))
        disparities = [d + f for d, f in zip(disparities, fracs)]
    class_ids = list(range(config.layer_count + 1))

    pad = int(np.ceil(max(disparities)))
    ext_w = w + pad  # textures extend right so the shifted view stays covered

    textures, masks = [], []
    for layer, (cid, disp) in enumerate(zip(class_ids, disparities)):
        textures.append(_layer_texture(rng, cid, h, ext_w, config.texture_noise_amplitude))
        if layer == 0:
            mask = np.ones((h, ext_w), dtype=bool)
        else:
            rw = int(rng.integers(max(4, w // 8), max(5, w // 2)))
            rh = int(rng.integers(max(4, h // 8), max(5, h // 2)))
            x0 = int(rng.integers(0, max(1, w - rw)))
            y0 = int(rng.integers(0, max(1, h - rh)))
            mask = np.zeros((h, ext_w), dtype=bool)
            mask[y0:y0 + rh, x0:x0 + rw] = True
        masks.append(mask)

    cols = np.arange(w)

    # Left view: front-most (last) layer covering each pixel wins.
    left = np.zeros((h, w, 3), dtype=np.uint8)
    disparity_gt = np.zeros((h, w), dtype=np.float32)
    labels_gt = np.zeros((h, w), dtype=np.int64)
    owner_left = np.zeros((h, w), dtype=np.int64)
    for layer, (cid, disp) in enumerate(zip(class_ids, disparities)):
        m = masks[layer][:, :w]
        left[m] = textures[layer][:, :w][m]
        disparity_gt[m] = disp
        labels_gt[m] = cid
        owner_left[m] = layer

    # Right view: layer pixels shift left by their own disparity.
    right = np.zeros((h, w, 3), dtype=np.uint8)
    owner_right = np.full((h, w), -1, dtype=np.int64)
    for layer, disp in enumerate(disparities):
        if config.subpixel and disp != int(disp):
            base = int(np.floor(disp))
            frac = disp - base
            src0 = np.clip(cols + base, 0, ext_w - 1)
            src1 = np.clip(cols + base + 1, 0, ext_w - 1)
            m = masks[layer][:, src0] & masks[layer][:, src1]
            tex = np.clip(
                np.round(
                    (1.0 - frac) * textures[layer][:, src0].astype(np.float64)
                    + frac * textures[layer][:, src1].astype(np.float64)
                ),
                0,
                255,
            ).astype(np.uint8)
        else:
            src = cols + int(disp)
            m = masks[layer][:, src]
            tex = textures[layer][:, src]
        right[m] = tex[m]
        owner_right[m] = layer

    # A left pixel is occluded when the right view at its match column is
    # owned by a different (nearer) layer, or the match falls off-frame.
    match_col = np.round(cols[None, :] - disparity_gt).astype(np.int64)
    in_frame = match_col >= 0
    match_owner = np.where(
        in_frame, owner_right[np.arange(h)[:, None], np.clip(match_col, 0, w - 1)], -1
    )
    occlusion = match_owner != owner_left

    sample = StereoSample(
        left=left.astype(np.float32) / 255.0,
        right=right.astype(np.float32) / 255.0,
        disparity_gt=disparity_gt,
        disparity_valid=np.ones((h, w), dtype=bool),
        labels_gt=labels_gt,
        class_count=config.class_palette_size,
        meta={"occlusion": occlusion, "seed": config.seed},
    )
    return sample.validate(max_disparity=d_max)


@dataclass
class DatasetConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    n_samples: int = 8
    val_fraction: float = 0.0


def generate_dataset(config: DatasetConfig, out_root) -> Manifest:
    """Write n_samples scene directories plus a manifest with per-sample seeds."""
    config.scene.validate()
    if config.n_samples <= 0:
        raise ConfigError("n_samples must be positive")
    seeds = [
        int(ss.generate_state(1)[0])
        for ss in np.random.SeedSequence(config.scene.seed).spawn(config.n_samples)
    ]
    ids = [f"{i:06d}" for i in range(config.n_samples)]
    for sid, seed in zip(ids, seeds):
        scene_cfg = SceneConfig(**{**config.scene.__dict__, "seed": seed})
        sample = generate_scene(scene_cfg)
        save_sample(out_root, sid, sample)
    n_val = int(round(config.n_samples * config.val_fraction))
    manifest = Manifest(
        class_count=config.scene.class_palette_size,
        class_names=[f"class_{c}" for c in range(config.scene.class_palette_size)],
        max_disparity=float(config.scene.disparity_range[1]),
        splits={
            "train": ids[: config.n_samples - n_val],
            "val": ids[config.n_samples - n_val:],
        },
        samples={sid: {"seed": seed} for sid, seed in zip(ids, seeds)},
    )
    save_manifest(out_root, manifest)
    return manifest
