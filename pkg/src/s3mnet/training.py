"""Training loop, evaluation harness, checkpointing, and single-pair inference.

Deterministic mode seeds torch and numpy up front and forces deterministic
kernels, so rerunning a config reproduces the loss trajectory bit for bit;
checkpoints carry optimizer and RNG state so a resumed run continues the
same trajectory.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import (
    DETERMINISM_ENV_VAR,
    FullConfig,
    TrainConfig,
    apply_mapping,
    config_to_text,
    parse_config_text,
)
from .dataio import (
    StereoSample,
    encode_disparity_16bit,
    load_manifest,
    load_sample,
)
from .errors import ConfigError, ConsistencyError, DataError, TrainingDivergedError
from .losses import scg_segmentation_loss, scg_stereo_loss, scg_weight_map, total_loss
from .metrics import MetricsReport, confusion_matrix, segmentation_metrics
from .model import ModelConfig, S3MNet, pad_to_multiple, unpad

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def set_determinism(seed, deterministic=True, threads=1):
    if threads > 0:
        torch.set_num_threads(threads)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(bool(deterministic))


def model_config_from_train(train: TrainConfig, class_count) -> ModelConfig:
    return ModelConfig(
        width_multiplier=train.width_multiplier,
        class_count=class_count,
        gru_iters=train.gru_iters,
        corr_levels=train.corr_levels,
        corr_radius=train.corr_radius,
        fusion=train.fusion,
        deep_fusion_input=train.deep_fusion_input,
    )


class SplitDataset:
    """All samples of one manifest split, loaded eagerly (desk scale)."""

    def __init__(self, root, split):
        self.root = Path(root)
        self.manifest = load_manifest(self.root)
        if split not in self.manifest.splits:
            raise DataError(f"split {split!r} not in manifest (has {sorted(self.manifest.splits)})")
        self.ids = list(self.manifest.splits[split])
        if not self.ids:
            raise DataError(f"split {split!r} is empty")
        self.samples = [load_sample(self.root, sid, self.manifest) for sid in self.ids]

    def __len__(self):
        return len(self.samples)


def random_crop(sample: StereoSample, crop_h, crop_w, rng):
    h, w = sample.height, sample.width
    if h < crop_h or w < crop_w:
        raise DataError(f"sample {h}x{w} smaller than crop {crop_h}x{crop_w}")
    y = int(rng.integers(0, h - crop_h + 1))
    x = int(rng.integers(0, w - crop_w + 1))
    sl = np.s_[y:y + crop_h, x:x + crop_w]
    return (
        sample.left[sl],
        sample.right[sl],
        sample.disparity_gt[sl],
        sample.disparity_valid[sl],
        sample.labels_gt[sl],
    )


def photometric_jitter(left, right, rng):
    """Brightness/contrast jitter applied identically to both views."""
    gain = float(rng.uniform(0.85, 1.15))
    bias = float(rng.uniform(-0.08, 0.08))
    jittered = []
    for img in (left, right):
        jittered.append(np.clip(img * gain + bias, 0.0, 1.0).astype(np.float32))
    return jittered


def _batch_from_samples(dataset, config: TrainConfig, rng):
    lefts, rights, disps, valids, labels = [], [], [], [], []
    for _ in range(config.batch_size):
        sample = dataset.samples[int(rng.integers(len(dataset)))]
        l, r, d, v, m = random_crop(sample, config.crop_height, config.crop_width, rng)
        if config.jitter:
            l, r = photometric_jitter(l, r, rng)
        lefts.append(l)
        rights.append(r)
        disps.append(d)
        valids.append(v)
        labels.append(m)
    to_t = lambda arrs, dtype: torch.from_numpy(np.stack(arrs)).to(dtype)
    return (
        to_t(lefts, torch.float32).permute(0, 3, 1, 2).contiguous(),
        to_t(rights, torch.float32).permute(0, 3, 1, 2).contiguous(),
        to_t(disps, torch.float32),
        torch.from_numpy(np.stack(valids)),
        to_t(labels, torch.int64),
    )


def compute_losses(output, disparity_gt, valid, labels, loss_cfg, class_count):
    weight = scg_weight_map(labels, class_count, loss_cfg.pool_kernel, loss_cfg.ignore_label)
    l_ss = scg_segmentation_loss(
        output.logits, labels, weight, alpha=loss_cfg.alpha, ignore_label=loss_cfg.ignore_label
    )
    l_sm = scg_stereo_loss(
        output.disparities.maps, disparity_gt, valid, weight,
        alpha=loss_cfg.alpha, gamma=loss_cfg.gamma,
    )
    return l_ss, l_sm, total_loss(l_ss, l_sm)


def save_checkpoint(path, model, optimizer, step, full_config: FullConfig, class_count, rng):
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "step": step,
        "class_count": class_count,
        "config_text": config_to_text(full_config),
        "numpy_rng_state": rng.bit_generator.state if rng is not None else None,
        "torch_rng_state": torch.get_rng_state(),
    }
    torch.save(payload, path)
    return Path(path)


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('format_version')}")
    return payload


def restore_config(payload, overrides=()) -> FullConfig:
    """Rebuild the config snapshot stored in a checkpoint, plus overrides."""
    config = FullConfig()
    apply_mapping(config, parse_config_text(payload["config_text"]))
    if overrides:
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


def _load_model(payload, config: FullConfig):
    set_determinism(config.train.seed, config.train.deterministic, config.train.threads)
    model = S3MNet(model_config_from_train(config.train, payload["class_count"]))
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    steps: int
    final_l_ss: float
    final_l_sm: float


def train(full_config: FullConfig, dataset_root, out_dir, resume_from=None) -> TrainResult:
    """Optimize the joint loss over the train split; returns checkpoint paths."""
    cfg = full_config.train.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = SplitDataset(dataset_root, "train")
    class_count = dataset.manifest.class_count

    set_determinism(cfg.seed, cfg.deterministic, cfg.threads)
    model = S3MNet(model_config_from_train(cfg, class_count))
    model.train()
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.learning_rate, eps=cfg.epsilon, weight_decay=cfg.weight_decay
    )
    rng = np.random.default_rng(cfg.seed)
    start_step = 0
    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        model.load_state_dict(payload["model_state"])
        optimizer.load_state_dict(payload["optimizer_state"])
        start_step = payload["step"]
        rng.bit_generator.state = payload["numpy_rng_state"]
        torch.set_rng_state(payload["torch_rng_state"])
        model.train()

    log_path = out_dir / "metrics.log"
    ckpt_path = out_dir / "checkpoint.pt"
    mode = "a" if resume_from is not None else "w"
    final_l_ss = final_l_sm = float("nan")
    with open(log_path, mode) as log:
        for step in range(start_step + 1, cfg.iterations + 1):
            left, right, disp, valid, labels = _batch_from_samples(dataset, cfg, rng)
            if cfg.warmdown:
                factor = 1.0 - 0.9 * (step - 1) / max(1, cfg.iterations - 1)
                for group in optimizer.param_groups:
                    group["lr"] = cfg.learning_rate * factor
            output = model(left, right)
            l_ss, l_sm, total = compute_losses(output, disp, valid, labels, cfg.loss, class_count)
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: l_ss={l_ss.item()}, l_sm={l_sm.item()}"
                )
            optimizer.zero_grad()
            total.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            final_l_ss, final_l_sm = float(l_ss.detach()), float(l_sm.detach())
            if step % cfg.log_every == 0 or step == cfg.iterations:
                log.write(f"{step}, {final_l_ss:.6f}, {final_l_sm:.6f}, {final_l_ss + final_l_sm:.6f}\n")
                logger.info(
                    "step %d l_ss %.6f l_sm %.6f total %.6f lr %.2e",
                    step, final_l_ss, final_l_sm, final_l_ss + final_l_sm,
                    optimizer.param_groups[0]["lr"],
                )
            if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
                save_checkpoint(
                    out_dir / f"checkpoint_{step:06d}.pt",
                    model, optimizer, step, full_config, class_count, rng,
                )
    save_checkpoint(ckpt_path, model, optimizer, cfg.iterations, full_config, class_count, rng)
    return TrainResult(ckpt_path, log_path, cfg.iterations, final_l_ss, final_l_sm)


def _predict_with_model(model, gru_iters):
    def predict(sample: StereoSample):
        left = torch.from_numpy(sample.left).permute(2, 0, 1).unsqueeze(0)
        right = torch.from_numpy(sample.right).permute(2, 0, 1).unsqueeze(0)
        padded_l, box = pad_to_multiple(left)
        padded_r, _ = pad_to_multiple(right)
        with torch.no_grad():
            output = model(padded_l, padded_r, iters=gru_iters)
        disparity = unpad(output.disparities.final, box)[0].numpy()
        labels = unpad(output.logits.argmax(dim=1), box)[0].numpy()
        return disparity, labels
    return predict


def evaluate_predictions(predict_fn, dataset_root, split) -> MetricsReport:
    """Aggregate the metric suite for an arbitrary predictor over a split."""
    dataset = SplitDataset(dataset_root, split)
    class_count = dataset.manifest.class_count
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    abs_err_sum = 0.0
    n_valid = 0
    n_over_1 = 0
    n_over_3 = 0
    for sample in dataset.samples:
        disparity, labels = predict_fn(sample)
        cm += confusion_matrix(labels, sample.labels_gt, class_count)
        err = np.abs(np.asarray(disparity, dtype=np.float64) - sample.disparity_gt)[
            sample.disparity_valid
        ]
        abs_err_sum += err.sum()
        n_valid += err.size
        n_over_1 += int((err > 1.0).sum())
        n_over_3 += int((err > 3.0).sum())
    if n_valid == 0:
        raise DataError(f"split {split!r} has no valid disparity pixels")
    seg = segmentation_metrics(cm)
    return MetricsReport.from_parts(
        seg, epe=abs_err_sum / n_valid, pep_1=n_over_1 / n_valid, pep_3=n_over_3 / n_valid
    )


def evaluate(checkpoint_path, dataset_root, split, overrides=()) -> MetricsReport:
    payload = load_checkpoint(checkpoint_path)
    config = restore_config(payload, overrides)
    model = _load_model(payload, config)
    return evaluate_predictions(
        _predict_with_model(model, config.train.gru_iters), dataset_root, split
    )


def infer(checkpoint_path, left_path, right_path, out_dir, overrides=()):
    """Run one stereo pair through a checkpoint; writes disp.png and labels.png."""
    payload = load_checkpoint(checkpoint_path)
    config = restore_config(payload, overrides)
    model = _load_model(payload, config)

    left = np.asarray(Image.open(left_path)).astype(np.float32) / 255.0
    right = np.asarray(Image.open(right_path)).astype(np.float32) / 255.0
    if left.shape != right.shape:
        raise ConsistencyError(f"image sizes differ: {left.shape} vs {right.shape}")
    sample = StereoSample(
        left=left,
        right=right,
        disparity_gt=np.zeros(left.shape[:2], dtype=np.float32),
        disparity_valid=np.ones(left.shape[:2], dtype=bool),
        labels_gt=np.zeros(left.shape[:2], dtype=np.int64),
        class_count=payload["class_count"],
    )
    disparity, labels = _predict_with_model(model, config.train.gru_iters)(sample)
    disparity = np.clip(disparity, 0.0, min(float(config.train.max_disparity), 255.996))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    disp_path = out_dir / "disp.png"
    labels_path = out_dir / "labels.png"
    raw = encode_disparity_16bit(disparity, np.ones_like(disparity, dtype=bool))
    Image.fromarray(raw).save(disp_path)
    Image.fromarray(labels.astype(np.uint8)).save(labels_path)
    return disp_path, labels_path
