"""Independent scalar/naive reference implementations used as test oracles.

These deliberately avoid the package's torch code paths: plain numpy with
explicit per-pixel loops, so they stay an independent route to the same
numbers.
"""

import math

import numpy as np

IGNORE = 255


def naive_weight_map(labels, class_count, pool_kernel, ignore_label=IGNORE):
    """Per-pixel, per-channel evaluation of the one-hot -> pooled ->
    normalized -> channel-max weight pipeline, with reflected borders."""
    labels = np.asarray(labels)
    h, w = labels.shape
    pad = pool_kernel // 2
    one_hot = np.zeros((h, w, class_count), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            if labels[i, j] != ignore_label:
                one_hot[i, j, labels[i, j]] = 1.0
    padded = np.pad(one_hot, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    weights = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            window = padded[i:i + pool_kernel, j:j + pool_kernel, :]
            pooled = window.mean(axis=(0, 1))
            normalized = np.exp(-((2.0 * pooled - 1.0) ** 2))
            weights[i, j] = normalized.max()
    return weights


def naive_correlation_volume(f_left, f_right):
    """Triple-loop dot products; features are (C, H, W)."""
    c, h, w = f_left.shape
    out = np.zeros((h, w, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for k in range(w):
                out[i, j, k] = float(np.dot(f_left[:, i, j], f_right[:, i, k]))
    return out


def naive_correlation_pyramid(volume, levels):
    """Repeated explicit adjacent-pair averaging along the last axis."""
    vols = [np.asarray(volume, dtype=np.float64)]
    for _ in range(levels - 1):
        prev = vols[-1]
        h, w, n = prev.shape
        nxt = np.zeros((h, w, n // 2), dtype=np.float64)
        for i in range(h):
            for j in range(w):
                for k in range(n // 2):
                    nxt[i, j, k] = 0.5 * (prev[i, j, 2 * k] + prev[i, j, 2 * k + 1])
        vols.append(nxt)
    return vols


def plain_cross_entropy(logits, labels, ignore_label=IGNORE):
    """Mean -log softmax probability of the true class, numpy route."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    c = logits.shape[-1]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    total, count = 0.0, 0
    for idx in np.ndindex(labels.shape):
        y = labels[idx]
        if y == ignore_label:
            continue
        total += -log_probs[idx + (y,)]
        count += 1
    return total / count


def plain_sequence_l1(disparity_maps, gt, valid, gamma):
    """Gamma-decayed mean absolute error over valid pixels, numpy route."""
    n = len(disparity_maps)
    total = 0.0
    for i, est in enumerate(disparity_maps, start=1):
        err = np.abs(np.asarray(gt, dtype=np.float64) - np.asarray(est, dtype=np.float64))
        total += gamma ** (n - i) * err[valid].mean()
    return total


E_INV = math.exp(-1.0)
BOUNDARY_K3 = math.exp(-1.0 / 9.0)
