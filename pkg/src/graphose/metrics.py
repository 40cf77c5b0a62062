"""Image and mask quality metrics used for evaluation and acceptance checks."""

from __future__ import annotations

import numpy as np


def ssim(x: np.ndarray, y: np.ndarray, window: int = 8, k1: float = 0.01, k2: float = 0.03,
         data_range: float = 1.0) -> float:
    """Structural similarity with uniform square windows.

    Accepts (H, W) or (C, H, W) arrays in [0, data_range]; multi-channel input
    is the mean over channels. Windows slide with stride 1; statistics use the
    population convention.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("shape mismatch")
    if x.ndim == 3:
        return float(np.mean([ssim(xc, yc, window, k1, k2, data_range) for xc, yc in zip(x, y)]))
    if x.ndim != 2:
        raise ValueError("expected (H, W) or (C, H, W)")
    h, w = x.shape
    if h < window or w < window:
        raise ValueError("image smaller than the window")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    wx = np.lib.stride_tricks.sliding_window_view(x, (window, window))
    wy = np.lib.stride_tricks.sliding_window_view(y, (window, window))
    mu_x = wx.mean(axis=(2, 3))
    mu_y = wy.mean(axis=(2, 3))
    # identical expression shapes keep ssim(x, x) exactly 1
    var_x = (wx * wx).mean(axis=(2, 3)) - mu_x * mu_x
    var_y = (wy * wy).mean(axis=(2, 3)) - mu_y * mu_y
    cov = (wx * wy).mean(axis=(2, 3)) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def mask_iou(pred: np.ndarray, target: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of thresholded masks; empty union counts as 1."""
    p = np.asarray(pred) >= threshold
    t = np.asarray(target) >= threshold
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)


def mask_center_of_mass(mask: np.ndarray) -> tuple[float, float]:
    """Intensity-weighted centroid in normalized (x, y) coordinates."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    total = mask.sum()
    if total <= 0:
        return (0.5, 0.5)
    xs = (np.arange(w) + 0.5) / w
    ys = (np.arange(h) + 0.5) / h
    cx = float((mask.sum(axis=0) * xs).sum() / total)
    cy = float((mask.sum(axis=1) * ys).sum() / total)
    return (cx, cy)


def constant_predictor_bce(targets: np.ndarray) -> float:
    """Loss of the best constant predictor (the mean target value)."""
    t = np.asarray(targets, dtype=np.float64)
    m = float(np.clip(t.mean(), 1e-12, 1 - 1e-12))
    return float(-(t * np.log(m) + (1 - t) * np.log(1 - m)).mean())
