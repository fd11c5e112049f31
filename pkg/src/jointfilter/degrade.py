"""Degradation pipeline for training-pair synthesis: bicubic resizing,
right-bottom nearest-neighbor downsampling, and seeded Gaussian noise."""

from __future__ import annotations

import numpy as np

__all__ = [
    "add_gaussian_noise",
    "bicubic_resize",
    "cubic_kernel",
    "nearest_downsample_rb",
]


def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys piecewise-cubic interpolation kernel (a = -0.5)."""
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    out[near] = (a + 2) * x[near] ** 3 - (a + 3) * x[near] ** 2 + 1
    out[far] = a * x[far] ** 3 - 5 * a * x[far] ** 2 + 8 * a * x[far] - 4 * a
    return out


def _resize_axis_weights(n_in: int, n_out: int):
    """4-tap indices and weights per output position, center-aligned, edge-clamped."""
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.intp)
    taps = base[:, None] + np.arange(-1, 3)[None, :]  # (n_out, 4)
    weights = cubic_kernel(src[:, None] - taps)
    taps = np.clip(taps, 0, n_in - 1)
    return taps, weights.astype(np.float64)


def _resize_last_axis(img: np.ndarray, n_out: int) -> np.ndarray:
    taps, weights = _resize_axis_weights(img.shape[-1], n_out)
    out = np.zeros(img.shape[:-1] + (n_out,), dtype=np.float64)
    for t in range(4):
        out += img[..., taps[:, t]] * weights[:, t]
    return out


def bicubic_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable Keys a=-0.5 cubic resize, same kernel for down- and upsampling."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"target extents must be positive, got {out_h}x{out_w}")
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    out = _resize_last_axis(img, out_w)
    out = _resize_last_axis(out.swapaxes(-1, -2), out_h).swapaxes(-1, -2)
    out = out.astype(np.float32)
    return out[0] if squeeze else out


def nearest_downsample_rb(image: np.ndarray, scale: int) -> np.ndarray:
    """Keep the right-bottom pixel of every scale x scale block."""
    img = np.asarray(image)
    h, w = img.shape[-2], img.shape[-1]
    if h % scale or w % scale:
        raise ValueError(f"extents {h}x{w} not divisible by scale {scale}")
    return img[..., scale - 1 :: scale, scale - 1 :: scale].copy()


def add_gaussian_noise(depth: np.ndarray, variance: float, seed) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise, clamped to [0, 1]; seeded."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    d = np.asarray(depth, dtype=np.float32)
    if variance == 0:
        return d.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noisy = d + rng.normal(0.0, np.sqrt(variance), size=d.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)
