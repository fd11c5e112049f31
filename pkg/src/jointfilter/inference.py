"""Full-image inference: 16-pass shift-and-stitch for the strided network,
one pass for the resampled fast network, and the per-pixel sliding-window
oracle both are checked against.

The stitched scheme shifts inside the zero-padded frame: one padded copy of
the inputs is made, and each of the stride^2 passes runs the network on the
crop anchored at offset (y, x), 0 <= y, x < stride. Pass (x, y) produces the
output pixels congruent to (y, x) mod stride, so every boundary pixel sees
exactly the zero-padded receptive field the per-pixel oracle sees. Kernel
weights, offsets and sampled values are only ever held for one pass (N/16
pixels) at a time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .filtering import KernelField, apply_kernel_field, full_grid_centers
from .networks import Dkn, Fdkn
from .resample import pixel_unshuffle
from .tensor import Tensor, no_grad, reshape

__all__ = [
    "InferenceResult",
    "infer",
    "infer_per_pixel",
    "infer_shift_and_stitch",
    "infer_single_pass",
    "make_filter_fn",
]


@dataclass
class InferenceResult:
    output: np.ndarray  # (1, H, W)
    forward_passes: int
    peak_field_pixels: int
    padded: bool = False
    seconds: float = 0.0


def _model_dtype(model):
    for p in model.parameters():
        return p.data.dtype
    return np.dtype(np.float32)


def _validate_pair(guidance: np.ndarray, target: np.ndarray, model):
    dtype = _model_dtype(model)
    g = np.asarray(guidance, dtype=dtype)
    t = np.asarray(target, dtype=dtype)
    if t.ndim == 2:
        t = t[None]
    if g.ndim != 3 or g.shape[0] != model.config.guidance_channels:
        raise ValueError(
            f"guidance must be {model.config.guidance_channels} x H x W, got {g.shape}"
        )
    if t.ndim != 3 or t.shape[0] != model.config.target_channels:
        raise ValueError(
            f"target must be {model.config.target_channels} x H x W, got {t.shape}"
        )
    if g.shape[1:] != t.shape[1:]:
        raise ValueError(
            f"guidance extents {g.shape[1:]} do not match target extents {t.shape[1:]}"
        )
    return g, t


def _flatten_maps(weights, offsets):
    k2, h, w = weights.data.shape
    wf = reshape(weights, (k2, h * w))
    of = reshape(offsets, (offsets.data.shape[0], h * w)) if offsets is not None else None
    return wf, of


def infer_shift_and_stitch(model: Dkn, guidance, target, check: bool = True) -> InferenceResult:
    """Filter a whole image with stride^2 shifted passes (extents divisible by 4)."""
    g, t = _validate_pair(guidance, target, model)
    cfg = model.config
    s = cfg.stride
    h, w = t.shape[1:]
    if h % s or w % s:
        raise ValueError(f"extents {h}x{w} not divisible by {s}; caller pads and crops")
    rf = model.receptive_field
    pad = rf // 2
    was_training = model.training
    model.eval()
    t0 = time.perf_counter()
    pg = np.pad(g, ((0, 0), (pad, pad), (pad, pad)))
    pt = np.pad(t, ((0, 0), (pad, pad), (pad, pad)))
    target_t = Tensor(t)
    out = np.empty((h, w), dtype=t.dtype)
    ch, cw = h + 2 * pad - (s - 1), w + 2 * pad - (s - 1)
    passes = 0
    peak = 0
    with no_grad():
        for y in range(s):
            for x in range(s):
                gc = Tensor(np.ascontiguousarray(pg[:, y : y + ch, x : x + cw]))
                tc = Tensor(np.ascontiguousarray(pt[:, y : y + ch, x : x + cw]))
                weights, offsets = model(gc, tc)
                hh, ww = weights.data.shape[1:]
                if hh != h // s or ww != w // s:
                    raise ValueError(
                        f"pass ({x},{y}) produced a {hh}x{ww} grid, expected {h // s}x{w // s}"
                    )
                cy, cx = np.meshgrid(
                    y + s * np.arange(hh), x + s * np.arange(ww), indexing="ij"
                )
                centers = np.stack([cy.reshape(-1), cx.reshape(-1)])
                wf, of = _flatten_maps(weights, offsets)
                field = KernelField(wf, of, centers, cfg.kernel_size, cfg.window)
                vals = apply_kernel_field(
                    target_t, field, residual=cfg.residual, border=cfg.border, check=check
                )
                out[y::s, x::s] = vals.data.reshape(hh, ww)
                passes += 1
                peak = max(peak, centers.shape[1])
    model.train(was_training)
    return InferenceResult(out[None], passes, peak, seconds=time.perf_counter() - t0)


def infer_per_pixel(model: Dkn, guidance, target, check: bool = False) -> np.ndarray:
    """Naive oracle: run the network on every pixel's receptive-field patch.

    Quadratically slow; exists to pin down what the stitched path must equal.
    """
    g, t = _validate_pair(guidance, target, model)
    cfg = model.config
    rf = model.receptive_field
    pad = rf // 2
    was_training = model.training
    model.eval()
    pg = np.pad(g, ((0, 0), (pad, pad), (pad, pad)))
    pt = np.pad(t, ((0, 0), (pad, pad), (pad, pad)))
    target_t = Tensor(t)
    h, w = t.shape[1:]
    out = np.empty((h, w), dtype=t.dtype)
    with no_grad():
        for py in range(h):
            for px in range(w):
                gpatch = Tensor(np.ascontiguousarray(pg[:, py : py + rf, px : px + rf]))
                tpatch = Tensor(np.ascontiguousarray(pt[:, py : py + rf, px : px + rf]))
                weights, offsets = model(gpatch, tpatch)
                centers = np.array([[py], [px]])
                wf, of = _flatten_maps(weights, offsets)
                field = KernelField(wf, of, centers, cfg.kernel_size, cfg.window)
                vals = apply_kernel_field(
                    target_t, field, residual=cfg.residual, border=cfg.border, check=check
                )
                out[py, px] = vals.data[0]
    model.train(was_training)
    return out[None]


def infer_single_pass(model: Fdkn, guidance, target, check: bool = True) -> InferenceResult:
    """Filter a whole image in one forward pass of the resampled network."""
    g, t = _validate_pair(guidance, target, model)
    cfg = model.config
    s = cfg.stride
    h, w = t.shape[1:]
    if h % s or w % s:
        raise ValueError(f"extents {h}x{w} not divisible by {s}; caller pads and crops")
    was_training = model.training
    model.eval()
    t0 = time.perf_counter()
    with no_grad():
        gr = pixel_unshuffle(Tensor(g), s)
        tr = pixel_unshuffle(Tensor(t), s)
        weights, offsets = model.kernel_field_maps(gr, tr)
        wf, of = _flatten_maps(weights, offsets)
        field = KernelField(wf, of, full_grid_centers(h, w), cfg.kernel_size, cfg.window)
        vals = apply_kernel_field(
            Tensor(t), field, residual=cfg.residual, border=cfg.border, check=check
        )
    model.train(was_training)
    return InferenceResult(
        vals.data.reshape(1, h, w).copy(),
        forward_passes=1,
        peak_field_pixels=h * w,
        seconds=time.perf_counter() - t0,
    )


def _pad_to_multiple(arr: np.ndarray, m: int) -> tuple[np.ndarray, int, int]:
    h, w = arr.shape[-2], arr.shape[-1]
    ph = (-h) % m
    pw = (-w) % m
    if ph == 0 and pw == 0:
        return arr, 0, 0
    width = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(arr, width, mode="reflect"), ph, pw


def infer(model, guidance, target, check: bool = True) -> InferenceResult:
    """Dispatch on the model type; reflect-pads extents to a multiple of the
    stride and crops back, flagging the padding in the result."""
    g, t = _validate_pair(guidance, target, model)
    s = model.config.stride
    gp, ph, pw = _pad_to_multiple(g, s)
    tp, _, _ = _pad_to_multiple(t, s)
    if isinstance(model, Fdkn):
        res = infer_single_pass(model, gp, tp, check=check)
    else:
        res = infer_shift_and_stitch(model, gp, tp, check=check)
    if ph or pw:
        h, w = t.shape[1:]
        res.output = res.output[:, :h, :w]
        res.padded = True
    return res


def make_filter_fn(model, check: bool = False):
    """Adapt a model to a plain (guidance, target) -> (1, H, W) callable."""

    def run(guidance, target):
        return infer(model, guidance, target, check=check).output

    return run
