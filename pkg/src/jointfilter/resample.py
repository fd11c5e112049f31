"""Stride-r resampling between spatial and channel dimensions, plus the
shift/stitch primitives used by strided full-image inference.

Sub-pixel channel ordering is row-major (dy outer, dx inner) and is fixed
here once; the fast network's head recomposition imports it from this module.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, reshape, transpose

__all__ = [
    "pixel_shuffle",
    "pixel_unshuffle",
    "shift_image",
    "split_stride_grid",
    "stitch_outputs",
]


def pixel_unshuffle(image: Tensor, r: int) -> Tensor:
    """(C, H, W) -> (r^2*C, H/r, W/r); channel (c, dy, dx) maps to c*r^2 + dy*r + dx."""
    c, h, w = image.data.shape
    if h % r or w % r:
        raise ValueError(f"extents {h}x{w} not divisible by stride {r}")
    if r == 1:
        return image
    x = reshape(image, (c, h // r, r, w // r, r))
    x = transpose(x, (0, 2, 4, 1, 3))
    return reshape(x, (c * r * r, h // r, w // r))


def pixel_shuffle(image: Tensor, r: int) -> Tensor:
    """(r^2*C, H, W) -> (C, r*H, r*W); exact inverse of :func:`pixel_unshuffle`."""
    cr2, h, w = image.data.shape
    if cr2 % (r * r):
        raise ValueError(f"channel count {cr2} not divisible by r^2 = {r * r}")
    if r == 1:
        return image
    c = cr2 // (r * r)
    x = reshape(image, (c, r, r, h, w))
    x = transpose(x, (0, 3, 1, 4, 2))
    return reshape(x, (c, h * r, w * r))


def shift_image(image: np.ndarray, x: int, y: int, fill: str = "edge") -> np.ndarray:
    """Translate x pixels left and y pixels up; vacated border is edge-clamped
    (or zero-filled with ``fill='zero'``)."""
    img = np.asarray(image)
    h, w = img.shape[-2], img.shape[-1]
    iy = np.arange(h) + y
    ix = np.arange(w) + x
    if fill == "edge":
        iy = np.clip(iy, 0, h - 1)
        ix = np.clip(ix, 0, w - 1)
        return img[..., iy[:, None], ix[None, :]]
    if fill == "zero":
        out = np.zeros_like(img)
        if y < h and x < w:
            out[..., : h - y, : w - x] = img[..., y:, x:]
        return out
    raise ValueError(f"unknown fill {fill!r}")


def split_stride_grid(image: np.ndarray, stride: int = 4) -> dict:
    """Decompose an image into stride^2 phase buffers; inverse of stitching."""
    img = np.asarray(image)
    h, w = img.shape[-2], img.shape[-1]
    if h % stride or w % stride:
        raise ValueError(f"extents {h}x{w} not divisible by stride {stride}")
    return {
        (x, y): img[..., y::stride, x::stride].copy()
        for y in range(stride)
        for x in range(stride)
    }


def stitch_outputs(buffers: dict, stride: int = 4) -> np.ndarray:
    """Interleave per-shift buffers: buffer (x, y) fills pixels = (y, x) mod stride.

    ``buffers`` maps (x, y) with 0 <= x, y < stride to equally-shaped arrays.
    """
    missing = [
        (x, y)
        for y in range(stride)
        for x in range(stride)
        if (x, y) not in buffers
    ]
    if missing:
        raise ValueError(f"missing stitch buffers for shifts {missing}")
    b00 = np.asarray(buffers[(0, 0)])
    hb, wb = b00.shape[-2], b00.shape[-1]
    out = np.empty(b00.shape[:-2] + (hb * stride, wb * stride), dtype=b00.dtype)
    for (x, y), buf in buffers.items():
        buf = np.asarray(buf)
        if buf.shape != b00.shape:
            raise ValueError(
                f"stitch buffer {(x, y)} has shape {buf.shape}, expected {b00.shape}"
            )
        out[..., y::stride, x::stride] = buf
    return out
