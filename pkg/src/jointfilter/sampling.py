"""Differentiable fractional-position sampling.

The sampler interpolates an image at fractional (x, y) positions with the
separable tent kernel g(a, b) = max(0, 1 - |a - b|), i.e. classic bilinear
interpolation over the 4 integer corners. Both the image values and the
positions receive gradients, which is what lets sampling offsets be learned
end-to-end.

Conventions: positions are (x, y) with x horizontal (column) and y vertical
(row). The interpolant is piecewise bilinear with kinks at integer
coordinates; the position derivative at a kink is defined as 0.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, accumulate_grad, apply_op

__all__ = [
    "bilinear_weight",
    "gather_pixels",
    "offset_positions",
    "sample_bilinear",
    "sample_bilinear_grads",
    "tap_grid",
]


def bilinear_weight(a, b):
    """Tent weight max(0, 1 - |a - b|); scalar or elementwise on arrays."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(a) - np.asarray(b)))


def _image_plane(image: Tensor) -> np.ndarray:
    f = image.data
    if f.ndim == 3:
        if f.shape[0] != 1:
            raise ValueError(f"sampler expects a single-plane image, got shape {f.shape}")
        return f[0]
    if f.ndim != 2:
        raise ValueError(f"sampler expects an H x W or 1 x H x W image, got shape {f.shape}")
    return f


def _corners(f, xs, ys, mode):
    """Shared forward geometry: corner indices, weights, masks, gathered values."""
    h, w = f.shape
    if mode == "border":
        xc = np.clip(xs, 0.0, w - 1.0)
        yc = np.clip(ys, 0.0, h - 1.0)
    elif mode == "zero":
        xc, yc = xs, ys
    else:
        raise ValueError(f"unknown sampling mode {mode!r} (expected 'border' or 'zero')")
    x0 = np.floor(xc)
    y0 = np.floor(yc)
    wx = xc - x0
    wy = yc - y0
    x0i = x0.astype(np.intp)
    y0i = y0.astype(np.intp)
    x1i = x0i + 1
    y1i = y0i + 1

    def take(yi, xi):
        yv = np.clip(yi, 0, h - 1)
        xv = np.clip(xi, 0, w - 1)
        v = f[yv, xv]
        if mode == "zero":
            valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            v = v * valid
        return v, yv, xv

    v00, iy00, ix00 = take(y0i, x0i)
    v01, iy01, ix01 = take(y0i, x1i)
    v10, iy10, ix10 = take(y1i, x0i)
    v11, iy11, ix11 = take(y1i, x1i)
    corners = ((v00, iy00, ix00), (v01, iy01, ix01), (v10, iy10, ix10), (v11, iy11, ix11))
    clip_mask_x = xc == xs if mode == "border" else np.ones_like(wx, dtype=bool)
    clip_mask_y = yc == ys if mode == "border" else np.ones_like(wy, dtype=bool)
    if mode == "zero":
        # no value contribution at all once the whole cell is outside
        pass
    return corners, wx, wy, clip_mask_x, clip_mask_y


def sample_bilinear_grads(
    image: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    upstream: np.ndarray,
    mode: str = "border",
):
    """Gradients of the bilinear sample w.r.t. image and positions.

    Returns (grad_image, grad_xs, grad_ys). Upstream gradient is distributed
    to the 4 corners by their tent weights; position gradients follow the
    piecewise-linear derivative, zero at integer kinks and at positions
    pinned by the border clamp.
    """
    f = np.asarray(image)
    xs = np.asarray(xs, dtype=f.dtype)
    ys = np.asarray(ys, dtype=f.dtype)
    corners, wx, wy, mx, my = _corners(f, xs, ys, mode)
    (v00, iy00, ix00), (v01, iy01, ix01), (v10, iy10, ix10), (v11, iy11, ix11) = corners

    g = upstream
    grad_image = np.zeros_like(f)
    w00 = (1 - wy) * (1 - wx)
    w01 = (1 - wy) * wx
    w10 = wy * (1 - wx)
    w11 = wy * wx
    if mode == "zero":
        h, wdt = f.shape
        # drop scatter contributions for out-of-image corners
        def scatter(iy, ix, weight, raw_y, raw_x):
            valid = (raw_y >= 0) & (raw_y < h) & (raw_x >= 0) & (raw_x < wdt)
            np.add.at(grad_image, (iy, ix), g * weight * valid)

        x0i = np.floor(xs).astype(np.intp)
        y0i = np.floor(ys).astype(np.intp)
        scatter(iy00, ix00, w00, y0i, x0i)
        scatter(iy01, ix01, w01, y0i, x0i + 1)
        scatter(iy10, ix10, w10, y0i + 1, x0i)
        scatter(iy11, ix11, w11, y0i + 1, x0i + 1)
    else:
        np.add.at(grad_image, (iy00, ix00), g * w00)
        np.add.at(grad_image, (iy01, ix01), g * w01)
        np.add.at(grad_image, (iy10, ix10), g * w10)
        np.add.at(grad_image, (iy11, ix11), g * w11)

    dx = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
    dy = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
    grad_xs = g * dx * (wx != 0) * mx
    grad_ys = g * dy * (wy != 0) * my
    return grad_image, grad_xs, grad_ys


def sample_bilinear(image: Tensor, xs, ys, mode: str = "border") -> Tensor:
    """Sample an image at fractional positions; differentiable in all inputs.

    ``image`` is an H x W (or 1 x H x W) tensor; ``xs``/``ys`` are tensors or
    arrays of identical shape (scalars allowed). Out-of-image positions are
    border-clamped, or read as zero with ``mode='zero'``.
    """
    f = _image_plane(image)
    xs_t = xs if isinstance(xs, Tensor) else Tensor(np.asarray(xs, dtype=f.dtype))
    ys_t = ys if isinstance(ys, Tensor) else Tensor(np.asarray(ys, dtype=f.dtype))
    if xs_t.data.shape != ys_t.data.shape:
        raise ValueError(
            f"position shapes differ: xs {xs_t.data.shape} vs ys {ys_t.data.shape}"
        )
    xa = xs_t.data.astype(f.dtype, copy=False)
    ya = ys_t.data.astype(f.dtype, copy=False)
    corners, wx, wy, _, _ = _corners(f, xa, ya, mode)
    (v00, _, _), (v01, _, _), (v10, _, _), (v11, _, _) = corners
    val = (
        (1 - wy) * ((1 - wx) * v00 + wx * v01)
        + wy * ((1 - wx) * v10 + wx * v11)
    )

    def bwd(g):
        grad_image, grad_xs, grad_ys = sample_bilinear_grads(f, xa, ya, g, mode)
        if image.requires_grad:
            accumulate_grad(image, grad_image.reshape(image.data.shape))
        if xs_t.requires_grad:
            accumulate_grad(xs_t, grad_xs)
        if ys_t.requires_grad:
            accumulate_grad(ys_t, grad_ys)

    return apply_op(np.asarray(val), (image, xs_t, ys_t), bwd, "sample_bilinear")


def gather_pixels(image: Tensor, iys: np.ndarray, ixs: np.ndarray) -> Tensor:
    """Exact integer-position gather; differentiable w.r.t. the image."""
    f = _image_plane(image)
    iys = np.asarray(iys, dtype=np.intp)
    ixs = np.asarray(ixs, dtype=np.intp)
    val = f[iys, ixs]

    def bwd(g):
        if image.requires_grad:
            grad = np.zeros_like(f)
            np.add.at(grad, (iys, ixs), g)
            accumulate_grad(image, grad.reshape(image.data.shape))

    return apply_op(np.asarray(val), (image,), bwd, "gather_pixels")


def tap_grid(kernel_size: int) -> np.ndarray:
    """Integer base grid around a center pixel: (2, k^2) rows (dy, dx).

    Taps are row-major: tap t = (dy + r) * k + (dx + r) with r = (k-1)/2.
    """
    if kernel_size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")
    r = (kernel_size - 1) // 2
    dy, dx = np.meshgrid(
        np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij"
    )
    return np.stack([dy.reshape(-1), dx.reshape(-1)])


def offset_positions(
    centers: np.ndarray,
    offsets: Tensor | None,
    kernel_size: int,
    window: int,
):
    """Sampling positions s(q) = q + offset, clamped into the window.

    ``centers`` is (2, P) integer pixel coordinates (row 0 = y, row 1 = x);
    ``offsets`` is a (2*k^2, P) tensor, first k^2 rows the y displacements,
    last k^2 rows the x displacements (None means a regular grid). Every
    coordinate of s(q) is clamped to center +- (window-1)/2; the window must
    be odd and at least the kernel size.
    """
    from .tensor import add as t_add
    from .tensor import clamp as t_clamp

    k2 = kernel_size * kernel_size
    if window % 2 != 1:
        raise ValueError(f"window must be odd, got {window}")
    if window < kernel_size:
        raise ValueError(f"window {window} smaller than kernel {kernel_size}")
    grid = tap_grid(kernel_size)
    base_y = centers[0][None, :] + grid[0][:, None]  # (k^2, P)
    base_x = centers[1][None, :] + grid[1][:, None]
    half = (window - 1) // 2
    lo_y = centers[0][None, :] - half
    hi_y = centers[0][None, :] + half
    lo_x = centers[1][None, :] - half
    hi_x = centers[1][None, :] + half
    if offsets is None:
        ys = Tensor(np.clip(base_y, lo_y, hi_y))
        xs = Tensor(np.clip(base_x, lo_x, hi_x))
        return xs, ys
    if offsets.data.shape[0] != 2 * k2:
        raise ValueError(
            f"offsets must have {2 * k2} rows for k={kernel_size}, got {offsets.data.shape[0]}"
        )
    off_y = offsets[:k2]
    off_x = offsets[k2:]
    ys = t_clamp(t_add(off_y, base_y.astype(offsets.data.dtype)), lo_y, hi_y)
    xs = t_clamp(t_add(off_x, base_x.astype(offsets.data.dtype)), lo_x, hi_x)
    return xs, ys
