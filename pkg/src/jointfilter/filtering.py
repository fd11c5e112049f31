"""Explicit weighted-average filtering from per-pixel kernel fields.

A kernel field carries, for every covered output pixel, k^2 kernel weights
and optionally 2*k^2 fractional sampling offsets. The residual form adds the
weighted average back onto the target (zero-sum kernels, high-pass behaviour);
the plain form is a convex combination (weights normalized to sum 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampling import gather_pixels, offset_positions, sample_bilinear
from .tensor import Tensor, mul, tsum

__all__ = [
    "ConstraintError",
    "KernelField",
    "apply_kernel_field",
    "full_grid_centers",
    "iterative_filter",
    "weighted_average_plain",
    "weighted_average_residual",
]

CONSTRAINT_TOL = 1e-4


class ConstraintError(ValueError):
    """Kernel weights violate their normalization constraint."""


@dataclass
class KernelField:
    """Per-pixel kernel weights and sampling offsets.

    weights: (k^2, P) tensor; offsets: (2*k^2, P) tensor or None for a
    regular grid; centers: (2, P) integer pixel coordinates (y row 0, x
    row 1) of the covered output pixels.
    """

    weights: Tensor
    offsets: Tensor | None
    centers: np.ndarray
    kernel_size: int
    window: int

    def __post_init__(self):
        k2 = self.kernel_size * self.kernel_size
        if self.weights.data.shape[0] != k2:
            raise ValueError(
                f"weights must have {k2} rows for k={self.kernel_size}, "
                f"got {self.weights.data.shape[0]}"
            )
        if self.centers.shape != (2, self.weights.data.shape[1]):
            raise ValueError(
                f"centers shape {self.centers.shape} does not cover "
                f"{self.weights.data.shape[1]} pixels"
            )


def check_weight_constraint(weights: np.ndarray, residual: bool, tol: float = CONSTRAINT_TOL):
    """Validate the per-pixel weight sums (0 for residual, 1 for plain)."""
    sums = weights.sum(axis=0)
    if residual:
        worst = float(np.abs(sums).max()) if sums.size else 0.0
        if worst > tol:
            raise ConstraintError(
                f"residual kernel weights must sum to 0 per pixel; worst |sum| = {worst:.3e} "
                "(broken mean-subtraction in the weight regression head?)"
            )
    else:
        worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if worst > tol:
            raise ConstraintError(
                f"plain kernel weights must sum to 1 per pixel; worst |sum-1| = {worst:.3e} "
                "(broken L1 normalization in the weight regression head?)"
            )


def apply_kernel_field(
    target: Tensor,
    field: KernelField,
    residual: bool = True,
    border: str = "border",
    check: bool = True,
) -> Tensor:
    """Filter the covered pixels; returns a (P,) tensor of output values.

    target is the 1 x H x W (or H x W) plane being filtered; sampling reads
    it at s(q) = q + offset, window-clamped around each center and
    border-handled at the image boundary.
    """
    if check:
        check_weight_constraint(field.weights.data, residual)
    xs, ys = offset_positions(
        field.centers, field.offsets, field.kernel_size, field.window
    )
    # integer positions (offsets None) interpolate exactly, so one code path
    samples = sample_bilinear(target, xs, ys, mode=border)
    out = tsum(mul(field.weights, samples), axis=0)
    if residual:
        out = out + gather_pixels(target, field.centers[0], field.centers[1])
    return out


def full_grid_centers(h: int, w: int) -> np.ndarray:
    """Row-major (2, H*W) integer coordinates covering every pixel."""
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([ys.reshape(-1), xs.reshape(-1)])


def _full_image(target: Tensor, field: KernelField, residual: bool, border: str) -> Tensor:
    shape = target.data.shape
    h, w = shape[-2], shape[-1]
    if field.centers.shape[1] != h * w:
        raise ValueError(
            f"field covers {field.centers.shape[1]} pixels but image has {h * w}"
        )
    vals = apply_kernel_field(target, field, residual=residual, border=border)
    from .tensor import reshape

    return reshape(vals, (1, h, w))


def weighted_average_residual(target: Tensor, field: KernelField, border: str = "border") -> Tensor:
    """Residual filter over a whole image: target + per-pixel kernel dot samples."""
    return _full_image(target, field, residual=True, border=border)


def weighted_average_plain(target: Tensor, field: KernelField, border: str = "border") -> Tensor:
    """Plain weighted-average filter over a whole image (weights sum to 1)."""
    return _full_image(target, field, residual=False, border=border)


def iterative_filter(image: np.ndarray, filter_fn, iterations: int) -> np.ndarray:
    """Self-guided repeated filtering (texture removal mode).

    Each channel is filtered independently with itself as both guidance and
    target; the single channel is replicated to the 3 guidance planes. The
    output of each pass feeds the next.
    """
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    img = np.asarray(image, dtype=np.float32)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    out = img.copy()
    for _ in range(iterations):
        planes = []
        for c in range(out.shape[0]):
            plane = out[c : c + 1]
            guidance = np.repeat(plane, 3, axis=0)
            planes.append(np.asarray(filter_fn(guidance, plane)).reshape(plane.shape))
        out = np.concatenate(planes, axis=0)
    return out[0] if squeeze else out
