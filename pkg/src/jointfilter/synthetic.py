"""Synthetic RGB-D scenes for desk-scale training, plus training-pair assembly.

Each scene is piecewise-constant depth built from random ellipses and convex
polygons. Every depth region gets its own flat RGB color with a guaranteed
channel gap to the colors it can touch, so depth discontinuities are always
RGB edges; low-amplitude RGB-only gratings are then added so the guidance
carries texture edges that must NOT leak into the filtered depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import add_gaussian_noise, bicubic_resize, nearest_downsample_rb

__all__ = [
    "SamplePair",
    "make_synthetic_dataset",
    "make_training_pair",
    "read_manifest",
    "write_manifest",
]

PROTOCOLS = ("bicubic", "nearest_rb")

# region colors stay inside [COLOR_MARGIN, 1-COLOR_MARGIN] and pairwise
# differ by >= COLOR_GAP in some channel; textures stay below COLOR_GAP/2
# so region boundaries remain RGB edges after texturing
COLOR_MARGIN = 0.15
COLOR_GAP = 0.15
TEXTURE_AMPLITUDE = 0.05


@dataclass
class SamplePair:
    """One training/eval record: guidance, degraded-upsampled target, truth."""

    guidance: np.ndarray  # (3, H, W) in [0, 1]
    target: np.ndarray  # (1, H, W), degraded and upsampled back to H x W
    ground_truth: np.ndarray  # (1, H, W)
    protocol: str = "bicubic"
    scale: int = 1
    noise_var: float = 0.0
    name: str = ""


def _distinct_color(rng: np.random.Generator, existing: list) -> np.ndarray:
    lo, hi = COLOR_MARGIN, 1.0 - COLOR_MARGIN
    for _ in range(200):
        c = rng.uniform(lo, hi, size=3)
        if all(np.max(np.abs(c - e)) >= COLOR_GAP for e in existing):
            return c
    # dense palette fallback: snap to a coarse lattice cell not yet taken
    grid = np.linspace(lo, hi, 5)
    for r in grid:
        for g in grid:
            for b in grid:
                c = np.array([r, g, b])
                if all(np.max(np.abs(c - e)) >= COLOR_GAP for e in existing):
                    return c
    raise RuntimeError("could not find a distinct region color")


def _ellipse_mask(xx, yy, rng, size):
    cx, cy = rng.uniform(0.1 * size, 0.9 * size, size=2)
    rx, ry = rng.uniform(0.12 * size, 0.4 * size, size=2)
    theta = rng.uniform(0, np.pi)
    xr = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
    yr = -(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta)
    return (xr / rx) ** 2 + (yr / ry) ** 2 <= 1.0


def _polygon_mask(xx, yy, rng, size):
    # convex polygon: 3-5 vertices around a center, sorted by angle
    n = int(rng.integers(3, 6))
    cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
    radii = rng.uniform(0.15 * size, 0.45 * size, size=n)
    vx = cx + radii * np.cos(angles)
    vy = cy + radii * np.sin(angles)
    mask = np.ones_like(xx, dtype=bool)
    for i in range(n):
        x0, y0 = vx[i], vy[i]
        x1, y1 = vx[(i + 1) % n], vy[(i + 1) % n]
        # vertices are counter-clockwise, interior is left of each edge
        mask &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return mask


def _texture_field(xx, yy, rng, amplitude):
    # frequency cap keeps the worst-case per-pixel texture delta below
    # COLOR_GAP so region boundaries stay RGB edges after texturing
    fx, fy = rng.uniform(0.3, 1.0, size=2)  # periods roughly 6..20 px
    phase = rng.uniform(0, 2 * np.pi)
    return amplitude * np.sin(fx * xx + fy * yy + phase)


def make_scene(size: int, rng: np.random.Generator):
    """One aligned (rgb, depth) pair; depth edges are a subset of RGB edges."""
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    colors = [_distinct_color(rng, [])]
    depth = np.full((size, size), rng.uniform(0.05, 0.95))
    rgb = np.empty((3, size, size))
    rgb[:] = colors[0][:, None, None]
    n_shapes = int(rng.integers(3, 7))
    for _ in range(n_shapes):
        mask = (_ellipse_mask if rng.random() < 0.5 else _polygon_mask)(xx, yy, rng, size)
        if not mask.any():
            continue
        color = _distinct_color(rng, colors)
        colors.append(color)
        depth[mask] = rng.uniform(0.05, 0.95)
        for c in range(3):
            rgb[c][mask] = color[c]
    # guidance-only structure: global gratings never touch the depth plane
    n_tex = int(rng.integers(1, 4))
    for _ in range(n_tex):
        tex = _texture_field(xx, yy, rng, TEXTURE_AMPLITUDE / n_tex)
        rgb += tex[None] * rng.uniform(0.3, 1.0, size=3)[:, None, None]
    return rgb.astype(np.float32), depth[None].astype(np.float32)


def make_synthetic_dataset(n: int, size: int, seed: int) -> list:
    """Deterministic list of (rgb, depth) scenes; scene i depends only on (seed, i)."""
    scenes = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        scenes.append(make_scene(size, rng))
    return scenes


def make_training_pair(
    rgb: np.ndarray,
    depth: np.ndarray,
    protocol: str = "bicubic",
    scale: int = 4,
    noise_var: float = 0.0,
    seed: int = 0,
    name: str = "",
) -> SamplePair:
    """Degrade a clean scene: downsample, optionally add noise at low
    resolution, and bicubic-upsample the target back to full resolution."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim == 2:
        depth = depth[None]
    h, w = depth.shape[1:]
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if h % scale or w % scale:
        raise ValueError(f"extents {h}x{w} not divisible by scale {scale}")
    if scale == 1:
        low = depth.copy()
    elif protocol == "bicubic":
        low = bicubic_resize(depth, h // scale, w // scale)
    else:
        low = nearest_downsample_rb(depth, scale)
    if noise_var > 0:
        # noise clamps to [0, 1]: the noisy protocol operates on normalized depth
        low = add_gaussian_noise(low, noise_var, seed)
    target = low if scale == 1 else bicubic_resize(low, h, w)
    return SamplePair(
        guidance=np.asarray(rgb, dtype=np.float32),
        target=target.astype(np.float32),
        ground_truth=depth,
        protocol=protocol,
        scale=scale,
        noise_var=noise_var,
        name=name,
    )


def write_manifest(path, records: list[dict]):
    """Plain-text index, one key=value record per line."""
    with open(path, "w") as f:
        for rec in records:
            f.write(" ".join(f"{k}={v}" for k, v in rec.items()) + "\n")


def read_manifest(path) -> list[dict]:
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rec = {}
            for field in line.split():
                if "=" not in field:
                    raise ValueError(f"{path}:{lineno}: malformed field {field!r}")
                k, v = field.split("=", 1)
                rec[k] = v
            records.append(rec)
    return records
