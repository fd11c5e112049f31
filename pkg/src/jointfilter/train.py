"""Training: summed L1 loss, Adam with step-decay schedule, batch size 1.

Runs are bitwise deterministic under a fixed seed: model init, pair order and
crop positions all come from generators derived from the seed, and every
reduction happens in a fixed order. No weight decay, dropout or augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filtering import KernelField, apply_kernel_field
from .inference import _flatten_maps
from .networks import Dkn, DknConfig, Fdkn, build_model
from .resample import pixel_unshuffle
from .tensor import NonFiniteError, Parameter, Tensor, abs_, sub, tsum

__all__ = [
    "Adam",
    "DivergenceError",
    "TrainConfig",
    "TrainResult",
    "l1_loss",
    "learning_rate",
    "train",
]


class DivergenceError(RuntimeError):
    """Loss went non-finite; carries the last good parameter snapshot."""

    def __init__(self, message: str, iteration: int, snapshot: dict):
        super().__init__(message)
        self.iteration = iteration
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    iterations: int = 2000
    lr: float = 1e-3
    lr_decay_every: int | None = None  # None: iterations // 4
    lr_decay_factor: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    crop_size: int | None = None  # None: receptive field + 12 (dkn) / 64 (fdkn)
    log_every: int = 100
    snapshot_every: int = 200

    def validate(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        return self

    def decay_every(self) -> int:
        if self.lr_decay_every is not None:
            return self.lr_decay_every
        return max(1, self.iterations // 4)


@dataclass
class TrainResult:
    model: object
    loss_log: list = field(default_factory=list)  # (iteration, loss)
    config: TrainConfig | None = None


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    """lr after n decay boundaries is exactly lr / factor**n."""
    n = iteration // cfg.decay_every()
    return cfg.lr / cfg.lr_decay_factor**n


def l1_loss(pred: Tensor, gt) -> Tensor:
    """Sum of absolute differences; subgradient at zero is zero."""
    gt_t = gt if isinstance(gt, Tensor) else Tensor(np.asarray(gt, dtype=pred.data.dtype))
    if pred.data.shape != gt_t.data.shape:
        raise ValueError(
            f"l1_loss: prediction shape {pred.data.shape} does not match "
            f"ground truth {gt_t.data.shape}"
        )
    return tsum(abs_(sub(pred, gt_t)))


class Adam:
    """Bias-corrected first/second-moment optimizer (beta1/beta2/eps)."""

    def __init__(self, params: list[Parameter], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else 0.0
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _grid_centers(start: int, stride: int, h: int, w: int) -> np.ndarray:
    cy, cx = np.meshgrid(
        start + stride * np.arange(h), start + stride * np.arange(w), indexing="ij"
    )
    return np.stack([cy.reshape(-1), cx.reshape(-1)])


def _dkn_step(model: Dkn, pair, crop: int, rng: np.random.Generator) -> Tensor:
    """One crop, one loss. Crops are windows of the zero-padded frame, so
    boundary pixels train on the padding context full-image inference gives
    them; the weighted average samples the full-resolution target at absolute
    coordinates, exactly as inference does."""
    cfg = model.config
    h, w = pair.ground_truth.shape[1:]
    pad = model.receptive_field // 2
    top = int(rng.integers(0, h + 2 * pad - crop + 1))
    left = int(rng.integers(0, w + 2 * pad - crop + 1))
    pg = np.pad(pair.guidance, ((0, 0), (pad, pad), (pad, pad)))
    pt = np.pad(pair.target, ((0, 0), (pad, pad), (pad, pad)))
    g = Tensor(np.ascontiguousarray(pg[:, top : top + crop, left : left + crop]))
    t = Tensor(np.ascontiguousarray(pt[:, top : top + crop, left : left + crop]))
    weights, offsets = model(g, t)
    gh, gw = weights.data.shape[1:]
    # crop-grid center c maps to image pixel (anchor + stride*t)
    centers = _grid_centers(0, cfg.stride, gh, gw)
    centers = centers + np.array([[top], [left]])
    keep = (centers[0] < h) & (centers[1] < w)
    centers = centers[:, keep]
    wf, of = _flatten_maps(weights, offsets)
    wf = wf[:, keep]
    of = of[:, keep] if of is not None else None
    fieldk = KernelField(wf, of, centers, cfg.kernel_size, cfg.window)
    target_plane = Tensor(pair.target)
    vals = apply_kernel_field(target_plane, fieldk, residual=cfg.residual, border=cfg.border)
    gt_vals = pair.ground_truth[0, centers[0], centers[1]]
    return l1_loss(vals, gt_vals)


def _fdkn_step(model: Fdkn, pair, crop: int, rng: np.random.Generator) -> Tensor:
    """One stride-aligned window of the zero-padded frame, one loss.

    The window carries its own context (no internal padding), so interior
    windows train on real surroundings and border windows on the same zero
    band full-image inference feeds them; the weighted average samples the
    full-resolution target at absolute coordinates, as at inference.
    """
    cfg = model.config
    s = cfg.stride
    h, w = pair.ground_truth.shape[1:]
    pad = (model.receptive_field // 2) * s
    ph, pw = h + 2 * pad, w + 2 * pad
    crop = min(crop, ph - ph % s, pw - pw % s)
    top = s * int(rng.integers(0, (ph - crop) // s + 1))
    left = s * int(rng.integers(0, (pw - crop) // s + 1))
    pg = np.pad(pair.guidance, ((0, 0), (pad, pad), (pad, pad)))
    pt = np.pad(pair.target, ((0, 0), (pad, pad), (pad, pad)))
    g = Tensor(np.ascontiguousarray(pg[:, top : top + crop, left : left + crop]))
    t = Tensor(np.ascontiguousarray(pt[:, top : top + crop, left : left + crop]))
    gr = pixel_unshuffle(g, s)
    tr = pixel_unshuffle(t, s)
    weights, offsets = model.kernel_field_maps(gr, tr, pad_input=False)
    span_h, span_w = weights.data.shape[1:]  # crop - 2*pad per side
    centers = _grid_centers(0, 1, span_h, span_w)
    centers = centers + np.array([[top], [left]])  # window interior -> image coords
    keep = (centers[0] < h) & (centers[1] < w)
    wf, of = _flatten_maps(weights, offsets)
    if not keep.all():
        centers = centers[:, keep]
        wf = wf[:, keep]
        of = of[:, keep] if of is not None else None
    fieldk = KernelField(wf, of, centers, cfg.kernel_size, cfg.window)
    target_plane = Tensor(pair.target)
    vals = apply_kernel_field(target_plane, fieldk, residual=cfg.residual, border=cfg.border)
    gt_vals = pair.ground_truth[0, centers[0], centers[1]]
    return l1_loss(vals, gt_vals)


def _snapshot(model) -> dict:
    state = {name: p.data.copy() for name, p in model.named_parameters()}
    state.update({name: b.copy() for name, b in model.named_buffers()})
    return state


def restore_snapshot(model, state: dict):
    for name, p in model.named_parameters():
        p.data[...] = state[name]
    for name, b in model.named_buffers():
        b[...] = state[name]


def _default_crop(model, pairs) -> int:
    extent = min(min(p.ground_truth.shape[1:]) for p in pairs)
    if isinstance(model, Fdkn):
        # windows of the padded frame; 112 supervises a 64x64 block per step
        s = model.config.stride
        frame = extent + 2 * (model.receptive_field // 2) * s
        crop = min(112, frame - frame % s)
        if extent < s:
            raise ValueError(f"dataset images too small to crop (extent {extent})")
        return crop
    rf = model.receptive_field
    if extent < rf:
        raise ValueError(
            f"dataset images ({extent} px) smaller than one receptive field ({rf} px)"
        )
    # margin of 44 supervises a 12x12 stride-4 grid per crop on 96px images
    return min(rf + 44, extent)


def train(
    model_config: DknConfig,
    pairs: list,
    cfg: TrainConfig | None = None,
    progress=None,
) -> TrainResult:
    """Train a fresh model on SamplePairs; deterministic under cfg.seed."""
    cfg = (cfg or TrainConfig()).validate()
    if not pairs:
        raise ValueError("training requires a non-empty dataset")
    model = build_model(model_config, seed=cfg.seed)
    model.train()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xDA7A)))
    adam = Adam(model.parameters(), cfg.beta1, cfg.beta2, cfg.eps)
    step = _fdkn_step if isinstance(model, Fdkn) else _dkn_step
    crop = cfg.crop_size or _default_crop(model, pairs)
    if isinstance(model, Fdkn) and crop % model.config.stride:
        raise ValueError(f"crop size {crop} not divisible by stride {model.config.stride}")

    result = TrainResult(model=model, config=cfg)
    good = _snapshot(model)
    for it in range(cfg.iterations):
        pair = pairs[int(rng.integers(len(pairs)))]
        try:
            loss = step(model, pair, crop, rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteError("loss is non-finite")
            loss.backward()
            adam.step(learning_rate(cfg, it))
        except NonFiniteError as err:
            raise DivergenceError(
                f"training diverged at iteration {it}: {err}", it, good
            ) from err
        model.zero_grad()
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            result.loss_log.append((it, value))
            if progress is not None:
                progress(it, value)
        if it % cfg.snapshot_every == 0:
            good = _snapshot(model)
    model.eval()
    return result
