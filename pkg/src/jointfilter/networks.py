"""Two-stream kernel-prediction networks (DKN and its fast variant FDKN).

Both architectures extract features from the guidance and target images with
separate convolutional towers, then regress per-pixel kernel weights (sigmoid
per stream, elementwise product, then mean subtraction or L1 normalization)
and raw sampling offsets (no activation). DKN reaches a 51x51 receptive field
through two stride-2 layers and therefore predicts on a stride-4 grid; FDKN
works on pixel-unshuffled (stride-4 resampled) inputs and predicts kernels
for all pixels in one pass, recomposing head channels with pixel_shuffle.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .resample import pixel_shuffle
from .tensor import (
    Parameter,
    RunningStats,
    Tensor,
    batch_norm,
    center_taps,
    conv2d,
    default_dtype,
    mul,
    normalize_taps,
    pad2d,
    relu,
    reshape,
    sigmoid,
)

__all__ = [
    "BatchNorm2d",
    "Conv2d",
    "Dkn",
    "DknConfig",
    "FdknConfig",
    "FeatureTower",
    "Fdkn",
    "Module",
    "build_model",
    "parameter_breakdown",
    "receptive_field",
    "shape_chain",
]

STREAM_CHOICES = ("both", "guidance", "target")

# Kaiming scale-down for the regression heads. Offsets must start near the
# regular grid (taps pinned at the clamp boundary get no gradient); weight
# heads must start in the sigmoid's linear zone or taps saturate shut early
# in training and never recover.
OFFSET_HEAD_INIT_SCALE = 0.1
WEIGHT_HEAD_INIT_SCALE = 0.1


# ---------------------------------------------------------------------------
# Minimal module system
# ---------------------------------------------------------------------------


class Module:
    """Parameter/buffer container with recursive traversal and train/eval mode."""

    def __init__(self):
        self.training = True

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                full = f"{prefix}{name}"
                value.name = full
                yield full, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, RunningStats):
                yield f"{prefix}{name}.mean", value.mean
                yield f"{prefix}{name}.var", value.var
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, init_scale: float = 1.0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            init_scale
            * _kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel)
        )
        self.bias = Parameter(np.zeros(out_ch, dtype=default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=default_dtype()))
        self.beta = Parameter(np.zeros(channels, dtype=default_dtype()))
        self.stats = RunningStats(channels)

    def __call__(self, x: Tensor) -> Tensor:
        return batch_norm(
            x, self.gamma, self.beta, self.stats,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DknConfig:
    """Configuration for the strided (shift-and-stitch) network.

    channels follow the seven feature-extraction layers; the two stride-2
    layers sit at indices 1 and 3. constraint is tied to the residual switch:
    mean subtraction with the residual connection, L1 normalization without.
    """

    kernel_size: int = 3
    window: int = 15
    residual: bool = True
    channels: tuple[int, ...] = (32, 32, 64, 64, 128, 128, 128)
    streams: str = "both"
    learn_offsets: bool = True
    border: str = "border"
    guidance_channels: int = 3
    target_channels: int = 1

    arch = "dkn"
    stride = 4

    @property
    def constraint(self) -> str:
        return "mean_subtract" if self.residual else "l1_normalize"

    def validate(self):
        if self.kernel_size % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if self.window % 2 != 1 or self.window < self.kernel_size:
            raise ValueError(
                f"window must be odd and >= kernel size, got {self.window}"
            )
        if self.streams not in STREAM_CHOICES:
            raise ValueError(f"streams must be one of {STREAM_CHOICES}, got {self.streams!r}")
        if len(self.channels) != len(self.layer_plan()):
            raise ValueError(
                f"expected {len(self.layer_plan())} channel counts, got {len(self.channels)}"
            )
        return self

    def layer_plan(self) -> list[tuple]:
        """(kind, kernel, stride, batchnorm) per feature-extraction layer."""
        return [
            ("conv", 7, 1, True),
            ("down", 2, 2, False),
            ("conv", 5, 1, True),
            ("down", 2, 2, False),
            ("conv", 5, 1, True),
            ("conv", 3, 1, False),
            ("conv", 3, 1, False),
        ]

    def head_multiplier(self) -> int:
        return 1

    def to_dict(self) -> dict:
        return {
            "type": self.arch,
            "kernel_size": self.kernel_size,
            "window": self.window,
            "residual": self.residual,
            "channels": list(self.channels),
            "streams": self.streams,
            "learn_offsets": self.learn_offsets,
            "border": self.border,
            "guidance_channels": self.guidance_channels,
            "target_channels": self.target_channels,
        }

    @classmethod
    def from_dict(cls, d: dict):
        d = {k: v for k, v in d.items() if k != "type"}
        d["channels"] = tuple(d.get("channels", cls.channels))
        return cls(**d)


@dataclass(frozen=True)
class FdknConfig(DknConfig):
    """Configuration for the single-pass resampled network.

    Six 3x3 layers on stride-4 resampled inputs; heads are 16x wider so one
    resampled position carries the kernels of its 16 sub-pixels.
    """

    channels: tuple[int, ...] = (32, 32, 64, 64, 128, 128)

    arch = "fdkn"

    def layer_plan(self) -> list[tuple]:
        return [
            ("conv", 3, 1, True),
            ("conv", 3, 1, False),
            ("conv", 3, 1, True),
            ("conv", 3, 1, False),
            ("conv", 3, 1, True),
            ("conv", 3, 1, False),
        ]

    def head_multiplier(self) -> int:
        return self.stride * self.stride


def shape_chain(plan, input_extent: int) -> list[int]:
    """Spatial extents after each layer of a plan, starting from the input."""
    extents = [input_extent]
    e = input_extent
    for _, k, s, _ in plan:
        if e < k:
            raise ValueError(
                f"extent {e} too small for kernel {k} at layer {len(extents)}"
            )
        e = (e - k) // s + 1
        extents.append(e)
    return extents


def receptive_field(config: DknConfig) -> int:
    """Smallest odd input size the feature stack maps to exactly 1x1.

    Odd so the patch has a center pixel; computed by running the layer
    arithmetic, not hard-coded.
    """
    plan = config.layer_plan()
    n = 1
    while n < 4096:
        try:
            if shape_chain(plan, n)[-1] == 1:
                return n
        except ValueError:
            pass
        n += 2
    raise ValueError("no receptive field below 4096; layer plan looks wrong")


# ---------------------------------------------------------------------------
# Feature towers and the two models
# ---------------------------------------------------------------------------


class FeatureTower(Module):
    """Stack of conv(-BN)-ReLU layers per the architecture plan."""

    def __init__(self, in_channels: int, config: DknConfig, rng: np.random.Generator):
        super().__init__()
        self.layers = []
        self.norms = []
        ch = in_channels
        for (kind, k, s, bn), out_ch in zip(config.layer_plan(), config.channels):
            self.layers.append(Conv2d(ch, out_ch, k, rng, stride=s))
            self.norms.append(BatchNorm2d(out_ch) if bn else None)
            ch = out_ch
        self.out_channels = ch

    def _children(self):
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}", layer
        for i, norm in enumerate(self.norms):
            if norm is not None:
                yield f"norms.{i}", norm

    def __call__(self, x: Tensor) -> Tensor:
        for layer, norm in zip(self.layers, self.norms):
            x = layer(x)
            if norm is not None:
                x = norm(x)
            x = relu(x)
        return x


class _TwoStreamKernelNet(Module):
    """Shared two-stream structure: towers plus weight/offset heads."""

    def __init__(self, config: DknConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        self.seed = seed
        k2 = config.kernel_size ** 2
        mult = config.head_multiplier()
        g_in = config.guidance_channels * mult
        t_in = config.target_channels * mult
        feat = config.channels[-1]

        self.guidance_tower = (
            FeatureTower(g_in, config, rng) if config.streams in ("both", "guidance") else None
        )
        self.target_tower = (
            FeatureTower(t_in, config, rng) if config.streams in ("both", "target") else None
        )
        osc = OFFSET_HEAD_INIT_SCALE
        wsc = WEIGHT_HEAD_INIT_SCALE
        if self.guidance_tower is not None:
            self.weight_head_g = Conv2d(feat, k2 * mult, 1, rng, init_scale=wsc)
            self.offset_head_g = (
                Conv2d(feat, 2 * k2 * mult, 1, rng, init_scale=osc)
                if config.learn_offsets
                else None
            )
        else:
            self.weight_head_g = None
            self.offset_head_g = None
        if self.target_tower is not None:
            self.weight_head_t = Conv2d(feat, k2 * mult, 1, rng, init_scale=wsc)
            self.offset_head_t = (
                Conv2d(feat, 2 * k2 * mult, 1, rng, init_scale=osc)
                if config.learn_offsets
                else None
            )
        else:
            self.weight_head_t = None
            self.offset_head_t = None

    def _children(self):
        for name in (
            "guidance_tower",
            "target_tower",
            "weight_head_g",
            "weight_head_t",
            "offset_head_g",
            "offset_head_t",
        ):
            child = getattr(self, name)
            if child is not None:
                yield name, child

    def _constrain(self, w: Tensor) -> Tensor:
        """Apply the weight constraint over the tap axis, per pixel.

        Head output is (mult*k^2, h, w) with tap-major channel layout; the
        constraint groups each pixel's k^2 taps.
        """
        mult = self.config.head_multiplier()
        k2 = self.config.kernel_size ** 2
        shape = w.data.shape
        if mult > 1:
            w = reshape(w, (k2, mult) + shape[1:])
        w = center_taps(w) if self.config.residual else normalize_taps(w)
        if mult > 1:
            w = reshape(w, shape)
        return w

    def forward(self, guidance: Tensor | None, target: Tensor | None):
        """Head maps for (possibly strided) positions: weights and offsets.

        Returns (weights, offsets) with shapes (mult*k^2, h', w') and
        (2*mult*k^2, h', w'); offsets is None when offset learning is off.
        A disabled stream contributes the multiplicative identity.
        """
        feats = []
        if self.guidance_tower is not None:
            if guidance is None:
                raise ValueError("model has a guidance stream but guidance is None")
            feats.append(("g", self.guidance_tower(guidance)))
        if self.target_tower is not None:
            if target is None:
                raise ValueError("model has a target stream but target is None")
            feats.append(("t", self.target_tower(target)))

        w = None
        for which, f in feats:
            head = self.weight_head_g if which == "g" else self.weight_head_t
            part = sigmoid(head(f))
            w = part if w is None else mul(w, part)
        weights = self._constrain(w)

        offsets = None
        if self.config.learn_offsets:
            for which, f in feats:
                head = self.offset_head_g if which == "g" else self.offset_head_t
                part = head(f)
                offsets = part if offsets is None else mul(offsets, part)
        return weights, offsets

    def __call__(self, guidance, target):
        return self.forward(guidance, target)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.config)


class Dkn(_TwoStreamKernelNet):
    """Strided kernel-prediction network (Table-1-style tower, stride 4)."""

    def feature_shape_chain(self, input_extent: int) -> list[int]:
        return shape_chain(self.config.layer_plan(), input_extent)


class Fdkn(_TwoStreamKernelNet):
    """Single-pass variant operating on stride-4 resampled inputs."""

    def __init__(self, config: FdknConfig | None = None, seed: int = 0):
        super().__init__(config or FdknConfig(), seed)

    def kernel_field_maps(
        self,
        guidance_resampled: Tensor,
        target_resampled: Tensor,
        pad_input: bool = True,
    ):
        """Full-resolution weight/offset maps from resampled (unshuffled) inputs.

        Inputs are (16*C, H/4, W/4); they are zero-padded so the valid conv
        stack preserves the resampled extent, and head outputs recompose to
        (k^2, H, W) and (2*k^2, H, W) via pixel_shuffle. With
        ``pad_input=False`` the caller supplies inputs that already carry
        their context and the maps cover the interior blocks only.
        """
        r = self.config.stride
        pad = self.receptive_field // 2
        if pad_input:
            g = pad2d(guidance_resampled, pad)
            t = pad2d(target_resampled, pad)
        else:
            g, t = guidance_resampled, target_resampled
        weights, offsets = self.forward(g, t)
        if pad_input and weights.data.shape[1:] != guidance_resampled.data.shape[1:]:
            raise ValueError(
                f"head output {weights.data.shape[1:]} does not match resampled "
                f"extent {guidance_resampled.data.shape[1:]}"
            )
        weights_full = pixel_shuffle(weights, r)
        offsets_full = pixel_shuffle(offsets, r) if offsets is not None else None
        return weights_full, offsets_full


def build_model(config: DknConfig, seed: int = 0):
    return Fdkn(config, seed) if isinstance(config, FdknConfig) else Dkn(config, seed)


def parameter_breakdown(model: _TwoStreamKernelNet) -> dict:
    """Parameter counts: feature towers vs regression heads vs total."""
    features = heads = 0
    for name, p in model.named_parameters():
        n = p.data.size
        if "tower" in name:
            features += n
        else:
            heads += n
    return {"features": features, "heads": heads, "total": features + heads}
