"""Dense real tensors with reverse-mode automatic differentiation.

Everything the filtering networks need is built from a small set of primitives
(conv2d, relu, sigmoid, batch_norm, elementwise ops, reshape/transpose/slice,
clamp, tap normalizers). Each primitive records a backward closure on the
output tensor; ``Tensor.backward`` replays them in reverse topological order.

Compute is 32-bit by default. Gradient checking needs 64-bit: wrap model
construction and the forward pass in ``with precision("float64")``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "GraphError",
    "NonFiniteError",
    "Parameter",
    "RunningStats",
    "Tensor",
    "abs_",
    "add",
    "apply_op",
    "batch_norm",
    "center_taps",
    "clamp",
    "conv2d",
    "default_dtype",
    "finite_checks",
    "finite_diff_check",
    "grad_enabled",
    "mul",
    "neg",
    "no_grad",
    "normalize_taps",
    "pad2d",
    "precision",
    "relu",
    "reshape",
    "sigmoid",
    "sub",
    "tsum",
    "transpose",
]


class NonFiniteError(ArithmeticError):
    """A primitive produced NaN or Inf from finite inputs."""


class GraphError(ValueError):
    """Misuse of the autodiff graph (non-scalar backward root, etc.)."""


# ---------------------------------------------------------------------------
# Global modes
# ---------------------------------------------------------------------------

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_FINITE_CHECKS = True


def default_dtype() -> np.dtype:
    return np.dtype(_DEFAULT_DTYPE)


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype ('float32' or 'float64')."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def finite_checks(enabled: bool):
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


def _check_finite(data: np.ndarray, what: str) -> None:
    if not _FINITE_CHECKS:
        return
    # A plain sum is one BLAS-speed pass and propagates any NaN/Inf.  Finite
    # overflow of the sum itself cannot occur at the value magnitudes this
    # engine admits (|x| <= ~1e6, <= ~1e7 elements).
    if not np.isfinite(data.sum()):
        raise NonFiniteError(f"{what} produced a non-finite value")


# ---------------------------------------------------------------------------
# Tensor and graph machinery
# ---------------------------------------------------------------------------


class Tensor:
    """N-dimensional real array plus optional gradient bookkeeping.

    Layout convention is channels-first throughout (C x H x W, or
    N x C x H x W where a batch axis exists).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad of every reachable tensor.

        The root must be scalar; visits each node exactly once in reverse
        topological order.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward() requires a scalar root, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # Convenience arithmetic (full op set lives in module functions).
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return _slice(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Learnable tensor with a name path, e.g. ``guidance_tower.conv1.weight``."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if g.shape != t.data.shape:
        raise GraphError(
            f"gradient shape {g.shape} does not match value shape {t.data.shape}"
        )
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def apply_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], None] | None,
    what: str = "op",
) -> Tensor:
    """Wrap a primitive's forward result, wiring the backward closure.

    ``backward`` receives the upstream gradient and is responsible for
    calling :func:`accumulate_grad` on each parent that requires grad.
    Records nothing when grads are globally disabled or no parent needs them.
    """
    _check_finite(data, what)
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs and backward is not None:
        out._parents = tuple(parents)

        def run():
            backward(out.grad)

        out._backward = run
    return out


accumulate_grad = _accumulate


def _as_const(value, dtype) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    return arr


# ---------------------------------------------------------------------------
# Elementwise primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise GraphError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")
        data = a.data + b.data

        def bwd(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g)

        return apply_op(data, (a, b), bwd, "add")
    c = _as_const(b, a.data.dtype)
    data = a.data + c

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g)

    return apply_op(data, (a,), bwd, "add")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return apply_op(-a.data, (a,), bwd, "neg")


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        return add(a, neg(b))
    return add(a, -np.asarray(b))


def mul(a: Tensor, b) -> Tensor:
    """Hadamard product; also accepts a scalar/ndarray constant for ``b``."""
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise GraphError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
        data = a.data * b.data

        def bwd(g):
            if a.requires_grad:
                _accumulate(a, g * b.data)
            if b.requires_grad:
                _accumulate(b, g * a.data)

        return apply_op(data, (a, b), bwd, "mul")
    c = _as_const(b, a.data.dtype)
    data = a.data * c

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * c)

    return apply_op(data, (a,), bwd, "mul")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def bwd(g):
        if a.requires_grad:
            # subgradient at 0 defined as 0
            _accumulate(a, g * (a.data > 0))

    return apply_op(data, (a,), bwd, "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * data * (1.0 - data))

    return apply_op(data, (a,), bwd, "sigmoid")


def abs_(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def bwd(g):
        if a.requires_grad:
            # np.sign(0) == 0: subgradient at 0 defined as 0
            _accumulate(a, g * np.sign(a.data))

    return apply_op(data, (a,), bwd, "abs")


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge, a.data.shape).copy())

    return apply_op(np.asarray(data), (a,), bwd, "sum")


def clamp(a: Tensor, lo, hi) -> Tensor:
    """Elementwise clip; gradient passes where lo <= x <= hi, else zero.

    ``lo``/``hi`` are scalars or ndarrays broadcastable to ``a``.
    """
    lo_a = np.asarray(lo, dtype=a.data.dtype)
    hi_a = np.asarray(hi, dtype=a.data.dtype)
    data = np.clip(a.data, lo_a, hi_a)

    def bwd(g):
        if a.requires_grad:
            inside = (a.data >= lo_a) & (a.data <= hi_a)
            _accumulate(a, g * inside)

    return apply_op(data, (a,), bwd, "clamp")


# ---------------------------------------------------------------------------
# Shape primitives
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return apply_op(data, (a,), bwd, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    data = np.ascontiguousarray(a.data.transpose(axes))
    inv = np.argsort(axes)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, np.ascontiguousarray(g.transpose(inv)))

    return apply_op(data, (a,), bwd, "transpose")


def _slice(a: Tensor, key) -> Tensor:
    data = a.data[key]
    if np.shares_memory(data, a.data):
        data = data.copy()

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[key] = g
            _accumulate(a, full)

    return apply_op(data, (a,), bwd, "slice")


def pad2d(a: Tensor, pad: int) -> Tensor:
    """Zero-pad the last two axes by ``pad`` on every side."""
    if pad == 0:
        return a
    width = [(0, 0)] * (a.data.ndim - 2) + [(pad, pad), (pad, pad)]
    data = np.pad(a.data, width)
    inner = tuple([slice(None)] * (a.data.ndim - 2) + [slice(pad, -pad)] * 2)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g[inner])

    return apply_op(data, (a,), bwd, "pad2d")


# ---------------------------------------------------------------------------
# Tap-axis constraint layers (kernel-weight normalization)
# ---------------------------------------------------------------------------


def center_taps(a: Tensor) -> Tensor:
    """Subtract the mean over axis 0, forcing each column to sum to zero."""
    m = a.data.mean(axis=0, keepdims=True)
    data = a.data - m

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g - g.mean(axis=0, keepdims=True))

    return apply_op(data, (a,), bwd, "center_taps")


def normalize_taps(a: Tensor) -> Tensor:
    """Divide by the sum over axis 0, forcing each column to sum to one.

    Intended for strictly positive inputs (sigmoid products)."""
    s = a.data.sum(axis=0, keepdims=True)
    data = a.data / s

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, (g - (g * data).sum(axis=0, keepdims=True)) / s)

    return apply_op(data, (a,), bwd, "normalize_taps")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def _conv_out_extent(extent: int, k: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - k) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Valid/zero-padded cross-correlation on a C x H x W tensor.

    Output extent is floor((H + 2*padding - k)/stride) + 1 per side.
    """
    if x.data.ndim != 3:
        raise GraphError(f"conv2d expects a C x H x W input, got shape {x.data.shape}")
    if weight.data.ndim != 4:
        raise GraphError(
            f"conv2d expects an O x C x kh x kw weight, got shape {weight.data.shape}"
        )
    c_in, h, w = x.data.shape
    c_out, wc_in, kh, kw = weight.data.shape
    if wc_in != c_in:
        raise GraphError(
            f"conv2d: weight expects {wc_in} input channels but input has {c_in}"
        )
    if bias.data.shape != (c_out,):
        raise GraphError(
            f"conv2d: bias shape {bias.data.shape} does not match {c_out} output channels"
        )
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise GraphError(
            f"conv2d: kernel {kh}x{kw} exceeds padded input extent {hp}x{wp}"
        )
    ho = _conv_out_extent(h, kh, stride, padding)
    wo = _conv_out_extent(w, kw, stride, padding)

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (C, ho, wo, kh, kw)
    cols = np.ascontiguousarray(windows.transpose(0, 3, 4, 1, 2)).reshape(
        c_in * kh * kw, ho * wo
    )
    wmat = weight.data.reshape(c_out, c_in * kh * kw)
    out = wmat @ cols + bias.data[:, None]
    out = out.reshape(c_out, ho, wo)

    def bwd(g):
        gm = g.reshape(c_out, ho * wo)
        if bias.requires_grad:
            _accumulate(bias, gm.sum(axis=1))
        if weight.requires_grad:
            _accumulate(weight, (gm @ cols.T).reshape(weight.data.shape))
        if x.requires_grad:
            dcols = (wmat.T @ gm).reshape(c_in, kh, kw, ho, wo)
            dxp = np.zeros((c_in, hp, wp), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
            dx = dxp[:, padding : padding + h, padding : padding + w] if padding else dxp
            _accumulate(x, dx)

    return apply_op(out, (x, weight, bias), bwd, "conv2d")


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------


class RunningStats:
    """Per-channel running mean/variance buffers for batch normalization."""

    def __init__(self, channels: int, dtype=None):
        dt = dtype or default_dtype()
        self.mean = np.zeros(channels, dtype=dt)
        self.var = np.ones(channels, dtype=dt)

    def state(self) -> dict:
        return {"mean": self.mean, "var": self.var}


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stats: RunningStats,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize per channel on C x H x W or N x C x H x W input.

    Training mode uses batch statistics and updates the running buffers
    (momentum form: running = (1-m)*running + m*batch, unbiased variance).
    Eval mode uses the running buffers.
    """
    if x.data.ndim == 3:
        ch_axis, red = 0, (1, 2)
    elif x.data.ndim == 4:
        ch_axis, red = 1, (0, 2, 3)
    else:
        raise GraphError(f"batch_norm expects 3D or 4D input, got shape {x.data.shape}")
    c = x.data.shape[ch_axis]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise GraphError(
            f"batch_norm: gamma/beta must have shape ({c},), got {gamma.data.shape}/{beta.data.shape}"
        )
    shape = [1] * x.data.ndim
    shape[ch_axis] = c
    gm = gamma.data.reshape(shape)
    bt = beta.data.reshape(shape)

    if training:
        m = x.data.size // c
        mean = x.data.mean(axis=red)
        var = x.data.var(axis=red)
        inv = 1.0 / np.sqrt(var.reshape(shape) + eps)
        xhat = (x.data - mean.reshape(shape)) * inv
        unbiased = var * (m / (m - 1)) if m > 1 else var
        stats.mean[...] = (1 - momentum) * stats.mean + momentum * mean
        stats.var[...] = (1 - momentum) * stats.var + momentum * unbiased
    else:
        m = 0
        inv = 1.0 / np.sqrt(stats.var.reshape(shape) + eps)
        xhat = (x.data - stats.mean.reshape(shape)) * inv
    out = gm * xhat + bt

    def bwd(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=red))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=red))
        if x.requires_grad:
            if training:
                dxhat = g * gm
                dx = inv / m * (
                    m * dxhat
                    - dxhat.sum(axis=red, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=red, keepdims=True)
                )
            else:
                dx = g * gm * inv
            _accumulate(x, dx)

    return apply_op(out, (x, gamma, beta), bwd, "batch_norm")


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-4,
    max_coords: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a tensor to a scalar tensor. Coordinates are checked
    exhaustively, or on a deterministic random subset of ``max_coords`` when
    positive (for large tensors). Run in 64-bit mode for meaningful bounds.
    """
    x = Tensor(x.data.copy(), requires_grad=True)
    out = fn(x)
    out.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    n = flat.size
    if max_coords and n > max_coords:
        gen = rng or np.random.default_rng(0)
        coords = gen.choice(n, size=max_coords, replace=False)
    else:
        coords = np.arange(n)

    worst = 0.0
    ana = analytic.reshape(-1)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        with no_grad():
            fp = fn(x).item()
        flat[i] = orig - h
        with no_grad():
            fm = fn(x).item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        denom = max(abs(ana[i]), abs(numeric), 1e-6)
        worst = max(worst, abs(ana[i] - numeric) / denom)
    return worst
