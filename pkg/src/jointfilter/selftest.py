"""Built-in numerical verification: gradient checks against central finite
differences, weight-constraint invariants, the stitched-vs-per-pixel oracle,
and resampling round-trips. Each check reports its worst error; any failure
names the violated invariant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import infer_per_pixel, infer_shift_and_stitch
from .networks import Dkn, DknConfig
from .resample import pixel_shuffle, pixel_unshuffle
from .sampling import sample_bilinear
from .synthetic import make_synthetic_dataset, make_training_pair
from .tensor import (
    RunningStats,
    Tensor,
    batch_norm,
    conv2d,
    finite_diff_check,
    mul,
    precision,
    relu,
    sigmoid,
    tsum,
)

__all__ = ["CheckResult", "run_selftest", "FAULTS"]

FAULTS = ("weight-constraint",)


@dataclass
class CheckResult:
    name: str
    max_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.tolerance


def _check_gradients() -> CheckResult:
    rng = np.random.default_rng(0)
    worst = 0.0
    with precision("float64"):
        x = Tensor(rng.standard_normal((2, 6, 7)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.5, requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        r = rng.standard_normal((3, 3, 4))

        def conv_stack(v):
            return tsum(mul(relu(conv2d(v, w, b, stride=2, padding=1)), r))

        worst = max(worst, finite_diff_check(conv_stack, x))
        worst = max(worst, finite_diff_check(
            lambda v: tsum(mul(relu(conv2d(x, v, b, stride=2, padding=1)), r)), w))

        gamma = Tensor(rng.standard_normal(2) + 1.0, requires_grad=True)
        beta = Tensor(rng.standard_normal(2), requires_grad=True)
        rb = rng.standard_normal((2, 6, 7))

        def bn_stack(v):
            stats = RunningStats(2, np.float64)
            y = batch_norm(v, gamma, beta, stats, training=True)
            return tsum(mul(sigmoid(y), rb))

        worst = max(worst, finite_diff_check(bn_stack, x))

        img = Tensor(rng.standard_normal((6, 7)), requires_grad=True)
        xs = Tensor(rng.uniform(0.3, 5.4, (11,)), requires_grad=True)
        ys = Tensor(rng.uniform(0.3, 4.4, (11,)), requires_grad=True)
        rs = rng.standard_normal(11)
        worst = max(worst, finite_diff_check(
            lambda v: tsum(mul(sample_bilinear(v, xs, ys), rs)), img))
        worst = max(worst, finite_diff_check(
            lambda v: tsum(mul(sample_bilinear(img, v, ys), rs)), xs, h=1e-5))
    return CheckResult("gradient-vs-finite-differences", worst, 1e-4)


def _check_weight_constraint(fault: str | None) -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    for residual in (True, False):
        model = Dkn(DknConfig(channels=(4, 4, 6, 6, 8, 8, 8), residual=residual), seed=2)
        model.eval()
        g = Tensor(rng.standard_normal((3, 51, 51)).astype(np.float32))
        t = Tensor(rng.standard_normal((1, 51, 51)).astype(np.float32))
        weights, _ = model(g, t)
        w = weights.data.reshape(weights.data.shape[0], -1)
        if fault == "weight-constraint":
            w = w + 0.01  # simulated broken mean-subtraction in the head
        sums = w.sum(axis=0)
        err = np.abs(sums).max() if residual else np.abs(sums - 1.0).max()
        if not residual and w.min() <= 0:
            err = max(err, 1.0)
        worst = max(worst, float(err))
    return CheckResult("weight-constraint (mean-subtract / L1-normalize)", worst, 1e-5)


def _check_stitch_oracle() -> CheckResult:
    model = Dkn(DknConfig(channels=(6, 6, 8, 8, 12, 12, 12)), seed=3)
    rgb, depth = make_synthetic_dataset(1, 16, seed=4)[0]
    pair = make_training_pair(rgb, depth, "bicubic", 4, 0.0, seed=0)
    stitched = infer_shift_and_stitch(model, pair.guidance, pair.target)
    naive = infer_per_pixel(model, pair.guidance, pair.target)
    err = float(np.abs(stitched.output - naive).max())
    if stitched.forward_passes != 16:
        err = max(err, 1.0)
    return CheckResult("stitched-vs-per-pixel oracle (16 passes)", err, 1e-5)


def _check_resample_roundtrip() -> CheckResult:
    rng = np.random.default_rng(5)
    worst = 0.0
    for r in (2, 4):
        x = Tensor(rng.standard_normal((3, 8, 8)).astype(np.float32))
        back = pixel_shuffle(pixel_unshuffle(x, r), r)
        if not np.array_equal(back.data, x.data):
            worst = 1.0
    return CheckResult("pixel shuffle/unshuffle round-trip (bit-exact)", worst, 0.0)


def run_selftest(fault: str | None = None) -> list[CheckResult]:
    """All checks, in order; inject a named fault to prove detection works."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; known faults: {FAULTS}")
    return [
        _check_gradients(),
        _check_weight_constraint(fault),
        _check_stitch_oracle(),
        _check_resample_roundtrip(),
    ]
