"""Architecture tests: feature shape chains, head constraints, receptive
fields, parameter budgets, and stream/offset ablation switches."""

import numpy as np
import pytest

from jointfilter.networks import (
    Dkn,
    DknConfig,
    Fdkn,
    FdknConfig,
    build_model,
    parameter_breakdown,
    receptive_field,
    shape_chain,
)
from jointfilter.resample import pixel_unshuffle
from jointfilter.tensor import Tensor, no_grad


@pytest.fixture
def rng():
    return np.random.default_rng(11)


# =============================================================================
# Shapes and receptive fields
# =============================================================================


class TestShapes:
    def test_feature_chain_matches_layer_table(self):
        chain = shape_chain(DknConfig().layer_plan(), 51)
        assert chain == [51, 45, 22, 18, 9, 5, 3, 1]

    def test_fdkn_chain(self):
        chain = shape_chain(FdknConfig().layer_plan(), 13)
        assert chain == [13, 11, 9, 7, 5, 3, 1]

    @pytest.mark.parametrize("channels", [(4, 4, 6, 6, 8, 8, 8), (32, 32, 64, 64, 128, 128, 128)])
    def test_chain_independent_of_widths(self, rng, channels):
        model = Dkn(DknConfig(channels=channels), seed=0)
        model.eval()
        x = Tensor(rng.random((3, 51, 51), dtype=np.float32))
        feats = x
        expected = [51, 45, 22, 18, 9, 5, 3, 1]
        with no_grad():
            for i, (layer, norm) in enumerate(
                zip(model.guidance_tower.layers, model.guidance_tower.norms)
            ):
                feats = layer(feats)
                assert feats.data.shape[1] == expected[i + 1]
                assert feats.data.shape[0] == channels[i]
                if norm is not None:
                    feats = norm(feats)

    def test_dkn_features_from_receptive_field_patch(self, rng):
        model = Dkn(DknConfig(channels=(4, 4, 6, 6, 8, 8, 8)), seed=0)
        model.eval()
        with no_grad():
            out = model.guidance_tower(Tensor(rng.random((3, 51, 51), dtype=np.float32)))
        assert out.data.shape == (8, 1, 1)

    def test_wrong_input_size_rejected(self, rng):
        model = Dkn(DknConfig(channels=(4, 4, 6, 6, 8, 8, 8)), seed=0)
        with pytest.raises(ValueError):
            with no_grad():
                model.guidance_tower(Tensor(rng.random((3, 10, 10), dtype=np.float32)))

    def test_receptive_fields_computed(self):
        assert receptive_field(DknConfig()) == 51
        assert receptive_field(FdknConfig()) == 13

    def test_receptive_field_single_conv3(self):
        class OneConv(DknConfig):
            def layer_plan(self):
                return [("conv", 3, 1, False)]

        assert receptive_field(OneConv(channels=(8,))) == 3


# =============================================================================
# Parameter budgets
# =============================================================================


class TestParameters:
    def test_dkn_budget(self):
        counts = parameter_breakdown(Dkn(DknConfig(), seed=0))
        assert counts["total"] == 1158070
        assert abs(counts["features"] - 1.1e6) / 1.1e6 < 0.05

    def test_fdkn_budget(self):
        counts = parameter_breakdown(Fdkn(FdknConfig(), seed=0))
        assert counts["total"] == 703072
        assert abs(counts["features"] - 0.6e6) / 0.6e6 < 0.05

    def test_same_seed_same_init(self):
        a = Dkn(DknConfig(channels=(4, 4, 6, 6, 8, 8, 8)), seed=5)
        b = Dkn(DknConfig(channels=(4, 4, 6, 6, 8, 8, 8)), seed=5)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)


# =============================================================================
# Weight and offset heads
# =============================================================================


SMALL = dict(channels=(4, 4, 6, 6, 8, 8, 8))


class TestHeads:
    def test_residual_weights_sum_to_zero(self, rng):
        model = Dkn(DknConfig(**SMALL), seed=1)
        model.eval()
        with no_grad():
            w, _ = model(
                Tensor(rng.random((3, 51, 51), dtype=np.float32)),
                Tensor(rng.random((1, 51, 51), dtype=np.float32)),
            )
        assert abs(w.data.sum(axis=0)).max() < 1e-5

    def test_plain_weights_sum_to_one_positive(self, rng):
        model = Dkn(DknConfig(residual=False, **SMALL), seed=1)
        model.eval()
        with no_grad():
            w, _ = model(
                Tensor(rng.random((3, 51, 51), dtype=np.float32)),
                Tensor(rng.random((1, 51, 51), dtype=np.float32)),
            )
        assert abs(w.data.sum(axis=0) - 1.0).max() < 1e-5
        assert w.data.min() > 0

    def test_half_sigmoids_cancel_after_mean_subtraction(self):
        # both streams' sigmoid outputs 0.5 => products 0.25 => centered 0
        combined = np.full((9, 4), 0.25)
        centered = combined - combined.mean(axis=0, keepdims=True)
        np.testing.assert_array_equal(centered, np.zeros((9, 4)))

    def test_offset_head_width(self, rng):
        model = Dkn(DknConfig(**SMALL), seed=1)
        model.eval()
        with no_grad():
            _, o = model(
                Tensor(rng.random((3, 51, 51), dtype=np.float32)),
                Tensor(rng.random((1, 51, 51), dtype=np.float32)),
            )
        assert o.data.shape[0] == 18  # 2 * k^2 for k=3

    def test_zero_heads_give_zero_offsets(self, rng):
        model = Dkn(DknConfig(**SMALL), seed=1)
        model.eval()
        for head in (model.offset_head_g, model.offset_head_t):
            head.weight.data[...] = 0.0
            head.bias.data[...] = 0.0
        with no_grad():
            _, o = model(
                Tensor(rng.random((3, 51, 51), dtype=np.float32)),
                Tensor(rng.random((1, 51, 51), dtype=np.float32)),
            )
        np.testing.assert_array_equal(o.data, np.zeros_like(o.data))

    def test_single_stream_is_multiplicative_identity(self, rng):
        # guidance-only model: offsets equal the guidance head output alone
        model = Dkn(DknConfig(streams="guidance", **SMALL), seed=1)
        model.eval()
        g = Tensor(rng.random((3, 51, 51), dtype=np.float32))
        with no_grad():
            feats = model.guidance_tower(g)
            expected = model.offset_head_g(feats)
            _, o = model(g, None)
        np.testing.assert_array_equal(o.data, expected.data)
        assert model.target_tower is None

    def test_learn_offsets_false_has_no_offset_heads(self, rng):
        model = Dkn(DknConfig(learn_offsets=False, **SMALL), seed=1)
        model.eval()
        assert model.offset_head_g is None
        with no_grad():
            _, o = model(
                Tensor(rng.random((3, 51, 51), dtype=np.float32)),
                Tensor(rng.random((1, 51, 51), dtype=np.float32)),
            )
        assert o is None

    def test_zero_input_zero_biases_gives_zero_features(self, rng):
        # linearity plus ReLU(0)=0 and eval-mode BN on fresh (0, 1) stats
        model = Dkn(DknConfig(**SMALL), seed=1)
        model.eval()
        with no_grad():
            out = model.guidance_tower(Tensor(np.zeros((3, 51, 51), dtype=np.float32)))
        np.testing.assert_array_equal(out.data, np.zeros_like(out.data))

    def test_weight_head_composite_gradient(self, rng):
        # finite differences through the full weight-regression composite
        from jointfilter.tensor import center_taps, finite_diff_check, mul, precision, sigmoid, tsum

        with precision("float64"):
            model = Dkn(DknConfig(**SMALL), seed=4)
            fg = Tensor(rng.standard_normal((8, 4, 4)), requires_grad=True)
            ft = Tensor(rng.standard_normal((8, 4, 4)))
            r = rng.standard_normal((9, 4, 4))

            def head(v):
                w = mul(
                    sigmoid(model.weight_head_g(v)), sigmoid(model.weight_head_t(ft))
                )
                return tsum(mul(center_taps(w), r))

            assert finite_diff_check(head, fg, max_coords=32) < 1e-3

    def test_constraint_holds_on_many_random_inputs(self, rng):
        model = Dkn(DknConfig(**SMALL), seed=2)
        model.eval()
        worst = 0.0
        with no_grad():
            for _ in range(20):
                w, _ = model(
                    Tensor(rng.standard_normal((3, 51, 51)).astype(np.float32)),
                    Tensor(rng.standard_normal((1, 51, 51)).astype(np.float32)),
                )
                worst = max(worst, abs(w.data.sum(axis=0)).max())
        assert worst < 1e-5


# =============================================================================
# The fast (resampled) variant
# =============================================================================


class TestFdkn:
    def test_head_widths(self, rng):
        model = Fdkn(FdknConfig(channels=(4, 4, 6, 6, 8, 8)), seed=1)
        assert model.weight_head_g.weight.data.shape[0] == 16 * 9  # 16 k^2
        assert model.offset_head_g.weight.data.shape[0] == 32 * 9  # 32 k^2

    def test_default_head_channels(self):
        model = Fdkn(FdknConfig(), seed=0)
        assert model.weight_head_g.weight.data.shape == (144, 128, 1, 1)
        assert model.offset_head_g.weight.data.shape == (288, 128, 1, 1)

    def test_kernel_field_covers_all_pixels(self, rng):
        model = Fdkn(FdknConfig(channels=(4, 4, 6, 6, 8, 8)), seed=1)
        model.eval()
        h = w = 64
        g = Tensor(rng.random((3, h, w), dtype=np.float32))
        t = Tensor(rng.random((1, h, w), dtype=np.float32))
        with no_grad():
            weights, offsets = model.kernel_field_maps(
                pixel_unshuffle(g, 4), pixel_unshuffle(t, 4)
            )
        assert weights.data.shape == (9, h, w)
        assert offsets.data.shape == (18, h, w)
        # per-pixel constraint holds after sub-pixel recomposition
        assert abs(weights.data.sum(axis=0)).max() < 1e-5

    def test_rejects_unresampled_extent_mismatch(self, rng):
        model = Fdkn(FdknConfig(channels=(4, 4, 6, 6, 8, 8)), seed=1)
        with pytest.raises(ValueError):
            with no_grad():
                model.kernel_field_maps(
                    Tensor(rng.random((48, 8, 8), dtype=np.float32)),
                    Tensor(rng.random((16, 9, 9), dtype=np.float32)),
                )


# =============================================================================
# Config validation
# =============================================================================


class TestConfig:
    def test_constraint_tied_to_residual(self):
        assert DknConfig(residual=True).constraint == "mean_subtract"
        assert DknConfig(residual=False).constraint == "l1_normalize"

    def test_rejects_even_kernel(self):
        with pytest.raises(ValueError, match="odd"):
            Dkn(DknConfig(kernel_size=4), seed=0)

    def test_rejects_window_below_kernel(self):
        with pytest.raises(ValueError, match="window"):
            Dkn(DknConfig(kernel_size=5, window=3), seed=0)

    def test_rejects_unknown_stream(self):
        with pytest.raises(ValueError, match="streams"):
            Dkn(DknConfig(streams="nope"), seed=0)

    def test_roundtrip_via_dict(self):
        cfg = FdknConfig(kernel_size=3, residual=False, channels=(4, 4, 6, 6, 8, 8))
        again = FdknConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert build_model(again, 0).config.arch == "fdkn"
