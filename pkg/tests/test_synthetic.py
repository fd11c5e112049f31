"""Synthetic dataset tests: determinism, the depth-edges-are-RGB-edges
invariant, and training-pair assembly."""

import numpy as np
import pytest

from jointfilter.synthetic import (
    SamplePair,
    make_synthetic_dataset,
    make_training_pair,
    read_manifest,
    write_manifest,
)


class TestDatasetGenerator:
    def test_empty(self):
        assert make_synthetic_dataset(0, 32, seed=1) == []

    def test_shapes_and_ranges(self):
        scenes = make_synthetic_dataset(3, 48, seed=2)
        assert len(scenes) == 3
        for rgb, depth in scenes:
            assert rgb.shape == (3, 48, 48) and depth.shape == (1, 48, 48)
            assert rgb.dtype == np.float32 and depth.dtype == np.float32
            assert 0.0 <= rgb.min() and rgb.max() <= 1.0
            assert 0.0 <= depth.min() and depth.max() <= 1.0

    def test_deterministic(self):
        a = make_synthetic_dataset(4, 32, seed=7)
        b = make_synthetic_dataset(4, 32, seed=7)
        for (ra, da), (rb, db) in zip(a, b):
            np.testing.assert_array_equal(ra, rb)
            np.testing.assert_array_equal(da, db)

    def test_scene_independent_of_count(self):
        # scene i depends only on (seed, i): prefix stability
        a = make_synthetic_dataset(2, 32, seed=7)
        b = make_synthetic_dataset(5, 32, seed=7)
        np.testing.assert_array_equal(a[1][1], b[1][1])

    def test_depth_edges_are_rgb_edges(self):
        for rgb, depth in make_synthetic_dataset(6, 64, seed=11):
            d = depth[0]
            for axis in (0, 1):
                dd = np.abs(np.diff(d, axis=axis))
                dg = np.abs(np.diff(rgb, axis=axis + 1)).max(axis=0)
                depth_edge = dd > 1e-6
                assert np.all(dg[depth_edge] > 1e-3), "depth edge without an RGB edge"

    def test_guidance_has_texture_edges_without_depth_edges(self):
        # RGB-only structure exists: more RGB edges than depth edges
        rgb, depth = make_synthetic_dataset(1, 64, seed=13)[0]
        rgb_edges = (np.abs(np.diff(rgb, axis=2)).max(axis=0) > 1e-4).sum()
        depth_edges = (np.abs(np.diff(depth[0], axis=1)) > 1e-6).sum()
        assert rgb_edges > 5 * depth_edges


class TestTrainingPair:
    def test_scale_one_no_noise_equals_ground_truth(self):
        rgb, depth = make_synthetic_dataset(1, 32, seed=3)[0]
        pair = make_training_pair(rgb, depth, "bicubic", scale=1, noise_var=0.0, seed=0)
        np.testing.assert_array_equal(pair.target, pair.ground_truth)

    def test_constant_depth_stays_constant(self):
        rgb = np.zeros((3, 16, 16), dtype=np.float32)
        depth = np.full((1, 16, 16), 0.4, dtype=np.float32)
        pair = make_training_pair(rgb, depth, "bicubic", scale=4, noise_var=0.0, seed=0)
        np.testing.assert_allclose(pair.target, 0.4, atol=1e-6)

    def test_nearest_rb_ramp_gives_constant_plane(self):
        rgb = np.zeros((3, 4, 4), dtype=np.float32)
        ramp = (np.arange(16.0, dtype=np.float32) / 15.0).reshape(1, 4, 4)
        pair = make_training_pair(rgb, ramp, "nearest_rb", scale=4, noise_var=0.0, seed=0)
        np.testing.assert_allclose(pair.target, 1.0, atol=1e-6)

    def test_noise_applied_at_low_resolution(self):
        rgb, depth = make_synthetic_dataset(1, 32, seed=5)[0]
        clean = make_training_pair(rgb, depth, "bicubic", 4, 0.0, seed=8)
        noisy = make_training_pair(rgb, depth, "bicubic", 4, 0.005, seed=8)
        assert not np.array_equal(clean.target, noisy.target)
        np.testing.assert_array_equal(clean.ground_truth, noisy.ground_truth)

    def test_deterministic_under_seed(self):
        rgb, depth = make_synthetic_dataset(1, 32, seed=5)[0]
        a = make_training_pair(rgb, depth, "bicubic", 4, 0.005, seed=8)
        b = make_training_pair(rgb, depth, "bicubic", 4, 0.005, seed=8)
        np.testing.assert_array_equal(a.target, b.target)

    def test_bad_protocol_rejected(self):
        rgb, depth = make_synthetic_dataset(1, 32, seed=5)[0]
        with pytest.raises(ValueError, match="protocol"):
            make_training_pair(rgb, depth, "area", 4, 0.0, seed=0)

    def test_indivisible_extent_rejected(self):
        rgb = np.zeros((3, 30, 30), dtype=np.float32)
        depth = np.zeros((1, 30, 30), dtype=np.float32)
        with pytest.raises(ValueError, match="not divisible"):
            make_training_pair(rgb, depth, "bicubic", 4, 0.0, seed=0)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        records = [
            {"name": "pair_0000", "guidance": "a.ppm", "depth": "a.pfm", "size": 96},
            {"name": "pair_0001", "guidance": "b.ppm", "depth": "b.pfm", "size": 96},
        ]
        path = tmp_path / "manifest.txt"
        write_manifest(path, records)
        back = read_manifest(path)
        assert [r["name"] for r in back] == ["pair_0000", "pair_0001"]
        assert back[0]["size"] == "96"

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# header\n\nname=x guidance=g depth=d\n")
        assert read_manifest(path) == [{"name": "x", "guidance": "g", "depth": "d"}]

    def test_malformed_field(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("name=x broken\n")
        with pytest.raises(ValueError, match="malformed"):
            read_manifest(path)
