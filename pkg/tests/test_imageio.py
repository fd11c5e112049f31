"""Image format tests: PGM/PPM/PFM round-trips, header parsing, and the
byte-offset diagnostics for malformed files."""

import numpy as np
import pytest

from jointfilter.imageio import (
    PnmError,
    read_image,
    read_pfm,
    read_pgm,
    read_ppm,
    write_image,
    write_pfm,
    write_pgm,
    write_ppm,
)


@pytest.fixture
def rng():
    return np.random.default_rng(23)


class TestPfm:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        img = rng.standard_normal((1, 13, 9)).astype(np.float32)
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        back = read_pfm(path)
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, img)

    def test_roundtrip_color(self, tmp_path, rng):
        img = rng.standard_normal((3, 5, 7)).astype(np.float32)
        write_pfm(tmp_path / "c.pfm", img)
        np.testing.assert_array_equal(read_pfm(tmp_path / "c.pfm"), img)

    def test_big_endian_scale_sign(self, tmp_path):
        vals = np.array([[1.5, -2.0]], dtype=">f4")
        payload = b"Pf\n2 1\n1.0\n" + vals.tobytes()
        path = tmp_path / "be.pfm"
        path.write_bytes(payload)
        out = read_pfm(path)
        np.testing.assert_array_equal(out, np.array([[[1.5, -2.0]]], dtype=np.float32))

    def test_scanlines_bottom_to_top(self, tmp_path):
        img = np.arange(6.0, dtype=np.float32).reshape(1, 3, 2)
        path = tmp_path / "r.pfm"
        write_pfm(path, img)
        raw = np.frombuffer(path.read_bytes().split(b"-1.0\n", 1)[1], dtype="<f4")
        np.testing.assert_array_equal(raw[:2], img[0, 2])  # last row first

    def test_truncated_payload_offset(self, tmp_path):
        path = tmp_path / "t.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
        with pytest.raises(PnmError, match="byte 12"):
            read_pfm(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.pfm"
        path.write_bytes(b"P5\n2 2\n255\n" + b"\x00" * 4)
        with pytest.raises(PnmError, match="bad magic"):
            read_pfm(path)


class TestPgm:
    def test_zero_image(self, tmp_path):
        path = tmp_path / "z.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + b"\x00" * 4)
        np.testing.assert_array_equal(read_pgm(path), np.zeros((1, 2, 2), dtype=np.float32))

    def test_16bit_roundtrip_quantized(self, tmp_path, rng):
        img = rng.random((1, 6, 5)).astype(np.float32)
        path = tmp_path / "q.pgm"
        write_pgm(path, img, maxval=65535)
        back = read_pgm(path)
        # exact at the declared bit depth: one quantization step
        assert np.abs(back - img).max() <= 0.5 / 65535

    def test_8bit_values(self, tmp_path):
        path = tmp_path / "v.pgm"
        write_pgm(path, np.array([[[0.0, 1.0]]]), maxval=255)
        np.testing.assert_allclose(read_pgm(path), [[[0.0, 1.0]]])

    def test_16bit_samples_big_endian(self, tmp_path):
        path = tmp_path / "be.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n" + (0x0102).to_bytes(2, "big"))
        assert read_pgm(path)[0, 0, 0] == pytest.approx(0x0102 / 65535)

    def test_header_comments_skipped(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x10\x20")
        out = read_pgm(path)
        np.testing.assert_allclose(out[0, 0], [0x10 / 255, 0x20 / 255])

    def test_bad_maxval_offset(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n2 2\n70000\n")
        with pytest.raises(PnmError, match="at byte"):
            read_pgm(path)

    def test_nonint_extent(self, tmp_path):
        path = tmp_path / "e.pgm"
        path.write_bytes(b"P5\nxx 2\n255\n")
        with pytest.raises(PnmError, match="expected integer width"):
            read_pgm(path)


class TestPpm:
    def test_two_pixel_example(self, tmp_path):
        path = tmp_path / "p.ppm"
        path.write_bytes(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255]))
        out = read_ppm(path)
        np.testing.assert_array_equal(out[0], [[1.0, 0.0]])
        np.testing.assert_array_equal(out[1], [[0.0, 0.0]])
        np.testing.assert_array_equal(out[2], [[0.0, 1.0]])

    def test_roundtrip(self, tmp_path, rng):
        img = (rng.integers(0, 256, (3, 4, 6)) / 255.0).astype(np.float32)
        write_ppm(tmp_path / "r.ppm", img)
        np.testing.assert_allclose(read_ppm(tmp_path / "r.ppm"), img, atol=1e-7)


class TestDispatch:
    def test_by_extension(self, tmp_path, rng):
        img = rng.random((1, 4, 4)).astype(np.float32)
        for ext in (".pfm", ".pgm"):
            write_image(tmp_path / f"d{ext}", img)
            out = read_image(tmp_path / f"d{ext}")
            assert out.shape == (1, 4, 4)

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(PnmError, match="unsupported"):
            read_image(tmp_path / "x.png")
