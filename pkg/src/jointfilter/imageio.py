"""Binary netpbm (PGM P5 / PPM P6) and PFM image readers and writers.

Images are float32 in [0, 1] (netpbm, scaled by maxval) or raw float32
(PFM). Depth maps round-trip losslessly through PFM; PGM quantizes to the
declared bit depth (value = round(x * maxval), read back as value / maxval).
PFM scanlines are stored bottom-to-top; the sign of the scale line encodes
endianness (negative = little-endian).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = [
    "PnmError",
    "read_image",
    "read_pfm",
    "read_pgm",
    "read_ppm",
    "write_image",
    "write_pfm",
    "write_pgm",
    "write_ppm",
]


class PnmError(ValueError):
    """Malformed or truncated image file; message carries the byte offset."""


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, msg: str):
        raise PnmError(f"{self.path}: {msg} at byte {self.pos}")

    def read_token(self) -> bytes:
        """Next whitespace-delimited header token, skipping # comments."""
        d = self.data
        n = len(d)
        while self.pos < n:
            c = d[self.pos : self.pos + 1]
            if c == b"#":
                while self.pos < n and d[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                break
        if self.pos >= n:
            self.fail("unexpected end of header")
        start = self.pos
        while self.pos < n and not d[self.pos : self.pos + 1].isspace():
            self.pos += 1
        return d[start : self.pos]

    def read_int(self, what: str) -> int:
        tok = self.read_token()
        try:
            return int(tok)
        except ValueError:
            self.fail(f"expected integer {what}, got {tok!r}")

    def skip_single_whitespace(self):
        if self.pos >= len(self.data) or not self.data[self.pos : self.pos + 1].isspace():
            self.fail("expected single whitespace before payload")
        self.pos += 1

    def read_payload(self, nbytes: int) -> bytes:
        if len(self.data) - self.pos < nbytes:
            raise PnmError(
                f"{self.path}: payload truncated, need {nbytes} bytes "
                f"at byte {self.pos} but file ends at {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return out


def _read_netpbm(path, magic_expected: bytes, channels: int) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.read_token()
    if magic != magic_expected:
        r.fail(f"bad magic {magic!r}, expected {magic_expected!r}")
    width = r.read_int("width")
    height = r.read_int("height")
    maxval = r.read_int("maxval")
    if width <= 0 or height <= 0:
        r.fail(f"invalid extents {width}x{height}")
    if not 0 < maxval < 65536:
        r.fail(f"invalid maxval {maxval}")
    r.skip_single_whitespace()
    two_byte = maxval > 255
    count = width * height * channels
    payload = r.read_payload(count * (2 if two_byte else 1))
    dtype = ">u2" if two_byte else np.uint8  # 16-bit samples are big-endian
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float32) / maxval
    if channels == 1:
        return raw.reshape(1, height, width)
    return raw.reshape(height, width, channels).transpose(2, 0, 1).copy()


def read_pgm(path) -> np.ndarray:
    """P5 grayscale -> (1, H, W) float32 in [0, 1]."""
    return _read_netpbm(path, b"P5", 1)


def read_ppm(path) -> np.ndarray:
    """P6 color -> (3, H, W) float32 in [0, 1]."""
    return _read_netpbm(path, b"P6", 3)


def _write_netpbm(path, image: np.ndarray, magic: bytes, channels: int, maxval: int):
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] != channels:
        raise ValueError(f"expected {channels} x H x W image, got shape {img.shape}")
    h, w = img.shape[1:]
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    q = q.astype(">u2" if maxval > 255 else np.uint8)
    if channels > 1:
        q = q.transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n%d\n" % (w, h, maxval))
        f.write(q.tobytes())


def write_pgm(path, image: np.ndarray, maxval: int = 65535):
    _write_netpbm(path, image, b"P5", 1, maxval)


def write_ppm(path, image: np.ndarray, maxval: int = 255):
    _write_netpbm(path, image, b"P6", 3, maxval)


def read_pfm(path) -> np.ndarray:
    """Pf/PF -> (1, H, W) or (3, H, W) float32, exact."""
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.read_token()
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        r.fail(f"bad magic {magic!r}, expected b'Pf' or b'PF'")
    width = r.read_int("width")
    height = r.read_int("height")
    scale_tok = r.read_token()
    try:
        scale = float(scale_tok)
    except ValueError:
        r.fail(f"expected scale float, got {scale_tok!r}")
    if scale == 0:
        r.fail("scale must be nonzero")
    r.skip_single_whitespace()
    count = width * height * channels
    payload = r.read_payload(count * 4)
    dtype = "<f4" if scale < 0 else ">f4"
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    if channels == 1:
        img = raw.reshape(height, width)[::-1]  # bottom-to-top scanlines
        return np.ascontiguousarray(img[None])
    img = raw.reshape(height, width, 3)[::-1]
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def write_pfm(path, image: np.ndarray):
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"PFM supports 1 or 3 channels, got shape {img.shape}")
    c, h, w = img.shape
    magic = b"Pf" if c == 1 else b"PF"
    rows = img[0][::-1] if c == 1 else img.transpose(1, 2, 0)[::-1]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n-1.0\n" % (w, h))
        f.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


_READERS = {".pgm": read_pgm, ".ppm": read_ppm, ".pfm": read_pfm}


def read_image(path) -> np.ndarray:
    ext = Path(path).suffix.lower()
    if ext not in _READERS:
        raise PnmError(f"{path}: unsupported image extension {ext!r} at byte 0")
    return _READERS[ext](path)


def write_image(path, image: np.ndarray):
    ext = Path(path).suffix.lower()
    if ext == ".pgm":
        write_pgm(path, image)
    elif ext == ".ppm":
        write_ppm(path, image)
    elif ext == ".pfm":
        write_pfm(path, image)
    else:
        raise ValueError(f"{path}: unsupported image extension {ext!r}")
