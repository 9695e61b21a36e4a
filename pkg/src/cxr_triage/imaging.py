"""PNG loading and the preprocessing chain feeding the embedding extractor.

Every image ends up as a 224x224 single-channel matrix with values in
[-1024, 1024]: grayscale reduction, center crop to the largest square,
bilinear resample (half-pixel-center convention), then the bit-depth aware
affine rescale.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image

SIDE = 224
VALUE_LO = -1024.0
VALUE_HI = 1024.0

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# color type -> sample channels, per the PNG spec
_PNG_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


class PngDecodeError(ValueError):
    """Malformed PNG stream; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, *, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnsupportedPngError(ValueError):
    """Well-formed PNG outside the supported bit depth / color combinations."""


class PixelRangeError(ValueError):
    """Sample value outside the declared bit-depth range."""


@dataclass(frozen=True)
class RawImage:
    width: int
    height: int
    channels: int
    bit_depth: int
    pixels: np.ndarray  # (height, width) or (height, width, channels), integer dtype

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.channels not in (1, 3, 4):
            raise ValueError(f"channels must be 1, 3 or 4, got {self.channels}")
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        expected = (self.height, self.width) if self.channels == 1 else (
            self.height, self.width, self.channels)
        if self.pixels.shape != expected:
            raise ValueError(f"pixel array shape {self.pixels.shape} != {expected}")


@dataclass(frozen=True)
class PreprocessedImage:
    values: np.ndarray  # (224, 224) float64 in [-1024, 1024]

    def __post_init__(self):
        if self.values.shape != (SIDE, SIDE):
            raise ValueError(f"preprocessed image must be {SIDE}x{SIDE}, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("preprocessed image contains non-finite values")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < VALUE_LO or hi > VALUE_HI:
            raise ValueError(f"values outside [{VALUE_LO}, {VALUE_HI}]: min={lo}, max={hi}")


def _locate_png_fault(data: bytes) -> int:
    """Best-effort byte offset of the first structural problem in ``data``."""
    if data[:8] != _PNG_SIGNATURE:
        return 0
    pos = 8
    first_idat = None
    while pos + 8 <= len(data):
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        if pos + 8 + length + 4 > len(data):
            return len(data)  # truncated inside this chunk
        payload = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        if zlib.crc32(ctype + payload) & 0xFFFFFFFF != crc:
            return pos
        if ctype == b"IDAT" and first_idat is None:
            first_idat = pos + 8
        pos += 12 + length
        if ctype == b"IEND":
            # structure is fine; blame the compressed image data
            return first_idat if first_idat is not None else pos
    return len(data)


def _paeth(a: int, b: int, c: int) -> int:
    pa = abs(b - c)
    pb = abs(a - c)
    pc = abs(a + b - 2 * c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, bytes_per_pixel: int) -> np.ndarray:
    """Reverse per-scanline PNG filtering; returns (height, stride) raw bytes."""
    bpp = bytes_per_pixel
    stride = width * bpp
    if len(raw) != height * (1 + stride):
        raise ValueError(
            f"decompressed image data is {len(raw)} bytes, expected {height * (1 + stride)}")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, 1 + stride)
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for y in range(height):
        ftype = int(rows[y, 0])
        line = rows[y, 1:].copy()
        if ftype == 0:
            cur = line
        elif ftype == 1:  # Sub: per byte lane, a running sum mod 256
            lanes = line.reshape(width, bpp).astype(np.int64)
            cur = (lanes.cumsum(axis=0) & 0xFF).astype(np.uint8).reshape(stride)
        elif ftype == 2:  # Up: uint8 wraparound is the required mod-256 add
            cur = line + prev
        elif ftype in (3, 4):  # Average and Paeth depend on the previous pixel
            cur = line
            for i in range(stride):
                a = int(cur[i - bpp]) if i >= bpp else 0
                b = int(prev[i])
                if ftype == 3:
                    cur[i] = (int(cur[i]) + ((a + b) >> 1)) & 0xFF
                else:
                    c = int(prev[i - bpp]) if i >= bpp else 0
                    cur[i] = (int(cur[i]) + _paeth(a, b, c)) & 0xFF
        else:
            raise ValueError(f"scanline {y} has invalid filter type {ftype}")
        out[y] = cur
        prev = cur
    return out


def _decode_16bit_color(data: bytes, width: int, height: int, color_type: int) -> np.ndarray:
    """Decode a non-interlaced 16-bit color PNG to (height, width, channels).

    Faults follow the same offset conventions as :func:`_locate_png_fault`:
    truncation blames the stream end, checksum mismatches blame the chunk,
    and undecodable image data blames the first IDAT payload.
    """
    channels = _PNG_CHANNELS[color_type]
    idat = bytearray()
    first_data = None
    pos = 8
    while pos + 8 <= len(data):
        length, ctype = struct.unpack(">I4s", data[pos:pos + 8])
        if pos + 8 + length + 4 > len(data):
            raise PngDecodeError("truncated inside a chunk", offset=len(data))
        payload = data[pos + 8:pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        if zlib.crc32(ctype + payload) & 0xFFFFFFFF != crc:
            raise PngDecodeError(
                f"checksum mismatch in {ctype.decode('latin-1')} chunk", offset=pos)
        if ctype == b"IDAT":
            if first_data is None:
                first_data = pos + 8
            idat += payload
        pos += 12 + length
        if ctype == b"IEND":
            break
    if first_data is None:
        raise PngDecodeError("no image data chunk", offset=len(data))
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise PngDecodeError(f"bad compressed image data: {e}", offset=first_data) from e
    try:
        rows = _unfilter(raw, width, height, channels * 2)
    except ValueError as e:
        raise PngDecodeError(str(e), offset=first_data) from e
    samples = np.frombuffer(rows.tobytes(), dtype=">u2")
    return samples.reshape(height, width, channels).astype(np.uint16)


def load_png(data: bytes) -> RawImage:
    """Decode a PNG byte stream at native bit depth, dropping any alpha.

    8-bit images and 16-bit grayscale decode through Pillow; 16-bit color
    is decoded in-module because Pillow narrows it to 8 bits per sample.
    Raises :class:`PngDecodeError` (with a byte offset) on malformed input
    and :class:`UnsupportedPngError` on other depth/color combinations.
    """
    if data[:8] != _PNG_SIGNATURE:
        raise PngDecodeError("not a PNG stream", offset=0)
    if len(data) < 33:
        raise PngDecodeError("truncated before IHDR", offset=len(data))
    width, height = struct.unpack(">II", data[16:24])
    bit_depth, color_type = data[24], data[25]
    if color_type not in _PNG_CHANNELS:
        raise PngDecodeError(f"invalid color type {color_type}", offset=25)
    if bit_depth not in (8, 16):
        raise UnsupportedPngError(f"unsupported bit depth {bit_depth} (need 8 or 16)")
    if bit_depth == 16 and color_type != 0:
        if data[28] != 0:
            raise UnsupportedPngError("interlaced 16-bit color PNGs are not supported")
        arr = _decode_16bit_color(data, width, height, color_type)
        if color_type == 4:    # gray + alpha
            arr = arr[:, :, 0]
        elif color_type == 6:  # RGBA
            arr = arr[:, :, :3]
        return RawImage(width=width, height=height,
                        channels=1 if arr.ndim == 2 else 3,
                        bit_depth=16, pixels=arr)

    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as e:
        raise PngDecodeError(f"PNG decode failed: {e}", offset=_locate_png_fault(data)) from e

    if img.mode == "P":
        img = img.convert("RGB")
    elif img.mode == "LA":
        img = img.getchannel(0)
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 4:  # RGBA
        arr = arr[:, :, :3]
    if bit_depth == 16:
        arr = arr.astype(np.uint16)
    else:
        arr = arr.astype(np.uint8)
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    return RawImage(width=width, height=height, channels=channels,
                    bit_depth=bit_depth, pixels=arr)


def to_grayscale(image: RawImage) -> np.ndarray:
    """Single-channel float matrix; RGB collapses by channel mean."""
    if image.channels == 1:
        return image.pixels.astype(np.float64)
    if image.channels == 3:
        return image.pixels.astype(np.float64).mean(axis=2)
    raise ValueError(f"expected 1 or 3 channels, got {image.channels}")


def bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers (output px i samples
    input coordinate (i + 0.5) * in/out - 0.5, clamped to the image)."""
    values = np.asarray(values, dtype=np.float64)
    in_h, in_w = values.shape

    def axis_coords(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis_coords(in_h, out_h)
    x0, x1, fx = axis_coords(in_w, out_w)
    # lerp as a + f*(b - a): never leaves [min(a,b), max(a,b)] and is exact
    # for a == b, so constant images survive the [-1024, 1024] mapping with
    # exact endpoints
    low = values[y0, :]
    rows = low + (values[y1, :] - low) * fy[:, None]
    left = rows[:, x0]
    return left + (rows[:, x1] - left) * fx[None, :]


def center_crop_resize(values: np.ndarray, side: int = SIDE, *, crop: bool = True) -> np.ndarray:
    """Center-crop to the largest square, then bilinear resample to side x side.

    ``crop=False`` skips the crop and resamples each axis independently
    (anisotropic direct resize).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("expected a non-empty 2D matrix")
    if crop:
        h, w = values.shape
        s = min(h, w)
        top = (h - s) // 2
        left = (w - s) // 2
        values = values[top:top + s, left:left + s]
    return bilinear_resize(values, side, side)


def normalize_range(values: np.ndarray, bit_depth: int) -> PreprocessedImage:
    """Map [0, 2^bit_depth - 1] samples affinely onto [-1024, 1024]."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    values = np.asarray(values, dtype=np.float64)
    max_sample = float(2 ** bit_depth - 1)
    lo, hi = float(values.min()), float(values.max())
    if lo < 0.0 or hi > max_sample:
        raise PixelRangeError(
            f"samples outside [0, {max_sample:g}] for bit depth {bit_depth}: "
            f"min={lo}, max={hi}"
        )
    return PreprocessedImage(values / max_sample * 2048.0 - 1024.0)


def preprocess_png(data: bytes, *, crop: bool = True) -> PreprocessedImage:
    """Full chain: decode, grayscale, crop/resize to 224, normalize."""
    raw = load_png(data)
    gray = to_grayscale(raw)
    resized = center_crop_resize(gray, SIDE, crop=crop)
    return normalize_range(resized, raw.bit_depth)


def preprocessed_to_csv(image: PreprocessedImage) -> str:
    """Debug dump: 224 CSV rows of 224 full-precision values."""
    lines = [",".join(repr(v) for v in row) for row in image.values.tolist()]
    return "\n".join(lines) + "\n"
