"""Hand-rolled PNG encoder used as the decode oracle.

Writes chunk layout, filter bytes and CRCs directly from the PNG standard
with no imaging library involved, so decoder tests can demand that
decoding returns exactly the array that went in.
"""

import struct
import zlib

import numpy as np

GRAY = 0
RGB = 2
PALETTE = 3
GRAY_ALPHA = 4
RGBA = 6


def png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(
    pixels: np.ndarray,
    bit_depth: int = 8,
    color_type: int = GRAY,
    palette: np.ndarray | None = None,
) -> bytes:
    """Serialize an array to PNG bytes: filter-0 rows, a single IDAT.

    ``pixels`` is (h, w) for gray/palette, (h, w, 2) gray+alpha, (h, w, 3)
    RGB, (h, w, 4) RGBA. 16-bit samples are written big-endian per the
    standard.
    """
    h, w = pixels.shape[:2]
    data = pixels.astype(">u2" if bit_depth == 16 else ">u1")
    raw = b"".join(b"\x00" + data[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    chunks = [png_chunk(b"IHDR", ihdr)]
    if color_type == PALETTE:
        chunks.append(png_chunk(b"PLTE", np.asarray(palette, dtype=np.uint8).tobytes()))
    chunks.append(png_chunk(b"IDAT", zlib.compress(raw)))
    chunks.append(png_chunk(b"IEND", b""))
    return b"\x89PNG\r\n\x1a\n" + b"".join(chunks)


def flip_byte(data: bytes, offset: int) -> bytes:
    """One bit-flipped byte at ``offset``; everything else untouched."""
    out = bytearray(data)
    out[offset] ^= 0xFF
    return bytes(out)
