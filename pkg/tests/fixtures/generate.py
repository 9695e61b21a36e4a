"""Regenerate the committed e2e fixture corpus (40 synthetic studies).

Run from the repository root:

    python3 tests/fixtures/generate.py

Positives are drawn brighter than negatives with overlapping base ranges,
so downstream evaluation sees a realistic mid-range AUC instead of a
degenerate 0.5 or 1.0. Two lateral-view rows point at files that do not
exist; the ingest view filter must drop them before any file check.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

OUT = Path(__file__).parent / "e2e"
N_IMAGES = 40
SEED = 20240814


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(pixels: np.ndarray, bit_depth: int, color_type: int) -> bytes:
    """Minimal PNG writer: filter-0 rows, one IDAT, no ancillary chunks."""
    h, w = pixels.shape[:2]
    data = pixels.astype(">u2" if bit_depth == 16 else ">u1")
    raw = b"".join(b"\x00" + data[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, color_type, 0, 0, 0)
    return (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw))
        + _chunk(b"IEND", b"")
    )


def main() -> None:
    rng = np.random.default_rng(SEED)
    images_dir = OUT / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    pos_findings = ("COVID-19", "COVID-19/Pneumonia", "COVID-19/ARDS")
    neg_findings = ("No Finding", "Pneumonia", "Pneumonia/Bacterial", "SARS")
    rows = ["patientid,view,finding,intubated,filename"]
    for i in range(N_IMAGES):
        positive = i % 2 == 0
        base = rng.uniform(110, 160) if positive else rng.uniform(80, 130)
        h = int(rng.integers(48, 129))
        w = int(rng.integers(48, 129))
        kind = i % 4
        if kind == 3:  # 8-bit RGB with slight channel offsets
            arr = np.clip(
                rng.normal(base, 20, size=(h, w, 3)) + np.array([4.0, 0.0, -4.0]),
                0, 255,
            ).astype(np.uint8)
            png = encode_png(arr, 8, 2)
        elif kind == 2:  # 16-bit grayscale
            arr = np.clip(rng.normal(base * 257, 20 * 257, size=(h, w)), 0, 65535)
            png = encode_png(arr.astype(np.uint16), 16, 0)
        else:  # 8-bit grayscale
            arr = np.clip(rng.normal(base, 20, size=(h, w)), 0, 255).astype(np.uint8)
            png = encode_png(arr, 8, 0)
        name = f"fixture{i:03d}.png"
        (images_dir / name).write_bytes(png)

        finding = pos_findings[i % 3] if positive else neg_findings[i % 4]
        if i % 5 == 4:
            intubated = ""  # unknown status, dropped by the intubation task
        else:
            intubated = "Y" if positive else "N"
        view = ("AP", "PA", "AP Supine")[i % 3]
        rows.append(f"p{i:03d},{view},{finding},{intubated},{name}")

    rows.append("p900,L,COVID-19,Y,not-present-0.png")
    rows.append("p901,Lateral,No Finding,N,not-present-1.png")
    (OUT / "metadata.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {N_IMAGES} images and metadata.csv under {OUT}")


if __name__ == "__main__":
    main()
