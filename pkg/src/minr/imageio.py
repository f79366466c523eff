"""8-bit RGB image reading and writing (PNG via Pillow, PPM P6 directly).

Loading dequantizes by an exact /255; saving quantizes with round-half-up
so a save/load round trip of quantized data is exact.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def to_uint8(image):
    """Float [0,1] H x W x 3 -> uint8, round half up."""
    x = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def from_uint8(raw):
    return np.asarray(raw, dtype=np.float64) / 255.0


def write_png(path, image):
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def write_ppm(path, image):
    raw = to_uint8(image)
    h, w, _ = raw.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(raw.tobytes())


def read_image(path):
    """PNG or PPM(P6) -> float64 H x W x 3 in [0,1]."""
    path = str(path)
    if path.lower().endswith((".ppm", ".pnm")):
        return _read_ppm(path)
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return from_uint8(np.asarray(rgb, dtype=np.uint8))


def _read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"not a P6 ppm: {path}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"unsupported ppm maxval {maxval}")
    pos += 1  # single whitespace after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=pos)
    return from_uint8(raw.reshape(h, w, 3))
