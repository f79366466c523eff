"""Datasets: directory ingestion and seeded synthetic two-domain generator.

The synthetic domains stand in for real face/scene datasets at desk scale:
`faces_like` images are smooth, centered, and left-right symmetric (low
frequency content); `scenes_like` images carry oriented stripes and sharp
rectangular occluders (markedly more energy above a quarter of Nyquist).
That spectral gap is what the out-of-distribution experiments lean on.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .imageio import from_uint8
from .masking import round_half_up

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm", ".pnm")


@dataclass
class ImageInstance:
    id: str
    pixels: np.ndarray  # H x W x 3 float64 in [0, 1]
    domain_tag: str


@dataclass
class DatasetSplit:
    train: list
    test: list
    domain_tag: str
    split_seed: int

    @property
    def all_instances(self):
        return self.train + self.test

    def find(self, instance_id):
        for inst in self.all_instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(f"no instance with id {instance_id!r}")


def _id_hash(instance_id, seed):
    digest = hashlib.sha256(f"{seed}:{instance_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def split_instances(instances, domain_tag, split_seed, test_fraction=0.1):
    """Deterministic split by hashed id; stable under reordering."""
    inst = sorted(instances, key=lambda i: i.id)
    n_test = max(1, round_half_up(test_fraction * len(inst))) if len(inst) > 1 else 0
    ranked = sorted(inst, key=lambda i: _id_hash(i.id, split_seed))
    test_ids = {i.id for i in ranked[:n_test]}
    return DatasetSplit(train=[i for i in inst if i.id not in test_ids],
                        test=[i for i in inst if i.id in test_ids],
                        domain_tag=domain_tag, split_seed=split_seed)


def load_dir(path, target_size, patch_size, split_seed=0, domain_tag=None):
    """Load a directory of PNG/PPM files: center-crop, resize, 90/10 split."""
    if target_size % patch_size:
        raise ValueError(
            f"target size {target_size} not divisible by patch {patch_size}")
    path = Path(path)
    files = sorted(p for p in path.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES)
    instances = []
    for p in files:
        try:
            pixels = _load_and_resize(p, target_size)
        except Exception as exc:  # unreadable files are skipped, not fatal
            log.warning("skipping unreadable image %s: %s", p, exc)
            continue
        instances.append(ImageInstance(id=p.stem, pixels=pixels,
                                       domain_tag=domain_tag or path.name))
    if not instances:
        raise ValueError(f"no readable images in {path}")
    return split_instances(instances, domain_tag or path.name, split_seed)


def _load_and_resize(path, target_size):
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        w, h = rgb.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        rgb = rgb.crop((left, top, left + side, top + side))
        if side != target_size:
            rgb = rgb.resize((target_size, target_size), Image.BILINEAR)
        return from_uint8(np.asarray(rgb, dtype=np.uint8))


# ---------------------------------------------------------------------------
# synthetic domains


def synth_domain(kind, count, size, seed, split_seed=None):
    """Deterministic synthetic dataset of `count` size x size images."""
    if kind not in ("faces_like", "scenes_like"):
        raise ValueError(f"unknown synthetic domain {kind!r}")
    if count < 2:
        raise ValueError("need at least 2 instances")
    maker = _faces_like if kind == "faces_like" else _scenes_like
    instances = []
    for n in range(count):
        rng = np.random.default_rng([seed, n, 0xD07A])
        pixels = maker(rng, size)
        instances.append(ImageInstance(id=f"{kind}-{n:04d}", pixels=pixels,
                                       domain_tag=kind))
    return split_instances(instances, kind,
                           seed if split_seed is None else split_seed)


def _coord_maps(size):
    ax = (np.arange(size) + 0.5) / size
    return np.meshgrid(ax, ax, indexing="xy")  # gx horizontal, gy vertical


def _gaussian_blob(gx, gy, cx, cy, sx, sy):
    return np.exp(-0.5 * (((gx - cx) / sx) ** 2 + ((gy - cy) / sy) ** 2))


def _faces_like(rng, size):
    """Centered smooth radial blobs with mirror symmetry; low frequency."""
    gx, gy = _coord_maps(size)
    top, bottom = rng.uniform(0.2, 0.8, size=3), rng.uniform(0.2, 0.8, size=3)
    img = top[None, None, :] * (1 - gy[..., None]) + bottom[None, None, :] * gy[..., None]

    # large central blob
    color = rng.uniform(0.1, 0.9, size=3)
    blob = _gaussian_blob(gx, gy, 0.5 + rng.uniform(-0.05, 0.05),
                          0.5 + rng.uniform(-0.05, 0.05),
                          rng.uniform(0.18, 0.30), rng.uniform(0.22, 0.35))
    img += blob[..., None] * (color - img) * rng.uniform(0.6, 0.95)

    # mirrored blob pairs (eye-like structure)
    for _ in range(rng.integers(1, 3)):
        dx = rng.uniform(0.10, 0.22)
        cy = rng.uniform(0.35, 0.55)
        s = rng.uniform(0.05, 0.09)
        col = rng.uniform(0.0, 1.0, size=3)
        amp = rng.uniform(0.4, 0.9)
        for cx in (0.5 - dx, 0.5 + dx):
            b = _gaussian_blob(gx, gy, cx, cy, s, s)
            img += b[..., None] * (col - img) * amp
    return np.clip(img, 0.0, 1.0)


def _scenes_like(rng, size):
    """Oriented gradients, stripes, and sharp rectangles; high frequency."""
    gx, gy = _coord_maps(size)
    angle = rng.uniform(0, 2 * math.pi)
    t = gx * math.cos(angle) + gy * math.sin(angle)
    c0, c1 = rng.uniform(0.1, 0.9, size=3), rng.uniform(0.1, 0.9, size=3)
    tn = (t - t.min()) / (t.max() - t.min())
    img = c0[None, None, :] * (1 - tn[..., None]) + c1[None, None, :] * tn[..., None]

    # oriented stripes above the quarter-Nyquist band
    stripe_angle = rng.uniform(0, math.pi)
    cycles = rng.uniform(10.0, 20.0)
    phase = rng.uniform(0, 2 * math.pi)
    s = gx * math.cos(stripe_angle) + gy * math.sin(stripe_angle)
    stripes = 0.5 * (1 + np.sin(2 * math.pi * cycles * s + phase))
    amp = rng.uniform(0.15, 0.35)
    img = (1 - amp) * img + amp * stripes[..., None]

    # rectangular occluders with hard edges
    for _ in range(rng.integers(3, 7)):
        x0, y0 = rng.uniform(0.0, 0.7, size=2)
        wr, hr = rng.uniform(0.1, 0.3, size=2)
        box = ((gx >= x0) & (gx < x0 + wr) & (gy >= y0) & (gy < y0 + hr))
        col = rng.uniform(0.0, 1.0, size=3)
        img = np.where(box[..., None], col[None, None, :], img)
    return np.clip(img, 0.0, 1.0)


def highband_energy(image, fraction=0.25):
    """Mean spectral power at radial frequency above `fraction` * Nyquist."""
    img = np.asarray(image, dtype=np.float64)
    h, w, _ = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    radius = np.sqrt(fx ** 2 + fy ** 2)
    band = radius > fraction * 0.5
    total = 0.0
    for c in range(3):
        spec = np.abs(np.fft.fft2(img[:, :, c])) ** 2 / (h * w)
        total += spec[band].mean()
    return total / 3.0
