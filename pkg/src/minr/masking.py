"""Patch grids and deterministic patch masks.

Mask randomness comes from a self-contained SplitMix64 stream plus a
Fisher-Yates shuffle with multiply-shift bounded draws, so the masked set
for a given (grid, strategy, ratio, seed) is identical across runs and
platforms. Masked pixels are filled with mid-gray 0.5 in the masked-image
view; models consume the visible patch list, so the fill only affects
visualization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK_FILL = 0.5

_U64 = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit stream; fully specified, no platform dependence."""

    def __init__(self, seed):
        self.state = int(seed) & _U64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _U64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        return z ^ (z >> 31)

    def next_below(self, n):
        # multiply-shift bounded draw; rejection-free
        return (self.next_u64() * n) >> 64


def derive_seed(*parts):
    """Mix arbitrary integer parts into one 64-bit seed."""
    s = 0x5EED0F
    for part in parts:
        mixer = SplitMix64(s ^ (int(part) & _U64))
        s = mixer.next_u64()
    return s


def fisher_yates(n, seed):
    """Seeded permutation of range(n)."""
    perm = list(range(n))
    rng = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = rng.next_below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PatchGrid:
    image_h: int
    image_w: int
    patch: int

    def __post_init__(self):
        if self.patch <= 0 or self.image_h % self.patch or self.image_w % self.patch:
            raise ValueError(
                f"patch size {self.patch} must divide image {self.image_h}x{self.image_w}")

    @property
    def rows(self):
        return self.image_h // self.patch

    @property
    def cols(self):
        return self.image_w // self.patch

    @property
    def num_patches(self):
        return self.rows * self.cols


@dataclass
class PatchMask:
    grid: PatchGrid
    visible: np.ndarray  # bool [P], True = visible
    strategy: str
    ratio: float  # achieved fraction masked
    seed: int

    @property
    def visible_indices(self):
        return np.flatnonzero(self.visible)

    @property
    def masked_indices(self):
        return np.flatnonzero(~self.visible)

    def inverted(self):
        return PatchMask(self.grid, ~self.visible, self.strategy,
                         1.0 - self.ratio, self.seed)


def make_mask(grid, strategy, ratio, seed):
    ratio = float(ratio)
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"mask ratio must be in [0, 1), got {ratio}")
    p = grid.num_patches
    visible = np.ones(p, dtype=bool)

    if strategy == "random":
        k = round_half_up(ratio * p)
        perm = fisher_yates(p, seed)
        visible[perm[:k]] = False
        achieved = k / p
    elif strategy == "block":
        k = round_half_up(ratio * p)
        achieved = _block_mask(grid, k, seed, visible)
    elif strategy == "grid_alternating":
        achieved = _checkerboard_mask(grid, ratio, visible)
    else:
        raise ValueError(f"unknown mask strategy {strategy!r}")

    return PatchMask(grid=grid, visible=visible, strategy=strategy,
                     ratio=achieved, seed=int(seed) & _U64)


def _block_mask(grid, k, seed, visible):
    # one contiguous rectangle of ~k patches at a seeded anchor
    if k == 0:
        return 0.0
    rows, cols = grid.rows, grid.cols
    bh = max(1, min(rows, round_half_up(math.sqrt(k * rows / cols))))
    bw = max(1, min(cols, round_half_up(k / bh)))
    rng = SplitMix64(seed)
    r0 = rng.next_below(rows - bh + 1)
    c0 = rng.next_below(cols - bw + 1)
    for r in range(r0, r0 + bh):
        visible[r * cols + c0: r * cols + c0 + bw] = False
    return (bh * bw) / grid.num_patches


def _checkerboard_mask(grid, ratio, visible):
    rows, cols = grid.rows, grid.cols
    r_idx, c_idx = np.divmod(np.arange(grid.num_patches), cols)
    odd = (r_idx + c_idx) % 2 == 1
    # two achievable ratios; pick the parity closest to the request
    frac_odd = odd.sum() / grid.num_patches
    frac_even = 1.0 - frac_odd
    if abs(frac_odd - ratio) <= abs(frac_even - ratio):
        visible[odd] = False
        return float(frac_odd)
    visible[~odd] = False
    return float(frac_even)


@dataclass
class MaskedImage:
    masked_image: np.ndarray  # H x W x 3, masked pixels = MASK_FILL
    visible_patches: list  # [(patch index, flat p*p*3 vector)] in patch order


def patchify(image, grid):
    """Image H x W x 3 -> [P, p*p*3] in row-major patch order."""
    h, w, c = image.shape
    p = grid.patch
    x = image.reshape(grid.rows, p, grid.cols, p, c)
    return x.transpose(0, 2, 1, 3, 4).reshape(grid.num_patches, p * p * c)


def unpatchify(patches, grid):
    """[P, p*p*3] -> H x W x 3."""
    p = grid.patch
    x = patches.reshape(grid.rows, grid.cols, p, p, 3)
    return x.transpose(0, 2, 1, 3, 4).reshape(grid.image_h, grid.image_w, 3)


def apply_mask(image, mask):
    grid = mask.grid
    if image.shape != (grid.image_h, grid.image_w, 3):
        raise ValueError(
            f"image shape {image.shape} does not match grid "
            f"{(grid.image_h, grid.image_w, 3)}")
    patches = patchify(image, grid)
    out = patches.copy()
    out[~mask.visible] = MASK_FILL
    vis = [(int(i), patches[i].copy()) for i in mask.visible_indices]
    return MaskedImage(masked_image=unpatchify(out, grid), visible_patches=vis)


def pixel_mask(mask):
    """Per-pixel bool [H*W]; True iff the containing patch is masked."""
    grid = mask.grid
    p = grid.patch
    patch_masked = ~mask.visible.reshape(grid.rows, grid.cols)
    px = np.repeat(np.repeat(patch_masked, p, axis=0), p, axis=1)
    return px.reshape(-1)
