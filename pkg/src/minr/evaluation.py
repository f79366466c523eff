"""PSNR metric and the ID/OOD x mask-strategy evaluation harness.

Every model evaluated under the same (strategy, ratio, instance) cell sees
an identical mask: evaluation masks come from their own seed namespace,
independent of any training seed. Reconstructions are scored raw and with
ground-truth visible patches pasted in, since pasting is how the baseline
comparison is traditionally presented; masked-region PSNR is unaffected
by pasting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import masking
from .imageio import write_png


def psnr(pred, target, region=None):
    """10*log10(1 / MSE) over the region's pixels and channels, peak 1.0.

    region: bool [H*W] selecting pixels, or None for the full image.
    Identical images give math.inf.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"psnr: shapes {pred.shape} != {target.shape}")
    p = pred.reshape(-1, pred.shape[-1])
    t = target.reshape(-1, target.shape[-1])
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if not region.any():
            raise ValueError("psnr: empty region")
        p, t = p[region], t[region]
    mse = float(((p - t) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def paste_visible(recon, original, mask):
    """Overwrite the reconstruction's visible patches with ground truth."""
    patches = masking.patchify(np.asarray(recon, dtype=np.float64), mask.grid)
    orig = masking.patchify(np.asarray(original, dtype=np.float64), mask.grid)
    patches[mask.visible_indices] = orig[mask.visible_indices]
    return masking.unpatchify(patches, mask.grid)


@dataclass
class EvalRow:
    model_mode: str
    train_domain: str
    test_domain: str
    strategy: str
    ratio: float
    psnr_full: float
    psnr_full_pasted: float
    psnr_masked: float
    instances: int
    param_total: int


EVAL_COLUMNS = list(EvalRow.__dataclass_fields__)


def _strategy_tag(strategy):
    return int.from_bytes(strategy.encode("utf-8")[:8].ljust(8, b"\0"), "little")


def eval_mask(eval_seed, strategy, ratio, instance_index, grid):
    seed = masking.derive_seed(eval_seed, _strategy_tag(strategy),
                               int(round(ratio * 10000)), instance_index)
    return masking.make_mask(grid, strategy, ratio, seed)


def evaluate(model, train_domain, test_splits, strategies, ratios, eval_seed):
    """EvalRow per (test split, strategy, ratio), means over test instances."""
    grid = model.patch_grid
    total = model.census()["total"]
    rows = []
    for split in test_splits:
        for strategy in strategies:
            for ratio in ratios:
                full, pasted, masked_only = [], [], []
                for i, inst in enumerate(split.test):
                    mask = eval_mask(eval_seed, strategy, ratio, i, grid)
                    raw = model.reconstruct(inst.pixels, mask)
                    pst = paste_visible(raw, inst.pixels, mask)
                    region = masking.pixel_mask(mask)
                    full.append(psnr(raw, inst.pixels))
                    pasted.append(psnr(pst, inst.pixels))
                    masked_only.append(psnr(raw, inst.pixels, region))
                rows.append(EvalRow(
                    model_mode=model.mode, train_domain=train_domain,
                    test_domain=split.domain_tag, strategy=strategy,
                    ratio=ratio,
                    psnr_full=_mean(full), psnr_full_pasted=_mean(pasted),
                    psnr_masked=_mean(masked_only),
                    instances=len(split.test), param_total=total))
    return rows


def _mean(values):
    return math.inf if any(math.isinf(v) for v in values) else \
        float(np.mean(values))


def write_report(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=EVAL_COLUMNS)
        writer.writeheader()
        for row in rows:
            d = asdict(row)
            for k in ("psnr_full", "psnr_full_pasted", "psnr_masked"):
                d[k] = "inf" if math.isinf(d[k]) else f"{d[k]:.6f}"
            writer.writerow(d)


def read_report(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def emit_gallery(path, instances, masks, models):
    """PNG grid: one row per instance, columns = masked | models... | truth.

    models: ordered list of (label, reconstruct(image, mask) -> image);
    reconstructions are pasted before display.
    """
    rows = []
    for inst, mask in zip(instances, masks):
        tiles = [masking.apply_mask(inst.pixels, mask).masked_image]
        for _, recon_fn in models:
            tiles.append(paste_visible(recon_fn(inst.pixels, mask),
                                       inst.pixels, mask))
        tiles.append(inst.pixels)
        rows.append(np.concatenate(tiles, axis=1))
    write_png(path, np.concatenate(rows, axis=0))
    return path
