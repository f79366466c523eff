"""Training: full-image L2 objective, Adam, deterministic loop, checkpoints.

The hypernetwork objective averages a per-instance loss that sums squared
RGB residuals per pixel and means over pixels, computed over every pixel
of the original image, masked and visible alike. The MAE baseline instead
uses its masked-patches-only loss. Everything downstream of the three
named seeds (data, mask, init/order) is deterministic, so two runs with
identical configs produce byte-identical traces and checkpoints.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import baseline_mae as mae
from . import data as data_mod
from . import hypernet
from . import inr
from . import masking
from .config import Config, parse_text

CKPT_MAGIC = b"MINRCKPT"
CKPT_VERSION = 1


class TrainingAborted(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# losses


def instance_loss(pred, target):
    """Mean over pixels of the squared L2 norm of the RGB residual.

    Sums the 3 channels, means over the H*W pixels, over ALL pixels.
    """
    if not isinstance(target, ad.Tensor):
        target = ad.constant(target)
    if pred.shape != target.shape:
        raise ad.ShapeError(
            f"instance_loss: shapes {pred.shape} and {target.shape} differ")
    n_pixels = pred.shape[0]
    diff = ad.add(pred, ad.scale(target, -1.0))
    return ad.scale(ad.tsum(ad.mul(diff, diff)), 1.0 / n_pixels)


def batch_mean(losses):
    total = losses[0]
    for extra in losses[1:]:
        total = ad.add(total, extra)
    return ad.scale(total, 1.0 / len(losses))


# ---------------------------------------------------------------------------
# models under a common training interface


class MinrModel:
    """Hypernetwork + INR, transinr or ginr head."""

    def __init__(self, cfg: hypernet.HypernetConfig, seed):
        self.cfg = cfg
        self.mode = cfg.mode
        self.params = hypernet.init_params(cfg, seed)
        grid = inr.make_grid(cfg.image_size, cfg.image_size)
        self._features = inr.encode(grid, cfg.feature_spec)

    def predict_weights(self, image, mask):
        vis = masking.apply_mask(image, mask).visible_patches
        return hypernet.hypernet_forward(self.params, mask, vis)

    def loss(self, instances, masks):
        vis_lists = [masking.apply_mask(inst.pixels, m).visible_patches
                     for inst, m in zip(instances, masks)]
        counts = {len(v) for v in vis_lists}
        if len(counts) == 1:
            b = len(instances)
            layers = hypernet.hypernet_forward_batch(self.params, vis_lists)
            pred = inr.forward_batched(layers, self._features, b)
            target = np.stack([inst.pixels.reshape(-1, 3)
                               for inst in instances])
            n_pix = target.shape[1]
            diff = ad.add(pred, ad.scale(ad.constant(target), -1.0))
            return ad.scale(ad.tsum(ad.mul(diff, diff)), 1.0 / (b * n_pix))
        # heterogeneous visible counts fall back to the per-instance path
        losses = []
        for inst, mask, vis in zip(instances, masks, vis_lists):
            weights = hypernet.hypernet_forward(self.params, mask, vis)
            pred = inr.forward(weights, self._features)
            losses.append(instance_loss(pred, inst.pixels.reshape(-1, 3)))
        return batch_mean(losses)

    def reconstruct(self, image, mask):
        """Raw clamped reconstruction at the training resolution."""
        weights = self.predict_weights(image, mask)
        rgb = inr.forward(weights, self._features).data
        size = self.cfg.image_size
        return np.clip(rgb, 0.0, 1.0).reshape(size, size, 3)

    def named_params(self):
        return list(hypernet.named_params(self.params))

    def decay_names(self):
        return hypernet.decay_param_names(self.params)

    def census(self):
        return hypernet.count_params(self.params)

    @property
    def patch_grid(self):
        return masking.PatchGrid(self.cfg.image_size, self.cfg.image_size,
                                 self.cfg.patch)


class MaeModel:
    def __init__(self, cfg: mae.MaeConfig, seed):
        self.cfg = cfg
        self.mode = "mae"
        self.params = mae.init_params(cfg, seed)

    def loss(self, instances, masks):
        counts = {len(m.visible_indices) for m in masks}
        if len(counts) == 1:
            images = [inst.pixels for inst in instances]
            pred = mae.mae_forward_batch(images, masks, self.params)
            return mae.mae_loss_batch(pred, images, masks)
        losses = []
        for inst, mask in zip(instances, masks):
            pred = mae.mae_forward(inst.pixels, mask, self.params)
            losses.append(mae.mae_loss(pred, inst.pixels, mask))
        return batch_mean(losses)

    def reconstruct(self, image, mask):
        return mae.mae_predict_image(image, mask, self.params)

    def reconstruct_pasted(self, image, mask):
        return mae.mae_reconstruct(image, mask, self.params)

    def named_params(self):
        return list(mae.named_params(self.params))

    def decay_names(self):
        return mae.decay_param_names(self.params)

    def census(self):
        return mae.count_params(self.params)

    @property
    def patch_grid(self):
        return masking.PatchGrid(self.cfg.image_size, self.cfg.image_size,
                                 self.cfg.patch)


def build_model(cfg: Config, seed=None):
    mode = cfg["model.mode"]
    seed = cfg["train.seed"] if seed is None else seed
    if mode in ("transinr", "ginr"):
        hcfg = hypernet.HypernetConfig(
            image_size=cfg["data.size"], patch=cfg["model.patch_size"],
            d_model=cfg["model.d_model"], depth=cfg["model.depth"],
            n_heads=cfg["model.heads"], inr_width=cfg["model.inr_width"],
            inr_layers=cfg["model.inr_layers"], mode=mode,
            ginr_specific_layer=cfg["model.ginr_specific_layer"],
            fourier_frequencies=cfg["model.fourier_frequencies"],
            feature_mode=cfg["model.feature_mode"])
        return MinrModel(hcfg, seed)
    if mode == "mae":
        mcfg = mae.MaeConfig(
            image_size=cfg["data.size"], patch=cfg["model.patch_size"],
            d_model=cfg["model.d_model"], depth=cfg["model.depth"],
            n_heads=cfg["model.heads"], d_dec=cfg["baseline.d_dec"],
            dec_depth=cfg["baseline.dec_depth"],
            dec_heads=cfg["baseline.dec_heads"])
        return MaeModel(mcfg, seed)
    raise ValueError(f"unknown model mode {mode!r}")


def load_dataset(cfg: Config, source=None):
    source = source or cfg["data.source"]
    kind, _, arg = source.partition(":")
    if kind == "synth":
        return data_mod.synth_domain(arg, cfg["data.count"], cfg["data.size"],
                                     cfg["data.seed"])
    if kind == "dir":
        return data_mod.load_dir(arg, cfg["data.size"], cfg["model.patch_size"],
                                 split_seed=cfg["data.seed"])
    raise ValueError(f"unknown data source {source!r}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(named, state, lr, beta1, beta2, eps, weight_decay, decay_names):
    """Textbook Adam with bias correction; decoupled decay on matrices only."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in named:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if weight_decay and name in decay_names:
            p.data -= lr * weight_decay * p.data
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# checkpoints


def _write_tensor(buf, name, arr):
    nb = name.encode("utf-8")
    buf.write(struct.pack("<I", len(nb)))
    buf.write(nb)
    buf.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        buf.write(struct.pack("<Q", d))
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_tensor(buf):
    (nlen,) = struct.unpack("<I", buf.read(4))
    name = buf.read(nlen).decode("utf-8")
    (rank,) = struct.unpack("<I", buf.read(4))
    dims = [struct.unpack("<Q", buf.read(8))[0] for _ in range(rank)]
    count = int(np.prod(dims)) if dims else 1
    arr = np.frombuffer(buf.read(count * 8), dtype="<f8").reshape(dims).copy()
    return name, arr


def save_checkpoint(path, cfg, step, model, adam_state):
    tensors = {f"param.{n}": p.data for n, p in model.named_params()}
    for n in adam_state.m:
        tensors[f"adam.m.{n}"] = adam_state.m[n]
        tensors[f"adam.v.{n}"] = adam_state.v[n]
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", CKPT_VERSION))
    buf.write(struct.pack("<Q", step))
    buf.write(struct.pack("<Q", adam_state.t))
    cfg_bytes = cfg.to_text().encode("utf-8")
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        _write_tensor(buf, name, tensors[name])
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Returns (config, step, adam_t, tensors dict)."""
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(8) != CKPT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (step,) = struct.unpack("<Q", buf.read(8))
    (adam_t,) = struct.unpack("<Q", buf.read(8))
    (clen,) = struct.unpack("<I", buf.read(4))
    cfg = parse_text(buf.read(clen).decode("utf-8"))
    (n,) = struct.unpack("<I", buf.read(4))
    tensors = dict(_read_tensor(buf) for _ in range(n))
    return cfg, step, adam_t, tensors


def restore_model(path):
    """Rebuild a model (and optimizer state) from a checkpoint."""
    cfg, step, adam_t, tensors = load_checkpoint(path)
    model = build_model(cfg)
    state = AdamState(t=adam_t)
    for name, p in model.named_params():
        key = f"param.{name}"
        if key not in tensors:
            raise ValueError(f"checkpoint missing parameter {name}")
        if tensors[key].shape != p.data.shape:
            raise ValueError(f"checkpoint shape mismatch for {name}")
        p.data[...] = tensors[key]
        mkey, vkey = f"adam.m.{name}", f"adam.v.{name}"
        if mkey in tensors:
            state.m[name] = tensors[mkey].copy()
            state.v[name] = tensors[vkey].copy()
    return model, cfg, step, state


# ---------------------------------------------------------------------------
# the loop


def _mask_for(cfg, grid, instance_index, epoch):
    if cfg["mask.fixed"]:
        seed = masking.derive_seed(cfg["mask.seed"], instance_index)
    else:
        seed = masking.derive_seed(cfg["mask.seed"], instance_index, epoch)
    return masking.make_mask(grid, cfg["mask.strategy"], cfg["mask.ratio"], seed)


def _batch_plan(cfg, n_instances, step):
    """Deterministic (epoch, instance indices) for a 1-based step number."""
    batch = min(cfg["train.batch_size"], n_instances)
    per_epoch = max(1, n_instances // batch)
    epoch = (step - 1) // per_epoch
    slot = (step - 1) % per_epoch
    order = masking.fisher_yates(
        n_instances, masking.derive_seed(cfg["train.seed"], 0x0ED4, epoch))
    return epoch, order[slot * batch:(slot + 1) * batch]


def train(cfg: Config, out_dir, resume_from=None, dataset=None, log=print):
    """Run the training loop; returns (final checkpoint path, loss trace)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(cfg.to_text())

    if dataset is None:
        dataset = load_dataset(cfg)
    instances = dataset.train

    if resume_from is not None:
        model, ckpt_cfg, start_step, adam_state = restore_model(resume_from)
        # a resumed run may extend train.steps; everything else must match
        spliced = ckpt_cfg.copy()
        spliced.set("train.steps", cfg["train.steps"])
        if spliced.to_text() != cfg.to_text():
            raise ValueError("resume config does not match checkpoint config")
    else:
        model = build_model(cfg)
        start_step = 0
        adam_state = AdamState()

    grid = model.patch_grid
    steps = cfg["train.steps"]
    named = model.named_params()
    decay_names = model.decay_names()
    trace = []
    trace_path = out / "loss_trace.csv"
    ckpt_path = out / "checkpoint.bin"
    last_good = resume_from

    with open(trace_path, "w", newline="") as tf_:
        writer = csv.writer(tf_)
        writer.writerow(["step", "loss"])
        for step in range(start_step + 1, steps + 1):
            epoch, idx = _batch_plan(cfg, len(instances), step)
            batch = [instances[i] for i in idx]
            masks = [_mask_for(cfg, grid, i, epoch) for i in idx]
            for _, p in named:
                p.zero_grad()
            loss = model.loss(batch, masks)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingAborted(
                    f"non-finite loss at step {step}; last good checkpoint: "
                    f"{last_good}")
            ad.backward(loss)
            adam_step(named, adam_state, cfg["train.learning_rate"],
                      cfg["train.beta1"], cfg["train.beta2"], cfg["train.eps"],
                      cfg["train.weight_decay"], decay_names)
            trace.append((step, value))
            writer.writerow([step, f"{value:.17g}"])
            if step % cfg["train.checkpoint_every"] == 0 or step == steps:
                save_checkpoint(ckpt_path, cfg, step, model, adam_state)
                last_good = ckpt_path
            if log is not None and (step % 100 == 0 or step == 1):
                log(f"step {step}/{steps} loss {value:.6f}")

    if steps == 0 or start_step >= steps:
        save_checkpoint(ckpt_path, cfg, start_step, model, adam_state)
    return ckpt_path, trace
