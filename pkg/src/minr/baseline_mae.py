"""Miniature masked autoencoder baseline.

Asymmetric encoder/decoder: the encoder sees visible patch tokens only;
the decoder sees the full-length sequence with a learnable mask token at
masked positions and regresses raw pixels per patch. The loss is taken
over masked-patch pixels only, which is the defining contrast with the
hypernetwork's full-image objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import masking
from . import transformer as tf


@dataclass(frozen=True)
class MaeConfig:
    image_size: int = 64
    patch: int = 8
    d_model: int = 64
    depth: int = 2
    n_heads: int = 4
    d_dec: int = 64  # half the encoder width, MAE-style asymmetry
    dec_depth: int = 2
    dec_heads: int = 4

    @property
    def num_patches(self):
        side = self.image_size // self.patch
        return side * side

    @property
    def patch_dim(self):
        return self.patch * self.patch * 3


@dataclass
class MaeParams:
    cfg: MaeConfig
    patch_w: ad.Tensor
    patch_b: ad.Tensor
    pos_embed: ad.Tensor
    blocks: list
    lnf_g: ad.Tensor
    lnf_b: ad.Tensor
    mask_token: ad.Tensor  # [1, d_model]
    dec_proj_w: ad.Tensor
    dec_proj_b: ad.Tensor
    dec_pos_embed: ad.Tensor
    dec_blocks: list
    dec_lnf_g: ad.Tensor
    dec_lnf_b: ad.Tensor
    head_w: ad.Tensor
    head_b: ad.Tensor


def init_params(cfg, seed):
    rng = np.random.default_rng(seed)
    d, dd = cfg.d_model, cfg.d_dec
    patch_w, patch_b = tf.linear_init(rng, cfg.patch_dim, d)
    dec_proj_w, dec_proj_b = tf.linear_init(rng, d, dd)
    return MaeParams(
        cfg=cfg, patch_w=patch_w, patch_b=patch_b,
        pos_embed=ad.parameter(tf.trunc_normal(rng, (cfg.num_patches, d))),
        blocks=[tf.make_block(rng, d, cfg.n_heads) for _ in range(cfg.depth)],
        lnf_g=ad.parameter(np.ones(d)), lnf_b=ad.parameter(np.zeros(d)),
        mask_token=ad.parameter(tf.trunc_normal(rng, (1, d))),
        dec_proj_w=dec_proj_w, dec_proj_b=dec_proj_b,
        dec_pos_embed=ad.parameter(tf.trunc_normal(rng, (cfg.num_patches, dd))),
        dec_blocks=[tf.make_block(rng, dd, cfg.dec_heads)
                    for _ in range(cfg.dec_depth)],
        dec_lnf_g=ad.parameter(np.ones(dd)), dec_lnf_b=ad.parameter(np.zeros(dd)),
        # zero head: predictions start at zero like the hypernet's INRs
        head_w=ad.parameter(np.zeros((dd, cfg.patch_dim))),
        head_b=ad.parameter(np.zeros(cfg.patch_dim)))


def mae_forward(image, mask, params):
    """Per-patch pixel predictions [P, p*p*3] for the whole grid."""
    cfg = params.cfg
    grid = mask.grid
    if (grid.image_h, grid.image_w) != (cfg.image_size, cfg.image_size) \
            or grid.patch != cfg.patch:
        raise ValueError("mask grid does not match model geometry")
    patches = masking.patchify(np.asarray(image, dtype=np.float64), grid)
    vis_idx = mask.visible_indices

    # encoder over visible tokens only
    x = ad.add(ad.matmul(ad.constant(patches[vis_idx]), params.patch_w),
               params.patch_b)
    x = ad.add(x, ad.embedding_lookup(params.pos_embed, vis_idx))
    for blk in params.blocks:
        x = tf.block_forward(x, blk)
    x = tf._layernorm(x, params.lnf_g, params.lnf_b)

    # full-length decoder input: encoder outputs at visible positions,
    # the shared mask token everywhere else
    aug = tf.concat_rows([x, params.mask_token])  # [V+1, d_model]
    gather = np.full(grid.num_patches, len(vis_idx), dtype=np.int64)
    gather[vis_idx] = np.arange(len(vis_idx))
    dec = ad.embedding_lookup(aug, gather)  # [P, d_model]
    dec = ad.add(ad.matmul(dec, params.dec_proj_w), params.dec_proj_b)
    dec = ad.add(dec, params.dec_pos_embed)
    for blk in params.dec_blocks:
        dec = tf.block_forward(dec, blk)
    dec = tf._layernorm(dec, params.dec_lnf_g, params.dec_lnf_b)
    return ad.add(ad.matmul(dec, params.head_w), params.head_b)


def mae_forward_batch(images, masks, params):
    """Batched forward over instances with equal visible counts: [B, P, ppc]."""
    cfg = params.cfg
    grid = masks[0].grid
    b = len(images)
    v = len(masks[0].visible_indices)
    if any(len(m.visible_indices) != v for m in masks):
        raise ValueError("batched forward requires equal visible counts")
    p_count = grid.num_patches
    d = cfg.d_model

    patch_stack = [masking.patchify(np.asarray(img, dtype=np.float64), grid)
                   for img in images]
    vis_idx = [m.visible_indices for m in masks]
    vis_pix = np.concatenate([patch_stack[i][vis_idx[i]] for i in range(b)])
    positions = np.concatenate(vis_idx)

    x = tf.linear(ad.constant(vis_pix), params.patch_w, params.patch_b)
    x = ad.add(x, ad.embedding_lookup(params.pos_embed, positions))
    x = ad.reshape(x, (b, v, d))
    for blk in params.blocks:
        x = tf.block_forward(x, blk)
    x = tf._layernorm(x, params.lnf_g, params.lnf_b)

    mt = ad.reshape(ad.embedding_lookup(params.mask_token,
                                        np.zeros(b, dtype=np.int64)), (b, 1, d))
    aug = ad.reshape(tf.concat_rows([x, mt]), (b * (v + 1), d))
    gather = np.full((b, p_count), v, dtype=np.int64)
    for i in range(b):
        gather[i, vis_idx[i]] = np.arange(v)
    gather += (np.arange(b)[:, None] * (v + 1))
    dec = ad.embedding_lookup(aug, gather.reshape(-1))
    dec = ad.reshape(tf.linear(dec, params.dec_proj_w, params.dec_proj_b),
                     (b, p_count, cfg.d_dec))
    dec = ad.add(dec, params.dec_pos_embed)
    for blk in params.dec_blocks:
        dec = tf.block_forward(dec, blk)
    dec = tf._layernorm(dec, params.dec_lnf_g, params.dec_lnf_b)
    return tf.linear(dec, params.head_w, params.head_b)


def mae_loss_batch(pred, images, masks):
    """Masked-patches-only MSE averaged over a batch with equal mask counts."""
    grid = masks[0].grid
    b, p_count = pred.shape[0], grid.num_patches
    masked = [m.masked_indices for m in masks]
    if any(mi.size == 0 for mi in masked):
        raise ValueError("mae loss undefined: mask has no masked patches")
    if any(mi.size != masked[0].size for mi in masked):
        raise ValueError("batched loss requires equal masked counts")
    idx = np.concatenate([mi + i * p_count for i, mi in enumerate(masked)])
    flat = ad.reshape(pred, (b * p_count, pred.shape[-1]))
    pred_masked = ad.embedding_lookup(flat, idx)
    target = np.concatenate(
        [masking.patchify(np.asarray(img, dtype=np.float64), grid)[mi]
         for img, mi in zip(images, masked)])
    return ad.mse(pred_masked, ad.constant(target))


def mae_loss(pred, image, mask):
    """MSE over masked-patch pixels only; visible patches contribute nothing."""
    masked_idx = mask.masked_indices
    if masked_idx.size == 0:
        raise ValueError("mae loss undefined: mask has no masked patches")
    patches = masking.patchify(np.asarray(image, dtype=np.float64), mask.grid)
    pred_masked = ad.embedding_lookup(pred, masked_idx)
    return ad.mse(pred_masked, ad.constant(patches[masked_idx]))


def mae_reconstruct(image, mask, params):
    """Predicted pixels at masked patches, ground truth pasted at visible."""
    image = np.asarray(image, dtype=np.float64)
    pred = mae_forward(image, mask, params).data
    patches = masking.patchify(image, mask.grid)
    out = np.clip(pred, 0.0, 1.0)
    out[mask.visible_indices] = patches[mask.visible_indices]
    return masking.unpatchify(out, mask.grid)


def mae_predict_image(image, mask, params):
    """Raw (unpasted) clamped prediction over the full grid."""
    pred = mae_forward(np.asarray(image, dtype=np.float64), mask, params).data
    return masking.unpatchify(np.clip(pred, 0.0, 1.0), mask.grid)


def named_params(params):
    yield "patch_embed.w", params.patch_w
    yield "patch_embed.b", params.patch_b
    yield "pos_embed", params.pos_embed
    for i, blk in enumerate(params.blocks):
        yield from tf.block_param_items(f"blocks.{i}", blk)
    yield "ln_f.g", params.lnf_g
    yield "ln_f.b", params.lnf_b
    yield "mask_token", params.mask_token
    yield "decoder.proj.w", params.dec_proj_w
    yield "decoder.proj.b", params.dec_proj_b
    yield "decoder.pos_embed", params.dec_pos_embed
    for i, blk in enumerate(params.dec_blocks):
        yield from tf.block_param_items(f"decoder.blocks.{i}", blk)
    yield "decoder.ln_f.g", params.dec_lnf_g
    yield "decoder.ln_f.b", params.dec_lnf_b
    yield "head.w", params.head_w
    yield "head.b", params.head_b


def decay_param_names(params):
    names = {"patch_embed.w", "decoder.proj.w", "head.w"}
    for i in range(len(params.blocks)):
        for f in tf.BLOCK_DECAY_FIELDS:
            names.add(f"blocks.{i}.{f}")
    for i in range(len(params.dec_blocks)):
        for f in tf.BLOCK_DECAY_FIELDS:
            names.add(f"decoder.blocks.{i}.{f}")
    return names


def count_params(params):
    total = sum(t.data.size for _, t in named_params(params))
    encoder = sum(t.data.size for n, t in named_params(params)
                  if not n.startswith(("decoder.", "head.", "mask_token")))
    return {"total": total, "encoder": encoder, "decoder": total - encoder,
            "mode": "mae"}
