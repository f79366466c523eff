"""Transformer hypernetwork mapping visible patch tokens to INR weights.

Two heads:
  * transinr — every layer's weight matrix is decoded from learnable
    weight tokens, one token per output column.
  * ginr — only one designated instance-specific layer is decoded; all
    other layers are ordinary shared parameters trained directly.

Biases are always shared trainable parameters, never hypernetwork output.
The encoder consumes visible patch tokens only (masked positions are
dropped, MAE-style) plus the weight tokens; attention is fully
bidirectional across the whole sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import inr
from . import transformer as tf


@dataclass(frozen=True)
class HypernetConfig:
    image_size: int = 64
    patch: int = 8
    d_model: int = 64
    depth: int = 2
    n_heads: int = 4
    inr_width: int = 64
    inr_layers: int = 5
    mode: str = "transinr"  # transinr | ginr
    ginr_specific_layer: int = 2  # 1-based index of the instance-specific matrix
    fourier_frequencies: int = 6
    feature_mode: str = "fourier"

    def __post_init__(self):
        if self.mode not in ("transinr", "ginr"):
            raise ValueError(f"unknown hypernet mode {self.mode!r}")
        if not 1 <= self.ginr_specific_layer <= self.inr_layers:
            raise ValueError("ginr_specific_layer out of range")

    @property
    def num_patches(self):
        side = self.image_size // self.patch
        return side * side

    @property
    def feature_spec(self):
        return inr.CoordinateFeatures(mode=self.feature_mode,
                                      num_frequencies=self.fourier_frequencies)

    @property
    def layer_sizes(self):
        return inr.layer_sizes(self.feature_spec.dim, self.inr_width,
                               self.inr_layers)

    @property
    def predicted_layers(self):
        if self.mode == "transinr":
            return tuple(range(self.inr_layers))
        return (self.ginr_specific_layer - 1,)

    @property
    def weight_token_count(self):
        sizes = self.layer_sizes
        return sum(sizes[l][1] for l in self.predicted_layers)



@dataclass
class HypernetParams:
    cfg: HypernetConfig
    patch_w: ad.Tensor
    patch_b: ad.Tensor
    pos_embed: ad.Tensor
    blocks: list
    lnf_g: ad.Tensor
    lnf_b: ad.Tensor
    weight_tokens: ad.Tensor
    heads: dict  # layer index -> (w, b), zero-initialized output maps
    inr_biases: dict  # layer index -> bias tensor, shared across instances
    shared_phi: dict = field(default_factory=dict)  # ginr: layer index -> w tensor


def init_params(cfg, seed):
    rng = np.random.default_rng(seed)
    d = cfg.d_model
    pdim = cfg.patch * cfg.patch * 3
    patch_w, patch_b = tf.linear_init(rng, pdim, d)
    pos_embed = ad.parameter(tf.trunc_normal(rng, (cfg.num_patches, d)))
    blocks = [tf.make_block(rng, d, cfg.n_heads) for _ in range(cfg.depth)]
    weight_tokens = ad.parameter(tf.trunc_normal(rng, (cfg.weight_token_count, d)))

    sizes = cfg.layer_sizes
    heads = {}
    for l in cfg.predicted_layers:
        in_l = sizes[l][0]
        # small but nonzero: the predicted rows pass through a layernorm,
        # which is ill-conditioned at exactly zero input
        heads[l] = (ad.parameter(tf.trunc_normal(rng, (d, in_l))),
                    ad.parameter(np.zeros(in_l)))

    # Hidden biases start small and positive: predicted weight matrices are
    # zero at init, so a non-positive pre-activation would leave every relu
    # unit (and all gradients upstream of it) permanently at zero.  The
    # output layer has no relu and starts at mid-gray.
    inr_biases = {}
    for l, (_, out_l) in enumerate(sizes):
        if l == len(sizes) - 1:
            inr_biases[l] = ad.parameter(np.full(out_l, 0.5))
        else:
            inr_biases[l] = ad.parameter(rng.uniform(0.01, 0.2, size=out_l))

    # Every layer owns a shared trainable matrix.  Predicted layers treat it
    # as a base the transformer's output is added to; without a base, the
    # optimizer's cheapest early move is to kill the predicted signal (dead
    # relu rows), which freezes the model at a constant image.
    shared_phi = {}
    for l, (in_l, out_l) in enumerate(sizes):
        bound = 1.0 / np.sqrt(in_l)
        shared_phi[l] = ad.parameter(
            rng.uniform(-bound, bound, size=(in_l, out_l)))

    return HypernetParams(cfg=cfg, patch_w=patch_w, patch_b=patch_b,
                          pos_embed=pos_embed, blocks=blocks,
                          lnf_g=ad.parameter(np.ones(d)),
                          lnf_b=ad.parameter(np.zeros(d)),
                          weight_tokens=weight_tokens, heads=heads,
                          inr_biases=inr_biases, shared_phi=shared_phi)


def embed_patches(params, patches, positions):
    """Visible patches [V, p*p*3] + original patch indices -> tokens [V, d]."""
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size and positions.max() >= params.cfg.num_patches:
        raise ValueError("patch position out of range")
    x = ad.add(ad.matmul(ad.constant(patches), params.patch_w), params.patch_b)
    pos = ad.embedding_lookup(params.pos_embed, positions)
    return ad.add(x, pos)


def transformer_forward(seq, params):
    for block in params.blocks:
        seq = tf.block_forward(seq, block)
    return tf._layernorm(seq, params.lnf_g, params.lnf_b)


def predict_weights(seq, params, num_visible):
    """Decode the trailing weight tokens of `seq` into an INRWeights set."""
    cfg = params.cfg
    sizes = cfg.layer_sizes
    expected = num_visible + cfg.weight_token_count
    if seq.shape[0] != expected:
        raise ValueError(
            f"sequence length {seq.shape[0]} != visible {num_visible} "
            f"+ weight tokens {cfg.weight_token_count}")

    layers = []
    offset = num_visible
    for l, (in_l, out_l) in enumerate(sizes):
        if l in params.heads:
            tok = ad.embedding_lookup(seq, np.arange(offset, offset + out_l))
            head_w, head_b = params.heads[l]
            cols = ad.add(ad.matmul(tok, head_w), head_b)  # [out_l, in_l]
            # row-wise layernorm bounds the prediction: without it the
            # residual (a d_model-wide dot product, moving ~d_model times
            # faster than a direct weight under Adam) saturates the relu
            # layers within a few steps, while a small fixed gain starves
            # the conditioning signal and the model ignores its input
            cols = ad.scale(ad.layernorm_lastdim(cols), 1.0 / np.sqrt(in_l))
            w = ad.add(params.shared_phi[l], ad.transpose_last2(cols))
            offset += out_l
        else:
            w = params.shared_phi[l]
        layers.append(inr.LayerWeights(w=w, b=params.inr_biases[l]))
    return inr.INRWeights(layers=layers, activation="relu",
                          feature_spec=cfg.feature_spec)


def hypernet_forward(params, mask, visible_patches):
    """Full pipeline: visible patches under `mask` -> predicted INRWeights."""
    positions = [i for i, _ in visible_patches]
    patch_mat = np.stack([v for _, v in visible_patches])
    tokens = embed_patches(params, patch_mat, positions)
    seq = tf.concat_rows([tokens, params.weight_tokens])
    seq = transformer_forward(seq, params)
    return predict_weights(seq, params, len(positions))


def hypernet_forward_batch(params, visible_lists):
    """Batched pipeline over instances with equal visible counts.

    Returns per-layer (w, b) pairs where predicted matrices are
    [batch, in_l, out_l] tensors and shared layers stay rank 2.
    """
    cfg = params.cfg
    b = len(visible_lists)
    v = len(visible_lists[0])
    if any(len(vis) != v for vis in visible_lists):
        raise ValueError("batched forward requires equal visible counts")
    d = cfg.d_model
    k = cfg.weight_token_count
    t = v + k

    positions = np.concatenate(
        [np.fromiter((i for i, _ in vis), dtype=np.int64, count=v)
         for vis in visible_lists])
    patch_mat = np.concatenate([np.stack([p for _, p in vis])
                                for vis in visible_lists])
    x = tf.linear(ad.constant(patch_mat), params.patch_w, params.patch_b)
    x = ad.add(x, ad.embedding_lookup(params.pos_embed, positions))
    x = ad.reshape(x, (b, v, d))

    wt = ad.embedding_lookup(params.weight_tokens, np.tile(np.arange(k), b))
    seq = tf.concat_rows([x, ad.reshape(wt, (b, k, d))])
    seq = transformer_forward(seq, params)
    flat = ad.reshape(seq, (b * t, d))

    sizes = cfg.layer_sizes
    layers = []
    offset = v
    for l, (in_l, out_l) in enumerate(sizes):
        if l in params.heads:
            idx = (np.arange(b)[:, None] * t
                   + offset + np.arange(out_l)[None, :]).reshape(-1)
            tok = ad.embedding_lookup(flat, idx)  # [b*out_l, d]
            head_w, head_b = params.heads[l]
            cols = ad.add(ad.matmul(tok, head_w), head_b)
            # bounded residual; see predict_weights for why
            cols = ad.scale(ad.layernorm_lastdim(cols), 1.0 / np.sqrt(in_l))
            w = ad.add(ad.transpose_last2(ad.reshape(cols, (b, out_l, in_l))),
                       params.shared_phi[l])
            offset += out_l
        else:
            w = params.shared_phi[l]
        layers.append((w, params.inr_biases[l]))
    return layers


def named_params(params):
    """Stable (name, tensor) ordering used by the optimizer and checkpoints."""
    yield "patch_embed.w", params.patch_w
    yield "patch_embed.b", params.patch_b
    yield "pos_embed", params.pos_embed
    for i, blk in enumerate(params.blocks):
        yield from tf.block_param_items(f"blocks.{i}", blk)
    yield "ln_f.g", params.lnf_g
    yield "ln_f.b", params.lnf_b
    yield "weight_tokens", params.weight_tokens
    for l in sorted(params.heads):
        yield f"heads.{l}.w", params.heads[l][0]
        yield f"heads.{l}.b", params.heads[l][1]
    for l in sorted(params.inr_biases):
        yield f"inr_bias.{l}", params.inr_biases[l]
    for l in sorted(params.shared_phi):
        yield f"shared_phi.{l}", params.shared_phi[l]


def decay_param_names(params):
    names = {"patch_embed.w"}
    for i, blk in enumerate(params.blocks):
        for f in tf.BLOCK_DECAY_FIELDS:
            names.add(f"blocks.{i}.{f}")
    for l in params.heads:
        names.add(f"heads.{l}.w")
    for l in params.shared_phi:
        names.add(f"shared_phi.{l}")
    return names


def count_params(params):
    """Census of trainable parameters, split by role."""
    cfg = params.cfg
    census = {"transformer": 0, "heads": 0, "weight_tokens": 0,
              "shared_phi": 0, "biases": 0}
    head_names = {f"heads.{l}.{s}" for l in params.heads for s in "wb"}
    phi_names = {f"shared_phi.{l}" for l in params.shared_phi}
    bias_names = {f"inr_bias.{l}" for l in params.inr_biases}
    for name, t in named_params(params):
        n = t.data.size
        if name == "weight_tokens":
            census["weight_tokens"] += n
        elif name in head_names:
            census["heads"] += n
        elif name in phi_names:
            census["shared_phi"] += n
        elif name in bias_names:
            census["biases"] += n
        else:
            census["transformer"] += n
    census["total"] = sum(census.values())
    census["mode"] = cfg.mode
    return census
