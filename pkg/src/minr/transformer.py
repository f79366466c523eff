"""Pre-norm transformer encoder blocks on the autodiff engine.

Shared by the hypernetwork and the MAE baseline. Multi-head attention is
computed head by head with 2-D matmuls; sequences are small enough that
the per-head loop costs nothing and keeps the op set minimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

INIT_STD = 0.02


def trunc_normal(rng, shape, std=INIT_STD):
    """Normal(0, std) resampled until within 2 std; deterministic per rng."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def linear_init(rng, d_in, d_out, std=INIT_STD):
    w = ad.parameter(trunc_normal(rng, (d_in, d_out), std))
    b = ad.parameter(np.zeros(d_out))
    return w, b


@dataclass
class BlockParams:
    ln1_g: ad.Tensor
    ln1_b: ad.Tensor
    wq: ad.Tensor
    bq: ad.Tensor
    wk: ad.Tensor
    bk: ad.Tensor
    wv: ad.Tensor
    bv: ad.Tensor
    wo: ad.Tensor
    bo: ad.Tensor
    ln2_g: ad.Tensor
    ln2_b: ad.Tensor
    w1: ad.Tensor
    b1: ad.Tensor
    w2: ad.Tensor
    b2: ad.Tensor
    n_heads: int


def make_block(rng, d_model, n_heads, ffn_mult=4):
    if d_model % n_heads:
        raise ValueError(f"d_model {d_model} not divisible by heads {n_heads}")
    d_ff = ffn_mult * d_model
    wq, bq = linear_init(rng, d_model, d_model)
    wk, bk = linear_init(rng, d_model, d_model)
    wv, bv = linear_init(rng, d_model, d_model)
    wo, bo = linear_init(rng, d_model, d_model)
    w1, b1 = linear_init(rng, d_model, d_ff)
    w2, b2 = linear_init(rng, d_ff, d_model)
    return BlockParams(
        ln1_g=ad.parameter(np.ones(d_model)), ln1_b=ad.parameter(np.zeros(d_model)),
        wq=wq, bq=bq, wk=wk, bk=bk, wv=wv, bv=bv, wo=wo, bo=bo,
        ln2_g=ad.parameter(np.ones(d_model)), ln2_b=ad.parameter(np.zeros(d_model)),
        w1=w1, b1=b1, w2=w2, b2=b2, n_heads=n_heads)


def _layernorm(x, g, b):
    return ad.add(ad.mul(ad.layernorm_lastdim(x), g), b)


def linear(x, w, b):
    """x @ w + b for rank-2 or batched rank-3 x (flattened through 2-D)."""
    if x.data.ndim == 2:
        return ad.add(ad.matmul(x, w), b)
    lead = x.shape[:-1]
    flat = ad.reshape(x, (int(np.prod(lead)), x.shape[-1]))
    y = ad.add(ad.matmul(flat, w), b)
    return ad.reshape(y, lead + (w.shape[-1],))


def _attention(x, p):
    d_model = x.shape[-1]
    dk = d_model // p.n_heads
    q = linear(x, p.wq, p.bq)
    k = linear(x, p.wk, p.bk)
    v = linear(x, p.wv, p.bv)
    heads = []
    for h in range(p.n_heads):
        lo, hi = h * dk, (h + 1) * dk
        qh = ad.slice_lastdim(q, lo, hi)
        kh = ad.slice_lastdim(k, lo, hi)
        vh = ad.slice_lastdim(v, lo, hi)
        scores = ad.scale(ad.matmul(qh, ad.transpose_last2(kh)), 1.0 / math.sqrt(dk))
        heads.append(ad.matmul(ad.softmax_lastdim(scores), vh))
    cat = heads[0] if len(heads) == 1 else ad.concat_lastdim(heads)
    return linear(cat, p.wo, p.bo)


def block_forward(x, p):
    """Pre-norm: x + attn(ln(x)), then x + ffn(ln(x))."""
    x = ad.add(x, _attention(_layernorm(x, p.ln1_g, p.ln1_b), p))
    h = _layernorm(x, p.ln2_g, p.ln2_b)
    h = linear(ad.gelu(linear(h, p.w1, p.b1)), p.w2, p.b2)
    return ad.add(x, h)


def concat_rows(tensors):
    """Concatenate [n_i, d] tensors along rows using only last-dim ops."""
    flipped = [ad.transpose_last2(t) for t in tensors]
    if len(flipped) == 1:
        return tensors[0]
    return ad.transpose_last2(ad.concat_lastdim(flipped))


def block_param_items(prefix, p):
    for name in ("ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
                 "wo", "bo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2"):
        yield f"{prefix}.{name}", getattr(p, name)


# matrices that take decoupled weight decay (not biases, norms, embeddings)
BLOCK_DECAY_FIELDS = ("wq", "wk", "wv", "wo", "w1", "w2")
