"""Gradient-check suites: every op, plus the three end-to-end pipelines.

Each suite builds a scalar loss from seeded random inputs and compares
analytic gradients against central finite differences. Inputs are nudged
away from activation kinks so the finite-difference oracle stays valid.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import autodiff as ad
from . import data as data_mod
from . import hypernet
from . import inr
from . import masking
from . import training
from .config import Config

TOLERANCE = 1e-4


def _rand(rng, *shape):
    x = rng.standard_normal(shape)
    # keep magnitudes off the relu/abs kinks for finite differences
    return np.sign(x) * (np.abs(x) + 0.05)


def op_suites():
    """{suite name: (build_loss, params)} covering every op kind."""
    suites = {}

    def add_suite(name, make):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        params, build = make(rng)
        suites[name] = (build, params)

    def simple(op, *shapes):
        def make(rng):
            params = {f"x{i}": ad.parameter(_rand(rng, *s))
                      for i, s in enumerate(shapes)}
            # freeze the readout weighting so every build call is identical
            probe = op(*[ad.constant(p.data) for p in params.values()])
            readout = (None if probe.data.ndim == 0
                       else rng.standard_normal(probe.data.shape))

            def build(ps):
                out = op(*[ps[f"x{i}"] for i in range(len(shapes))])
                if readout is None:
                    return out
                return ad.tmean(ad.mul(out, ad.constant(readout)))
            return params, build
        return make

    add_suite("matmul", simple(ad.matmul, (3, 4), (4, 2)))
    add_suite("matmul_batched", simple(ad.matmul, (2, 3, 4), (2, 4, 3)))
    add_suite("add", simple(ad.add, (3, 4), (3, 4)))
    add_suite("add_bias_broadcast", simple(ad.add, (2, 3, 4), (4,)))
    add_suite("mul", simple(ad.mul, (3, 4), (3, 4)))
    add_suite("mul_gain_broadcast", simple(ad.mul, (3, 4), (4,)))
    add_suite("scale", simple(lambda a: ad.scale(a, -1.7), (3, 4)))
    add_suite("relu", simple(ad.relu, (4, 5)))
    add_suite("gelu", simple(ad.gelu, (4, 5)))
    add_suite("sin", simple(ad.sin, (4, 5)))
    add_suite("softmax_lastdim", simple(ad.softmax_lastdim, (3, 5)))
    add_suite("layernorm_lastdim", simple(ad.layernorm_lastdim, (3, 6)))
    add_suite("sum", simple(ad.tsum, (3, 4)))
    add_suite("mean", simple(ad.tmean, (3, 4)))
    add_suite("mse", simple(ad.mse, (3, 4), (3, 4)))
    add_suite("reshape", simple(lambda a: ad.reshape(a, (2, 6)), (3, 4)))
    add_suite("transpose_last2", simple(ad.transpose_last2, (3, 4)))
    add_suite("concat_lastdim",
              simple(lambda a, b: ad.concat_lastdim([a, b]), (3, 2), (3, 4)))
    add_suite("slice_lastdim", simple(lambda a: ad.slice_lastdim(a, 1, 4), (3, 6)))
    add_suite("embedding_lookup",
              simple(lambda t: ad.embedding_lookup(t, [0, 2, 2, 1]), (4, 3)))
    add_suite("fanout_reuse",
              simple(lambda a: ad.add(ad.tsum(ad.mul(a, a)),
                                      ad.tsum(ad.sin(a))), (3, 3)))
    return suites


def _tiny_config(mode):
    cfg = Config()
    for key, value in {
        "data.size": 4, "data.count": 2, "model.patch_size": 2,
        "model.d_model": 8, "model.depth": 1, "model.heads": 2,
        "model.inr_width": 6, "model.inr_layers": 2,
        "model.fourier_frequencies": 1, "model.mode": mode,
        "baseline.d_dec": 8, "baseline.dec_depth": 1, "baseline.dec_heads": 2,
        "mask.ratio": 0.5,
    }.items():
        cfg.set(key, value)
    return cfg


def pipeline_suite(mode, seed=7):
    """Full forward+loss of one model mode on a tiny 2-patch geometry."""
    cfg = _tiny_config(mode)
    model = training.build_model(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    # nudge zero-initialized heads off the relu kink
    for name, p in model.named_params():
        if not p.data.any():
            p.data[...] = 0.1 * rng.standard_normal(p.data.shape)
    image = rng.uniform(0.1, 0.9, size=(4, 4, 3))
    inst = data_mod.ImageInstance(id="g0", pixels=image, domain_tag="gradcheck")
    mask = masking.make_mask(model.patch_grid, "random", 0.5, seed=11)
    params = dict(model.named_params())

    def build(_params):
        return model.loss([inst], [mask])

    return build, params


def run_all(tolerance=TOLERANCE, log=None):
    """Run every suite; returns {name: report}, overall pass iff all pass."""
    reports = {}
    for name, (build, params) in op_suites().items():
        reports[name] = ad.grad_check(build, params, tolerance=tolerance)
    for mode in ("transinr", "ginr", "mae"):
        build, params = pipeline_suite(mode)
        reports[f"pipeline_{mode}"] = ad.grad_check(build, params,
                                                    tolerance=tolerance)
    if log is not None:
        for name, rep in reports.items():
            status = "pass" if rep["passed"] else "FAIL"
            log(f"{name:24s} max_rel_err {rep['max_relative_error']:.3e}  {status}")
    return reports
