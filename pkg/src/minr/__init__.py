"""Masked implicit neural representations at desk scale.

A transformer hypernetwork maps the visible patches of a masked image to
the weights of a coordinate MLP, trained with a full-image L2 objective
and compared against a miniature masked autoencoder on in-domain and
out-of-distribution mask reconstruction.
"""

from .autodiff import Tensor, apply, backward, grad_check
from .config import Config
from .evaluation import evaluate, psnr
from .inr import CoordinateFeatures, INRWeights, encode, forward, make_grid, render
from .masking import PatchGrid, PatchMask, apply_mask, make_mask, pixel_mask
from .training import build_model, instance_loss, load_dataset, train

__version__ = "0.1.0"

__all__ = [
    "Config", "CoordinateFeatures", "INRWeights", "PatchGrid", "PatchMask",
    "Tensor", "apply", "apply_mask", "backward", "build_model", "encode",
    "evaluate", "forward", "grad_check", "instance_loss", "load_dataset",
    "make_grid", "make_mask", "pixel_mask", "psnr", "render", "train",
]
