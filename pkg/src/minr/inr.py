"""Coordinate-based MLP mapping (x, y) in [-1, 1]^2 to RGB.

The weight set is an ordered list of (W, b) layers whose entries may be
plain parameters or tensors produced by a hypernetwork; forward runs
through the autodiff engine either way. Coordinates are pixel centers
normalized per axis, so a fitted function can be rendered at any
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class CoordinateFeatures:
    mode: str = "fourier"  # identity | fourier
    num_frequencies: int = 6
    base_frequency: float = 1.0

    def __post_init__(self):
        if self.mode not in ("identity", "fourier"):
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.num_frequencies < 0:
            raise ValueError("num_frequencies must be >= 0")

    @property
    def dim(self):
        if self.mode == "identity":
            return 2
        return 2 + 4 * self.num_frequencies


@dataclass(frozen=True)
class CoordinateGrid:
    height: int
    width: int
    coords: np.ndarray = field(compare=False)  # [H*W, 2] rows of (x, y)


def make_grid(height, width):
    """Pixel centers mapped affinely into [-1, 1] per axis.

    Row i is pixel (i // W, i % W). A 1-pixel axis maps to 0.
    """
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    ys = _axis_centers(height)
    xs = _axis_centers(width)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    return CoordinateGrid(height=height, width=width, coords=coords)


def _axis_centers(n):
    if n == 1:
        return np.zeros(1)
    # pixel k center at (k + 0.5)/n of the axis, stretched to [-1, 1]
    return (2.0 * (np.arange(n) + 0.5) / n) - 1.0


def encode(grid, spec):
    """Feature matrix [H*W, spec.dim] for the grid under the feature spec."""
    xy = grid.coords
    if spec.mode == "identity":
        return xy.copy()
    parts = [xy]
    for k in range(spec.num_frequencies):
        freq = (2.0 ** k) * np.pi * spec.base_frequency
        for axis in (0, 1):
            col = freq * xy[:, axis:axis + 1]
            parts.append(np.sin(col))
            parts.append(np.cos(col))
    return np.concatenate(parts, axis=1)


@dataclass
class LayerWeights:
    w: ad.Tensor  # [in_l, out_l]
    b: ad.Tensor  # [out_l]


@dataclass
class INRWeights:
    layers: list  # of LayerWeights
    activation: str = "relu"  # relu | sin
    feature_spec: CoordinateFeatures = field(default_factory=CoordinateFeatures)

    def __post_init__(self):
        if self.activation not in ("relu", "sin"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.layers) < 2:
            raise ValueError("an INR needs at least 2 layers")
        dims = self.layer_dims
        if dims[0] != self.feature_spec.dim:
            raise ValueError(
                f"first layer expects {dims[0]} inputs, features give "
                f"{self.feature_spec.dim}")

    @property
    def layer_dims(self):
        dims = [self.layers[0].w.shape[0]]
        for lw in self.layers:
            if lw.w.shape[0] != dims[-1]:
                raise ValueError(
                    f"layer chain broken: {dims[-1]} -> {lw.w.shape}")
            dims.append(lw.w.shape[1])
        return dims


def layer_sizes(feature_dim, hidden, depth, out_dim=3):
    """[(in, out)] for a `depth`-layer MLP."""
    dims = [feature_dim] + [hidden] * (depth - 1) + [out_dim]
    return list(zip(dims[:-1], dims[1:]))


def forward(weights, features):
    """Evaluate the MLP on a feature matrix; returns a [H*W, 3] tensor.

    Output is unclamped; clamping to [0, 1] happens only at image export.
    """
    x = features if isinstance(features, ad.Tensor) else ad.constant(features)
    if x.shape[-1] != weights.layers[0].w.shape[0]:
        raise ad.ShapeError(
            f"feature dim {x.shape[-1]} != first layer input "
            f"{weights.layers[0].w.shape[0]}")
    act = ad.relu if weights.activation == "relu" else ad.sin
    last = len(weights.layers) - 1
    for i, lw in enumerate(weights.layers):
        x = ad.add(ad.matmul(x, lw.w), lw.b)
        if i != last:
            x = act(x)
    return x


def forward_batched(layer_pairs, features, batch, activation="relu"):
    """Evaluate a batch of MLPs whose matrices may be per-instance.

    layer_pairs: per-layer (w, b); w is [batch, in, out] for per-instance
    matrices or plain [in, out] for shared ones. Returns [batch, H*W, 3].
    """
    n_rows = features.shape[0]
    x = ad.constant(np.broadcast_to(features, (batch,) + features.shape).copy())
    act = ad.relu if activation == "relu" else ad.sin
    last = len(layer_pairs) - 1
    for i, (w, b) in enumerate(layer_pairs):
        if w.data.ndim == 2:
            flat = ad.reshape(x, (batch * n_rows, x.shape[-1]))
            x = ad.reshape(ad.add(ad.matmul(flat, w), b),
                           (batch, n_rows, w.shape[-1]))
        else:
            x = ad.add(ad.matmul(x, w), b)
        if i != last:
            x = act(x)
    return x


def render(weights, height, width):
    """Evaluate on a fresh grid at (height, width); clamped H x W x 3 image."""
    grid = make_grid(height, width)
    feats = encode(grid, weights.feature_spec)
    rgb = forward(weights, feats).data
    return np.clip(rgb, 0.0, 1.0).reshape(height, width, 3)
