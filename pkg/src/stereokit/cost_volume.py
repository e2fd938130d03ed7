"""Cost volume construction: correlation, concatenation, squeeze, combination.

Shift convention: the left feature map is sampled at x - d against the right
feature map at x. Entries whose shifted coordinate leaves the image are zero,
which keeps gradients defined at the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .tensor import Tensor, apply_op, concat, reshape
from .layers import Conv3dLayer
from .tensor import leaky_relu


@dataclass
class CostVolume:
    """A per-disparity correspondence volume.

    kind: one of {"correlation", "concatenation", "squeezed", "combined"}.
    data layout: [N,D,H,W] for correlation/squeezed, [N,2C,D,H,W] for
    concatenation (channels before disparity so conv3d treats disparity as a
    spatial axis), [N,2D,H,W] for combined.
    """

    kind: str
    data: Tensor
    max_disparity_levels: int


def _check_pair(f_l: Tensor, f_r: Tensor, levels: int) -> None:
    if f_l.shape != f_r.shape:
        raise InvalidArgumentError(
            f"feature shape mismatch: {f_l.shape} vs {f_r.shape}"
        )
    if f_l.ndim != 4:
        raise InvalidArgumentError("features must be NCHW")
    if levels < 1:
        raise InvalidArgumentError("disparity level count must be >= 1")
    if levels > f_l.shape[3]:
        raise InvalidArgumentError(
            f"disparity level count {levels} exceeds feature width {f_l.shape[3]}"
        )


def correlation_volume(f_l: Tensor, f_r: Tensor, levels: int) -> CostVolume:
    """Channel-mean inner product of left features at x-d with right at x."""
    _check_pair(f_l, f_r, levels)
    n, c, h, w = f_l.shape
    out = np.zeros((n, levels, h, w))
    for d in range(levels):
        out[:, d, :, d:] = np.einsum(
            "nchw,nchw->nhw", f_l.data[:, :, :, : w - d], f_r.data[:, :, :, d:]
        ) / c

    def backward(g):
        dl = np.zeros_like(f_l.data)
        dr = np.zeros_like(f_r.data)
        for d in range(levels):
            gd = g[:, d : d + 1, :, d:] / c
            dl[:, :, :, : w - d] += gd * f_r.data[:, :, :, d:]
            dr[:, :, :, d:] += gd * f_l.data[:, :, :, : w - d]
        return (dl, dr)

    return CostVolume("correlation", apply_op((f_l, f_r), out, backward), levels)


def concat_volume(f_l: Tensor, f_r: Tensor, levels: int) -> CostVolume:
    """Stack d-shifted left and unshifted right features per disparity level."""
    _check_pair(f_l, f_r, levels)
    n, c, h, w = f_l.shape
    out = np.zeros((n, 2 * c, levels, h, w))
    for d in range(levels):
        out[:, :c, d, :, d:] = f_l.data[:, :, :, : w - d]
        out[:, c:, d] = f_r.data

    def backward(g):
        dl = np.zeros_like(f_l.data)
        dr = np.zeros_like(f_r.data)
        for d in range(levels):
            dl[:, :, :, : w - d] += g[:, :c, d, :, d:]
            dr += g[:, c:, d]
        return (dl, dr)

    return CostVolume("concatenation", apply_op((f_l, f_r), out, backward), levels)


def squeeze_aggregate(vol: CostVolume, layers: list[Conv3dLayer]) -> CostVolume:
    """Aggregate a concatenation volume with three 3D convs down to 1 channel.

    All layers run at stride 1 with size-preserving padding; leaky-ReLU sits
    between layers but not after the last, and the singleton channel axis is
    squeezed away.
    """
    if vol.kind != "concatenation":
        raise InvalidArgumentError(f"expected a concatenation volume, got {vol.kind}")
    if len(layers) != 3:
        raise InvalidArgumentError("squeeze aggregation takes exactly 3 conv layers")
    if layers[0].weight.shape[1] != vol.data.shape[1]:
        raise InvalidArgumentError(
            "first layer input channels do not match the volume"
        )
    if layers[-1].weight.shape[0] != 1:
        raise InvalidArgumentError("final layer must produce a single channel")
    x = vol.data
    for i, layer in enumerate(layers):
        x = layer(x)
        if i < len(layers) - 1:
            x = leaky_relu(x)
    n, _, d, h, w = x.shape
    return CostVolume("squeezed", reshape(x, (n, d, h, w)), vol.max_disparity_levels)


def combine(corr: CostVolume, squeezed: CostVolume) -> CostVolume:
    """Concatenate correlation and squeezed volumes on the channel axis."""
    if corr.kind != "correlation" or squeezed.kind != "squeezed":
        raise InvalidArgumentError(
            f"combine takes (correlation, squeezed), got ({corr.kind}, {squeezed.kind})"
        )
    if corr.data.shape != squeezed.data.shape:
        raise InvalidArgumentError(
            f"volume shape mismatch: {corr.data.shape} vs {squeezed.data.shape}"
        )
    return CostVolume(
        "combined", concat([corr.data, squeezed.data], axis=1), corr.max_disparity_levels
    )
