"""Disparity-based backward warping and reconstruction error maps.

A left-image pixel at column x matches the right image at column x - d, so
the synthesized left view samples the right image at x - disp with bilinear
interpolation along the row. Out-of-bounds samples yield 0 and a 0 entry in
the validity mask; the mask multiplies the error map so border artifacts do
not leak into the attention input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .ops import avg_pool2d
from .tensor import Tensor, apply_op, mul, tensor_abs


@dataclass
class ErrorMap:
    """Per-pixel reconstruction error at one pyramid scale."""

    data: Tensor  # [N,C,H,W], non-negative
    scale: int  # 0 = full resolution, s = 1/2^s
    valid_mask: Tensor  # [N,1,H,W] of {0,1}


def warp_right_to_left(img_r: Tensor, disp: Tensor):
    """Sample the right image at x - disp(x, y) to synthesize the left view.

    Returns (warped, valid_mask); both inputs are differentiable, the mask is
    a constant tensor.
    """
    if img_r.ndim != 4 or disp.ndim != 4 or disp.shape[1] != 1:
        raise InvalidArgumentError("expected img [N,C,H,W] and disp [N,1,H,W]")
    n, c, h, w = img_r.shape
    if disp.shape[0] != n or disp.shape[2:] != (h, w):
        raise InvalidArgumentError(
            f"shape mismatch: img {img_r.shape} vs disp {disp.shape}"
        )
    xs = np.arange(w)[None, None, None, :]
    src = xs - disp.data  # [N,1,H,W]
    valid = (src >= 0) & (src <= w - 1)
    x0 = np.clip(np.floor(src).astype(np.intp), 0, w - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = np.clip(src - x0, 0.0, 1.0)
    vm = valid.astype(np.float64)

    x0c = np.broadcast_to(x0, (n, c, h, w))
    x1c = np.broadcast_to(x1, (n, c, h, w))
    g0 = np.take_along_axis(img_r.data, x0c, axis=3)
    g1 = np.take_along_axis(img_r.data, x1c, axis=3)
    out = ((1.0 - frac) * g0 + frac * g1) * vm

    def backward(g):
        gm = g * vm
        dimg = np.zeros_like(img_r.data)
        ni, ci, hi, _ = np.ogrid[:n, :c, :h, :1]
        np.add.at(dimg, (ni, ci, hi, x0c), gm * (1.0 - frac))
        np.add.at(dimg, (ni, ci, hi, x1c), gm * frac)
        # d out / d disp = -(g1 - g0) inside an interpolation cell
        ddisp = (gm * (g0 - g1)).sum(axis=1, keepdims=True)
        return (dimg, ddisp)

    warped = apply_op((img_r, disp), out, backward)
    return warped, Tensor(vm)


def error_map(i_warp: Tensor, i_left: Tensor, valid_mask: Tensor, scale: int = 0) -> ErrorMap:
    """Masked elementwise |i_warp - i_left|."""
    if i_warp.shape != i_left.shape:
        raise InvalidArgumentError(
            f"shape mismatch: {i_warp.shape} vs {i_left.shape}"
        )
    err = mul(tensor_abs(i_warp - i_left), valid_mask)
    return ErrorMap(data=err, scale=scale, valid_mask=valid_mask)


def downsample_inputs(img: Tensor, scale: int, is_disparity: bool = False) -> Tensor:
    """Average-pool to 1/2^scale resolution.

    Disparities are additionally divided by 2^scale so values stay in the
    reduced grid's pixel units.
    """
    if scale not in (0, 1, 2, 3):
        raise InvalidArgumentError(f"scale must be in 0..3, got {scale}")
    if scale == 0:
        return img
    out = avg_pool2d(img, 2**scale)
    if is_disparity:
        out = mul(out, 1.0 / 2**scale)
    return out
