"""Convolution, resampling and loss operators built on the gradient tape.

2D/3D convolutions go through im2col + BLAS matmul; their adjoints share the
same column machinery, so deconv2d is exactly the input-gradient of conv2d
with matching geometry.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidArgumentError
from .tensor import Tensor, apply_op


def _out_extent(extent: int, k: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - k) // stride + 1


# -- im2col / col2im (2D) ----------------------------------------------


def _im2col2d(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """[N,C,H,W] -> [N, C*k*k, Ho*Wo] patch matrix."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    # reshape of the transposed view copies into a fresh contiguous array
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)


def _col2im2d(cols, x_shape, k, stride, padding, ho, wo) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    xp = np.zeros((n, c, hp, wp))
    cols = cols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                cols[:, :, i, j]
            )
    if padding:
        return xp[:, :, padding : padding + h, padding : padding + w]
    return xp


# -- im2col / col2im (3D) ----------------------------------------------


def _im2col3d(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """[N,C,D,H,W] -> [N, C*k^3, Do*Ho*Wo] patch matrix."""
    if padding:
        p = padding
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k, k), axis=(2, 3, 4))[
        :, :, ::stride, ::stride, ::stride
    ]
    n, c, do, ho, wo = win.shape[:5]
    return win.transpose(0, 1, 5, 6, 7, 2, 3, 4).reshape(n, c * k**3, do * ho * wo)


def _col2im3d(cols, x_shape, k, stride, padding, do, ho, wo) -> np.ndarray:
    n, c, d, h, w = x_shape
    dp, hp, wp = d + 2 * padding, h + 2 * padding, w + 2 * padding
    xp = np.zeros((n, c, dp, hp, wp))
    cols = cols.reshape(n, c, k, k, k, do, ho, wo)
    s = stride
    for i in range(k):
        for j in range(k):
            for l in range(k):
                xp[
                    :, :, i : i + s * do : s, j : j + s * ho : s, l : l + s * wo : s
                ] += cols[:, :, i, j, l]
    p = padding
    if p:
        return xp[:, :, p : p + d, p : p + h, p : p + w]
    return xp


# -- convolutions ------------------------------------------------------


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Zero-padded 2D convolution (cross-correlation), NCHW layout."""
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidArgumentError("conv2d expects 4D input and weight")
    n, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if kh != kw:
        raise InvalidArgumentError("only square kernels are supported")
    k = kh
    if c_in_w != c_in:
        raise InvalidArgumentError(
            f"conv2d channel mismatch: input {c_in}, weight {c_in_w}"
        )
    if k < 1 or stride < 1 or padding < 0:
        raise InvalidArgumentError("conv2d needs k>=1, stride>=1, padding>=0")
    ho, wo = _out_extent(h, k, stride, padding), _out_extent(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise InvalidArgumentError(f"conv2d output extent {ho}x{wo} < 1")
    if bias is not None and bias.shape != (c_out,):
        raise InvalidArgumentError("bias must have shape (C_out,)")

    cols = _im2col2d(x.data, k, stride, padding)  # [N, C*k*k, L]
    w2 = weight.data.reshape(c_out, -1)
    out = w2 @ cols  # [N, C_out, L]
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, c_out, ho, wo)

    def backward(g):
        g2 = g.reshape(n, c_out, ho * wo)
        dw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        dcols = w2.T @ g2
        dx = _col2im2d(dcols, x.shape, k, stride, padding, ho, wo)
        db = g2.sum(axis=(0, 2)) if bias is not None else None
        return (dx, dw, db)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(inputs, out, backward)


def conv3d(
    x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Zero-padded 3D convolution, NCDHW layout (D is the disparity axis)."""
    if x.ndim != 5 or weight.ndim != 5:
        raise InvalidArgumentError("conv3d expects 5D input and weight")
    n, c_in, d, h, w = x.shape
    c_out, c_in_w, kd, kh, kw = weight.shape
    if not (kd == kh == kw):
        raise InvalidArgumentError("only cubic kernels are supported")
    k = kd
    if c_in_w != c_in:
        raise InvalidArgumentError(
            f"conv3d channel mismatch: input {c_in}, weight {c_in_w}"
        )
    if k < 1 or stride < 1 or padding < 0:
        raise InvalidArgumentError("conv3d needs k>=1, stride>=1, padding>=0")
    do = _out_extent(d, k, stride, padding)
    ho = _out_extent(h, k, stride, padding)
    wo = _out_extent(w, k, stride, padding)
    if min(do, ho, wo) < 1:
        raise InvalidArgumentError(f"conv3d output extent {do}x{ho}x{wo} < 1")
    if bias is not None and bias.shape != (c_out,):
        raise InvalidArgumentError("bias must have shape (C_out,)")

    cols = _im2col3d(x.data, k, stride, padding)
    w2 = weight.data.reshape(c_out, -1)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(n, c_out, do, ho, wo)

    def backward(g):
        g2 = g.reshape(n, c_out, do * ho * wo)
        dw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        dcols = w2.T @ g2
        dx = _col2im3d(dcols, x.shape, k, stride, padding, do, ho, wo)
        db = g2.sum(axis=(0, 2)) if bias is not None else None
        return (dx, dw, db)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(inputs, out, backward)


def deconv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Transposed 2D convolution; weight layout [C_in, C_out, k, k].

    Acts as the adjoint of ``conv2d`` with the same kernel/stride/padding:
    the output extent is (H-1)*stride - 2*padding + k.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise InvalidArgumentError("deconv2d expects 4D input and weight")
    n, c_in, h, w = x.shape
    c_in_w, c_out, kh, kw = weight.shape
    if kh != kw:
        raise InvalidArgumentError("only square kernels are supported")
    k = kh
    if c_in_w != c_in:
        raise InvalidArgumentError(
            f"deconv2d channel mismatch: input {c_in}, weight {c_in_w}"
        )
    if stride < 1:
        raise InvalidArgumentError("deconv2d needs stride >= 1")
    ho = (h - 1) * stride - 2 * padding + k
    wo = (w - 1) * stride - 2 * padding + k
    if ho < 1 or wo < 1:
        raise InvalidArgumentError(f"deconv2d output extent {ho}x{wo} < 1")
    if bias is not None and bias.shape != (c_out,):
        raise InvalidArgumentError("bias must have shape (C_out,)")

    w2 = weight.data.reshape(c_in, c_out * k * k)
    xf = x.data.reshape(n, c_in, h * w)
    cols = np.matmul(w2.T[None], xf)  # [N, C_out*k*k, H*W]
    out = _col2im2d(cols, (n, c_out, ho, wo), k, stride, padding, h, w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        gcols = _im2col2d(g, k, stride, padding)  # [N, C_out*k*k, H*W]
        dx = np.matmul(w2[None], gcols).reshape(x.shape)
        dw = np.matmul(xf, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (dx, dw, db)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(inputs, out, backward)


# -- resampling --------------------------------------------------------


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize to (out_h, out_w); upsampling only."""
    if x.ndim != 4:
        raise InvalidArgumentError("bilinear_upsample expects NCHW input")
    n, c, h, w = x.shape
    if out_h < h or out_w < w:
        raise InvalidArgumentError(
            f"downsampling request: {h}x{w} -> {out_h}x{out_w}"
        )

    def grid(out_e, e):
        if out_e == 1 or e == 1:
            src = np.zeros(out_e)
        else:
            src = np.arange(out_e) * (e - 1) / (out_e - 1)
        i0 = np.minimum(np.floor(src).astype(np.intp), e - 1)
        i1 = np.minimum(i0 + 1, e - 1)
        return i0, i1, src - i0

    y0, y1, wy = grid(out_h, h)
    x0, x1, wx = grid(out_w, w)
    wy = wy[:, None]
    d = x.data
    top = (1 - wx) * d[:, :, y0[:, None], x0[None, :]] + wx * d[
        :, :, y0[:, None], x1[None, :]
    ]
    bot = (1 - wx) * d[:, :, y1[:, None], x0[None, :]] + wx * d[
        :, :, y1[:, None], x1[None, :]
    ]
    out = (1 - wy) * top + wy * bot

    def backward(g):
        dx = np.zeros_like(d)
        for iy, wgt_y in ((y0, 1 - wy), (y1, wy)):
            for ix, wgt_x in ((x0, 1 - wx), (x1, wx)):
                np.add.at(
                    dx,
                    (slice(None), slice(None), iy[:, None], ix[None, :]),
                    g * (wgt_y * wgt_x),
                )
        return (dx,)

    return apply_op((x,), out, backward)


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping average pooling by an integer factor."""
    if factor == 1:
        return x
    n, c, h, w = x.shape
    if h % factor or w % factor:
        raise InvalidArgumentError(
            f"extents {h}x{w} not divisible by pooling factor {factor}"
        )
    f = factor
    out = x.data.reshape(n, c, h // f, f, w // f, f).mean(axis=(3, 5))

    def backward(g):
        dx = np.repeat(np.repeat(g, f, axis=2), f, axis=3) / (f * f)
        return (dx,)

    return apply_op((x,), out, backward)


# -- losses ------------------------------------------------------------


def smooth_l1(pred: Tensor, target: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Mean smooth-L1 penalty of (pred - target).

    The penalty is 0.5*x^2 for |x| < 1 and |x| - 0.5 otherwise. With ``mask``
    (a {0,1} float array broadcastable to pred), the mean runs over masked-in
    elements only; the mask itself is treated as a constant.
    """
    if pred.shape != target.shape:
        raise InvalidArgumentError(
            f"smooth_l1 shape mismatch: {pred.shape} vs {target.shape}"
        )
    x = pred.data - target.data
    ax = np.abs(x)
    inner = ax < 1.0
    penalty = np.where(inner, 0.5 * x * x, ax - 0.5)
    dpen = np.where(inner, x, np.sign(x))
    if mask is None:
        denom = x.size
        out = penalty.sum() / denom
        scale = None
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=np.float64), pred.shape)
        denom = mask.sum()
        if denom == 0:
            raise InvalidArgumentError("smooth_l1 mask selects no elements")
        out = (penalty * mask).sum() / denom
        scale = mask / denom

    def backward(g):
        d = g * (dpen / denom if scale is None else dpen * scale)
        return (d, -d)

    return apply_op((pred, target), out, backward)
