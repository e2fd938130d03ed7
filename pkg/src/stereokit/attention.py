"""Spatial attention gating and residual regression for disparity refinement.

The attention input at a given scale is the fixed channel layout
[left(3) | right(3) | error(3) | disparity(1)]. A three-conv stack (1x1, 3x3,
1x1) produces single-channel logits; the sigmoid gate is applied at the
multiplication site so the raw logits stay available for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .layers import Conv2dLayer, Deconv2dLayer
from .ops import bilinear_upsample
from .tensor import Tensor, concat, leaky_relu, mul, sigmoid


ATTENTION_INPUT_CHANNELS = 10  # left(3) + right(3) + error(3) + disparity(1)


def make_attention_input(
    left: Tensor, right: Tensor, err: Tensor, disp: Tensor
) -> Tensor:
    """Concatenate images, error map and disparity in the documented layout."""
    parts = (left, right, err, disp)
    hw = left.shape[2:]
    for p in parts:
        if p.shape[2:] != hw:
            raise InvalidArgumentError("attention input parts disagree on extent")
    if left.shape[1] != 3 or right.shape[1] != 3 or err.shape[1] != 3:
        raise InvalidArgumentError("images and error map must have 3 channels")
    if disp.shape[1] != 1:
        raise InvalidArgumentError("disparity must have 1 channel")
    return concat(list(parts), axis=1)


@dataclass
class AttentionParams:
    conv_in: Conv2dLayer  # 1x1
    conv_mid: Conv2dLayer  # 3x3, channel-preserving
    conv_out: Conv2dLayer  # 1x1 -> 1 channel

    @staticmethod
    def create(rng, c_in: int) -> "AttentionParams":
        return AttentionParams(
            conv_in=Conv2dLayer(rng, c_in, c_in, 1),
            conv_mid=Conv2dLayer(rng, c_in, c_in, 3, padding=1),
            conv_out=Conv2dLayer(rng, c_in, 1, 1),
        )

    def layers(self):
        return [("conv_in", self.conv_in), ("conv_mid", self.conv_mid),
                ("conv_out", self.conv_out)]


def attention_vector(attn_input: Tensor, params: AttentionParams) -> Tensor:
    """Raw single-channel gate logits (sigmoid is applied when gating)."""
    if attn_input.shape[1] != params.conv_in.weight.shape[1]:
        raise InvalidArgumentError(
            f"attention input has {attn_input.shape[1]} channels, "
            f"params expect {params.conv_in.weight.shape[1]}"
        )
    x = leaky_relu(params.conv_in(attn_input))
    x = leaky_relu(params.conv_mid(x))
    return params.conv_out(x)


def apply_attention(f_r: Tensor, logits: Tensor) -> Tensor:
    """Gate residual features with sigmoid(logits), broadcast over channels."""
    if logits.shape[1] != 1:
        raise InvalidArgumentError("gate logits must be single-channel")
    if logits.shape[0] != f_r.shape[0] or logits.shape[2:] != f_r.shape[2:]:
        raise InvalidArgumentError(
            f"shape mismatch: features {f_r.shape} vs logits {logits.shape}"
        )
    return mul(f_r, sigmoid(logits))


@dataclass
class HourglassParams:
    """Two stride-2 encoder convs, two deconv decoder stages with additive
    skips, then a two-conv head ending in one channel (zero-initialized so
    refinement starts from the upsampled coarse estimate)."""

    enc1: Conv2dLayer
    enc2: Conv2dLayer
    dec2: Deconv2dLayer
    dec1: Deconv2dLayer
    head1: Conv2dLayer
    head2: Conv2dLayer

    @staticmethod
    def create(rng, c: int) -> "HourglassParams":
        return HourglassParams(
            enc1=Conv2dLayer(rng, c, c, 3, stride=2, padding=1),
            enc2=Conv2dLayer(rng, c, c, 3, stride=2, padding=1),
            dec2=Deconv2dLayer(rng, c, c, 4, stride=2, padding=1),
            dec1=Deconv2dLayer(rng, c, c, 4, stride=2, padding=1),
            head1=Conv2dLayer(rng, c, c, 3, padding=1),
            head2=Conv2dLayer(rng, c, 1, 3, padding=1, zero_init=True),
        )

    def layers(self):
        return [("enc1", self.enc1), ("enc2", self.enc2), ("dec2", self.dec2),
                ("dec1", self.dec1), ("head1", self.head1), ("head2", self.head2)]


def hourglass2d(f: Tensor, params: HourglassParams) -> Tensor:
    """Encoder-decoder residual regressor; returns a signed 1-channel map."""
    n, c, h, w = f.shape
    if h % 4 or w % 4:
        raise InvalidArgumentError(
            f"hourglass needs extents divisible by 4, got {h}x{w}"
        )
    e1 = leaky_relu(params.enc1(f))
    e2 = leaky_relu(params.enc2(e1))
    d2 = leaky_relu(params.dec2(e2)) + e1
    d1 = leaky_relu(params.dec1(d2)) + f
    x = leaky_relu(params.head1(d1))
    return params.head2(x)


def compose_disparity(d_prev: Tensor, r: Tensor) -> Tensor:
    """Upsample the coarser disparity by 2x, rescale values by 2, add r."""
    n, _, h, w = r.shape
    if d_prev.shape != (n, 1, h // 2, w // 2) or h % 2 or w % 2:
        raise InvalidArgumentError(
            f"expected d_prev at half of {r.shape}, got {d_prev.shape}"
        )
    return mul(bilinear_upsample(d_prev, h, w), 2.0) + r
