"""Thin parameter-holding layer wrappers around the conv operators."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2dLayer:
    def __init__(self, rng, c_in, c_out, k, stride=1, padding=0, zero_init=False):
        shape = (c_out, c_in, k, k)
        if zero_init:
            w = np.zeros(shape)
        else:
            w = _fan_in_uniform(rng, shape, c_in * k * k)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv3dLayer:
    def __init__(self, rng, c_in, c_out, k, stride=1, padding=0):
        shape = (c_out, c_in, k, k, k)
        self.weight = Tensor(
            _fan_in_uniform(rng, shape, c_in * k**3), requires_grad=True
        )
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class Deconv2dLayer:
    def __init__(self, rng, c_in, c_out, k, stride=1, padding=0):
        shape = (c_in, c_out, k, k)
        self.weight = Tensor(
            _fan_in_uniform(rng, shape, c_in * k * k), requires_grad=True
        )
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.deconv2d(x, self.weight, self.bias, self.stride, self.padding)


def layer_tensors(prefix: str, layer) -> list[tuple[str, Tensor]]:
    return [(f"{prefix}.weight", layer.weight), (f"{prefix}.bias", layer.bias)]
