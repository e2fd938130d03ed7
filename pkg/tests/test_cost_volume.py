import numpy as np
import pytest

from conftest import check_gradients
from stereokit.cost_volume import (
    combine,
    concat_volume,
    correlation_volume,
    squeeze_aggregate,
)
from stereokit.errors import InvalidArgumentError
from stereokit.layers import Conv3dLayer
from stereokit.tensor import Tensor, tensor_sum


def correlation_loops(fl, fr, levels):
    """Entry (d, x, y): mean over channels of <f_L(x-d, y), f_R(x, y)>."""
    n, c, h, w = fl.shape
    out = np.zeros((n, levels, h, w))
    for ni in range(n):
        for d in range(levels):
            for y in range(h):
                for x in range(w):
                    if x - d < 0:
                        continue
                    out[ni, d, y, x] = (
                        fl[ni, :, y, x - d] * fr[ni, :, y, x]
                    ).sum() / c
    return out


@pytest.mark.parametrize("seed", range(6))
def test_correlation_matches_loop_oracle(seed):
    r = np.random.default_rng(seed)
    c = int(r.integers(1, 5))
    fl = r.normal(size=(2, c, 5, 7))
    fr = r.normal(size=(2, c, 5, 7))
    levels = int(r.integers(1, 4))
    got = correlation_volume(Tensor(fl), Tensor(fr), levels)
    assert got.kind == "correlation"
    assert got.data.shape == (2, levels, 5, 7)
    assert np.abs(got.data.data - correlation_loops(fl, fr, levels)).max() <= 1e-9


def test_correlation_is_bilinear(rng):
    fl = rng.normal(size=(1, 3, 4, 6))
    fr = rng.normal(size=(1, 3, 4, 6))
    base = correlation_volume(Tensor(fl), Tensor(fr), 3).data.data
    scaled = correlation_volume(Tensor(2.5 * fl), Tensor(fr), 3).data.data
    assert np.abs(scaled - 2.5 * base).max() <= 1e-12


def test_correlation_swap_symmetry(rng):
    """Swapping views mirrors the shift: vol[d, y, x] == swapped[d, y, x+d]
    wherever both indices are in range."""
    fl = rng.normal(size=(1, 2, 3, 8))
    fr = rng.normal(size=(1, 2, 3, 8))
    levels = 3
    vol = correlation_volume(Tensor(fl), Tensor(fr), levels).data.data
    # entry (d, y, x) pairs f_L(x-d) with f_R(x); swapping the views and
    # negating the shift direction lands on the same inner products
    for d in range(levels):
        for x in range(d, 8):
            lhs = vol[0, d, :, x]
            rhs = (fl[0, :, :, x - d] * fr[0, :, :, x]).sum(axis=0) / 2
            assert np.abs(lhs - rhs).max() <= 1e-12


def test_correlation_gradients(rng):
    fl = rng.normal(size=(1, 2, 3, 5))
    fr = rng.normal(size=(1, 2, 3, 5))

    def loss(a, b):
        vol = correlation_volume(a, b, 2)
        return tensor_sum(vol.data * vol.data)

    check_gradients(loss, [fl, fr])


def test_concat_volume_layout(rng):
    fl = rng.normal(size=(1, 3, 4, 6))
    fr = rng.normal(size=(1, 3, 4, 6))
    vol = concat_volume(Tensor(fl), Tensor(fr), 3)
    assert vol.kind == "concatenation"
    data = vol.data.data
    assert data.shape == (1, 6, 3, 4, 6)
    # at d = 0 the left half reproduces f_L bit-exactly
    assert np.array_equal(data[:, :3, 0], fl)
    # the right half is the unshifted right features at every level
    for d in range(3):
        assert np.array_equal(data[:, 3:, d], fr)
    # left half at level d is f_L shifted right by d, zero-filled
    assert np.array_equal(data[0, :3, 2, :, 2:], fl[0, :, :, :-2])
    assert np.all(data[0, :3, 2, :, :2] == 0.0)


def test_concat_volume_rejects_mismatch(rng):
    fl = Tensor(rng.normal(size=(1, 3, 4, 6)))
    fr = Tensor(rng.normal(size=(1, 3, 4, 5)))
    with pytest.raises(InvalidArgumentError):
        concat_volume(fl, fr, 2)
    with pytest.raises(InvalidArgumentError):
        correlation_volume(fl, fl, 0)


def test_squeeze_aggregate_shape_and_kind(rng):
    c = 4
    fl = rng.normal(size=(1, c, 3, 6))
    fr = rng.normal(size=(1, c, 3, 6))
    vol = concat_volume(Tensor(fl), Tensor(fr), 2)
    layers = [
        Conv3dLayer(rng, 2 * c, c, 3, padding=1),
        Conv3dLayer(rng, c, c // 2, 3, padding=1),
        Conv3dLayer(rng, c // 2, 1, 3, padding=1),
    ]
    out = squeeze_aggregate(vol, layers)
    assert out.kind == "squeezed"
    assert out.data.shape == (1, 2, 3, 6)


def test_combine_is_lossless(rng):
    fl = rng.normal(size=(1, 4, 3, 6))
    fr = rng.normal(size=(1, 4, 3, 6))
    corr = correlation_volume(Tensor(fl), Tensor(fr), 3)
    layers = [
        Conv3dLayer(rng, 8, 4, 3, padding=1),
        Conv3dLayer(rng, 4, 2, 3, padding=1),
        Conv3dLayer(rng, 2, 1, 3, padding=1),
    ]
    sq = squeeze_aggregate(concat_volume(Tensor(fl), Tensor(fr), 3), layers)
    both = combine(corr, sq)
    assert both.kind == "combined"
    assert both.data.shape == (1, 6, 3, 6)
    assert np.array_equal(both.data.data[:, :3], corr.data.data)
    assert np.array_equal(both.data.data[:, 3:], sq.data.data)


def test_default_scale_channel_arithmetic(rng):
    """max_disparity 192 at stride 8 gives 24 levels, 48 combined channels."""
    fl = rng.normal(size=(1, 2, 2, 40))
    fr = rng.normal(size=(1, 2, 2, 40))
    corr = correlation_volume(Tensor(fl), Tensor(fr), 24)
    assert corr.data.shape[1] == 24
    layers = [
        Conv3dLayer(rng, 4, 2, 3, padding=1),
        Conv3dLayer(rng, 2, 1, 3, padding=1),
        Conv3dLayer(rng, 1, 1, 3, padding=1),
    ]
    sq = squeeze_aggregate(concat_volume(Tensor(fl), Tensor(fr), 24), layers)
    assert combine(corr, sq).data.shape[1] == 48
