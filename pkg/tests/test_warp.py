import numpy as np
import pytest

from conftest import analytic_grad, finite_difference
from stereokit.data import generate_rds
from stereokit.tensor import GradTape, Tensor, tensor_sum
from stereokit.warp import downsample_inputs, error_map, warp_right_to_left


def warp_loops(img, disp):
    """Per-pixel bilinear sampling of img at x - disp; zero out of range."""
    n, c, h, w = img.shape
    out = np.zeros_like(img)
    mask = np.zeros((n, 1, h, w))
    for ni in range(n):
        for y in range(h):
            for x in range(w):
                src = x - disp[ni, 0, y, x]
                if src < 0 or src > w - 1:
                    continue
                mask[ni, 0, y, x] = 1.0
                x0 = int(np.floor(src))
                x1 = min(x0 + 1, w - 1)
                t = src - x0
                out[ni, :, y, x] = (1 - t) * img[ni, :, y, x0] \
                    + t * img[ni, :, y, x1]
    return out, mask


@pytest.mark.parametrize("seed", range(6))
def test_warp_matches_loop_oracle(seed):
    r = np.random.default_rng(seed)
    img = r.normal(size=(1, 3, 4, 9))
    disp = r.uniform(-1.0, 6.0, size=(1, 1, 4, 9))
    got, mask = warp_right_to_left(Tensor(img), Tensor(disp))
    want, want_mask = warp_loops(img, disp)
    assert np.abs(got.data - want).max() <= 1e-9
    assert np.array_equal(mask.data, want_mask)


def test_warp_integer_shift():
    img = np.arange(8.0).reshape(1, 1, 1, 8)
    disp = np.full((1, 1, 1, 8), 2.0)
    out, mask = warp_right_to_left(Tensor(img), Tensor(disp))
    assert np.array_equal(out.data[0, 0, 0, 2:], img[0, 0, 0, :-2])
    assert np.all(mask.data[0, 0, 0, :2] == 0)
    assert np.all(mask.data[0, 0, 0, 2:] == 1)


def test_warp_half_pixel_interpolates():
    img = np.array([[[[0.0, 2.0, 4.0, 6.0]]]])
    disp = np.full((1, 1, 1, 4), 0.5)
    out, mask = warp_right_to_left(Tensor(img), Tensor(disp))
    assert mask.data[0, 0, 0, 0] == 0.0
    assert np.allclose(out.data[0, 0, 0, 1:], [1.0, 3.0, 5.0])


def test_zero_disparity_is_identity(rng):
    img = rng.uniform(size=(1, 3, 5, 7))
    out, mask = warp_right_to_left(Tensor(img), Tensor(np.zeros((1, 1, 5, 7))))
    assert np.abs(out.data - img).max() <= 1e-12
    assert np.all(mask.data == 1.0)


def test_mask_monotonic_in_disparity(rng):
    img = Tensor(rng.uniform(size=(1, 1, 3, 10)))
    counts = []
    for d in np.linspace(0, 9, 12):
        _, mask = warp_right_to_left(img, Tensor(np.full((1, 1, 3, 10), d)))
        counts.append(mask.data.sum())
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_ground_truth_round_trip(rng):
    sample = generate_rds(7, 16, 32, ("ramp", 1.0, 6.0, 0))
    warped, mask = warp_right_to_left(sample.right, sample.gt_disparity)
    err = np.abs(warped.data - sample.left.data) * mask.data
    assert err.max() <= 1e-9


def test_warp_gradients(rng):
    img = rng.uniform(size=(1, 2, 3, 6))
    # keep disparities away from integer interpolation-cell boundaries
    disp = rng.uniform(0.3, 0.7, size=(1, 1, 3, 6)) + rng.integers(
        0, 3, size=(1, 1, 3, 6))

    def build(i, d):
        out, _ = warp_right_to_left(i, d)
        return tensor_sum(out * out)

    g_img, g_disp = analytic_grad(build, [img, disp])

    def scalar_img(x):
        with GradTape():
            out, _ = warp_right_to_left(Tensor(x), Tensor(disp))
            return float((out.data ** 2).sum())

    def scalar_disp(x):
        with GradTape():
            out, _ = warp_right_to_left(Tensor(img), Tensor(x))
            return float((out.data ** 2).sum())

    fd_img = finite_difference(scalar_img, img.copy())
    fd_disp = finite_difference(scalar_disp, disp.copy())
    for got, want in ((g_img, fd_img), (g_disp, fd_disp)):
        scale = max(np.abs(want).max(), 1e-8)
        assert np.abs(got - want).max() / scale <= 1e-3


def test_error_map_is_masked_absolute_difference(rng):
    a = Tensor(rng.uniform(size=(1, 3, 4, 5)))
    b = Tensor(rng.uniform(size=(1, 3, 4, 5)))
    mask_arr = (rng.uniform(size=(1, 1, 4, 5)) > 0.4).astype(float)
    emap = error_map(a, b, Tensor(mask_arr), scale=1)
    assert emap.scale == 1
    assert np.all(emap.data.data >= 0)
    want = np.abs(a.data - b.data) * mask_arr
    assert np.abs(emap.data.data - want).max() <= 1e-12
    assert np.all(emap.data.data[:, :, mask_arr[0, 0] == 0] == 0)


def test_downsample_inputs_scales():
    img = Tensor(np.full((1, 3, 8, 8), 0.25))
    assert np.array_equal(downsample_inputs(img, 0).data, img.data)
    half = downsample_inputs(img, 1)
    assert half.shape == (1, 3, 4, 4)
    assert np.allclose(half.data, 0.25)
    x = Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))
    assert np.allclose(downsample_inputs(x, 1).data, [[[[4.0]]]])
    # disparity values shrink with the grid
    assert np.allclose(downsample_inputs(x, 1, is_disparity=True).data,
                       [[[[2.0]]]])
