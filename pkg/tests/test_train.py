import numpy as np
import pytest

from stereokit.data import SampleStream
from stereokit.errors import InvalidArgumentError, InvalidStateError
from stereokit.model import ModelConfig, build, forward
from stereokit.tensor import GradTape, Tensor
from stereokit.train import (
    AdamState,
    KITTI_WEIGHTS,
    LossWeights,
    SCENEFLOW_WEIGHTS,
    adam_step,
    denormalize_colors,
    downsample_ground_truth,
    evaluate,
    lr_schedule,
    multiscale_loss,
    normalize_colors,
    zero_disparity_baseline,
)

TINY = ModelConfig(max_disparity=8, width_multiplier=0.25,
                   input_height=16, input_width=32, seed=1)


def test_loss_weight_presets():
    assert SCENEFLOW_WEIGHTS.values == (1.0, 0.8, 0.8, 0.6)
    assert KITTI_WEIGHTS.values == (0.6, 0.8, 0.8, 1.0)
    with pytest.raises(InvalidArgumentError):
        LossWeights((0.0, 0.0, 0.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        LossWeights((1.0, -0.1, 0.8, 0.6))


def test_normalize_colors_reference_pixels():
    mean_pixel = np.zeros((1, 3, 1, 1))
    mean_pixel[0, :, 0, 0] = (0.485, 0.456, 0.406)
    out = normalize_colors(Tensor(mean_pixel))
    assert np.abs(out.data).max() <= 1e-12
    one_sigma = np.zeros((1, 3, 1, 1))
    one_sigma[0, :, 0, 0] = (0.714, 0.680, 0.631)
    out = normalize_colors(Tensor(one_sigma))
    assert np.abs(out.data - 1.0).max() <= 1e-12


def test_normalization_inverts(rng):
    x = Tensor(rng.uniform(size=(1, 3, 4, 4)))
    back = denormalize_colors(normalize_colors(x))
    assert np.abs(back.data - x.data).max() <= 1e-12


def test_downsample_ground_truth_scaling():
    gt = np.full((1, 1, 8, 8), 6.0)
    mask = np.ones((1, 1, 8, 8))
    gt1, mask1 = downsample_ground_truth(gt, mask, 1)
    assert gt1.shape == (1, 1, 4, 4)
    assert np.allclose(gt1, 3.0)  # values shrink with the grid
    assert np.all(mask1 == 1.0)
    # any invalid source pixel poisons its pooled cell
    mask[0, 0, 0, 0] = 0.0
    _, mask1 = downsample_ground_truth(gt, mask, 1)
    assert mask1[0, 0, 0, 0] == 0.0
    assert mask1.sum() == 15


def _tiny_pyramid_and_sample(rng):
    params = build(TINY)
    stream = SampleStream(5, 16, 32, max_disparity=4.0)
    sample = stream.next()
    with GradTape() as tape:
        pyr = forward(params, normalize_colors(sample.left),
                      normalize_colors(sample.right))
    return params, tape, pyr, sample


def test_multiscale_loss_lambda_scaling(rng):
    _, _, pyr, sample = _tiny_pyramid_and_sample(rng)
    base = multiscale_loss(pyr, sample, SCENEFLOW_WEIGHTS).item()
    doubled = multiscale_loss(
        pyr, sample, LossWeights(tuple(2 * v for v in
                                       SCENEFLOW_WEIGHTS.values))).item()
    assert abs(doubled - 2 * base) <= 1e-9 * max(1.0, abs(base))


class _StubParams:
    """Minimal named-tensor container for exercising the optimizer alone."""

    def __init__(self, arrays):
        self.tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]

    def named_tensors(self):
        for i, t in enumerate(self.tensors):
            yield f"p{i}", t


def test_adam_first_step_direction_invariant_to_loss_scale(rng):
    """Adam's magnitude normalization: scaling every gradient by k > 0
    leaves the first update (essentially) unchanged, for gradients large
    enough that the 1e-8 epsilon floor is negligible."""
    grads = [rng.uniform(0.1, 5.0, size=(3, 4)) * rng.choice([-1, 1],
                                                             size=(3, 4))]
    updates = []
    for k in (1.0, 7.0):
        params = _StubParams([np.zeros((3, 4))])
        for (_, t), g in zip(params.named_tensors(), grads):
            t.grad = k * g
        state = AdamState.create(params, lr=1e-3)
        adam_step(params, state)
        updates.append(params.tensors[0].data.copy())
    assert np.abs(updates[0] - updates[1]).max() <= 1e-6 * 1e-3


def test_adam_requires_gradients():
    params = build(TINY)
    state = AdamState.create(params, lr=1e-3)
    with pytest.raises(InvalidStateError):
        adam_step(params, state)


def test_adam_moment_shapes_and_step_counter(rng):
    params, tape, pyr, sample = _tiny_pyramid_and_sample(rng)
    tape.backward(multiscale_loss(pyr, sample, SCENEFLOW_WEIGHTS))
    state = AdamState.create(params, lr=1e-3)
    adam_step(params, state)
    assert state.step == 1
    for name, t in params.named_tensors():
        assert state.m[name].shape == t.shape
        assert t.grad is None  # consumed by the update


def test_lr_schedule():
    assert lr_schedule(0, 1e-3, "sceneflow") == 1e-3
    assert lr_schedule(19, 1e-3, "sceneflow") == 1e-3
    assert lr_schedule(20, 1e-3, "sceneflow") == 5e-4
    assert lr_schedule(29, 1e-3, "sceneflow") == 5e-4
    assert lr_schedule(30, 1e-3, "sceneflow") == 2.5e-4
    assert lr_schedule(45, 1e-3, "sceneflow") == 1.25e-4
    assert lr_schedule(100, 1e-3, "kitti") == 1e-3
    with pytest.raises(InvalidArgumentError):
        lr_schedule(-1, 1e-3, "sceneflow")
    with pytest.raises(InvalidArgumentError):
        lr_schedule(0, 1e-3, "cosine")


def test_evaluate_and_baseline(rng):
    params = build(TINY)
    samples = SampleStream(8, 16, 32, max_disparity=4.0).take(3)
    report = evaluate(params, samples)
    assert set(report) == {"epe", ">1px", ">3px", "d1_all"}
    assert all(np.isfinite(v) for v in report.values())
    base = zero_disparity_baseline(samples)
    gt_means = [s.gt_disparity.data[s.valid_mask.data > 0].mean()
                for s in samples]
    assert abs(base - np.mean(gt_means)) <= 1e-9


def test_multiscale_loss_requires_supervision(rng):
    params, _, pyr, sample = _tiny_pyramid_and_sample(rng)
    sample.valid_mask.data[...] = 0.0
    with pytest.raises(InvalidArgumentError):
        multiscale_loss(pyr, sample, SCENEFLOW_WEIGHTS)
