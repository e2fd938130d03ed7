import numpy as np
import pytest

from stereokit.tensor import GradTape, Tensor


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return g


def analytic_grad(build_loss, arrays):
    """Run build_loss(tensors) under a tape; returns per-input gradients."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with GradTape() as tape:
        loss = build_loss(*tensors)
    tape.backward(loss)
    return [t.grad for t in tensors]


def check_gradients(build_loss, arrays, rtol=1e-4, h=1e-5):
    """Compare analytic and finite-difference gradients for every input."""
    grads = analytic_grad(build_loss, [a.copy() for a in arrays])
    for i, a in enumerate(arrays):
        def scalar(x, i=i):
            probe = [v.copy() for v in arrays]
            probe[i] = x
            tensors = [Tensor(v, requires_grad=True) for v in probe]
            with GradTape() as tape:
                loss = build_loss(*tensors)
            # forward value only; the tape is discarded
            return loss.item()

        fd = finite_difference(scalar, a.copy(), h=h)
        scale = max(np.abs(fd).max(), np.abs(grads[i]).max(), 1e-8)
        err = np.abs(grads[i] - fd).max() / scale
        assert err <= rtol, f"input {i}: relative gradient error {err:.2e}"


@pytest.fixture
def rng():
    return np.random.default_rng(0)
