"""Central finite-difference checks for the autodiff engine."""

import numpy as np

from specmix.diffcore.tensor import Tensor


def numerical_gradient(fn, arrays, index, eps=1e-5):
    """d fn / d arrays[index] by central differences; ``fn`` maps arrays to a float."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = target[i]
        target[i] = orig + eps
        hi = fn(*base)
        target[i] = orig - eps
        lo = fn(*base)
        target[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(analytic, numeric, atol=1e-9):
    """max|a - n| / max(|a|, |n|) with an absolute floor for all-zero gradients."""
    diff = np.max(np.abs(analytic - numeric)) if analytic.size else 0.0
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if diff <= atol:
        return 0.0
    return diff / scale


def check_gradients(fn, arrays, eps=1e-5):
    """Compare reverse-mode and finite-difference gradients of a scalar graph.

    ``fn`` receives Tensors and returns a scalar Tensor. Returns the worst
    relative error over all inputs.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*tensors)
    out.backward()

    def value(*xs):
        return float(fn(*(Tensor(x) for x in xs)).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(value, arrays, i, eps)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
