"""Scaled dot-product and multi-head attention built on :mod:`specmix.diffcore.tensor`."""

from dataclasses import dataclass

import numpy as np

from specmix.diffcore import tensor as T
from specmix.errors import ShapeError


def default_heads(d_model, cap=4):
    """Largest divisor of ``d_model`` that is <= ``cap``."""
    for h in range(min(cap, d_model), 0, -1):
        if d_model % h == 0:
            return h
    raise ShapeError(f"d_model must be positive, got {d_model}")


def scaled_dot_attention(q, k, v):
    """softmax(Q K^T / sqrt(d_k)) V. Works on (n, d) matrices or batched stacks."""
    out, _ = T.attention(q, k, v)
    return out


def _split_heads(x, heads):
    # (..., n, heads*d) -> (..., heads, n, d)
    *lead, n, width = x.shape
    x = T.reshape(x, (*lead, n, heads, width // heads))
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return T.transpose(x, axes)


def _merge_heads(x):
    # (..., heads, n, d) -> (..., n, heads*d)
    *lead, heads, n, d = x.shape
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    x = T.transpose(x, axes)
    return T.reshape(x, (*lead, n, heads * d))


def multi_head_attention(q, k, v, wq, wk, wv, wo, heads, return_weights=False):
    """Concat(head_1..head_H) W^O with head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).

    The per-head projections are stored side by side: ``wq`` and ``wk`` are
    (d_model, H*d_k), ``wv`` is (d_model, H*d_v) and ``wo`` is (H*d_v, d_model).
    Head ``i`` uses columns ``i*d_k:(i+1)*d_k``. Inputs carry any leading batch
    axes: q is (..., n_q, d_model), k and v are (..., n_k, d_model).
    """
    wq, wk, wv, wo = (T.as_tensor(w) for w in (wq, wk, wv, wo))
    d_model = wq.shape[0]
    if heads < 1 or wq.shape[1] % heads or wv.shape[1] % heads:
        raise ShapeError(f"{heads} heads do not divide projection widths {wq.shape[1]}/{wv.shape[1]}")
    if wk.shape != wq.shape or wv.shape[0] != d_model or wo.shape != (wv.shape[1], d_model):
        raise ShapeError("inconsistent multi-head projection shapes")
    qh = _split_heads(T.matmul(q, wq), heads)
    kh = _split_heads(T.matmul(k, wk), heads)
    vh = _split_heads(T.matmul(v, wv), heads)
    attended, weights = T.attention(qh, kh, vh)
    out = T.matmul(_merge_heads(attended), wo)
    return (out, weights) if return_weights else out


@dataclass
class MultiHeadAttention:
    """Trainable projection set of one multi-head attention block."""

    wq: T.Tensor
    wk: T.Tensor
    wv: T.Tensor
    wo: T.Tensor
    heads: int

    @classmethod
    def identity(cls, d_model, heads=1):
        eye = np.eye(d_model)
        return cls(*(T.Tensor(eye, requires_grad=True) for _ in range(4)), heads=heads)

    @classmethod
    def uniform(cls, d_model, heads, rng):
        """Each projection ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        if d_model % heads:
            raise ShapeError(f"{heads} heads do not divide d_model={d_model}")
        bound = 1.0 / np.sqrt(d_model)
        ws = [rng.uniform(-bound, bound, size=(d_model, d_model)) for _ in range(4)]
        return cls(*(T.Tensor(w, requires_grad=True) for w in ws), heads=heads)

    @property
    def d_model(self):
        return self.wq.shape[0]

    def parameters(self):
        return [self.wq, self.wk, self.wv, self.wo]

    def named_parameters(self, prefix):
        return {f"{prefix}.{n}": p for n, p in zip(("wq", "wk", "wv", "wo"), self.parameters())}

    def __call__(self, q, k, v, return_weights=False):
        return multi_head_attention(
            q, k, v, self.wq, self.wk, self.wv, self.wo, self.heads, return_weights=return_weights
        )
