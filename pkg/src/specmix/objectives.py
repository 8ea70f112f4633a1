"""Training losses and their weighted composition.

All losses take Tensors (or arrays) and return scalar Tensors. Batched pixel
inputs are (B, L) with one pixel per row.
"""

from dataclasses import dataclass

import numpy as np

from specmix.diffcore import tensor as T
from specmix.errors import ConfigError, DegenerateError, ShapeError
from specmix.geometry import simplex_volume


@dataclass(frozen=True)
class LossWeights:
    mse: float = 1.0
    sad: float = 1.125
    nonneg: float = 1e-8
    minvol: float = 0.0025

    def __post_init__(self):
        for name in ("mse", "sad", "nonneg", "minvol"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")


def _pair(y_hat, y):
    y_hat, y = T.as_tensor(y_hat), T.as_tensor(y)
    if y_hat.shape != y.shape:
        raise ShapeError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    if y.data.size == 0:
        raise ShapeError("empty input")
    return y_hat, y


def mse_loss(y_hat, y):
    """Mean of squared differences over all components (and pixels)."""
    y_hat, y = _pair(y_hat, y)
    return T.mean(T.square(T.sub(y_hat, y)))


def sad_loss(y_hat, y):
    """Spectral angle (radians); for (B, L) batches, the mean per-pixel angle."""
    y_hat, y = _pair(y_hat, y)
    dot = T.sum_(T.mul(y_hat, y), axis=-1)
    n1 = T.sum_(T.square(y_hat), axis=-1)
    n2 = T.sum_(T.square(y), axis=-1)
    if (n1.data == 0).any() or (n2.data == 0).any():
        raise DegenerateError("spectral angle undefined for a zero-norm vector")
    cos = T.div(dot, T.sqrt(T.mul(n1, n2)))
    return T.mean(T.arccos(cos))


def nonneg_loss(S_hat):
    """Sum of squared negative parts."""
    neg = T.relu(T.scale(T.as_tensor(S_hat), -1.0))
    return T.sum_(T.square(neg))


def minvol_loss(S_hat, control_volume, proj):
    """ReLU(volume(S_hat) - V_T)."""
    if control_volume < 0:
        raise ValueError("control volume must be >= 0")
    vol = simplex_volume(T.as_tensor(S_hat), proj)
    return T.relu(T.sub(vol, float(control_volume)))


def stage_loss(Y_hat, Y, S_hat, weights, stage, control_volume=None, proj=None, terms=None):
    """Stage 1: mse + sad + nonneg terms; stage 2 adds the min-volume term.

    When ``terms`` is a dict, unweighted term values are written into it.
    """
    if stage not in (1, 2):
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    parts = [
        ("mse", weights.mse, lambda: mse_loss(Y_hat, Y)),
        ("sad", weights.sad, lambda: sad_loss(Y_hat, Y)),
        ("nonneg", weights.nonneg, lambda: nonneg_loss(S_hat)),
    ]
    if stage == 2:
        if control_volume is None or proj is None:
            raise ValueError("stage 2 needs the control volume and the PCA projection")
        parts.append(("minvol", weights.minvol, lambda: minvol_loss(S_hat, control_volume, proj)))
    total = T.Tensor(0.0)
    for name, w, fn in parts:
        if w == 0:
            if terms is not None:
                terms[name] = 0.0
            continue
        value = fn()
        if terms is not None:
            terms[name] = float(value.data)
        total = T.add(total, T.scale(value, w))
    return total


def volume_of(S_hat, proj):
    return simplex_volume(np.asarray(S_hat), proj)
