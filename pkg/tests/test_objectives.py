import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specmix.diffcore import Tensor
from specmix.diffcore.gradcheck import check_gradients
from specmix.errors import ConfigError, DegenerateError, ShapeError
from specmix.geometry import PcaProjection, pca_fit, simplex_volume
from specmix.objectives import LossWeights, minvol_loss, mse_loss, nonneg_loss, sad_loss, stage_loss


def _v(x):
    return float(x.data)


def test_mse_examples(rng):
    x = rng.normal(size=5)
    assert _v(mse_loss(x, x)) == 0.0
    assert _v(mse_loss(np.ones(2), np.zeros(2))) == 1.0
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    ref = sum((a[i, j] - b[i, j]) ** 2 for i in range(4) for j in range(3)) / 12
    assert _v(mse_loss(a, b)) == pytest.approx(ref, rel=1e-13)


def test_mse_errors():
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(0), np.zeros(0))
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(2), np.zeros(3))


def test_sad_examples():
    assert _v(sad_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))) == pytest.approx(0.0, abs=1e-7)
    assert _v(sad_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0]))) == pytest.approx(math.pi / 2)
    assert _v(sad_loss(np.array([1.0, 1.0]), np.array([1.0, 0.0]))) == pytest.approx(math.pi / 4)


def test_sad_batch_is_mean_of_pixel_angles():
    a = np.array([[1.0, 0.0], [1.0, 1.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert _v(sad_loss(a, b)) == pytest.approx((math.pi / 2 + math.pi / 4) / 2)


def test_sad_zero_norm_is_an_error():
    with pytest.raises(DegenerateError):
        sad_loss(np.zeros(3), np.ones(3))


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_sad_symmetric_and_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0.1, 1, size=6), rng.uniform(0.1, 1, size=6)
    s = _v(sad_loss(x, y))
    assert s >= 0
    assert _v(sad_loss(y, x)) == pytest.approx(s, abs=1e-12)
    assert _v(sad_loss(c * x, y)) == pytest.approx(s, abs=1e-9)


def test_nonneg_examples(rng):
    assert _v(nonneg_loss(np.abs(rng.normal(size=(3, 2))))) == 0.0
    S = np.zeros((2, 2))
    S[1, 0] = -2
    assert _v(nonneg_loss(S)) == 4.0
    R = rng.normal(size=(4, 3))
    assert _v(nonneg_loss(R)) == pytest.approx(sum(min(v, 0) ** 2 for v in R.ravel()))


def _triangle_proj():
    return PcaProjection(np.zeros(3), np.eye(3)[:2])


def test_minvol_examples(rng):
    proj = _triangle_proj()
    S = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]])  # volume 0.5
    assert _v(minvol_loss(S, 0.5, proj)) == 0.0
    big = S * np.sqrt(1.6)  # volume 0.8
    assert _v(minvol_loss(big, 0.5, proj)) == pytest.approx(0.3)
    flat = S.copy()
    flat[:, 2] = flat[:, 1]
    assert _v(minvol_loss(flat, 0.0, proj)) == 0.0
    with pytest.raises(ValueError):
        minvol_loss(S, -1.0, proj)


def test_stage_loss_composition(rng):
    proj = pca_fit(rng.normal(size=(6, 40)), 2)
    Y, Yh = rng.uniform(0.1, 1, size=(5, 6)), rng.uniform(0.1, 1, size=(5, 6))
    S = rng.normal(size=(6, 3))
    w = LossWeights(mse=1, sad=1.125, nonneg=1e-8, minvol=0.0025)
    vt = 0.5 * simplex_volume(S, proj)
    terms = {}
    total = _v(stage_loss(Yh, Y, S, w, 2, vt, proj, terms))
    expected = (
        _v(mse_loss(Yh, Y)) + 1.125 * _v(sad_loss(Yh, Y)) + 1e-8 * _v(nonneg_loss(S))
        + 0.0025 * _v(minvol_loss(S, vt, proj))
    )
    assert total == pytest.approx(expected, rel=1e-13)
    assert set(terms) == {"mse", "sad", "nonneg", "minvol"}
    stage1 = _v(stage_loss(Yh, Y, S, w, 1))
    assert stage1 == pytest.approx(expected - 0.0025 * terms["minvol"], rel=1e-13)


def test_stage_loss_edge_cases(rng):
    Y = rng.uniform(0.1, 1, size=(4, 5))
    S = np.abs(rng.normal(size=(5, 2)))
    assert _v(stage_loss(Y, Y, S, LossWeights(), 1)) == pytest.approx(0.0, abs=1e-7)
    zero = LossWeights(0, 0, 0, 0)
    proj = pca_fit(rng.normal(size=(5, 10)), 1)
    assert _v(stage_loss(Y, rng.uniform(size=(4, 5)), -S, zero, 2, 0.0, proj)) == 0.0
    with pytest.raises(ValueError):
        stage_loss(Y, Y, S, LossWeights(), 2)
    with pytest.raises(ValueError):
        stage_loss(Y, Y, S, LossWeights(), 3)
    with pytest.raises(ConfigError):
        LossWeights(sad=-1)


def test_loss_gradients(rng):
    proj = pca_fit(rng.normal(size=(6, 40)), 2)
    for _ in range(5):
        Yh, Y = rng.uniform(0.1, 1, size=(3, 6)), rng.uniform(0.1, 1, size=(3, 6))
        S = rng.normal(size=(6, 3))
        vt = 0.3 * simplex_volume(S, proj)
        fn = lambda yh, s: stage_loss(yh, Y, s, LossWeights(1, 1.125, 0.1, 0.5), 2, vt, proj)  # noqa: E731
        assert check_gradients(fn, [Yh, S]) < 1e-4


def test_stage_one_gradient_skips_volume(rng):
    proj = pca_fit(rng.normal(size=(6, 40)), 2)
    S = Tensor(np.abs(rng.normal(size=(6, 3))), requires_grad=True)
    stage_loss(rng.uniform(size=(2, 6)), rng.uniform(size=(2, 6)), S, LossWeights(1, 1, 0, 10), 1).backward()
    assert S.grad is None or not S.grad.any()
