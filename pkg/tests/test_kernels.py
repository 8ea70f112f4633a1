"""The compiled kernels and their numpy twins must agree."""

import numpy as np
import pytest

from specmix import _accel, kernels


def test_backend_flag(monkeypatch):
    monkeypatch.setenv(_accel.BACKEND_ENV, "numpy")
    assert not _accel.use_numba()
    monkeypatch.setenv(_accel.BACKEND_ENV, "NumBa")
    assert _accel.use_numba() == _accel.HAVE_NUMBA
    monkeypatch.setenv(_accel.BACKEND_ENV, "cuda")
    with pytest.raises(ValueError):
        _accel.requested_backend()


def test_njit_fallback_is_identity(monkeypatch):
    monkeypatch.setattr(_accel, "HAVE_NUMBA", False)

    def f(x):
        return x + 1

    assert _accel.njit(f) is f
    assert _accel.njit(cache=True)(f) is f


@pytest.mark.parametrize("shape", [(1, 1, 1, 1, 1), (3, 2, 5, 4, 3), (2, 1, 1, 3, 2)])
def test_attention_forward_twins(shape, rng):
    G, nq, nk, dk, dv = shape
    q, k, v = rng.normal(size=(G, nq, dk)), rng.normal(size=(G, nk, dk)), rng.normal(size=(G, nk, dv))
    o1, w1 = kernels.attention_forward_numpy(q, k, v, 0.5)
    o2, w2 = kernels.attention_forward_numba(q, k, v, 0.5)
    np.testing.assert_allclose(o1, o2, atol=1e-13)
    np.testing.assert_allclose(w1, w2, atol=1e-14)


def test_attention_backward_twins(rng):
    G, nq, nk, dk, dv = 3, 2, 4, 3, 5
    q, k, v = rng.normal(size=(G, nq, dk)), rng.normal(size=(G, nk, dk)), rng.normal(size=(G, nk, dv))
    _, w = kernels.attention_forward_numpy(q, k, v, 0.7)
    g = rng.normal(size=(G, nq, dv))
    for a, b in zip(
        kernels.attention_backward_numpy(g, q, k, v, w, 0.7),
        kernels.attention_backward_numba(g, q, k, v, w, 0.7),
    ):
        np.testing.assert_allclose(a, b, atol=1e-13)


def test_dispatch_follows_flag(backend, rng):
    q, k, v = rng.normal(size=(1, 1, 2)), rng.normal(size=(1, 3, 2)), rng.normal(size=(1, 3, 2))
    out, _ = kernels.attention_forward(q, k, v, 1.0)
    ref, _ = kernels.attention_forward_numpy(q, k, v, 1.0)
    np.testing.assert_allclose(out, ref, atol=1e-14)


def test_worley_twins(rng):
    seeds = rng.integers(0, 9, size=(7, 2)).astype(float)
    labels = rng.integers(0, 3, size=7)
    labels[:3] = [0, 1, 2]
    a = kernels.worley_distances_numpy(9, 11, seeds, labels, 3)
    b = kernels.worley_distances_numba(9, 11, seeds, labels, 3)
    np.testing.assert_array_equal(a, b)


def test_worley_brute_force(rng):
    seeds = np.array([[0.0, 0.0], [2.0, 3.0], [4.0, 1.0]])
    labels = np.array([0, 1, 0])
    d = kernels.worley_distances(5, 4, seeds, labels, 2)
    for p in range(20):
        r, c = divmod(p, 4)
        assert d[p, 0] == pytest.approx(min(np.hypot(r - 0, c - 0), np.hypot(r - 4, c - 1)))
        assert d[p, 1] == pytest.approx(np.hypot(r - 2, c - 3))


def test_neighbor_table_twins(rng):
    offsets = rng.integers(-3, 4, size=(10, 2))
    a = kernels.neighbor_table_numpy(6, 7, offsets)
    b = kernels.neighbor_table_numba(6, 7, offsets)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < 42


def test_replacement_volumes_twins(rng):
    cof = rng.normal(size=4)
    pts = rng.normal(size=(3, 50))
    np.testing.assert_allclose(
        kernels.replacement_volumes_numpy(cof, pts), kernels.replacement_volumes_numba(cof, pts), atol=1e-13
    )


def test_replacement_volumes_match_determinants(rng):
    # swapping column 1 of a 3x3 simplex matrix for [1; x]
    E = np.vstack([np.ones(3), rng.normal(size=(2, 3))])
    pts = rng.normal(size=(2, 6))
    keep = [0, 2]
    cof = np.array([(-1) ** (r + 1) * np.linalg.det(np.delete(E, r, axis=0)[:, keep]) for r in range(3)])
    got = kernels.replacement_volumes(cof, pts)
    for p in range(6):
        F = E.copy()
        F[1:, 1] = pts[:, p]
        assert got[p] == pytest.approx(abs(np.linalg.det(F)), abs=1e-12)
