"""Hot numeric kernels, each with a numba and a numpy implementation.

Public functions dispatch on :func:`specmix._accel.use_numba`; the ``*_numpy``
and ``*_numba`` variants are importable directly for testing and benchmarks.
Both paths compute the same formulas; results agree to float rounding.
"""

import math

import numpy as np

from specmix._accel import njit, use_numba


# --------------------------------------------------------------------------
# fused scaled dot-product attention over a flat group axis
#   q: (G, nq, dk)  k: (G, nk, dk)  v: (G, nk, dv)
# --------------------------------------------------------------------------


def attention_forward_numpy(q, k, v, scale):
    scores = np.matmul(q, np.swapaxes(k, -1, -2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    w = e / e.sum(axis=-1, keepdims=True)
    return np.matmul(w, v), w


def attention_backward_numpy(g, q, k, v, w, scale):
    dv = np.matmul(np.swapaxes(w, -1, -2), g)
    dw = np.matmul(g, np.swapaxes(v, -1, -2))
    ds = w * (dw - (dw * w).sum(axis=-1, keepdims=True))
    dq = np.matmul(ds, k) * scale
    dk = np.matmul(np.swapaxes(ds, -1, -2), q) * scale
    return dq, dk, dv


@njit(cache=True)
def attention_forward_numba(q, k, v, scale):
    G, nq, dk = q.shape
    nk = k.shape[1]
    dv = v.shape[2]
    out = np.zeros((G, nq, dv))
    w = np.empty((G, nq, nk))
    for g in range(G):
        for i in range(nq):
            smax = -np.inf
            for j in range(nk):
                s = 0.0
                for d in range(dk):
                    s += q[g, i, d] * k[g, j, d]
                s *= scale
                w[g, i, j] = s
                if s > smax:
                    smax = s
            total = 0.0
            for j in range(nk):
                e = math.exp(w[g, i, j] - smax)
                w[g, i, j] = e
                total += e
            for j in range(nk):
                w[g, i, j] /= total
                wij = w[g, i, j]
                for d in range(dv):
                    out[g, i, d] += wij * v[g, j, d]
    return out, w


@njit(cache=True)
def attention_backward_numba(g_out, q, k, v, w, scale):
    G, nq, dk = q.shape
    nk = k.shape[1]
    dv = v.shape[2]
    dq = np.zeros((G, nq, dk))
    dkk = np.zeros((G, nk, dk))
    dvv = np.zeros((G, nk, dv))
    dw = np.empty(nk)
    for g in range(G):
        for i in range(nq):
            inner = 0.0
            for j in range(nk):
                s = 0.0
                for d in range(dv):
                    s += g_out[g, i, d] * v[g, j, d]
                    dvv[g, j, d] += w[g, i, j] * g_out[g, i, d]
                dw[j] = s
                inner += s * w[g, i, j]
            for j in range(nk):
                ds = w[g, i, j] * (dw[j] - inner) * scale
                for d in range(dk):
                    dq[g, i, d] += ds * k[g, j, d]
                    dkk[g, j, d] += ds * q[g, i, d]
    return dq, dkk, dvv


def attention_forward(q, k, v, scale):
    """Return ``(softmax(q k^T * scale) v, weights)`` for each group."""
    if use_numba():
        return attention_forward_numba(q, k, v, float(scale))
    return attention_forward_numpy(q, k, v, scale)


def attention_backward(g, q, k, v, w, scale):
    """Vector-Jacobian product of :func:`attention_forward` w.r.t. q, k, v."""
    if use_numba():
        return attention_backward_numba(g, q, k, v, w, float(scale))
    return attention_backward_numpy(g, q, k, v, w, scale)


# --------------------------------------------------------------------------
# Worley cellular field: per-pixel distance to the nearest seed of each class
# --------------------------------------------------------------------------


def worley_distances_numpy(height, width, seed_yx, seed_label, n_classes):
    rr, cc = np.divmod(np.arange(height * width), width)
    dy = rr[:, None] - seed_yx[None, :, 0]
    dx = cc[:, None] - seed_yx[None, :, 1]
    dist = np.sqrt(dy * dy + dx * dx)
    out = np.full((height * width, n_classes), np.inf)
    for m in range(n_classes):
        mask = seed_label == m
        if mask.any():
            out[:, m] = dist[:, mask].min(axis=1)
    return out


@njit(cache=True)
def worley_distances_numba(height, width, seed_yx, seed_label, n_classes):
    n = height * width
    out = np.full((n, n_classes), np.inf)
    for p in range(n):
        r = p // width
        c = p - r * width
        for s in range(seed_yx.shape[0]):
            dy = r - seed_yx[s, 0]
            dx = c - seed_yx[s, 1]
            d = math.sqrt(dy * dy + dx * dx)
            m = seed_label[s]
            if d < out[p, m]:
                out[p, m] = d
    return out


def worley_distances(height, width, seed_yx, seed_label, n_classes):
    """(N, n_classes) Euclidean distance from each pixel to its nearest class seed.

    Pixels are row-major; ``seed_yx`` is (S, 2) float row/col positions.
    """
    seed_yx = np.ascontiguousarray(seed_yx, dtype=np.float64)
    seed_label = np.ascontiguousarray(seed_label, dtype=np.int64)
    if use_numba():
        return worley_distances_numba(height, width, seed_yx, seed_label, n_classes)
    return worley_distances_numpy(height, width, seed_yx, seed_label, n_classes)


# --------------------------------------------------------------------------
# neighbor index table with replicate (clamp) padding
# --------------------------------------------------------------------------


def neighbor_table_numpy(height, width, offsets):
    rr, cc = np.divmod(np.arange(height * width), width)
    ny = np.clip(rr[:, None] + offsets[None, :, 0], 0, height - 1)
    nx = np.clip(cc[:, None] + offsets[None, :, 1], 0, width - 1)
    return ny * width + nx


@njit(cache=True)
def neighbor_table_numba(height, width, offsets):
    n = height * width
    table = np.empty((n, offsets.shape[0]), dtype=np.int64)
    for p in range(n):
        r = p // width
        c = p - r * width
        for j in range(offsets.shape[0]):
            y = min(max(r + offsets[j, 0], 0), height - 1)
            x = min(max(c + offsets[j, 1], 0), width - 1)
            table[p, j] = y * width + x
    return table


def neighbor_table(height, width, offsets):
    """(N, n_offsets) flat pixel indices of each pixel's neighbors, edges clamped."""
    offsets = np.ascontiguousarray(np.asarray(offsets, dtype=np.int64).reshape(-1, 2))
    if use_numba():
        return neighbor_table_numba(height, width, offsets)
    return neighbor_table_numpy(height, width, offsets)


# --------------------------------------------------------------------------
# N-FINDR candidate sweep: |det| of the simplex matrix with one column swapped
# --------------------------------------------------------------------------


def replacement_volumes_numpy(cofactors, points):
    return np.abs(cofactors[0] + cofactors[1:] @ points)


@njit(cache=True)
def replacement_volumes_numba(cofactors, points):
    d, n = points.shape
    out = np.empty(n)
    for p in range(n):
        s = cofactors[0]
        for r in range(d):
            s += cofactors[r + 1] * points[r, p]
        out[p] = abs(s)
    return out


def replacement_volumes(cofactors, points):
    """|det| for every candidate point placed in one simplex column.

    The determinant is linear in the replaced column ``[1; x]``, so with the
    column's cofactors ``c`` it equals ``c[0] + c[1:] . x``. ``points`` is
    (M-1, N); the result is unnormalized (no 1/(M-1)! factor).
    """
    cofactors = np.ascontiguousarray(cofactors, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    if use_numba():
        return replacement_volumes_numba(cofactors, points)
    return replacement_volumes_numpy(cofactors, points)
