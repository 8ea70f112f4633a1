"""PCA projection and simplex volume of endmember sets."""

import math
from dataclasses import dataclass

import numpy as np

from specmix.diffcore import tensor as T
from specmix.errors import DegenerateError, ShapeError


@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray  # (L,)
    basis: np.ndarray  # (dims, L), orthonormal rows

    @property
    def dims(self):
        return self.basis.shape[0]

    def project(self, X):
        """Project the columns of ``X`` (L x k) to (dims x k)."""
        X = np.asarray(X, dtype=np.float64)
        return self.basis @ (X - self.mean[:, None])

    def reconstruct(self, Z):
        return self.basis.T @ Z + self.mean[:, None]


def pca_fit(Y, dims):
    """Top-``dims`` principal directions of the pixel columns of ``Y`` (L x N).

    Eigenvectors of the covariance matrix, ordered by decreasing variance.
    Each direction's sign is fixed so its largest-magnitude entry is positive.
    """
    Y = np.asarray(Y, dtype=np.float64)
    L, N = Y.shape
    if dims <= 0:
        raise ShapeError(f"dims must be positive, got {dims}")
    if dims > L or dims > N:
        raise ShapeError(f"dims={dims} exceeds bands ({L}) or pixels ({N})")
    mean = Y.mean(axis=1)
    centered = Y - mean[:, None]
    cov = centered @ centered.T / N
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 1e-20 * max(1.0, float(np.mean(Y * Y))):
        raise DegenerateError("pixel cloud has no variance (all pixels identical)")
    order = np.argsort(evals)[::-1][:dims]
    basis = evecs[:, order].T
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(dims), pivots])
    basis = basis * signs[:, None]
    return PcaProjection(mean=mean, basis=np.ascontiguousarray(basis))


def simplex_matrix(points):
    """Stack a row of ones over the (M-1) x M projected vertices."""
    M = points.shape[1]
    return np.vstack([np.ones((1, M)), points])


def simplex_volume(S, proj):
    """Volume of the simplex spanned by the columns of ``S`` after projection.

    ``|det([1; P(S)])| / (M-1)!`` where ``P`` is the PCA projection to M-1
    dimensions. Accepts an ndarray (returns float) or a Tensor (returns a
    differentiable scalar Tensor).
    """
    M = S.shape[1]
    if M < 2:
        raise ShapeError("simplex volume needs at least two endmembers")
    if proj.dims != M - 1:
        raise ShapeError(f"projection has {proj.dims} dims, need {M - 1}")
    # Columns are put in a canonical order first: |det| does not care, and a
    # permuted input then goes through projection and LU as the very same
    # matrix, so permutation invariance holds bit for bit.
    if isinstance(S, T.Tensor):
        S = T.getitem(S, (slice(None), _canonical_order(S.data)))
        centered = T.sub(S, proj.mean[:, None])
        projected = T.matmul(T.Tensor(proj.basis), centered)
        mat = T.concat([T.Tensor(np.ones((1, M))), projected], axis=0)
        return T.scale(T.abs_(T.det(mat)), 1.0 / math.factorial(M - 1))
    S = np.asarray(S, dtype=np.float64)
    mat = simplex_matrix(proj.project(S[:, _canonical_order(S)]))
    return abs(float(np.linalg.det(mat))) / math.factorial(M - 1)


def _canonical_order(Z):
    return np.lexsort(Z[::-1])
