"""Endmember extraction algorithms (ATGP, VCA, N-FINDR) and ensemble grouping.

All three return actual pixels of ``Y`` (L x N) together with their column
indices. Variants implemented:

* ATGP: the first target is the pixel with the largest norm; each further
  target maximizes the residual norm after orthogonal projection away from
  the span of the targets found so far.
* VCA: the high-SNR branch of the original algorithm, i.e. projection onto
  the M-dimensional signal subspace of ``Y Y^T / N`` followed by the
  projective normalization ``x / (x . mean)``. At each step a seeded Gaussian
  direction is made orthogonal to the current endmembers and the pixel with
  the largest absolute projection is taken.
* N-FINDR: PCA to M-1 dimensions, a seeded random initial simplex, then
  sequential replacement: for every vertex in turn, swap in the pixel that
  maximizes the simplex volume. Sweeps repeat until none of them changes.
"""

from dataclasses import dataclass, field

import numpy as np

from specmix import kernels
from specmix.errors import DegenerateError, ShapeError
from specmix.geometry import pca_fit, simplex_matrix
from specmix.metrics import min_cost_assignment, sad_matrix

ALGORITHMS = ("vca", "nfindr", "atgp")


@dataclass
class EndmemberSet:
    signatures: np.ndarray  # (L, M)
    source: str
    indices: np.ndarray  # pixel index of each column
    degenerate: bool = False

    @property
    def M(self):
        return self.signatures.shape[1]


@dataclass
class EndmemberEnsemble:
    groups: np.ndarray  # (M, nEEA, L); groups[i] is the candidate set of endmember i
    sources: list = field(default_factory=list)
    permutations: list = field(default_factory=list)  # column order applied to each input set

    @property
    def M(self):
        return self.groups.shape[0]

    @property
    def n_eea(self):
        return self.groups.shape[1]

    def member(self, k):
        """Signatures contributed by the k-th algorithm, as an L x M matrix."""
        return self.groups[:, k, :].T


def _validate(Y, M, extra_bands=0):
    # extra_bands=1 for N-FINDR, which works in M-1 PCA dimensions
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeError(f"pixels must be an L x N matrix, got shape {Y.shape}")
    L, N = Y.shape
    cap = min(L + extra_bands, N)
    if M < 1 or M > cap:
        raise ShapeError(f"M={M} must lie in [1, {cap}] for {L} bands and {N} pixels")
    if not np.isfinite(Y).all():
        raise ShapeError("pixels contain non-finite values")
    return Y


def _require_rank(Y, M):
    s = np.linalg.svd(Y, compute_uv=False)
    if s[0] == 0 or s[M - 1] <= 1e-10 * s[0]:
        raise DegenerateError(f"pixel cloud has rank < {M}")


def atgp(Y, M):
    Y = _validate(Y, M)
    _require_rank(Y, M)
    energy = np.einsum("ij,ij->j", Y, Y)
    chosen = [int(np.argmax(energy))]
    for _ in range(1, M):
        Q, _ = np.linalg.qr(Y[:, chosen])
        residual = Y - Q @ (Q.T @ Y)
        r = np.einsum("ij,ij->j", residual, residual)
        j = int(np.argmax(r))
        if r[j] <= 1e-20 * energy.max():
            raise DegenerateError(f"pixel cloud has rank < {M}")
        chosen.append(j)
    idx = np.array(chosen, dtype=np.int64)
    return EndmemberSet(Y[:, idx].copy(), "atgp", idx)


def vca(Y, M, seed=0):
    Y = _validate(Y, M)
    _require_rank(Y, M)
    L, N = Y.shape
    evals, evecs = np.linalg.eigh(Y @ Y.T / N)
    Ud = evecs[:, np.argsort(evals)[::-1][:M]]
    Xp = Ud.T @ Y
    u = Xp.mean(axis=1)
    denom = u @ Xp
    if np.any(np.abs(denom) <= 1e-12 * np.abs(denom).max()):
        raise DegenerateError("projective normalization hit a pixel orthogonal to the mean")
    Yp = Xp / denom
    rng = np.random.default_rng(seed)
    E = np.zeros((M, M))
    E[M - 1, 0] = 1.0
    chosen = []
    for i in range(M):
        w = rng.standard_normal(M)
        f = w - E @ (np.linalg.pinv(E) @ w)
        f /= np.linalg.norm(f)
        v = np.abs(f @ Yp)
        j = int(np.argmax(v))
        E[:, i] = Yp[:, j]
        chosen.append(j)
    idx = np.array(chosen, dtype=np.int64)
    return EndmemberSet(Y[:, idx].copy(), "vca", idx)


def _cofactor_column(E, col):
    M = E.shape[0]
    keep_c = [c for c in range(M) if c != col]
    out = np.empty(M)
    for r in range(M):
        keep_r = [k for k in range(M) if k != r]
        minor = E[np.ix_(keep_r, keep_c)]
        out[r] = (-1) ** (r + col) * (np.linalg.det(minor) if minor.size else 1.0)
    return out


def nfindr(Y, M, seed=0, max_sweeps=100):
    Y = _validate(Y, M, extra_bands=1)
    if M < 2:
        raise ShapeError("N-FINDR needs M >= 2")
    N = Y.shape[1]
    rng = np.random.default_rng(seed)
    idx = rng.choice(N, size=M, replace=False)
    try:
        proj = pca_fit(Y, M - 1)
    except DegenerateError:
        return EndmemberSet(Y[:, idx].copy(), "nfindr", idx, degenerate=True)
    Z = proj.project(Y)
    E = simplex_matrix(Z[:, idx])
    vol = abs(np.linalg.det(E))
    for _ in range(max_sweeps):
        changed = False
        for i in range(M):
            vols = kernels.replacement_volumes(_cofactor_column(E, i), Z)
            j = int(np.argmax(vols))
            if vols[j] > vol * (1 + 1e-10) and j != idx[i]:
                idx[i] = j
                E[1:, i] = Z[:, j]
                vol = abs(np.linalg.det(E))
                changed = True
        if not changed:
            break
    scale = np.abs(Z).max() ** (M - 1) if Z.size else 0.0
    degenerate = vol <= 1e-12 * max(scale, 1e-300)
    return EndmemberSet(Y[:, idx].copy(), "nfindr", idx.astype(np.int64), degenerate=degenerate)


def extract(Y, M, algorithm, seed=0):
    """Dispatch by algorithm name (``vca`` | ``nfindr`` | ``atgp``)."""
    name = algorithm.lower().replace("-", "")
    if name == "atgp":
        return atgp(Y, M)
    if name == "vca":
        return vca(Y, M, seed)
    if name == "nfindr":
        return nfindr(Y, M, seed)
    raise ValueError(f"unknown endmember extraction algorithm {algorithm!r}")


def build_ensembles(sets, M):
    """Group candidates per endmember across algorithms.

    The first set is the reference; every other set is reordered by the
    column assignment that minimizes the total spectral angle to it.
    """
    if not sets:
        raise ValueError("need at least one endmember set")
    for s in sets:
        if s.signatures.shape[1] != M:
            raise ShapeError(f"{s.source} returned {s.signatures.shape[1]} endmembers, expected {M}")
    ref = sets[0].signatures
    groups, perms = [], []
    for s in sets:
        # perm[i] = column of s matched to reference endmember i
        perm = min_cost_assignment(sad_matrix(ref, s.signatures))
        perms.append(perm.tolist())
        groups.append(s.signatures[:, perm].T)
    return EndmemberEnsemble(
        groups=np.ascontiguousarray(np.stack(groups, axis=1)),
        sources=[s.source for s in sets],
        permutations=perms,
    )
