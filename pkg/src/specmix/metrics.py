"""Evaluation against ground truth: endmember matching, per-endmember RMSE and SAD."""

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from specmix.errors import DegenerateError, ShapeError

EXHAUSTIVE_MAX_M = 6


def spectral_angle(x, y):
    """Angle in radians between two vectors (clipped cosine)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DegenerateError("spectral angle undefined for a zero-norm vector")
    return float(np.arccos(np.clip(x @ y / (nx * ny), -1.0, 1.0)))


def sad_matrix(A, B):
    """Pairwise spectral angles between the columns of A and B: (A.cols x B.cols)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    if (na == 0).any() or (nb == 0).any():
        raise DegenerateError("spectral angle undefined for a zero-norm column")
    cos = (A.T @ B) / np.outer(na, nb)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def min_cost_assignment(cost):
    """perm with perm[i] = column assigned to row i minimizing sum cost[i, perm[i]].

    Exhaustive search for M <= 6 (ties resolved toward the lexicographically
    first permutation), Hungarian algorithm above that.
    """
    cost = np.asarray(cost, dtype=np.float64)
    M = cost.shape[0]
    if cost.shape != (M, M):
        raise ShapeError(f"assignment needs a square cost matrix, got {cost.shape}")
    if M <= EXHAUSTIVE_MAX_M:
        rows = np.arange(M)
        best, best_cost = None, np.inf
        for perm in itertools.permutations(range(M)):
            c = cost[rows, perm].sum()
            if c < best_cost:
                best, best_cost = perm, c
        return np.array(best, dtype=np.int64)
    _, cols = linear_sum_assignment(cost)
    return cols.astype(np.int64)


def match_endmembers(S_hat, S_gt):
    """Bijection ``perm`` (predicted column j -> truth column perm[j]) minimizing total SAD."""
    S_hat = np.asarray(S_hat)
    S_gt = np.asarray(S_gt)
    if S_hat.shape[1] != S_gt.shape[1]:
        raise ShapeError(f"endmember count mismatch: {S_hat.shape[1]} vs {S_gt.shape[1]}")
    return min_cost_assignment(sad_matrix(S_hat, S_gt))


def _truth_order(perm):
    # inverse: for truth i, the predicted index mapped onto it
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def rmse_per_endmember(A_hat, A_gt, perm):
    """Per-truth-endmember abundance RMSE over all pixels, and their mean."""
    A_hat = np.asarray(A_hat, dtype=np.float64)
    A_gt = np.asarray(A_gt, dtype=np.float64)
    if A_hat.shape != A_gt.shape:
        raise ShapeError(f"abundance shapes differ: {A_hat.shape} vs {A_gt.shape}")
    if A_gt.shape[1] == 0:
        raise ShapeError("no pixels to evaluate")
    aligned = A_hat[_truth_order(np.asarray(perm))]
    per = np.sqrt(np.mean((aligned - A_gt) ** 2, axis=1))
    return per, float(per.mean())


def sad_per_endmember(S_hat, S_gt, perm):
    """Per-truth-endmember spectral angle, and their mean."""
    S_hat = np.asarray(S_hat, dtype=np.float64)
    S_gt = np.asarray(S_gt, dtype=np.float64)
    aligned = S_hat[:, _truth_order(np.asarray(perm))]
    per = np.array([spectral_angle(aligned[:, i], S_gt[:, i]) for i in range(S_gt.shape[1])])
    return per, float(per.mean())


@dataclass
class EvalResult:
    permutation: list
    rmse_per: list
    sad_per: list
    rmse_avg: float
    sad_avg: float

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    def table(self, names=None):
        M = len(self.rmse_per)
        names = names or [f"Endmember {i + 1}" for i in range(M)]
        width = max(12, *(len(n) for n in names))
        lines = [f"{'Error':<6} {'Endmember':<{width}} {'Value':>8}"]
        for label, per, avg in (("RMSE", self.rmse_per, self.rmse_avg), ("SAD", self.sad_per, self.sad_avg)):
            for n, val in zip(names, per):
                lines.append(f"{label:<6} {n:<{width}} {val:>8.4f}")
            lines.append(f"{label:<6} {'Average':<{width}} {avg:>8.4f}")
        return "\n".join(lines)


def evaluate(S_hat, A_hat, S_gt, A_gt):
    """Align by signature SAD, then score abundances with the same alignment."""
    perm = match_endmembers(S_hat, S_gt)
    rmse, rmse_avg = rmse_per_endmember(A_hat, A_gt, perm)
    sad, sad_avg = sad_per_endmember(S_hat, S_gt, perm)
    return EvalResult(
        permutation=perm.tolist(),
        rmse_per=rmse.tolist(),
        sad_per=sad.tolist(),
        rmse_avg=rmse_avg,
        sad_avg=sad_avg,
    )
