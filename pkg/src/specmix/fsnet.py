"""The three networks: attention neighborhood (AN), abundance predictor (AP)
and signature predictor (SP).

Batched conventions: pixels travel as rows, so a batch of B pixels is (B, L),
a batch of neighborhoods is (B, n_neighbors, L) and predicted abundances are
(B, M). The signature predictor returns the L x M endmember matrix.
"""

import math

import numpy as np

from specmix.diffcore import MultiHeadAttention, Tensor, default_heads
from specmix.diffcore import tensor as T
from specmix.errors import ShapeError


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _param(value):
    # checkpoint states hold arrays; Tensors are bound as-is (used by gradient checks)
    return value if isinstance(value, Tensor) else Tensor(value, requires_grad=True)


def _load_mha(state, prefix, heads):
    return MultiHeadAttention(*(_param(state[f"{prefix}.{n}"]) for n in ("wq", "wk", "wv", "wo")), heads=heads)


class AttentionNeighborhood:
    """Context-aware pixel: the pixel queries its neighbors (keys and values).

    Projections start at the identity, so an untrained block returns an
    attention-weighted average of the neighbor spectra.
    """

    def __init__(self, bands, heads=None):
        self.mha = MultiHeadAttention.identity(bands, heads or default_heads(bands))

    def parameters(self):
        return self.mha.parameters()

    def named_parameters(self):
        return self.mha.named_parameters("an")

    def meta(self):
        return {"an.heads": self.mha.heads}

    @classmethod
    def from_state(cls, state):
        net = cls.__new__(cls)
        net.mha = _load_mha(state, "an", int(state["meta.an.heads"]))
        return net

    def __call__(self, pixels, neighbors):
        pixels = T.as_tensor(pixels)
        neighbors = T.as_tensor(neighbors)
        B, L = pixels.shape
        if neighbors.ndim != 3 or neighbors.shape[0] != B or neighbors.shape[2] != L:
            raise ShapeError(f"neighbors must be ({B}, n, {L}), got {neighbors.shape}")
        if neighbors.shape[1] == 0:
            raise ShapeError("neighborhood is empty")
        out = self.mha(T.reshape(pixels, (B, 1, L)), neighbors, neighbors)
        return T.reshape(out, (B, L))


class AbundancePredictor:
    """Linear -> self-attention (+ residual from the input) -> Linear -> softmax."""

    def __init__(self, bands, n_endmembers, rng, heads=None):
        L, M = bands, n_endmembers
        self.w1 = _uniform(rng, L, (L, L))
        self.b1 = _uniform(rng, L, (L,))
        self.mha = MultiHeadAttention.uniform(L, heads or default_heads(L), rng)
        self.w2 = _uniform(rng, L, (L, M))
        self.b2 = _uniform(rng, L, (M,))

    def parameters(self):
        return [self.w1, self.b1, *self.mha.parameters(), self.w2, self.b2]

    def named_parameters(self):
        named = {"ap.w1": self.w1, "ap.b1": self.b1}
        named.update(self.mha.named_parameters("ap.mha"))
        named.update({"ap.w2": self.w2, "ap.b2": self.b2})
        return named

    def meta(self):
        return {"ap.heads": self.mha.heads}

    @classmethod
    def from_state(cls, state):
        net = cls.__new__(cls)
        for n in ("w1", "b1", "w2", "b2"):
            setattr(net, n, _param(state[f"ap.{n}"]))
        net.mha = _load_mha(state, "ap.mha", int(state["meta.ap.heads"]))
        return net

    def __call__(self, pixels):
        x = T.as_tensor(pixels)
        B, L = x.shape
        h = T.add(T.matmul(x, self.w1), self.b1)
        token = T.reshape(h, (B, 1, L))
        z = T.add(T.reshape(self.mha(token, token, token), (B, L)), x)
        return T.softmax(T.add(T.matmul(z, self.w2), self.b2), axis=-1)


class SignaturePredictor:
    """One attention block per endmember; query Omega_i attends over ensemble C_i.

    Blocks start as single-head identity projections (the ensemble is only
    re-weighted). :meth:`expand_heads` switches to ``heads`` heads while
    keeping the computed signatures unchanged.
    """

    def __init__(self, groups, rng, heads=None, omega_noise=0.01):
        groups = np.asarray(groups, dtype=np.float64)
        if groups.ndim != 3:
            raise ShapeError(f"ensemble groups must be (M, nEEA, L), got {groups.shape}")
        M, _, L = groups.shape
        self.groups = groups
        self.target_heads = heads or default_heads(L)
        self.blocks = [MultiHeadAttention.identity(L, 1) for _ in range(M)]
        center = groups.mean(axis=1)
        sigma = omega_noise * np.abs(center).mean(axis=1, keepdims=True)
        self.omega = Tensor(center + sigma * rng.standard_normal((M, L)), requires_grad=True)

    @property
    def M(self):
        return self.groups.shape[0]

    def phi_parameters(self):
        return [p for b in self.blocks for p in b.parameters()]

    def named_parameters(self):
        named = {"sp.omega": self.omega}
        for i, b in enumerate(self.blocks):
            named.update(b.named_parameters(f"sp.{i}"))
        return named

    def meta(self):
        return {"sp.heads": self.blocks[0].heads, "sp.target_heads": self.target_heads}

    def state_groups(self):
        return {"sp.groups": self.groups}

    @classmethod
    def from_state(cls, state):
        net = cls.__new__(cls)
        net.groups = state["sp.groups"]
        net.target_heads = int(state["meta.sp.target_heads"])
        heads = int(state["meta.sp.heads"])
        net.blocks = [_load_mha(state, f"sp.{i}", heads) for i in range(net.groups.shape[0])]
        net.omega = _param(state["sp.omega"])
        return net

    def expand_heads(self, heads=None):
        """Re-split each identity block into ``heads`` heads computing the same output.

        Head h keeps identity slices for W^Q, W^V and W^O. Its key projection
        gets a rank-one term so that its score for every candidate c equals
        Omega . c / sqrt(L), the single-head score; all heads then share the
        same attention weights and the concatenated output is unchanged.
        """
        heads = heads or self.target_heads
        L = self.groups.shape[2]
        if heads == 1:
            return
        if L % heads:
            raise ShapeError(f"{heads} heads do not divide L={L}")
        dk = L // heads
        kappa = math.sqrt(dk / L)
        eye = np.eye(L)
        new_blocks = []
        for i, block in enumerate(self.blocks):
            if block.heads != 1 or any(not np.array_equal(p.data, eye) for p in block.parameters()):
                raise ValueError("expand_heads expects single-head identity blocks")
            omega = self.omega.data[i]
            wk = eye.copy()
            for h in range(heads):
                sl = slice(h * dk, (h + 1) * dk)
                part = omega[sl]
                norm2 = part @ part
                if norm2 == 0:
                    continue
                target = kappa * omega
                target[sl] -= part
                wk[:, sl] += np.outer(target, part) / norm2
            new_blocks.append(
                MultiHeadAttention(
                    Tensor(eye, requires_grad=True),
                    Tensor(wk, requires_grad=True),
                    Tensor(eye, requires_grad=True),
                    Tensor(eye, requires_grad=True),
                    heads=heads,
                )
            )
        self.blocks = new_blocks

    def __call__(self):
        M, n_eea, L = self.groups.shape
        rows = []
        for i, block in enumerate(self.blocks):
            query = T.getitem(self.omega, slice(i, i + 1))
            cand = Tensor(self.groups[i])
            rows.append(block(query, cand, cand))
        return T.transpose(T.concat(rows, axis=0))

    def attention_weights(self):
        """(M, heads, nEEA) attention weights of every block (no graph)."""
        out = []
        with T.no_grad():
            for i, block in enumerate(self.blocks):
                cand = self.groups[i]
                _, w = block(self.omega.data[i : i + 1], cand, cand, return_weights=True)
                out.append(w[:, 0, :])
        return np.stack(out)


def reconstruct(S_hat, A_hat):
    """Y_hat = S_hat A_hat (L x M times M x N); Tensors or arrays."""
    if S_hat.shape[1] != A_hat.shape[0]:
        raise ShapeError(f"cannot multiply {S_hat.shape} by {A_hat.shape}")
    if isinstance(S_hat, Tensor) or isinstance(A_hat, Tensor):
        return T.matmul(S_hat, A_hat)
    return np.asarray(S_hat) @ np.asarray(A_hat)
