"""Hyperspectral image model, synthetic scenes and SNR-controlled noise."""

import math
from dataclasses import dataclass, replace

import numpy as np

from specmix import kernels
from specmix.errors import ShapeError


@dataclass
class HsImage:
    """Spectral cube stored as the L x N pixel matrix; pixels in row-major order."""

    height: int
    width: int
    data: np.ndarray  # (L, N)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] != self.height * self.width:
            raise ShapeError(
                f"data shape {self.data.shape} inconsistent with {self.height}x{self.width} pixels"
            )
        if not np.isfinite(self.data).all():
            raise ShapeError("image contains non-finite values")

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]

    def cube(self):
        """(height, width, bands) view of the data."""
        return self.data.T.reshape(self.height, self.width, self.bands)

    @classmethod
    def from_cube(cls, cube):
        h, w, L = cube.shape
        return cls(h, w, np.asarray(cube, dtype=np.float64).reshape(h * w, L).T.copy())


@dataclass
class GroundTruth:
    signatures: np.ndarray  # S, (L, M)
    abundances: np.ndarray  # A, (M, N)

    def __post_init__(self):
        A = self.abundances
        if (A < 0).any() or np.abs(A.sum(axis=0) - 1.0).max() > 1e-6:
            raise ShapeError("abundance columns must be nonnegative and sum to one")
        if (self.signatures < 0).any():
            raise ShapeError("signatures must be nonnegative")


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0


@dataclass(frozen=True)
class SceneConfig:
    seeds_per_class: int = 3
    gamma: float = 3.0  # sharpening exponent on inverse distances
    dirichlet_weight: float = 0.2
    dirichlet_alpha: float = 1.0
    pure_pixels: bool = False  # force one-hot abundance at every seed pixel
    min_library_sad: float = 0.15


def random_library(L, M, rng, min_sad=0.15, max_draws=10_000):
    """Smooth positive spectra (3 Gaussian bumps each) with pairwise angle >= ``min_sad``."""
    bands = np.arange(L, dtype=np.float64)
    accepted = []
    for _ in range(max_draws):
        centers = rng.uniform(0, L - 1, 3)
        widths = rng.uniform(L / 15, L / 4, 3)
        amps = rng.uniform(0.2, 1.0, 3)
        s = 0.05 + (amps[:, None] * np.exp(-0.5 * ((bands - centers[:, None]) / widths[:, None]) ** 2)).sum(0)
        s *= rng.uniform(0.6, 1.0) / s.max()
        unit = s / np.linalg.norm(s)
        if all(np.arccos(np.clip(unit @ a / np.linalg.norm(a), -1, 1)) >= min_sad for a in accepted):
            accepted.append(s)
            if len(accepted) == M:
                return np.stack(accepted, axis=1)
    raise RuntimeError(f"could not draw {M} spectra with pairwise SAD >= {min_sad}")


def worley_abundances(M, height, width, rng, config=SceneConfig()):
    """Cellular abundance maps on the simplex, plus the seed pixel of each class.

    Every class scatters ``seeds_per_class`` seed pixels. A pixel's score for a
    class is the inverse distance to that class's nearest seed raised to
    ``gamma``; scores are normalized to sum to one and blended with a
    per-pixel Dirichlet sample.
    """
    N = height * width
    n_seeds = M * config.seeds_per_class
    if n_seeds > N:
        raise ShapeError(f"{n_seeds} seed pixels do not fit into {N} pixels")
    flat = rng.choice(N, size=n_seeds, replace=False)
    seed_yx = np.stack(np.divmod(flat, width), axis=1).astype(np.float64)
    labels = np.repeat(np.arange(M), config.seeds_per_class)
    dist = np.maximum(kernels.worley_distances(height, width, seed_yx, labels, M), 1e-9)
    score = (dist.min(axis=1, keepdims=True) / dist) ** config.gamma
    cells = (score / score.sum(axis=1, keepdims=True)).T
    mixed = rng.dirichlet(np.full(M, config.dirichlet_alpha), size=N).T
    A = (1.0 - config.dirichlet_weight) * cells + config.dirichlet_weight * mixed
    if config.pure_pixels:
        A[:, flat] = 0.0
        A[labels, flat] = 1.0
    A = np.maximum(A, 0.0)
    A /= A.sum(axis=0, keepdims=True)
    return A, flat.reshape(M, config.seeds_per_class)


def synth_scene(M, L, height, width, seed, library=None, config=SceneConfig()):
    """Noiseless synthetic scene ``Y = S A`` with Worley/Dirichlet abundance maps."""
    if M < 2:
        raise ShapeError("need at least two endmembers")
    if L < M:
        raise ShapeError(f"need at least as many bands as endmembers (L={L}, M={M})")
    rng = np.random.default_rng(seed)
    if library is None:
        S = random_library(L, M, rng, config.min_library_sad)
    else:
        S = np.asarray(library, dtype=np.float64)
        if S.shape != (L, M):
            raise ShapeError(f"library must be {L}x{M}, got {S.shape}")
    A, _ = worley_abundances(M, height, width, rng, config)
    return HsImage(height, width, S @ A), GroundTruth(S, A)


def signal_power(Y):
    return float(np.mean(np.asarray(Y) ** 2))


def add_noise(img, spec):
    """Add white Gaussian noise so that mean signal power / noise power = 10^(snr/10).

    ``snr_db = inf`` returns an unchanged copy.
    """
    if math.isnan(spec.snr_db):
        raise ValueError("snr_db must not be NaN")
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return replace(img, data=img.data.copy())
    noise_power = signal_power(img.data) / 10.0 ** (spec.snr_db / 10.0)
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, math.sqrt(noise_power), size=img.data.shape)
    return replace(img, data=img.data + noise)


def measured_snr_db(clean, noisy):
    noise = np.asarray(noisy) - np.asarray(clean)
    return 10.0 * math.log10(signal_power(clean) / signal_power(noise))
