"""Neighbor-pixel configurations for the attention neighborhood.

Level ``r`` is a radius in pixels:

* circle:   all offsets with 0 < dy^2 + dx^2 <= r^2
* doughnut: the ring (r-1)^2 < dy^2 + dx^2 <= r^2
* random_normal: as many distinct offsets as circle(r), drawn from a rounded
  2-D normal with sigma = r/2
"""

from dataclasses import dataclass

import numpy as np

from specmix import kernels
from specmix.errors import ConfigError

SHAPES = ("circle", "doughnut", "random_normal")
_MAX_DRAWS = 10_000


@dataclass(frozen=True)
class NeighborhoodSpec:
    shape: str = "circle"
    level: int = 2
    seed: int = 0

    def __post_init__(self):
        shape = self.shape.lower().replace("-", "_")
        if shape == "randomnormal":
            shape = "random_normal"
        if shape not in SHAPES:
            raise ConfigError(f"unknown neighborhood shape {self.shape!r}; expected one of {SHAPES}")
        object.__setattr__(self, "shape", shape)
        if int(self.level) < 1:
            raise ConfigError(f"neighborhood level must be >= 1, got {self.level}")
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def parse(cls, text):
        """Parse ``shape=circle,level=4,seed=7`` (any subset of keys)."""
        kwargs = {}
        for item in filter(None, (p.strip() for p in text.split(","))):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"neighborhood item {item!r} is not key=value")
            key = key.strip()
            if key == "shape":
                kwargs["shape"] = value.strip()
            elif key in ("level", "seed"):
                kwargs[key] = int(value)
            else:
                raise ConfigError(f"unknown neighborhood key {key!r}")
        return cls(**kwargs)

    def format(self):
        return f"shape={self.shape},level={self.level},seed={self.seed}"


def _ring(r, inner):
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    d2 = dy**2 + dx**2
    keep = (d2 > inner) & (d2 <= r * r)
    return np.stack([dy[keep], dx[keep]], axis=1)


def neighbor_offsets(spec):
    """(n, 2) integer (dy, dx) offsets, never containing (0, 0)."""
    r = spec.level
    if spec.shape == "circle":
        return _ring(r, 0)
    if spec.shape == "doughnut":
        return _ring(r, (r - 1) ** 2)
    target = len(_ring(r, 0))
    rng = np.random.default_rng(spec.seed)
    sigma = r / 2.0
    seen, out, draws = set(), [], 0
    while len(out) < target:
        dy, dx = np.rint(rng.normal(0.0, sigma, size=2)).astype(int)
        draws += 1
        if (dy, dx) != (0, 0) and (dy, dx) not in seen:
            seen.add((dy, dx))
            out.append((dy, dx))
        if draws >= _MAX_DRAWS:
            sigma *= 1.5
            draws = 0
    return np.array(out, dtype=np.int64)


def gather_neighbors(img, k, offsets):
    """Neighbor spectra of pixel ``k`` as an (n, L) matrix, edges replicated."""
    if not 0 <= k < img.n_pixels:
        raise IndexError(f"pixel {k} out of range for {img.n_pixels} pixels")
    r, c = divmod(k, img.width)
    offsets = np.asarray(offsets).reshape(-1, 2)
    ys = np.clip(r + offsets[:, 0], 0, img.height - 1)
    xs = np.clip(c + offsets[:, 1], 0, img.width - 1)
    return img.data[:, ys * img.width + xs].T.copy()


def neighbor_table(img, offsets):
    """(N, n) flat neighbor indices for every pixel (see :func:`gather_neighbors`)."""
    return kernels.neighbor_table(img.height, img.width, offsets)
