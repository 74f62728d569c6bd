"""Dense feature-map numerics: channel statistics, AdaIN, similarity and seeded sampling.

Feature maps are plain ``numpy`` arrays of shape ``(h, w, c)`` and dtype
``float32`` (C order, so the flat index is ``(i*w + j)*c + k``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR = 1e-6


class DimensionError(ValueError):
    """Raised when channel counts or shapes disagree."""


def as_feature(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float32)
    if f.ndim != 3 or min(f.shape) < 1:
        raise DimensionError(f"feature map must be (h, w, c) with all dims >= 1, got {f.shape}")
    return f


@dataclass(frozen=True)
class StyleStats:
    """Per-channel mean and standard deviation of a feature map."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float32).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=np.float32).reshape(-1)
        if mu.shape != sigma.shape:
            raise DimensionError(f"mu has {mu.size} channels, sigma has {sigma.size}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", np.maximum(sigma, np.float32(SIGMA_FLOOR)))

    @property
    def c(self) -> int:
        return self.mu.size


def channel_stats(f) -> StyleStats:
    """Mean and population std over all spatial positions, per channel."""
    f = as_feature(f)
    flat = f.reshape(-1, f.shape[2])
    mu = flat.mean(axis=0, dtype=np.float64)
    sigma = np.sqrt(flat.var(axis=0, dtype=np.float64))
    return StyleStats(mu, sigma)


def adain(f, target: StyleStats, source: StyleStats | None = None) -> np.ndarray:
    """Renormalize ``f`` so each channel has the target mean and std.

    ``source`` defaults to ``channel_stats(f)``.
    """
    f = as_feature(f)
    if target.c != f.shape[2]:
        raise DimensionError(f"target has {target.c} channels, feature has {f.shape[2]}")
    if source is None:
        source = channel_stats(f)
    # centre first: a folded affine map cancels badly when sigma_s is tiny
    scale = (target.sigma.astype(np.float64) / source.sigma).astype(np.float32)
    return (f - source.mu) * scale + target.mu


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        # degenerate vectors never win an argmax
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def global_average_pool(f) -> np.ndarray:
    return channel_stats(f).mu


class RandomSource:
    """Seeded generator (PCG64) with a fixed, platform-independent output stream.

    Independent streams for concurrent work come from :meth:`substream`.
    """

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(key))

    def uniform(self, c: int) -> np.ndarray:
        return self._gen.random(c)

    def gaussian(self, c: int, s: float) -> np.ndarray:
        if s < 0:
            raise ValueError("standard deviation must be >= 0")
        return self._gen.standard_normal(c) * s

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def sample_uniform(rng: RandomSource, c: int) -> np.ndarray:
    if c < 1:
        raise ValueError("c must be >= 1")
    return rng.uniform(c)


def sample_gaussian(rng: RandomSource, c: int, s: float) -> np.ndarray:
    return rng.gaussian(c, s)
