"""Domain Mix and Patch Style Transfer on source feature maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .style_bank import StyleEntry
from .tensor_core import (
    DimensionError,
    RandomSource,
    StyleStats,
    adain,
    as_feature,
    channel_stats,
    sample_gaussian,
    sample_uniform,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MixParams:
    s_e: float = 0.075
    m: int = 3
    # None draws lambda ~ U[0,1]^c per patch; a number pins every component (baseline seam)
    fixed_lambda: float | None = None
    # source statistics for per-patch AdaIN: the patch's own ("local") or the whole map's ("global")
    patch_norm: str = "local"

    def __post_init__(self):
        if self.s_e < 0:
            raise ConfigError("s_e must be >= 0")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.fixed_lambda is not None and not 0.0 <= self.fixed_lambda <= 1.0:
            raise ConfigError("fixed_lambda must lie in [0, 1]")
        if self.patch_norm not in ("local", "global"):
            raise ConfigError("patch_norm must be 'local' or 'global'")


@dataclass(frozen=True)
class PatchRect:
    i: int
    j: int
    row_begin: int
    row_end: int
    col_begin: int
    col_end: int

    @property
    def slices(self):
        return slice(self.row_begin, self.row_end), slice(self.col_begin, self.col_end)


@dataclass
class StylizedFeature:
    data: np.ndarray
    main_domain: str
    aux_domain: str
    eps_prime: np.ndarray
    # per patch in row-major order
    lambdas: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    rects: list = field(default_factory=list)


def domain_mix(main: StyleStats, aux: StyleStats, lam) -> StyleStats:
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if not (main.c == aux.c == lam.size):
        raise DimensionError(f"channel mismatch: main {main.c}, aux {aux.c}, lambda {lam.size}")
    mu = lam * main.mu + (1.0 - lam) * aux.mu
    sigma = lam * main.sigma + (1.0 - lam) * aux.sigma
    return StyleStats(mu, sigma)


def add_style_noise(stats: StyleStats, eps) -> StyleStats:
    """Shift mean and std by the same draw; std is re-floored by StyleStats."""
    eps = np.asarray(eps, dtype=np.float64).reshape(-1)
    if eps.size != stats.c:
        raise DimensionError(f"eps has {eps.size} channels, stats has {stats.c}")
    return StyleStats(stats.mu + eps, stats.sigma + eps)


def perturb_source(f_s, eps_prime) -> np.ndarray:
    f_s = as_feature(f_s)
    eps_prime = np.asarray(eps_prime, dtype=np.float64).reshape(-1)
    if eps_prime.size != f_s.shape[2]:
        raise DimensionError(f"eps' has {eps_prime.size} channels, feature has {f_s.shape[2]}")
    if not eps_prime.any():
        # AdaIN onto a feature's own statistics is the identity
        return f_s.copy()
    src = channel_stats(f_s)
    scale = 1.0 + eps_prime
    target = StyleStats(scale * src.mu, scale * src.sigma)
    return adain(f_s, target, source=src)


def patch_grid(h: int, w: int, m: int) -> list[PatchRect]:
    if not 1 <= m <= min(h, w):
        raise ConfigError(f"patch grid m={m} invalid for {h}x{w} feature")
    rows = [k * h // m for k in range(m)] + [h]
    cols = [k * w // m for k in range(m)] + [w]
    return [
        PatchRect(i, j, rows[i], rows[i + 1], cols[j], cols[j + 1])
        for i in range(m)
        for j in range(m)
    ]


def patch_style_transfer(f_s, main: StyleEntry, aux: StyleEntry, params: MixParams,
                         rng: RandomSource, patch_targets=None) -> StylizedFeature:
    """Perturb ``f_s``, split it into an m x m grid and AdaIN every patch to its own
    mixed-and-noised style drawn between ``main`` and ``aux``.

    Draw order: eps' once, then per patch (row-major) lambda then eps.
    ``patch_targets`` (a list of StyleStats, one per patch) bypasses the per-patch
    mixing for tests; eps' is still drawn.
    """
    f_s = as_feature(f_s)
    h, w, c = f_s.shape
    if main.stats.c != c or aux.stats.c != c:
        raise DimensionError("style entries and feature disagree on channel count")
    rects = patch_grid(h, w, params.m)

    eps_prime = sample_gaussian(rng, c, params.s_e)
    perturbed = perturb_source(f_s, eps_prime)

    whole = channel_stats(perturbed) if params.patch_norm == "global" else None
    out = np.empty_like(perturbed)
    result = StylizedFeature(out, main.domain, aux.domain, eps_prime, rects=rects)
    for n, rect in enumerate(rects):
        if patch_targets is not None:
            target = patch_targets[n]
            lam = eps = None
        else:
            if params.fixed_lambda is None:
                lam = sample_uniform(rng, c)
            else:
                lam = np.full(c, params.fixed_lambda)
            eps = sample_gaussian(rng, c, params.s_e)
            target = add_style_noise(domain_mix(main.stats, aux.stats, lam), eps)
        rs, cs = rect.slices
        out[rs, cs, :] = adain(perturbed[rs, cs, :], target, source=whole)
        result.lambdas.append(lam)
        result.eps.append(eps)
        result.targets.append(target)
    return result
