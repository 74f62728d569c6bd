"""Frozen two-stage convolutional feature extractor and the per-pixel linear classifier."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .style_bank import BadMagicError, TruncatedError, VersionMismatchError
from .tensor_core import DimensionError, RandomSource

IMAGE_SHAPE = (64, 64, 3)
# inputs are divided by a fixed std-like scale (no mean shift, so zero stays zero)
INPUT_SCALE = 0.225
FEATURE_CHANNELS = 32
NUM_CLASSES = 5

CKPT_MAGIC = b"SIDC"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


class FrozenExtractor:
    """3x3 conv 3->16 (stride 1) + ReLU, then 3x3 conv 16->32 (stride 2) + ReLU.

    Same padding, zero biases, He-normal weights. Weight arrays are read-only.
    Images in [0, 1] are divided by ``INPUT_SCALE`` first.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        rng = RandomSource(self.seed, (0xE7,)).generator
        self.w1 = (rng.standard_normal((3, 3, 3, 16)) * np.sqrt(2.0 / 27)).astype(np.float32)
        self.w2 = (rng.standard_normal((3, 3, 16, 32)) * np.sqrt(2.0 / 144)).astype(np.float32)
        self.w1.flags.writeable = False
        self.w2.flags.writeable = False

    def __call__(self, img) -> np.ndarray:
        return extract(self, img)


def init_extractor(seed: int = 0) -> FrozenExtractor:
    return FrozenExtractor(seed)


def _conv3x3(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    # x: (..., H, W, Cin); w: (3, 3, Cin, Cout); same padding
    pad = [(0, 0)] * (x.ndim - 3) + [(1, 1), (1, 1), (0, 0)]
    xp = np.pad(x, pad)
    win = sliding_window_view(xp, (3, 3), axis=(-3, -2))  # (..., H, W, Cin, 3, 3)
    win = win[..., ::stride, ::stride, :, :, :]
    return np.einsum("...hwcab,abcd->...hwd", win, w, optimize=True)


def extract(ex: FrozenExtractor, img) -> np.ndarray:
    """Forward pass for one image (64, 64, 3) or a batch (n, 64, 64, 3)."""
    x = np.asarray(img, dtype=np.float32)
    if x.shape[-3:] != IMAGE_SHAPE or x.ndim not in (3, 4):
        raise DimensionError(f"expected image of shape {IMAGE_SHAPE}, got {x.shape}")
    x = x / np.float32(INPUT_SCALE)
    h1 = np.maximum(_conv3x3(x, ex.w1, 1), 0.0)
    h2 = np.maximum(_conv3x3(h1, ex.w2, 2), 0.0)
    return h2.astype(np.float32)


@dataclass
class ClassifierParams:
    weight: np.ndarray  # (K, c)
    bias: np.ndarray  # (K,)
    iteration: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32).reshape(-1)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.bias.size:
            raise DimensionError("weight must be (K, c) and bias (K,)")

    @classmethod
    def zeros(cls, k: int = NUM_CLASSES, c: int = FEATURE_CHANNELS) -> "ClassifierParams":
        return cls(np.zeros((k, c), np.float32), np.zeros(k, np.float32))

    @property
    def K(self) -> int:
        return self.bias.size

    @property
    def c(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.weight.copy(), self.bias.copy(), self.iteration)


def classify(f, p: ClassifierParams) -> np.ndarray:
    """Logits ``(..., h, w, K)`` for features ``(..., h, w, c)``."""
    f = np.asarray(f, dtype=np.float32)
    if f.shape[-1] != p.c:
        raise DimensionError(f"feature has {f.shape[-1]} channels, classifier expects {p.c}")
    return f @ p.weight.T + p.bias


def softmax_probs(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(f, p: ClassifierParams) -> np.ndarray:
    return classify(f, p).argmax(axis=-1)


def dump_checkpoint(p: ClassifierParams) -> bytes:
    return b"".join([
        CKPT_MAGIC,
        struct.pack("<III", CKPT_VERSION, p.K, p.c),
        p.weight.astype("<f4").tobytes(),
        p.bias.astype("<f4").tobytes(),
        struct.pack("<Q", p.iteration),
    ])


def parse_checkpoint(buf: bytes) -> ClassifierParams:
    if buf[:4] != CKPT_MAGIC:
        if len(buf) < 4:
            raise TruncatedError("file shorter than magic")
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    if len(buf) < 16:
        raise TruncatedError("truncated header")
    version, k, c = struct.unpack_from("<III", buf, 4)
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    need = 16 + 4 * k * c + 4 * k + 8
    if len(buf) < need:
        raise TruncatedError(f"expected {need} bytes, got {len(buf)}")
    if len(buf) > need:
        raise CheckpointError(f"{len(buf) - need} trailing bytes")
    w = np.frombuffer(buf, "<f4", k * c, 16).reshape(k, c).astype(np.float32)
    b = np.frombuffer(buf, "<f4", k, 16 + 4 * k * c).astype(np.float32)
    (it,) = struct.unpack_from("<Q", buf, need - 8)
    return ClassifierParams(w, b, it)


def save_checkpoint(p: ClassifierParams, path) -> None:
    Path(path).write_bytes(dump_checkpoint(p))


def load_checkpoint(path) -> ClassifierParams:
    return parse_checkpoint(Path(path).read_bytes())
