"""Procedural desk-scale segmentation benchmark.

Source scenes are colored shapes on a background. Target domains (night, fog,
rain, snow) are closed-form photometric maps whose strength varies globally and
locally per test image. Bank images stand in for synthetic translated images:
fresh scenes transformed at one canonical, spatially flat intensity.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor_core import RandomSource

H = W = 64
NUM_CLASSES = 5
DOMAINS = ("night", "snow", "rain", "fog")
CANONICAL_INTENSITY = 0.8
META_HEADER = ["file", "domain", "role", "kind", "global_intensity", "field_angle"]

# circle, square, triangle, horizontal bar
CLASS_COLORS = np.array([
    [0.45, 0.42, 0.38],
    [0.85, 0.20, 0.18],
    [0.20, 0.70, 0.25],
    [0.20, 0.30, 0.85],
    [0.90, 0.80, 0.15],
])
JITTER = 0.04


@dataclass
class ToySample:
    image: np.ndarray  # (64, 64, 3) float in [0, 1]
    labels: np.ndarray  # (64, 64) uint8
    domain: str
    role: str  # source | target-test | synthetic-bank
    kind: str = "none"
    global_intensity: float = 0.0
    field_angle: float = 0.0


@dataclass(frozen=True)
class DomainTransform:
    kind: str
    global_intensity: float
    field_angle: float | None = None  # None -> flat local field of ones
    noise_seed: int = 0

    def local_field(self) -> np.ndarray:
        if self.field_angle is None:
            return np.ones((H, W))
        return ramp_field(self.field_angle)


def ramp_field(angle: float) -> np.ndarray:
    """Linear ramp from 0.5 to 1.0 across the image along ``angle`` (radians)."""
    yy, xx = np.mgrid[0:H, 0:W] / (H - 1)
    proj = np.cos(angle) * xx + np.sin(angle) * yy
    lo, hi = proj.min(), proj.max()
    return 0.5 + 0.5 * (proj - lo) / (hi - lo)


def _shape_mask(kind: int, cy, cx, size) -> np.ndarray:
    yy, xx = np.mgrid[0:H, 0:W] + 0.5
    dy, dx = yy - cy, xx - cx
    if kind == 1:
        return dy ** 2 + dx ** 2 <= size ** 2
    if kind == 2:
        return (np.abs(dy) <= size) & (np.abs(dx) <= size)
    if kind == 3:
        # apex up: inside when below the top vertex and within the widening sides
        t = (dy + size) / (2 * size)
        return (t >= 0) & (t <= 1) & (np.abs(dx) <= t * size)
    if kind == 4:
        return (np.abs(dy) <= size * 0.35) & (np.abs(dx) <= size * 1.8)
    raise ValueError(kind)


def gen_scene(rng: RandomSource, domain: str = "source", role: str = "source") -> ToySample:
    g = rng.generator
    labels = np.zeros((H, W), np.uint8)
    n_shapes = int(g.integers(2, 5))
    kinds = g.choice([1, 2, 3, 4], size=n_shapes, replace=False)
    for k in kinds:
        size = g.uniform(7, 14)
        cy, cx = g.uniform(size, H - size), g.uniform(size, W - size)
        labels[_shape_mask(int(k), cy, cx, size)] = k
    base = CLASS_COLORS[labels]
    tint = g.normal(0, 0.03, size=3)  # per-scene illumination
    img = base + tint + g.normal(0, JITTER, size=(H, W, 3))
    return ToySample(np.clip(img, 0, 1), labels, domain, role)


def apply_domain_transform(img, t: DomainTransform) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    s = (t.global_intensity * t.local_field())[..., None]
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(t.noise_seed)))
    if t.kind == "night":
        out = img * (1 - 0.7 * s)
        out[..., 2:3] += 0.08 * s
    elif t.kind == "fog":
        a = 0.6 * s
        compressed = img - (img - 0.5) * (0.3 * s)
        out = (1 - a) * compressed + a
    elif t.kind == "rain":
        yy, xx = np.mgrid[0:H, 0:W]
        phase = g.integers(0, 7)
        streak = ((xx + yy + phase) % 7 == 0).astype(float)
        streak *= g.uniform(0.5, 1.0, size=(H, W))
        out = img * (1 - 0.15 * s) + 0.35 * s * streak[..., None]
    elif t.kind == "snow":
        speckle = (g.random((H, W)) < 0.2 * s[..., 0]).astype(float)
        out = img + 0.15 * s + 0.7 * speckle[..., None]
    else:
        raise ValueError(f"unknown transform kind {t.kind!r}")
    return np.clip(out, 0.0, 1.0)


def downsample_labels(labels, factor: int = 2) -> np.ndarray:
    """Majority vote over ``factor x factor`` blocks; ties go to the smaller class id."""
    labels = np.asarray(labels)
    h, w = labels.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} labels not divisible by {factor}")
    blocks = labels.reshape(h // factor, factor, w // factor, factor).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(h // factor, w // factor, -1).astype(np.int64)
    n = max(int(labels.max()) + 1, 1)
    counts = (blocks[..., None] == np.arange(n)).sum(axis=2)
    return counts.argmax(axis=-1).astype(np.uint8)  # argmax keeps the first max


@dataclass
class Benchmark:
    source_train: list
    source_val: list
    target: dict  # domain -> list[ToySample]
    bank: dict  # domain -> list[ToySample]


def gen_benchmark(seed: int, n_source: int = 64, n_val: int = 32, n_target: int = 24,
                  n_bank: int = 3, domains=DOMAINS) -> Benchmark:
    if min(n_source, n_val, n_target, n_bank) < 1:
        raise ValueError("all counts must be >= 1")
    root = RandomSource(seed)
    train = [_quantize(gen_scene(root.substream(0, i))) for i in range(n_source)]
    val = [_quantize(gen_scene(root.substream(1, i))) for i in range(n_val)]
    target, bank = {}, {}
    for d_idx, d in enumerate(domains):
        items = []
        for i in range(n_target):
            r = root.substream(2, d_idx, i)
            s = gen_scene(r, d, "target-test")
            gi = float(r.generator.uniform(0.3, 1.0))
            ang = float(r.generator.uniform(0, 2 * math.pi))
            t = DomainTransform(d, gi, ang, int(r.generator.integers(2 ** 32)))
            items.append(_quantize(_transformed(s, t)))
        target[d] = items
        shots = []
        for k in range(n_bank):
            r = root.substream(3, d_idx, k)
            s = gen_scene(r, d, "synthetic-bank")
            t = DomainTransform(d, CANONICAL_INTENSITY, None, int(r.generator.integers(2 ** 32)))
            shots.append(_quantize(_transformed(s, t)))
        bank[d] = shots
    return Benchmark(train, val, target, bank)


def _quantize(s: ToySample) -> ToySample:
    # in-memory samples match what a PPM round trip yields
    s.image = _to_u8(s.image).astype(np.float32) / np.float32(255.0)
    return s


def _transformed(s: ToySample, t: DomainTransform) -> ToySample:
    s.image = apply_domain_transform(s.image, t)
    s.kind = t.kind
    s.global_intensity = t.global_intensity
    s.field_angle = float("nan") if t.field_angle is None else t.field_angle
    return s


# ---- on-disk layout: <root>/{source,bank,target}/<split or domain>/imgNNNN.ppm ----

def _to_u8(img) -> np.ndarray:
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def write_split(samples, folder) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(META_HEADER)
    for n, s in enumerate(samples):
        name = f"img{n:04d}.ppm"
        Image.fromarray(_to_u8(s.image)).save(folder / name, format="PPM")
        Image.fromarray(s.labels.astype(np.uint8)).save(folder / f"lab{n:04d}.pgm", format="PPM")
        angle = "" if math.isnan(s.field_angle) else f"{s.field_angle:.6f}"
        wr.writerow([name, s.domain, s.role, s.kind, f"{s.global_intensity:.6f}", angle])
    (folder / "meta.csv").write_text(buf.getvalue())


def read_split(folder) -> list[ToySample]:
    folder = Path(folder)
    out = []
    with open(folder / "meta.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            stem = row["file"][3:-4]
            img = np.asarray(Image.open(folder / row["file"]).convert("RGB"), np.float32) / 255.0
            lab = np.asarray(Image.open(folder / f"lab{stem}.pgm"), np.uint8)
            angle = float(row["field_angle"]) if row["field_angle"] else float("nan")
            out.append(ToySample(img, lab, row["domain"], row["role"], row["kind"],
                                 float(row["global_intensity"]), angle))
    return out


def write_benchmark(b: Benchmark, root) -> None:
    root = Path(root)
    write_split(b.source_train, root / "source" / "train")
    write_split(b.source_val, root / "source" / "val")
    for d, items in b.target.items():
        write_split(items, root / "target" / d)
    for d, items in b.bank.items():
        write_split(items, root / "bank" / d)


def read_benchmark(root) -> Benchmark:
    root = Path(root)
    if not (root / "source" / "train" / "meta.csv").exists():
        raise FileNotFoundError(f"no benchmark at {root}")
    target = {p.name: read_split(p) for p in sorted((root / "target").iterdir()) if p.is_dir()}
    bank = {p.name: read_split(p) for p in sorted((root / "bank").iterdir()) if p.is_dir()}
    return Benchmark(read_split(root / "source" / "train"), read_split(root / "source" / "val"),
                     target, bank)
