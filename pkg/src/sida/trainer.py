"""Entropy-weighted cross-entropy, closed-form classifier gradients, SGD with
momentum and a polynomial schedule, source pretraining and the adaptation loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import MixParams, patch_style_transfer
from .model import ClassifierParams, FrozenExtractor, classify, extract, softmax_probs
from .style_bank import StyleBank, select_auxiliary
from .tensor_core import DimensionError, RandomSource

log = logging.getLogger(__name__)

IGNORE_INDEX = 255


class DegenerateBatchError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    iters: int = 2000
    base_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-3
    poly_power: float = 0.9
    tau_ent: float = 1.0
    mix: MixParams = field(default_factory=MixParams)
    seed: int = 0
    entropy_from: str = "current"  # or "frozen": entropy from the pretrained copy
    weight_scope: str = "batch"  # or "item"

    def __post_init__(self):
        if self.batch_size < 1 or self.iters < 1:
            raise ValueError("batch_size and iters must be >= 1")
        if self.base_lr <= 0 or self.momentum < 0 or self.weight_decay < 0 or self.poly_power <= 0:
            raise ValueError("invalid optimizer hyperparameters")
        if self.tau_ent < 0:
            raise ValueError("tau_ent must be >= 0")
        if self.entropy_from not in ("current", "frozen"):
            raise ValueError("entropy_from must be 'current' or 'frozen'")
        if self.weight_scope not in ("batch", "item"):
            raise ValueError("weight_scope must be 'batch' or 'item'")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass
class OptimizerState:
    v_weight: np.ndarray
    v_bias: np.ndarray

    @classmethod
    def like(cls, p: ClassifierParams) -> "OptimizerState":
        return cls(np.zeros_like(p.weight), np.zeros_like(p.bias))


def mean_entropy(p) -> float:
    """Spatial mean of per-pixel entropy (nats); ``0 ln 0`` counts as 0."""
    p = np.asarray(p, dtype=np.float64)
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    ent = -plogp.sum(axis=-1)
    return float(ent.mean())


def loss_weight(w_ent: float, tau: float) -> float:
    return 1.0 + w_ent if w_ent >= tau else 1.0


def weighted_ce(logits, labels, W=1.0):
    """Mean CE over non-ignored pixels scaled by ``W``.

    ``W`` is a constant: a scalar, or an array broadcastable against ``labels``
    (e.g. shape ``(n, 1, 1)`` for per-item weights). Returns ``(loss, dlogits)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.shape[:-1] != labels.shape:
        raise DimensionError(f"logits {logits.shape} do not match labels {labels.shape}")
    K = logits.shape[-1]
    valid = labels != IGNORE_INDEX
    if np.any(valid & ((labels < 0) | (labels >= K))):
        raise ValueError("label outside [0, K)")
    count = int(valid.sum())
    if count == 0:
        raise DegenerateBatchError("every pixel is ignored")
    z = logits - logits.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logsum
    safe = np.where(valid, labels, 0)
    nll = -np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    Wpix = np.broadcast_to(np.asarray(W, dtype=np.float64), labels.shape)
    loss = float((Wpix * nll)[valid].sum() / count)
    grad = np.exp(logp)
    np.put_along_axis(grad, safe[..., None], np.take_along_axis(grad, safe[..., None], -1) - 1.0, -1)
    grad *= (Wpix * valid / count)[..., None]
    return loss, grad


def classifier_gradients(f, dlogits):
    """Backward of :func:`classify`: ``(dW (K, c), db (K,))``; leading dims are summed."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(dlogits, dtype=np.float64)
    if f.shape[:-1] != g.shape[:-1]:
        raise DimensionError(f"feature {f.shape} and dlogits {g.shape} disagree spatially")
    f2 = f.reshape(-1, f.shape[-1])
    g2 = g.reshape(-1, g.shape[-1])
    return g2.T @ f2, g2.sum(axis=0)


def sgd_step(p: ClassifierParams, grads, st: OptimizerState, lr, momentum, wd):
    dW, db = grads
    gw = dW + wd * p.weight
    gb = db + wd * p.bias
    st.v_weight = (momentum * st.v_weight + gw).astype(np.float32)
    st.v_bias = (momentum * st.v_bias + gb).astype(np.float32)
    p.weight = (p.weight - lr * st.v_weight).astype(np.float32)
    p.bias = (p.bias - lr * st.v_bias).astype(np.float32)
    p.iteration += 1
    return p, st


def poly_lr(it, total, base, power) -> float:
    if not 0 <= it <= total:
        raise ValueError(f"iteration {it} outside [0, {total}]")
    return base * (1.0 - it / total) ** power


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    def add(self, it, lr, w_ent, W, loss):
        self.rows.append((it, lr, w_ent, W, loss))

    def to_csv(self) -> str:
        lines = ["iter,lr,W_ent,W,loss"]
        for it, lr, w_ent, W, loss in self.rows:
            lines.append(f"{it},{lr:.8g},{w_ent:.6f},{W:.6f},{loss:.6f}")
        return "\n".join(lines) + "\n"


def _as_arrays(dataset, extractor):
    """Features and labels at feature resolution for a list of samples, or pass-through
    for an already extracted ``(features, labels)`` pair."""
    if isinstance(dataset, tuple):
        feats, labels = dataset
        return np.asarray(feats, np.float32), np.asarray(labels)
    from .data_synth import downsample_labels

    if len(dataset) == 0:
        raise ValueError("empty dataset")
    imgs = np.stack([s.image for s in dataset])
    feats = extract(extractor, imgs)
    labels = np.stack([downsample_labels(s.labels) for s in dataset])
    return feats, labels


def pretrain_source(cfg: TrainConfig, dataset, extractor: FrozenExtractor,
                    log_out: TrainLog | None = None) -> ClassifierParams:
    """Plain CE on clean source features; classifier starts at zero."""
    feats, labels = _as_arrays(dataset, extractor)
    if len(feats) == 0:
        raise ValueError("empty dataset")
    p = ClassifierParams.zeros(c=feats.shape[-1])
    st = OptimizerState.like(p)
    rng = RandomSource(cfg.seed, (1,))
    t0 = time.perf_counter()
    for it in range(cfg.iters):
        idx = rng.integers(len(feats), size=cfg.batch_size)
        f, y = feats[idx], labels[idx]
        logits = classify(f, p)
        loss, dl = weighted_ce(logits, y, 1.0)
        lr = poly_lr(it, cfg.iters, cfg.base_lr, cfg.poly_power)
        sgd_step(p, classifier_gradients(f, dl), st, lr, cfg.momentum, cfg.weight_decay)
        if log_out is not None:
            log_out.add(it, lr, mean_entropy(softmax_probs(logits)), 1.0, loss)
    elapsed = time.perf_counter() - t0
    if log_out is not None:
        log_out.seconds = elapsed
    log.info("pretrain: %d iters in %.2fs", cfg.iters, elapsed)
    return p


def adapt(cfg: TrainConfig, source_dataset, bank: StyleBank, target_domain: str,
          pretrained: ClassifierParams, extractor: FrozenExtractor | None = None,
          log_out: TrainLog | None = None) -> ClassifierParams:
    """Fine-tune the classifier on source features stylized toward ``target_domain``.

    Each item picks a main entry of the target domain uniformly, pairs it with its
    cached auxiliary entry and is stylized by Patch Style Transfer. The loss is
    CE scaled by ``1 + W_ent`` whenever the mean prediction entropy reaches ``tau_ent``.
    """
    if target_domain not in bank.domains:
        raise KeyError(f"domain not in bank: {target_domain!r}")
    feats, labels = _as_arrays(source_dataset, extractor)
    mains = bank.domain_entries(target_domain)
    auxes = [select_auxiliary(e, bank) for e in mains]
    for e, a in zip(mains, auxes):
        log.debug("main %s/%d -> aux %s/%d", e.domain, e.source_index, a.domain, a.source_index)

    p = pretrained.copy()
    p.iteration = 0
    frozen = pretrained.copy()
    st = OptimizerState.like(p)
    rng = RandomSource(cfg.seed, (2,))
    B = cfg.batch_size
    t0 = time.perf_counter()
    for it in range(cfg.iters):
        idx = rng.integers(len(feats), size=B)
        which = rng.integers(len(mains), size=B)
        styled = np.stack([
            patch_style_transfer(feats[i], mains[k], auxes[k], cfg.mix,
                                 RandomSource(cfg.seed, (3, it, b))).data
            for b, (i, k) in enumerate(zip(idx, which))
        ])
        y = labels[idx]
        logits = classify(styled, p)
        ent_logits = logits if cfg.entropy_from == "current" else classify(styled, frozen)
        probs = softmax_probs(ent_logits)
        per_item = np.array([mean_entropy(q) for q in probs])
        if cfg.weight_scope == "batch":
            w_ent = float(per_item.mean())
            W = loss_weight(w_ent, cfg.tau_ent)
            W_arr = W
        else:
            w_ent = float(per_item.mean())
            Ws = np.array([loss_weight(e, cfg.tau_ent) for e in per_item])
            W = float(Ws.mean())
            W_arr = Ws[:, None, None]
        loss, dl = weighted_ce(logits, y, W_arr)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        lr = poly_lr(it, cfg.iters, cfg.base_lr, cfg.poly_power)
        sgd_step(p, classifier_gradients(styled, dl), st, lr, cfg.momentum, cfg.weight_decay)
        if log_out is not None:
            log_out.add(it, lr, w_ent, W, loss)
    elapsed = time.perf_counter() - t0
    if log_out is not None:
        log_out.seconds = elapsed
    log.info("adapt[%s]: %d iters in %.2fs", target_domain, cfg.iters, elapsed)
    return p
