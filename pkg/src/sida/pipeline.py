"""Glue between the benchmark, the model and the trainer: feature caches, bank
construction, evaluation, style-statistics export and the toy component ablation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .augment import MixParams, patch_style_transfer
from .data_synth import Benchmark, downsample_labels, gen_benchmark
from .metrics import accumulate, miou, new_confusion
from .model import ClassifierParams, FrozenExtractor, extract, init_extractor, predict
from .style_bank import StyleBank, select_auxiliary
from .tensor_core import RandomSource, channel_stats
from .trainer import TrainConfig, TrainLog, adapt, pretrain_source

log = logging.getLogger(__name__)

# m=1, lambda pinned to 1, no noise, no entropy weighting: plain AdaIN to one bank style
DEGENERATE_MIX = MixParams(s_e=0.0, m=1, fixed_lambda=1.0)


def features_of(samples, ex: FrozenExtractor) -> np.ndarray:
    return extract(ex, np.stack([s.image for s in samples]))


def labels_of(samples) -> np.ndarray:
    return np.stack([downsample_labels(s.labels) for s in samples])


def source_arrays(samples, ex: FrozenExtractor):
    if not samples:
        raise ValueError("empty dataset")
    return features_of(samples, ex), labels_of(samples)


def build_bank(bank_images: dict, ex: FrozenExtractor) -> StyleBank:
    """Style bank from ``{domain: [ToySample, ...]}`` (the N synthetic images per domain)."""
    return StyleBank.from_features({d: list(features_of(v, ex)) for d, v in bank_images.items()})


def evaluate(samples, p: ClassifierParams, ex: FrozenExtractor):
    cm = new_confusion(p.K)
    for f, s in zip(features_of(samples, ex), samples):
        accumulate(cm, predict(f, p), downsample_labels(s.labels))
    return miou(cm)


def style_rows(source_feats, bank: StyleBank, target: str, n: int, mix: MixParams, seed: int,
               target_feats=None):
    """(tag, mu, sigma) rows for source features, bank entries and ``n`` stylized samples."""
    rows = [("source", *_ms(channel_stats(f))) for f in source_feats]
    for e in bank.entries:
        rows.append((f"bank:{e.domain}", e.stats.mu, e.stats.sigma))
    if target_feats is not None:
        rows += [(f"target:{target}", *_ms(channel_stats(f))) for f in target_feats]
    mains = bank.domain_entries(target)
    auxes = [select_auxiliary(e, bank) for e in mains]
    rng = RandomSource(seed, (4,))
    for i in range(n):
        src = int(rng.integers(len(source_feats)))
        k = int(rng.integers(len(mains)))
        sf = patch_style_transfer(source_feats[src], mains[k], auxes[k], mix, rng.substream(i))
        rows.append((f"stylized:{target}", *_ms(channel_stats(sf.data))))
    return rows


def _ms(st):
    return st.mu, st.sigma


def style_csv(rows) -> str:
    c = len(rows[0][1])
    head = ["tag"] + [f"mu_{k}" for k in range(c)] + [f"sigma_{k}" for k in range(c)]
    lines = [",".join(head)]
    for tag, mu, sigma in rows:
        lines.append(",".join([tag] + [f"{v:.6f}" for v in mu] + [f"{v:.6f}" for v in sigma]))
    return "\n".join(lines) + "\n"


@dataclass
class AblationResult:
    """Per-seed, per-domain target mIoU for each configuration."""

    scores: dict = field(default_factory=dict)  # config -> seed -> domain -> mIoU
    seconds: dict = field(default_factory=dict)  # config -> total adaptation wall-clock

    def mean(self, config: str) -> float:
        vals = [v for per_seed in self.scores[config].values() for v in per_seed.values()]
        return float(np.mean(vals))


def run_ablation(seeds=(0, 1, 2), pretrain_iters: int = 2000, adapt_iters: int = 400,
                 bench_kwargs=None, extractor_seed: int = 0, configs=None) -> AblationResult:
    """Source-only vs. single-style AdaIN vs. full SIDA on the toy benchmark.

    Each seed regenerates the benchmark, pretrains on its source split and adapts
    one checkpoint per target domain per configuration.
    """
    ex = init_extractor(extractor_seed)
    base = TrainConfig()
    if configs is None:
        configs = {
            "single_style": base.with_(mix=DEGENERATE_MIX, tau_ent=float("inf")),
            "sida": base,
        }
    out = AblationResult({"source_only": {}, **{k: {} for k in configs}},
                         {k: 0.0 for k in configs})
    for seed in seeds:
        bench: Benchmark = gen_benchmark(seed, **(bench_kwargs or {}))
        src = source_arrays(bench.source_train, ex)
        bank = build_bank(bench.bank, ex)
        p0 = pretrain_source(base.with_(iters=pretrain_iters, seed=seed), src, ex)
        out.scores["source_only"][seed] = {d: evaluate(v, p0, ex)[1] for d, v in bench.target.items()}
        for name, cfg in configs.items():
            cfg = cfg.with_(iters=adapt_iters, seed=seed)
            per = {}
            for d, test in bench.target.items():
                lg = TrainLog()
                p = adapt(cfg, src, bank, d, p0, log_out=lg)
                out.seconds[name] += lg.seconds
                per[d] = evaluate(test, p, ex)[1]
            out.scores[name][seed] = per
            log.info("seed %d %s: %s", seed, name, {d: round(v, 4) for d, v in per.items()})
    return out
