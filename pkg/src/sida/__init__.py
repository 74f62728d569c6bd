"""Zero-shot domain adaptation from a handful of synthetic target-style images:
style banks, Domain Mix, Patch Style Transfer and entropy-weighted fine-tuning."""

from .augment import MixParams, add_style_noise, domain_mix, patch_grid, patch_style_transfer, perturb_source
from .model import ClassifierParams, classify, extract, init_extractor, softmax_probs
from .style_bank import StyleBank, StyleEntry, build_entry, load_bank, save_bank, select_auxiliary
from .tensor_core import (
    SIGMA_FLOOR,
    RandomSource,
    StyleStats,
    adain,
    channel_stats,
    cosine_similarity,
    global_average_pool,
    sample_gaussian,
    sample_uniform,
)
from .trainer import TrainConfig, adapt, loss_weight, mean_entropy, pretrain_source, weighted_ce

__version__ = "0.1.0"
