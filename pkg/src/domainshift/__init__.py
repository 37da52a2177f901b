"""Quantify stylistic domain shift in image corpora (ICV / IDD) and run
desk-scale grounded training with verifiable gradients."""

__version__ = "0.1.0"

from .corpus import (
    CorpusManifest,
    DomainSpec,
    SplitSpec,
    decode_image,
    load_manifest,
    save_manifest,
    scan_tree,
    split_corpus,
)
from .divergence import js_divergence, kl_divergence
from .histogram import (
    ChannelDistribution,
    FeatureDistribution,
    feature_histogram,
    image_histogram,
    pool_histogram,
)
from .metrics import (
    IcvReport,
    IddMatrix,
    idd_matrix,
    inter_domain_dissimilarity,
    intra_class_variation,
    representation_idd,
)
from .trainer import (
    AdamState,
    LinearHead,
    LossBreakdown,
    ToyFeaturizer,
    TrainConfig,
    adam_step,
    cross_entropy,
    finite_diff_check,
    forward_features,
    grounding_js,
    init_featurizer,
    kl_head_regularizer,
    smos_total_loss,
    train_grounded,
    train_precursor,
)
