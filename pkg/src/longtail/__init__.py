"""Desk-scale lab for long-tailed classification.

Synthetic long-tailed Gaussian benchmarks, re-balancing samplers, the
CE/RW/RS training manners and their two-stage variants, a bilateral-branch
model with cumulative learning, and the diagnostics used to compare them,
all on a small deterministic dense-network engine.
"""

from .analysis import (
    CompactnessReport,
    NormReport,
    classifier_norms,
    compactness,
    count_norm_rank_correlation,
    ensemble_eval,
    feature_quality_eval,
)
from .baselines import (
    MANNERS,
    DecoupleGridResult,
    cross_dataset_transfer,
    decouple_grid,
    evaluate,
    freeze_and_retrain_classifier,
    predict,
    retrain_head,
    reweight_factors,
    train_manner,
    train_with_sampler,
    two_stage_finetune,
)
from .bbn import (
    SCHEDULES,
    BBNModel,
    BBNTrainConfig,
    aggregate_logits,
    alpha_at,
    bbn_loss,
    combined_classifier,
    evaluate_bbn,
    forward_bilateral,
    infer,
    load_model,
    save_model,
    train_bbn,
)
from .data import (
    Dataset,
    ImbalanceProfile,
    SyntheticSpec,
    load_dataset,
    make_balanced_test,
    make_counts,
    save_dataset,
    synth_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    LongtailError,
    NumericError,
    ShapeError,
    StateError,
)
from .nn import (
    Affine,
    Network,
    OptimizerConfig,
    Parameter,
    ReLU,
    derived_seed,
    lr_at,
    new_rng,
    sgd_step,
    softmax,
    softmax_xent,
)
from .samplers import (
    SAMPLER_KINDS,
    BalancedSampler,
    ClassWeights,
    ReversedSampler,
    UniformSampler,
    make_sampler,
    reversed_probs,
    steps_per_epoch,
)

__version__ = "0.1.0"
