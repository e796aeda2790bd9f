"""Probabilistic multivariate time-series imputation.

Selective state-space blocks form the denoiser of a conditional diffusion
model; training is self-supervised via simulated missingness. See README
for the CLI walkthrough (synth / train / impute / evaluate).
"""

from .blocks import (BAMBlock, BlockConfig, ChannelAttention, CMBBlock, SMM,
                     TemporalAttention, bam_block, cmb_block, smm,
                     temporal_attention)
from .checkpoint import (Checkpoint, build_denoiser, load_checkpoint,
                         save_checkpoint)
from .data import (Dataset, NormalizationStats, SyntheticSpec, compute_stats,
                   denormalize, denormalize_values, generate_synthetic,
                   load_csv, normalize, save_csv, split_dataset)
from .denoiser import Denoiser, DenoiserConfig, StepEmbedding, embed_diffusion_step
from .diffusion import (DiffusionSchedule, ImputationResult, forward_noise,
                        impute, make_schedule, sample, schedule_from_dict,
                        training_step)
from .errors import (ConfigError, DegenerateBatchError, DimensionError,
                     DomainError, EvaluationError, ParseError, SchemaError,
                     TrainingDiverged)
from .masking import (MaskPlan, MaskSettings, TimeSeries, TrainingBatch,
                      block_mask, draw_plan, forecast_mask,
                      pattern_mimic_mask, random_mask, split_condition_target,
                      validate_plan)
from .metrics import (MetricReport, crps_entry, crps_normalized,
                      evaluate_imputation, pointwise_metrics, quantile_loss)
from .numerics import (Module, Tensor, finite_difference_check, no_grad,
                       set_default_dtype)
from .ssm import (DiscretizedPair, PNMBlock, SSMLayer, active_backend,
                  available_backends, discretize, pnm_block, selective_scan,
                  ssm_scan, use_backend)
from .trainer import (AdamState, TrainConfig, TrainResult, adam_step,
                      clip_gradients, train, validation_loss, write_loss_csv)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BAMBlock", "BlockConfig", "ChannelAttention", "CMBBlock",
    "Checkpoint", "ConfigError", "Dataset", "DegenerateBatchError",
    "Denoiser", "DenoiserConfig", "DiffusionSchedule", "DimensionError",
    "DiscretizedPair", "DomainError", "EvaluationError", "ImputationResult",
    "MaskPlan", "MaskSettings", "MetricReport", "Module",
    "NormalizationStats", "PNMBlock", "ParseError", "SMM", "SSMLayer",
    "SchemaError", "StepEmbedding", "SyntheticSpec", "Tensor",
    "TemporalAttention", "TimeSeries", "TrainConfig", "TrainResult",
    "TrainingBatch", "TrainingDiverged", "active_backend", "adam_step",
    "available_backends", "bam_block", "block_mask", "build_denoiser",
    "clip_gradients", "cmb_block", "compute_stats", "crps_entry",
    "crps_normalized", "denormalize", "denormalize_values", "discretize",
    "draw_plan", "embed_diffusion_step", "evaluate_imputation",
    "finite_difference_check", "forecast_mask", "forward_noise",
    "generate_synthetic", "impute", "load_checkpoint", "load_csv",
    "make_schedule", "no_grad", "normalize", "pattern_mimic_mask",
    "pnm_block", "pointwise_metrics", "quantile_loss", "random_mask",
    "sample", "save_checkpoint", "save_csv", "schedule_from_dict",
    "selective_scan", "set_default_dtype", "smm", "split_condition_target",
    "split_dataset", "ssm_scan", "temporal_attention", "train",
    "training_step", "use_backend", "validate_plan", "validation_loss",
    "write_loss_csv",
]
