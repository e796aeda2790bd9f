"""Windows, missingness, and self-supervised mask plans.

Training never sees ground truth for truly missing entries, so supervision
comes from hiding a subset of the observed entries (the targets) and
conditioning on the rest. Four strategies cover the use cases: uniform
random, mimicry of another window's missing pattern, contiguous blocks,
and forecasting (mask the tail). A mixture of the first two is the
training default.

All plans satisfy, by construction: cond and target masks are disjoint,
and both select only observed entries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One fixed-length window: values, missingness flags, timestamps.

    missing = 1 marks an entry with no observation; its value slot is
    forced to 0 on construction so downstream code never sees stale or
    NaN placeholders.
    """

    values: np.ndarray       # (K, L)
    missing: np.ndarray      # (K, L), 1 = missing
    timestamps: np.ndarray   # (L,), nondecreasing

    def __init__(self, values, missing=None, timestamps=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"values must be (K, L), got {values.shape}")
        if missing is None:
            missing = np.isnan(values).astype(np.float64)
        missing = np.asarray(missing, dtype=np.float64)
        if missing.shape != values.shape:
            raise DimensionError("missing mask shape differs from values")
        if not np.all((missing == 0) | (missing == 1)):
            raise DomainError("missing flags must be 0 or 1")
        if timestamps is None:
            timestamps = np.arange(values.shape[1], dtype=np.float64)
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if timestamps.shape != (values.shape[1],):
            raise DimensionError("timestamps must have one entry per step")
        if np.any(np.diff(timestamps) < 0):
            raise DomainError("timestamps must be nondecreasing")
        values = np.where(missing > 0, 0.0, values)
        if not np.all(np.isfinite(values)):
            raise DomainError("observed values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "timestamps", timestamps)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return 1.0 - self.missing


@dataclass(frozen=True, eq=False)
class MaskPlan:
    cond_mask: np.ndarray     # (K, L)
    target_mask: np.ndarray   # (K, L)
    strategy: str
    fallback: bool = False    # pattern mimicry fell through to random

    @property
    def n_targets(self) -> int:
        return int(self.target_mask.sum())


@dataclass(frozen=True, eq=False)
class TrainingBatch:
    """Window values split by role: targets to denoise, conditions to keep."""

    x0: np.ndarray            # values at target entries, zeros elsewhere
    x_cond: np.ndarray        # values at condition entries, zeros elsewhere
    cond_mask: np.ndarray
    target_mask: np.ndarray
    observed_mask: np.ndarray


def validate_plan(plan: MaskPlan, series: TimeSeries) -> None:
    if plan.cond_mask.shape != series.values.shape:
        raise DimensionError("plan shape differs from series shape")
    if np.any(plan.cond_mask * plan.target_mask != 0):
        raise DomainError("condition and target masks overlap")
    union = plan.cond_mask + plan.target_mask
    if np.any(union * series.missing != 0):
        raise DomainError("mask selects a truly missing entry")


def random_mask(series: TimeSeries, ratio: float,
                rng: np.random.Generator) -> MaskPlan:
    """Hide exactly round(ratio * n_observed) observed entries, uniformly."""
    if not 0.0 <= ratio <= 1.0:
        raise DomainError(f"ratio must be in [0, 1], got {ratio}")
    obs_idx = np.flatnonzero(series.missing.reshape(-1) == 0)
    if obs_idx.size == 0:
        raise DomainError("series has no observed entries")
    n_target = int(round(ratio * obs_idx.size))
    chosen = rng.choice(obs_idx.size, size=n_target, replace=False)
    target = np.zeros(series.values.size)
    target[obs_idx[chosen]] = 1.0
    target = target.reshape(series.values.shape)
    cond = series.observed * (1.0 - target)
    return MaskPlan(cond_mask=cond, target_mask=target, strategy="random")


def pattern_mimic_mask(series: TimeSeries, donor_missing,
                       rng: np.random.Generator,
                       fallback_ratio: float | None = None) -> MaskPlan:
    """Hide the entries another window is missing at.

    Targets are this window's observed entries that the donor pattern has
    missing. An empty intersection falls back to random_mask, at
    fallback_ratio when given, else at the donor's own missing fraction;
    the plan records the fallback. Only the fallback consumes rng draws.
    """
    donor = np.asarray(donor_missing, dtype=np.float64)
    if donor.shape != series.values.shape:
        raise DimensionError("donor pattern shape differs from series shape")
    target = series.observed * (donor > 0)
    if target.sum() == 0:
        ratio = float(donor.mean()) if fallback_ratio is None else fallback_ratio
        plan = random_mask(series, ratio, rng)
        return replace(plan, strategy="pattern_mimic", fallback=True)
    cond = series.observed * (1.0 - target)
    return MaskPlan(cond_mask=cond, target_mask=target, strategy="pattern_mimic")


def block_mask(series: TimeSeries, block_len_range: tuple[int, int],
               n_blocks: int, rng: np.random.Generator) -> MaskPlan:
    """Hide n_blocks contiguous spans per channel; overlaps merge.

    Per channel, per block, the draws are block length (inclusive range)
    then start position. Targets are the covered observed entries.
    """
    lo, hi = int(block_len_range[0]), int(block_len_range[1])
    L = series.length
    if not 1 <= lo <= hi <= L:
        raise DomainError(f"need 1 <= min <= max <= {L}, got ({lo}, {hi})")
    if n_blocks < 0:
        raise DomainError("n_blocks must be >= 0")
    covered = np.zeros(series.values.shape)
    for c in range(series.n_channels):
        for _ in range(n_blocks):
            length = int(rng.integers(lo, hi + 1))
            start = int(rng.integers(0, L - length + 1))
            covered[c, start:start + length] = 1.0
    target = series.observed * covered
    cond = series.observed * (1.0 - covered)
    return MaskPlan(cond_mask=cond, target_mask=target, strategy="block")


def forecast_mask(series: TimeSeries, horizon: int) -> MaskPlan:
    """Hide the last `horizon` steps of every channel."""
    L = series.length
    if not 0 < horizon < L:
        raise DomainError(f"horizon must be in (0, {L}), got {horizon}")
    tail = np.zeros(series.values.shape)
    tail[:, L - horizon:] = 1.0
    target = series.observed * tail
    cond = series.observed * (1.0 - tail)
    return MaskPlan(cond_mask=cond, target_mask=target, strategy="forecast")


@dataclass
class MaskSettings:
    """Strategy selection plus every strategy's parameters in one place."""

    strategy: str = "mix"
    ratio: float = 0.5
    block_len: tuple[int, int] = (4, 12)
    n_blocks: int = 2
    horizon: int = 12
    mix_weight: float = 0.5     # probability of the mimic branch in "mix"

    def __post_init__(self):
        known = ("random", "pattern_mimic", "block", "forecast", "mix")
        if self.strategy not in known:
            raise DomainError(f"mask strategy must be one of {known}")
        if not 0.0 <= self.mix_weight <= 1.0:
            raise DomainError("mix_weight must be in [0, 1]")


def draw_plan(series: TimeSeries, settings: MaskSettings,
              rng: np.random.Generator, donor_missing=None,
              fallback_ratio: float | None = None) -> MaskPlan:
    """Draw one plan per the configured strategy.

    "mix" draws a branch selector first (uniform < mix_weight picks
    mimicry when a donor exists), then the branch's own parameters; the
    random branch redraws its ratio uniformly from [0.1, 0.9] each time.
    """
    s = settings.strategy
    if s == "mix":
        use_mimic = rng.random() < settings.mix_weight and donor_missing is not None
        if use_mimic:
            return pattern_mimic_mask(series, donor_missing, rng, fallback_ratio)
        return random_mask(series, rng.uniform(0.1, 0.9), rng)
    if s == "random":
        return random_mask(series, settings.ratio, rng)
    if s == "pattern_mimic":
        if donor_missing is None:
            raise DomainError("pattern_mimic needs a donor pattern")
        return pattern_mimic_mask(series, donor_missing, rng, fallback_ratio)
    if s == "block":
        return block_mask(series, settings.block_len, settings.n_blocks, rng)
    return forecast_mask(series, settings.horizon)


def split_condition_target(series: TimeSeries, plan: MaskPlan) -> TrainingBatch:
    """Materialize a plan into the denoiser's input arrays."""
    validate_plan(plan, series)
    return TrainingBatch(
        x0=series.values * plan.target_mask,
        x_cond=series.values * plan.cond_mask,
        cond_mask=plan.cond_mask,
        target_mask=plan.target_mask,
        observed_mask=series.observed,
    )
