"""Imputation quality scores over an explicit evaluation mask.

The mask always means "score these entries", independent of how the data
encodes missingness. Point metrics are per-entry means over the mask; the
probabilistic score is a 19-level quantile (pinball) loss normalized by
the total magnitude of the truth, so it is scale-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError

CRPS_LEVELS = np.round(np.arange(1, 20) * 0.05, 2)


@dataclass
class MetricReport:
    mae: float
    mse: float
    rmse: float
    mre: float
    crps: float
    n_eval: int

    def to_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "rmse": self.rmse,
                "mre": self.mre, "crps": self.crps, "n_eval": self.n_eval}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_mask(y, y_hat, mask):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if y.shape != y_hat.shape or y.shape != mask.shape:
        raise DimensionError(
            f"shapes disagree: y {y.shape}, y_hat {y_hat.shape}, mask {mask.shape}")
    n_eval = int(mask.sum())
    if n_eval == 0:
        raise DomainError("evaluation mask selects no entries")
    # NaN may legitimately sit outside the mask (unobserved truth); drop it
    y = np.where(mask > 0, y, 0.0)
    y_hat = np.where(mask > 0, y_hat, 0.0)
    return y, y_hat, mask, n_eval


def pointwise_metrics(y, y_hat, mask) -> tuple[float, float, float, float]:
    """(mae, mse, rmse, mre) over the masked entries.

    mre sums per-entry relative errors |y - y_hat| / |y|; entries with
    y = 0 contribute nothing to that sum but still count in the
    denominator n_eval, so a truth of all zeros gives mre = 0.
    """
    y, y_hat, mask, n_eval = _check_mask(y, y_hat, mask)
    err = (y - y_hat) * mask
    mae = float(np.abs(err).sum() / n_eval)
    mse = float((err * err).sum() / n_eval)
    nonzero = mask * (y != 0)
    rel = np.divide(np.abs(err), np.abs(y), out=np.zeros_like(y), where=y != 0)
    mre = float((rel * nonzero).sum() / n_eval)
    return mae, mse, float(np.sqrt(mse)), mre


def quantile_loss(alpha: float, q, y):
    """Pinball loss (alpha - 1[y < q]) * (y - q); nonnegative everywhere."""
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (alpha - (y < q)) * (y - q)


def crps_entry(samples, y: float) -> float:
    """Quantile-averaged pinball score of one predictive sample set.

    Empirical quantiles at levels 0.05 .. 0.95 (linear interpolation
    between order statistics), each scored by twice its pinball loss,
    averaged over the 19 levels.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("empty sample set")
    q = np.quantile(samples, CRPS_LEVELS)
    return float(np.mean(2.0 * quantile_loss(CRPS_LEVELS, q, float(y))))


def crps_normalized(sample_tensor, y, mask) -> float:
    """Sum of per-entry scores over the mask, divided by sum |y| there."""
    samples = np.asarray(sample_tensor, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if samples.ndim != y.ndim + 1 or samples.shape[1:] != y.shape:
        raise DimensionError(
            f"samples {samples.shape} must stack predictions for y {y.shape}")
    if y.shape != mask.shape:
        raise DimensionError("mask shape differs from y")
    if mask.sum() == 0:
        raise DomainError("evaluation mask selects no entries")
    y = np.where(mask > 0, y, 0.0)
    denom = float((np.abs(y) * mask).sum())
    if denom == 0:
        raise EvaluationError(
            "normalization sum |y| over the mask is zero; normalized score undefined")
    # quantiles for every entry at once: (19,) levels x flattened entries
    flat = samples.reshape(samples.shape[0], -1)
    q = np.quantile(flat, CRPS_LEVELS, axis=0)          # (19, n_entries)
    loss = 2.0 * quantile_loss(CRPS_LEVELS[:, None], q, y.reshape(-1)[None, :])
    per_entry = loss.mean(axis=0).reshape(y.shape)
    return float((per_entry * mask).sum() / denom)


def evaluate_imputation(sample_tensor, y, mask) -> MetricReport:
    """Full report: point metrics on the sample median, normalized crps."""
    samples = np.asarray(sample_tensor, dtype=np.float64)
    median = np.quantile(samples, 0.5, axis=0)
    mae, mse, rmse, mre = pointwise_metrics(y, median, mask)
    crps = crps_normalized(samples, y, mask)
    n_eval = int(np.asarray(mask).sum())
    return MetricReport(mae=mae, mse=mse, rmse=rmse, mre=mre, crps=crps,
                        n_eval=n_eval)
