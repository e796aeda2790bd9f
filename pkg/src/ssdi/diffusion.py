"""Conditional denoising diffusion over masked windows.

The forward process mixes Gaussian noise into the target entries of a
window; the network learns to predict that noise given the observed
entries as conditioning. Sampling runs the learned reverse chain from
pure noise, with observed entries pinned to their true values.

Step indexing is 1-based: step t reads schedule arrays at t - 1, and
alpha_bar at t = 0 is defined as 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, DomainError
from .numerics import Tensor, default_dtype, no_grad

QUANTILE_LEVELS = np.round(np.arange(1, 20) * 0.05, 2)  # 0.05 .. 0.95


@dataclass(frozen=True)
class DiffusionSchedule:
    kind: str
    beta_start: float
    beta_end: float
    beta: np.ndarray        # (T,)
    alpha: np.ndarray       # 1 - beta
    alpha_bar: np.ndarray   # cumulative product of alpha

    @property
    def n_steps(self) -> int:
        return len(self.beta)

    def _index(self, t):
        t = np.asarray(t)
        if not np.issubdtype(t.dtype, np.integer):
            raise DomainError("diffusion steps must be integers")
        if np.any(t < 1) or np.any(t > self.n_steps):
            raise DomainError(f"step out of range [1, {self.n_steps}]: {t}")
        return t - 1

    def alpha_bar_at(self, t):
        return self.alpha_bar[self._index(t)]

    def alpha_bar_before(self, t):
        """alpha_bar at t - 1, with the t = 1 value defined as 1."""
        i = self._index(t)
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[i]

    def sigma2(self, t):
        """Reverse-step noise variance (1-ab_prev)/(1-ab) * beta."""
        i = self._index(t)
        ab = self.alpha_bar[i]
        ab_prev = self.alpha_bar_before(t)
        return (1.0 - ab_prev) / (1.0 - ab) * self.beta[i]

    def to_dict(self) -> dict:
        return {"T": self.n_steps, "beta_start": self.beta_start,
                "beta_end": self.beta_end, "kind": self.kind}


def make_schedule(n_steps: int, beta_start: float = 1e-4,
                  beta_end: float = 0.5, kind: str = "quadratic") -> DiffusionSchedule:
    """Build the noise-level ladder.

    "linear" spaces beta evenly; "quadratic" spaces sqrt(beta) evenly,
    which front-loads small noise increments. Both hit beta_start and
    beta_end exactly at the ends (a single-step schedule uses beta_start).
    """
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise DomainError("need 0 < beta_start <= beta_end < 1")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, n_steps)
    elif kind == "quadratic":
        beta = np.linspace(beta_start ** 0.5, beta_end ** 0.5, n_steps) ** 2
    else:
        raise DomainError(f"unknown schedule kind: {kind!r}")
    alpha = 1.0 - beta
    return DiffusionSchedule(kind=kind, beta_start=float(beta_start),
                             beta_end=float(beta_end), beta=beta, alpha=alpha,
                             alpha_bar=np.cumprod(alpha))


def schedule_from_dict(d: dict) -> DiffusionSchedule:
    return make_schedule(int(d["T"]), float(d.get("beta_start", 1e-4)),
                         float(d.get("beta_end", 0.5)),
                         str(d.get("kind", "quadratic")))


def _per_sample(values, x_shape):
    """Reshape a (B,) coefficient vector to broadcast over (B, K, L)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 0:
        return v
    return v.reshape(v.shape + (1,) * (len(x_shape) - 1))


def forward_noise(schedule: DiffusionSchedule, x0, t, eps) -> np.ndarray:
    """Noise x0 up to step t: sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise DomainError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    ab = _per_sample(schedule.alpha_bar_at(t), x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def training_step(model, schedule: DiffusionSchedule, x0, observed_mask,
                  cond_mask, rng: np.random.Generator) -> Tensor:
    """One self-supervised denoising loss over a (B, K, L) batch.

    Target entries are observed but hidden from the model
    (observed_mask - cond_mask); the loss is the mean squared noise
    prediction error over exactly those entries. Draw order per call: the
    per-sample steps t (B integers), then the full-shape noise eps. Raises
    DegenerateBatchError when no target entries exist.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 3:
        raise DomainError(f"x0 must be (B, K, L), got {x0.shape}")
    observed = np.asarray(observed_mask, dtype=np.float64)
    cond = np.asarray(cond_mask, dtype=np.float64)
    target = observed * (1.0 - cond)
    n_target = target.sum()
    if n_target == 0:
        raise DegenerateBatchError("batch has no target entries to learn from")

    B = x0.shape[0]
    t = rng.integers(1, schedule.n_steps + 1, size=B)
    eps = rng.standard_normal(x0.shape)

    # where(), not multiply: NaN at missing entries must become 0, not NaN
    x0f = np.where(observed > 0, x0, 0.0)
    x_noisy = forward_noise(schedule, x0f, t, eps)
    dt = default_dtype()
    x_in = ((1.0 - cond) * x_noisy).astype(dt)
    x_cond = (cond * x0f).astype(dt)

    eps_hat = model(Tensor(x_in), Tensor(x_cond), Tensor(cond.astype(dt)), t)
    resid = (eps_hat - Tensor(eps.astype(dt))) * Tensor(target.astype(dt))
    return (resid * resid).sum() / float(n_target)


def sample(model, schedule: DiffusionSchedule, x_obs, cond_mask,
           rng: np.random.Generator, n_samples: int = 1) -> np.ndarray:
    """Draw imputations from the reverse chain; returns (n_samples, B, K, L).

    Each sample runs on its own child generator spawned from rng, so
    sample i is identical no matter how many others are drawn alongside
    it. Within a sample the draws are: the initial noise field, then one
    z per step from T down to 2 (the final step is deterministic).
    Observed entries of the output equal x_obs bit for bit.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    x_obs = np.asarray(x_obs, dtype=np.float64)
    squeeze = x_obs.ndim == 2
    if squeeze:
        x_obs = x_obs[None]
    cond = np.asarray(cond_mask, dtype=np.float64)
    cond = cond[None] if cond.ndim == 2 else cond
    if cond.shape != x_obs.shape:
        raise DomainError(f"cond_mask shape {cond.shape} != x_obs shape {x_obs.shape}")

    free = 1.0 - cond
    dt = default_dtype()
    xo = np.where(cond > 0, x_obs, 0.0)      # NaN-safe zero fill
    x_cond_t = Tensor(xo.astype(dt))
    cond_t = Tensor(cond.astype(dt))
    out = np.empty((n_samples,) + x_obs.shape)
    if not free.any():
        out[:] = x_obs                        # nothing to impute, rng untouched
        return out[:, 0] if squeeze else out

    streams = rng.spawn(n_samples)
    with no_grad():
        for s, stream in enumerate(streams):
            x = free * stream.standard_normal(x_obs.shape)
            for t in range(schedule.n_steps, 0, -1):
                i = t - 1
                eps_hat = model(Tensor((free * x).astype(dt)), x_cond_t,
                                cond_t, t).data.astype(np.float64)
                coef = schedule.beta[i] / np.sqrt(1.0 - schedule.alpha_bar[i])
                x = (x - coef * eps_hat) / np.sqrt(schedule.alpha[i])
                if t > 1:
                    z = stream.standard_normal(x_obs.shape)
                    x = x + np.sqrt(schedule.sigma2(t)) * z
                x = free * x
            out[s] = cond * xo + free * x
    return out[:, 0] if squeeze else out


@dataclass
class ImputationResult:
    samples: np.ndarray     # (n_samples, ..., K, L)
    mean: np.ndarray
    quantiles: np.ndarray   # (19, ..., K, L) at QUANTILE_LEVELS
    levels: np.ndarray

    @property
    def median(self) -> np.ndarray:
        return self.quantiles[9]


def impute(model, schedule: DiffusionSchedule, x_obs, cond_mask,
           rng: np.random.Generator, n_samples: int = 50) -> ImputationResult:
    """Sample the reverse chain and summarize the imputation distribution.

    Quantiles use linear interpolation between order statistics. When the
    window is fully observed the samples are exact copies of x_obs and no
    random draws are consumed.
    """
    samples = sample(model, schedule, x_obs, cond_mask, rng, n_samples)
    return ImputationResult(
        samples=samples,
        mean=samples.mean(axis=0),
        quantiles=np.quantile(samples, QUANTILE_LEVELS, axis=0),
        levels=QUANTILE_LEVELS.copy(),
    )
