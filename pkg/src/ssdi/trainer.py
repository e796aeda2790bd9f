"""Optimization loop: batches, masks, denoising loss, Adam, checkpoints.

One generator seeds everything (init, batch order, masks, noise), so a
fixed seed reproduces the loss curve exactly. Validation re-uses one
frozen draw set per run, making scores comparable across steps; the
returned checkpoint is the best validation snapshot (final weights when
no validation split exists).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .data import Dataset
from .denoiser import Denoiser, DenoiserConfig
from .diffusion import DiffusionSchedule, training_step
from .errors import DegenerateBatchError, DomainError, TrainingDiverged
from .masking import MaskSettings, draw_plan
from .numerics import no_grad


@dataclass
class TrainConfig:
    iterations: int = 150_000
    batch_size: int = 16
    lr: float = 2e-4
    validation_every: int = 200
    seed: int = 0
    clip_norm: float = 1.0
    redraw_limit: int = 20      # attempts to find a plan with targets

    def __post_init__(self):
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")
        for name in ("batch_size", "validation_every", "redraw_limit"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise DomainError("lr and clip_norm must be > 0")


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"step": self.step, "lr": self.lr, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps,
                "m": {k: a.copy() for k, a in self.m.items()},
                "v": {k: a.copy() for k, a in self.v.items()}}


def adam_step(params, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place.

    params is a list of (name, Tensor); grads is a matching list of
    arrays. Non-finite gradients abort with the offending name.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for (name, p), g in zip(params, grads):
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise DomainError(f"{name}: gradient shape {g.shape} != {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_gradients(grads, max_norm: float):
    """Scale the whole gradient list so its global L2 norm is <= max_norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list                # rows (step, train_loss, valid_loss | None)
    best_step: int
    best_valid_loss: float | None
    diverged: bool = False


def _assemble_batch(windows, dataset, settings, rng, cfg, fallback_ratio):
    """Stack one batch; per window the draws are donor index, then the plan
    (redrawn until it has targets, up to redraw_limit attempts)."""
    x0, observed, cond = [], [], []
    n = len(dataset.windows)
    for w in windows:
        series = dataset.windows[w]
        plan = None
        for _ in range(cfg.redraw_limit):
            donor = dataset.windows[int(rng.integers(n))].missing
            plan = draw_plan(series, settings, rng, donor_missing=donor,
                             fallback_ratio=fallback_ratio)
            if plan.n_targets > 0:
                break
        if plan is None or plan.n_targets == 0:
            continue
        x0.append(series.values)
        observed.append(series.observed)
        cond.append(plan.cond_mask)
    if not x0:
        raise DegenerateBatchError("no window produced a usable mask plan")
    return np.stack(x0), np.stack(observed), np.stack(cond)


def _empirical_missing_ratio(dataset) -> float:
    m = dataset.stacked_missing()
    return float(m.mean()) if m.size else 0.0


def validation_loss(model, schedule, valid_ds, settings, seed, cfg) -> float:
    """Denoising loss over the validation windows with frozen draws."""
    rng = np.random.default_rng(seed)
    windows = np.arange(valid_ds.n_windows)
    ratio = _empirical_missing_ratio(valid_ds) or 0.5
    x0, observed, cond = _assemble_batch(windows, valid_ds, settings, rng,
                                         cfg, ratio)
    with no_grad():
        loss = training_step(model, schedule, x0, observed, cond, rng)
    return float(loss.data)


def train(train_ds: Dataset, valid_ds: Dataset | None,
          denoiser_config: DenoiserConfig, schedule: DiffusionSchedule,
          mask_settings: MaskSettings, config: TrainConfig,
          data_config: dict | None = None, loss_csv=None) -> TrainResult:
    if train_ds.n_windows == 0:
        raise DomainError("training dataset is empty")
    L = train_ds.windows[0].length
    K = train_ds.n_channels
    rng = np.random.default_rng(config.seed)
    model = Denoiser(denoiser_config, K, L, max_t=schedule.n_steps, rng=rng)
    params = list(model.named_parameters())
    state = AdamState(lr=config.lr)
    fallback_ratio = _empirical_missing_ratio(train_ds) or 0.5
    has_valid = valid_ds is not None and valid_ds.n_windows > 0
    valid_seed = config.seed + 1

    def snapshot():
        norm = None
        if train_ds.stats is not None:
            norm = {"mean": train_ds.stats.mean, "std": train_ds.stats.std,
                    "channel_names": train_ds.channel_names}
        return Checkpoint(denoiser_config=denoiser_config, n_channels=K,
                          seq_len=L, schedule=schedule.to_dict(),
                          params=model.state_dict(), optimizer=state.to_dict(),
                          normalization=norm, data_config=data_config,
                          seed=config.seed)

    best = snapshot()
    best_step = 0
    best_valid = (validation_loss(model, schedule, valid_ds, mask_settings,
                                  valid_seed, config) if has_valid else None)
    history = []
    diverged = False

    for step in range(1, config.iterations + 1):
        windows = rng.integers(0, train_ds.n_windows, size=config.batch_size)
        x0, observed, cond = _assemble_batch(windows, train_ds, mask_settings,
                                             rng, config, fallback_ratio)
        model.zero_grad()
        loss = training_step(model, schedule, x0, observed, cond, rng)
        train_loss = float(loss.data)
        if not np.isfinite(train_loss):
            diverged = True
            break
        loss.backward()
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for _, p in params]
        grads, _ = clip_gradients(grads, config.clip_norm)
        try:
            adam_step(params, grads, state)
        except TrainingDiverged:
            diverged = True
            break

        valid = None
        if has_valid and (step % config.validation_every == 0
                          or step == config.iterations):
            valid = validation_loss(model, schedule, valid_ds, mask_settings,
                                    valid_seed, config)
            if best_valid is None or valid < best_valid:
                best_valid = valid
                best = snapshot()
                best_step = step
        history.append((step, train_loss, valid))

    if diverged:
        # the pre-update parameters are still finite; keep them unless the
        # run already walked into non-finite territory earlier
        finite = all(np.all(np.isfinite(p.data)) for _, p in params)
        if not has_valid and finite:
            best = snapshot()
    elif not has_valid:
        best = snapshot()
        best_step = config.iterations

    if loss_csv is not None:
        write_loss_csv(loss_csv, history)
    return TrainResult(checkpoint=best, history=history, best_step=best_step,
                       best_valid_loss=best_valid, diverged=diverged)


def write_loss_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("step,train_loss,valid_loss\n")
        for step, train_loss, valid in history:
            v = "" if valid is None else f"{valid:.17g}"
            f.write(f"{step},{train_loss:.17g},{v}\n")
