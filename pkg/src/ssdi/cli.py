"""Operator entry points: synth, train, impute, evaluate.

All four subcommands read one flat ``key = value`` namespace. Values come
from a ``--config`` file (``#`` starts a comment) and from flags named
after the keys with dots and underscores turned into dashes; a flag beats
the file. Unknown keys are rejected. When neither a flag nor the file
sets ``seed``, the ``SSDTS_SEED`` environment variable fills in.

Exit codes: 0 success, 2 bad configuration, 3 shape or schema mismatch
against a checkpoint, 4 degenerate evaluation, 1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blocks import BlockConfig
from .checkpoint import build_denoiser, load_checkpoint, save_checkpoint
from .data import (Dataset, NormalizationStats, SyntheticSpec,
                   denormalize_values, generate_synthetic, load_csv,
                   normalize, save_csv, split_dataset)
from .denoiser import DenoiserConfig
from .diffusion import make_schedule, sample, schedule_from_dict
from .errors import (ConfigError, DegenerateBatchError, DimensionError,
                     DomainError, EvaluationError, SchemaError)
from .masking import MaskSettings, TimeSeries, draw_plan
from .metrics import evaluate_imputation
from .trainer import TrainConfig, train

BAND_LEVELS = (0.025, 0.25, 0.75, 0.975)


# ------------------------------------------------------------ key registry

def _p_int(s: str) -> int:
    return int(s.strip())


def _p_float(s: str) -> float:
    return float(s.strip())


def _p_str(s: str) -> str:
    return s.strip()


def _p_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _p_opt_int(s: str):
    t = s.strip().lower()
    if t in ("", "none"):
        return None
    return int(t)


def _p_int_pair(s: str) -> tuple[int, int]:
    parts = s.split(",")
    if len(parts) != 2:
        raise ValueError("expected two comma-separated integers, e.g. 4,12")
    return int(parts[0]), int(parts[1])


def _p_fractions(s: str) -> tuple[float, float, float]:
    parts = s.split(",")
    if len(parts) != 3:
        raise ValueError("expected three comma-separated fractions, e.g. 0.8,0.1,0.1")
    return float(parts[0]), float(parts[1]), float(parts[2])


def _p_choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        t = s.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {s!r}")
        return t
    return parse


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], object]
    default: object
    help: str


_REGISTRY: dict[str, _Key] = {
    "seed": _Key(_p_int, None, "master seed (falls back to SSDTS_SEED, then 0)"),
    # synth
    "kind": _Key(_p_choice("sinusoid_mixture", "coupled_oscillator"),
                 "sinusoid_mixture", "generator family"),
    "k": _Key(_p_int, 4, "number of channels"),
    "l": _Key(_p_int, 100, "window length"),
    "n_windows": _Key(_p_int, 10, "number of windows"),
    "noise_std": _Key(_p_float, 0.05, "additive noise level"),
    "damping": _Key(_p_float, 0.1, "oscillator damping"),
    "dt": _Key(_p_float, 0.05, "oscillator sampling interval"),
    "substeps": _Key(_p_int, 10, "integrator steps per sample"),
    "out": _Key(_p_str, None, "output CSV path (required)"),
    # data
    "data.path": _Key(_p_str, None, "input CSV path (required)"),
    "data.window_len": _Key(_p_opt_int, None,
                            "rows per window (train: 100; else from checkpoint)"),
    "data.stride": _Key(_p_opt_int, None, "window stride (default: window length)"),
    "data.time_column": _Key(_p_str, "time", "name of the timestamp column"),
    "data.split": _Key(_p_fractions, (0.8, 0.1, 0.1),
                       "train,valid,test fractions"),
    "data.split_seed": _Key(_p_int, 0, "seed for the split permutation"),
    # diffusion schedule
    "diffusion.T": _Key(_p_int, 50, "number of diffusion steps"),
    "diffusion.beta_start": _Key(_p_float, 1e-4, "first noise level"),
    "diffusion.beta_end": _Key(_p_float, 0.5, "last noise level"),
    "diffusion.kind": _Key(_p_choice("linear", "quadratic"), "quadratic",
                           "beta spacing"),
    # masking
    "mask.strategy": _Key(_p_choice("mix", "random", "pattern_mimic",
                                    "block", "forecast"),
                          "mix", "target selection strategy (evaluate: random)"),
    "mask.ratio": _Key(_p_float, 0.5, "target fraction for the random strategy"),
    "mask.block_len": _Key(_p_int_pair, (4, 12), "block length range lo,hi"),
    "mask.n_blocks": _Key(_p_int, 2, "blocks per channel"),
    "mask.horizon": _Key(_p_int, 12, "forecast tail length"),
    "mask.mix_weight": _Key(_p_float, 0.5, "mimicry probability in the mix"),
    # training loop
    "train.iterations": _Key(_p_int, 150_000, "optimizer steps"),
    "train.batch_size": _Key(_p_int, 16, "windows per step"),
    "train.lr": _Key(_p_float, 2e-4, "Adam learning rate"),
    "train.validation_every": _Key(_p_int, 200, "steps between validations"),
    "train.clip_norm": _Key(_p_float, 1.0, "global gradient norm limit"),
    # denoiser
    "denoiser.seq_dim": _Key(_p_int, 128, "latent stream width"),
    "denoiser.residual_channels": _Key(_p_opt_int, None,
                                       "inner block width (default 2x seq_dim)"),
    "denoiser.diffusion_embed_dim": _Key(_p_int, 128, "step embedding width"),
    "denoiser.n_input_smm": _Key(_p_int, 1, "blocks in the noisy-input stack"),
    "denoiser.n_cond_smm": _Key(_p_int, 1, "blocks in the condition stack"),
    "denoiser.n_seq_smm": _Key(_p_int, 1, "blocks per mid/out stage"),
    "denoiser.smm_depth": _Key(_p_int, 1, "stages per stack"),
    # sequence block ablations
    "block.direction": _Key(_p_choice("bidirectional", "forward", "backward"),
                            "bidirectional", "scan direction"),
    "block.temporal_attention": _Key(_p_bool, True, "position-wise gating"),
    "block.attention_scope": _Key(_p_choice("per_branch", "shared"),
                                  "per_branch", "gate sharing across branches"),
    "block.channel_module": _Key(_p_choice("cmb", "none", "channel_attention"),
                                 "cmb", "cross-channel mixer"),
    "block.d_state": _Key(_p_int, 16, "state size per channel"),
    "block.conv_width": _Key(_p_int, 4, "causal conv kernel width"),
    "block.use_skip": _Key(_p_bool, True, "residual connections"),
    # imputation
    "checkpoint": _Key(_p_str, None, "trained checkpoint path (required)"),
    "num_samples": _Key(_p_int, 50, "imputations drawn per window"),
    # artifact paths
    "out.checkpoint": _Key(_p_str, "checkpoint.npz", "checkpoint output path"),
    "out.loss_csv": _Key(_p_str, "loss.csv", "loss curve output path"),
    "out.imputed": _Key(_p_str, "imputed.csv", "filled-in dataset output path"),
    "out.bands": _Key(_p_str, "bands.csv", "quantile band output path"),
    "out.report": _Key(_p_str, "report.json", "metric report output path"),
}

_DATA_KEYS = ["data.path", "data.window_len", "data.stride", "data.time_column"]
_MASK_KEYS = ["mask.strategy", "mask.ratio", "mask.block_len", "mask.n_blocks",
              "mask.horizon", "mask.mix_weight"]
_MODEL_KEYS = ["denoiser.seq_dim", "denoiser.residual_channels",
               "denoiser.diffusion_embed_dim", "denoiser.n_input_smm",
               "denoiser.n_cond_smm", "denoiser.n_seq_smm", "denoiser.smm_depth",
               "block.direction", "block.temporal_attention",
               "block.attention_scope", "block.channel_module",
               "block.d_state", "block.conv_width", "block.use_skip"]

COMMAND_KEYS: dict[str, list[str]] = {
    "synth": ["seed", "kind", "k", "l", "n_windows", "noise_std", "damping",
              "dt", "substeps", "out"],
    "train": ["seed"] + _DATA_KEYS + ["data.split", "data.split_seed",
              "diffusion.T", "diffusion.beta_start", "diffusion.beta_end",
              "diffusion.kind"] + _MASK_KEYS + ["train.iterations",
              "train.batch_size", "train.lr", "train.validation_every",
              "train.clip_norm"] + _MODEL_KEYS + ["out.checkpoint",
              "out.loss_csv"],
    "impute": ["seed", "checkpoint", "num_samples"] + _DATA_KEYS
              + ["out.imputed", "out.bands"],
    "evaluate": ["seed", "checkpoint", "num_samples"] + _DATA_KEYS + _MASK_KEYS
                + ["out.report"],
}

# per-command defaults that differ from the registry's
_DEFAULT_OVERRIDES = {
    ("train", "data.window_len"): 100,
    ("evaluate", "mask.strategy"): "random",
}

_COMMAND_HELP = {
    "synth": "generate a seeded synthetic CSV dataset",
    "train": "fit the denoiser and write a checkpoint plus a loss curve",
    "impute": "fill missing entries and write mean plus quantile bands",
    "evaluate": "hold out observed entries, impute them, report metrics",
}


def flag_name(key: str) -> str:
    return "--" + key.replace(".", "-").replace("_", "-")


def read_config_file(path: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` comments; later keys win."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"config file {path}: {e.strerror or e}") from None
    out: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config file line {i}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(command: str, flag_values: dict, config_path=None) -> dict:
    """Merge defaults, file values, and flag overrides into typed values."""
    keys = COMMAND_KEYS[command]
    raw: dict[str, str] = {}
    if config_path is not None:
        for key, value in read_config_file(config_path).items():
            if key not in _REGISTRY:
                raise ConfigError(f"unknown config key: {key}")
            raw[key] = value
    for key, value in flag_values.items():
        if value is not None:
            raw[key] = value
    cfg: dict = {}
    for key in keys:
        spec = _REGISTRY[key]
        if key in raw:
            try:
                cfg[key] = spec.parse(raw[key])
            except ValueError as e:
                raise ConfigError(f"{key}: {e}") from None
        else:
            cfg[key] = _DEFAULT_OVERRIDES.get((command, key), spec.default)
    if cfg.get("seed") is None:
        env = os.environ.get("SSDTS_SEED")
        if env is None:
            cfg["seed"] = 0
        else:
            try:
                cfg["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"SSDTS_SEED: expected an integer, got {env!r}") \
                    from None
    return cfg


# ------------------------------------------------------------- subcommands

def _require(cfg: dict, key: str):
    if cfg[key] is None:
        raise ConfigError(f"{key} is required")
    return cfg[key]


def cmd_synth(cfg: dict) -> int:
    out = _require(cfg, "out")
    spec = SyntheticSpec(kind=cfg["kind"], n_channels=cfg["k"],
                         window_len=cfg["l"], n_windows=cfg["n_windows"],
                         noise_std=cfg["noise_std"], damping=cfg["damping"],
                         dt=cfg["dt"], substeps=cfg["substeps"],
                         seed=cfg["seed"])
    dataset = generate_synthetic(spec)
    save_csv(out, dataset)
    rows = spec.n_windows * spec.window_len
    print(f"wrote {rows} rows, {spec.n_windows} windows of length "
          f"{spec.window_len}, {spec.n_channels} channels to {out}")
    return 0


def _mask_settings(cfg: dict) -> MaskSettings:
    return MaskSettings(strategy=cfg["mask.strategy"], ratio=cfg["mask.ratio"],
                        block_len=cfg["mask.block_len"],
                        n_blocks=cfg["mask.n_blocks"],
                        horizon=cfg["mask.horizon"],
                        mix_weight=cfg["mask.mix_weight"])


def _denoiser_config(cfg: dict) -> DenoiserConfig:
    block = BlockConfig(direction=cfg["block.direction"],
                        temporal_attention=cfg["block.temporal_attention"],
                        attention_scope=cfg["block.attention_scope"],
                        channel_module=cfg["block.channel_module"],
                        d_state=cfg["block.d_state"],
                        conv_width=cfg["block.conv_width"],
                        use_skip=cfg["block.use_skip"])
    return DenoiserConfig(seq_dim=cfg["denoiser.seq_dim"],
                          residual_channels=cfg["denoiser.residual_channels"],
                          diffusion_embed_dim=cfg["denoiser.diffusion_embed_dim"],
                          n_input_smm=cfg["denoiser.n_input_smm"],
                          n_cond_smm=cfg["denoiser.n_cond_smm"],
                          n_seq_smm=cfg["denoiser.n_seq_smm"],
                          smm_depth=cfg["denoiser.smm_depth"], block=block)


def cmd_train(cfg: dict) -> int:
    path = _require(cfg, "data.path")
    dataset = load_csv(path, cfg["data.window_len"], stride=cfg["data.stride"],
                       time_column=cfg["data.time_column"])
    normed = normalize(dataset)
    train_ds, valid_ds, _ = split_dataset(normed, cfg["data.split"],
                                          cfg["data.split_seed"])
    schedule = make_schedule(cfg["diffusion.T"], cfg["diffusion.beta_start"],
                             cfg["diffusion.beta_end"], cfg["diffusion.kind"])
    train_cfg = TrainConfig(iterations=cfg["train.iterations"],
                            batch_size=cfg["train.batch_size"],
                            lr=cfg["train.lr"],
                            validation_every=cfg["train.validation_every"],
                            seed=cfg["seed"], clip_norm=cfg["train.clip_norm"])
    data_config = {"window_len": cfg["data.window_len"],
                   "stride": cfg["data.stride"],
                   "time_column": cfg["data.time_column"],
                   "split": list(cfg["data.split"]),
                   "split_seed": cfg["data.split_seed"]}
    result = train(train_ds, valid_ds if valid_ds.n_windows else None,
                   _denoiser_config(cfg), schedule, _mask_settings(cfg),
                   train_cfg, data_config=data_config,
                   loss_csv=cfg["out.loss_csv"])
    save_checkpoint(cfg["out.checkpoint"], result.checkpoint)
    best = ("n/a" if result.best_valid_loss is None
            else f"{result.best_valid_loss:.6g}")
    status = "diverged" if result.diverged else "completed"
    print(f"{status} after {len(result.history)} steps on {train_ds.n_windows} "
          f"training windows ({valid_ds.n_windows} validation); "
          f"best step {result.best_step}, validation loss {best}")
    print(f"wrote checkpoint to {cfg['out.checkpoint']}")
    print(f"wrote loss curve to {cfg['out.loss_csv']}")
    return 0


def _load_model_and_data(cfg: dict):
    """Shared impute/evaluate setup; raises DimensionError on mismatches."""
    ck = load_checkpoint(_require(cfg, "checkpoint"))
    path = _require(cfg, "data.path")
    window_len = cfg["data.window_len"]
    if window_len is None:
        window_len = ck.seq_len
    dataset = load_csv(path, window_len, stride=cfg["data.stride"],
                       time_column=cfg["data.time_column"])
    if dataset.n_channels != ck.n_channels:
        raise DimensionError(f"checkpoint expects {ck.n_channels} channels, "
                             f"data has {dataset.n_channels}")
    if window_len != ck.seq_len:
        raise DimensionError(f"checkpoint expects windows of length "
                             f"{ck.seq_len}, got {window_len}")
    stats = None
    if ck.normalization is not None:
        norm = ck.normalization
        names = list(norm.get("channel_names", dataset.channel_names))
        if names != list(dataset.channel_names):
            raise DimensionError(f"channel names disagree with the checkpoint: "
                                 f"{list(dataset.channel_names)} vs {names}")
        std = np.asarray(norm["std"], dtype=np.float64)
        # the constant flag is informational; scaling only needs mean/std
        stats = NormalizationStats(mean=np.asarray(norm["mean"],
                                                   dtype=np.float64),
                                   std=std, constant=std == 1.0)
    model = build_denoiser(ck)
    schedule = schedule_from_dict(ck.schedule)
    normed = normalize(dataset, stats) if stats is not None else dataset
    return ck, model, schedule, dataset, normed, stats


def _write_bands(path, dataset: Dataset, mean, bands, n_samples: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# num_samples={n_samples}\n")
        f.write("window,time,channel,mean,q025,q25,q75,q975\n")
        for i, w in enumerate(dataset.windows):
            for j in range(w.length):
                for c, name in enumerate(dataset.channel_names):
                    f.write(f"{i},{w.timestamps[j]:.17g},{name},"
                            f"{mean[i, c, j]:.17g},"
                            f"{bands[0, i, c, j]:.17g},"
                            f"{bands[1, i, c, j]:.17g},"
                            f"{bands[2, i, c, j]:.17g},"
                            f"{bands[3, i, c, j]:.17g}\n")


def cmd_impute(cfg: dict) -> int:
    _, model, schedule, dataset, normed, stats = _load_model_and_data(cfg)
    n_samples = cfg["num_samples"]
    rng = np.random.default_rng(cfg["seed"])
    x_obs = np.stack([w.values for w in normed.windows])
    cond = np.stack([w.observed for w in normed.windows])
    samples = sample(model, schedule, x_obs, cond, rng, n_samples)
    mean = samples.mean(axis=0)
    bands = np.quantile(samples, BAND_LEVELS, axis=0)
    if stats is not None:
        mean = denormalize_values(mean, stats)
        bands = denormalize_values(bands, stats)
    filled = []
    for i, w in enumerate(dataset.windows):
        # observed cells keep their input values bit for bit
        v = np.where(w.missing > 0, mean[i], w.values)
        filled.append(TimeSeries(v, np.zeros_like(w.missing), w.timestamps))
    save_csv(cfg["out.imputed"],
             Dataset(windows=filled, channel_names=dataset.channel_names))
    _write_bands(cfg["out.bands"], dataset, mean, bands, n_samples)
    n_missing = int(sum(w.missing.sum() for w in dataset.windows))
    print(f"imputed {n_missing} missing entries across {dataset.n_windows} "
          f"windows with {n_samples} samples")
    print(f"wrote filled dataset to {cfg['out.imputed']}")
    print(f"wrote quantile bands to {cfg['out.bands']}")
    return 0


def cmd_evaluate(cfg: dict, imputer=None) -> int:
    """Score imputation on held-out observed entries.

    Draw order: one mask plan per window (window order), then sampling.
    `imputer` is a test hook with sample()'s signature; it sees normalized
    values and must return (n_samples, W, K, L).
    """
    _, model, schedule, dataset, normed, stats = _load_model_and_data(cfg)
    settings = _mask_settings(cfg)
    rng = np.random.default_rng(cfg["seed"])
    plans = [draw_plan(w, settings, rng) for w in normed.windows]
    target = np.stack([p.target_mask for p in plans])
    if target.sum() == 0:
        raise EvaluationError("evaluation mask selects no entries")
    cond = np.stack([p.cond_mask for p in plans])
    x_obs = np.stack([w.values for w in normed.windows])
    impute_fn = sample if imputer is None else imputer
    samples = impute_fn(model, schedule, x_obs, cond, rng, cfg["num_samples"])
    if stats is not None:
        samples = denormalize_values(samples, stats)
    y = np.stack([w.values for w in dataset.windows])
    report = evaluate_imputation(samples, y, target)
    text = report.to_json()
    with open(cfg["out.report"], "w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")
    print(text)
    return 0


# ------------------------------------------------------------------ driver

_COMMANDS = {"synth": cmd_synth, "train": cmd_train, "impute": cmd_impute,
             "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssdi", description="probabilistic time-series imputation")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{synth,train,impute,evaluate}")
    for command, keys in COMMAND_KEYS.items():
        p = sub.add_parser(command, help=_COMMAND_HELP[command])
        p.add_argument("--config", metavar="FILE", default=None,
                       help="flat 'key = value' file; flags override it")
        for key in keys:
            p.add_argument(flag_name(key), dest=key, metavar="V", default=None,
                           help=_REGISTRY[key].help)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:           # argparse printed its own message
        return e.code if isinstance(e.code, int) else 1
    values = vars(args)
    command = values.pop("command")
    config_path = values.pop("config", None)
    try:
        cfg = resolve_config(command, values, config_path)
        return _COMMANDS[command](cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DimensionError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (DegenerateBatchError, EvaluationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:            # I/O, parse, divergence
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
