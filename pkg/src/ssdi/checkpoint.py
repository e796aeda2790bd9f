"""Self-describing checkpoint files.

Everything needed to rebuild the model and resume or impute lives in one
.npz: a JSON metadata entry (configs, data shape, schedule, channel
names) plus raw float arrays for parameters, optimizer moments, and
normalization statistics. Arrays round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .blocks import BlockConfig
from .denoiser import Denoiser, DenoiserConfig
from .errors import SchemaError

_FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    denoiser_config: DenoiserConfig
    n_channels: int
    seq_len: int
    schedule: dict
    params: dict[str, np.ndarray]
    optimizer: dict | None = None       # {"step", "lr", "beta1", "beta2", "eps", "m", "v"}
    normalization: dict | None = None   # {"mean", "std", "channel_names"}
    data_config: dict | None = None
    seed: int | None = None


def save_checkpoint(path, ck: Checkpoint) -> None:
    meta = {
        "version": _FORMAT_VERSION,
        "denoiser_config": asdict(ck.denoiser_config),
        "n_channels": int(ck.n_channels),
        "seq_len": int(ck.seq_len),
        "schedule": ck.schedule,
        "data_config": ck.data_config,
        "seed": ck.seed,
        "has_optimizer": ck.optimizer is not None,
        "has_normalization": ck.normalization is not None,
    }
    arrays: dict[str, np.ndarray] = {}
    for name, arr in ck.params.items():
        arrays[f"param/{name}"] = arr
    if ck.optimizer is not None:
        meta["optimizer"] = {k: ck.optimizer[k] for k in ("step", "lr", "beta1", "beta2", "eps")}
        for name, arr in ck.optimizer["m"].items():
            arrays[f"m/{name}"] = arr
        for name, arr in ck.optimizer["v"].items():
            arrays[f"v/{name}"] = arr
    if ck.normalization is not None:
        meta["channel_names"] = list(ck.normalization["channel_names"])
        arrays["norm/mean"] = np.asarray(ck.normalization["mean"])
        arrays["norm/std"] = np.asarray(ck.normalization["std"])
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise SchemaError(f"{path} is not a checkpoint (no metadata entry)") from None
        if meta.get("version") != _FORMAT_VERSION:
            raise SchemaError(f"unsupported checkpoint version {meta.get('version')}")
        params = {}
        m = {}
        v = {}
        for key in z.files:
            if key.startswith("param/"):
                params[key[6:]] = z[key]
            elif key.startswith("m/"):
                m[key[2:]] = z[key]
            elif key.startswith("v/"):
                v[key[2:]] = z[key]
        cfg_dict = dict(meta["denoiser_config"])
        blk = BlockConfig(**cfg_dict.pop("block"))
        cfg = DenoiserConfig(block=blk, **cfg_dict)
        optimizer = None
        if meta.get("has_optimizer"):
            optimizer = dict(meta["optimizer"])
            optimizer["m"] = m
            optimizer["v"] = v
        normalization = None
        if meta.get("has_normalization"):
            normalization = {
                "mean": z["norm/mean"],
                "std": z["norm/std"],
                "channel_names": meta["channel_names"],
            }
        return Checkpoint(
            denoiser_config=cfg,
            n_channels=meta["n_channels"],
            seq_len=meta["seq_len"],
            schedule=meta["schedule"],
            params=params,
            optimizer=optimizer,
            normalization=normalization,
            data_config=meta.get("data_config"),
            seed=meta.get("seed"),
        )


def build_denoiser(ck: Checkpoint) -> Denoiser:
    """Reconstruct the network and load its weights at their stored dtype."""
    model = Denoiser(ck.denoiser_config, ck.n_channels, ck.seq_len,
                     max_t=int(ck.schedule["T"]), rng=np.random.default_rng(0))
    model.load_state_dict(ck.params)
    return model
