"""Dataset ingestion, normalization, windowing, and synthetic generators.

The on-disk format is a plain CSV: header `time,<ch1>,...,<chK>`, UTF-8,
LF line endings, one row per timestep, empty field = missing. Values are
written with 17 significant digits so a save/load round trip is lossless
for float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, ParseError, SchemaError
from .masking import TimeSeries


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray        # (K,)
    std: np.ndarray         # (K,), constant channels hold 1.0
    constant: np.ndarray    # (K,) bool


@dataclass(frozen=True, eq=False)
class Dataset:
    windows: list
    channel_names: list
    stats: NormalizationStats | None = None

    def __post_init__(self):
        K = len(self.channel_names)
        for w in self.windows:
            if w.n_channels != K:
                raise DimensionError(
                    f"window has {w.n_channels} channels, expected {K}")

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def stacked_values(self) -> np.ndarray:
        return np.stack([w.values for w in self.windows])

    def stacked_missing(self) -> np.ndarray:
        return np.stack([w.missing for w in self.windows])


# ------------------------------------------------------------------- CSV

def _parse_cell(cell: str, line_no: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"bad value {cell!r} in column {column!r}", line_no) from None


def load_csv(path, window_len: int, stride: int | None = None,
             time_column: str = "time",
             channels: list[str] | None = None) -> Dataset:
    """Read a value table and cut it into fixed-length windows.

    Windows start every `stride` rows (default: window_len, i.e. no
    overlap); trailing rows that do not fill a window are dropped. Empty
    cells become missing entries.
    """
    if window_len < 1:
        raise DomainError("window_len must be >= 1")
    stride = window_len if stride is None else stride
    if stride < 1:
        raise DomainError("stride must be >= 1")

    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    header = [h.strip() for h in lines[0].split(",")]
    if time_column not in header:
        raise SchemaError(f"missing column {time_column!r} in header {header}")
    if channels is None:
        channels = [h for h in header if h != time_column]
    missing_cols = [c for c in channels if c not in header]
    if missing_cols:
        raise SchemaError(f"missing columns {missing_cols} in header {header}")
    if not channels:
        raise SchemaError("no value columns")
    col_of = {name: header.index(name) for name in header}

    times = []
    rows = []
    flags = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(cells)}", line_no)
        t_cell = cells[col_of[time_column]].strip()
        if not t_cell:
            raise ParseError("empty timestamp", line_no)
        times.append(_parse_cell(t_cell, line_no, time_column))
        row = []
        flag = []
        for name in channels:
            cell = cells[col_of[name]].strip()
            if cell == "":
                row.append(0.0)
                flag.append(1.0)
            else:
                row.append(_parse_cell(cell, line_no, name))
                flag.append(0.0)
        rows.append(row)
        flags.append(flag)

    values = np.asarray(rows, dtype=np.float64).T        # (K, n_rows)
    missing = np.asarray(flags, dtype=np.float64).T
    t = np.asarray(times, dtype=np.float64)
    if values.size == 0:
        values = np.zeros((len(channels), 0))
        missing = np.zeros((len(channels), 0))

    windows = []
    n_rows = values.shape[1]
    for start in range(0, n_rows - window_len + 1, stride):
        sl = slice(start, start + window_len)
        windows.append(TimeSeries(values[:, sl], missing[:, sl], t[sl]))
    return Dataset(windows=windows, channel_names=list(channels))


def save_csv(path, dataset: Dataset, time_column: str = "time") -> None:
    """Write windows back out, one row per timestep, in window order.

    Missing entries become empty cells. Assumes non-overlapping windows;
    overlapping rows would be duplicated.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join([time_column] + list(dataset.channel_names)) + "\n")
        for w in dataset.windows:
            for j in range(w.length):
                cells = [f"{w.timestamps[j]:.17g}"]
                for c in range(w.n_channels):
                    cells.append("" if w.missing[c, j] > 0
                                 else f"{w.values[c, j]:.17g}")
                f.write(",".join(cells) + "\n")


# ---------------------------------------------------------- normalization

def compute_stats(dataset: Dataset) -> NormalizationStats:
    """Per-channel mean/std over observed entries only.

    Channels with fewer than 2 observed entries or zero variance are
    flagged constant and get std 1 so scaling is a no-op there.
    """
    if dataset.n_windows == 0:
        raise DomainError("empty dataset")
    values = dataset.stacked_values()          # (W, K, L)
    observed = 1.0 - dataset.stacked_missing()
    K = dataset.n_channels
    mean = np.zeros(K)
    std = np.ones(K)
    constant = np.zeros(K, dtype=bool)
    for c in range(K):
        v = values[:, c][observed[:, c] > 0]
        if v.size < 2:
            constant[c] = True
            mean[c] = v[0] if v.size else 0.0
            continue
        mean[c] = v.mean()
        s = v.std()
        if s == 0.0:
            constant[c] = True
        else:
            std[c] = s
    return NormalizationStats(mean=mean, std=std, constant=constant)


def normalize(dataset: Dataset,
              stats: NormalizationStats | None = None) -> Dataset:
    """Z-score observed entries per channel; missing entries stay 0."""
    stats = compute_stats(dataset) if stats is None else stats
    windows = []
    for w in dataset.windows:
        v = (w.values - stats.mean[:, None]) / stats.std[:, None]
        v = np.where(w.missing > 0, 0.0, v)
        windows.append(TimeSeries(v, w.missing, w.timestamps))
    return Dataset(windows=windows, channel_names=dataset.channel_names,
                   stats=stats)


def denormalize_values(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Invert the z-scoring on a (..., K, L) array."""
    return values * stats.std[:, None] + stats.mean[:, None]


def denormalize(dataset: Dataset) -> Dataset:
    if dataset.stats is None:
        raise DomainError("dataset carries no normalization stats")
    windows = []
    for w in dataset.windows:
        v = denormalize_values(w.values, dataset.stats)
        v = np.where(w.missing > 0, 0.0, v)
        windows.append(TimeSeries(v, w.missing, w.timestamps))
    return Dataset(windows=windows, channel_names=dataset.channel_names)


# -------------------------------------------------------------- synthetic

_KINDS = ("sinusoid_mixture", "coupled_oscillator")


@dataclass
class SyntheticSpec:
    kind: str = "sinusoid_mixture"
    n_channels: int = 4
    window_len: int = 100
    n_windows: int = 10
    coupling: np.ndarray | None = None    # (K, K), oscillator only
    noise_std: float = 0.05
    damping: float = 0.1                  # oscillator only
    dt: float = 0.05                      # oscillator sampling interval
    substeps: int = 10                    # integrator steps per sample
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"kind must be one of {_KINDS}")
        if self.n_channels < 1 or self.window_len < 1 or self.n_windows < 1:
            raise DomainError("n_channels, window_len, n_windows must be >= 1")
        if self.noise_std < 0 or self.damping < 0:
            raise DomainError("noise_std and damping must be >= 0")
        if self.dt <= 0 or self.substeps < 1:
            raise DomainError("dt must be > 0 and substeps >= 1")
        if self.coupling is not None:
            self.coupling = np.asarray(self.coupling, dtype=np.float64)
            if self.coupling.shape != (self.n_channels, self.n_channels):
                raise DimensionError("coupling must be (K, K)")


def _sinusoid_mixture(spec: SyntheticSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sum of 3 sinusoids per channel on integer timestamps.

    Draw order: amplitudes (K, 3), frequencies (K, 3), phases (K, 3),
    then the noise field.
    """
    K = spec.n_channels
    total = spec.n_windows * spec.window_len
    amps = rng.uniform(0.5, 2.0, (K, 3))
    freqs = rng.uniform(0.01, 0.2, (K, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, (K, 3))
    t = np.arange(total, dtype=np.float64)
    x = np.einsum("km,kmt->kt", amps,
                  np.sin(2.0 * np.pi * freqs[:, :, None] * t + phases[:, :, None]))
    x += spec.noise_std * rng.standard_normal((K, total))
    return x, t


def _oscillator_rhs(state, omega2, damping, coupling, row_sum):
    x, v = state
    acc = -omega2 * x - damping * v
    if coupling is not None:
        acc = acc + coupling @ x - row_sum * x
    return np.stack([v, acc])


def _coupled_oscillator(spec: SyntheticSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Linearly coupled damped oscillators, classic 4th-order integration.

    Draw order: angular frequencies omega ~ U[1, 3] (K,), initial
    positions (K,), initial velocities (K,), then the noise field.
    Acceleration of channel c is
    -omega_c^2 x_c - damping * v_c + sum_j coupling[c, j] (x_j - x_c).
    """
    K = spec.n_channels
    total = spec.n_windows * spec.window_len
    omega = rng.uniform(1.0, 3.0, K)
    x0 = rng.standard_normal(K)
    v0 = rng.standard_normal(K)
    omega2 = omega * omega
    coupling = spec.coupling
    row_sum = coupling.sum(axis=1) if coupling is not None else None

    h = spec.dt / spec.substeps
    state = np.stack([x0, v0])
    xs = np.empty((K, total))
    xs[:, 0] = state[0]
    for i in range(1, total):
        for _ in range(spec.substeps):
            k1 = _oscillator_rhs(state, omega2, spec.damping, coupling, row_sum)
            k2 = _oscillator_rhs(state + 0.5 * h * k1, omega2, spec.damping,
                                 coupling, row_sum)
            k3 = _oscillator_rhs(state + 0.5 * h * k2, omega2, spec.damping,
                                 coupling, row_sum)
            k4 = _oscillator_rhs(state + h * k3, omega2, spec.damping,
                                 coupling, row_sum)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[:, i] = state[0]
    xs = xs + spec.noise_std * rng.standard_normal((K, total))
    t = np.arange(total, dtype=np.float64) * spec.dt
    return xs, t


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Seeded, fully observed windows from one long trajectory."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sinusoid_mixture":
        x, t = _sinusoid_mixture(spec, rng)
    else:
        x, t = _coupled_oscillator(spec, rng)
    L = spec.window_len
    windows = [TimeSeries(x[:, i * L:(i + 1) * L],
                          np.zeros((spec.n_channels, L)),
                          t[i * L:(i + 1) * L])
               for i in range(spec.n_windows)]
    names = [f"ch{c}" for c in range(spec.n_channels)]
    return Dataset(windows=windows, channel_names=names)


# ----------------------------------------------------------------- splits

def split_dataset(dataset: Dataset, fractions=(0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle windows with the seed, then cut train/valid/test slices.

    Fractions must sum to 1. Train always gets at least one window; valid
    and test may be empty for tiny datasets.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DomainError("need three fractions summing to 1")
    if dataset.n_windows == 0:
        raise DomainError("empty dataset")
    order = np.random.default_rng(seed).permutation(dataset.n_windows)
    n = dataset.n_windows
    n_train = max(1, int(round(fractions[0] * n)))
    n_valid = int(round(fractions[1] * n))
    n_valid = min(n_valid, n - n_train)
    take = lambda idx: Dataset(windows=[dataset.windows[i] for i in idx],
                               channel_names=dataset.channel_names,
                               stats=dataset.stats)
    return (take(order[:n_train]),
            take(order[n_train:n_train + n_valid]),
            take(order[n_train + n_valid:]))
