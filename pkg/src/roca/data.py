"""Data pipeline: ingestion, normalization, windowing, augmentation, and
training-set contamination.

Order of operations for a training stream: normalize (statistics fitted on the
training split only) -> window -> inject contamination (window level, with a
ground-truth mask) -> augment.  Augmentation concatenates [originals, jittered,
scaled], so any per-window mask over the pre-augmentation set tiles three times.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import SeriesSpec

__all__ = [
    "DataError",
    "RawSeries",
    "WindowedDataset",
    "AugmentationParams",
    "ContaminationPlan",
    "NormStats",
    "ingest",
    "fit_norm_stats",
    "normalize",
    "make_windows",
    "augment",
    "inject_contamination",
    "split_validation",
    "fingerprint",
    "save_windowed",
    "load_windowed",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for malformed, missing, or inconsistent data."""


@dataclass
class RawSeries:
    """A (T, dim) float series with optional per-point binary labels."""

    values: np.ndarray
    point_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise DataError(f"series values must be (T,) or (T, dim), got shape {self.values.shape}")
        if self.values.shape[0] == 0:
            raise DataError("series is empty")
        if not np.isfinite(self.values).all():
            raise DataError("series contains NaN or infinite values; see ingest(forward_fill=True)")
        if self.point_labels is not None:
            self.point_labels = np.asarray(self.point_labels, dtype=np.int8)
            if self.point_labels.shape != (self.values.shape[0],):
                raise DataError(
                    f"point_labels shape {self.point_labels.shape} does not match "
                    f"series length {self.values.shape[0]}"
                )
            if not np.isin(self.point_labels, (0, 1)).all():
                raise DataError("point_labels must be binary")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def ingest(values: np.ndarray, point_labels=None, *, forward_fill: bool = False) -> RawSeries:
    """Build a RawSeries, optionally forward-filling missing samples.

    With ``forward_fill`` every NaN is replaced by the most recent finite value
    in its dimension (leading NaNs by the first finite value); without it any
    gap is an error.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if forward_fill and not np.isfinite(values).all():
        values = values.copy()
        for d in range(values.shape[1]):
            col = values[:, d]
            bad = ~np.isfinite(col)
            if bad.all():
                raise DataError(f"dimension {d} has no finite values to fill from")
            idx = np.where(bad, 0, np.arange(len(col)))
            np.maximum.accumulate(idx, out=idx)
            col = col[idx]
            first = np.flatnonzero(np.isfinite(col))[0]
            col[:first] = col[first]
            values[:, d] = col
    return RawSeries(values, point_labels)


@dataclass
class WindowedDataset:
    """Stacked sliding windows: (N, L, dim), optional window labels, origins."""

    windows: np.ndarray
    window_labels: np.ndarray | None
    origin_index: np.ndarray

    def __post_init__(self) -> None:
        self.windows = np.asarray(self.windows, dtype=np.float64)
        if self.windows.ndim != 3:
            raise DataError(f"windows must be (N, L, dim), got shape {self.windows.shape}")
        self.origin_index = np.asarray(self.origin_index, dtype=np.int64)
        if self.origin_index.shape != (self.windows.shape[0],):
            raise DataError("origin_index length must match the number of windows")
        if self.window_labels is not None:
            self.window_labels = np.asarray(self.window_labels, dtype=np.int8)
            if self.window_labels.shape != (self.windows.shape[0],):
                raise DataError("window_labels length must match the number of windows")

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def window_length(self) -> int:
        return self.windows.shape[1]

    @property
    def dim(self) -> int:
        return self.windows.shape[2]


@dataclass(frozen=True)
class AugmentationParams:
    """Jitter noise scale and the uniform amplitude-rescale range."""

    jitter_sigma: float = 0.03
    scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise DataError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise DataError(f"need 0 < scale_min <= scale_max, got ({lo}, {hi})")


@dataclass(frozen=True)
class ContaminationPlan:
    """How much of a training set to corrupt, and with which anomaly kinds."""

    pollution_rate: float
    kinds: tuple[str, ...] = ("point_global", "pattern")

    def __post_init__(self) -> None:
        if not (0.0 <= self.pollution_rate < 1.0):
            raise DataError(f"pollution_rate must lie in [0, 1), got {self.pollution_rate}")
        unknown = set(self.kinds) - set(MUTATORS)
        if unknown:
            raise DataError(f"unknown injection kinds {sorted(unknown)}; known: {sorted(MUTATORS)}")
        if not self.kinds:
            raise DataError("at least one injection kind is required")


@dataclass
class NormStats:
    """Per-dimension location/scale fitted on a training split."""

    mean: np.ndarray
    scale: np.ndarray               # std with constant dimensions replaced by 1.0
    constant_dims: np.ndarray       # bool mask of dimensions left unscaled
    warnings: list[str] = field(default_factory=list)


def fit_norm_stats(series: RawSeries) -> NormStats:
    if series.length < 2:
        raise DataError(f"need at least 2 samples to fit normalization, got {series.length}")
    mean = series.values.mean(axis=0)
    std = series.values.std(axis=0)  # population std
    constant = std < 1e-12
    scale = np.where(constant, 1.0, std)
    warnings = []
    if constant.any():
        dims = np.flatnonzero(constant).tolist()
        msg = f"constant dimensions {dims}: centered but left unscaled"
        warnings.append(msg)
        log.warning(msg)
    return NormStats(mean=mean, scale=scale, constant_dims=constant, warnings=warnings)


def normalize(series: RawSeries, stats: NormStats | None = None) -> tuple[RawSeries, NormStats]:
    """Zero-mean/unit-variance per dimension. Fit stats here only on the
    training split; pass them in for validation/test streams."""
    if stats is None:
        stats = fit_norm_stats(series)
    values = (series.values - stats.mean) / stats.scale
    return RawSeries(values, series.point_labels), stats


def make_windows(series: RawSeries, spec: SeriesSpec) -> WindowedDataset:
    """Slice a series into N = floor((T - L) / time_step) + 1 windows.

    A window is labeled anomalous iff any of its points is.
    """
    if series.dim != spec.dim:
        raise DataError(f"series has dim {series.dim} but the spec says {spec.dim}")
    length, step = spec.window_length, spec.time_step
    if series.length < length:
        raise DataError(
            f"series of length {series.length} is shorter than one window ({length})"
        )
    n = (series.length - length) // step + 1
    origins = np.arange(n, dtype=np.int64) * step
    idx = origins[:, None] + np.arange(length)[None, :]
    windows = series.values[idx]  # (N, L, dim)
    labels = None
    if series.point_labels is not None:
        labels = (series.point_labels[idx].max(axis=1) > 0).astype(np.int8)
    return WindowedDataset(windows, labels, origins)


def augment(ds: WindowedDataset, params: AugmentationParams, rng: np.random.Generator) -> WindowedDataset:
    """Triple the set: [originals, jitter-noised copies, amplitude-scaled copies].

    Labels and origins tile with the windows, so index i of the original set
    reappears at i, i+N, i+2N.
    """
    n = len(ds)
    jittered = ds.windows + rng.normal(0.0, params.jitter_sigma, size=ds.windows.shape)
    scales = rng.uniform(params.scale_range[0], params.scale_range[1], size=(n, 1, 1))
    scaled = ds.windows * scales
    windows = np.concatenate([ds.windows, jittered, scaled], axis=0)
    labels = None if ds.window_labels is None else np.tile(ds.window_labels, 3)
    origins = np.tile(ds.origin_index, 3)
    return WindowedDataset(windows, labels, origins)


def _round_half_away(x: float) -> int:
    """round() with halves away from zero (Python's round is banker's)."""
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


# --- window mutators -------------------------------------------------------
# Each takes (window (L, dim), rng, global_std (dim,)) and returns a mutated
# copy.  Multivariate windows are corrupted on one randomly chosen dimension.

def _mutate_point(window: np.ndarray, rng: np.random.Generator, std: np.ndarray) -> np.ndarray:
    out = window.copy()
    t = int(rng.integers(0, window.shape[0]))
    d = int(rng.integers(0, window.shape[1]))
    k = rng.uniform(3.0, 6.0)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    out[t, d] += sign * k * max(std[d], 1e-6)
    return out


def _mutate_point_global(window, rng, global_std):
    return _mutate_point(window, rng, global_std)


def _mutate_point_local(window, rng, global_std):
    local_std = window.std(axis=0)
    return _mutate_point(window, rng, np.maximum(local_std, 1e-6))


def _mutate_pattern(window, rng, global_std):
    """Replace a half-window segment with a phase-rolled, rescaled copy of itself."""
    out = window.copy()
    length = window.shape[0]
    seg_len = max(2, length // 2)
    start = int(rng.integers(0, length - seg_len + 1))
    d = int(rng.integers(0, window.shape[1]))
    seg = out[start : start + seg_len, d]
    shift = max(1, seg_len // 2)
    factor = rng.uniform(1.5, 2.5)
    out[start : start + seg_len, d] = np.roll(seg, shift) * factor
    return out


MUTATORS = {
    "point_global": _mutate_point_global,
    "point_local": _mutate_point_local,
    "pattern": _mutate_pattern,
}


def inject_contamination(
    ds: WindowedDataset, plan: ContaminationPlan, rng: np.random.Generator
) -> tuple[WindowedDataset, np.ndarray]:
    """Corrupt a fraction of the (label-0) windows in place of clean ones.

    The number of windows corrupted is round(pollution_rate × A) where A is the
    count of labeled-anomalous windows when labels carry any, else the total
    window count; rounding is half-away-from-zero.  Returns the new dataset and
    a boolean mask marking exactly the corrupted windows (the ground truth a
    robust trainer is supposed to rediscover).  Corrupted windows get label 1.
    """
    n = len(ds)
    if ds.window_labels is not None and int(ds.window_labels.sum()) > 0:
        base = int(ds.window_labels.sum())
    else:
        base = n
    count = _round_half_away(plan.pollution_rate * base)
    mask = np.zeros(n, dtype=bool)
    if count == 0:
        return (
            WindowedDataset(
                ds.windows.copy(),
                None if ds.window_labels is None else ds.window_labels.copy(),
                ds.origin_index.copy(),
            ),
            mask,
        )

    if ds.window_labels is not None:
        candidates = np.flatnonzero(ds.window_labels == 0)
    else:
        candidates = np.arange(n)
    if count > len(candidates):
        raise DataError(
            f"cannot corrupt {count} windows: only {len(candidates)} clean windows available"
        )
    chosen = rng.choice(candidates, size=count, replace=False)
    chosen.sort()

    global_std = ds.windows.reshape(-1, ds.dim).std(axis=0)
    windows = ds.windows.copy()
    labels = (
        np.zeros(n, dtype=np.int8) if ds.window_labels is None else ds.window_labels.copy()
    )
    for i in chosen:
        kind = plan.kinds[int(rng.integers(0, len(plan.kinds)))]
        windows[i] = MUTATORS[kind](windows[i], rng, global_std)
        labels[i] = 1
        mask[i] = True
    return WindowedDataset(windows, labels, ds.origin_index.copy()), mask


def split_validation(series: RawSeries, fraction: float = 0.1) -> tuple[RawSeries, RawSeries]:
    """Carve the trailing ``fraction`` of a series off as a validation stream."""
    if not (0.0 < fraction < 0.5):
        raise DataError(f"validation fraction must lie in (0, 0.5), got {fraction}")
    cut = int(round(series.length * (1.0 - fraction)))
    if cut < 2 or cut >= series.length:
        raise DataError(f"series too short ({series.length}) to carve a validation split")
    lab = series.point_labels
    return (
        RawSeries(series.values[:cut], None if lab is None else lab[:cut]),
        RawSeries(series.values[cut:], None if lab is None else lab[cut:]),
    )


def fingerprint(ds: WindowedDataset) -> str:
    """sha256 over shapes and contents; identical pipelines yield identical hashes."""
    h = hashlib.sha256()
    h.update(np.asarray(ds.windows.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(ds.windows).tobytes())
    h.update(np.ascontiguousarray(ds.origin_index).tobytes())
    if ds.window_labels is not None:
        h.update(np.ascontiguousarray(ds.window_labels).tobytes())
    return h.hexdigest()


def save_windowed(ds: WindowedDataset, path: str | Path) -> None:
    arrays = {"windows": ds.windows, "origin_index": ds.origin_index}
    if ds.window_labels is not None:
        arrays["window_labels"] = ds.window_labels
    np.savez_compressed(path, **arrays)


def load_windowed(path: str | Path) -> WindowedDataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"windowed dataset not found: {path}")
    with np.load(path) as z:
        return WindowedDataset(
            z["windows"],
            z["window_labels"] if "window_labels" in z.files else None,
            z["origin_index"],
        )
