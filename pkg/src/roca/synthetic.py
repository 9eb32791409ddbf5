"""Seeded synthetic series: sinusoid mixtures plus injected anomaly events.

Used by the benchmark harness (`prepare` without a named benchmark) and by the
test suite's desk-scale experiments.  Series serialize to columnar text with a
one-line header so artifacts stay diffable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, RawSeries

__all__ = [
    "SyntheticSpec",
    "generate_clean",
    "inject_series_anomalies",
    "save_series_text",
    "load_series_text",
    "save_mask",
    "load_mask",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a clean series: a sum of sinusoids with per-dim random phases."""

    length: int
    dim: int = 1
    periods: tuple[float, ...] = (24.0, 57.0)
    amplitudes: tuple[float, ...] = (1.0, 0.6)
    noise_sigma: float = 0.05

    def __post_init__(self) -> None:
        if self.length < 2:
            raise DataError(f"length must be >= 2, got {self.length}")
        if self.dim < 1:
            raise DataError(f"dim must be >= 1, got {self.dim}")
        if len(self.periods) != len(self.amplitudes):
            raise DataError("periods and amplitudes must have equal length")
        if any(p <= 0 for p in self.periods):
            raise DataError("periods must be positive")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")


def generate_clean(spec: SyntheticSpec, rng: np.random.Generator) -> RawSeries:
    t = np.arange(spec.length, dtype=np.float64)
    values = np.zeros((spec.length, spec.dim))
    for d in range(spec.dim):
        for period, amp in zip(spec.periods, spec.amplitudes):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            values[:, d] += amp * np.sin(2.0 * np.pi * t / period + phase)
    if spec.noise_sigma > 0:
        values += rng.normal(0.0, spec.noise_sigma, size=values.shape)
    return RawSeries(values, np.zeros(spec.length, dtype=np.int8))


def _place_events(
    rng: np.random.Generator, length: int, n_events: int, span_hi: int, min_gap: int
) -> list[int]:
    """Random event starts separated by at least min_gap; raises if it can't fit."""
    starts: list[int] = []
    limit = length - span_hi - 1
    if limit <= 1:
        raise DataError("series too short for the requested events")
    for _ in range(200 * n_events):
        cand = int(rng.integers(1, limit))
        if all(abs(cand - s) >= min_gap for s in starts):
            starts.append(cand)
            if len(starts) == n_events:
                return sorted(starts)
    raise DataError(
        f"could not place {n_events} events of span {span_hi} with gap {min_gap} "
        f"in a series of length {length}"
    )


def inject_series_anomalies(
    series: RawSeries,
    n_events: int,
    kinds: tuple[str, ...],
    rng: np.random.Generator,
    *,
    span_range: tuple[int, int] = (8, 24),
    min_gap: int | None = None,
) -> tuple[RawSeries, list[tuple[int, int, str]]]:
    """Corrupt a clean series with labeled point/pattern events.

    point events displace one sample by k·std (k ~ U[3,6], random sign);
    pattern events replace a span (length ~ U[span_range]) with a phase-rolled,
    rescaled copy of itself.  Labels mark exactly the mutated samples.  Returns
    the labeled series and the (start, end_inclusive, kind) event list.
    """
    if n_events <= 0:
        return RawSeries(series.values.copy(), np.zeros(series.length, dtype=np.int8)), []
    known = {"point_global", "point_local", "pattern"}
    unknown = set(kinds) - known
    if unknown:
        raise DataError(f"unknown event kinds {sorted(unknown)}; known: {sorted(known)}")
    lo, hi = span_range
    if not (1 <= lo <= hi):
        raise DataError(f"bad span_range {span_range}")
    if min_gap is None:
        min_gap = 3 * hi

    values = series.values.copy()
    labels = np.zeros(series.length, dtype=np.int8)
    std = values.std(axis=0)
    starts = _place_events(rng, series.length, n_events, hi, min_gap)
    events: list[tuple[int, int, str]] = []
    for start in starts:
        kind = kinds[int(rng.integers(0, len(kinds)))]
        d = int(rng.integers(0, series.dim))
        if kind.startswith("point"):
            if kind == "point_local":
                ctx = values[max(0, start - 50) : start + 50, d]
                scale = max(float(ctx.std()), 1e-6)
            else:
                scale = max(float(std[d]), 1e-6)
            k = rng.uniform(3.0, 6.0)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            values[start, d] += sign * k * scale
            end = start
        else:
            span = int(rng.integers(lo, hi + 1))
            end = start + span - 1
            seg = values[start : end + 1, d]
            factor = rng.uniform(1.5, 2.5)
            values[start : end + 1, d] = np.roll(seg, max(1, span // 2)) * factor
        labels[start : end + 1] = 1
        events.append((start, end, kind))
    return RawSeries(values, labels), events


# ---------------------------------------------------------------------------
# Columnar text serialization
# ---------------------------------------------------------------------------

def save_series_text(series: RawSeries, path: str | Path) -> None:
    """Tab-separated columns with a one-line header: timestamp, value(s)[, label]."""
    path = Path(path)
    cols = ["timestamp"] + [f"value_{d}" for d in range(series.dim)]
    if series.point_labels is not None:
        cols.append("label")
    with path.open("w") as fh:
        fh.write("\t".join(cols) + "\n")
        for t in range(series.length):
            row = [str(t)] + [f"{v:.10g}" for v in series.values[t]]
            if series.point_labels is not None:
                row.append(str(int(series.point_labels[t])))
            fh.write("\t".join(row) + "\n")


def load_series_text(path: str | Path) -> RawSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split("\t")
        if not header or header[0] != "timestamp":
            raise DataError(f"{path}: expected a header starting with 'timestamp'")
        has_label = header[-1] == "label"
        value_cols = len(header) - 1 - (1 if has_label else 0)
        if value_cols < 1:
            raise DataError(f"{path}: no value columns in header {header}")
        data = np.loadtxt(fh, delimiter="\t", ndmin=2)
    if data.shape[1] != len(header):
        raise DataError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    values = data[:, 1 : 1 + value_cols]
    labels = data[:, -1].astype(np.int8) if has_label else None
    return RawSeries(values, labels)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Persist a boolean window mask as one index per line (header = set size)."""
    mask = np.asarray(mask, dtype=bool)
    lines = [f"# windows={mask.size}"] + [str(i) for i in np.flatnonzero(mask)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mask(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"mask file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# windows="):
        raise DataError(f"{path}: expected a '# windows=N' header")
    size = int(lines[0].split("=", 1)[1])
    mask = np.zeros(size, dtype=bool)
    for line in lines[1:]:
        line = line.strip()
        if line:
            mask[int(line)] = True
    return mask
