"""Benchmark dataset loaders.

Each loader expects a documented on-disk layout under ``root`` and returns a
list of subsets, one per independent series.  Missing files raise DataError
spelling out the expected layout, so a wrong --root fails with instructions
rather than a stack trace.

Expected layouts::

    aiops/              # univariate KPI collection
      train.csv         # columns: timestamp,value,label,kpi_id
      test.csv          # same columns; one subset per kpi_id

    ucr/                # one file per series
      <name>_<train_end>_<ano_start>_<ano_end>.txt
                        # whitespace/line separated values; the last three
                        # underscore fields are 0-based indices: training
                        # prefix length, then the inclusive anomaly span

    swat/  wadi/        # multivariate testbeds
      train.csv         # columns: timestamp,<sensor...>      (all normal)
      test.csv          # columns: timestamp,<sensor...>,label
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .config import SeriesSpec
from .data import DataError, RawSeries

__all__ = ["BenchmarkSubset", "BENCHMARKS", "load_benchmark"]


@dataclass
class BenchmarkSubset:
    """One independent series of a benchmark: train/test streams + geometry."""

    name: str
    train: RawSeries
    test: RawSeries
    spec: SeriesSpec


def _require(root: Path, names: list[str], layout: str) -> None:
    missing = [n for n in names if not (root / n).exists()]
    if missing:
        raise DataError(
            f"missing {missing} under {root}\nexpected layout:\n{layout}"
        )


_AIOPS_LAYOUT = (
    "  <root>/train.csv  columns: timestamp,value,label,kpi_id\n"
    "  <root>/test.csv   columns: timestamp,value,label,kpi_id"
)


def _load_aiops(root: Path) -> list[BenchmarkSubset]:
    _require(root, ["train.csv", "test.csv"], _AIOPS_LAYOUT)
    frames = {}
    for part in ("train", "test"):
        df = pd.read_csv(root / f"{part}.csv")
        needed = {"timestamp", "value", "label", "kpi_id"}
        if not needed.issubset(df.columns):
            raise DataError(
                f"{root / (part + '.csv')}: missing columns "
                f"{sorted(needed - set(df.columns))}\nexpected layout:\n{_AIOPS_LAYOUT}"
            )
        frames[part] = df
    subsets = []
    spec_kw = dict(dim=1, window_length=16, time_step=16)
    train_ids = set(frames["train"]["kpi_id"].unique())
    test_ids = set(frames["test"]["kpi_id"].unique())
    if train_ids != test_ids:
        raise DataError(
            f"kpi_id mismatch between splits: only-train={sorted(train_ids - test_ids)} "
            f"only-test={sorted(test_ids - train_ids)}"
        )
    for kpi in sorted(train_ids, key=str):
        parts = {}
        for part in ("train", "test"):
            sub = frames[part][frames[part]["kpi_id"] == kpi].sort_values("timestamp")
            parts[part] = RawSeries(
                sub["value"].to_numpy(dtype=np.float64),
                sub["label"].to_numpy(dtype=np.int64),
            )
        subsets.append(
            BenchmarkSubset(str(kpi), parts["train"], parts["test"], SeriesSpec(name=str(kpi), **spec_kw))
        )
    return subsets


_UCR_LAYOUT = (
    "  <root>/<name>_<train_end>_<ano_start>_<ano_end>.txt  (one file per series;\n"
    "  whitespace-separated values; indices 0-based, anomaly span inclusive)"
)


def _load_ucr(root: Path) -> list[BenchmarkSubset]:
    files = sorted(root.glob("*.txt"))
    if not files:
        raise DataError(f"no *.txt series under {root}\nexpected layout:\n{_UCR_LAYOUT}")
    subsets = []
    for path in files:
        parts = path.stem.split("_")
        if len(parts) < 4:
            raise DataError(
                f"{path.name}: cannot parse split indices from the name\n"
                f"expected layout:\n{_UCR_LAYOUT}"
            )
        try:
            train_end, ano_start, ano_end = (int(p) for p in parts[-3:])
        except ValueError as exc:
            raise DataError(
                f"{path.name}: trailing name fields must be integers\n"
                f"expected layout:\n{_UCR_LAYOUT}"
            ) from exc
        values = np.loadtxt(path).ravel()
        if not (0 < train_end < len(values)) or not (train_end <= ano_start <= ano_end < len(values)):
            raise DataError(
                f"{path.name}: indices train_end={train_end} anomaly=[{ano_start},{ano_end}] "
                f"inconsistent with length {len(values)}"
            )
        labels = np.zeros(len(values), dtype=np.int64)
        labels[ano_start : ano_end + 1] = 1
        name = "_".join(parts[:-3])
        subsets.append(
            BenchmarkSubset(
                name,
                RawSeries(values[:train_end]),
                RawSeries(values[train_end:], labels[train_end:]),
                SeriesSpec(name=name, dim=1, window_length=64, time_step=16),
            )
        )
    return subsets


def _testbed_layout(which: str) -> str:
    return (
        f"  <root>/train.csv  columns: timestamp,<sensor...>         ({which} train, all normal)\n"
        f"  <root>/test.csv   columns: timestamp,<sensor...>,label"
    )


def _load_testbed(root: Path, which: str) -> list[BenchmarkSubset]:
    layout = _testbed_layout(which)
    _require(root, ["train.csv", "test.csv"], layout)
    train_df = pd.read_csv(root / "train.csv")
    test_df = pd.read_csv(root / "test.csv")
    for df, part in ((train_df, "train"), (test_df, "test")):
        if "timestamp" not in df.columns:
            raise DataError(f"{root / (part + '.csv')}: missing 'timestamp'\nexpected layout:\n{layout}")
    if "label" not in test_df.columns:
        raise DataError(f"{root / 'test.csv'}: missing 'label'\nexpected layout:\n{layout}")
    sensor_cols = [c for c in train_df.columns if c != "timestamp"]
    if "label" in sensor_cols:
        sensor_cols.remove("label")
    test_sensors = [c for c in test_df.columns if c not in ("timestamp", "label")]
    if sensor_cols != test_sensors:
        raise DataError(
            f"sensor columns differ between splits: train={sensor_cols} test={test_sensors}"
        )
    if not sensor_cols:
        raise DataError(f"no sensor columns found under {root}\nexpected layout:\n{layout}")
    train = RawSeries(train_df[sensor_cols].to_numpy(dtype=np.float64))
    test = RawSeries(
        test_df[sensor_cols].to_numpy(dtype=np.float64),
        test_df["label"].to_numpy(dtype=np.int64),
    )
    spec = SeriesSpec(name=which, dim=len(sensor_cols), window_length=32, time_step=16)
    return [BenchmarkSubset(which, train, test, spec)]


BENCHMARKS = {
    "aiops": _load_aiops,
    "ucr": _load_ucr,
    "swat": lambda root: _load_testbed(root, "swat"),
    "wadi": lambda root: _load_testbed(root, "wadi"),
}


def load_benchmark(name: str, root: str | Path) -> list[BenchmarkSubset]:
    """Load a named benchmark from ``root``; see the module doc for layouts."""
    if name not in BENCHMARKS:
        raise DataError(f"unknown benchmark {name!r}; supported: {sorted(BENCHMARKS)}")
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"benchmark root {root} is not a directory")
    return BENCHMARKS[name](root)
