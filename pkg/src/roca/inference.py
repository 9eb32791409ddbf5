"""Scoring and thresholding.

A trained model scores each window with its invariance value (low = hugs the
training center, high = anomalous).  Raw scores are z-normalized and compared
against a threshold tau on the z scale: a labeled stream gets tau from a grid
search maximizing the chosen metric, an unlabeled stream falls back to
tau = 3.0 (three sigmas).  Window decisions expand to point decisions by
flagging every sample covered by a flagged window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from . import metrics as M
from .data import DataError, WindowedDataset
from .losses import ContractViolation, invariance_term
from .model import RocaNet

__all__ = [
    "ScoreSeries",
    "ThresholdInfo",
    "TAU_GRID",
    "score",
    "zscore",
    "select_threshold",
    "decide",
    "top1_rule",
    "expand_to_points",
    "window_objective",
    "point_objective",
]

log = logging.getLogger(__name__)

# Candidate thresholds on the z scale: -3.00, -2.99, ..., 3.00.
TAU_GRID = np.round(np.linspace(-3.0, 3.0, 601), 2)

DEFAULT_TAU = 3.0

_METRIC_FNS = {
    "pw": M.pw_scores,
    "pa": M.pa_scores,
    "rpa": M.rpa_scores,
}


def metric_fn(name: str):
    """Resolve a scoring-regime name ('pw', 'pa', 'rpa', 'pa%K') to a function."""
    if name in _METRIC_FNS:
        return _METRIC_FNS[name]
    if name.startswith("pa%"):
        k = float(name[3:])
        return lambda t, p: M.pak_scores(t, p, k)
    raise ValueError(f"unknown metric {name!r}; expected pw, pa, rpa, or pa%K")


def score(model: RocaNet, ds: WindowedDataset, batch_size: int = 256) -> np.ndarray:
    """Per-window invariance scores in eval mode; requires a stored center."""
    if not model.has_center:
        raise ContractViolation("model has no stored center; train it (or load a checkpoint) first")
    if len(ds) == 0:
        raise DataError("cannot score an empty dataset")
    model.eval()
    center = model.center
    out_scores = []
    with torch.no_grad():
        x_all = torch.as_tensor(ds.windows, dtype=torch.float32)
        for lo in range(0, len(ds), batch_size):
            out = model(x_all[lo : lo + batch_size])
            out_scores.append(invariance_term(out.q, out.q_prime, center).numpy())
    return np.concatenate(out_scores).astype(np.float64)


@dataclass
class ScoreSeries:
    """Window scores plus the alignment needed to project them onto points."""

    values: np.ndarray
    origin_index: np.ndarray
    window_length: int
    total_length: int

    @classmethod
    def from_windows(cls, values: np.ndarray, ds: WindowedDataset, total_length: int) -> "ScoreSeries":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(ds),):
            raise DataError(
                f"scores shape {values.shape} does not match window count {len(ds)}"
            )
        return cls(values, ds.origin_index.copy(), ds.window_length, total_length)

    def expand(self, window_flags: np.ndarray) -> np.ndarray:
        return expand_to_points(
            window_flags, self.origin_index, self.window_length, self.total_length
        )


def zscore(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Standardize scores (population std). Returns (z, degenerate) — degenerate
    means the scores were constant and z is all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise DataError(f"scores must be a non-empty vector, got shape {raw.shape}")
    std = raw.std()
    if std < 1e-12:
        return np.zeros_like(raw), True
    return (raw - raw.mean()) / std, False


@dataclass
class ThresholdInfo:
    mode: str            # "search" | "default" | "degenerate"
    tau: float
    metric: str
    objective_value: float


def window_objective(metric: str, window_truth: np.ndarray):
    """Objective for tau search scored directly on window labels."""
    fn = metric_fn(metric)
    truth = np.asarray(window_truth)

    def objective(decisions: np.ndarray) -> float:
        return fn(truth, decisions)[2]

    return objective


def point_objective(metric: str, point_truth: np.ndarray, series: ScoreSeries):
    """Objective for tau search scored on points after window expansion."""
    fn = metric_fn(metric)
    truth = np.asarray(point_truth)
    if truth.shape != (series.total_length,):
        raise DataError(
            f"point truth length {truth.shape} does not match series length "
            f"{series.total_length}"
        )

    def objective(decisions: np.ndarray) -> float:
        return fn(truth, series.expand(decisions))[2]

    return objective


def select_threshold(
    raw_scores: np.ndarray,
    labels: np.ndarray | None = None,
    *,
    metric: str = "rpa",
    objective=None,
    default_tau: float = DEFAULT_TAU,
) -> tuple[float, ThresholdInfo]:
    """Pick tau on the z scale.

    With an ``objective`` callable (decisions -> figure of merit) or window
    ``labels`` (scored with ``metric``), sweeps the tau grid and keeps the
    smallest tau attaining the maximum.  Without either, returns
    ``default_tau``.  Constant scores are degenerate: warns and returns
    ``default_tau`` (which flags nothing).  A search whose best objective
    value is 0 (e.g. a label stream with no positives) also keeps
    ``default_tau`` — every candidate is equally worthless, and the smallest
    grid value would flag the whole stream for no gain.
    """
    z, degenerate = zscore(raw_scores)
    if degenerate:
        log.warning("constant scores: thresholding is meaningless, using tau=%.2f", default_tau)
        return default_tau, ThresholdInfo("degenerate", default_tau, metric, 0.0)
    if objective is None:
        if labels is None:
            return default_tau, ThresholdInfo("default", default_tau, metric, 0.0)
        objective = window_objective(metric, labels)

    best_tau, best_val = None, -np.inf
    for tau in TAU_GRID:
        val = objective((z > tau).astype(np.int8))
        if val > best_val:  # strict: ties keep the smallest tau
            best_tau, best_val = float(tau), float(val)
    if best_val <= 0.0:
        return default_tau, ThresholdInfo("default", default_tau, metric, 0.0)
    return best_tau, ThresholdInfo("search", best_tau, metric, best_val)


def decide(raw_scores: np.ndarray, tau: float) -> np.ndarray:
    """Binary window decisions: z(raw_scores) > tau (strict)."""
    z, _ = zscore(raw_scores)
    return (z > tau).astype(np.int8)


def top1_rule(raw_scores: np.ndarray) -> np.ndarray:
    """Flag only the highest-scoring window (ties -> earliest index)."""
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise DataError(f"scores must be a non-empty vector, got shape {raw.shape}")
    flags = np.zeros(raw.size, dtype=np.int8)
    flags[int(np.argmax(raw))] = 1
    return flags


def expand_to_points(
    window_flags: np.ndarray,
    origin_index: np.ndarray,
    window_length: int,
    total_length: int,
) -> np.ndarray:
    """Union of [origin, origin + L) over flagged windows, as a point stream."""
    flags = np.asarray(window_flags)
    origins = np.asarray(origin_index)
    if flags.shape != origins.shape:
        raise DataError(
            f"window flags shape {flags.shape} does not match origins {origins.shape}"
        )
    if total_length < (int(origins.max()) + window_length if origins.size else 0):
        raise DataError(
            f"total_length {total_length} too short for windows ending at "
            f"{int(origins.max()) + window_length}"
        )
    points = np.zeros(total_length, dtype=np.int8)
    for origin in origins[flags.astype(bool)]:
        points[origin : origin + window_length] = 1
    return points
