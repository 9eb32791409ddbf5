"""Point- and segment-level detection metrics over binary label streams.

All functions take equal-length binary vectors (truth, predicted) and return
(precision, recall, f1) unless stated otherwise.  Empty denominators follow
the usual convention: precision/recall/F1 are 0 when undefined.

Four scoring regimes:

* ``pw``   — raw point-wise confusion.
* ``pa``   — point-adjust: a truth segment with at least one predicted point
  is credited entirely (every point of the segment counts as detected).
* ``pa%k`` — point-adjust only for segments whose detected fraction exceeds
  K percent *strictly*; K=0 reduces to ``pa``, K=100 to ``pw``.
* ``rpa``  — segment-level: each truth segment collapses to a single unit of
  recall, and each predicted segment that overlaps no truth segment costs one
  unit of false-alarm precision.  Long segments stop dominating, and stray
  alarms are no longer nearly free — random scores look much worse here than
  under ``pa``, which is the point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LabelStream",
    "SegmentSet",
    "EvalOutcome",
    "segments",
    "pw_scores",
    "pa_adjust",
    "pa_scores",
    "pak_adjust",
    "pak_scores",
    "rpa_scores",
    "prf",
    "aggregate",
    "aggregate_outcomes",
    "ras_baseline",
]


def _as_binary(name: str, x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    return arr.astype(bool)


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    t = _as_binary("truth", truth)
    p = _as_binary("pred", pred)
    if t.shape != p.shape:
        raise ValueError(f"truth and pred lengths differ: {t.shape[0]} vs {p.shape[0]}")
    return t, p


# LabelStream / SegmentSet are thin aliases used in signatures for clarity.
LabelStream = np.ndarray


@dataclass(frozen=True)
class SegmentSet:
    """Maximal runs of 1s in a label stream, as inclusive (start, end) pairs."""

    spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.spans)


def segments(stream) -> list[tuple[int, int]]:
    """Inclusive (start, end) of every maximal run of 1s, in order."""
    s = _as_binary("stream", stream).astype(np.int8)
    diff = np.diff(np.concatenate([[0], s, [0]]))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def pw_scores(truth, pred) -> tuple[float, float, float]:
    """Plain point-wise precision/recall/F1."""
    t, p = _pair(truth, pred)
    tp = int(np.sum(t & p))
    fp = int(np.sum(~t & p))
    fn = int(np.sum(t & ~p))
    return prf(tp, fp, fn)


def pa_adjust(truth, pred) -> np.ndarray:
    """Point-adjusted copy of pred: truth segments with any hit become all-1."""
    t, p = _pair(truth, pred)
    adjusted = p.copy()
    for start, end in segments(t):
        if adjusted[start : end + 1].any():
            adjusted[start : end + 1] = True
    return adjusted.astype(np.int8)


def pa_scores(truth, pred) -> tuple[float, float, float]:
    return pw_scores(truth, pa_adjust(truth, pred))


def pak_adjust(truth, pred, k: float) -> np.ndarray:
    """Adjust only segments whose detected share exceeds k percent strictly."""
    if not (0.0 <= k <= 100.0):
        raise ValueError(f"k must lie in [0, 100], got {k}")
    t, p = _pair(truth, pred)
    adjusted = p.copy()
    for start, end in segments(t):
        window = p[start : end + 1]
        ratio = 100.0 * window.sum() / window.size
        if ratio > k:
            adjusted[start : end + 1] = True
    return adjusted.astype(np.int8)


def pak_scores(truth, pred, k: float) -> tuple[float, float, float]:
    return pw_scores(truth, pak_adjust(truth, pred, k))


def rpa_scores(truth, pred) -> tuple[float, float, float]:
    """Segment-unit scores: hit truth segments are single TPs, missed ones
    single FNs, and each predicted segment overlapping no truth segment is a
    single FP regardless of its length."""
    t, p = _pair(truth, pred)
    truth_segs = segments(t)
    tp = sum(1 for s, e in truth_segs if p[s : e + 1].any())
    fn = len(truth_segs) - tp
    fp = sum(1 for s, e in segments(p) if not t[s : e + 1].any())
    return prf(tp, fp, fn)


def aggregate(pairs) -> float:
    """Segment-weighted mean F1 across subsets: sum_i (e_i / E) * f1_i.

    ``pairs`` is an iterable of (segment_count, f1).  Subsets with zero
    segments carry zero weight; if every subset is anomaly-free the weighting
    is undefined and this raises ValueError.
    """
    pairs = list(pairs)
    total = sum(e for e, _ in pairs)
    if total <= 0:
        raise ValueError("aggregate needs at least one anomalous segment across subsets")
    return float(sum(e * f1 for e, f1 in pairs) / total)


@dataclass
class EvalOutcome:
    """One evaluated (subset, scoring regime) row plus its provenance."""

    name: str
    metric: str
    precision: float
    recall: float
    f1: float
    n_segments: int
    tau: float
    threshold_mode: str
    seed: int = 0
    manifest_hash: str = ""
    extra: dict = field(default_factory=dict)


def aggregate_outcomes(outcomes: list[EvalOutcome]) -> float:
    """F1_entire over EvalOutcome rows (single scoring regime expected)."""
    kinds = {o.metric for o in outcomes}
    if len(kinds) > 1:
        raise ValueError(f"refusing to aggregate across scoring regimes {sorted(kinds)}")
    return aggregate((o.n_segments, o.f1) for o in outcomes)


def ras_baseline(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform [0, 1) anomaly scores — the random-score reference detector.

    Feed these through the very same thresholding/evaluation path as model
    scores; a scoring regime that rates them well is grading on a curve.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 scores, got {n}")
    return rng.random(n)
