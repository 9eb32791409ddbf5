"""Alternating latent-label training.

Each mini-batch: forward both views, fix the center, score every window with
the training score, promote the top round(ratio * batch) scorers to anomaly
labels (after the warm-up epochs, for the label-using variants), then take one
optimizer step on the variant's loss.  The center is a detached statistic —
recomputed from the current batch until the freeze epoch, then reused
bit-identically; its byte hash is logged every batch so freezes are testable.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import SeedStreams, TrainConfig, VariantId, derive_streams
from .data import DataError, WindowedDataset
from .losses import total_loss, training_score
from .model import RocaNet, compute_center

__all__ = [
    "TrainingAbort",
    "BatchLogRow",
    "TrainState",
    "estimate_labels",
    "round_half_away",
    "fit",
    "validation_invariance",
    "write_train_log",
    "LOG_COLUMNS",
]

log = logging.getLogger(__name__)


class TrainingAbort(RuntimeError):
    """Raised when the loss goes non-finite; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


def round_half_away(x: float) -> int:
    """round() with halves away from zero (2.5 -> 3 rather than banker's 2)."""
    return int(np.floor(x + 0.5)) if x >= 0 else -int(np.floor(-x + 0.5))


def estimate_labels(scores: np.ndarray, contamination_ratio: float) -> np.ndarray:
    """Label the top round(ratio * N) scorers as anomalies (ties -> lower index).

    Returns an int8 binary vector over the scored set.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"scores must be a vector, got shape {s.shape}")
    if not (0.0 <= contamination_ratio < 1.0):
        raise ValueError(f"contamination_ratio must lie in [0, 1), got {contamination_ratio}")
    n = s.size
    k = min(round_half_away(contamination_ratio * n), n)
    labels = np.zeros(n, dtype=np.int8)
    if k > 0:
        order = np.argsort(-s, kind="stable")  # stable: equal scores keep index order
        labels[order[:k]] = 1
    return labels


@dataclass
class BatchLogRow:
    epoch: int
    batch: int
    size: int
    n_labeled: int
    data_term: float
    variance_q: float
    variance_qp: float
    total: float
    mean_invariance: float
    center_hash: str


LOG_COLUMNS = (
    "epoch", "batch", "size", "n_labeled", "data_term",
    "variance_q", "variance_qp", "total", "mean_invariance", "center_hash",
)

HISTORY_KEYS = ("invariance", "sim_q_center", "sim_qp_center", "sim_views", "total")


@dataclass
class TrainState:
    """What fit() leaves behind: per-epoch curves, per-batch log, label trail."""

    epochs_run: int = 0
    history: dict[str, list[float]] = field(
        default_factory=lambda: {k: [] for k in HISTORY_KEYS}
    )
    batch_rows: list[BatchLogRow] = field(default_factory=list)
    # (epoch, batch, dataset indices given label 1) for every training batch
    label_log: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    early_stopped: bool = False
    best_validation: float = float("inf")


def _center_hash(center: torch.Tensor) -> str:
    return hashlib.sha1(center.detach().cpu().numpy().tobytes()).hexdigest()[:12]


def _full_set_pass(model: RocaNet, x_all: torch.Tensor, batch_size: int):
    """Eval-mode projections of the full set (no grad); returns (q, q')."""
    model.eval()
    qs, qps = [], []
    with torch.no_grad():
        for lo in range(0, x_all.shape[0], batch_size):
            out = model(x_all[lo : lo + batch_size])
            qs.append(out.q)
            qps.append(out.q_prime)
    model.train()
    return torch.cat(qs), torch.cat(qps)


def fit(
    model: RocaNet,
    train_ds: WindowedDataset,
    cfg: TrainConfig,
    variant: VariantId,
    *,
    val_ds: WindowedDataset | None = None,
    streams: SeedStreams | None = None,
    log_path: str | Path | None = None,
) -> TrainState:
    """Train in place; returns the training trail.

    Batching shuffles each epoch and drops the ragged final batch so every
    step sees exactly ``cfg.batch_size`` windows (a set smaller than one batch
    is used whole).  Non-finite losses abort with a diagnostic snapshot.
    After fit() the model's stored center is the one scoring must use.
    """
    n = len(train_ds)
    if n < 2:
        raise DataError(f"training needs at least 2 windows, got {n}")
    if streams is None:
        streams = derive_streams(cfg.seed)
    state = TrainState()
    if cfg.epochs == 0:
        return state

    x_all = torch.as_tensor(train_ds.windows, dtype=torch.float32)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )
    freeze_epoch = cfg.center_freeze_epoch
    batch_size = min(cfg.batch_size, n)
    patience_left = cfg.patience

    for epoch in range(cfg.epochs):
        order = streams.shuffle.permutation(n)
        n_batches = max(n // batch_size, 1)

        # Optional epoch-level passes (full-set center and/or full-set labels).
        epoch_center = None
        if cfg.center_mode == "full" and (epoch < freeze_epoch or not model.has_center):
            q_full, qp_full = _full_set_pass(model, x_all, cfg.batch_size)
            epoch_center = compute_center(q_full, qp_full)
            model.store_center(epoch_center)
        epoch_labels = None
        if cfg.full_set_labels and variant.uses_labels and epoch >= cfg.warmup_epochs:
            q_full, qp_full = _full_set_pass(model, x_all, cfg.batch_size)
            center_now = model.center if model.has_center else compute_center(q_full, qp_full)
            s_full = training_score(q_full, qp_full, center_now).numpy()
            epoch_labels = estimate_labels(s_full, cfg.contamination_ratio)

        model.train()
        sums = {k: 0.0 for k in HISTORY_KEYS}
        for b in range(n_batches):
            idx = order[b * batch_size : (b + 1) * batch_size]
            x = x_all[idx]
            optimizer.zero_grad()
            out = model(x)

            if cfg.center_mode == "batch":
                if epoch < freeze_epoch or not model.has_center:
                    model.store_center(compute_center(out.q.detach(), out.q_prime.detach()))
            center = model.center

            if variant.uses_labels and epoch >= cfg.warmup_epochs:
                if epoch_labels is not None:
                    y_np = epoch_labels[idx]
                else:
                    s_batch = training_score(out.q.detach(), out.q_prime.detach(), center)
                    y_np = estimate_labels(s_batch.numpy(), cfg.contamination_ratio)
            else:
                y_np = np.zeros(len(idx), dtype=np.int8)
            y = torch.as_tensor(y_np, dtype=torch.int64)

            loss, report = total_loss(variant, out.q, out.q_prime, center, cfg, y)
            if not np.isfinite(report.total):
                snapshot = {
                    "epoch": epoch,
                    "batch": b,
                    "data_term": report.data_term,
                    "variance_q": report.variance_q,
                    "variance_qp": report.variance_qp,
                    "total": report.total,
                    "n_labeled": int(y_np.sum()),
                }
                raise TrainingAbort(f"non-finite loss at epoch {epoch} batch {b}", snapshot)
            loss.backward()
            optimizer.step()

            with torch.no_grad():
                sim_q = float((out.q.detach() @ center).mean())
                sim_qp = float((out.q_prime.detach() @ center).mean())
                sim_views = float((out.q.detach() * out.q_prime.detach()).sum(dim=-1).mean())
            state.batch_rows.append(
                BatchLogRow(
                    epoch=epoch,
                    batch=b,
                    size=len(idx),
                    n_labeled=int(y_np.sum()),
                    data_term=report.data_term,
                    variance_q=report.variance_q,
                    variance_qp=report.variance_qp,
                    total=report.total,
                    mean_invariance=report.mean_invariance(),
                    center_hash=_center_hash(center),
                )
            )
            state.label_log.append((epoch, b, idx[y_np.astype(bool)].copy()))
            sums["invariance"] += report.mean_invariance()
            sums["sim_q_center"] += sim_q
            sums["sim_qp_center"] += sim_qp
            sums["sim_views"] += sim_views
            sums["total"] += report.total

        for key in HISTORY_KEYS:
            state.history[key].append(sums[key] / n_batches)
        state.epochs_run = epoch + 1

        if cfg.early_stopping and val_ds is not None:
            val = validation_invariance(model, val_ds)
            if val < state.best_validation - 1e-9:
                state.best_validation = val
                patience_left = cfg.patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    state.early_stopped = True
                    log.info("early stop at epoch %d (validation %.5f)", epoch, val)
                    break

    if log_path is not None:
        write_train_log(state, log_path)
    return state


def validation_invariance(model: RocaNet, ds: WindowedDataset, batch_size: int = 256) -> float:
    """Mean invariance score on a held-out stream (eval mode, stored center)."""
    from .inference import score  # local import: inference depends on model only

    return float(score(model, ds, batch_size=batch_size).mean())


def write_train_log(state: TrainState, path: str | Path) -> None:
    """One TSV row per training batch (the columnar log tests read back)."""
    lines = ["\t".join(LOG_COLUMNS)]
    for row in state.batch_rows:
        lines.append(
            "\t".join(
                [
                    str(row.epoch), str(row.batch), str(row.size), str(row.n_labeled),
                    f"{row.data_term:.8g}", f"{row.variance_q:.8g}", f"{row.variance_qp:.8g}",
                    f"{row.total:.8g}", f"{row.mean_invariance:.8g}", row.center_hash,
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
