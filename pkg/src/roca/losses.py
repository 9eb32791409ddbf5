"""Loss family for contrastive one-class training on unit-sphere projections.

Every term consumes row-normalized projections q, q' (two views of the same
window) and a unit center vector.  With unit inputs the invariance term
l_inv = 2 - sim(q, c) - sim(q', c) lies in [0, 4] and the outlier-exposure
term is its mirror l_oe = 4 - l_inv, so the training score
s = l_inv - l_oe = 2*l_inv - 4 lies in [-4, 4]: large where a window sits far
from the center (anomalous side), small where it hugs the center.

Inputs that are not unit-norm violate the contract and raise
:class:`ContractViolation` — terms never renormalize silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .config import ConfigError, TrainConfig, VariantId

__all__ = [
    "ContractViolation",
    "LossReport",
    "BoundProbe",
    "invariance_term",
    "oe_term",
    "training_score",
    "joint_loss",
    "variance_term",
    "soft_boundary_term",
    "total_loss",
    "bound_probe",
]

# Producers guarantee unit rows to ~1e-7 (float32 normalize); the contract
# check is looser so it only trips on genuinely unnormalized inputs.
UNIT_TOL = 1e-4


class ContractViolation(ValueError):
    """An input violated a documented tensor contract (e.g. non-unit rows)."""


def _require_unit_rows(name: str, t: torch.Tensor) -> None:
    norms = torch.linalg.vector_norm(t, dim=-1)
    err = (norms - 1.0).abs().max().item()
    if err > UNIT_TOL:
        raise ContractViolation(
            f"{name} must have unit-norm rows (max |norm-1| = {err:.3g})"
        )


def _center_sims(q: torch.Tensor, qp: torch.Tensor, center: torch.Tensor):
    if q.shape != qp.shape:
        raise ContractViolation(f"q and q' shapes differ: {tuple(q.shape)} vs {tuple(qp.shape)}")
    if center.shape != q.shape[-1:]:
        raise ContractViolation(
            f"center shape {tuple(center.shape)} does not match projection dim {q.shape[-1]}"
        )
    _require_unit_rows("q", q)
    _require_unit_rows("q'", qp)
    _require_unit_rows("center", center)
    return q @ center, qp @ center


def invariance_term(q: torch.Tensor, qp: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
    """Per-sample 2 - sim(q, c) - sim(q', c); zero iff both views sit on the center."""
    a, b = _center_sims(q, qp, center)
    return 2.0 - a - b


def oe_term(q: torch.Tensor, qp: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
    """Per-sample 2 + sim(q, c) + sim(q', c) = 4 - invariance; minimized by
    pushing a window's views to the antipode of the center."""
    a, b = _center_sims(q, qp, center)
    return 2.0 + a + b


def training_score(q: torch.Tensor, qp: torch.Tensor, center: torch.Tensor) -> torch.Tensor:
    """Per-sample l_inv - l_oe = -2*(sim(q,c) + sim(q',c)), in [-4, 4]."""
    a, b = _center_sims(q, qp, center)
    return -2.0 * (a + b)


def joint_loss(
    q: torch.Tensor,
    qp: torch.Tensor,
    center: torch.Tensor,
    labels: torch.Tensor,
    oe_weight: float,
) -> torch.Tensor:
    """mean over the batch of  mu*y*l_oe + (1-y)*l_inv  for binary labels y."""
    if labels.shape != q.shape[:1]:
        raise ContractViolation(
            f"labels shape {tuple(labels.shape)} does not match batch size {q.shape[0]}"
        )
    y = labels.to(q.dtype)
    if ((y != 0) & (y != 1)).any():
        raise ContractViolation("labels must be binary")
    inv = invariance_term(q, qp, center)
    oe = 4.0 - inv
    return (oe_weight * y * oe + (1.0 - y) * inv).mean()


def variance_term(
    q: torch.Tensor, std_target: float = 1.0, eps: float = 1e-4
) -> torch.Tensor:
    """Hinge keeping every projection dimension spread out across the batch:
    mean_d max(0, std_target - sqrt(Var_batch[q_d] + eps)).

    Variance is the population variance of each dimension over the batch, so a
    batch of one yields Var = 0 and a full hinge.  No unit-norm requirement —
    the term sees the projections exactly as produced.
    """
    if q.ndim != 2:
        raise ContractViolation(f"expected a (batch, dim) matrix, got shape {tuple(q.shape)}")
    var = q.var(dim=0, unbiased=False)
    return torch.clamp(std_target - torch.sqrt(var + eps), min=0.0).mean()


def soft_boundary_term(scores: torch.Tensor, r: float) -> torch.Tensor:
    """Quantile boundary plus the mean rectified excess above it:
    Qau + (1/(r*N)) * sum_i max(0, s_i - Qau), with Qau the upper r-tail
    boundary, i.e. the order statistic at index ceil((N-1)*(1-r)) of the
    ascending sort (r = 1 puts the boundary at the minimum).
    """
    if scores.ndim != 1:
        raise ContractViolation(f"scores must be a vector, got shape {tuple(scores.shape)}")
    if not (0.0 < r <= 1.0):
        raise ConfigError(f"soft-boundary r must lie in (0, 1], got {r}")
    n = scores.shape[0]
    if n == 0:
        raise ContractViolation("scores must be non-empty")
    # small negative slack so exact-integer products don't ceil one step high
    idx = math.ceil((n - 1) * (1.0 - r) - 1e-9)
    qau = torch.sort(scores).values[idx]
    return qau + torch.clamp(scores - qau, min=0.0).mean() / r


@dataclass
class LossReport:
    """Detached per-batch diagnostics emitted alongside every total loss."""

    variant: str
    per_sample_invariance: np.ndarray
    per_sample_oe: np.ndarray
    per_sample_score: np.ndarray
    labels: np.ndarray
    data_term: float      # the variant's data-fit term (joint / mean inv / boundary)
    variance_q: float
    variance_qp: float
    total: float

    def mean_invariance(self) -> float:
        return float(self.per_sample_invariance.mean())


def total_loss(
    variant: VariantId,
    q: torch.Tensor,
    qp: torch.Tensor,
    center: torch.Tensor,
    cfg: TrainConfig,
    labels: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossReport]:
    """Assemble the variant's objective; returns (scalar loss, detached report).

    ROCA      joint(labels) + (w/2)(V(q) + V(q'))
    ROCA_NOV  joint(labels)                       — no variance terms
    COCA      mean l_inv    + (w/2)(V(q) + V(q'))
    COCAS     boundary(s)   + (w/2)(V(q) + V(q'))
    """
    inv = invariance_term(q, qp, center)
    oe = 4.0 - inv
    score = inv - oe

    if variant.uses_labels:
        if labels is None:
            raise ConfigError(f"variant {variant.kind} requires labels")
        y = labels
    else:
        y = torch.zeros(q.shape[0], dtype=torch.int64, device=q.device)

    if variant.kind in ("ROCA", "ROCA_NOV"):
        data = joint_loss(q, qp, center, y, cfg.oe_weight)
    elif variant.kind == "COCA":
        data = inv.mean()
    else:  # COCAS
        data = soft_boundary_term(score, variant.soft_boundary_r)

    var_q = variance_term(q, cfg.std_target, cfg.variance_eps)
    var_qp = variance_term(qp, cfg.std_target, cfg.variance_eps)
    if variant.uses_variance and cfg.variance_weight > 0:
        total = data + 0.5 * cfg.variance_weight * (var_q + var_qp)
    else:
        total = data

    report = LossReport(
        variant=variant.kind,
        per_sample_invariance=inv.detach().cpu().numpy().copy(),
        per_sample_oe=oe.detach().cpu().numpy().copy(),
        per_sample_score=score.detach().cpu().numpy().copy(),
        labels=y.detach().cpu().numpy().astype(np.int8),
        data_term=float(data.detach()),
        variance_q=float(var_q.detach()),
        variance_qp=float(var_qp.detach()),
        total=float(total.detach()),
    )
    return total, report


# ---------------------------------------------------------------------------
# Geometric diagnostics
# ---------------------------------------------------------------------------

@dataclass
class BoundProbe:
    """Spherical geometry of (q, q', center) triples, all float64.

    alpha/beta are the angles from center to q and q', gamma the angle between
    the two views, dihedral_cos the cosine of the dihedral angle at the center
    between the great-circle arcs to q and q'.  Chord lengths are the straight-
    line distances.  similarity_bound_gap is l_inv - (1 + l_sim) where
    l_sim = -sim(q, q'): the heuristic claim that the invariance term dominates
    1 + l_sim is *not* an identity, and this gap goes negative on real
    configurations — it is reported for diagnosis, never asserted.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    dihedral_cos: np.ndarray
    chord_q_center: np.ndarray
    chord_qp_center: np.ndarray
    chord_q_qp: np.ndarray
    invariance: np.ndarray
    similarity_bound_gap: np.ndarray

    def angle_triangle_violations(self, slack: float = 1e-9) -> int:
        """Count triples violating gamma <= alpha + beta (spherical triangle
        inequality), allowing float slack."""
        return int((self.gamma > self.alpha + self.beta + slack).sum())

    def chord_triangle_violations(self, slack: float = 1e-9) -> int:
        """Count triples violating |q - q'| <= |q - c| + |q' - c|."""
        return int(
            (self.chord_q_qp > self.chord_q_center + self.chord_qp_center + slack).sum()
        )


def bound_probe(q: torch.Tensor, qp: torch.Tensor, center: torch.Tensor) -> BoundProbe:
    """Measure the spherical geometry of each (q_i, q'_i, center) triple."""
    a, b = _center_sims(q, qp, center)
    cos_a = a.detach().cpu().numpy().astype(np.float64).clip(-1.0, 1.0)
    cos_b = b.detach().cpu().numpy().astype(np.float64).clip(-1.0, 1.0)
    cos_g = (
        (q * qp).sum(dim=-1).detach().cpu().numpy().astype(np.float64).clip(-1.0, 1.0)
    )
    alpha, beta, gamma = np.arccos(cos_a), np.arccos(cos_b), np.arccos(cos_g)
    sin_a, sin_b = np.sin(alpha), np.sin(beta)
    denom = sin_a * sin_b
    with np.errstate(divide="ignore", invalid="ignore"):
        dihedral = np.where(
            denom > 1e-12, (cos_g - cos_a * cos_b) / np.maximum(denom, 1e-300), 1.0
        )
    dihedral = dihedral.clip(-1.0, 1.0)
    inv = 2.0 - cos_a - cos_b
    l_sim = -cos_g
    return BoundProbe(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        dihedral_cos=dihedral,
        chord_q_center=np.sqrt(np.maximum(2.0 - 2.0 * cos_a, 0.0)),
        chord_qp_center=np.sqrt(np.maximum(2.0 - 2.0 * cos_b, 0.0)),
        chord_q_qp=np.sqrt(np.maximum(2.0 - 2.0 * cos_g, 0.0)),
        invariance=inv,
        similarity_bound_gap=inv - (1.0 + l_sim),
    )
