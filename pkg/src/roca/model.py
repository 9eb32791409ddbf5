"""Window encoder: temporal-conv feature stack -> seq2seq reconstruction ->
shared projection head producing two unit-norm views per window.

The first view q projects the encoded latent sequence z; the second view q'
projects the reconstruction z' that a seq2seq decoder produces from the same
latent — a window is "easy" when both views land near the training center on
the unit sphere, and reconstruction failure shows up as view disagreement.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .config import ConfigError, SeriesSpec, TrainConfig

__all__ = [
    "EncoderSpec",
    "ModelOutput",
    "ProjectionBatch",
    "RocaNet",
    "build_model",
    "unit_rows",
    "compute_center",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderSpec:
    """Static shape of the network; everything needed to rebuild it."""

    in_dim: int
    window_length: int
    channels: tuple[int, ...] = (32, 32)
    kernel_size: int = 3
    pool_size: int = 2
    dropout: float = 0.45
    seq2seq_layers: int = 3
    projection_dim: int = 16
    projector_hidden: int = 32
    temporal_reduce: str = "flatten"

    def __post_init__(self) -> None:
        if self.in_dim < 1:
            raise ConfigError(f"in_dim must be >= 1, got {self.in_dim}")
        if not self.channels:
            raise ConfigError("at least one conv block is required")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be positive odd, got {self.kernel_size}")
        if self.temporal_reduce not in ("flatten", "mean"):
            raise ConfigError(f"temporal_reduce must be 'flatten' or 'mean'")
        # Pooling must leave at least one time step.
        length = self.window_length
        for i in range(len(self.channels)):
            length //= self.pool_size
            if length < 1:
                raise ConfigError(
                    f"window_length {self.window_length} collapses to zero after "
                    f"{i + 1} pooling stages of size {self.pool_size}; use a longer "
                    "window or fewer blocks"
                )

    @property
    def out_length(self) -> int:
        """Latent sequence length after all pooling stages."""
        length = self.window_length
        for _ in self.channels:
            length //= self.pool_size
        return length

    @property
    def feature_dim(self) -> int:
        """Latent feature width (last conv block == seq2seq width)."""
        return self.channels[-1]

    @classmethod
    def from_config(cls, series: SeriesSpec, cfg: TrainConfig) -> "EncoderSpec":
        # univariate series get 2 conv blocks, multivariate 3, unless pinned
        blocks = cfg.encoder_blocks if cfg.encoder_blocks is not None else (2 if series.dim == 1 else 3)
        width = cfg.encoder_channels if cfg.encoder_channels is not None else (32 if series.dim == 1 else 64)
        return cls(
            in_dim=series.dim,
            window_length=series.window_length,
            channels=(width,) * blocks,
            kernel_size=cfg.kernel_size,
            pool_size=cfg.pool_size,
            dropout=cfg.dropout,
            seq2seq_layers=cfg.seq2seq_layers,
            projection_dim=cfg.projection_dim,
            projector_hidden=cfg.projector_hidden,
            temporal_reduce=cfg.temporal_reduce,
        )


@dataclass
class ModelOutput:
    """One forward pass: latent sequence, its reconstruction, and both views."""

    z: torch.Tensor        # (B, L', K)
    z_prime: torch.Tensor  # (B, L', K)
    q: torch.Tensor        # (B, P), unit rows
    q_prime: torch.Tensor  # (B, P), unit rows


@dataclass
class ProjectionBatch:
    """Two projection views plus the center they are compared against."""

    q: torch.Tensor
    q_prime: torch.Tensor
    center: torch.Tensor

    def __post_init__(self) -> None:
        from .losses import ContractViolation  # local import avoids a cycle

        if self.q.shape != self.q_prime.shape:
            raise ContractViolation(
                f"q and q' shapes differ: {tuple(self.q.shape)} vs {tuple(self.q_prime.shape)}"
            )
        if self.center.shape != self.q.shape[-1:]:
            raise ContractViolation(
                f"center shape {tuple(self.center.shape)} does not match "
                f"projection dim {self.q.shape[-1]}"
            )
        for name, t in (("q", self.q), ("q'", self.q_prime), ("center", self.center)):
            err = (torch.linalg.vector_norm(t, dim=-1) - 1.0).abs().max().item()
            if err > 1e-4:
                raise ContractViolation(f"{name} rows must be unit-norm (max |norm-1|={err:.3g})")


def unit_rows(v: torch.Tensor, eps: float = 1e-12) -> tuple[torch.Tensor, int]:
    """Row-normalize; rows with norm < eps get eps added elementwise first so
    the output is always finite and unit.  Returns (normalized, #guarded rows)."""
    norms = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    degenerate = norms < eps
    n_guarded = int(degenerate.sum().item())
    if n_guarded:
        v = torch.where(degenerate, v + eps, v)
        norms = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    return v / norms, n_guarded


def compute_center(q: torch.Tensor, qp: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Unit-normalized mean of all 2B projection rows.

    A mean that is exactly the zero vector is perturbed by eps before
    normalizing, and any exactly-zero component of the result is replaced by
    +eps (then renormalized) so the center never has silent dead dimensions.
    """
    mean = torch.cat([q, qp], dim=0).mean(dim=0)
    if torch.linalg.vector_norm(mean) < 1e-12:
        mean = mean + eps
    center = mean / torch.linalg.vector_norm(mean)
    zero = center == 0
    if zero.any():
        center = torch.where(zero, torch.full_like(center, eps), center)
        center = center / torch.linalg.vector_norm(center)
    return center


class RocaNet(nn.Module):
    """Conv feature stack + LSTM seq2seq + shared projector (see module doc)."""

    def __init__(self, spec: EncoderSpec) -> None:
        super().__init__()
        self.spec = spec
        blocks = []
        in_ch = spec.in_dim
        for i, out_ch in enumerate(spec.channels):
            layers = [
                nn.Conv1d(in_ch, out_ch, spec.kernel_size, padding=spec.kernel_size // 2),
                nn.BatchNorm1d(out_ch),
                nn.ReLU(),
                nn.MaxPool1d(spec.pool_size),
            ]
            if i == 0 and spec.dropout > 0:
                layers.append(nn.Dropout(spec.dropout))
            blocks.append(nn.Sequential(*layers))
            in_ch = out_ch
        self.feature_stack = nn.Sequential(*blocks)

        k = spec.feature_dim
        self.seq_encoder = nn.LSTM(k, k, num_layers=spec.seq2seq_layers, batch_first=True)
        self.seq_decoder = nn.LSTM(k, k, num_layers=spec.seq2seq_layers, batch_first=True)
        self.decoder_out = nn.Linear(k, k)

        proj_in = k * spec.out_length if spec.temporal_reduce == "flatten" else k
        self.projector = nn.Sequential(
            nn.Linear(proj_in, spec.projector_hidden),
            nn.BatchNorm1d(spec.projector_hidden),
            nn.ReLU(),
            nn.Linear(spec.projector_hidden, spec.projection_dim),
        )

        # Training center lives on the model so checkpoints are self-contained.
        self.register_buffer("center", torch.zeros(spec.projection_dim))
        self.register_buffer("center_set", torch.tensor(False))
        self.norm_guard_incidents = 0

    # --- stages ---------------------------------------------------------

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """(B, L, dim) windows -> (B, L', K) latent sequences."""
        if x.ndim != 3 or x.shape[1] != self.spec.window_length or x.shape[2] != self.spec.in_dim:
            raise ConfigError(
                f"expected input (B, {self.spec.window_length}, {self.spec.in_dim}), "
                f"got {tuple(x.shape)}"
            )
        feats = self.feature_stack(x.transpose(1, 2))  # (B, K, L')
        return feats.transpose(1, 2)

    def context(self, z: torch.Tensor) -> torch.Tensor:
        """Top-layer final hidden state of the seq2seq encoder: (B, K)."""
        _, (h, _) = self.seq_encoder(z)
        return h[-1]

    def reconstruct(self, z: torch.Tensor) -> torch.Tensor:
        """Autoregressive seq2seq reconstruction of z, same shape as z.

        The decoder starts from a zero input and feeds each emitted step back
        in as the next input — its own outputs, never the targets.
        """
        _, state = self.seq_encoder(z)
        batch, steps, k = z.shape
        inp = z.new_zeros(batch, 1, k)
        outputs = []
        for _ in range(steps):
            out, state = self.seq_decoder(inp, state)
            step = self.decoder_out(out)
            outputs.append(step)
            inp = step
        return torch.cat(outputs, dim=1)

    def project(self, z: torch.Tensor) -> torch.Tensor:
        """(B, L', K) -> unit-row (B, P) projections."""
        if self.spec.temporal_reduce == "flatten":
            flat = z.reshape(z.shape[0], -1)
        else:
            flat = z.mean(dim=1)
        q, guarded = unit_rows(self.projector(flat))
        self.norm_guard_incidents += guarded
        return q

    def forward(self, x: torch.Tensor) -> ModelOutput:
        z = self.encode(x)
        z_prime = self.reconstruct(z)
        return ModelOutput(z, z_prime, self.project(z), self.project(z_prime))

    # --- center bookkeeping ----------------------------------------------

    def store_center(self, center: torch.Tensor) -> None:
        self.center.copy_(center.detach())
        self.center_set.fill_(True)

    @property
    def has_center(self) -> bool:
        return bool(self.center_set)


def build_model(spec: EncoderSpec, init_seed: int) -> RocaNet:
    """Construct a net with parameter init drawn from a dedicated seed."""
    torch.manual_seed(init_seed)
    return RocaNet(spec)


def save_checkpoint(model: RocaNet, path: str | Path, extra: dict | None = None) -> None:
    archive = {
        "format_version": CHECKPOINT_VERSION,
        "encoder_spec": dataclasses.asdict(model.spec),
        "state_dict": model.state_dict(),
        "extra": dict(extra or {}),
    }
    torch.save(archive, str(path))


def load_checkpoint(path: str | Path) -> tuple[RocaNet, dict]:
    """Rebuild a model from a checkpoint alone; returns (model, extra)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    archive = torch.load(str(path), map_location="cpu", weights_only=True)
    version = archive.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(
            f"checkpoint format {version!r} not supported (expected {CHECKPOINT_VERSION})"
        )
    spec_dict = dict(archive["encoder_spec"])
    spec_dict["channels"] = tuple(spec_dict["channels"])
    model = RocaNet(EncoderSpec(**spec_dict))
    model.load_state_dict(archive["state_dict"])
    model.eval()
    return model, dict(archive.get("extra", {}))
