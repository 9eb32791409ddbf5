"""Experiment configuration: domain types, the flat config-file schema, profiles,
seed-stream derivation, and run manifests.

The config file format is flat ``key = value`` text.  ``#`` starts a comment,
blank lines are ignored, keys are case-sensitive and may appear at most once.
Unknown keys are errors, not warnings: a typo must never silently fall back to a
default.  See ``DEFAULTS`` for the full key set and ``PROFILES`` for the
per-dataset presets applied by the ``profile`` key (explicit file keys always
win over profile values).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "VARIANTS",
    "SeriesSpec",
    "VariantId",
    "TrainConfig",
    "ExperimentConfig",
    "SeedStreams",
    "RunManifest",
    "PROFILES",
    "derive_streams",
    "load_config",
    "load_experiment",
    "parse_experiment",
    "serialize_experiment",
]


class ConfigError(ValueError):
    """A configuration file or value violates the documented schema."""


VARIANTS = ("ROCA", "COCA", "COCAS", "ROCA_NOV")


@dataclass(frozen=True)
class SeriesSpec:
    """Sliding-window geometry of one series.

    Windows are ``window_length`` samples long and start every ``time_step``
    samples; ``dim`` is the number of channels per sample.
    """

    name: str
    dim: int = 1
    window_length: int = 16
    time_step: int = 16

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("series name must be non-empty")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.window_length < 1:
            raise ConfigError(f"window_length must be >= 1, got {self.window_length}")
        if self.time_step < 1:
            raise ConfigError(f"time_step must be >= 1, got {self.time_step}")
        if self.time_step > self.window_length:
            raise ConfigError(
                f"time_step ({self.time_step}) must not exceed "
                f"window_length ({self.window_length}); gaps between windows "
                "would leave samples unscored"
            )


@dataclass(frozen=True)
class VariantId:
    """Which objective the trainer optimizes.

    ``soft_boundary_r`` is the quantile fraction of the soft-boundary objective
    and must be present exactly when ``kind == "COCAS"``.
    """

    kind: str
    soft_boundary_r: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in VARIANTS:
            raise ConfigError(f"unknown variant {self.kind!r}; expected one of {VARIANTS}")
        if self.kind == "COCAS":
            if self.soft_boundary_r is None:
                raise ConfigError("variant COCAS requires soft_boundary_r")
            if not (0.0 < self.soft_boundary_r <= 1.0):
                raise ConfigError(
                    f"soft_boundary_r must lie in (0, 1], got {self.soft_boundary_r}"
                )
        elif self.soft_boundary_r is not None:
            raise ConfigError(f"soft_boundary_r is only meaningful for COCAS, not {self.kind}")

    @property
    def uses_labels(self) -> bool:
        return self.kind in ("ROCA", "ROCA_NOV")

    @property
    def uses_variance(self) -> bool:
        return self.kind != "ROCA_NOV"


# Stable band for the optimizer step size; values outside it are rejected so a
# stray exponent typo fails fast instead of silently diverging.
LR_MIN, LR_MAX = 1e-4, 5e-4


@dataclass(frozen=True)
class TrainConfig:
    """Everything the trainer and model builder need beyond the window geometry."""

    # objective knobs
    contamination_ratio: float = 0.0   # fraction of each batch labeled anomalous
    oe_weight: float = 7.0             # weight on the outlier-exposure term
    variance_weight: float = 1.0       # weight on the variance hinge
    std_target: float = 1.0            # hinge target for per-dimension std
    variance_eps: float = 1e-4         # inside the sqrt, keeps the gradient finite
    # schedule
    epochs: int = 50
    warmup_epochs: int = 3             # label estimation disabled before this epoch
    center_freeze_epoch: int | None = None  # None -> warmup_epochs
    batch_size: int = 64
    early_stopping: bool = False
    patience: int = 10
    # optimizer
    learning_rate: float = 3e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.99
    # label estimation / center
    full_set_labels: bool = False      # estimate labels over the full set each epoch
    center_mode: str = "batch"         # "batch" | "full"
    # model shape (None -> derived from the series dimensionality)
    encoder_blocks: int | None = None
    encoder_channels: int | None = None
    kernel_size: int = 3
    pool_size: int = 2
    dropout: float = 0.45
    seq2seq_layers: int = 3
    projection_dim: int = 16
    projector_hidden: int = 32
    temporal_reduce: str = "flatten"   # "flatten" | "mean"
    # reproducibility
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.contamination_ratio < 1.0):
            raise ConfigError(
                f"contamination_ratio must lie in [0, 1), got {self.contamination_ratio}"
            )
        if self.oe_weight < 0:
            raise ConfigError(f"oe_weight must be >= 0, got {self.oe_weight}")
        if self.variance_weight < 0:
            raise ConfigError(f"variance_weight must be >= 0, got {self.variance_weight}")
        if self.std_target <= 0:
            raise ConfigError(f"std_target must be > 0, got {self.std_target}")
        if self.variance_eps <= 0:
            raise ConfigError(f"variance_eps must be > 0, got {self.variance_eps}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.center_freeze_epoch is None:
            object.__setattr__(self, "center_freeze_epoch", self.warmup_epochs)
        if self.center_freeze_epoch < 0:
            raise ConfigError(
                f"center_freeze_epoch must be >= 0, got {self.center_freeze_epoch}"
            )
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 (batch statistics need more than one "
                f"sample), got {self.batch_size}"
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not (LR_MIN <= self.learning_rate <= LR_MAX):
            raise ConfigError(
                f"learning_rate {self.learning_rate} outside the stable band "
                f"[{LR_MIN}, {LR_MAX}]"
            )
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not (0.0 <= b < 1.0):
                raise ConfigError(f"{name} must lie in [0, 1), got {b}")
        if self.center_mode not in ("batch", "full"):
            raise ConfigError(f"center_mode must be 'batch' or 'full', got {self.center_mode!r}")
        if self.encoder_blocks is not None and self.encoder_blocks < 1:
            raise ConfigError(f"encoder_blocks must be >= 1, got {self.encoder_blocks}")
        if self.encoder_channels is not None and self.encoder_channels < 1:
            raise ConfigError(f"encoder_channels must be >= 1, got {self.encoder_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(
                f"kernel_size must be a positive odd number (same-length "
                f"convolutions), got {self.kernel_size}"
            )
        if self.pool_size < 2:
            raise ConfigError(f"pool_size must be >= 2, got {self.pool_size}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.seq2seq_layers < 1:
            raise ConfigError(f"seq2seq_layers must be >= 1, got {self.seq2seq_layers}")
        if self.projection_dim < 2:
            raise ConfigError(f"projection_dim must be >= 2, got {self.projection_dim}")
        if self.projector_hidden < 1:
            raise ConfigError(f"projector_hidden must be >= 1, got {self.projector_hidden}")
        if self.temporal_reduce not in ("flatten", "mean"):
            raise ConfigError(
                f"temporal_reduce must be 'flatten' or 'mean', got {self.temporal_reduce!r}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully parsed config file: window geometry, objective, and data recipe."""

    series: SeriesSpec
    train: TrainConfig
    variant: VariantId
    # augmentation
    augment: bool = True
    jitter_sigma: float = 0.03
    scale_min: float = 0.9
    scale_max: float = 1.1
    # training-set contamination
    pollution_rate: float = 0.0
    injection_kinds: tuple[str, ...] = ("point_global", "pattern")
    # synthetic-data recipe (used by `prepare` when no benchmark is named)
    synth_train_length: int = 4096
    synth_test_length: int = 8192
    synth_val_fraction: float = 0.1
    synth_anomaly_fraction: float = 0.02
    synth_event_kinds: tuple[str, ...] = ("point_global", "pattern")
    synth_periods: tuple[float, ...] = (24.0, 57.0)
    synth_amplitudes: tuple[float, ...] = (1.0, 0.6)
    synth_noise_sigma: float = 0.05
    profile: str = ""

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ConfigError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")
        if not (0 < self.scale_min <= self.scale_max):
            raise ConfigError(
                f"need 0 < scale_min <= scale_max, got [{self.scale_min}, {self.scale_max}]"
            )
        if not (0.0 <= self.pollution_rate < 1.0):
            raise ConfigError(f"pollution_rate must lie in [0, 1), got {self.pollution_rate}")
        if not (0.0 <= self.synth_val_fraction < 0.5):
            raise ConfigError(
                f"synth_val_fraction must lie in [0, 0.5), got {self.synth_val_fraction}"
            )
        if not (0.0 <= self.synth_anomaly_fraction < 0.5):
            raise ConfigError(
                f"synth_anomaly_fraction must lie in [0, 0.5), got {self.synth_anomaly_fraction}"
            )
        if len(self.synth_periods) != len(self.synth_amplitudes):
            raise ConfigError("synth_periods and synth_amplitudes must have equal length")
        if self.synth_noise_sigma < 0:
            raise ConfigError(f"synth_noise_sigma must be >= 0, got {self.synth_noise_sigma}")


# ---------------------------------------------------------------------------
# Flat-file schema
# ---------------------------------------------------------------------------

def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_float_tuple(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {raw!r}") from exc


def _parse_str_tuple(raw: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in raw.split(",") if p.strip())


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, target). target is "series" / "train" / "variant" / "exp".
_SERIES_KEYS = {
    "name": str,
    "dim": int,
    "window_length": int,
    "time_step": int,
}
_VARIANT_KEYS = {
    "variant": str,
    "soft_boundary_r": float,
}
_TRAIN_PARSERS: dict[str, Any] = {}
for _f in fields(TrainConfig):
    if _f.type in ("int", "int | None"):
        _TRAIN_PARSERS[_f.name] = int
    elif _f.type == "float":
        _TRAIN_PARSERS[_f.name] = float
    elif _f.type == "bool":
        _TRAIN_PARSERS[_f.name] = _parse_bool
    else:
        _TRAIN_PARSERS[_f.name] = str
_EXP_PARSERS = {
    "augment": _parse_bool,
    "jitter_sigma": float,
    "scale_min": float,
    "scale_max": float,
    "pollution_rate": float,
    "injection_kinds": _parse_str_tuple,
    "synth_train_length": int,
    "synth_test_length": int,
    "synth_val_fraction": float,
    "synth_anomaly_fraction": float,
    "synth_event_kinds": _parse_str_tuple,
    "synth_periods": _parse_float_tuple,
    "synth_amplitudes": _parse_float_tuple,
    "synth_noise_sigma": float,
    "profile": str,
}

ALL_KEYS = (
    set(_SERIES_KEYS) | set(_VARIANT_KEYS) | set(_TRAIN_PARSERS) | set(_EXP_PARSERS)
)

# Per-dataset presets. Applied beneath explicit file keys; `synthetic` is the
# desk-scale profile the bundled experiments use.
PROFILES: dict[str, dict[str, Any]] = {
    "aiops": {
        "dim": 1, "window_length": 16, "time_step": 16,
        "epochs": 50, "contamination_ratio": 0.03,
    },
    "ucr": {
        "dim": 1, "window_length": 64, "time_step": 16,
        "epochs": 50, "contamination_ratio": 0.0,
        "early_stopping": True, "patience": 10,
    },
    "swat": {
        "dim": 51, "window_length": 32, "time_step": 16,
        "epochs": 100, "contamination_ratio": 0.001,
        "encoder_blocks": 3, "encoder_channels": 64,
    },
    "wadi": {
        "dim": 127, "window_length": 32, "time_step": 16,
        "epochs": 100, "contamination_ratio": 0.001,
        "encoder_blocks": 3, "encoder_channels": 64,
    },
    "synthetic": {
        "dim": 1, "window_length": 16, "time_step": 16,
        "epochs": 25, "batch_size": 64, "learning_rate": 5e-4,
        "encoder_channels": 16, "projection_dim": 16, "projector_hidden": 32,
        "warmup_epochs": 3,
    },
}


def _parse_lines(text: str, origin: str) -> dict[str, str]:
    seen: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in ALL_KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"{origin}:{lineno}: empty value for {key!r}")
        seen[key] = raw
    return seen


def parse_experiment(text: str, origin: str = "<config>") -> ExperimentConfig:
    """Parse config text into an :class:`ExperimentConfig`. Raises ConfigError."""
    raw = _parse_lines(text, origin)

    values: dict[str, Any] = {}
    profile = raw.get("profile", "")
    if profile:
        if profile not in PROFILES:
            raise ConfigError(
                f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}"
            )
        values.update(PROFILES[profile])
    for key, rawval in raw.items():
        parser = (
            _SERIES_KEYS.get(key)
            or _VARIANT_KEYS.get(key)
            or _TRAIN_PARSERS.get(key)
            or _EXP_PARSERS.get(key)
        )
        try:
            values[key] = parser(rawval)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: bad value for {key!r}: {rawval!r} ({exc})") from exc

    if "name" not in values:
        raise ConfigError(f"{origin}: missing required key 'name'")
    if "variant" not in values:
        raise ConfigError(f"{origin}: missing required key 'variant'")

    series = SeriesSpec(**{k: values[k] for k in _SERIES_KEYS if k in values})
    variant = VariantId(values["variant"], values.get("soft_boundary_r"))
    train = TrainConfig(**{k: values[k] for k in _TRAIN_PARSERS if k in values})
    exp_kwargs = {k: values[k] for k in _EXP_PARSERS if k in values and k != "profile"}
    return ExperimentConfig(
        series=series, train=train, variant=variant,
        profile=profile, **exp_kwargs,
    )


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_experiment(text, origin=str(path))


def load_config(path: str | Path) -> tuple[TrainConfig, SeriesSpec, VariantId]:
    """Load a config file; returns (train, series, variant)."""
    exp = load_experiment(path)
    return exp.train, exp.series, exp.variant


def serialize_experiment(exp: ExperimentConfig) -> str:
    """Render a config as flat key=value text; parse_experiment round-trips it.

    The profile is intentionally not re-emitted: the rendered file pins every
    effective value explicitly.
    """
    lines = []
    for key in _SERIES_KEYS:
        lines.append(f"{key} = {_fmt(getattr(exp.series, key))}")
    lines.append(f"variant = {exp.variant.kind}")
    if exp.variant.soft_boundary_r is not None:
        lines.append(f"soft_boundary_r = {_fmt(exp.variant.soft_boundary_r)}")
    for key in _TRAIN_PARSERS:
        val = getattr(exp.train, key)
        if val is None:
            continue
        lines.append(f"{key} = {_fmt(val)}")
    for key in _EXP_PARSERS:
        if key == "profile":
            continue
        lines.append(f"{key} = {_fmt(getattr(exp, key))}")
    return "\n".join(lines) + "\n"


def config_snapshot(exp: ExperimentConfig) -> dict[str, str]:
    """The serialized config as an ordered key->string dict (manifest payload)."""
    snap: dict[str, str] = {}
    for line in serialize_experiment(exp).splitlines():
        key, _, val = line.partition(" = ")
        snap[key] = val
    return snap


# ---------------------------------------------------------------------------
# Seed streams
# ---------------------------------------------------------------------------

@dataclass
class SeedStreams:
    """Independent named RNG streams derived from one experiment seed.

    Changing how many draws one consumer makes must not shift any other
    consumer's randomness, so each stage gets its own child stream.
    """

    augment: np.random.Generator
    contaminate: np.random.Generator
    shuffle: np.random.Generator
    init_seed: int  # seeds the parameter-init backend (torch)


def derive_streams(seed: int) -> SeedStreams:
    root = np.random.SeedSequence(seed)
    aug, con, shuf, init = root.spawn(4)
    init_seed = int(init.generate_state(1, dtype=np.uint64)[0] >> 1)
    return SeedStreams(
        augment=np.random.default_rng(aug),
        contaminate=np.random.default_rng(con),
        shuffle=np.random.default_rng(shuf),
        init_seed=init_seed,
    )


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

CODE_VERSION = "0.1.0"


@dataclass
class RunManifest:
    """Provenance record emitted next to every artifact a run produces."""

    config: dict[str, str]
    dataset_fingerprint: str
    seed: int
    code_version: str = CODE_VERSION
    created_at: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        return cls(**data)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def short_hash(self) -> str:
        """Stable content hash used to stamp result rows with their provenance."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]
