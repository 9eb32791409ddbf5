"""Session fixtures for the desk-scale experiments the acceptance tests share.

Two small synthetic subsets (one with pattern-only test events, one mixing
point spikes in) and cached training matrices over detector variant x
training-pollution rate x seed.  Every run is deterministic in its seed, so
the cached numbers are stable across invocations on the same versions.
"""

import dataclasses
import sys
import time
from types import SimpleNamespace

import numpy as np
import pytest

from roca import cli
from roca.config import VariantId, parse_experiment
from roca.inference import score


@pytest.fixture(scope="session")
def emit(request):
    """Write a line to the live terminal regardless of capture mode.

    Output capture redirects file descriptor 1 itself, so even
    ``sys.__stdout__`` ends up captured; the terminal reporter keeps a
    handle on the real terminal for progress output, and the acceptance
    scoreboard rides on that."""
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def _emit(line: str) -> None:
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line, file=sys.__stdout__, flush=True)

    return _emit

SEEDS = tuple(range(10))

# The waveform periods divide the window length, so every clean window shows
# the same two-tone shape up to noise; that keeps the normal class compact and
# lets the latent labels concentrate on genuinely corrupted windows.  The
# center stays live (recomputed over the full set each epoch, freeze only at
# the end) so scores are always measured against the current representation.
_DESK_TEMPLATE = """\
profile = synthetic
name = desk
variant = ROCA
contamination_ratio = 0.1
pollution_rate = 0.0
synth_anomaly_fraction = 0.02
synth_event_kinds = {event_kinds}
injection_kinds = pattern
synth_periods = 16, 8
synth_amplitudes = 1.0, 0.6
epochs = 25
center_mode = full
center_freeze_epoch = 25
seed = 0
"""


def _build_bundle(tmp_path_factory, dirname: str, event_kinds: str) -> SimpleNamespace:
    t0 = time.perf_counter()
    exp = parse_experiment(_DESK_TEMPLATE.format(event_kinds=event_kinds))
    out = tmp_path_factory.mktemp(dirname)
    cli._prepare_synthetic(exp, 0, out, force=True)
    subset = cli._load_subset(out / "desk")
    return SimpleNamespace(exp=exp, subset=subset, seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def pattern_subset(tmp_path_factory):
    """Desk subset whose test events are all pattern distortions — the same
    family the pollution injector uses, so training contamination is
    genuinely absorbable by a non-robust detector."""
    return _build_bundle(tmp_path_factory, "desk-pattern", "pattern")


@pytest.fixture(scope="session")
def mixed_subset(tmp_path_factory):
    """Desk subset mixing point spikes and pattern distortions in test."""
    return _build_bundle(tmp_path_factory, "desk-mixed", "point_global, pattern")


@dataclasses.dataclass
class TrainedRun:
    """One full training + evaluation pass, with the bookkeeping the
    long-horizon checks inspect afterwards."""

    seed: int
    f1: float                # reduced point-adjusted F1 at the searched tau
    tau: float
    epochs_run: int
    history: dict            # epoch-mean loss / similarity curves
    mask: np.ndarray         # which training windows were corrupted
    label_log: list          # (epoch, batch, row indices labeled anomalous)


def train_and_score(bundle, variant: str, pollution: float, seed: int,
                    nu: float | None = None) -> TrainedRun:
    exp = dataclasses.replace(bundle.exp, pollution_rate=pollution)
    if nu is not None:
        exp = dataclasses.replace(
            exp, train=dataclasses.replace(exp.train, contamination_ratio=nu)
        )
    model, state, mask, _ = cli.run_training(
        exp, VariantId(variant), seed, bundle.subset["train"], val_ds=bundle.subset["val"]
    )
    scores = score(model, bundle.subset["test"])
    _, _, f1, tau, _ = cli.evaluate_model(scores, bundle.subset, "rpa", "search-test")
    return TrainedRun(
        seed=seed,
        f1=f1,
        tau=tau,
        epochs_run=state.epochs_run,
        history=state.history,
        mask=mask,
        label_log=state.label_log,
    )


def _train_matrix(bundle, combos) -> SimpleNamespace:
    t0 = time.perf_counter()
    runs = {
        (variant, pollution): [
            train_and_score(bundle, variant, pollution, seed) for seed in SEEDS
        ]
        for variant, pollution in combos
    }
    seconds = bundle.seconds + time.perf_counter() - t0
    return SimpleNamespace(runs=runs, seconds=seconds)


@pytest.fixture(scope="session")
def pattern_matrix(pattern_subset):
    """ROCA and COCA at pollution 0 / 0.05 / 0.10, ten seeds each (60 runs)."""
    combos = [(v, pr) for v in ("ROCA", "COCA") for pr in (0.0, 0.05, 0.10)]
    return _train_matrix(pattern_subset, combos)


@pytest.fixture(scope="session")
def mixed_matrix(mixed_subset):
    """ROCA and COCA on clean training only, ten seeds each (20 runs)."""
    return _train_matrix(mixed_subset, [("ROCA", 0.0), ("COCA", 0.0)])


@pytest.fixture(scope="session")
def label_recovery_runs(pattern_subset):
    """ROCA with the assumed contamination matched to the true pollution
    (both 5%), ten seeds — the setting for checking how precisely the final
    epoch's latent labels land on the actually corrupted windows."""
    t0 = time.perf_counter()
    runs = [train_and_score(pattern_subset, "ROCA", 0.05, seed, nu=0.05) for seed in SEEDS]
    seconds = pattern_subset.seconds + time.perf_counter() - t0
    return SimpleNamespace(runs=runs, seconds=seconds)
