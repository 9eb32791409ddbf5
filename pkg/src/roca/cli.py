"""Benchmark harness: prepare / train / eval / sweep / report.

Every artifact-producing command writes a manifest next to its outputs, and
every table row carries the short hash of the manifest that produced it.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 training abort.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchmarks as B
from . import inference as I
from . import metrics as M
from .config import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    SeriesSpec,
    VariantId,
    config_snapshot,
    derive_streams,
    load_experiment,
)
from .data import (
    AugmentationParams,
    ContaminationPlan,
    DataError,
    RawSeries,
    WindowedDataset,
    augment,
    fingerprint,
    inject_contamination,
    load_windowed,
    make_windows,
    normalize,
    save_windowed,
    split_validation,
)
from .model import EncoderSpec, build_model, load_checkpoint, save_checkpoint
from .synthetic import (
    SyntheticSpec,
    generate_clean,
    inject_series_anomalies,
    load_series_text,
    save_mask,
    save_series_text,
)
from .training import TrainingAbort, fit, round_half_away

__all__ = [
    "main",
    "cmd_prepare",
    "cmd_train",
    "cmd_eval",
    "cmd_sweep",
    "cmd_report",
    "SweepSpec",
    "run_training",
    "evaluate_model",
]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

RESULT_COLUMNS = (
    "detector", "name", "metric", "seed", "precision", "recall", "f1",
    "n_segments", "tau", "threshold_mode", "manifest",
)

SWEEP_PARAMS = {
    "mu": ("train", "oe_weight"),
    "nu": ("train", "contamination_ratio"),
    "lambda": ("train", "variance_weight"),
    "pr": ("exp", "pollution_rate"),
}


# ---------------------------------------------------------------------------
# small IO helpers
# ---------------------------------------------------------------------------

def _write_tsv(path: Path, header: tuple[str, ...], rows: list[tuple]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(header)
        writer.writerows(rows)


def _read_tsv(path: Path) -> list[dict[str, str]]:
    if not path.exists():
        raise DataError(f"table not found: {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def _mean_std(values: np.ndarray) -> str:
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return f"{100 * mean:.2f}±{100 * std:.2f}"


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def _subset_meta(
    name: str, spec: SeriesSpec, train: RawSeries, val: RawSeries | None, test: RawSeries,
    datasets: dict[str, WindowedDataset], seed: int, n_events: int,
) -> dict:
    meta = {
        "name": name,
        "dim": spec.dim,
        "window_length": spec.window_length,
        "time_step": spec.time_step,
        "train_length": train.length,
        "val_length": val.length if val is not None else 0,
        "test_length": test.length,
        "n_test_events": n_events,
        "seed": seed,
        "fingerprints": {k: fingerprint(ds) for k, ds in datasets.items()},
    }
    return meta


def _write_subset(
    out_dir: Path, meta: dict, series: dict[str, RawSeries],
    datasets: dict[str, WindowedDataset], manifest: RunManifest, force: bool,
) -> bool:
    """Write one prepared subset; returns False when it was already up to date."""
    meta_path = out_dir / "meta.json"
    if meta_path.exists() and not force:
        try:
            existing = json.loads(meta_path.read_text())
        except (OSError, json.JSONDecodeError):
            existing = None
        if existing is not None and existing.get("fingerprints") == meta["fingerprints"]:
            return False
    out_dir.mkdir(parents=True, exist_ok=True)
    for part, ds in datasets.items():
        save_windowed(ds, out_dir / f"{part}.npz")
    for part, raw in series.items():
        save_series_text(raw, out_dir / f"{part}_series.tsv")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    manifest.write(out_dir / "manifest.json")
    return True


def _prepare_synthetic(exp: ExperimentConfig, seed: int, out_root: Path, force: bool) -> list[str]:
    spec = exp.series
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(0xD0,))
    train_rng, test_rng, event_rng = (np.random.default_rng(c) for c in ss.spawn(3))

    synth = SyntheticSpec(
        length=exp.synth_train_length,
        dim=spec.dim,
        periods=exp.synth_periods,
        amplitudes=exp.synth_amplitudes,
        noise_sigma=exp.synth_noise_sigma,
    )
    train_full = generate_clean(synth, train_rng)
    if exp.synth_val_fraction > 0:
        train_raw, val_raw = split_validation(train_full, exp.synth_val_fraction)
        if val_raw.length < spec.window_length:
            train_raw, val_raw = train_full, None
    else:
        train_raw, val_raw = train_full, None

    test_clean = generate_clean(
        dataclasses.replace(synth, length=exp.synth_test_length), test_rng
    )
    n_test_windows = (test_clean.length - spec.window_length) // spec.time_step + 1
    n_events = max(1, round_half_away(exp.synth_anomaly_fraction * n_test_windows))
    span = (max(2, spec.window_length // 2), spec.window_length * 3 // 2)
    test_raw, events = inject_series_anomalies(
        test_clean, n_events, exp.synth_event_kinds, event_rng, span_range=span
    )

    train_norm, stats = normalize(train_raw)
    series = {"train": train_norm, "test": normalize(test_raw, stats)[0]}
    if val_raw is not None:
        series["val"] = normalize(val_raw, stats)[0]
    datasets = {part: make_windows(raw, spec) for part, raw in series.items()}

    meta = _subset_meta(
        spec.name, spec, train_raw, val_raw, test_raw, datasets, seed, len(events)
    )
    manifest = RunManifest(
        config=config_snapshot(exp),
        dataset_fingerprint=meta["fingerprints"]["train"],
        seed=seed,
        extra={"command": "prepare", "kind": "synthetic", "events": len(events)},
    )
    wrote = _write_subset(out_root / spec.name, meta, series, datasets, manifest, force)
    print(f"{spec.name}: {'written' if wrote else 'up to date'} ({len(events)} test events)")
    return [spec.name]


def _prepare_benchmark(
    exp: ExperimentConfig, name: str, root: Path, seed: int, out_root: Path, force: bool
) -> list[str]:
    written = []
    for subset in B.load_benchmark(name, root):
        spec = subset.spec
        try:
            train_raw, val_raw = split_validation(subset.train, exp.synth_val_fraction)
            if val_raw.length < spec.window_length:
                train_raw, val_raw = subset.train, None
        except DataError:
            train_raw, val_raw = subset.train, None
        train_norm, stats = normalize(train_raw)
        series = {"train": train_norm, "test": normalize(subset.test, stats)[0]}
        if val_raw is not None:
            series["val"] = normalize(val_raw, stats)[0]
        datasets = {part: make_windows(raw, spec) for part, raw in series.items()}
        n_events = (
            len(M.segments(subset.test.point_labels))
            if subset.test.point_labels is not None
            else 0
        )
        meta = _subset_meta(
            subset.name, spec, train_raw, val_raw, subset.test, datasets, seed, n_events
        )
        manifest = RunManifest(
            config=config_snapshot(exp),
            dataset_fingerprint=meta["fingerprints"]["train"],
            seed=seed,
            extra={"command": "prepare", "kind": name, "subset": subset.name},
        )
        wrote = _write_subset(out_root / subset.name, meta, series, datasets, manifest, force)
        print(f"{subset.name}: {'written' if wrote else 'up to date'}")
        written.append(subset.name)
    return written


def cmd_prepare(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    seed = args.seed if args.seed is not None else exp.train.seed
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    if args.benchmark:
        if not args.root:
            raise ConfigError("--benchmark requires --root")
        _prepare_benchmark(exp, args.benchmark, Path(args.root), seed, out_root, args.force)
    else:
        _prepare_synthetic(exp, seed, out_root, args.force)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_subset(data_dir: Path) -> dict:
    meta_path = data_dir / "meta.json"
    if not meta_path.exists():
        raise DataError(
            f"{data_dir} is not a prepared subset (no meta.json); run `roca prepare` first"
        )
    meta = json.loads(meta_path.read_text())
    out = {"meta": meta, "train": load_windowed(data_dir / "train.npz")}
    out["val"] = load_windowed(data_dir / "val.npz") if (data_dir / "val.npz").exists() else None
    out["test"] = load_windowed(data_dir / "test.npz") if (data_dir / "test.npz").exists() else None
    for part in ("val", "test"):
        series_path = data_dir / f"{part}_series.tsv"
        out[f"{part}_points"] = (
            load_series_text(series_path).point_labels if series_path.exists() else None
        )
    return out


def run_training(
    exp: ExperimentConfig,
    variant: VariantId,
    seed: int,
    train_ds: WindowedDataset,
    val_ds: WindowedDataset | None = None,
    log_path: Path | None = None,
):
    """Contaminate -> augment -> build -> fit. Returns (model, state, mask, train_fp)."""
    cfg = dataclasses.replace(exp.train, seed=seed)
    streams = derive_streams(seed)
    mask = np.zeros(len(train_ds), dtype=bool)
    if exp.pollution_rate > 0:
        plan = ContaminationPlan(exp.pollution_rate, exp.injection_kinds)
        train_ds, mask = inject_contamination(train_ds, plan, streams.contaminate)
    if exp.augment:
        params = AugmentationParams(exp.jitter_sigma, (exp.scale_min, exp.scale_max))
        train_ds = augment(train_ds, params, streams.augment)
        mask = np.tile(mask, 3)
    train_fp = fingerprint(train_ds)
    model = build_model(EncoderSpec.from_config(exp.series, cfg), streams.init_seed)
    state = fit(model, train_ds, cfg, variant, val_ds=val_ds, streams=streams, log_path=log_path)
    return model, state, mask, train_fp


def _variant_from_args(exp: ExperimentConfig, args: argparse.Namespace) -> VariantId:
    if args.variant is None:
        return exp.variant
    r = args.soft_boundary_r
    if args.variant == "COCAS" and r is None:
        r = exp.variant.soft_boundary_r
        if r is None:
            raise ConfigError("--variant COCAS needs --soft-boundary-r (or one in the config)")
    return VariantId(args.variant, r if args.variant == "COCAS" else None)


def cmd_train(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    if args.pollution is not None:
        exp = dataclasses.replace(exp, pollution_rate=args.pollution)
    variant = _variant_from_args(exp, args)
    seed = args.seed if args.seed is not None else exp.train.seed
    data_dir = Path(args.data)
    subset = _load_subset(data_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model, state, mask, train_fp = run_training(
        exp, variant, seed, subset["train"], val_ds=subset["val"],
        log_path=out_dir / "train_log.tsv",
    )

    extra = {
        "variant": variant.kind,
        "soft_boundary_r": float(variant.soft_boundary_r or 0.0),
        "seed": seed,
        "series": subset["meta"]["name"],
        "epochs_run": state.epochs_run,
        "early_stopped": bool(state.early_stopped),
    }
    save_checkpoint(model, out_dir / "checkpoint.pt", extra=extra)
    save_mask(mask, out_dir / "injected_mask.txt")
    (out_dir / "train_state.json").write_text(
        json.dumps(
            {
                "epochs_run": state.epochs_run,
                "early_stopped": state.early_stopped,
                "history": state.history,
            },
            indent=2,
        )
        + "\n"
    )
    manifest = RunManifest(
        config=config_snapshot(exp),
        dataset_fingerprint=train_fp,
        seed=seed,
        extra={"command": "train", "variant": variant.kind, "series": subset["meta"]["name"]},
    )
    manifest.write(out_dir / "manifest.json")
    print(
        f"trained {variant.kind} seed={seed} epochs={state.epochs_run}"
        + (" (early stop)" if state.early_stopped else "")
        + f" -> {out_dir / 'checkpoint.pt'}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

# The tau search always maximizes point-adjusted F1, never the reported
# metric itself.  Segment-counting metrics (rpa) reward flagging the entire
# stream — one giant predicted segment overlaps some truth segment and the
# stray-segment FP count drops to zero — so optimizing them directly turns
# every scorer, including random ones, into a perfect detector.  The adjusted
# objective has no such failure mode (flag-everything costs all its
# precision), and one threshold per scorer keeps metric columns comparable.
SEARCH_OBJECTIVE = "pa"


def _test_series(scores: np.ndarray, subset: dict) -> I.ScoreSeries:
    truth = subset["test_points"]
    if truth is None:
        raise DataError("test stream has no point labels; cannot evaluate")
    return I.ScoreSeries.from_windows(scores, subset["test"], subset["meta"]["test_length"])


def choose_threshold(
    scores: np.ndarray,
    subset: dict,
    threshold_mode: str,
    *,
    val_scores: np.ndarray | None = None,
) -> tuple[float, str]:
    """One tau per scorer, shared by every reported metric; returns (tau, mode)."""
    if threshold_mode == "fixed":
        tau, info = I.select_threshold(scores)
        return tau, "fixed"
    if threshold_mode == "search-test":
        series = _test_series(scores, subset)
        objective = I.point_objective(SEARCH_OBJECTIVE, subset["test_points"], series)
        tau, info = I.select_threshold(scores, metric=SEARCH_OBJECTIVE, objective=objective)
    elif threshold_mode == "search-val":
        if val_scores is None or subset.get("val_points") is None:
            raise DataError("search-val needs a labeled validation stream")
        val_series = I.ScoreSeries.from_windows(
            val_scores, subset["val"], subset["meta"]["val_length"]
        )
        objective = I.point_objective(SEARCH_OBJECTIVE, subset["val_points"], val_series)
        tau, info = I.select_threshold(val_scores, metric=SEARCH_OBJECTIVE, objective=objective)
    else:
        raise ConfigError(f"unknown threshold mode {threshold_mode!r}")
    return tau, info.mode


def apply_threshold(
    scores: np.ndarray, subset: dict, metric: str, tau: float
) -> tuple[float, float, float]:
    """Expand decisions at ``tau`` and score one metric; returns (P, R, F1)."""
    series = _test_series(scores, subset)
    flags = I.decide(scores, tau)
    return I.metric_fn(metric)(subset["test_points"], series.expand(flags))


def evaluate_model(
    scores: np.ndarray,
    subset: dict,
    metric: str,
    threshold_mode: str,
    *,
    val_scores: np.ndarray | None = None,
) -> tuple[float, float, float, float, str]:
    """Threshold + expand + score one metric; returns (P, R, F1, tau, mode)."""
    if threshold_mode == "top1":
        series = _test_series(scores, subset)
        flags = I.top1_rule(scores)
        p, r, f1 = I.metric_fn(metric)(subset["test_points"], series.expand(flags))
        return p, r, f1, float("nan"), "top1"
    tau, used = choose_threshold(scores, subset, threshold_mode, val_scores=val_scores)
    p, r, f1 = apply_threshold(scores, subset, metric, tau)
    return p, r, f1, tau, used


def cmd_eval(args: argparse.Namespace) -> int:
    data_dir = Path(args.data)
    subset = _load_subset(data_dir)
    if subset["test"] is None or subset["test_points"] is None:
        raise DataError(f"{data_dir} has no labeled test stream")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for name in metric_names:
        I.metric_fn(name)  # validate early
    n_segments = len(M.segments(subset["test_points"]))
    name = subset["meta"]["name"]

    manifest = RunManifest(
        config={"metrics": ",".join(metric_names), "threshold": args.threshold},
        dataset_fingerprint=subset["meta"]["fingerprints"].get("test", ""),
        seed=args.seed,
        extra={"command": "eval", "series": name, "checkpoints": len(args.checkpoint)},
    )
    mhash = manifest.short_hash()

    rows: list[tuple] = []
    for ckpt_path in args.checkpoint:
        model, extra = load_checkpoint(ckpt_path)
        scores = I.score(model, subset["test"])
        seed = int(extra.get("seed", -1))
        if args.top1:
            for metric in metric_names:
                p, r, f1, tau, used = evaluate_model(scores, subset, metric, "top1")
                rows.append(
                    ("model", name, metric, seed, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}",
                     n_segments, f"{tau:.2f}", used, mhash)
                )
            continue
        val_scores = None
        if args.threshold == "search-val" and subset["val"] is not None:
            val_scores = I.score(model, subset["val"])
        tau, used = choose_threshold(scores, subset, args.threshold, val_scores=val_scores)
        for metric in metric_names:
            p, r, f1 = apply_threshold(scores, subset, metric, tau)
            rows.append(
                ("model", name, metric, seed, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}",
                 n_segments, f"{tau:.2f}", used, mhash)
            )

    ras_mode = "top1" if args.top1 else (
        args.threshold if args.threshold != "search-val" else "search-test"
    )
    for k in range(args.ras):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed + k, spawn_key=(0xBA5E,)))
        scores = M.ras_baseline(len(subset["test"]), rng)
        if ras_mode == "top1":
            tau, used = float("nan"), "top1"
        else:
            tau, used = choose_threshold(scores, subset, ras_mode)
        for metric in metric_names:
            if ras_mode == "top1":
                p, r, f1, tau, used = evaluate_model(scores, subset, metric, "top1")
            else:
                p, r, f1 = apply_threshold(scores, subset, metric, tau)
            rows.append(
                ("ras", name, metric, args.seed + k, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}",
                 n_segments, f"{tau:.2f}", used, mhash)
            )

    _write_tsv(out_dir / "results.tsv", RESULT_COLUMNS, rows)
    manifest.write(out_dir / "manifest.json")

    lines = [f"subset {name}: {n_segments} truth segments"]
    for detector in ("model", "ras"):
        for metric in metric_names:
            vals = np.array(
                [float(r[6]) for r in rows if r[0] == detector and r[2] == metric]
            )
            if vals.size:
                lines.append(f"  {detector:>6} {metric:>6} F1 = {_mean_std(vals)}  (n={vals.size})")
    summary = "\n".join(lines)
    (out_dir / "summary.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep: which knob, which values, how many seeded runs each."""

    param: str
    values: tuple[float, ...]
    reps: int = 10
    metric: str = "rpa"

    def __post_init__(self) -> None:
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(
                f"unknown sweep parameter {self.param!r}; supported: {sorted(SWEEP_PARAMS)}"
            )
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")


def _apply_sweep_value(exp: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    target, field_name = SWEEP_PARAMS[param]
    if target == "train":
        return dataclasses.replace(exp, train=dataclasses.replace(exp.train, **{field_name: value}))
    return dataclasses.replace(exp, **{field_name: value})


def _box_row(value: float, vals: np.ndarray) -> tuple:
    q1, med, q3 = (float(x) for x in np.percentile(vals, [25, 50, 75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inliers = vals[(vals >= lo_fence) & (vals <= hi_fence)]
    outliers = vals[(vals < lo_fence) | (vals > hi_fence)]
    return (
        f"{value:g}", vals.size,
        f"{inliers.min():.6f}", f"{q1:.6f}", f"{med:.6f}", f"{q3:.6f}", f"{inliers.max():.6f}",
        ",".join(f"{o:.6f}" for o in np.sort(outliers)) or "-",
    )


def cmd_sweep(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    spec = SweepSpec(
        param=args.param,
        values=tuple(float(v) for v in args.values.split(",") if v.strip()),
        reps=args.reps,
        metric=args.metric,
    )
    I.metric_fn(spec.metric)
    subset = _load_subset(Path(args.data))
    if subset["test"] is None or subset["test_points"] is None:
        raise DataError(f"{args.data} has no labeled test stream")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[tuple] = []
    n_failed = 0
    for value in spec.values:
        exp_v = _apply_sweep_value(exp, spec.param, value)
        for seed in range(spec.reps):
            manifest = RunManifest(
                config=config_snapshot(exp_v),
                dataset_fingerprint=subset["meta"]["fingerprints"]["train"],
                seed=seed,
                extra={"command": "sweep", "param": spec.param, "value": value},
            )
            try:
                model, state, _, _ = run_training(
                    exp_v, exp_v.variant, seed, subset["train"], val_ds=subset["val"]
                )
                scores = I.score(model, subset["test"])
                _, _, f1, tau, used = evaluate_model(
                    scores, subset, spec.metric, args.threshold
                )
                rows.append(
                    (spec.param, f"{value:g}", seed, f"{f1:.6f}", "ok", manifest.short_hash())
                )
                print(f"{spec.param}={value:g} seed={seed}: {spec.metric} F1={f1:.4f}")
            except (TrainingAbort, DataError, ConfigError) as exc:
                n_failed += 1
                rows.append((spec.param, f"{value:g}", seed, "nan", f"failed: {exc}", manifest.short_hash()))
                print(f"{spec.param}={value:g} seed={seed}: FAILED ({exc})", file=sys.stderr)

    _write_tsv(out_dir / "sweep.tsv", ("param", "value", "seed", "f1", "status", "manifest"), rows)

    box_rows, mean_rows = [], []
    for value in spec.values:
        vals = np.array(
            [float(r[3]) for r in rows if r[1] == f"{value:g}" and r[4] == "ok"]
        )
        if vals.size:
            box_rows.append(_box_row(value, vals))
            std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            mean_rows.append((f"{value:g}", vals.size, f"{vals.mean():.6f}", f"{std:.6f}"))
    _write_tsv(
        out_dir / "sweep_box.tsv",
        ("value", "n", "min", "q1", "median", "q3", "max", "outliers"),
        box_rows,
    )
    _write_tsv(out_dir / "sweep_mean.tsv", ("value", "n", "mean_f1", "std_f1"), mean_rows)

    if rows and all(r[4] != "ok" for r in rows):
        print("sweep: every run failed", file=sys.stderr)
        return EXIT_TRAINING
    if n_failed:
        print(f"sweep: {n_failed} runs failed (recorded in sweep.tsv)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args: argparse.Namespace) -> int:
    lines: list[str] = []
    if args.results:
        rows = []
        for path in args.results:
            rows.extend(_read_tsv(Path(path)))
        if not rows:
            raise DataError("no result rows found")
        names = sorted({r["name"] for r in rows})
        metrics_seen = sorted({r["metric"] for r in rows})
        detectors = sorted({r["detector"] for r in rows})
        lines.append(f"results over {len(names)} subset(s), {len(rows)} rows")
        header = f"{'detector':>8} {'metric':>6} {'F1 mean±std':>16} {'n':>4}"
        lines.append(header)
        for detector in detectors:
            for metric in metrics_seen:
                vals = np.array(
                    [float(r["f1"]) for r in rows if r["detector"] == detector and r["metric"] == metric]
                )
                if vals.size:
                    lines.append(f"{detector:>8} {metric:>6} {_mean_std(vals):>16} {vals.size:>4}")
        if len(names) > 1:
            lines.append("")
            lines.append("segment-weighted aggregate F1 (per-subset mean F1, weighted by segments):")
            for detector in detectors:
                for metric in metrics_seen:
                    pairs = []
                    for name in names:
                        sub = [
                            r for r in rows
                            if r["detector"] == detector and r["metric"] == metric and r["name"] == name
                        ]
                        if sub:
                            pairs.append(
                                (int(sub[0]["n_segments"]), float(np.mean([float(r["f1"]) for r in sub])))
                            )
                    if pairs and sum(e for e, _ in pairs) > 0:
                        lines.append(
                            f"{detector:>8} {metric:>6} F1_entire = {M.aggregate(pairs):.4f}"
                        )
    if args.sweep:
        rows = _read_tsv(Path(args.sweep))
        lines.append(f"sweep over {rows[0]['param'] if rows else '?'}:")
        lines.append(f"{'value':>10} {'n_ok':>5} {'mean F1':>9} {'median':>9}")
        values = []
        for r in rows:
            if r["value"] not in values:
                values.append(r["value"])
        for value in values:
            vals = np.array([float(r["f1"]) for r in rows if r["value"] == value and r["status"] == "ok"])
            if vals.size:
                lines.append(
                    f"{value:>10} {vals.size:>5} {vals.mean():>9.4f} {float(np.median(vals)):>9.4f}"
                )
            else:
                lines.append(f"{value:>10} {0:>5} {'-':>9} {'-':>9}")
    if not lines:
        raise ConfigError("report needs --results and/or --sweep")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roca",
        description="Robust contrastive one-class anomaly detection harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="generate or ingest a dataset into windowed artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--benchmark", choices=sorted(B.BENCHMARKS))
    p.add_argument("--root", help="benchmark root directory (with --benchmark)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--force", action="store_true", help="rewrite even if up to date")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model on a prepared subset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="prepared subset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=("ROCA", "COCA", "COCAS", "ROCA_NOV"), default=None)
    p.add_argument("--soft-boundary-r", type=float, default=None)
    p.add_argument("--pollution", type=float, default=None,
                   help="override the training-set pollution rate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a prepared subset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--metrics", default="pw,pa,rpa")
    p.add_argument("--threshold", choices=("search-test", "search-val", "fixed"),
                   default="search-test")
    p.add_argument("--top1", action="store_true",
                   help="flag only the single highest-scoring window")
    p.add_argument("--ras", type=int, default=0, metavar="N",
                   help="also evaluate N random-score baselines")
    p.add_argument("--seed", type=int, default=0, help="base seed for --ras")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/eval a grid over one parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--reps", type=int, default=10, help="seeded runs per value (seeds 0..reps-1)")
    p.add_argument("--metric", default="rpa")
    p.add_argument("--threshold", choices=("search-test", "fixed"), default="search-test")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize result/sweep tables")
    p.add_argument("--results", nargs="*", default=[])
    p.add_argument("--sweep", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAbort as exc:
        print(f"training aborted: {exc}\nsnapshot: {exc.snapshot}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
