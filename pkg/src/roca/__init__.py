"""roca: robust contrastive one-class anomaly detection for time series.

Train a one-class detector directly on contaminated data: an alternating
scheme re-estimates which training windows look anomalous and turns them into
negatives via an outlier-exposure term, while a variance hinge keeps the
projection space from collapsing.  Includes the training pipeline, scoring and
thresholding, point/segment evaluation metrics, and a benchmark harness CLI
(`roca prepare/train/eval/sweep/report`).
"""

from .config import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    SeriesSpec,
    TrainConfig,
    VariantId,
    derive_streams,
    load_config,
    load_experiment,
)
from .data import (
    AugmentationParams,
    ContaminationPlan,
    DataError,
    RawSeries,
    WindowedDataset,
    augment,
    inject_contamination,
    make_windows,
    normalize,
)
from .inference import ScoreSeries, expand_to_points, score, select_threshold, top1_rule
from .losses import (
    BoundProbe,
    ContractViolation,
    LossReport,
    bound_probe,
    invariance_term,
    joint_loss,
    oe_term,
    soft_boundary_term,
    total_loss,
    training_score,
    variance_term,
)
from .metrics import (
    EvalOutcome,
    aggregate,
    pa_scores,
    pak_scores,
    pw_scores,
    ras_baseline,
    rpa_scores,
    segments,
)
from .model import EncoderSpec, RocaNet, build_model, compute_center, load_checkpoint, save_checkpoint
from .training import TrainingAbort, TrainState, estimate_labels, fit

__version__ = "0.1.0"
