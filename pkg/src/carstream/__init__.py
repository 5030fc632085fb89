"""Chunk-Adaptive Restoration for chunk-based data stream classifiers.

Shrinks the chunk size after a detected concept drift, regrows it
geometrically, and snaps back to the base size once per-chunk accuracy has
stabilized; plus the test-then-train machinery used to measure how many
samples a model needs to recover after a drift.
"""

from .detectors import FHDDM, Signal, StabilizationWindow, hoeffding_bound
from .ensembles import EnsembleConfig, EnsembleModel, Strategy
from .evaluation import (
    ChunkTrace,
    RunRecord,
    SRReport,
    gaussian_smooth,
    sample_restoration,
    segment_runs,
    sr_report,
    test_then_train_run,
    wilcoxon_one_sided_signed_rank,
)
from .exceptions import InsufficientDataError, UntrainedModelError, ValidationError
from .experiment import ExperimentConfig, emit_report, load_config, run_experiment
from .learners import LearnerKind, LearnerSpec, fit_batch
from .scheduler import SchedulerConfig, SchedulerState, restore_steps
from .stream import (
    Chunk,
    DriftType,
    StreamSource,
    SyntheticStreamSpec,
    generate_synthetic_stream,
    load_dataset_stream,
)

__version__ = "0.1.0"
