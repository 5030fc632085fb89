"""Test-then-train driver and the statistics computed from its traces:
Sample Restoration, the one-sided Wilcoxon signed-rank test and Gaussian
smoothing of learning curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Any, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .detectors import FHDDM, Signal, StabilizationWindow
from .ensembles import EnsembleModel
from .exceptions import InsufficientDataError, ValidationError
from .scheduler import SchedulerState
from .stream import StreamSource, inject_label_noise, oversample_chunk

__all__ = [
    "ChunkTrace",
    "RunRecord",
    "SREntry",
    "SRReport",
    "TRACE_COLUMNS",
    "test_then_train_run",
    "segment_runs",
    "sample_restoration",
    "sr_report",
    "match_segments",
    "wilcoxon_one_sided_signed_rank",
    "gaussian_kernel",
    "gaussian_smooth",
    "write_trace_csv",
    "read_trace_csv",
]

TRACE_COLUMNS = (
    "run_id",
    "chunk_index",
    "chunk_size",
    "accuracy",
    "drift_detected",
    "stabilization_detected",
    "cumulative_samples",
)


@dataclass(frozen=True)
class ChunkTrace:
    chunk_index: int
    chunk_size: int
    accuracy: float
    drift_detected: bool
    stabilization_detected: bool
    samples_consumed_cumulative: int
    # size the scheduler asked for; larger than chunk_size only when the
    # stream ran out
    requested_size: Optional[int] = None

    def __post_init__(self):
        if self.requested_size is None:
            object.__setattr__(self, "requested_size", self.chunk_size)


@dataclass
class RunRecord:
    traces: list[ChunkTrace]
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    ground_truth_drifts: list[int] = field(default_factory=list)
    run_id: str = "run"
    # size of the initial train-only chunk
    warmup_size: int = 0

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([t.accuracy for t in self.traces], dtype=float)

    @property
    def chunk_sizes(self) -> np.ndarray:
        return np.array([t.chunk_size for t in self.traces], dtype=np.int64)

    @property
    def drift_indices(self) -> list[int]:
        return [i for i, t in enumerate(self.traces) if t.drift_detected]

    @property
    def samples_consumed(self) -> int:
        return self.warmup_size + int(self.chunk_sizes.sum())


def test_then_train_run(
    stream: StreamSource,
    ensemble: EnsembleModel,
    fhddm: FHDDM,
    vsdm: StabilizationWindow,
    scheduler: SchedulerState,
    car_enabled: bool = True,
    *,
    noise_fraction: float = 0.0,
    oversample: bool = False,
    stabilization_enabled: bool = True,
    seed: Optional[int] = None,
    run_id: str = "run",
    config: Optional[dict] = None,
) -> RunRecord:
    """Consume ``stream`` chunk by chunk, testing before training.

    The first chunk (base size) only trains the model. For every later chunk
    the current ensemble is scored sample by sample; outcomes feed the drift
    detector and the chunk accuracy feeds the stabilization detector. With
    ``car_enabled`` the scheduler then picks the next chunk size, otherwise
    the base size is kept. Stabilization windows are cleared on drift.

    ``noise_fraction`` flips that share of labels in every chunk before use;
    ``oversample`` balances classes of the training copy of each chunk.
    """
    if stream.remaining == 0:
        raise ValidationError("stream is empty")
    rng = np.random.default_rng(seed)
    base = scheduler.config.chunk_size

    def pull(size: int, index: int):
        chunk = stream.next_chunk(size, index=index)
        if chunk is not None and noise_fraction > 0:
            chunk = inject_label_noise(chunk, noise_fraction, rng, stream.n_classes)
        return chunk

    def train(chunk) -> None:
        if oversample:
            chunk = oversample_chunk(chunk, rng)
        ensemble.process_chunk(chunk)

    first = pull(base, 0)
    train(first)
    cumulative = first.size
    traces: list[ChunkTrace] = []
    size = base
    t = 1
    while (chunk := pull(size, t)) is not None:
        correct = ensemble.predict(chunk.X) == chunk.y
        acc = float(correct.mean())
        stabilized = stabilization_enabled and vsdm.update(acc) is Signal.STABILIZED
        drift = bool(fhddm.update_many(correct))
        if drift:
            vsdm.reset()
        cumulative += chunk.size
        traces.append(ChunkTrace(t, chunk.size, acc, drift, stabilized, cumulative, size))
        size = scheduler.next_chunk_size(drift, stabilized) if car_enabled else base
        train(chunk)
        t += 1
    return RunRecord(
        traces=traces,
        config=dict(config or {}),
        seed=seed,
        ground_truth_drifts=list(stream.ground_truth_drifts),
        run_id=run_id,
        warmup_size=first.size,
    )


# keep pytest from collecting the driver when it is imported into test modules
test_then_train_run.__test__ = False


def segment_runs(record: RunRecord) -> list[tuple[int, int]]:
    """Half-open trace-position intervals, each starting at a detected drift
    and ending at the next detection or at the end of the record."""
    starts = record.drift_indices
    ends = starts[1:] + [len(record.traces)]
    return list(zip(starts, ends))


@dataclass(frozen=True)
class SREntry:
    segment_start: int
    segment_end: int
    start_sample: int
    detection_sample: int
    t_min: int
    r: float
    t_r: int
    sr: int
    p: float


@dataclass
class SRReport:
    entries: list[SREntry]
    p: float

    @property
    def values(self) -> np.ndarray:
        return np.array([e.sr for e in self.entries], dtype=float)

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.entries else math.nan

    @property
    def std(self) -> float:
        return float(self.values.std()) if self.entries else math.nan


def sample_restoration(
    accuracies: Sequence[float], chunk_sizes: Sequence[int], p: float
) -> tuple[int, int, float, int]:
    """Samples needed after a drift to regain fraction ``p`` of the best
    accuracy reached after the post-drift minimum.

    Returns ``(SR, t_min, r, t_r)``.
    """
    acc = np.asarray(accuracies, dtype=float)
    sizes = np.asarray(chunk_sizes, dtype=np.int64)
    if acc.size == 0:
        raise ValidationError("segment must contain at least one chunk")
    if sizes.shape != acc.shape:
        raise ValidationError("accuracies and chunk_sizes must have equal length")
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p must lie in (0, 1), got {p}")
    t_min = int(np.argmin(acc))
    tail = acc[t_min:]
    r = p * float(tail.max())
    t_r = t_min + int(np.flatnonzero(tail >= r)[0])
    return int(sizes[: t_r + 1].sum()), t_min, r, t_r


def sr_report(record: RunRecord, p: float) -> SRReport:
    acc, sizes = record.accuracies, record.chunk_sizes
    entries = []
    for start, end in segment_runs(record):
        sr, t_min, r, t_r = sample_restoration(acc[start:end], sizes[start:end], p)
        detected_at = record.traces[start].samples_consumed_cumulative
        entries.append(
            SREntry(start, end, detected_at - int(sizes[start]), detected_at, t_min, r, t_r, sr, p)
        )
    return SRReport(entries, p)


def match_segments(
    report: SRReport,
    ground_truth_drifts: Sequence[int],
    lead: int = 0,
) -> list[Optional[SREntry]]:
    """Assign at most one segment to each real drift.

    Drift ``k`` owns the detections whose chunk ends in
    ``[g_k - lead, g_{k+1} - lead)``; the first such segment is taken. Without
    ground truth, segments are returned in order of detection.
    """
    if not ground_truth_drifts:
        return list(report.entries)
    bounds = [g - lead for g in ground_truth_drifts] + [math.inf]
    matched: list[Optional[SREntry]] = []
    for k in range(len(ground_truth_drifts)):
        lo, hi = bounds[k], bounds[k + 1]
        hit = None
        for e in report.entries:
            if lo <= e.detection_sample < hi:
                hit = e
                break
        matched.append(hit)
    return matched


def _exact_lower_tail(ranks2: np.ndarray, observed2: int) -> float:
    """P(W+ <= observed) under the symmetric null, ranks given doubled so
    that average ranks stay integral."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    reach = 0
    for r in ranks2.tolist():
        counts[r : reach + r + 1] = counts[r : reach + r + 1] + counts[: reach + 1]
        reach += r
    favourable = sum(counts[: observed2 + 1])
    return float(favourable / (2 ** len(ranks2)))


def wilcoxon_one_sided_signed_rank(x, y, exact_max_n: int = 25) -> tuple[float, float]:
    """One-sided paired test of ``H1: x < y``.

    Zero differences are dropped and ties share average ranks. The statistic
    is the rank sum of positive differences ``x - y``, small under ``H1``.
    The p-value is exact (enumerated through the rank-sum distribution) for
    ``n <= exact_max_n`` and uses the tie-corrected normal approximation
    otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D samples of equal length")
    d = x - y
    d = d[d != 0]
    n = d.size
    if n < 5:
        raise InsufficientDataError(
            f"need at least 5 non-zero paired differences, got {n}"
        )
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        return w_plus, _exact_lower_tail(ranks2, int(round(2 * w_plus)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w_plus - mean) / math.sqrt(var)
    return w_plus, NormalDist().cdf(z)


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(series: Sequence[float], sigma: float = 1.0) -> np.ndarray:
    """1-D Gaussian filter (kernel truncated at 4 sigma, reflected edges)."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise ValidationError("series must not be empty")
    k = gaussian_kernel(sigma)
    radius = k.size // 2
    padded = s
    # reflect repeatedly when the kernel is wider than the series
    while padded.size < s.size + 2 * radius:
        need = min(radius, padded.size)
        padded = np.pad(padded, need, mode="symmetric")
    extra = (padded.size - s.size) // 2 - radius
    padded = padded[extra : padded.size - extra] if extra > 0 else padded
    return np.convolve(padded, k, mode="valid")


def write_trace_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in record.traces:
            w.writerow(
                [
                    record.run_id,
                    t.chunk_index,
                    t.chunk_size,
                    repr(t.accuracy),
                    int(t.drift_detected),
                    int(t.stabilization_detected),
                    t.samples_consumed_cumulative,
                ]
            )
    return path


def read_trace_csv(path, **record_fields: Any) -> RunRecord:
    path = Path(path)
    traces = []
    run_id = path.stem
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing trace columns {sorted(missing)}")
        for row_no, row in enumerate(reader, start=2):
            try:
                run_id = row["run_id"]
                traces.append(
                    ChunkTrace(
                        int(row["chunk_index"]),
                        int(row["chunk_size"]),
                        float(row["accuracy"]),
                        bool(int(row["drift_detected"])),
                        bool(int(row["stabilization_detected"])),
                        int(row["cumulative_samples"]),
                    )
                )
            except ValueError:
                raise ValidationError(f"{path}: malformed trace row {row_no}") from None
    warmup = 0
    if traces:
        warmup = traces[0].samples_consumed_cumulative - traces[0].chunk_size
    record_fields.setdefault("run_id", run_id)
    record_fields.setdefault("warmup_size", warmup)
    return RunRecord(traces=traces, **record_fields)
