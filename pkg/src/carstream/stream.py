"""Labeled sample streams: synthetic drifting generators, CSV-backed sources
and chunk-level transforms (label noise, random oversampling).

A stream is materialized up front as a pair of arrays and consumed through a
cursor, one chunk at a time. The arrays are marked read-only so that no
consumer can alter the underlying realization; transforms always return new
chunks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "DriftType",
    "Sample",
    "Chunk",
    "SyntheticStreamSpec",
    "ConceptParams",
    "StreamSource",
    "generate_synthetic_stream",
    "concept_mixture_weight",
    "drift_centers",
    "next_chunk",
    "inject_label_noise",
    "oversample_chunk",
    "load_dataset_stream",
    "read_drift_metadata",
]


class DriftType(str, Enum):
    ABRUPT = "abrupt"
    GRADUAL = "gradual"
    INCREMENTAL = "incremental"


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Chunk:
    """A contiguous block of labeled samples.

    ``X`` has shape ``(size, n_features)`` and ``y`` shape ``(size,)``.
    ``index`` is the 0-based chunk ordinal within its run.
    """

    X: np.ndarray
    y: np.ndarray
    index: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ValidationError(f"chunk features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValidationError(
                f"chunk labels shape {y.shape} does not match {X.shape[0]} samples"
            )
        if X.shape[0] < 1:
            raise ValidationError("chunk must contain at least one sample")
        if np.any(y < 0):
            raise ValidationError("labels must be non-negative class indices")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def samples(self) -> list[Sample]:
        return [Sample(self.X[i], int(self.y[i])) for i in range(self.size)]

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)


@dataclass
class SyntheticStreamSpec:
    """Parameters of a synthetic drifting stream.

    Defaults follow the experimental streams: two classes, 20 features of
    which 2 informative and 2 redundant, five drifts, sigmoid spacing 5.
    """

    n_samples: int = 150_000
    n_classes: int = 2
    n_features: int = 20
    n_informative: int = 2
    n_redundant: int = 2
    n_drifts: int = 5
    drift_type: DriftType = DriftType.ABRUPT
    recurring: bool = False
    sigmoid_spacing: float = 5.0
    seed: int = 0
    class_sep: float = 2.0
    transition_fraction: float = 0.1

    def __post_init__(self):
        try:
            self.drift_type = DriftType(self.drift_type)
        except ValueError:
            raise ValidationError(
                f"drift_type: unknown value {self.drift_type!r}, "
                f"expected one of {[d.value for d in DriftType]}"
            ) from None
        self.validate()

    def validate(self) -> None:
        if self.n_samples <= 0:
            raise ValidationError(f"n_samples must be > 0, got {self.n_samples}")
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.n_informative < 1:
            raise ValidationError(f"n_informative must be >= 1, got {self.n_informative}")
        if self.n_redundant < 0:
            raise ValidationError(f"n_redundant must be >= 0, got {self.n_redundant}")
        if self.n_informative + self.n_redundant > self.n_features:
            raise ValidationError(
                "n_informative + n_redundant must not exceed n_features "
                f"({self.n_informative} + {self.n_redundant} > {self.n_features})"
            )
        if self.n_classes > 2**self.n_informative:
            raise ValidationError(
                f"n_classes ({self.n_classes}) exceeds the {2 ** self.n_informative} "
                "hypercube vertices available for n_informative"
            )
        if self.n_drifts < 0:
            raise ValidationError(f"n_drifts must be >= 0, got {self.n_drifts}")
        if self.n_drifts >= self.n_samples:
            raise ValidationError("n_drifts must be smaller than n_samples")
        if not self.sigmoid_spacing > 0:
            raise ValidationError(f"sigmoid_spacing must be > 0, got {self.sigmoid_spacing}")
        if not 0 < self.transition_fraction <= 1:
            raise ValidationError("transition_fraction must lie in (0, 1]")


@dataclass
class ConceptParams:
    """One concept: class centroids in the informative subspace plus the
    linear map producing redundant features from informative ones."""

    centroids: np.ndarray  # (n_classes, n_informative)
    mixing: np.ndarray  # (n_redundant, n_informative)
    seed: int = 0

    def same_as(self, other: "ConceptParams") -> bool:
        return bool(np.array_equal(self.centroids, other.centroids))


def _draw_concept(spec: SyntheticStreamSpec, seed: int) -> ConceptParams:
    rng = np.random.default_rng(seed)
    k = spec.n_informative
    n_vertices = 2**k
    if n_vertices <= 1 << 20:
        picks = rng.choice(n_vertices, size=spec.n_classes, replace=False)
        bits = (picks[:, None] >> np.arange(k)[None, :]) & 1
    else:
        bits = rng.integers(0, 2, size=(spec.n_classes, k))
    centroids = spec.class_sep * (2.0 * bits - 1.0)
    mixing = rng.uniform(-1.0, 1.0, size=(spec.n_redundant, k))
    return ConceptParams(centroids=centroids, mixing=mixing, seed=seed)


def drift_centers(n_samples: int, n_drifts: int) -> list[int]:
    """Evenly spaced drift positions ``k * n_samples / (n_drifts + 1)``."""
    return [k * n_samples // (n_drifts + 1) for k in range(1, n_drifts + 1)]


def concept_mixture_weight(
    sample_index: int,
    drift_center: int,
    transition_width: int,
    spacing: float,
    drift_type: Union[DriftType, str],
) -> float:
    """Share of the incoming concept at ``sample_index``.

    Abrupt drift is a step at ``drift_center``. Gradual and incremental drift
    use the logistic ``1 / (1 + exp(-spacing * x))`` with
    ``x = (sample_index - drift_center) / (transition_width / 2)``.
    """
    drift_type = DriftType(drift_type)
    if drift_type is DriftType.ABRUPT:
        return 1.0 if sample_index >= drift_center else 0.0
    if transition_width <= 0:
        raise ValidationError("transition_width must be > 0 for sigmoid drifts")
    x = (sample_index - drift_center) / (transition_width / 2.0)
    z = -spacing * x
    # guard exp overflow far from the center
    if z > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def _mixture_weights(
    index: np.ndarray, center: np.ndarray, width: int, spacing: float
) -> np.ndarray:
    x = (index - center) / (width / 2.0)
    return 1.0 / (1.0 + np.exp(np.clip(-spacing * x, -700.0, 700.0)))


class StreamSource:
    """Pull-based, finite source of labeled samples.

    Parameters
    ----------
    X, y:
        The full sample sequence. Copied into read-only arrays.
    n_classes:
        Number of classes; inferred as ``max(y) + 1`` when omitted.
    ground_truth_drifts:
        Sample indices at which real drift transitions are centered.
    concepts:
        Optional per-sample concept identifier (synthetic streams only).
    """

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        n_classes: Optional[int] = None,
        ground_truth_drifts: Sequence[int] = (),
        concepts: Optional[np.ndarray] = None,
        spec: Optional[SyntheticStreamSpec] = None,
        name: str = "stream",
    ):
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValidationError("stream arrays must be X (n, d) and y (n,)")
        if X.shape[0] == 0:
            raise ValidationError("stream must contain at least one sample")
        if np.any(y < 0):
            raise ValidationError("labels must be non-negative class indices")
        inferred = int(y.max()) + 1
        if n_classes is None:
            n_classes = inferred
        elif inferred > n_classes:
            raise ValidationError(f"label {inferred - 1} is not below n_classes={n_classes}")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.n_classes = int(n_classes)
        self.ground_truth_drifts = [int(d) for d in ground_truth_drifts]
        if concepts is not None:
            concepts = np.array(concepts)
            concepts.setflags(write=False)
        self.concepts = concepts
        self.spec = spec
        self.name = name
        self.cursor = 0

    @property
    def n_samples(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def remaining(self) -> int:
        return self.n_samples - self.cursor

    def next_chunk(self, requested_size: int, index: int = 0) -> Optional[Chunk]:
        """Return the next ``min(requested_size, remaining)`` samples, or
        ``None`` once the stream is exhausted."""
        if requested_size < 1:
            raise ValidationError(f"requested_size must be >= 1, got {requested_size}")
        if self.cursor >= self.n_samples:
            return None
        stop = min(self.cursor + int(requested_size), self.n_samples)
        chunk = Chunk(self.X[self.cursor:stop], self.y[self.cursor:stop], index=index)
        self.cursor = stop
        return chunk

    def fork(self) -> "StreamSource":
        """A fresh source over the same realization, positioned at the start."""
        src = StreamSource.__new__(StreamSource)
        src.__dict__.update(self.__dict__)
        src.cursor = 0
        return src

    def __repr__(self) -> str:
        return (
            f"StreamSource(name={self.name!r}, n_samples={self.n_samples}, "
            f"n_features={self.n_features}, cursor={self.cursor})"
        )


def next_chunk(source: StreamSource, requested_size: int, index: int = 0) -> Optional[Chunk]:
    return source.next_chunk(requested_size, index=index)


def _concept_sequence(spec: SyntheticStreamSpec, seeds: Sequence[int]) -> list[ConceptParams]:
    n_segments = spec.n_drifts + 1
    if spec.recurring:
        a = _draw_concept(spec, seeds[0])
        b = _draw_concept(spec, seeds[1])
        attempt = 2
        while b.same_as(a):
            b = _draw_concept(spec, seeds[1] + 7919 * attempt)
            attempt += 1
        return [a if i % 2 == 0 else b for i in range(n_segments)]
    concepts = []
    for i in range(n_segments):
        c = _draw_concept(spec, seeds[i])
        attempt = 1
        while concepts and c.same_as(concepts[-1]):
            c = _draw_concept(spec, seeds[i] + 7919 * attempt)
            attempt += 1
        concepts.append(c)
    return concepts


def generate_synthetic_stream(spec: SyntheticStreamSpec) -> StreamSource:
    """Materialize a drifting stream.

    Each concept places one centroid per class on a distinct vertex of the
    scaled hypercube ``class_sep * {-1, +1}^n_informative``; informative
    features are centroid plus unit Gaussian noise, redundant features a
    fixed linear combination of the informative ones, and all remaining
    features unit Gaussian noise.
    """
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    concept_seq, sample_seq = root.spawn(2)
    n_segments = spec.n_drifts + 1
    concept_seeds = [int(s) for s in concept_seq.generate_state(max(n_segments, 2))]
    concepts = _concept_sequence(spec, concept_seeds)

    rng = np.random.default_rng(sample_seq)
    n = spec.n_samples
    k, r = spec.n_informative, spec.n_redundant
    y = rng.integers(0, spec.n_classes, size=n)
    noise_inf = rng.standard_normal((n, k))
    noise_rest = rng.standard_normal((n, spec.n_features - k - r))
    pick = rng.random(n)

    centers = drift_centers(n, spec.n_drifts)
    idx = np.arange(n)
    centroids = np.stack([c.centroids for c in concepts])  # (segments, classes, k)
    mixing = np.stack([c.mixing for c in concepts])  # (segments, r, k)

    if spec.n_drifts == 0:
        concept_of = np.zeros(n, dtype=np.int64)
        informative = centroids[0][y] + noise_inf
        redundant = informative @ mixing[0].T
    elif spec.drift_type is DriftType.ABRUPT:
        concept_of = np.searchsorted(np.asarray(centers), idx, side="right")
        informative = centroids[concept_of, y] + noise_inf
        redundant = np.einsum("nk,nrk->nr", informative, mixing[concept_of])
    else:
        width = max(1, int(spec.transition_fraction * n / n_segments))
        c_arr = np.asarray(centers)
        # every sample belongs to the transition of its nearest drift center
        nearest = np.abs(idx[:, None] - c_arr[None, :]).argmin(axis=1)
        w = _mixture_weights(idx, c_arr[nearest], width, spec.sigmoid_spacing)
        old, new = nearest, nearest + 1
        if spec.drift_type is DriftType.GRADUAL:
            concept_of = np.where(pick < w, new, old)
            informative = centroids[concept_of, y] + noise_inf
            redundant = np.einsum("nk,nrk->nr", informative, mixing[concept_of])
        else:
            wc = w[:, None]
            center_pts = (1.0 - wc) * centroids[old, y] + wc * centroids[new, y]
            informative = center_pts + noise_inf
            mix = (1.0 - w)[:, None, None] * mixing[old] + w[:, None, None] * mixing[new]
            redundant = np.einsum("nk,nrk->nr", informative, mix)
            concept_of = np.where(w >= 0.5, new, old)

    X = np.hstack([informative, redundant, noise_rest])
    if spec.recurring:
        concept_ids = concept_of % 2
    else:
        concept_ids = concept_of
    return StreamSource(
        X,
        y,
        n_classes=spec.n_classes,
        ground_truth_drifts=centers,
        concepts=concept_ids,
        spec=spec,
        name="synthetic",
    )


def inject_label_noise(
    chunk: Chunk, fraction: float, rng: np.random.Generator, n_classes: int = 2
) -> Chunk:
    """Change the labels of exactly ``floor(fraction * size)`` samples.

    Selected samples get ``1 - y`` in the binary case, otherwise a uniformly
    drawn different class.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"noise fraction must lie in [0, 1], got {fraction}")
    n_flip = math.floor(fraction * chunk.size)
    if n_flip == 0:
        return chunk
    n_classes = max(n_classes, int(chunk.y.max()) + 1)
    chosen = rng.choice(chunk.size, size=n_flip, replace=False)
    y = chunk.y.copy()
    if n_classes == 2:
        y[chosen] = 1 - y[chosen]
    else:
        y[chosen] = (y[chosen] + rng.integers(1, n_classes, size=n_flip)) % n_classes
    return Chunk(chunk.X, y, index=chunk.index)


def oversample_chunk(chunk: Chunk, rng: np.random.Generator) -> Chunk:
    """Randomly resample minority classes (with replacement) up to the
    majority class count. Original samples come first, in order."""
    if chunk.size == 0:
        raise ValidationError("cannot oversample an empty chunk")
    classes, counts = np.unique(chunk.y, return_counts=True)
    target = counts.max()
    extra = [
        rng.choice(np.flatnonzero(chunk.y == c), size=target - n, replace=True)
        for c, n in zip(classes, counts)
        if n < target
    ]
    if not extra:
        return chunk
    take = np.concatenate([np.arange(chunk.size)] + extra)
    return Chunk(chunk.X[take], chunk.y[take], index=chunk.index)


def read_drift_metadata(path: Union[str, Path]) -> list[int]:
    """Read a sidecar list of drift sample indices.

    Accepts a JSON/YAML list, a mapping with a ``drifts`` key, or plain text
    with one integer per line.
    """
    text = Path(path).read_text()
    stripped = text.strip()
    if not stripped:
        return []
    try:
        data = json.loads(stripped)
    except json.JSONDecodeError:
        import yaml

        data = yaml.safe_load(stripped)
    if isinstance(data, dict):
        data = data.get("drifts", data.get("ground_truth_drifts"))
    if isinstance(data, int):
        data = [data]
    if isinstance(data, str):
        data = data.split()
    if not isinstance(data, list):
        raise ValidationError(f"{path}: drift metadata must be a list of sample indices")
    try:
        return [int(v) for v in data]
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: drift indices must be integers") from None


def load_dataset_stream(
    path: Union[str, Path],
    label_column: str = "class",
    drifts: Union[None, str, Path, Sequence[int]] = None,
) -> StreamSource:
    """Load a CSV stream (header row, numeric features, integer labels).

    ``drifts`` is either a sequence of sample indices or a path to a sidecar
    metadata file (see :func:`read_drift_metadata`).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValidationError(f"{path}: label column {label_column!r} not in header")
        label_at = header.index(label_column)
        width = len(header)
        rows: list[list[float]] = []
        labels: list[int] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise ValidationError(
                    f"{path}: row {row_no} has {len(row)} fields, expected {width}"
                )
            try:
                feats = [float(v) for i, v in enumerate(row) if i != label_at]
                raw_label = float(row[label_at])
            except ValueError:
                raise ValidationError(f"{path}: row {row_no} contains a non-numeric value") from None
            if raw_label != int(raw_label) or raw_label < 0:
                raise ValidationError(
                    f"{path}: row {row_no} label {row[label_at]!r} is not a class index"
                )
            rows.append(feats)
            labels.append(int(raw_label))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    if drifts is None:
        ground_truth: list[int] = []
    elif isinstance(drifts, (str, Path)):
        ground_truth = read_drift_metadata(drifts)
    else:
        ground_truth = [int(d) for d in drifts]
    X = np.asarray(rows, dtype=float).reshape(len(rows), width - 1)
    return StreamSource(
        X, np.asarray(labels), ground_truth_drifts=ground_truth, name=path.stem
    )
