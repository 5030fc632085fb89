"""Configuration-driven experiment runner and report builder.

A configuration names one or more streams, one or more ensemble models, the
scheduler/detector settings and a list of seeds. Every (stream, model, sweep
point) combination is a *cell*; each cell is run once per seed in baseline
mode (fixed chunk size) and in CAR mode on the same stream realization. One
trace CSV is written per run, together with a ``runs.json`` manifest and the
fully resolved ``config.yaml`` that reproduces the whole directory.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import yaml

from .detectors import FHDDM, StabilizationWindow
from .ensembles import EnsembleConfig, EnsembleModel, Strategy
from .evaluation import (
    RunRecord,
    match_segments,
    read_trace_csv,
    sr_report,
    test_then_train_run,
    wilcoxon_one_sided_signed_rank,
    write_trace_csv,
)
from .exceptions import InsufficientDataError, ValidationError
from .learners import LearnerKind, LearnerSpec
from .scheduler import SchedulerConfig, SchedulerState
from .stream import (
    DriftType,
    StreamSource,
    SyntheticStreamSpec,
    generate_synthetic_stream,
    load_dataset_stream,
)

logger = logging.getLogger(__name__)

__all__ = [
    "StreamConfig",
    "ModelConfig",
    "ExperimentConfig",
    "ReportError",
    "load_config",
    "run_cell",
    "run_experiment",
    "collect_pairs",
    "emit_report",
]

MANIFEST = "runs.json"
RESOLVED_CONFIG = "config.yaml"
SWEEPABLE = (
    "chunk_size",
    "drift_chunk_size",
    "alpha",
    "fhddm_window",
    "fhddm_delta",
    "vsdm_window",
    "vsdm_epsilon",
)


class ReportError(RuntimeError):
    """Trace directory cannot be summarized (e.g. unpaired runs)."""


def _reject_unknown(section: str, data: dict, allowed: Iterable[str]) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValidationError(f"{section}: unknown field(s) {', '.join(unknown)}")


def _expect_mapping(section: str, data: Any) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{section}: expected a mapping, got {type(data).__name__}")
    return data


@dataclass
class StreamConfig:
    """One stream: ``kind`` is ``synthetic`` or ``csv``.

    Synthetic streams accept every :class:`SyntheticStreamSpec` field except
    ``seed`` (taken from the run). ``chunk_size`` overrides the scheduler's
    base chunk size for this stream.
    """

    name: str = "stream"
    kind: str = "synthetic"
    chunk_size: Optional[int] = None
    synthetic: dict = field(default_factory=dict)
    path: Optional[str] = None
    label_column: str = "class"
    drifts: Union[None, str, list] = None

    @classmethod
    def from_dict(cls, data: dict, index: int = 0) -> "StreamConfig":
        data = dict(_expect_mapping(f"streams[{index}]", data))
        kind = data.pop("kind", "synthetic")
        name = str(data.pop("name", f"stream{index}"))
        chunk_size = data.pop("chunk_size", None)
        where = f"streams[{index}] ({name})"
        if kind == "synthetic":
            allowed = {f.name for f in dataclasses.fields(SyntheticStreamSpec)} - {"seed"}
            _reject_unknown(where, data, allowed)
            cfg = cls(name=name, kind=kind, chunk_size=chunk_size, synthetic=data)
            cfg.spec(0)
            return cfg
        if kind == "csv":
            _reject_unknown(where, data, {"path", "label_column", "drifts"})
            if "path" not in data:
                raise ValidationError(f"{where}: path is required for csv streams")
            return cls(
                name=name,
                kind=kind,
                chunk_size=chunk_size,
                path=str(data["path"]),
                label_column=str(data.get("label_column", "class")),
                drifts=data.get("drifts"),
            )
        raise ValidationError(f"{where}: kind must be 'synthetic' or 'csv', got {kind!r}")

    def spec(self, seed: int) -> SyntheticStreamSpec:
        return SyntheticStreamSpec(**self.synthetic, seed=seed)

    def build(self, seed: int, base_dir: Path = Path(".")) -> StreamSource:
        if self.kind == "synthetic":
            return generate_synthetic_stream(self.spec(seed))
        path = Path(self.path)
        if not path.is_absolute():
            path = base_dir / path
        drifts = self.drifts
        if isinstance(drifts, str) and not Path(drifts).is_absolute():
            drifts = str(base_dir / drifts)
        return load_dataset_stream(path, self.label_column, drifts)

    def match_lead(self, seed: int = 0) -> int:
        """How far before a drift center a detection still counts for it."""
        if self.kind != "synthetic":
            return 0
        spec = self.spec(seed)
        if spec.drift_type is DriftType.ABRUPT:
            return 0
        segment = spec.n_samples / (spec.n_drifts + 1)
        return int(spec.transition_fraction * segment / 2)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.chunk_size is not None:
            out["chunk_size"] = self.chunk_size
        if self.kind == "synthetic":
            out.update(
                {k: (v.value if isinstance(v, DriftType) else v) for k, v in self.synthetic.items()}
            )
        else:
            out.update(path=self.path, label_column=self.label_column)
            if self.drifts is not None:
                out["drifts"] = self.drifts
        return out


@dataclass(frozen=True)
class ModelConfig:
    strategy: str = "sea"
    learner: str = "gaussian_nb"

    def __post_init__(self):
        try:
            Strategy(self.strategy)
        except ValueError:
            raise ValidationError(
                f"models: unknown ensemble {self.strategy!r}, "
                f"expected one of {[s.value for s in Strategy]}"
            ) from None
        try:
            LearnerKind(self.learner)
        except ValueError:
            raise ValidationError(
                f"models: unknown learner {self.learner!r}, "
                f"expected one of {[k.value for k in LearnerKind]}"
            ) from None

    @property
    def label(self) -> str:
        return f"{self.strategy}-{self.learner}"


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Defaults are the tuned values: base chunk 1000, drift chunk 30,
    alpha 1.1, FHDDM window 1000 with delta 1e-6, VSDM window 30 with
    threshold 1e-4, ensembles of 10 members.
    """

    name: str = "experiment"
    streams: list[StreamConfig] = field(default_factory=lambda: [StreamConfig()])
    models: list[ModelConfig] = field(default_factory=lambda: [ModelConfig()])
    capacity: int = 10
    wae_age_decay: float = 0.05
    cart_max_depth: int = 8
    cart_min_split: int = 2
    chunk_size: int = 1000
    drift_chunk_size: int = 30
    alpha: float = 1.1
    fhddm_window: int = 1000
    fhddm_delta: float = 1e-6
    vsdm_window: int = 30
    vsdm_epsilon: float = 1e-4
    stabilization_enabled: bool = True
    sr_thresholds: list[float] = field(default_factory=lambda: [0.9, 0.8, 0.7])
    seeds: list[int] = field(default_factory=lambda: [0])
    car_enabled: bool = True
    baseline_enabled: bool = True
    noise_fraction: float = 0.0
    oversample: bool = False
    output_dir: str = "results"
    sweep: dict = field(default_factory=dict)

    _SECTIONS = {
        "ensemble": ("capacity", "wae_age_decay", "cart_max_depth", "cart_min_split"),
        "scheduler": ("chunk_size", "drift_chunk_size", "alpha"),
        "detectors": (
            "fhddm_window",
            "fhddm_delta",
            "vsdm_window",
            "vsdm_epsilon",
            "stabilization_enabled",
        ),
    }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(_expect_mapping("config", data))
        flat: dict[str, Any] = {}
        for section, keys in cls._SECTIONS.items():
            sub = dict(_expect_mapping(section, data.pop(section, None)))
            if section == "ensemble":
                # shorthand for a single model
                shorthand = {k: sub.pop(k) for k in ("strategy", "learner") if k in sub}
                if shorthand and "models" not in data:
                    data["models"] = [shorthand]
            _reject_unknown(section, sub, keys)
            flat.update(sub)
        if "stream" in data:
            if "streams" in data:
                raise ValidationError("config: give either 'stream' or 'streams', not both")
            data["streams"] = [data.pop("stream")]
        top = {f.name for f in dataclasses.fields(cls)} - set(flat)
        for keys in cls._SECTIONS.values():
            top -= set(keys)
        _reject_unknown("config", data, top)
        streams = data.pop("streams", None)
        models = data.pop("models", None)
        values = {**data, **flat}
        for key, value in values.items():
            values[key] = _coerce(key, value)
        cfg = cls(**values)
        if streams is not None:
            if not isinstance(streams, list) or not streams:
                raise ValidationError("streams: expected a non-empty list")
            cfg.streams = [StreamConfig.from_dict(s, i) for i, s in enumerate(streams)]
        if models is not None:
            if not isinstance(models, list) or not models:
                raise ValidationError("models: expected a non-empty list")
            cfg.models = []
            for i, m in enumerate(models):
                m = _expect_mapping(f"models[{i}]", m)
                _reject_unknown(f"models[{i}]", m, ("strategy", "learner"))
                cfg.models.append(ModelConfig(**m))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.seeds:
            raise ValidationError("seeds: at least one seed is required")
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in self.seeds):
            raise ValidationError("seeds: seeds must be integers")
        if not self.sr_thresholds or not all(0 < p < 1 for p in self.sr_thresholds):
            raise ValidationError("sr_thresholds: values must lie in (0, 1)")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValidationError("noise_fraction: must lie in [0, 1]")
        if not (self.car_enabled or self.baseline_enabled):
            raise ValidationError("car_enabled: at least one of baseline/CAR must run")
        names = [s.name for s in self.streams]
        if len(set(names)) != len(names):
            raise ValidationError("streams: stream names must be unique")
        sweep = _expect_mapping("sweep", self.sweep)
        _reject_unknown("sweep", sweep, SWEEPABLE)
        for key, values in sweep.items():
            if not isinstance(values, list) or not values:
                raise ValidationError(f"sweep.{key}: expected a non-empty list")
            sweep[key] = [_coerce(key, v) for v in values]
        self.sweep = dict(sweep)
        for point in self.sweep_points():
            for stream in self.streams:
                self._check_components(stream, point)

    def _check_components(self, stream: StreamConfig, point: dict) -> None:
        s = self.settings(stream, point)
        SchedulerConfig(s["chunk_size"], s["drift_chunk_size"], s["alpha"])
        FHDDM(s["fhddm_window"], s["fhddm_delta"])
        StabilizationWindow(s["vsdm_window"], s["vsdm_epsilon"])
        EnsembleConfig(capacity=self.capacity, wae_age_decay=self.wae_age_decay)
        LearnerSpec(cart_max_depth=self.cart_max_depth, cart_min_split=self.cart_min_split)

    def sweep_points(self) -> list[dict]:
        if not self.sweep:
            return [{}]
        keys = list(self.sweep)
        return [dict(zip(keys, vals)) for vals in itertools.product(*self.sweep.values())]

    def settings(self, stream: StreamConfig, point: dict) -> dict:
        s = {k: getattr(self, k) for k in SWEEPABLE}
        if stream.chunk_size is not None:
            s["chunk_size"] = stream.chunk_size
        s.update(point)
        return s

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name}
        out["streams"] = [s.to_dict() for s in self.streams]
        out["models"] = [{"strategy": m.strategy, "learner": m.learner} for m in self.models]
        for section, keys in self._SECTIONS.items():
            out[section] = {k: getattr(self, k) for k in keys}
        for key in (
            "sr_thresholds",
            "seeds",
            "car_enabled",
            "baseline_enabled",
            "noise_fraction",
            "oversample",
            "output_dir",
        ):
            out[key] = getattr(self, key)
        if self.sweep:
            out["sweep"] = dict(self.sweep)
        return out


_INT_FIELDS = {"capacity", "cart_max_depth", "cart_min_split", "chunk_size", "drift_chunk_size",
               "fhddm_window", "vsdm_window"}
_FLOAT_FIELDS = {"wae_age_decay", "alpha", "fhddm_delta", "vsdm_epsilon", "noise_fraction"}
_BOOL_FIELDS = {"stabilization_enabled", "car_enabled", "baseline_enabled", "oversample"}


def _coerce(key: str, value: Any) -> Any:
    # YAML reads 1e-6 (no dot) as a string
    try:
        if key in _FLOAT_FIELDS:
            return float(value)
        if key in _INT_FIELDS:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if key == "sr_thresholds":
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: invalid value {value!r}") from None
    if key in _BOOL_FIELDS and not isinstance(value, bool):
        raise ValidationError(f"{key}: expected true/false, got {value!r}")
    return value


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML/JSON ({exc})") from None
    return ExperimentConfig.from_dict(data or {})


def _sweep_tag(point: dict) -> str:
    return "_".join(f"{k}-{v}" for k, v in point.items())


def _cell_id(stream: StreamConfig, model: ModelConfig, point: dict) -> str:
    parts = [stream.name, model.label]
    if point:
        parts.append(_sweep_tag(point))
    return "__".join(parts)


@dataclass
class _Task:
    config: ExperimentConfig
    stream: StreamConfig
    model: ModelConfig
    point: dict
    seed: int
    base_dir: Path


def run_cell(task: _Task) -> list[tuple[dict, RunRecord]]:
    """Run baseline and/or CAR for one cell and seed on a shared stream."""
    cfg, point = task.config, task.point
    s = cfg.settings(task.stream, point)
    source = task.stream.build(task.seed, task.base_dir)
    cell = _cell_id(task.stream, task.model, point)
    modes = [m for m, on in (("baseline", cfg.baseline_enabled), ("car", cfg.car_enabled)) if on]
    out = []
    for mode in modes:
        learner = LearnerSpec(
            kind=task.model.learner,
            cart_max_depth=cfg.cart_max_depth,
            cart_min_split=cfg.cart_min_split,
        )
        ensemble = EnsembleModel(
            EnsembleConfig(
                strategy=task.model.strategy,
                capacity=cfg.capacity,
                learner_spec=learner,
                wae_age_decay=cfg.wae_age_decay,
                n_classes=source.n_classes,
            )
        )
        run_id = f"{cell}__{mode}__seed{task.seed}"
        record = _run(source.fork(), ensemble, s, cfg, mode == "car", task.seed, run_id)
        meta = {
            "run_id": run_id,
            "file": f"{run_id}.csv",
            "cell": cell,
            "stream": task.stream.name,
            "model": task.model.label,
            "sweep": point,
            "mode": mode,
            "seed": task.seed,
            "ground_truth_drifts": list(source.ground_truth_drifts),
            "match_lead": task.stream.match_lead(task.seed),
            "n_samples": source.n_samples,
        }
        out.append((meta, record))
    return out


def _run(source, ensemble, s: dict, cfg: ExperimentConfig, car: bool, seed: int, run_id: str):
    return test_then_train_run(
        source,
        ensemble,
        FHDDM(s["fhddm_window"], s["fhddm_delta"]),
        StabilizationWindow(s["vsdm_window"], s["vsdm_epsilon"]),
        SchedulerState(SchedulerConfig(s["chunk_size"], s["drift_chunk_size"], s["alpha"])),
        car,
        noise_fraction=cfg.noise_fraction,
        oversample=cfg.oversample,
        stabilization_enabled=cfg.stabilization_enabled,
        seed=seed,
        run_id=run_id,
        config=s,
    )


def run_experiment(
    config: ExperimentConfig,
    out_dir: Union[None, str, Path] = None,
    jobs: int = 1,
    base_dir: Union[str, Path] = ".",
    report_file: Union[None, str, Path] = "summary.md",
) -> Path:
    """Execute every cell x seed, write traces, manifest and summary.

    Returns the output directory.
    """
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_dir = Path(base_dir)
    tasks = [
        _Task(config, stream, model, point, seed, base_dir)
        for stream in config.streams
        for model in config.models
        for point in config.sweep_points()
        for seed in config.seeds
    ]
    logger.info("running %d tasks with %d worker(s)", len(tasks), jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, tasks))
    else:
        results = [run_cell(t) for t in tasks]

    manifest = []
    for runs in results:
        for meta, record in runs:
            write_trace_csv(record, out / meta["file"])
            manifest.append(meta)
    resolved = config.to_dict()
    resolved["output_dir"] = str(out)
    for stream in resolved["streams"]:
        # anchor relative dataset paths so the saved config runs from anywhere
        for key in ("path", "drifts"):
            value = stream.get(key)
            if isinstance(value, str) and not Path(value).is_absolute():
                stream[key] = str((base_dir / value).resolve())
    (out / RESOLVED_CONFIG).write_text(yaml.safe_dump(resolved, sort_keys=False))
    (out / MANIFEST).write_text(
        json.dumps({"config": resolved, "runs": manifest}, indent=2) + "\n"
    )
    if report_file is not None and config.baseline_enabled and config.car_enabled:
        emit_report(out, out / report_file, thresholds=config.sr_thresholds)
    return out


def _load_manifest(trace_dir: Path) -> list[dict]:
    path = trace_dir / MANIFEST
    if path.exists():
        return json.loads(path.read_text())["runs"]
    # manifest-less directory: recover cell/mode/seed from file names
    runs = []
    for csv_path in sorted(trace_dir.glob("*.csv")):
        parts = csv_path.stem.split("__")
        if len(parts) < 3 or parts[-2] not in ("baseline", "car") or not parts[-1].startswith("seed"):
            continue
        runs.append(
            {
                "run_id": csv_path.stem,
                "file": csv_path.name,
                "cell": "__".join(parts[:-2]),
                "stream": parts[0],
                "model": parts[1] if len(parts) > 3 else parts[0],
                "sweep": {},
                "mode": parts[-2],
                "seed": int(parts[-1][4:]),
                "ground_truth_drifts": [],
                "match_lead": 0,
            }
        )
    return runs


def collect_pairs(trace_dir: Union[str, Path], thresholds: Sequence[float] = (0.9, 0.8, 0.7)):
    """Per cell and threshold, the paired per-drift SR values.

    Returns ``(cells, info)`` where ``cells[cell][p]`` is a pair of lists
    ``(baseline_values, car_values)`` and ``info[cell]`` holds the cell's
    stream/model/sweep labels.
    """
    trace_dir = Path(trace_dir)
    runs = _load_manifest(trace_dir)
    if not runs:
        raise ReportError(f"{trace_dir}: no trace runs found")
    by_key: dict[tuple, dict] = {}
    for meta in runs:
        by_key[(meta["cell"], meta["seed"], meta["mode"])] = meta
    missing = []
    for cell, seed, mode in by_key:
        other = "car" if mode == "baseline" else "baseline"
        if (cell, seed, other) not in by_key:
            missing.append(f"{cell}__{other}__seed{seed}")
    if missing:
        raise ReportError("unpaired traces, missing runs: " + ", ".join(sorted(missing)))

    cells: dict[str, dict[float, tuple[list, list]]] = {}
    info: dict[str, dict] = {}
    for (cell, seed, mode), meta in sorted(by_key.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if mode != "baseline":
            continue
        car_meta = by_key[(cell, seed, "car")]
        info.setdefault(
            cell, {"stream": meta["stream"], "model": meta["model"], "sweep": meta["sweep"]}
        )
        base_rec = read_trace_csv(trace_dir / meta["file"])
        car_rec = read_trace_csv(trace_dir / car_meta["file"])
        gt = meta.get("ground_truth_drifts") or []
        lead = meta.get("match_lead", 0)
        per_p = cells.setdefault(cell, {p: ([], []) for p in thresholds})
        for p in thresholds:
            b = match_segments(sr_report(base_rec, p), gt, lead=lead)
            c = match_segments(sr_report(car_rec, p), gt, lead=lead)
            for eb, ec in zip(b, c):
                if eb is not None and ec is not None:
                    per_p[p][0].append(eb.sr)
                    per_p[p][1].append(ec.sr)
    return cells, info


def _wilcoxon_cell(baseline: Sequence[float], car: Sequence[float]) -> dict:
    try:
        stat, p = wilcoxon_one_sided_signed_rank(car, baseline)
        return {"statistic": stat, "p_value": p}
    except InsufficientDataError as exc:
        return {"statistic": None, "p_value": None, "error": str(exc)}


def _fmt_mean_std(values: Sequence[float]) -> str:
    if not values:
        return "n/a"
    arr = np.asarray(values, dtype=float)
    return f"{arr.mean():.2f} ± {arr.std():.2f}"


def _fmt_test(res: dict) -> tuple[str, str]:
    if res.get("error"):
        return "n/a", f"error: {res['error']}"
    return f"{res['statistic']:.1f}", f"{res['p_value']:.4g}"


def emit_report(
    trace_dir: Union[str, Path],
    out_file: Union[str, Path],
    thresholds: Optional[Sequence[float]] = None,
) -> Path:
    """Summarize a trace directory.

    Writes a text report (per-cell SR mean ± std for baseline and CAR with
    one-sided Wilcoxon results, a per-model table pooled over streams, and a
    hyperparameter grid when the runs come from a sweep) plus a JSON file
    with the same numbers next to it.
    """
    trace_dir = Path(trace_dir)
    if thresholds is None:
        manifest = trace_dir / MANIFEST
        thresholds = [0.9, 0.8, 0.7]
        if manifest.exists():
            thresholds = json.loads(manifest.read_text())["config"].get("sr_thresholds", thresholds)
    thresholds = [float(p) for p in thresholds]
    cells, info = collect_pairs(trace_dir, thresholds)

    lines = ["# Sample Restoration summary", ""]
    summary: dict[str, Any] = {"cells": {}, "models": {}, "grid": None}

    lines += ["## Per stream", ""]
    header = "| stream | model | sweep | SR(p) | baseline | CAR | pairs | statistic | p-value |"
    lines += [header, "|" + "---|" * 9]
    for cell, per_p in cells.items():
        meta = info[cell]
        summary["cells"][cell] = {"info": meta, "thresholds": {}}
        for p, (b, c) in per_p.items():
            res = _wilcoxon_cell(b, c)
            stat, pv = _fmt_test(res)
            lines.append(
                f"| {meta['stream']} | {meta['model']} | {_sweep_tag(meta['sweep']) or '-'} "
                f"| SR({p:g}) | {_fmt_mean_std(b)} | {_fmt_mean_std(c)} | {len(b)} | {stat} | {pv} |"
            )
            summary["cells"][cell]["thresholds"][str(p)] = {
                "baseline": b,
                "car": c,
                "baseline_mean": float(np.mean(b)) if b else None,
                "baseline_std": float(np.std(b)) if b else None,
                "car_mean": float(np.mean(c)) if c else None,
                "car_std": float(np.std(c)) if c else None,
                **res,
            }

    # pooled over streams and sweep points, one row per model
    models = sorted({m["model"] for m in info.values()})
    lines += ["", "## Wilcoxon test results (pooled over streams)", ""]
    head = "| model | " + " | ".join(f"SR({p:g}) statistic | SR({p:g}) p-value" for p in thresholds) + " |"
    lines += [head, "|" + "---|" * (1 + 2 * len(thresholds))]
    for model in models:
        row = [model]
        summary["models"][model] = {}
        for p in thresholds:
            b_all, c_all = [], []
            for cell, per_p in cells.items():
                if info[cell]["model"] == model:
                    b_all += per_p[p][0]
                    c_all += per_p[p][1]
            res = _wilcoxon_cell(b_all, c_all)
            summary["models"][model][str(p)] = {"pairs": len(b_all), **res}
            row += list(_fmt_test(res))
        lines.append("| " + " | ".join(row) + " |")

    sweep_keys = sorted({k for m in info.values() for k in m["sweep"]})
    if sweep_keys:
        grid_p = 0.8 if 0.8 in thresholds else thresholds[0]
        lines += _grid_table(cells, info, sweep_keys, grid_p, summary)

    out_file = Path(out_file)
    out_file.parent.mkdir(parents=True, exist_ok=True)
    out_file.write_text("\n".join(lines) + "\n")
    out_file.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    return out_file


def _grid_table(cells, info, keys: list[str], p: float, summary: dict) -> list[str]:
    """Mean CAR SR(p) over streams/models/seeds per sweep point; rows from
    the first sweep key, columns from the second (if any)."""
    row_key = "vsdm_epsilon" if "vsdm_epsilon" in keys else keys[0]
    others = [k for k in keys if k != row_key]
    col_key = others[0] if others else None
    values: dict[tuple, list] = {}
    for cell, per_p in cells.items():
        sweep = info[cell]["sweep"]
        key = (sweep.get(row_key), sweep.get(col_key) if col_key else None)
        values.setdefault(key, []).extend(per_p[p][1])
    rows = sorted({k[0] for k in values}, reverse=True)
    cols = sorted({k[1] for k in values}) if col_key else [None]
    lines = ["", f"## Mean CAR SR({p:g}) over the sweep grid", ""]
    lines.append(f"| {row_key} | " + " | ".join(f"{col_key}={c}" if col_key else "SR" for c in cols) + " |")
    lines.append("|" + "---|" * (1 + len(cols)))
    grid = []
    for r in rows:
        cells_txt = []
        for c in cols:
            v = values.get((r, c), [])
            mean = float(np.mean(v)) if v else None
            grid.append({row_key: r, **({col_key: c} if col_key else {}), "mean": mean, "n": len(v)})
            cells_txt.append(f"{mean:.2f}" if mean is not None else "n/a")
        lines.append(f"| {r} | " + " | ".join(cells_txt) + " |")
    summary["grid"] = {"p": p, "rows": row_key, "columns": col_key, "values": grid}
    return lines
