"""
Synthetic telemetry with known ground truth.

Two levels:
- generate_series(SeriesSpec): one MetricSeries, x(t) = intercept + slope*t + e(t)
  with AR(1) noise e(t) = phi*e(t-1) + N(0, sigma) and optional multiplicative
  outliers.
- generate_log_corpus(CorpusSpec, out_dir): a capture tree per experiment of a
  plan (logcat.txt with Displayed and art GC lines, pss.csv, tasks.csv) that
  the ingest module reads back field for field.

Every stream draws from its own numpy Generator (PCG64) seeded from
blake2b(base seed, experiment id, entity, metric), so a corpus is
byte-identical for a given spec and seed regardless of the worker count.
"""

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from errors import InvalidPlan, InvalidSpec, IoFailure
from ingest import (LOGCAT_FILE, PSS_COLUMNS, PSS_FILE, TASK_COLUMNS, TASKS_FILE, GcCause, GcEvent,
                    LaunchEvent, PssSample, TaskSample, task_entity)
from model import ExperimentConfig, ExperimentPlan, FactorName, MetricSeries, SeriesKind, unit_for_metric

logger = logging.getLogger(__name__)

DEFAULT_DT_S = 30.0
MANIFEST_FILE = 'manifest.json'
STREAMS = ('launch', 'pss', 'gc')
TASK_STREAMS = ('minflt', 'majflt', 'utime', 'stime')
TASK_FIELDS = {'minflt': 'minflt', 'majflt': 'majflt', 'utime': 'utime_ticks', 'stime': 'stime_ticks'}
LOGCAT_BASE = datetime(2000, 1, 1)
GC_ALGORITHM = 'concurrent mark sweep'
LAUNCH_TAG = 'ActivityManager'
GC_TAG = 'art'
START_TAG = 'AgingSynth'

DEFAULT_CORPUS: Dict[str, Any] = {
    'seed': 0,
    'processes': {'system': 1097, 'com.android.systemui': 1350, 'surfaceflinger': 412, 'mediaserver': 430},
    'activities': ['com.example.myapp/.MainActivity'],
    'launch': {'interval_s': 60.0, 'intercept': 400.0, 'noise_sigma': 30.0},
    'pss': {'interval_s': 30.0, 'intercept': 150000.0, 'noise_sigma': 500.0},
    'gc': {'interval_s': 60.0, 'intercept': 40.0, 'noise_sigma': 2.0, 'causes': ['Explicit', 'Background'],
           'pause_fraction': 0.05},
    'tasks': {
        'process': 'system',
        'names': ['ActivityManager', 'ActivityManager_2', 'PackageManager', 'InputDispatcher',
                  'AlarmManager', 'NetworkStats', 'Binder:1097_1'],
        'interval_s': 30.0,
        'metrics': {
            'minflt': {'intercept': 40.0, 'noise_sigma': 4.0},
            'majflt': {'intercept': 2.0, 'noise_sigma': 0.5},
            'utime': {'intercept': 5.0, 'noise_sigma': 1.0},
            'stime': {'intercept': 3.0, 'noise_sigma': 0.8},
        },
    },
    'inject': {},
    'level_effects': {},
    'slope_jitter': 0.0,
}


@dataclass(frozen=True)
class SeriesSpec:
    """
    Parameters of one synthetic series.

    Args:
        n: Sample count (>= 2)
        dt: Sampling interval in seconds; t_i = i * dt
        slope: Trend in units per second
        intercept: Value at t = 0
        noise_sigma: Standard deviation of the Gaussian innovations
        ar1_phi: AR(1) coefficient, in (-1, 1)
        outlier_rate: Probability that a sample is multiplied by outlier_scale
        outlier_scale: Outlier multiplier
        seed: Generator seed
    """
    n: int
    dt: float = DEFAULT_DT_S
    slope: float = 0.0
    intercept: float = 0.0
    noise_sigma: float = 0.0
    ar1_phi: float = 0.0
    outlier_rate: float = 0.0
    outlier_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidSpec(f"n must be an integer >= 2, got {self.n}")
        if not self.dt > 0:
            raise InvalidSpec(f"dt must be positive, got {self.dt}")
        if not self.noise_sigma >= 0:
            raise InvalidSpec(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not -1.0 < self.ar1_phi < 1.0:
            raise InvalidSpec(f"ar1_phi must lie in (-1, 1), got {self.ar1_phi}")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise InvalidSpec(f"outlier_rate must lie in [0, 1), got {self.outlier_rate}")
        for name in ('slope', 'intercept', 'outlier_scale'):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpec(f"{name} must be finite")


def derive_seed(base_seed: int, *parts: str) -> int:
    """64-bit seed from a base seed and labels (experiment id, entity, metric)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for part in parts:
        h.update(b'\x1f')
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), 'big')


def _noise(spec: SeriesSpec, rng: np.random.Generator) -> np.ndarray:
    eps = rng.normal(0.0, spec.noise_sigma, spec.n)
    if spec.ar1_phi == 0.0:
        return eps
    # start from the stationary distribution
    eps[0] /= math.sqrt(1.0 - spec.ar1_phi ** 2)
    return lfilter([1.0], [1.0, -spec.ar1_phi], eps)


def generate_values(spec: SeriesSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(t, values) of a spec."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.n, dtype=float) * spec.dt
    values = spec.intercept + spec.slope * t + _noise(spec, rng)
    outliers = rng.random(spec.n) < spec.outlier_rate
    values[outliers] *= spec.outlier_scale
    return t, values


def generate_series(spec: SeriesSpec, entity: str = 'synthetic', metric: str = 'value',
                    experiment: Optional[str] = None) -> MetricSeries:
    t, values = generate_values(spec)
    return MetricSeries(entity=entity, metric=metric, unit=unit_for_metric(metric),
                        kind=SeriesKind.INSTANTANEOUS, t=t, values=values, experiment=experiment)


# -- corpus ------------------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    """Noise and trend parameters shared by every entity of one stream."""
    interval_s: float
    intercept: float
    slope: float = 0.0
    noise_sigma: float = 0.0
    ar1_phi: float = 0.0
    outlier_rate: float = 0.0
    outlier_scale: float = 1.0
    n: Optional[int] = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], interval_s: Optional[float] = None) -> 'StreamSpec':
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"Unknown stream key(s): {', '.join(sorted(unknown))}")
        values = dict(d)
        if interval_s is not None:
            values.setdefault('interval_s', interval_s)
        return cls(**values)

    def samples(self, duration_s: float) -> int:
        return int(self.n) if self.n is not None else int(duration_s // self.interval_s)

    def series_spec(self, duration_s: float, slope: float, seed: int) -> SeriesSpec:
        return SeriesSpec(n=self.samples(duration_s), dt=self.interval_s, slope=slope,
                          intercept=self.intercept, noise_sigma=self.noise_sigma, ar1_phi=self.ar1_phi,
                          outlier_rate=self.outlier_rate, outlier_scale=self.outlier_scale, seed=seed)


def _match_pattern(patterns: Mapping[str, float], name: str) -> float:
    """Exact name first, then the longest '*'-terminated prefix."""
    if name in patterns:
        return float(patterns[name])
    best = None
    for pattern in patterns:
        if pattern.endswith('*') and name.startswith(pattern[:-1]):
            if best is None or len(pattern) > len(best):
                best = pattern
    return float(patterns[best]) if best is not None else 0.0


@dataclass(frozen=True)
class CorpusSpec:
    """
    A synthetic corpus over an experiment plan.

    Streams set to None are not emitted. `inject` maps a stream key
    ('launch', 'pss', 'gc', 'tasks.<metric>') to entity patterns and the
    extra slope they receive; `level_effects` maps FACTOR -> level ->
    stream key -> extra slope for every entity of experiments at that
    level. `slope_jitter` scales each slope by (1 + jitter * z), z ~ N(0, 1).
    """
    plan: ExperimentPlan
    seed: int = 0
    processes: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_CORPUS['processes']))
    activities: Tuple[str, ...] = tuple(DEFAULT_CORPUS['activities'])
    launch: Optional[StreamSpec] = None
    pss: Optional[StreamSpec] = None
    gc: Optional[StreamSpec] = None
    gc_causes: Tuple[str, ...] = ('Explicit', 'Background')
    gc_pause_fraction: float = 0.05
    task_process: str = 'system'
    task_names: Tuple[str, ...] = ()
    task_metrics: Mapping[str, StreamSpec] = field(default_factory=dict)
    inject: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    level_effects: Mapping[str, Mapping[str, Mapping[str, float]]] = field(default_factory=dict)
    slope_jitter: float = 0.0
    duration_s: Optional[float] = None

    def __post_init__(self):
        processes = {str(k): int(v) for k, v in dict(self.processes).items()}
        if len(set(processes.values())) != len(processes):
            raise InvalidSpec("Process pids must be unique")
        object.__setattr__(self, 'processes', MappingProxyType(processes))
        object.__setattr__(self, 'activities', tuple(self.activities))
        object.__setattr__(self, 'gc_causes', tuple(self.gc_causes))
        object.__setattr__(self, 'task_names', tuple(self.task_names))
        for cause in self.gc_causes:
            if not cause[:1].isupper() or not cause.isalpha():
                raise InvalidSpec(f"GC cause must be a capitalized word, got {cause!r}")
        if not 0.0 < self.gc_pause_fraction <= 1.0:
            raise InvalidSpec(f"gc_pause_fraction must lie in (0, 1], got {self.gc_pause_fraction}")
        unknown = set(self.task_metrics) - set(TASK_STREAMS)
        if unknown:
            raise InvalidSpec(f"Unknown task metric(s): {', '.join(sorted(unknown))}")
        if self.task_names and self.task_process not in processes:
            raise InvalidSpec(f"Task process {self.task_process!r} has no pid")
        if self.slope_jitter < 0:
            raise InvalidSpec(f"slope_jitter must be >= 0, got {self.slope_jitter}")
        for factor in self.level_effects:
            FactorName.parse(factor)
        if self.duration_s is not None and not self.duration_s > 0:
            raise InvalidSpec(f"duration_s must be positive, got {self.duration_s}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: Optional[Path] = None) -> 'CorpusSpec':
        """
        Build from a JSON-style document; missing sections take DEFAULT_CORPUS
        values, a section set to null disables that stream.
        """
        try:
            doc = {**DEFAULT_CORPUS, **dict(d)}
            for section in ('launch', 'pss', 'gc', 'tasks'):
                if isinstance(d.get(section), Mapping):
                    doc[section] = {**DEFAULT_CORPUS[section], **d[section]}
            plan = _load_plan(doc.get('plan'), base_dir)
            if doc.get('where'):
                plan = plan.restrict(**doc['where'])
            if doc.get('experiments') is not None:
                keep = set(doc['experiments'])
                unknown = keep - set(plan.ids)
                if unknown:
                    raise InvalidSpec(f"Experiments not in plan: {', '.join(sorted(unknown))}")
                plan = ExperimentPlan(tuple(c for c in plan if c.id in keep), plan.level_sets)

            gc_doc = dict(doc['gc']) if doc.get('gc') else None
            gc_causes = tuple(gc_doc.pop('causes', DEFAULT_CORPUS['gc']['causes'])) if gc_doc else ()
            gc_fraction = gc_doc.pop('pause_fraction', DEFAULT_CORPUS['gc']['pause_fraction']) if gc_doc else 0.05

            tasks_doc = doc.get('tasks') or {}
            task_interval = tasks_doc.get('interval_s', DEFAULT_DT_S)
            task_metrics = {
                name: StreamSpec.from_dict(m, interval_s=task_interval)
                for name, m in (tasks_doc.get('metrics') or {}).items()
            }
            return cls(
                plan=plan,
                seed=int(doc.get('seed', 0)),
                processes=doc['processes'],
                activities=tuple(doc['activities']),
                launch=StreamSpec.from_dict(doc['launch']) if doc.get('launch') else None,
                pss=StreamSpec.from_dict(doc['pss']) if doc.get('pss') else None,
                gc=StreamSpec.from_dict(gc_doc) if gc_doc else None,
                gc_causes=gc_causes or ('Explicit',),
                gc_pause_fraction=float(gc_fraction),
                task_process=tasks_doc.get('process', 'system'),
                task_names=tuple(tasks_doc.get('names', ())),
                task_metrics=task_metrics,
                inject={k: dict(v) for k, v in (doc.get('inject') or {}).items()},
                level_effects=doc.get('level_effects') or {},
                slope_jitter=float(doc.get('slope_jitter', 0.0)),
                duration_s=doc.get('duration_s'),
            )
        except InvalidSpec:
            raise
        except (InvalidPlan, KeyError, TypeError, ValueError) as e:
            raise InvalidSpec(f"Invalid corpus spec: {e}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'CorpusSpec':
        path = Path(path)
        try:
            with open(path, 'r') as f:
                doc = json.load(f)
        except OSError as e:
            raise IoFailure(f"Cannot read corpus spec {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise InvalidSpec(f"{path}: not valid JSON ({e})") from None
        if not isinstance(doc, dict):
            raise InvalidSpec(f"{path}: top level must be an object")
        return cls.from_dict(doc, base_dir=path.parent)

    def pid_of(self, process: str) -> int:
        try:
            return self.processes[process]
        except KeyError:
            raise InvalidSpec(f"No pid declared for process {process!r}") from None

    def duration_for(self, config: ExperimentConfig) -> float:
        return float(self.duration_s if self.duration_s is not None else config.duration_s)

    def slope_for(self, config: ExperimentConfig, stream: str, entity: str, base: float) -> float:
        slope = base + _match_pattern(self.inject.get(stream, {}), entity)
        for factor, levels in self.level_effects.items():
            level = config.level(FactorName.parse(factor))
            slope += float(levels.get(level, {}).get(stream, 0.0))
        if self.slope_jitter:
            rng = np.random.default_rng(derive_seed(self.seed, config.id, entity, stream, 'jitter'))
            slope *= 1.0 + self.slope_jitter * rng.standard_normal()
        return slope


def _load_plan(ref: Optional[str], base_dir: Optional[Path]) -> ExperimentPlan:
    if ref is None or ref == 'bundled':
        return ExperimentPlan.bundled()
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return ExperimentPlan.from_csv(path)


@dataclass
class SyntheticCapture:
    """Events of one synthetic experiment plus the slopes they were drawn with."""
    experiment: str
    launches: List[LaunchEvent] = field(default_factory=list)
    gcs: List[GcEvent] = field(default_factory=list)
    pss: List[PssSample] = field(default_factory=list)
    tasks: List[TaskSample] = field(default_factory=list)
    slopes: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def record_count(self) -> int:
        return len(self.launches) + len(self.gcs) + len(self.pss) + len(self.tasks)

    @property
    def store_row_count(self) -> int:
        """Rows the series store holds after ingest: launches feed two series, GC two, tasks four."""
        return 2 * len(self.launches) + 2 * len(self.gcs) + len(self.pss) + 4 * len(self.tasks)


def _stream_values(spec: CorpusSpec, config: ExperimentConfig, stream: StreamSpec, key: str,
                   entity: str, metric: str, capture: SyntheticCapture) -> Tuple[np.ndarray, np.ndarray]:
    slope = spec.slope_for(config, key, entity, stream.slope)
    capture.slopes.setdefault(key, {})[entity] = slope
    seed = derive_seed(spec.seed, config.id, entity, metric)
    return generate_values(stream.series_spec(spec.duration_for(config), slope, seed))


def synthesize_experiment(spec: CorpusSpec, config: ExperimentConfig) -> SyntheticCapture:
    """Draw every stream of one experiment."""
    capture = SyntheticCapture(config.id)

    if spec.launch is not None and spec.activities:
        stagger_ms = int(spec.launch.interval_s * 1000) // len(spec.activities)
        for k, activity in enumerate(spec.activities):
            t, values = _stream_values(spec, config, spec.launch, 'launch', activity, 'launch_time_ms', capture)
            # the log carries integer milliseconds
            launch_ms = np.maximum(1.0, np.rint(values))
            for ti, v in zip(t, launch_ms):
                t_ms = int(round(ti * 1000)) + k * stagger_ms
                capture.launches.append(LaunchEvent(t_ms / 1000.0, activity, float(v)))

    if spec.pss is not None:
        for process in spec.processes:
            t, values = _stream_values(spec, config, spec.pss, 'pss', process, 'pss_kb', capture)
            pid = spec.processes[process]
            for ti, v in zip(t, np.maximum(0.0, np.rint(values))):
                capture.pss.append(PssSample(float(ti), process, pid, float(v)))

    if spec.gc is not None:
        for p_idx, process in enumerate(spec.processes):
            for c_idx, cause_name in enumerate(spec.gc_causes):
                metric = f"gc_total_ms.{cause_name.lower()}"
                t, values = _stream_values(spec, config, spec.gc, 'gc', process, metric, capture)
                rng = np.random.default_rng(derive_seed(spec.seed, config.id, process, metric, 'fields'))
                offset_ms = 500 + 50 * p_idx + 10 * c_idx
                capture.gcs.extend(_gc_events(t, values, offset_ms, process, cause_name,
                                              spec.gc_pause_fraction, rng))

    if spec.task_names and spec.task_metrics:
        pid = spec.pid_of(spec.task_process)
        for idx, name in enumerate(spec.task_names):
            tid = pid + 10 + idx
            entity = task_entity(spec.task_process, tid, name)
            counters = {}
            times = None
            for metric in TASK_STREAMS:
                stream = spec.task_metrics.get(metric)
                if stream is None:
                    continue
                # the stream describes per-interval increments; the file carries running totals
                t, values = _stream_values(spec, config, stream, f"tasks.{metric}", name,
                                           f"{entity}/{metric}", capture)
                times = t if times is None or len(t) < len(times) else times
                counters[metric] = np.cumsum(np.maximum(0, np.rint(values)).astype(np.int64))
            n = len(times)
            for i in range(n):
                fields = {TASK_FIELDS[m]: int(counters[m][i]) if m in counters else 0 for m in TASK_STREAMS}
                capture.tasks.append(TaskSample(float(times[i]), pid, tid, name, **fields))

    capture.launches.sort(key=lambda e: e.t)
    capture.gcs.sort(key=lambda e: e.t)
    capture.pss.sort(key=lambda s: s.t)
    capture.tasks.sort(key=lambda s: s.t)
    return capture


def _gc_events(t: np.ndarray, totals: np.ndarray, offset_ms: int, process: str, cause_name: str,
               pause_fraction: float, rng: np.random.Generator) -> List[GcEvent]:
    try:
        cause = GcCause(cause_name)
    except ValueError:
        cause = GcCause.OTHER
    n = len(t)
    freed_objects = rng.integers(1000, 200000, n)
    freed_kb = rng.integers(64, 16384, n)
    los_objects = rng.integers(0, 64, n)
    los_kb = rng.integers(0, 2048, n)
    free_pct = rng.integers(10, 60, n)
    heap_used = rng.integers(4, 64, n)

    events = []
    for i in range(n):
        total = round(max(0.001, float(totals[i])), 3)
        pause = round(min(total, max(0.001, total * pause_fraction)), 3)
        t_ms = int(round(t[i] * 1000)) + offset_ms
        used = int(heap_used[i])
        events.append(GcEvent(
            t=t_ms / 1000.0,
            process=process,
            cause=cause,
            algorithm=GC_ALGORITHM,
            freed_objects=int(freed_objects[i]),
            freed_bytes=int(freed_kb[i]) * 1024,
            los_objects=int(los_objects[i]),
            los_bytes=int(los_kb[i]) * 1024,
            pause_ms=(pause,),
            total_ms=total,
            cause_name=cause_name,
            free_pct=int(free_pct[i]),
            heap=f"{used}MB/{used * 2}MB",
        ))
    return events


# -- writers -----------------------------------------------------------------

def _stamp(t_s: float) -> str:
    at = LOGCAT_BASE + timedelta(milliseconds=int(round(t_s * 1000)))
    return f"{at:%m-%d %H:%M:%S}.{at.microsecond // 1000:03d}"


def format_launch_duration(ms: float) -> str:
    """Activity Manager style: '+412ms', '+1s250ms'."""
    ms = int(ms)
    seconds, rest = divmod(ms, 1000)
    return f"+{seconds}s{rest}ms" if seconds else f"+{rest}ms"


def format_logcat_lines(capture: SyntheticCapture, spec: CorpusSpec) -> List[str]:
    system_pid = spec.processes.get('system', min(spec.processes.values(), default=1000))
    # (t, order, line); the start marker pins the time origin at 0
    lines: List[Tuple[float, int, str]] = [
        (0.0, 0, f"{_stamp(0.0)} {system_pid:5d} {system_pid:5d} I {START_TAG}: capture {capture.experiment}")
    ]
    for e in capture.launches:
        message = f"Displayed {e.activity}: {format_launch_duration(e.launch_time_ms)}"
        lines.append((e.t, 1, f"{_stamp(e.t)} {system_pid:5d} {system_pid + 1:5d} I {LAUNCH_TAG}: {message}"))
    for g in capture.gcs:
        pid = spec.pid_of(g.process)
        message = (
            f"{g.cause_name} {g.algorithm} GC freed {g.freed_objects}({g.freed_bytes // 1024}KB) AllocSpace objects, "
            f"{g.los_objects}({g.los_bytes // 1024}KB) LOS objects, {g.free_pct}% free, {g.heap}, "
            f"paused {g.pause_ms[0]:.3f}ms total {g.total_ms:.3f}ms"
        )
        lines.append((g.t, 2, f"{_stamp(g.t)} {pid:5d} {pid + 5:5d} I {GC_TAG}     : {message}"))
    lines.sort(key=lambda item: (item[0], item[1]))
    return [line for _, _, line in lines]


def format_stat_line(sample: TaskSample) -> str:
    """A /proc/<pid>/task/<tid>/stat line carrying the sample's counters."""
    return (
        f"{sample.tid} ({sample.task_name}) S {sample.pid} {sample.pid} 0 0 -1 1077952832 "
        f"{sample.minflt} 0 {sample.majflt} 0 {sample.utime_ticks} {sample.stime_ticks} "
        f"0 0 20 0 1 0 {1000 + sample.tid} 0 0"
    )


def write_capture(capture: SyntheticCapture, spec: CorpusSpec, out_dir: Union[str, Path]) -> Dict[str, Any]:
    """Write one experiment's capture files; returns its manifest entry."""
    exp_dir = Path(out_dir) / capture.experiment
    try:
        exp_dir.mkdir(parents=True, exist_ok=True)
        with open(exp_dir / LOGCAT_FILE, 'w', newline='\n') as f:
            f.write('\n'.join(format_logcat_lines(capture, spec)) + '\n')
        pss = pd.DataFrame([(s.t, s.process, s.pid, s.pss_kb) for s in capture.pss], columns=PSS_COLUMNS)
        pss.to_csv(exp_dir / PSS_FILE, index=False)
        tasks = pd.DataFrame([(s.t, s.pid, s.tid, format_stat_line(s)) for s in capture.tasks],
                             columns=TASK_COLUMNS)
        tasks.to_csv(exp_dir / TASKS_FILE, index=False)
    except OSError as e:
        raise IoFailure(f"Cannot write capture for {capture.experiment}: {e}") from None

    return {
        'files': [f"{capture.experiment}/{name}" for name in (LOGCAT_FILE, PSS_FILE, TASKS_FILE)],
        'records': capture.record_count,
        'launches': len(capture.launches),
        'gcs': len(capture.gcs),
        'pss': len(capture.pss),
        'tasks': len(capture.tasks),
        'store_rows': capture.store_row_count,
        'slopes': capture.slopes,
    }


@dataclass(frozen=True)
class CorpusManifest:
    out_dir: Path
    seed: int
    experiments: Mapping[str, Mapping[str, Any]]

    @property
    def record_count(self) -> int:
        return sum(e['records'] for e in self.experiments.values())

    @property
    def store_row_count(self) -> int:
        return sum(e['store_rows'] for e in self.experiments.values())

    @property
    def files(self) -> List[str]:
        return [f for e in self.experiments.values() for f in e['files']]

    def to_dict(self) -> Dict[str, Any]:
        return {'seed': self.seed, 'records': self.record_count, 'experiments': dict(self.experiments)}


def generate_log_corpus(spec: CorpusSpec, out_dir: Union[str, Path], jobs: int = 1) -> CorpusManifest:
    """
    Write the capture tree <out_dir>/<exp_id>/{logcat.txt,pss.csv,tasks.csv}
    plus manifest.json. Experiments are generated in a pool of `jobs`
    workers; output does not depend on `jobs`.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"Cannot create {out_dir}: {e}") from None

    def one(config: ExperimentConfig) -> Tuple[str, Dict[str, Any]]:
        capture = synthesize_experiment(spec, config)
        return config.id, write_capture(capture, spec, out_dir)

    configs: Sequence[ExperimentConfig] = list(spec.plan)
    if jobs > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(one, configs))
    else:
        entries = [one(c) for c in configs]

    manifest = CorpusManifest(out_dir, spec.seed, dict(entries))
    try:
        with open(out_dir / MANIFEST_FILE, 'w') as f:
            json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')
    except OSError as e:
        raise IoFailure(f"Cannot write {out_dir / MANIFEST_FILE}: {e}") from None
    logger.info("Synthetic corpus: %d experiment(s), %d record(s) in %s",
                len(configs), manifest.record_count, out_dir)
    return manifest
