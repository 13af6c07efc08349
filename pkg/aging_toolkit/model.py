"""
Domain types for aging experiments and metric time series.

An experiment is one 6-hour run of a workload on a device, described by
the levels of five factors:
- DEV: device model
- VER: OS version
- APP: app set (EU or CHINA market)
- EVENTS: workload event mix
- STO: storage condition (FULL or NORMAL)

The experiment plan is read from a CSV manifest; the 72-experiment plan
ships in data/plan72.csv. Factor analysis compares experiments that differ
in exactly one factor, so the plan can be split into pairwise partitions
per factor level.

Telemetry is carried as MetricSeries: one metric of one entity (activity,
process or task) sampled over an experiment. Series are immutable; the
numpy buffers behind them are marked read-only.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import InvalidPlan, SingleLevel, TooShort, UnpairedConfig

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / 'data'
PLAN_MANIFEST = DATA_DIR / 'plan72.csv'
PLAN_COLUMNS = ['id', 'dev', 'ver', 'app', 'events', 'sto', 'duration_s']
DEFAULT_DURATION_S = 21600.0

STORE_COLUMNS = ['entity', 'metric', 'kind', 't_s', 'value']

METRIC_UNITS = {
    'launch_time_ms': 'ms',
    'pss_kb': 'kB',
    'minflt': 'faults',
    'majflt': 'faults',
    'utime_ticks': 'ticks',
    'stime_ticks': 'ticks',
}


class FactorName(Enum):
    """Experimental factors."""
    DEV = "DEV"
    VER = "VER"
    APP = "APP"
    EVENTS = "EVENTS"
    STO = "STO"

    @classmethod
    def parse(cls, name: Union[str, 'FactorName']) -> 'FactorName':
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            known = ', '.join(f.value for f in cls)
            raise ValueError(f"Unknown factor: {name!r} (expected one of {known})") from None


class SeriesKind(Enum):
    INSTANTANEOUS = "instantaneous"
    CUMULATIVE = "cumulative"


def unit_for_metric(metric: str) -> str:
    if metric.startswith('gc_'):
        return 'ms'
    return METRIC_UNITS.get(metric, '')


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment of the plan.

    Args:
        id: Experiment identifier, e.g. "EXP39"
        levels: FactorName -> level string, all five factors required
        duration_s: Experiment length in seconds
    """
    id: str
    levels: Mapping[FactorName, str]
    duration_s: float = DEFAULT_DURATION_S

    def __post_init__(self):
        if not self.id:
            raise InvalidPlan("Experiment id must be non-empty")
        levels = {FactorName.parse(k): str(v) for k, v in dict(self.levels).items()}
        missing = [f.value for f in FactorName if f not in levels]
        if missing:
            raise InvalidPlan(f"{self.id}: missing factor(s) {', '.join(missing)}")
        if not self.duration_s > 0:
            raise InvalidPlan(f"{self.id}: duration must be positive, got {self.duration_s}")
        object.__setattr__(self, 'levels', MappingProxyType(levels))

    def level(self, factor: FactorName) -> str:
        return self.levels[FactorName.parse(factor)]

    def key_without(self, factor: FactorName) -> Tuple[str, ...]:
        """Levels of every factor except `factor`, in FactorName order."""
        return tuple(self.levels[f] for f in FactorName if f is not factor)


@dataclass(frozen=True)
class ExperimentPlan:
    """
    Ordered set of experiments plus the declared level set of each factor.

    Use ExperimentPlan.build() to derive level sets from the experiments,
    ExperimentPlan.from_csv() to read a manifest, or ExperimentPlan.bundled()
    for the 72-experiment plan.
    """
    experiments: Tuple[ExperimentConfig, ...]
    level_sets: Mapping[FactorName, Tuple[str, ...]]

    def __post_init__(self):
        experiments = tuple(self.experiments)
        level_sets = {FactorName.parse(k): tuple(v) for k, v in dict(self.level_sets).items()}
        for factor in FactorName:
            level_sets.setdefault(factor, ())

        seen_ids = set()
        seen_keys = {}
        for config in experiments:
            if config.id in seen_ids:
                raise InvalidPlan(f"Duplicate experiment id: {config.id}")
            seen_ids.add(config.id)
            key = tuple(config.levels[f] for f in FactorName)
            if key in seen_keys:
                raise InvalidPlan(f"{config.id} repeats the configuration of {seen_keys[key]}")
            seen_keys[key] = config.id
            for factor in FactorName:
                if config.levels[factor] not in level_sets[factor]:
                    raise InvalidPlan(
                        f"{config.id}: level {config.levels[factor]!r} not declared for {factor.value}"
                    )

        object.__setattr__(self, 'experiments', experiments)
        object.__setattr__(self, 'level_sets', MappingProxyType(level_sets))

    @classmethod
    def build(cls, experiments: Iterable[ExperimentConfig],
              level_sets: Optional[Mapping[FactorName, Sequence[str]]] = None) -> 'ExperimentPlan':
        experiments = list(experiments)
        if level_sets is None:
            derived = {f: [] for f in FactorName}
            for config in experiments:
                for factor in FactorName:
                    if config.levels[factor] not in derived[factor]:
                        derived[factor].append(config.levels[factor])
            level_sets = derived
        return cls(tuple(experiments), {f: tuple(v) for f, v in level_sets.items()})

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'ExperimentPlan':
        """Load a plan manifest with header id,dev,ver,app,events,sto,duration_s."""
        try:
            df = pd.read_csv(path, dtype=str, keep_default_na=False)
        except FileNotFoundError:
            raise InvalidPlan(f"Plan manifest not found: {path}") from None
        except pd.errors.EmptyDataError:
            raise InvalidPlan(f"Plan manifest is empty: {path}") from None

        columns = [c.strip().lower() for c in df.columns]
        if columns != PLAN_COLUMNS:
            raise InvalidPlan(f"{path}: expected header {','.join(PLAN_COLUMNS)}, got {','.join(df.columns)}")
        df.columns = columns

        durations = pd.to_numeric(df['duration_s'], errors='coerce')
        if durations.isna().any():
            bad = df.loc[durations.isna(), 'id'].tolist()
            raise InvalidPlan(f"{path}: non-numeric duration_s for {bad}")

        experiments = []
        for row, duration in zip(df.itertuples(index=False), durations):
            levels = {f: getattr(row, f.value.lower()).strip() for f in FactorName}
            experiments.append(ExperimentConfig(row.id.strip(), levels, float(duration)))
        return cls.build(experiments)

    @classmethod
    def bundled(cls) -> 'ExperimentPlan':
        return cls.from_csv(PLAN_MANIFEST)

    def to_csv(self, path: Union[str, Path]):
        rows = [
            {'id': c.id, **{f.value.lower(): c.levels[f] for f in FactorName}, 'duration_s': c.duration_s}
            for c in self.experiments
        ]
        pd.DataFrame(rows, columns=PLAN_COLUMNS).to_csv(path, index=False)

    def __iter__(self) -> Iterator[ExperimentConfig]:
        return iter(self.experiments)

    def __len__(self) -> int:
        return len(self.experiments)

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.experiments]

    def get(self, experiment_id: str) -> ExperimentConfig:
        for config in self.experiments:
            if config.id == experiment_id:
                return config
        raise KeyError(experiment_id)

    def restrict(self, **levels) -> 'ExperimentPlan':
        """
        Sub-plan keeping experiments at the given levels.

        Keys are factor names (case-insensitive), values a level string or
        a collection of accepted levels: plan.restrict(DEV='HUAWEIP8').
        """
        wanted = {}
        for name, value in levels.items():
            accepted = {value} if isinstance(value, str) else set(value)
            wanted[FactorName.parse(name)] = accepted
        kept = [c for c in self.experiments if all(c.levels[f] in acc for f, acc in wanted.items())]
        return ExperimentPlan(tuple(kept), self.level_sets)

    def levels_present(self, factor: FactorName) -> List[str]:
        """Declared levels of `factor` that at least one experiment uses, in declared order."""
        used = {c.levels[factor] for c in self.experiments}
        return [level for level in self.level_sets[factor] if level in used]


@dataclass(frozen=True)
class FactorPartition:
    """Two level-groups of experiments that differ only in `factor`."""
    factor: FactorName
    level_a: str
    level_b: str
    configs_a: Tuple[ExperimentConfig, ...]
    configs_b: Tuple[ExperimentConfig, ...]
    pairs: Tuple[Tuple[str, str], ...]


def partition_by_factor(plan: ExperimentPlan, factor: FactorName, strict: bool = True) -> List[FactorPartition]:
    """
    Split the plan into pairwise partitions by the levels of `factor`.

    Pairing is exact match on all other factors. With more than two levels
    every pair of levels gets its own partition.

    Args:
        plan: Experiment plan
        factor: Factor under study
        strict: Raise UnpairedConfig when a configuration has no counterpart;
            otherwise unpaired configurations are left out.
    """
    factor = FactorName.parse(factor)
    levels = plan.levels_present(factor)
    if len(levels) < 2:
        raise SingleLevel(f"Factor {factor.value} has {len(levels)} level(s) in the plan; need at least 2")

    by_level: Dict[str, Dict[Tuple[str, ...], ExperimentConfig]] = {level: {} for level in levels}
    for config in plan:
        by_level[config.levels[factor]][config.key_without(factor)] = config

    partitions = []
    for level_a, level_b in itertools.combinations(levels, 2):
        side_a, side_b = by_level[level_a], by_level[level_b]
        unmatched = [side_a.get(k) or side_b.get(k) for k in sorted(set(side_a) ^ set(side_b))]
        if unmatched:
            ids = ', '.join(c.id for c in unmatched)
            if strict:
                raise UnpairedConfig(
                    f"{factor.value} {level_a} vs {level_b}: no counterpart for {ids}"
                )
            logger.debug("%s %s vs %s: dropping unpaired %s", factor.value, level_a, level_b, ids)

        common = [key for key in side_a if key in side_b]
        if not common:
            continue
        partitions.append(FactorPartition(
            factor=factor,
            level_a=level_a,
            level_b=level_b,
            configs_a=tuple(side_a[k] for k in common),
            configs_b=tuple(side_b[k] for k in common),
            pairs=tuple((side_a[k].id, side_b[k].id) for k in common),
        ))

    if not partitions:
        raise UnpairedConfig(f"No two levels of {factor.value} share a configuration")
    return partitions


@dataclass(frozen=True)
class Sample:
    t: float
    value: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"Sample time must be finite and >= 0, got {self.t}")
        if not np.isfinite(self.value):
            raise ValueError(f"Sample value must be finite, got {self.value}")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """
    One metric of one entity over one experiment.

    Args:
        entity: Activity, process or task identifier
        metric: Metric name, e.g. "launch_time_ms", "pss_kb", "majflt"
        unit: Unit label
        kind: Instantaneous samples or a cumulative counter
        t: Sample times, seconds since experiment start, strictly increasing
        values: Sample values
        flags: True where a sample was perturbed (duplicate timestamp) or
            follows a counter reset
        experiment: Owning experiment id, if known
    """
    entity: str
    metric: str
    unit: str
    kind: SeriesKind
    t: np.ndarray
    values: np.ndarray
    flags: Optional[np.ndarray] = None
    experiment: Optional[str] = None

    def __post_init__(self):
        t = _frozen_array(self.t, float)
        values = _frozen_array(self.values, float)
        flags = _frozen_array(np.zeros(len(t), dtype=bool) if self.flags is None else self.flags, bool)

        if not (len(t) == len(values) == len(flags)):
            raise ValueError(
                f"{self.entity}/{self.metric}: t, values and flags differ in length "
                f"({len(t)}, {len(values)}, {len(flags)})"
            )
        if len(t):
            if not np.all(np.isfinite(t)) or t[0] < 0:
                raise ValueError(f"{self.entity}/{self.metric}: sample times must be finite and >= 0")
            if np.any(np.diff(t) <= 0):
                raise ValueError(f"{self.entity}/{self.metric}: sample times must be strictly increasing")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{self.entity}/{self.metric}: sample values must be finite")
            if self.kind is SeriesKind.CUMULATIVE and np.any(values < 0):
                raise ValueError(f"{self.entity}/{self.metric}: cumulative counters must be non-negative")

        object.__setattr__(self, 't', t)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'flags', flags)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def series_id(self) -> str:
        parts = [self.experiment] if self.experiment else []
        return '/'.join(parts + [self.entity, self.metric])

    @property
    def samples(self) -> List[Sample]:
        return [Sample(float(t), float(v)) for t, v in zip(self.t, self.values)]

    def with_values(self, values) -> 'MetricSeries':
        """Same timestamps and labels, new values."""
        return MetricSeries(self.entity, self.metric, self.unit, self.kind, self.t, values,
                            self.flags, self.experiment)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'entity': self.entity,
            'metric': self.metric,
            'kind': self.kind.value,
            't_s': self.t,
            'value': self.values,
        }, columns=STORE_COLUMNS)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, experiment: Optional[str] = None) -> List['MetricSeries']:
        """Split a store frame (entity,metric,kind,t_s,value) into series, one per (entity, metric)."""
        series = []
        for (entity, metric), group in df.groupby(['entity', 'metric'], sort=True):
            group = group.sort_values('t_s', kind='mergesort')
            series.append(cls(
                entity=str(entity),
                metric=str(metric),
                unit=unit_for_metric(str(metric)),
                kind=SeriesKind(group['kind'].iloc[0]),
                t=group['t_s'].to_numpy(dtype=float),
                values=group['value'].to_numpy(dtype=float),
                experiment=experiment,
            ))
        return series


def to_rate_series(s: MetricSeries) -> MetricSeries:
    """
    Per-interval deltas of a cumulative counter.

    A negative delta means the counter was reset; the raw new value is
    used for that interval and the sample is flagged.
    """
    if s.kind is not SeriesKind.CUMULATIVE:
        raise ValueError(f"{s.series_id} is not a cumulative series")
    if len(s) < 2:
        raise TooShort(f"{s.series_id}: need at least 2 samples to difference, got {len(s)}")

    deltas = np.diff(s.values)
    resets = deltas < 0
    if resets.any():
        logger.debug("%s: %d counter reset(s)", s.series_id, int(resets.sum()))
    deltas = np.where(resets, s.values[1:], deltas)

    return MetricSeries(
        entity=s.entity,
        metric=s.metric,
        unit=f"{s.unit}/interval" if s.unit else '',
        kind=SeriesKind.INSTANTANEOUS,
        t=s.t[1:],
        values=deltas,
        flags=resets | s.flags[1:],
        experiment=s.experiment,
    )
