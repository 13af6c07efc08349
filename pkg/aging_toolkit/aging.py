"""
Aging quantification and localization.

- DegradationProjection: extrapolates a launch-time slope over a horizon
  (default 6 h) and computes the Time To Aging Failure (TTAF), the time
  until launch time has grown by a threshold (default +200 ms).
- RejuvenationGain: relative improvement of a rejuvenated run over its
  baseline, for both the projected increase and the TTAF.
- Trend-count rankings: for each process (GC metrics) or task group
  (procfs counters), the number of experiments showing a declared
  increasing trend.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from errors import InvalidSpec, ZeroBaseline
from ingest import gc_metric, split_task_entity
from model import DATA_DIR
from trend import TrendVerdict

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_S = 21600.0
DEFAULT_THRESHOLD_MS = 200.0
DEFAULT_MIN_GC_SAMPLES = 100
GC_TOP_N = 5
TASK_TOP_N = 10
OTHER_GROUP = 'OTHER'
TASK_GROUPS_MANIFEST = DATA_DIR / 'task_groups.json'

# reported GC metric -> series metric produced by ingest.build_series
GC_METRICS = {
    'gc_duration_explicit': gc_metric('total', 'explicit'),
    'gc_duration_background': gc_metric('total', 'background'),
    'gc_pause_explicit': gc_metric('pause', 'explicit'),
    'gc_pause_background': gc_metric('pause', 'background'),
}

# reported task metric -> rate series metric
TASK_RANK_METRICS = {
    'majflt': 'majflt',
    'minflt': 'minflt',
    'utime': 'utime_ticks',
    'stime': 'stime_ticks',
}

SERIES_GC_METRICS = {series: reported for reported, series in GC_METRICS.items()}
SERIES_TASK_METRICS = {series: reported for reported, series in TASK_RANK_METRICS.items()}

RANKING_COLUMNS = ['unit', 'metric', 'count', 'rank', 'scope', 'unit_kind', 'experiments', 'series']
TABLE6_COLUMNS = ['activity', 'slope_ms_per_s', 'lt_increase_ms', 'ttaf_h',
                  'slope_r', 'lt_increase_r', 'ttaf_r', 'gain_lt_pct', 'gain_ttaf_pct']


class RankUnit(Enum):
    PROCESS = "process"
    TASK_GROUP = "task_group"


@dataclass(frozen=True)
class DegradationProjection:
    """
    Launch-time degradation extrapolated over a horizon.

    Args:
        slope: ms of launch time gained per second of uptime
        horizon: Projection horizon in seconds
        lt_increase: Projected increase in ms (0 when slope <= 0)
        threshold: Degradation considered an aging failure, ms
        ttaf: Seconds until the threshold is reached (inf when slope <= 0)
    """
    slope: float
    horizon: float
    lt_increase: float
    threshold: float
    ttaf: float

    @property
    def ttaf_h(self) -> float:
        return self.ttaf / 3600.0

    @classmethod
    def from_observed(cls, lt_increase: float, horizon: float = DEFAULT_HORIZON_S,
                      threshold: float = DEFAULT_THRESHOLD_MS,
                      ttaf_h: Optional[float] = None) -> 'DegradationProjection':
        """
        Projection from a reported increase over `horizon`.

        A reported TTAF (hours) takes precedence over threshold/slope; this
        is how averaged repetitions are carried, where the mean TTAF is not
        the TTAF of the mean slope.
        """
        projection = project_degradation(lt_increase / horizon, horizon, threshold)
        if ttaf_h is None:
            return projection
        return cls(projection.slope, horizon, projection.lt_increase, threshold, float(ttaf_h) * 3600.0)


def project_degradation(slope: float, horizon: float = DEFAULT_HORIZON_S,
                        threshold: float = DEFAULT_THRESHOLD_MS) -> DegradationProjection:
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    slope = float(slope)
    if slope > 0:
        return DegradationProjection(slope, horizon, slope * horizon, threshold, threshold / slope)
    return DegradationProjection(slope, horizon, 0.0, threshold, math.inf)


@dataclass(frozen=True)
class RejuvenationGain:
    gain_lt_pct: float
    gain_ttaf_pct: float

    @property
    def rounded(self) -> Tuple[Union[int, float], Union[int, float]]:
        """Whole percents; an infinite gain (rejuvenated run without degradation) stays infinite."""
        return _round_pct(self.gain_lt_pct), _round_pct(self.gain_ttaf_pct)


def _round_pct(value: float) -> Union[int, float]:
    if math.isinf(value):
        return value
    # half away from zero, as printed tables do
    return int(math.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)


def rejuvenation_gain(baseline: DegradationProjection,
                      rejuvenated: DegradationProjection) -> RejuvenationGain:
    """Gains of the rejuvenated run over the baseline, in percent."""
    if not baseline.lt_increase > 0:
        raise ZeroBaseline("Baseline shows no launch-time increase")
    if math.isinf(baseline.ttaf):
        raise ZeroBaseline("Baseline TTAF is infinite")
    if baseline == rejuvenated:
        return RejuvenationGain(0.0, 0.0)
    gain_lt = (baseline.lt_increase - rejuvenated.lt_increase) / baseline.lt_increase * 100.0
    gain_ttaf = (rejuvenated.ttaf - baseline.ttaf) / baseline.ttaf * 100.0
    return RejuvenationGain(gain_lt, gain_ttaf)


def average_projections(projections: Sequence[DegradationProjection]) -> DegradationProjection:
    """Mean LT increase and mean TTAF over repeated runs of one activity."""
    if not projections:
        raise ValueError("No projections to average")
    first = projections[0]
    lt_increase = sum(p.lt_increase for p in projections) / len(projections)
    ttafs = [p.ttaf for p in projections]
    ttaf = math.inf if any(math.isinf(v) for v in ttafs) else sum(ttafs) / len(ttafs)
    return DegradationProjection(lt_increase / first.horizon, first.horizon, lt_increase, first.threshold, ttaf)


@dataclass(frozen=True)
class AgingRow:
    activity: str
    baseline: DegradationProjection
    rejuvenated: DegradationProjection
    gain: RejuvenationGain
    experiments: Tuple[str, ...] = ()
    series: Tuple[str, ...] = ()

    def to_row(self) -> Dict[str, object]:
        gain_lt, gain_ttaf = self.gain.rounded
        return {
            'activity': self.activity,
            'slope_ms_per_s': self.baseline.slope,
            'lt_increase_ms': self.baseline.lt_increase,
            'ttaf_h': self.baseline.ttaf_h,
            'slope_r': self.rejuvenated.slope,
            'lt_increase_r': self.rejuvenated.lt_increase,
            'ttaf_r': self.rejuvenated.ttaf_h,
            'gain_lt_pct': gain_lt,
            'gain_ttaf_pct': gain_ttaf,
            'gain_lt_exact': self.gain.gain_lt_pct,
            'gain_ttaf_exact': self.gain.gain_ttaf_pct,
            'experiments': ';'.join(self.experiments),
            'series': ';'.join(self.series),
        }


@dataclass(frozen=True)
class AgingReport:
    rows: Tuple[AgingRow, ...]

    @property
    def average_gain(self) -> RejuvenationGain:
        finite = [r.gain for r in self.rows if math.isfinite(r.gain.gain_ttaf_pct)]
        if not finite:
            raise ZeroBaseline("No activity with a finite gain")
        return RejuvenationGain(sum(g.gain_lt_pct for g in finite) / len(finite),
                                sum(g.gain_ttaf_pct for g in finite) / len(finite))

    def to_frame(self) -> pd.DataFrame:
        rows = [r.to_row() for r in self.rows]
        if self.rows:
            avg = self.average_gain
            gain_lt, gain_ttaf = avg.rounded
            rows.append({'activity': 'Average', 'gain_lt_pct': gain_lt, 'gain_ttaf_pct': gain_ttaf,
                         'gain_lt_exact': avg.gain_lt_pct, 'gain_ttaf_exact': avg.gain_ttaf_pct,
                         'experiments': '', 'series': ''})
        df = pd.DataFrame(rows)
        return df.reindex(columns=TABLE6_COLUMNS + ['gain_lt_exact', 'gain_ttaf_exact', 'experiments', 'series'])


def aging_report_from_projections(pairs: Iterable[Tuple[str, DegradationProjection, DegradationProjection]]
                                  ) -> AgingReport:
    rows = [AgingRow(activity, base, rejuv, rejuvenation_gain(base, rejuv)) for activity, base, rejuv in pairs]
    return AgingReport(tuple(rows))


def aging_report_from_verdicts(baseline: Sequence[TrendVerdict], rejuvenated: Sequence[TrendVerdict],
                               horizon: float = DEFAULT_HORIZON_S,
                               threshold: float = DEFAULT_THRESHOLD_MS,
                               metric: str = 'launch_time_ms') -> AgingReport:
    """
    Table-6-style report from two verdict sets.

    Activities with a declared increasing launch-time trend in the baseline
    are reported. Repetitions of the same activity are averaged (mean
    increase, mean TTAF).
    """
    def by_activity(verdicts, increasing_only):
        grouped: Dict[str, List[TrendVerdict]] = {}
        for v in verdicts:
            if v.metric != metric or (increasing_only and not v.increasing):
                continue
            grouped.setdefault(v.entity, []).append(v)
        return grouped

    base_groups = by_activity(baseline, increasing_only=True)
    rejuv_groups = by_activity(rejuvenated, increasing_only=False)

    rows = []
    for activity in sorted(base_groups):
        if activity not in rejuv_groups:
            logger.info("%s: no rejuvenated run, skipped", activity)
            continue
        base = average_projections([project_degradation(v.slope, horizon, threshold) for v in base_groups[activity]])
        rejuv = average_projections([project_degradation(v.slope, horizon, threshold)
                                     for v in rejuv_groups[activity]])
        experiments = tuple(sorted({v.experiment or v.series_id
                                    for v in base_groups[activity] + rejuv_groups[activity]}))
        series = tuple(sorted(v.series_id for v in base_groups[activity] + rejuv_groups[activity]))
        rows.append(AgingRow(activity, base, rejuv, rejuvenation_gain(base, rejuv), experiments, series))
    return AgingReport(tuple(rows))


# -- rankings ------------------------------------------------------------------

@dataclass(frozen=True)
class TrendCountRanking:
    """
    Experiments-with-increasing-trend counts per unit, for one metric.

    For task groups the value is the mean count of the group's tasks, so
    counts may be fractional.
    """
    unit: RankUnit
    metric: str
    counts: Mapping[str, float]
    top_n: Tuple[str, ...]
    experiments_analyzed: int
    scope: Optional[str] = None
    trend_experiments: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)
    trend_series: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def to_rows(self) -> List[Dict[str, object]]:
        rows = []
        for rank, name in enumerate(self.top_n, 1):
            rows.append({
                'unit': name,
                'metric': self.metric,
                'count': self.counts[name],
                'rank': rank,
                'scope': self.scope or '',
                'unit_kind': self.unit.value,
                'experiments': ';'.join(self.trend_experiments.get(name, ())),
                'series': ';'.join(self.trend_series.get(name, ())),
            })
        return rows


def order_units(counts: Mapping[str, float]) -> List[str]:
    """Count descending, then name."""
    return sorted(counts, key=lambda name: (-counts[name], name))


def count_gc_trends(verdicts: Mapping[Tuple[str, str, str], TrendVerdict],
                    min_samples: int = DEFAULT_MIN_GC_SAMPLES,
                    top_n: int = GC_TOP_N) -> List[TrendCountRanking]:
    """
    Per-process counts of experiments with a declared increasing GC trend.

    Args:
        verdicts: (process, gc_metric, experiment) -> verdict, where
            gc_metric is one of GC_METRICS (or its series name)
        min_samples: Series shorter than this are not counted
        top_n: Ranking length per metric
    """
    rankings = []
    for reported in GC_METRICS:
        counts: Dict[str, int] = {}
        found: Dict[str, List[str]] = {}
        series: Dict[str, List[str]] = {}
        experiments = set()
        for (process, metric, experiment), verdict in verdicts.items():
            if SERIES_GC_METRICS.get(metric, metric) != reported:
                continue
            counts.setdefault(process, 0)
            if verdict.n < min_samples:
                continue
            experiments.add(experiment)
            if verdict.increasing:
                counts[process] += 1
                found.setdefault(process, []).append(experiment)
                series.setdefault(process, []).append(verdict.series_id)
        ordered = order_units(counts)
        rankings.append(TrendCountRanking(
            unit=RankUnit.PROCESS,
            metric=reported,
            counts=counts,
            top_n=tuple(ordered[:top_n]),
            experiments_analyzed=len(experiments),
            trend_experiments={k: tuple(sorted(v)) for k, v in found.items()},
            trend_series={k: tuple(sorted(v)) for k, v in series.items()},
        ))
    return rankings


class TaskGroupRules:
    """
    Task name -> group, by exact name first, then longest matching prefix.

    Patterns ending in '*' are prefixes. Tasks matching nothing belong to
    OTHER.
    """

    def __init__(self, groups: Mapping[str, Sequence[str]]):
        """
        Args:
            groups: group name -> patterns, e.g. {"ACTIVITY": ["ActivityManager", "HwActivityManag"]}
        """
        self.groups = {name: tuple(patterns) for name, patterns in groups.items()}
        self._exact: Dict[str, str] = {}
        self._prefixes: Dict[str, str] = {}
        for group, patterns in self.groups.items():
            for pattern in patterns:
                table, key = (self._prefixes, pattern[:-1]) if pattern.endswith('*') else (self._exact, pattern)
                if not key:
                    raise InvalidSpec(f"Empty pattern in group {group}")
                owner = table.get(key)
                if owner is not None and owner != group:
                    raise InvalidSpec(f"Pattern {pattern!r} claimed by both {owner} and {group}")
                table[key] = group

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'TaskGroupRules':
        try:
            with open(path, 'r') as f:
                groups = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidSpec(f"Cannot load task group rules from {path}: {e}") from None
        return cls(groups)

    @classmethod
    def bundled(cls) -> 'TaskGroupRules':
        return cls.load(TASK_GROUPS_MANIFEST)

    def classify(self, task_name: str) -> str:
        if task_name in self._exact:
            return self._exact[task_name]
        matches = [p for p in self._prefixes if task_name.startswith(p)]
        if matches:
            return self._prefixes[max(matches, key=len)]
        return OTHER_GROUP


def rank_task_groups(verdicts: Mapping[Tuple[str, str, str], TrendVerdict], rules: TaskGroupRules,
                     top_n: int = TASK_TOP_N) -> List[TrendCountRanking]:
    """
    Task-group rankings per (process, metric).

    A task is identified by (process, task name) across experiments, since
    thread ids change from run to run. Its count is the number of
    experiments where its rate series has a declared increasing trend; a
    group's value is the mean over the group's tasks seen in that process.

    Args:
        verdicts: (task entity, task_metric, experiment) -> verdict; task
            entities are 'process|tid|name' (ingest.task_entity) and
            task_metric is one of TASK_RANK_METRICS (or its series name)
        rules: Task grouping
        top_n: Ranking length per process
    """
    per_task: Dict[Tuple[str, str], Dict[str, set]] = {}
    series: Dict[Tuple[str, str], Dict[str, List[str]]] = {}
    experiments: Dict[Tuple[str, str], set] = {}
    for (entity, metric, experiment), verdict in verdicts.items():
        metric = SERIES_TASK_METRICS.get(metric, metric)
        if metric not in TASK_RANK_METRICS:
            continue
        process, _, name = split_task_entity(entity)
        key = (process, metric)
        experiments.setdefault(key, set()).add(experiment)
        trending = per_task.setdefault(key, {}).setdefault(name, set())
        if verdict.increasing:
            trending.add(experiment)
            series.setdefault(key, {}).setdefault(rules.classify(name), []).append(verdict.series_id)

    rankings = []
    for (process, metric) in sorted(per_task):
        members: Dict[str, List[int]] = {}
        found: Dict[str, set] = {}
        for name, trending in per_task[(process, metric)].items():
            group = rules.classify(name)
            members.setdefault(group, []).append(len(trending))
            found.setdefault(group, set()).update(trending)
        values = {group: sum(c) / len(c) for group, c in members.items()}
        ordered = order_units(values)
        rankings.append(TrendCountRanking(
            unit=RankUnit.TASK_GROUP,
            metric=metric,
            counts=values,
            top_n=tuple(ordered[:top_n]),
            experiments_analyzed=len(experiments[(process, metric)]),
            scope=process,
            trend_experiments={g: tuple(sorted(e)) for g, e in found.items() if e},
            trend_series={g: tuple(sorted(s)) for g, s in series.get((process, metric), {}).items()},
        ))
    return rankings


def ranking_table(rankings: Iterable[TrendCountRanking]) -> pd.DataFrame:
    rows = [row for ranking in rankings for row in ranking.to_rows()]
    return pd.DataFrame(rows, columns=RANKING_COLUMNS)
