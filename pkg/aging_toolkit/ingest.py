"""
Telemetry ingestion: raw device captures -> events -> MetricSeries.

Sources per experiment directory:
- logcat.txt  Activity Manager "Displayed" lines (launch time) and ART
              GC lines (tag "art"), threadtime or brief format
- pss.csv     t_s,process,pid,pss_kb   (normalized dumpsys PSS totals)
- tasks.csv   t_s,pid,tid,stat_line    (raw /proc/<pid>/task/<tid>/stat)

Parsers are pure functions. Logcat times come from the threadtime
"MM-DD HH:MM:SS.mmm" prefix when present (relative to the earliest stamp
in the file), otherwise from the caller-supplied capture time.
"""

import io
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Container, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import (BadHeader, DataError, IoFailure, MalformedDuration, MalformedGcLine, MalformedStatLine,
                    NonNumericField)
from model import MetricSeries, SeriesKind, unit_for_metric

logger = logging.getLogger(__name__)

LOGCAT_FILE = 'logcat.txt'
PSS_FILE = 'pss.csv'
TASKS_FILE = 'tasks.csv'
PSS_COLUMNS = ['t_s', 'process', 'pid', 'pss_kb']
TASK_COLUMNS = ['t_s', 'pid', 'tid', 'stat_line']

POOLED_ACTIVITY = 'all-activities'
KEY_PROCESSES = ('system', 'mediaserver', 'com.android.systemui', 'surfaceflinger')
TASK_METRICS = ('minflt', 'majflt', 'utime_ticks', 'stime_ticks')
TASK_ENTITY_SEP = '|'
DUPLICATE_NUDGE_S = 0.001

THREADTIME_RE = re.compile(
    r'^(?P<month>\d\d)-(?P<day>\d\d)\s+(?P<hour>\d\d):(?P<minute>\d\d):(?P<second>\d\d)\.(?P<milli>\d{3})\s+'
    r'(?P<pid>\d+)\s+(?P<tid>\d+)\s+(?P<level>[VDIWEFA])\s+(?P<tag>[^:]*?)\s*:\s?(?P<message>.*)$'
)
BRIEF_RE = re.compile(
    r'^(?P<level>[VDIWEFA])/(?P<tag>[^(:]*?)\s*(?:\(\s*(?P<pid>\d+)\))?\s*:\s?(?P<message>.*)$'
)
DISPLAYED_RE = re.compile(
    r'\bDisplayed\s+(?P<component>[^\s/]+\s*/[^\s:]+):?\s+\+(?P<duration>[^\s(]*)'
)
DURATION_RE = re.compile(r'^(?:(?P<m>\d+)m(?!s))?(?:(?P<s>\d+)s)?(?:(?P<ms>\d+)ms)?$')

_SIZE = r'\d+(?:\.\d+)?[KMG]?B'
_TIME = r'\d+(?:\.\d+)?(?:ms|us|s)'
GC_RE = re.compile(
    r'(?:^|\s)(?P<cause>[A-Z][A-Za-z]*)\s+(?P<algorithm>.*?)\s*GC\s+freed\s+'
    rf'(?P<freed_objects>\d+)\((?P<freed_size>{_SIZE})\)\s+AllocSpace objects,\s*'
    rf'(?P<los_objects>\d+)\((?P<los_size>{_SIZE})\)\s+LOS objects,\s*'
    r'(?:(?P<free_pct>\d+)%\s*free,\s*)?'
    r'(?:(?P<heap>[^\s,]+/[^\s,]+),\s*)?'
    rf'.*?(?:paused\s+)?(?P<pauses>{_TIME}(?:\s*,\s*{_TIME})*)\s+total\s+(?P<total>{_TIME})\s*$'
)
SIZE_RE = re.compile(r'^(?P<num>\d+(?:\.\d+)?)(?P<unit>[KMG]?B)$')
TIME_RE = re.compile(r'^(?P<num>\d+(?:\.\d+)?)(?P<unit>ms|us|s)$')
SIZE_FACTORS = {'B': 1, 'KB': 1024, 'MB': 1024 ** 2, 'GB': 1024 ** 3}
TIME_FACTORS_MS = {'ms': 1.0, 'us': 1e-3, 's': 1e3}

MEMINFO_SECTION_RE = re.compile(r'^\s*Total PSS by process:\s*$')
MEMINFO_ROW_RE = re.compile(
    r'^\s*(?P<kb>[\d,]+)\s*(?:K|kB):\s+(?P<process>\S.*?)\s+\(pid\s+(?P<pid>\d+)[^)]*\)\s*$'
)


class GcCause(Enum):
    EXPLICIT = "Explicit"
    BACKGROUND = "Background"
    CONCURRENT = "Concurrent"
    OTHER = "Other"


@dataclass(frozen=True)
class LaunchEvent:
    t: float
    activity: str
    launch_time_ms: float

    def __post_init__(self):
        if not self.activity:
            raise ValueError("LaunchEvent activity must be non-empty")
        if self.launch_time_ms < 0:
            raise MalformedDuration(f"Negative launch time: {self.launch_time_ms}")


@dataclass(frozen=True)
class GcEvent:
    """
    One ART garbage collection.

    pause_ms holds every pause listed on the line; pause_total_ms (their
    sum) is the value trend-tested. cause_name keeps the raw cause word,
    which matters for GcCause.OTHER ("Alloc", "NativeAlloc", ...).
    """
    t: float
    process: str
    cause: GcCause
    algorithm: str
    freed_objects: int
    freed_bytes: int
    los_objects: int
    los_bytes: int
    pause_ms: Tuple[float, ...]
    total_ms: float
    cause_name: str = ''
    free_pct: Optional[int] = None
    heap: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'pause_ms', tuple(float(p) for p in self.pause_ms))
        if not self.cause_name:
            object.__setattr__(self, 'cause_name', self.cause.value)
        if any(p < 0 for p in self.pause_ms):
            raise ValueError("GC pause times must be >= 0")
        if self.pause_ms and self.total_ms < max(self.pause_ms):
            raise ValueError(f"GC total {self.total_ms} ms is shorter than its longest pause")
        if min(self.freed_objects, self.freed_bytes, self.los_objects, self.los_bytes) < 0:
            raise ValueError("GC counts must be >= 0")

    @property
    def pause_total_ms(self) -> float:
        return float(sum(self.pause_ms))

    @property
    def cause_label(self) -> str:
        return self.cause_name.lower()


@dataclass(frozen=True)
class PssSample:
    t: float
    process: str
    pid: int
    pss_kb: float

    def __post_init__(self):
        if not math.isfinite(self.pss_kb) or self.pss_kb < 0:
            raise NonNumericField(f"PSS for {self.process} must be a finite value >= 0, got {self.pss_kb}")


@dataclass(frozen=True)
class TaskSample:
    t: float
    pid: int
    tid: int
    task_name: str
    minflt: int
    majflt: int
    utime_ticks: int
    stime_ticks: int

    def __post_init__(self):
        if min(self.minflt, self.majflt, self.utime_ticks, self.stime_ticks) < 0:
            raise MalformedStatLine(f"Negative counter for task {self.tid} ({self.task_name})")


@dataclass(frozen=True)
class LogcatRecord:
    """A logcat line split into header fields. stamp_ms is ms since Jan 1 00:00."""
    stamp_ms: Optional[int]
    pid: Optional[int]
    tid: Optional[int]
    level: Optional[str]
    tag: Optional[str]
    message: str


# -- logcat ------------------------------------------------------------------

def parse_threadtime_prefix(line: str) -> Optional[LogcatRecord]:
    m = THREADTIME_RE.match(line)
    if not m:
        return None
    try:
        stamp = datetime(2000, int(m['month']), int(m['day']), int(m['hour']),
                         int(m['minute']), int(m['second']))
    except ValueError:
        return None
    delta = stamp - datetime(2000, 1, 1)
    stamp_ms = (delta.days * 86400 + delta.seconds) * 1000 + int(m['milli'])
    return LogcatRecord(stamp_ms, int(m['pid']), int(m['tid']), m['level'], m['tag'].strip(), m['message'])


def split_logcat_line(line: str) -> LogcatRecord:
    """Split threadtime or brief format; anything else is a bare message."""
    record = parse_threadtime_prefix(line)
    if record is not None:
        return record
    m = BRIEF_RE.match(line)
    if m:
        pid = int(m['pid']) if m['pid'] else None
        return LogcatRecord(None, pid, None, m['level'], m['tag'].strip(), m['message'])
    return LogcatRecord(None, None, None, None, None, line)


def join_wrapped_lines(lines: Iterable[str]) -> List[str]:
    """Glue continuation lines (leading whitespace) back onto their record."""
    joined: List[str] = []
    for raw in lines:
        line = raw.rstrip('\r\n')
        if not line.strip():
            continue
        if joined and line[0] in ' \t':
            joined[-1] = f"{joined[-1].rstrip()} {line.strip()}"
        else:
            joined.append(line.rstrip())
    return joined


def parse_duration_ms(text: str) -> float:
    """'100ms', '1s450ms', '1m2s300ms' -> milliseconds."""
    m = DURATION_RE.match(text)
    if not m or not any(m.groupdict().values()):
        raise MalformedDuration(f"Unparseable launch duration: {text!r}")
    minutes, seconds, millis = (int(m[g] or 0) for g in ('m', 's', 'ms'))
    return float(minutes * 60000 + seconds * 1000 + millis)


def parse_displayed_line(line: str, t: float) -> Optional[LaunchEvent]:
    """Activity Manager 'Displayed <component>: +<duration>' -> LaunchEvent."""
    if 'Displayed' not in line:
        return None
    m = DISPLAYED_RE.search(line)
    if not m:
        return None
    activity = re.sub(r'\s+', '', m['component'])
    return LaunchEvent(t=t, activity=activity, launch_time_ms=parse_duration_ms(m['duration']))


def parse_size_bytes(text: str) -> int:
    m = SIZE_RE.match(text)
    if not m:
        raise MalformedGcLine(f"Bad size field: {text!r}")
    return int(round(float(m['num']) * SIZE_FACTORS[m['unit']]))


def parse_time_ms(text: str) -> float:
    m = TIME_RE.match(text.strip())
    if not m:
        raise MalformedGcLine(f"Bad time field: {text!r}")
    return float(m['num']) * TIME_FACTORS_MS[m['unit']]


def parse_gc_line(line: str, t: float, process: str) -> Optional[GcEvent]:
    """ART 'GC freed ...' line -> GcEvent; None for anything else."""
    if 'GC freed' not in line:
        return None
    record = split_logcat_line(line)
    if record.tag is not None and record.tag != 'art':
        return None

    m = GC_RE.search(record.message)
    if not m:
        raise MalformedGcLine(f"Incomplete art GC line: {line.strip()!r}")

    cause_name = m['cause']
    try:
        cause = GcCause(cause_name)
    except ValueError:
        cause = GcCause.OTHER
    try:
        return GcEvent(
            t=t,
            process=process,
            cause=cause,
            algorithm=m['algorithm'].strip(),
            freed_objects=int(m['freed_objects']),
            freed_bytes=parse_size_bytes(m['freed_size']),
            los_objects=int(m['los_objects']),
            los_bytes=parse_size_bytes(m['los_size']),
            pause_ms=tuple(parse_time_ms(p) for p in m['pauses'].split(',')),
            total_ms=parse_time_ms(m['total']),
            cause_name=cause_name,
            free_pct=int(m['free_pct']) if m['free_pct'] else None,
            heap=m['heap'],
        )
    except MalformedGcLine:
        raise
    except ValueError as e:
        raise MalformedGcLine(f"{e}: {line.strip()!r}") from None


@dataclass
class LogcatParse:
    launches: List[LaunchEvent] = field(default_factory=list)
    gcs: List[GcEvent] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)


def parse_logcat(text: str, pid_names: Optional[Mapping[int, str]] = None,
                 capture_time: float = 0.0, source: str = LOGCAT_FILE) -> LogcatParse:
    """
    Parse a logcat capture.

    Args:
        text: File contents
        pid_names: pid -> process name, used to label GC events
        capture_time: Time used for lines without a threadtime stamp
        source: Name used in error messages
    """
    pid_names = pid_names or {}
    lines = join_wrapped_lines(text.splitlines())
    records = [split_logcat_line(line) for line in lines]
    stamps = [r.stamp_ms for r in records if r.stamp_ms is not None]
    origin = min(stamps) if stamps else None

    result = LogcatParse()
    for lineno, (line, record) in enumerate(zip(lines, records), 1):
        if 'Displayed' not in line and 'GC freed' not in line:
            continue
        t = (record.stamp_ms - origin) / 1000.0 if record.stamp_ms is not None else capture_time
        try:
            launch = parse_displayed_line(line, t)
            if launch is not None:
                result.launches.append(launch)
                continue
            if record.pid is not None:
                process = pid_names.get(record.pid, f"pid{record.pid}")
            else:
                process = 'unknown'
            gc = parse_gc_line(line, t, process)
            if gc is not None:
                result.gcs.append(gc)
        except (MalformedDuration, MalformedGcLine) as e:
            result.errors.append(f"{source}:{lineno}: {e}")
    return result


# -- PSS ---------------------------------------------------------------------

def _read_csv_text(rows: str, columns: Sequence[str]) -> pd.DataFrame:
    if not rows.strip():
        raise BadHeader(f"Missing header, expected {','.join(columns)}")
    try:
        df = pd.read_csv(io.StringIO(rows), dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise NonNumericField(f"Malformed CSV row: {e}") from None
    header = [c.strip() for c in df.columns]
    if header != list(columns):
        raise BadHeader(f"Expected header {','.join(columns)}, got {','.join(header)}")
    df.columns = header
    return df


def _numeric(df: pd.DataFrame, column: str, integral: bool = False, nonnegative: bool = False) -> pd.Series:
    """Column as numbers; NaN, inf and (optionally) negative values are rejected."""
    values = pd.to_numeric(df[column].str.strip(), errors='coerce')
    raw = values.to_numpy(dtype=float)
    bad = ~np.isfinite(raw)
    if integral:
        bad |= np.mod(raw, 1.0, out=np.zeros_like(raw), where=~bad) != 0
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise NonNumericField(f"Row {first + 1}: {column}={df[column].iloc[first]!r} is not a finite number")
    if nonnegative and (values < 0).any():
        first = int(np.flatnonzero((values < 0).to_numpy())[0])
        raise NonNumericField(f"Row {first + 1}: {column}={df[column].iloc[first]!r} is negative")
    return values.astype('int64') if integral else values.astype(float)


def parse_pss_csv(rows: str) -> List[PssSample]:
    """Normalized PSS capture (t_s,process,pid,pss_kb) -> samples ordered by t."""
    df = _read_csv_text(rows, PSS_COLUMNS)
    if df.empty:
        return []
    df = df.assign(
        t_s=_numeric(df, 't_s'),
        pid=_numeric(df, 'pid', integral=True, nonnegative=True),
        pss_kb=_numeric(df, 'pss_kb', nonnegative=True),
        process=df['process'].str.strip(),
    ).sort_values('t_s', kind='mergesort')
    return [PssSample(float(r.t_s), r.process, int(r.pid), float(r.pss_kb)) for r in df.itertuples(index=False)]


def parse_dumpsys_meminfo(text: str, t: float) -> List[PssSample]:
    """
    Best-effort: read the 'Total PSS by process:' block of `dumpsys meminfo`.

    Rows look like '   151,000K: system (pid 1097)'; anything after the
    block is ignored.
    """
    samples = []
    in_section = False
    for line in text.splitlines():
        if MEMINFO_SECTION_RE.match(line):
            in_section = True
            continue
        if not in_section:
            continue
        m = MEMINFO_ROW_RE.match(line)
        if m:
            samples.append(PssSample(t, m['process'], int(m['pid']), float(m['kb'].replace(',', ''))))
        elif line.strip():
            break
    return samples


# -- procfs task stats -------------------------------------------------------

def parse_task_stat_line(line: str, t: float, pid: Optional[int] = None) -> TaskSample:
    """
    Kernel `stat` line -> TaskSample.

    comm is taken between the first '(' and the LAST ')', so names with
    spaces or parentheses survive. Counters are fields 10, 12, 14, 15.
    """
    text = line.strip()
    start, end = text.find('('), text.rfind(')')
    if start <= 0 or end < start:
        raise MalformedStatLine(f"No (comm) in stat line: {line!r}")
    tid_text = text[:start].strip()
    rest = text[end + 1:].split()
    if not tid_text.isdigit() or len(rest) < 13:
        raise MalformedStatLine(f"Truncated stat line: {line!r}")

    counters = rest[7], rest[9], rest[11], rest[12]
    if not all(c.isdigit() for c in counters):
        raise MalformedStatLine(f"Non-numeric counter in stat line: {line!r}")
    minflt, majflt, utime, stime = (int(c) for c in counters)
    tid = int(tid_text)
    return TaskSample(
        t=t,
        pid=tid if pid is None else int(pid),
        tid=tid,
        task_name=text[start + 1:end],
        minflt=minflt,
        majflt=majflt,
        utime_ticks=utime,
        stime_ticks=stime,
    )


def parse_task_stat_snapshot(text: str, t: float, pid: Optional[int] = None) -> List[TaskSample]:
    """Raw stat lines captured at one instant."""
    return [parse_task_stat_line(line, t, pid) for line in text.splitlines() if line.strip()]


def parse_tasks_csv(rows: str) -> List[TaskSample]:
    df = _read_csv_text(rows, TASK_COLUMNS)
    if df.empty:
        return []
    times = _numeric(df, 't_s')
    pids = _numeric(df, 'pid', integral=True)
    samples = [
        parse_task_stat_line(line, float(t), int(pid))
        for t, pid, line in zip(times, pids, df['stat_line'])
    ]
    samples.sort(key=lambda s: s.t)
    return samples


# -- series assembly ---------------------------------------------------------

def task_entity(process: str, tid: int, task_name: str) -> str:
    return TASK_ENTITY_SEP.join([process, str(tid), task_name])


def split_task_entity(entity: str) -> Tuple[str, int, str]:
    process, tid, name = entity.split(TASK_ENTITY_SEP, 2)
    return process, int(tid), name


def gc_metric(kind: str, cause_label: str) -> str:
    """gc_metric('total', 'explicit') -> 'gc_total_ms.explicit'."""
    return f"gc_{kind}_ms.{cause_label}"


def _strictly_increasing(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    t = t.astype(float).copy()
    flags = np.zeros(len(t), dtype=bool)
    for i in range(1, len(t)):
        if t[i] <= t[i - 1]:
            t[i] = t[i - 1] + DUPLICATE_NUDGE_S
            flags[i] = True
    return t, flags


def build_series(events: Iterable[Union[LaunchEvent, GcEvent, PssSample, TaskSample]],
                 experiment: Optional[str] = None,
                 process_names: Optional[Mapping[int, str]] = None,
                 entities: Optional[Container[str]] = None,
                 metrics: Optional[Container[str]] = None) -> List[MetricSeries]:
    """
    Group events into one series per (entity, metric).

    Launch events feed both a pooled 'all-activities' series and a series
    per activity. GC events give gc_total_ms.<cause> and gc_pause_ms.<cause>
    per process. Task samples give cumulative minflt/majflt/utime_ticks/
    stime_ticks per task. Duplicate timestamps within a series are nudged
    forward by 1 ms and flagged.

    Args:
        events: Parsed events, any mix of types
        experiment: Experiment id stamped on every series
        process_names: pid -> process name for task entities
        entities: If given, keep only these entities
        metrics: If given, keep only these metrics
    """
    process_names = process_names or {}
    points: Dict[Tuple[str, str], List[Tuple[float, float]]] = {}
    kinds: Dict[Tuple[str, str], SeriesKind] = {}

    def add(entity, metric, t, value, kind=SeriesKind.INSTANTANEOUS):
        if entities is not None and entity not in entities:
            return
        if metrics is not None and metric not in metrics:
            return
        points.setdefault((entity, metric), []).append((t, value))
        kinds[(entity, metric)] = kind

    for ev in events:
        if isinstance(ev, LaunchEvent):
            add(POOLED_ACTIVITY, 'launch_time_ms', ev.t, ev.launch_time_ms)
            add(ev.activity, 'launch_time_ms', ev.t, ev.launch_time_ms)
        elif isinstance(ev, GcEvent):
            add(ev.process, gc_metric('total', ev.cause_label), ev.t, ev.total_ms)
            add(ev.process, gc_metric('pause', ev.cause_label), ev.t, ev.pause_total_ms)
        elif isinstance(ev, PssSample):
            add(ev.process, 'pss_kb', ev.t, ev.pss_kb)
        elif isinstance(ev, TaskSample):
            entity = task_entity(process_names.get(ev.pid, str(ev.pid)), ev.tid, ev.task_name)
            for metric in TASK_METRICS:
                add(entity, metric, ev.t, getattr(ev, metric), SeriesKind.CUMULATIVE)
        else:
            raise TypeError(f"Unsupported event type: {type(ev).__name__}")

    series = []
    for (entity, metric) in sorted(points):
        data = np.array(points[(entity, metric)], dtype=float)
        order = np.argsort(data[:, 0], kind='mergesort')
        t, flags = _strictly_increasing(data[order, 0])
        if flags.any():
            logger.debug("%s/%s: %d duplicate timestamp(s) nudged", entity, metric, int(flags.sum()))
        series.append(MetricSeries(
            entity=entity,
            metric=metric,
            unit=unit_for_metric(metric),
            kind=kinds[(entity, metric)],
            t=t,
            values=data[order, 1],
            flags=flags,
            experiment=experiment,
        ))
    return series


# -- experiment captures ------------------------------------------------------

def read_text(path: Union[str, Path]) -> Tuple[str, int]:
    """Read a capture as text; returns (text, count of undecodable bytes dropped)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from None
    text = raw.decode('utf-8', errors='replace')
    dropped = text.count('\ufffd')
    if dropped:
        logger.warning("%s: skipped %d undecodable byte sequence(s)", path, dropped)
        text = text.replace('\ufffd', '')
    return text, dropped


def sniff_kind(path: Path) -> str:
    """'pss', 'tasks' or 'logcat' from the file name or CSV header."""
    name = path.name.lower()
    if name.startswith('pss') and name.endswith('.csv'):
        return 'pss'
    if name.startswith('tasks') and name.endswith('.csv'):
        return 'tasks'
    if name.endswith('.csv'):
        try:
            with open(path, 'r', errors='replace') as f:
                header = [c.strip() for c in f.readline().strip().split(',')]
        except OSError as e:
            raise IoFailure(f"Cannot read {path}: {e}") from None
        if header == PSS_COLUMNS:
            return 'pss'
        if header == TASK_COLUMNS:
            return 'tasks'
    return 'logcat'


@dataclass
class ExperimentCapture:
    """Everything parsed for one experiment, plus what could not be parsed."""
    experiment: str
    launches: List[LaunchEvent] = field(default_factory=list)
    gcs: List[GcEvent] = field(default_factory=list)
    pss: List[PssSample] = field(default_factory=list)
    tasks: List[TaskSample] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    undecodable_bytes: int = 0

    @property
    def record_count(self) -> int:
        return len(self.launches) + len(self.gcs) + len(self.pss) + len(self.tasks)

    @property
    def pid_names(self) -> Dict[int, str]:
        return {s.pid: s.process for s in self.pss}

    def series(self) -> List[MetricSeries]:
        events = [*self.launches, *self.gcs, *self.pss, *self.tasks]
        return build_series(events, experiment=self.experiment, process_names=self.pid_names)


def read_experiment(experiment: str, files: Sequence[Union[str, Path]]) -> ExperimentCapture:
    """
    Parse the capture files of one experiment.

    CSV captures are read first so that their pid -> process map can label
    GC lines in the logcat files. A file that fails as a whole (bad header,
    non-finite or negative value, malformed stat line) is recorded in
    `errors` and the rest of the experiment is still read.
    """
    capture = ExperimentCapture(experiment)
    by_kind: Dict[str, List[Path]] = {'pss': [], 'tasks': [], 'logcat': []}
    for f in files:
        by_kind[sniff_kind(Path(f))].append(Path(f))

    for path in by_kind['pss'] + by_kind['tasks']:
        text, dropped = read_text(path)
        capture.undecodable_bytes += dropped
        try:
            if path in by_kind['pss']:
                capture.pss.extend(parse_pss_csv(text))
            else:
                capture.tasks.extend(parse_tasks_csv(text))
        except DataError as e:
            capture.errors.append(f"{path}: {e}")

    pid_names = capture.pid_names
    for path in by_kind['logcat']:
        text, dropped = read_text(path)
        capture.undecodable_bytes += dropped
        parsed = parse_logcat(text, pid_names=pid_names, source=str(path))
        capture.launches.extend(parsed.launches)
        capture.gcs.extend(parsed.gcs)
        capture.errors.extend(parsed.errors)

    capture.pss.sort(key=lambda s: s.t)
    capture.tasks.sort(key=lambda s: s.t)
    capture.launches.sort(key=lambda e: e.t)
    capture.gcs.sort(key=lambda e: e.t)
    if capture.errors:
        logger.warning("%s: %d parse error(s)", experiment, len(capture.errors))
    return capture


def _capture_files(directory: Path) -> List[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in ('.txt', '.log', '.csv'))


def discover_experiments(paths: Sequence[Union[str, Path]]) -> Dict[str, List[Path]]:
    """
    Map experiment id -> capture files.

    A directory holding capture files is one experiment named after the
    directory; otherwise each of its subdirectories is. A bare file is an
    experiment named after its directory when it carries a standard capture
    name (logcat.txt, pss.csv, tasks.csv), else after its stem.
    """
    found: Dict[str, List[Path]] = {}
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            raise IoFailure(f"Input not found: {path}")
        if path.is_file():
            standard = path.name in (LOGCAT_FILE, PSS_FILE, TASKS_FILE)
            exp_id = path.resolve().parent.name if standard else path.stem
            found.setdefault(exp_id, []).append(path)
            continue
        own = _capture_files(path)
        if own:
            found.setdefault(path.resolve().name, []).extend(own)
        for sub in sorted(p for p in path.iterdir() if p.is_dir()):
            files = _capture_files(sub)
            if files:
                found.setdefault(sub.name, []).extend(files)
    return dict(sorted(found.items()))
