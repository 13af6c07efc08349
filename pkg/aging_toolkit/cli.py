"""
Command-line pipeline for aging analysis.

Stages are file-mediated so each can be rerun on its own:

    ingest    captures -> series store (one <exp_id>.csv per experiment)
    detect    store -> trend verdicts (csv or json)
    compare   verdicts + plan -> one-way comparison per factor
    correlate verdicts -> Spearman correlation of slope vectors
    rank      verdicts -> per-process GC / per-task-group trend counts
    aging-report  baseline + rejuvenated verdicts (or a table) -> TTAF and gains
    synth     corpus spec -> synthetic capture tree
    calibrate Monte Carlo false-positive / power check of the trend battery

Usage:
    python cli.py ingest captures/ --out store/
    python cli.py detect store/ --out verdicts.csv --jobs 4
    python cli.py compare verdicts.csv --factor VER --where DEV=HUAWEIP8
    python cli.py rank verdicts.csv --unit task

Exit codes: 0 success, 1 usage error, 2 empty or invalid data,
3 statistical precondition failure.
"""

import argparse
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parent))

from aging import (DegradationProjection, SERIES_GC_METRICS, GC_METRICS, TaskGroupRules, aging_report_from_projections,
                   aging_report_from_verdicts, count_gc_trends, rank_task_groups, ranking_table)
from calibration import N_SIMS, SCENARIOS, format_summary, get_scenario, phi_noise_grid, run_calibration, sweep
from config import RunConfig, load_run_config
from errors import BadHeader, DataError, IoFailure, NoRecords, StatisticalPreconditionError, TooShort
from groupstats import RESIDUALS_NOTE, comparison_table, compare_groups, grouped_slopes, spearman_correlation
from ingest import POOLED_ACTIVITY, TASK_ENTITY_SEP, discover_experiments, read_experiment
from model import STORE_COLUMNS, ExperimentPlan, FactorName, MetricSeries, SeriesKind, to_rate_series
from synth import DEFAULT_CORPUS, CorpusSpec, generate_log_corpus
from trend import MIN_DETECT_SAMPLES, TrendVerdict, detect_trend

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_STATS = 3

DEFAULT_RESPONSE = f"{POOLED_ACTIVITY}:launch_time_ms"
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
BANNER = "=" * 70

T = TypeVar('T')
R = TypeVar('R')


class AgingArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is taken by data errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers -------------------------------------------------------------------

def natural_key(text: str) -> Tuple:
    """EXP2 before EXP10."""
    return tuple(int(part) if part.isdigit() else part for part in re.split(r'(\d+)', text))


def run_pool(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> List[R]:
    """Map in a bounded pool; results keep the order of `items`."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if hasattr(value, 'item'):
        return _json_safe(value.item())
    return value


def canonical_json(obj: Any) -> str:
    return json.dumps(_json_safe(obj), sort_keys=True, indent=2) + '\n'


def emit_table(df: pd.DataFrame, fmt: str, out: Optional[str]):
    """Write a report as csv or canonical json, to a file or stdout."""
    if fmt == 'json':
        text = canonical_json(df.to_dict(orient='records'))
    else:
        text = df.to_csv(index=False)
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, 'w', newline='') as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"Cannot write {out}: {e}") from None


def print_summary(title: str, lines: Iterable[str], out: Optional[str]):
    # keep stdout clean when the report itself goes there
    stream = sys.stdout if out is not None else sys.stderr
    print(BANNER, file=stream)
    print(title, file=stream)
    print(BANNER, file=stream)
    for line in lines:
        print(line, file=stream)
    print(BANNER, file=stream)


def parse_response(text: str) -> Tuple[str, str]:
    """'ENTITY:METRIC' -> (entity, metric); entities may contain ':'."""
    entity, sep, metric = text.rpartition(':')
    if not sep or not entity or not metric:
        raise ValueError(f"Expected ENTITY:METRIC, got {text!r}")
    return entity, metric


def parse_where(items: Optional[Sequence[str]]) -> Dict[str, List[str]]:
    where: Dict[str, List[str]] = {}
    for item in items or ():
        name, sep, level = item.partition('=')
        if not sep or not level:
            raise ValueError(f"Expected FACTOR=LEVEL, got {item!r}")
        where.setdefault(FactorName.parse(name).value, []).append(level.strip())
    return where


# -- series store --------------------------------------------------------------

def write_store(experiment: str, series: Sequence[MetricSeries], store_dir: Path) -> int:
    frame = pd.concat([s.to_frame() for s in series], ignore_index=True) if series else \
        pd.DataFrame(columns=STORE_COLUMNS)
    path = store_dir / f"{experiment}.csv"
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from None
    return len(frame)


def read_store_file(path: Path) -> List[MetricSeries]:
    try:
        df = pd.read_csv(path, dtype={'entity': str, 'metric': str, 'kind': str}, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise BadHeader(f"{path}: empty store file") from None
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from None
    if list(df.columns) != STORE_COLUMNS:
        raise BadHeader(f"{path}: expected header {','.join(STORE_COLUMNS)}, got {','.join(df.columns)}")
    if df.empty:
        return []
    return MetricSeries.from_frame(df, experiment=path.stem)


def load_store(store: str) -> Dict[str, List[MetricSeries]]:
    """experiment id -> series, from a store directory or a single store file."""
    path = Path(store)
    if not path.exists():
        raise IoFailure(f"Store not found: {path}")
    files = sorted(path.glob('*.csv'), key=lambda p: natural_key(p.stem)) if path.is_dir() else [path]
    loaded = {f.stem: read_store_file(f) for f in files}
    if not any(loaded.values()):
        raise NoRecords(f"{store}: no records")
    return loaded


# -- verdict files ---------------------------------------------------------------

VERDICT_TEXT_COLUMNS = {'series_id': str, 'experiment': str, 'entity': str, 'metric': str,
                        'transform': str, 'route': str}


def write_verdicts(verdicts: Sequence[TrendVerdict], fmt: str, out: Optional[str]):
    if fmt == 'json':
        text = canonical_json([v.to_record() for v in verdicts])
        if out is None:
            sys.stdout.write(text)
            return
        try:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text)
        except OSError as e:
            raise IoFailure(f"Cannot write {out}: {e}") from None
        return
    emit_table(pd.DataFrame([v.to_row() for v in verdicts]), 'csv', out)


def load_verdicts(path: str) -> List[TrendVerdict]:
    """Verdicts from a json or csv file written by `detect`."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise IoFailure(f"Cannot read verdicts {p}: {e}") from None
    if not text.strip():
        raise NoRecords(f"{p}: no verdicts")
    try:
        if text.lstrip()[0] in '[{':
            records = json.loads(text)
            verdicts = [TrendVerdict.from_record(r) for r in records]
        else:
            df = pd.read_csv(p, dtype=VERDICT_TEXT_COLUMNS)
            verdicts = [TrendVerdict.from_row(row) for row in df.to_dict(orient='records')]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        if isinstance(e, DataError):
            raise
        raise BadHeader(f"{p}: not a verdict file ({e})") from None
    if not verdicts:
        raise NoRecords(f"{p}: no verdicts")
    return verdicts


def _experiment_of(v: TrendVerdict) -> str:
    return v.experiment or v.series_id


# -- commands ------------------------------------------------------------------

def cmd_ingest(args, config: RunConfig) -> int:
    experiments = discover_experiments(args.paths)
    if not experiments:
        raise NoRecords("no records: no capture files found")
    store_dir = Path(args.out)
    try:
        store_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"Cannot create store {store_dir}: {e}") from None

    def one(item):
        exp_id, files = item
        capture = read_experiment(exp_id, files)
        rows = write_store(exp_id, capture.series(), store_dir) if capture.record_count else 0
        return exp_id, capture, rows

    results = run_pool(one, sorted(experiments.items(), key=lambda kv: natural_key(kv[0])), config.jobs)
    records = sum(c.record_count for _, c, _ in results)
    rows = sum(r for _, _, r in results)
    errors = [e for _, c, _ in results for e in c.errors]

    lines = [f"{exp_id}: {c.record_count} records, {r} store rows, {len(c.errors)} errors"
             for exp_id, c, r in results]
    if errors:
        lines += ["", "Parse errors:"] + [f"  {e}" for e in errors]
    undecodable = sum(c.undecodable_bytes for _, c, _ in results)
    if undecodable:
        lines.append(f"Skipped {undecodable} undecodable byte sequence(s)")
    lines.append(f"Total: {records} records, {rows} store rows in {store_dir}")
    print_summary("INGEST SUMMARY", lines, args.out)

    if records == 0:
        raise NoRecords("no records parsed")
    if errors:
        failed = sorted({e.split(': ', 1)[0].rsplit(':', 1)[0] for e in errors})
        raise DataError(f"{len(errors)} parse error(s) in {len(failed)} file(s); "
                        f"{records} valid records were stored")
    return EXIT_OK


def detect_experiment(series: Sequence[MetricSeries], alpha: float
                      ) -> Tuple[List[TrendVerdict], List[Dict[str, Any]]]:
    """Battery on every series of one experiment; cumulative counters are tested as rates."""
    verdicts, skipped = [], []
    for s in series:
        transform = None
        try:
            if s.kind is SeriesKind.CUMULATIVE:
                s, transform = to_rate_series(s), 'rate'
            if len(s) < MIN_DETECT_SAMPLES:
                raise TooShort(f"{len(s)} samples, need {MIN_DETECT_SAMPLES}")
            verdicts.append(detect_trend(s, alpha, transform))
        except StatisticalPreconditionError as e:
            skipped.append({'series_id': s.series_id, 'n': len(s), 'reason': str(e)})
    return verdicts, skipped


def cmd_detect(args, config: RunConfig) -> int:
    store = load_store(args.store)
    items = list(store.items())
    results = run_pool(lambda item: detect_experiment(item[1], config.alpha), items, config.jobs)

    verdicts = [v for vs, _ in results for v in vs]
    skipped = [s for _, ss in results for s in ss]
    write_verdicts(verdicts, config.format, args.out)
    if args.out and skipped:
        skipped_path = Path(args.out).with_name(f"{Path(args.out).stem}_skipped.csv")
        pd.DataFrame(skipped, columns=['series_id', 'n', 'reason']).to_csv(skipped_path, index=False)

    declared = sum(v.declared for v in verdicts)
    lines = [f"Series tested: {len(verdicts)}",
             f"Declared trends: {declared} ({sum(v.increasing for v in verdicts)} increasing)",
             f"Skipped: {len(skipped)}"]
    lines += [f"  {s['series_id']} (n={s['n']}): {s['reason']}" for s in skipped]
    print_summary("TREND DETECTION SUMMARY", lines, args.out)
    if not verdicts:
        raise NoRecords("no series long enough to test")
    return EXIT_OK


def response_slopes(verdicts: Sequence[TrendVerdict], entity: str, metric: str
                    ) -> Tuple[Dict[str, float], Dict[str, str]]:
    slopes, series = {}, {}
    for v in verdicts:
        if v.entity == entity and v.metric == metric:
            slopes[_experiment_of(v)] = v.slope
            series[_experiment_of(v)] = v.series_id
    return slopes, series


def cmd_compare(args, config: RunConfig) -> int:
    verdicts = load_verdicts(args.verdicts)
    plan = ExperimentPlan.from_csv(args.plan) if args.plan else ExperimentPlan.bundled()
    where = parse_where(args.where)
    if where:
        plan = plan.restrict(**where)

    rows = []
    for response in args.response or [DEFAULT_RESPONSE]:
        entity, metric = parse_response(response)
        slopes, series = response_slopes(verdicts, entity, metric)
        if not slopes:
            raise NoRecords(f"No verdicts for {response}")
        sub_plan = ExperimentPlan(tuple(c for c in plan if c.id in slopes), plan.level_sets)
        for factor in args.factor:
            grouped = grouped_slopes(sub_plan, FactorName.parse(factor), slopes, strict=not args.no_strict)
            comparison = compare_groups(grouped, config.alpha)
            used = sorted((i for ids in grouped.experiments.values() for i in ids), key=natural_key)
            row = comparison.to_row(response, grouped.factor)
            row['statistic'] = comparison.statistic
            row['groups'] = ';'.join(f"{k}={len(v)}" for k, v in grouped.groups.items())
            row['note'] = RESIDUALS_NOTE
            row['experiments'] = ';'.join(used)
            row['series'] = ';'.join(series[i] for i in used)
            rows.append(row)

    df = comparison_table(rows)
    emit_table(df, config.format, args.out)
    print_summary("FACTOR COMPARISON", [
        f"{r['response']} ~ {r['factor']}: {r['routed']} p={r['p_value']:.4g}"
        f"{' (significant)' if r['significant'] else ''}" for r in rows
    ], args.out)
    return EXIT_OK


CORRELATION_COLUMNS = ['process', 'rho', 'p', 'metric', 'response', 'n', 'significant', 'experiments', 'series']


def cmd_correlate(args, config: RunConfig) -> int:
    verdicts = load_verdicts(args.verdicts)
    y_entity, y_metric = parse_response(args.y)
    y_slopes, y_series = response_slopes(verdicts, y_entity, y_metric)
    if not y_slopes:
        raise NoRecords(f"No verdicts for {args.y}")

    if ':' in args.x:
        x_entity, x_metric = parse_response(args.x)
        x_entities = [x_entity]
    else:
        x_metric = args.x
        x_entities = sorted({v.entity for v in verdicts if v.metric == x_metric})
    if not x_entities:
        raise NoRecords(f"No verdicts for metric {x_metric}")

    rows, last_error = [], None
    for entity in x_entities:
        x_slopes, x_series = response_slopes(verdicts, entity, x_metric)
        common = sorted(set(x_slopes) & set(y_slopes), key=natural_key)
        try:
            result = spearman_correlation([x_slopes[i] for i in common], [y_slopes[i] for i in common])
        except StatisticalPreconditionError as e:
            logger.warning("%s:%s skipped: %s", entity, x_metric, e)
            last_error = e
            continue
        rows.append({
            'process': entity,
            'rho': result.rho,
            'p': result.p_value,
            'metric': x_metric,
            'response': args.y,
            'n': result.n,
            'significant': result.p_value < config.alpha,
            'experiments': ';'.join(common),
            'series': ';'.join([x_series[i] for i in common] + [y_series[i] for i in common]),
        })
    if not rows:
        raise last_error
    emit_table(pd.DataFrame(rows, columns=CORRELATION_COLUMNS), config.format, args.out)
    print_summary("SPEARMAN CORRELATION",
                  [f"{r['process']}:{r['metric']} vs {r['response']}: rho={r['rho']:+.3f} p={r['p']:.4g} n={r['n']}"
                   for r in rows], args.out)
    return EXIT_OK


def cmd_rank(args, config: RunConfig) -> int:
    verdicts = load_verdicts(args.verdicts)
    if args.unit == 'process':
        keyed = {(v.entity, v.metric, _experiment_of(v)): v for v in verdicts
                 if v.metric in SERIES_GC_METRICS or v.metric in GC_METRICS}
        rankings = count_gc_trends(keyed, min_samples=config.min_gc_samples, top_n=args.top or config.gc_top_n)
    else:
        rules = TaskGroupRules.load(args.rules) if args.rules else TaskGroupRules.bundled()
        keyed = {(v.entity, v.metric, _experiment_of(v)): v for v in verdicts if TASK_ENTITY_SEP in v.entity}
        rankings = rank_task_groups(keyed, rules, top_n=args.top or config.task_top_n)
    if not keyed:
        raise NoRecords(f"No verdicts usable for a {args.unit} ranking")

    df = ranking_table(rankings)
    emit_table(df, config.format, args.out)
    lines = []
    for ranking in rankings:
        scope = f" [{ranking.scope}]" if ranking.scope else ''
        top = ', '.join(f"{name}={ranking.counts[name]:g}" for name in ranking.top_n)
        lines.append(f"{ranking.metric}{scope} ({ranking.experiments_analyzed} experiments): {top}")
    print_summary("TREND COUNT RANKING", lines, args.out)
    return EXIT_OK


AGING_TABLE_REQUIRED = ['activity', 'lt_increase_ms', 'lt_increase_r']


def read_aging_table(path: str, config: RunConfig) -> List[Tuple[str, DegradationProjection, DegradationProjection]]:
    """Rows of activity,lt_increase_ms[,ttaf_h],lt_increase_r[,ttaf_r]."""
    try:
        df = pd.read_csv(path, dtype={'activity': str})
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from None
    except pd.errors.EmptyDataError:
        raise NoRecords(f"{path}: empty table") from None
    missing = [c for c in AGING_TABLE_REQUIRED if c not in df.columns]
    if missing:
        raise BadHeader(f"{path}: missing column(s) {', '.join(missing)}")
    if df.empty:
        raise NoRecords(f"{path}: no rows")

    def optional(row, column):
        value = row.get(column)
        return None if value is None or pd.isna(value) else float(value)

    pairs = []
    for row in df.to_dict(orient='records'):
        base = DegradationProjection.from_observed(float(row['lt_increase_ms']), config.horizon_s,
                                                   config.threshold_ms, optional(row, 'ttaf_h'))
        rejuv = DegradationProjection.from_observed(float(row['lt_increase_r']), config.horizon_s,
                                                    config.threshold_ms, optional(row, 'ttaf_r'))
        pairs.append((row['activity'], base, rejuv))
    return pairs


def cmd_aging_report(args, config: RunConfig) -> int:
    if args.table:
        report = aging_report_from_projections(read_aging_table(args.table, config))
    else:
        if not (args.baseline and args.rejuvenated):
            raise ValueError("aging-report needs --table, or both --baseline and --rejuvenated")
        report = aging_report_from_verdicts(load_verdicts(args.baseline), load_verdicts(args.rejuvenated),
                                            config.horizon_s, config.threshold_ms, args.metric)
    if not report.rows:
        raise NoRecords("No activity with an increasing baseline trend and a rejuvenated counterpart")

    df = report.to_frame()
    emit_table(df, config.format, args.out)
    lines = [f"{r.activity}: LT +{r.baseline.lt_increase:.3f} ms -> +{r.rejuvenated.lt_increase:.3f} ms, "
             f"TTAF {r.baseline.ttaf_h:.3f} h -> {r.rejuvenated.ttaf_h:.3f} h, "
             f"gains {r.gain.rounded[0]:+}% / {r.gain.rounded[1]:+}%" for r in report.rows]
    avg_lt, avg_ttaf = report.average_gain.rounded
    lines.append(f"Average gains: {avg_lt:+}% / {avg_ttaf:+}%")
    print_summary("AGING REPORT", lines, args.out)
    return EXIT_OK


def cmd_synth(args, config: RunConfig) -> int:
    spec = CorpusSpec.load(args.spec) if args.spec else CorpusSpec.from_dict(DEFAULT_CORPUS)
    if args.seed is not None or os.environ.get('AGING_SEED'):
        spec = replace(spec, seed=config.seed)
    manifest = generate_log_corpus(spec, args.out, jobs=config.jobs)
    print_summary("SYNTHETIC CORPUS", [
        f"Experiments: {len(manifest.experiments)}",
        f"Records: {manifest.record_count}",
        f"Seed: {manifest.seed}",
        f"Output: {manifest.out_dir}",
    ], args.out)
    return EXIT_OK


def cmd_calibrate(args, config: RunConfig) -> int:
    base = get_scenario(args.scenario)
    if args.sweep_phi or args.sweep_sigma:
        scenarios = phi_noise_grid(base, args.sweep_phi or [base.ar1_phi], args.sweep_sigma or [base.noise_sigma])
        df = sweep(scenarios, args.sims, config.seed, config.alpha, config.jobs)
        emit_table(df, config.format, args.out)
        return EXIT_OK

    summary = run_calibration(base, args.sims, config.seed, config.alpha, config.jobs)
    print(format_summary(summary), file=sys.stdout if args.out else sys.stderr)
    if args.out:
        emit_table(summary.results, config.format, args.out)
    else:
        emit_table(pd.DataFrame([summary.to_row()]), config.format, None)
    return EXIT_OK


COMMANDS = {
    'ingest': cmd_ingest,
    'detect': cmd_detect,
    'compare': cmd_compare,
    'correlate': cmd_correlate,
    'rank': cmd_rank,
    'aging-report': cmd_aging_report,
    'synth': cmd_synth,
    'calibrate': cmd_calibrate,
}


def build_parser() -> AgingArgumentParser:
    common = AgingArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run config (default: $AGING_CONFIG)')
    common.add_argument('--alpha', type=float, help='Significance level (default 0.05)')
    common.add_argument('--horizon-s', type=float, help='Projection horizon in seconds (default 21600)')
    common.add_argument('--threshold-ms', type=float, help='Aging-failure threshold in ms (default 200)')
    common.add_argument('--min-gc-samples', type=int, help='GC series shorter than this are not counted (default 100)')
    common.add_argument('--format', choices=['csv', 'json'], help='Output format (default csv)')
    common.add_argument('--jobs', type=int, help='Worker pool size (default 1)')
    common.add_argument('--seed', type=int, help='Base seed for synth and calibrate')
    common.add_argument('--out', help='Output path (default stdout)')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Warnings and errors only')

    parser = AgingArgumentParser(prog='aging', description='Software aging analysis of device telemetry')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=AgingArgumentParser)

    p = sub.add_parser('ingest', parents=[common], help='Parse captures into a series store')
    p.add_argument('paths', nargs='+', help='Capture files or directories')

    p = sub.add_parser('detect', parents=[common], help='Run the trend battery on a series store')
    p.add_argument('store', help='Store directory (or one store csv)')

    p = sub.add_parser('compare', parents=[common], help='Compare slopes across the levels of a factor')
    p.add_argument('verdicts')
    p.add_argument('--factor', action='append', required=True, help='DEV, VER, APP, EVENTS or STO (repeatable)')
    p.add_argument('--plan', help='Plan manifest csv (default: bundled 72-experiment plan)')
    p.add_argument('--where', action='append', metavar='F=LEVEL', help='Restrict the plan (repeatable)')
    p.add_argument('--response', action='append', metavar='ENTITY:METRIC',
                   help=f'Response series (repeatable, default {DEFAULT_RESPONSE})')
    p.add_argument('--no-strict', action='store_true', help='Drop configurations without a counterpart')

    p = sub.add_parser('correlate', parents=[common], help='Spearman correlation of slope vectors')
    p.add_argument('verdicts')
    p.add_argument('--x', required=True, help='METRIC (one row per entity carrying it) or ENTITY:METRIC')
    p.add_argument('--y', default=DEFAULT_RESPONSE, help='ENTITY:METRIC')

    p = sub.add_parser('rank', parents=[common], help='Rank processes or task groups by trend counts')
    p.add_argument('verdicts')
    p.add_argument('--unit', choices=['process', 'task'], required=True)
    p.add_argument('--rules', help='Task group rules json (default: bundled)')
    p.add_argument('--top', type=int, help='Ranking length (default 5 for process, 10 for task)')

    p = sub.add_parser('aging-report', parents=[common], help='TTAF and rejuvenation gains')
    p.add_argument('--baseline', help='Verdicts without rejuvenation')
    p.add_argument('--rejuvenated', help='Verdicts with rejuvenation')
    p.add_argument('--table', help='csv with activity,lt_increase_ms[,ttaf_h],lt_increase_r[,ttaf_r]')
    p.add_argument('--metric', default='launch_time_ms')

    p = sub.add_parser('synth', parents=[common], help='Generate a synthetic capture tree')
    p.add_argument('--spec', help='Corpus spec json (default: built-in corpus over the bundled plan)')

    p = sub.add_parser('calibrate', parents=[common], help='Monte Carlo calibration of the trend battery')
    p.add_argument('--scenario', choices=sorted(SCENARIOS), default='white_noise')
    p.add_argument('--sims', type=int, default=N_SIMS, help='Number of simulations')
    p.add_argument('--sweep-phi', type=float, nargs='+', help='AR(1) coefficients to sweep')
    p.add_argument('--sweep-sigma', type=float, nargs='+', help='Noise levels to sweep')
    return parser


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger().setLevel(level)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)

    if args.command in ('ingest', 'synth') and not args.out:
        parser.error(f"{args.command} requires --out")

    try:
        config = load_run_config(args.config, {
            'alpha': args.alpha,
            'horizon_s': args.horizon_s,
            'threshold_ms': args.threshold_ms,
            'min_gc_samples': args.min_gc_samples,
            'format': args.format,
            'jobs': args.jobs,
            'seed': args.seed,
        })
        logger.debug("Run config: %s", config.to_dict())
        return COMMANDS[args.command](args, config)
    except DataError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except StatisticalPreconditionError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STATS
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
