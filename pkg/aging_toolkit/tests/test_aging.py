import json
import math

import pytest

from aging import (GC_METRICS, OTHER_GROUP, RANKING_COLUMNS, DegradationProjection, RankUnit, RejuvenationGain,
                   TaskGroupRules, aging_report_from_projections, aging_report_from_verdicts, average_projections,
                   count_gc_trends, project_degradation, rank_task_groups, ranking_table, rejuvenation_gain)
from errors import InvalidSpec, ZeroBaseline
from ingest import task_entity
from trend import AutocorrRoute, TrendVerdict

# activity: (baseline LT increase ms, baseline TTAF h, rejuvenated LT increase ms, rejuvenated TTAF h, gains %)
PUBLISHED_GAINS = {
    'GrantPermissions': (53.660, 22.363, 9.582, 84.435, (82, 278)),
    'baidu': (167.181, 7.178, 29.303, 9.507, (82, 32)),
    'moji': (197.860, 6.065, 134.905, 9.140, (32, 51)),
    'weibo': (95.191, 12.606, 46.939, 27.315, (51, 117)),
    'UCMobile': (66.033, 18.173, 48.503, 29.195, (27, 61)),
    'youku Welcome': (237.575, 5.051, 208.674, 5.843, (12, 16)),
    'youku HomePage': (225.135, 5.330, 147.786, 8.425, (34, 58)),
}


def make_verdict(entity, slope, declared=True, experiment='EXP1', metric='launch_time_ms', n=720):
    return TrendVerdict(
        series_id=f"{experiment}/{entity}/{metric}",
        n=n,
        autocorr_route=AutocorrRoute.PLAIN_MK,
        dw_statistic=2.0,
        tests=(),
        declared=declared,
        slope=slope,
        slope_ci95=(slope, slope),
        intercept=0.0,
        experiment=experiment,
        entity=entity,
        metric=metric,
    )


def make_published_report():
    pairs = []
    for activity, (lt, ttaf, lt_r, ttaf_r, _) in PUBLISHED_GAINS.items():
        pairs.append((activity, DegradationProjection.from_observed(lt, ttaf_h=ttaf),
                      DegradationProjection.from_observed(lt_r, ttaf_h=ttaf_r)))
    return aging_report_from_projections(pairs)


def test_projection_from_slope():
    p = project_degradation(380.0 / 21600)
    assert p.lt_increase == pytest.approx(380.0)
    assert p.ttaf_h == pytest.approx(6 * 200 / 380)
    flat = project_degradation(-0.001)
    assert flat.lt_increase == 0.0
    assert math.isinf(flat.ttaf)
    with pytest.raises(ValueError):
        project_degradation(0.01, horizon=0)
    with pytest.raises(ValueError):
        project_degradation(0.01, threshold=-5)


@pytest.mark.parametrize('activity', sorted(PUBLISHED_GAINS))
def test_baseline_ttaf_follows_from_increase(activity):
    lt, ttaf, _, _, _ = PUBLISHED_GAINS[activity]
    assert DegradationProjection.from_observed(lt).ttaf_h == pytest.approx(ttaf, rel=0.003)


@pytest.mark.parametrize('activity', sorted(PUBLISHED_GAINS))
def test_published_gains(activity):
    report = make_published_report()
    row = next(r for r in report.rows if r.activity == activity)
    assert row.gain.rounded == PUBLISHED_GAINS[activity][4]


def test_published_average_gain():
    report = make_published_report()
    assert report.average_gain.rounded == (46, 87)
    df = report.to_frame()
    assert df['activity'].iloc[-1] == 'Average'
    assert df['gain_lt_pct'].iloc[-1] == 46
    assert df['gain_ttaf_pct'].iloc[-1] == 87
    assert len(df) == len(PUBLISHED_GAINS) + 1


def test_gain_edge_cases():
    base = project_degradation(0.01)
    assert rejuvenation_gain(base, base) == RejuvenationGain(0.0, 0.0)
    cured = rejuvenation_gain(base, project_degradation(0.0))
    assert cured.gain_lt_pct == 100.0
    assert cured.rounded == (100, math.inf)
    with pytest.raises(ZeroBaseline):
        rejuvenation_gain(project_degradation(0.0), base)


def test_rounding_is_half_away_from_zero():
    assert RejuvenationGain(2.5, -2.5).rounded == (3, -3)
    assert RejuvenationGain(45.74, 87.40).rounded == (46, 87)


def test_average_excludes_infinite_gains():
    base = project_degradation(0.01)
    report = aging_report_from_projections([
        ('a', base, project_degradation(0.005)),
        ('b', base, project_degradation(0.0)),
    ])
    assert report.average_gain.gain_lt_pct == pytest.approx(50.0)
    assert report.average_gain.gain_ttaf_pct == pytest.approx(100.0)


def test_average_projections():
    avg = average_projections([project_degradation(0.01), project_degradation(0.02)])
    assert avg.lt_increase == pytest.approx(0.015 * 21600)
    assert avg.ttaf == pytest.approx((20000 + 10000) / 2)
    with pytest.raises(ValueError):
        average_projections([])


def test_report_from_verdicts_keeps_increasing_baselines():
    baseline = [
        make_verdict('com.a/.Main', 0.01, experiment='EXP1'),
        make_verdict('com.a/.Main', 0.02, experiment='EXP2'),
        make_verdict('com.b/.Main', 0.02, declared=False),
        make_verdict('com.c/.Main', 0.03),
    ]
    rejuvenated = [
        make_verdict('com.a/.Main', 0.005, experiment='EXP1R'),
        make_verdict('com.b/.Main', 0.001, experiment='EXP1R'),
    ]
    report = aging_report_from_verdicts(baseline, rejuvenated)
    assert [r.activity for r in report.rows] == ['com.a/.Main']
    row = report.rows[0]
    assert row.baseline.lt_increase == pytest.approx(0.015 * 21600)
    assert row.experiments == ('EXP1', 'EXP1R', 'EXP2')
    assert row.gain.gain_lt_pct == pytest.approx((0.015 - 0.005) / 0.015 * 100)


def test_task_group_rules_bundled():
    rules = TaskGroupRules.bundled()
    assert rules.classify('ActivityManager') == 'ACTIVITY'
    assert rules.classify('ActivityManager_7') == 'ACTIVITY'
    assert rules.classify('WifiScanner_1') == 'NETWORK'
    assert rules.classify('Binder_1') == OTHER_GROUP


def test_task_group_rules_longest_prefix_and_conflicts(tmp_path):
    rules = TaskGroupRules({'SHORT': ['Bind*'], 'LONG': ['Binder*'], 'EXACT': ['Binder_9']})
    assert rules.classify('Binder_1') == 'LONG'
    assert rules.classify('Binding') == 'SHORT'
    assert rules.classify('Binder_9') == 'EXACT'
    with pytest.raises(InvalidSpec):
        TaskGroupRules({'A': ['x*'], 'B': ['x*']})
    with pytest.raises(InvalidSpec):
        TaskGroupRules({'A': ['*']})
    path = tmp_path / 'rules.json'
    path.write_text(json.dumps({'ALARM': ['AlarmManager']}))
    assert TaskGroupRules.load(path).classify('AlarmManager') == 'ALARM'
    with pytest.raises(InvalidSpec):
        TaskGroupRules.load(tmp_path / 'missing.json')


def test_count_gc_trends():
    metric = GC_METRICS['gc_duration_explicit']
    verdicts = {}
    for exp in ('EXP1', 'EXP2', 'EXP3'):
        verdicts[('system', metric, exp)] = make_verdict('system', 0.1, experiment=exp, metric=metric)
    verdicts[('surfaceflinger', metric, 'EXP1')] = make_verdict('surfaceflinger', 0.1, metric=metric)
    verdicts[('surfaceflinger', metric, 'EXP2')] = make_verdict('surfaceflinger', -0.1, experiment='EXP2',
                                                                metric=metric)
    verdicts[('mediaserver', metric, 'EXP1')] = make_verdict('mediaserver', 0.1, metric=metric, n=50)

    rankings = {r.metric: r for r in count_gc_trends(verdicts)}
    assert set(rankings) == set(GC_METRICS)
    explicit = rankings['gc_duration_explicit']
    assert explicit.unit is RankUnit.PROCESS
    assert explicit.counts == {'system': 3, 'surfaceflinger': 1, 'mediaserver': 0}
    assert explicit.top_n == ('system', 'surfaceflinger', 'mediaserver')
    assert explicit.experiments_analyzed == 3
    assert explicit.trend_experiments['system'] == ('EXP1', 'EXP2', 'EXP3')
    assert rankings['gc_pause_background'].counts == {}

    lenient = {r.metric: r for r in count_gc_trends(verdicts, min_samples=10, top_n=1)}
    assert lenient['gc_duration_explicit'].counts['mediaserver'] == 1
    assert lenient['gc_duration_explicit'].top_n == ('system',)


def test_rank_task_groups_identifies_tasks_by_name():
    rules = TaskGroupRules({'BINDER': ['Binder*'], 'ALARM': ['AlarmManager']})
    verdicts = {
        (task_entity('system', 1210, 'Binder_1'), 'minflt', 'EXP1'):
            make_verdict(task_entity('system', 1210, 'Binder_1'), 1.0, experiment='EXP1', metric='minflt'),
        (task_entity('system', 1300, 'Binder_1'), 'minflt', 'EXP2'):
            make_verdict(task_entity('system', 1300, 'Binder_1'), 1.0, experiment='EXP2', metric='minflt'),
        (task_entity('system', 1211, 'Binder_2'), 'minflt', 'EXP1'):
            make_verdict(task_entity('system', 1211, 'Binder_2'), 1.0, declared=False, metric='minflt'),
        (task_entity('system', 1400, 'AlarmManager'), 'minflt', 'EXP1'):
            make_verdict(task_entity('system', 1400, 'AlarmManager'), 1.0, metric='minflt'),
        (task_entity('system', 1500, 'Jit thread pool'), 'minflt', 'EXP2'):
            make_verdict(task_entity('system', 1500, 'Jit thread pool'), 1.0, declared=False,
                         experiment='EXP2', metric='minflt'),
        (task_entity('surfaceflinger', 420, 'Binder_1'), 'utime_ticks', 'EXP1'):
            make_verdict(task_entity('surfaceflinger', 420, 'Binder_1'), 1.0, metric='utime_ticks'),
    }
    rankings = rank_task_groups(verdicts, rules)
    assert [(r.scope, r.metric) for r in rankings] == [('surfaceflinger', 'utime'), ('system', 'minflt')]
    system = rankings[1]
    assert system.unit is RankUnit.TASK_GROUP
    assert system.counts == {'BINDER': 1.0, 'ALARM': 1.0, OTHER_GROUP: 0.0}
    assert system.top_n == ('ALARM', 'BINDER', OTHER_GROUP)
    assert system.experiments_analyzed == 2
    assert system.trend_experiments['BINDER'] == ('EXP1', 'EXP2')

    df = ranking_table(rankings)
    assert list(df.columns) == RANKING_COLUMNS
    assert df.loc[df['scope'] == 'system', 'rank'].tolist() == [1, 2, 3]
