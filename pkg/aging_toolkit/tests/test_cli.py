import json

import pandas as pd
import pytest

from cli import EXIT_DATA, EXIT_OK, EXIT_STATS, EXIT_USAGE, main, natural_key
from test_aging import PUBLISHED_GAINS

CORPUS_SPEC = {
    'seed': 3,
    'where': {'DEV': 'HUAWEIP8', 'APP': 'EU'},
    'duration_s': 3600,
    'inject': {'launch': {'*': 0.02}, 'gc': {'system': 0.005}, 'tasks.utime': {'ActivityManager*': 0.002}},
    'level_effects': {'VER': {'ANDROID5': {'launch': 0.02}}},
}


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp('pipeline')
    spec = root / 'corpus.json'
    spec.write_text(json.dumps(CORPUS_SPEC))
    assert main(['synth', '--spec', str(spec), '--out', str(root / 'captures'), '-q']) == EXIT_OK
    assert main(['ingest', str(root / 'captures'), '--out', str(root / 'store'), '-q']) == EXIT_OK
    assert main(['detect', str(root / 'store'), '--out', str(root / 'verdicts.csv'), '--jobs', '2', '-q']) == EXIT_OK
    return root


def test_synth_and_ingest_outputs(pipeline):
    manifest = json.loads((pipeline / 'captures' / 'manifest.json').read_text())
    assert len(manifest['experiments']) == 12
    stores = sorted(p.stem for p in (pipeline / 'store').glob('*.csv'))
    assert stores == sorted(manifest['experiments'])
    rows = sum(len(pd.read_csv(p)) for p in (pipeline / 'store').glob('*.csv'))
    assert rows == sum(e['store_rows'] for e in manifest['experiments'].values())


def test_detect_verdicts_ordered_and_rated(pipeline):
    df = pd.read_csv(pipeline / 'verdicts.csv', dtype={'experiment': str, 'transform': str}, keep_default_na=False)
    experiments = list(dict.fromkeys(df['experiment']))
    assert experiments == sorted(experiments, key=natural_key)
    tasks = df[df['entity'].str.contains('|', regex=False)]
    assert not tasks.empty
    assert set(tasks['transform']) == {'rate'}
    launch = df[(df['entity'] == 'all-activities') & (df['metric'] == 'launch_time_ms')]
    assert len(launch) == 12
    assert launch['declared'].astype(str).str.lower().eq('true').sum() >= 10


def test_compare_by_version(pipeline):
    out = pipeline / 'compare.json'
    code = main(['compare', str(pipeline / 'verdicts.csv'), '--factor', 'VER', '--where', 'DEV=HUAWEIP8',
                 '--format', 'json', '--out', str(out), '-q'])
    assert code == EXIT_OK
    rows = json.loads(out.read_text())
    assert len(rows) == 1
    row = rows[0]
    assert row['response'] == 'all-activities:launch_time_ms'
    assert row['factor'] == 'VER'
    assert row['routed'] in ('Fisher', 'Welch', 'KruskalWallis')
    assert row['groups'] == 'ANDROID5=6;ANDROID6=6'
    assert len(row['experiments'].split(';')) == 12


def test_compare_single_level_is_statistical_error(pipeline):
    code = main(['compare', str(pipeline / 'verdicts.csv'), '--factor', 'VER', '--where', 'VER=ANDROID5', '-q'])
    assert code == EXIT_STATS


def test_compare_unknown_factor_is_usage_error(pipeline):
    assert main(['compare', str(pipeline / 'verdicts.csv'), '--factor', 'COLOUR', '-q']) == EXIT_USAGE


def test_correlate_pss_against_launch(pipeline):
    out = pipeline / 'correlate.csv'
    assert main(['correlate', str(pipeline / 'verdicts.csv'), '--x', 'pss_kb', '--out', str(out), '-q']) == EXIT_OK
    df = pd.read_csv(out)
    assert list(df.columns[:3]) == ['process', 'rho', 'p']
    assert {'experiments', 'series'} <= set(df.columns)
    assert set(df['process']) == {'system', 'com.android.systemui', 'surfaceflinger', 'mediaserver'}
    assert set(df['metric']) == {'pss_kb'}
    assert (df['n'] == 12).all()
    assert df['rho'].between(-1, 1).all()


def test_rank_processes_and_tasks(pipeline):
    out = pipeline / 'rank_gc.csv'
    code = main(['rank', str(pipeline / 'verdicts.csv'), '--unit', 'process', '--min-gc-samples', '10',
                 '--out', str(out), '-q'])
    assert code == EXIT_OK
    df = pd.read_csv(out)
    assert set(df['metric']) == {'gc_duration_explicit', 'gc_duration_background',
                                 'gc_pause_explicit', 'gc_pause_background'}
    assert (df.groupby('metric').size() <= 5).all()
    top = df[df['rank'] == 1].set_index('metric')['unit']
    assert len(top) == 4
    assert (top == 'system').all()
    assert (df[df['unit'] == 'system']['count'] >= 10).all()

    out = pipeline / 'rank_tasks.csv'
    assert main(['rank', str(pipeline / 'verdicts.csv'), '--unit', 'task', '--out', str(out), '-q']) == EXIT_OK
    df = pd.read_csv(out)
    assert set(df['scope']) == {'system'}
    assert set(df['metric']) == {'minflt', 'majflt', 'utime', 'stime'}
    assert {'ACTIVITY', 'PACKAGE', 'OTHER'} <= set(df['unit'])
    utime = df[df['metric'] == 'utime'].sort_values('rank')
    assert utime['unit'].iloc[0] == 'ACTIVITY'
    assert utime['count'].iloc[0] > utime['count'].iloc[1]


def test_aging_report_from_published_table(tmp_path):
    table = tmp_path / 'table.csv'
    pd.DataFrame([
        {'activity': name, 'lt_increase_ms': lt, 'ttaf_h': ttaf, 'lt_increase_r': lt_r, 'ttaf_r': ttaf_r}
        for name, (lt, ttaf, lt_r, ttaf_r, _) in PUBLISHED_GAINS.items()
    ]).to_csv(table, index=False)
    out = tmp_path / 'report.csv'
    assert main(['aging-report', '--table', str(table), '--out', str(out), '-q']) == EXIT_OK
    df = pd.read_csv(out)
    average = df[df['activity'] == 'Average'].iloc[0]
    assert (average['gain_lt_pct'], average['gain_ttaf_pct']) == (46, 87)
    moji = df[df['activity'] == 'moji'].iloc[0]
    assert (moji['gain_lt_pct'], moji['gain_ttaf_pct']) == (32, 51)


def test_aging_report_from_verdicts(pipeline, tmp_path):
    out = tmp_path / 'report.csv'
    verdicts = str(pipeline / 'verdicts.csv')
    code = main(['aging-report', '--baseline', verdicts, '--rejuvenated', verdicts, '--out', str(out), '-q'])
    assert code == EXIT_OK
    df = pd.read_csv(out)
    assert 'all-activities' in set(df['activity'])
    assert df['activity'].iloc[-1] == 'Average'


def test_aging_report_needs_inputs():
    assert main(['aging-report', '-q']) == EXIT_USAGE


def test_ingest_without_captures(tmp_path, capsys):
    (tmp_path / 'empty').mkdir()
    code = main(['ingest', str(tmp_path / 'empty'), '--out', str(tmp_path / 'store'), '-q'])
    assert code == EXIT_DATA
    assert 'no records' in capsys.readouterr().err


@pytest.mark.parametrize('value', ['-5', 'inf'])
def test_ingest_bad_pss_row_is_data_error_with_file_summary(tmp_path, capsys, value):
    exp = tmp_path / 'captures' / 'EXP1'
    exp.mkdir(parents=True)
    (exp / 'pss.csv').write_text(f"t_s,process,pid,pss_kb\n30,system,1,{value}\n")
    (exp / 'logcat.txt').write_text("I/ActivityManager(1097): Displayed com.a/.Main: +300ms\n")
    store = tmp_path / 'store'
    assert main(['ingest', str(tmp_path / 'captures'), '--out', str(store), '-q']) == EXIT_DATA
    captured = capsys.readouterr()
    assert 'pss.csv' in captured.out + captured.err
    assert '1 parse error(s) in 1 file(s)' in captured.err
    stored = pd.read_csv(store / 'EXP1.csv')
    assert set(stored['metric']) >= {'launch_time_ms'}


def test_detect_missing_store(tmp_path):
    assert main(['detect', str(tmp_path / 'nowhere'), '-q']) == EXIT_DATA


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(['frobnicate'])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(['ingest', str(tmp_path)])
    assert exc.value.code == EXIT_USAGE
    assert main(['detect', str(tmp_path), '--alpha', '2', '-q']) == EXIT_USAGE


def test_calibrate_small_run(tmp_path):
    out = tmp_path / 'sims.csv'
    assert main(['calibrate', '--scenario', 'white_noise', '--sims', '5', '--out', str(out), '-q']) == EXIT_OK
    df = pd.read_csv(out)
    assert len(df) == 5
    assert {'declared', 'route', 'slope', 'covered'} <= set(df.columns)

    out = tmp_path / 'sweep.csv'
    code = main(['calibrate', '--scenario', 'ar1', '--sims', '3', '--sweep-phi', '0', '0.3', '--out', str(out), '-q'])
    assert code == EXIT_OK
    assert len(pd.read_csv(out)) == 2
