import itertools
import math

import numpy as np
import pytest
from scipy import stats

import trend
from errors import AllTied, TooShort
from model import MetricSeries, SeriesKind
from synth import SeriesSpec, generate_series
from trend import (AutocorrRoute, Decision, TestName, TrendVerdict, _exact_mk_p, _inversion_counts, cox_stuart,
                   detect_trend, durbin_watson, durbin_watson_bounds, hamed_rao_factor, mann_kendall,
                   mann_kendall_hamed_rao, mk_score, mk_variance, sen_slope, spearman_rho_trend, t_test_trend)


def make_series(values, dt=30.0, experiment='EXP1'):
    values = np.asarray(values, dtype=float)
    return MetricSeries('all-activities', 'launch_time_ms', 'ms', SeriesKind.INSTANTANEOUS,
                        np.arange(len(values)) * dt, values, experiment=experiment)


def make_trending(n=60, slope=0.5, sigma=1.0, seed=1):
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    return make_series(slope * t + rng.normal(0, sigma, n), dt=1.0)


def test_mk_score_matches_pairwise_count():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 5, 25).astype(float)
    brute = sum(np.sign(x[j] - x[i]) for i in range(len(x)) for j in range(i + 1, len(x)))
    assert mk_score(x) == brute


def test_mk_variance_with_and_without_ties():
    assert mk_variance(np.arange(10.0)) == pytest.approx(10 * 9 * 25 / 18)
    x = np.array([1, 1, 2, 3, 3, 3, 4.0])
    expected = (7 * 6 * 19 - (2 * 1 * 9 + 3 * 2 * 11)) / 18
    assert mk_variance(x) == pytest.approx(expected)


def test_exact_mk_p_matches_permutation_enumeration():
    n = 6
    scores = [mk_score(np.array(p, dtype=float)) for p in itertools.permutations(range(n))]
    total = math.factorial(n)
    for s in (0, 3, 7, 11, 15):
        brute = sum(abs(v) >= s for v in scores) / total
        assert _exact_mk_p(s, n) == pytest.approx(brute)


def test_mann_kendall_small_n_uses_exact_distribution():
    result = mann_kendall(make_series([1.0, 2.0, 3.0, 4.0]))
    assert result.statistic == 6
    assert result.p_value == pytest.approx(2 / 24)
    assert result.decision is Decision.FAIL_TO_REJECT


def test_mann_kendall_all_tied():
    result = mann_kendall(make_series([5.0] * 12))
    assert result.p_value == 1.0
    assert not result.rejects


def test_durbin_watson_bounds():
    assert durbin_watson_bounds(10) == pytest.approx((0.879, 1.320))
    assert durbin_watson_bounds(1000) == pytest.approx((1.758, 1.778))
    low, high = durbin_watson_bounds(42)
    assert 1.442 < low < 1.475
    assert 1.544 < high < 1.566


def test_durbin_watson_perfect_fit_is_autocorrelated():
    result = durbin_watson(make_series(np.arange(20) * 2.0 + 1))
    assert result.statistic == 0.0
    assert result.decision is Decision.REJECT
    assert result.p_value is None


def test_durbin_watson_alternating_residuals():
    result = durbin_watson(make_series([1.0, -1.0] * 15))
    assert result.statistic > 3
    assert result.decision is Decision.REJECT


def test_cox_stuart_drops_middle_for_odd_n():
    result = cox_stuart(make_series([1, 2, 3, 4, 5, 100, 6, 7, 8, 9, 10.0]))
    assert result.detail['pairs'] == 5
    assert result.statistic == 5
    assert result.p_value == pytest.approx(2 / 32)
    with pytest.raises(AllTied):
        cox_stuart(make_series([1, 2, 3, 1, 2, 3.0]))


def test_t_test_perfect_fit():
    result = t_test_trend(make_series(np.arange(12.0)))
    assert result.statistic == math.inf
    assert result.p_value == 0.0
    assert result.rejects
    down = t_test_trend(make_series(-np.arange(12.0)))
    assert down.statistic == -math.inf


def test_sen_slope_on_exact_line():
    est = sen_slope(make_series(3.0 + 0.25 * np.arange(20), dt=1.0))
    assert est.slope == pytest.approx(0.25)
    assert est.intercept == pytest.approx(3.0)
    assert est.ci95 == pytest.approx((0.25, 0.25))


def test_sen_ci_brackets_slope():
    est = sen_slope(make_trending(sigma=5.0))
    low, high = est.ci95
    assert low < est.slope < high
    assert low < 0.5 < high


def test_detect_trend_declares_noisy_increase():
    verdict = detect_trend(make_trending())
    assert verdict.declared
    assert verdict.increasing
    assert verdict.direction == 'increasing'
    assert verdict.slope == pytest.approx(0.5, rel=0.1)
    names = [r.test_name for r in verdict.tests]
    assert names[0] is TestName.DURBIN_WATSON
    assert names[1] in (TestName.MK, TestName.MK_HAMED_RAO)
    assert names[2:] == [TestName.COX_STUART, TestName.T_TEST, TestName.SPEARMAN_RHO]


def test_detect_trend_decreasing():
    verdict = detect_trend(make_trending(slope=-0.5))
    assert verdict.declared
    assert not verdict.increasing
    assert verdict.direction == 'decreasing'


def test_detect_trend_perfect_line_routes_to_modified_mk():
    verdict = detect_trend(make_series(np.arange(20) * 2.0, dt=1.0))
    assert verdict.autocorr_route is AutocorrRoute.MODIFIED_MK
    assert verdict.test(TestName.MK_HAMED_RAO).rejects
    assert verdict.declared


def test_detect_trend_constant_series():
    verdict = detect_trend(make_series([7.0] * 15))
    assert not verdict.declared
    assert verdict.slope == 0.0
    assert verdict.slope_ci95 == (0.0, 0.0)
    assert verdict.test(TestName.COX_STUART).decision is Decision.FAIL_TO_REJECT
    assert verdict.test(TestName.SPEARMAN_RHO).decision is Decision.FAIL_TO_REJECT


def test_detect_trend_preconditions():
    with pytest.raises(TooShort):
        detect_trend(make_series(np.arange(9.0)))
    with pytest.raises(ValueError):
        detect_trend(make_trending(), alpha=1.5)


def test_white_noise_false_positive_rate_is_low():
    rng = np.random.default_rng(11)
    declared = sum(detect_trend(make_series(rng.normal(0, 1, 40))).declared for _ in range(200))
    assert declared / 200 < 0.1


def test_verdict_survives_csv_and_json_forms():
    verdict = detect_trend(make_trending(), transform='rate')
    from_record = TrendVerdict.from_record(verdict.to_record())
    assert from_record.to_record() == verdict.to_record()

    row = {k: ('' if v is None else str(v)) for k, v in verdict.to_row().items()}
    from_row = TrendVerdict.from_row(row)
    assert from_row.declared == verdict.declared
    assert from_row.slope == pytest.approx(verdict.slope)
    assert from_row.transform == 'rate'
    assert [r.test_name for r in from_row.tests] == [r.test_name for r in verdict.tests]


def test_mann_kendall_negated_series_flips_s_and_z():
    x = make_trending(n=40, sigma=8.0, seed=5).values
    up, down = mann_kendall(make_series(x)), mann_kendall(make_series(-x))
    assert down.statistic == -up.statistic
    assert down.detail['z'] == pytest.approx(-up.detail['z'])
    assert down.p_value == pytest.approx(up.p_value)


def test_mk_score_unchanged_by_monotone_transform():
    rng = np.random.default_rng(8)
    x = rng.normal(0, 1, 50)
    assert mk_score(np.exp(x)) == mk_score(x)
    assert mk_score(x ** 3 + 2 * x) == mk_score(x)


@pytest.mark.parametrize('values', [
    (1, 2, 3, 4, 5, 6, 7),
    (1, 1, 2, 3, 3, 3, 4),
    (2, 2, 2, 5, 5, 9),
])
def test_mk_variance_matches_permutation_enumeration(values):
    x = np.asarray(values, dtype=float)
    scores = np.array([mk_score(np.array(p)) for p in itertools.permutations(x)], dtype=float)
    assert scores.mean() == pytest.approx(0.0, abs=1e-9)
    assert mk_variance(x) == pytest.approx(float(np.mean(scores ** 2)))


@pytest.mark.parametrize('n', [8, 10, 12])
def test_mk_variance_matches_exact_null_without_ties(n):
    counts = np.array(_inversion_counts(n), dtype=float)
    pairs = n * (n - 1) // 2
    s = pairs - 2 * np.arange(len(counts))
    assert mk_variance(np.arange(float(n))) == pytest.approx(float(np.sum(counts * s ** 2)) / math.factorial(n))


def test_sen_slope_three_points():
    est = sen_slope(make_series([1.0, 2.0, 10.0], dt=1.0))
    assert est.slope == pytest.approx(4.5)


def test_spearman_rho_trend_rank_difference_example():
    result = spearman_rho_trend(make_series([1.0, 3.0, 2.0, 5.0, 4.0]))
    assert result.statistic == pytest.approx(0.8)
    t = 0.8 * math.sqrt(3 / (1 - 0.64))
    assert result.p_value == pytest.approx(2 * stats.t.sf(t, 3))
    assert result.decision is Decision.FAIL_TO_REJECT


def test_spearman_rho_trend_monotone_and_constant():
    up = spearman_rho_trend(make_series(np.arange(10.0) ** 2))
    assert (up.statistic, up.p_value) == (1.0, 0.0)
    down = spearman_rho_trend(make_series(-np.arange(10.0)))
    assert (down.statistic, down.p_value) == (-1.0, 0.0)
    with pytest.raises(AllTied):
        spearman_rho_trend(make_series([3.0] * 8))


def test_hamed_rao_with_unit_factor_equals_plain_mk(monkeypatch):
    line = make_series(np.arange(20) * 2.0, dt=1.0)
    corrected = mann_kendall_hamed_rao(line)
    assert corrected.detail['factor'] == 1.0
    assert corrected.p_value == mann_kendall(line).p_value
    assert corrected.rejects

    noisy = make_trending(n=50, slope=0.05, sigma=2.0, seed=4)
    monkeypatch.setattr(trend, 'hamed_rao_factor', lambda t, x: 1.0)
    assert mann_kendall_hamed_rao(noisy).p_value == mann_kendall(noisy).p_value
    assert mann_kendall_hamed_rao(noisy).statistic == mann_kendall(noisy).statistic


def test_hamed_rao_requires_ten_samples():
    with pytest.raises(TooShort):
        mann_kendall_hamed_rao(make_series(np.arange(9.0)))


def test_hamed_rao_factor_inflates_for_ar1_noise():
    series = generate_series(SeriesSpec(n=720, noise_sigma=1.0, ar1_phi=0.8, seed=21))
    factor = hamed_rao_factor(np.asarray(series.t), np.asarray(series.values))
    # 1 + 2 * sum(phi^k) = 9 for the population rank autocorrelations
    assert 4.0 < factor < 14.0
    white = generate_series(SeriesSpec(n=720, noise_sigma=1.0, seed=21))
    assert hamed_rao_factor(np.asarray(white.t), np.asarray(white.values)) < 1.5


def test_hamed_rao_holds_false_positive_rate_on_ar1_noise():
    sims = 400
    plain = corrected = 0
    for seed in range(sims):
        series = generate_series(SeriesSpec(n=720, noise_sigma=1.0, ar1_phi=0.8, seed=1000 + seed))
        plain += mann_kendall(series).rejects
        corrected += mann_kendall_hamed_rao(series).rejects
    assert plain / sims > 0.3
    assert corrected / sims <= 0.10
