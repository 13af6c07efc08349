import numpy as np
import pytest
from scipy import stats

from errors import AllTied, DegenerateGroups, LengthMismatch, TooShort, UnpairedConfig, ZeroGroupVariance, ZeroRange
from groupstats import (GroupedSlopes, RoutedTest, compare_groups, comparison_table, fisher_anova, grouped_slopes,
                        kruskal_wallis, levene, route_test, shapiro_wilk, spearman_correlation, welch_anova)
from model import ExperimentPlan, FactorName

LT = 0.00005  # reported as "<.0001"

# (response, factor, shapiro_p, levene_p, routed) from the published per-factor comparison table
PUBLISHED_ROUTES = [
    ('A6 launch time', 'DEV', LT, .0078, 'KW'),
    ('A6 launch time', 'APP', LT, .0861, 'KW'),
    ('A6 launch time', 'EVENTS', LT, .3325, 'KW'),
    ('A6 launch time', 'STO', LT, .3905, 'KW'),
    ('A6 PSS system_server', 'DEV', LT, LT, 'KW'),
    ('A6 PSS system_server', 'APP', LT, .0142, 'KW'),
    ('A6 PSS system_server', 'EVENTS', LT, .9672, 'KW'),
    ('A6 PSS system_server', 'STO', LT, .8444, 'KW'),
    ('A6 PSS surfaceflinger', 'DEV', LT, .01346, 'KW'),
    ('A6 PSS surfaceflinger', 'APP', LT, .0363, 'KW'),
    ('A6 PSS surfaceflinger', 'EVENTS', LT, .6004, 'KW'),
    ('A6 PSS surfaceflinger', 'STO', LT, .2157, 'KW'),
    ('HUAWEI launch time', 'VER', .0057, .0562, 'KW'),
    ('HUAWEI launch time', 'APP', .0005, .1679, 'KW'),
    ('HUAWEI launch time', 'EVENTS', .0037, .6114, 'KW'),
    ('HUAWEI launch time', 'STO', .0025, .3738, 'KW'),
    ('HUAWEI PSS system_server', 'VER', .2046, .0110, 'WELCH'),
    ('HUAWEI PSS system_server', 'APP', .1623, .0079, 'WELCH'),
    ('HUAWEI PSS system_server', 'EVENTS', .0754, .6465, 'FISHER'),
    ('HUAWEI PSS system_server', 'STO', .0089, .7904, 'KW'),
    ('HUAWEI PSS surfaceflinger', 'VER', .1095, .5162, 'FISHER'),
    ('HUAWEI PSS surfaceflinger', 'APP', .6426, .8697, 'FISHER'),
    ('HUAWEI PSS surfaceflinger', 'EVENTS', .1107, .8754, 'FISHER'),
    ('HUAWEI PSS surfaceflinger', 'STO', .1884, .6679, 'FISHER'),
    ('SAMSUNG launch time', 'VER', LT, .1500, 'KW'),
    ('SAMSUNG launch time', 'APP', LT, .4255, 'KW'),
    ('SAMSUNG launch time', 'EVENTS', LT, .6222, 'KW'),
    ('SAMSUNG launch time', 'STO', LT, .4526, 'KW'),
    ('SAMSUNG PSS system_server', 'VER', .1368, .0016, 'WELCH'),
    ('SAMSUNG PSS system_server', 'APP', .2010, LT, 'WELCH'),
    ('SAMSUNG PSS system_server', 'EVENTS', .0003, .9196, 'KW'),
    ('SAMSUNG PSS system_server', 'STO', .0005, .5976, 'KW'),
    ('SAMSUNG PSS surfaceflinger', 'VER', .0224, .0039, 'KW'),
    ('SAMSUNG PSS surfaceflinger', 'APP', .1938, .0634, 'FISHER'),
    ('SAMSUNG PSS surfaceflinger', 'EVENTS', .0018, .9644, 'KW'),
    ('SAMSUNG PSS surfaceflinger', 'STO', .0027, .5378, 'KW'),
]
SHORT = {'KW': RoutedTest.KRUSKAL_WALLIS, 'WELCH': RoutedTest.WELCH, 'FISHER': RoutedTest.FISHER}


def make_normal_scores(n=12):
    # Blom plotting positions: as normal as a fixed sample gets
    i = np.arange(1, n + 1)
    return stats.norm.ppf((i - 0.375) / (n + 0.25))


def make_grouped(*groups, factor=FactorName.APP):
    return GroupedSlopes(factor, {f"L{i}": g for i, g in enumerate(groups)})


@pytest.mark.parametrize('response, factor, shapiro_p, levene_p, routed', PUBLISHED_ROUTES)
def test_route_matches_published_table(response, factor, shapiro_p, levene_p, routed):
    assert route_test(shapiro_p, levene_p) is SHORT[routed]


def test_route_boundary_counts_as_passing():
    assert route_test(0.05, 0.05) is RoutedTest.FISHER
    assert route_test(0.0499, 0.5) is RoutedTest.KRUSKAL_WALLIS
    with pytest.raises(ValueError):
        route_test(0.5, 0.5, alpha=0)


def test_fisher_matches_sums_of_squares():
    groups = [np.array([1.0, 2.0, 3.0, 4.0]), np.array([2.0, 4.0, 6.0]), np.array([5.0, 5.5, 7.0, 8.0, 9.0])]
    grand = np.concatenate(groups).mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    n, k = sum(len(g) for g in groups), len(groups)
    f = (ssb / (k - 1)) / (ssw / (n - k))
    statistic, p = fisher_anova(groups)
    assert statistic == pytest.approx(f)
    assert p == pytest.approx(stats.f.sf(f, k - 1, n - k))


def test_fisher_zero_within_variance():
    assert fisher_anova([[1.0, 1.0], [2.0, 2.0]]) == (np.inf, 0.0)
    assert fisher_anova([[1.0, 1.0], [1.0, 1.0]]) == (0.0, 1.0)
    with pytest.raises(DegenerateGroups):
        fisher_anova([[1.0], [2.0]])


def test_welch_matches_formula():
    groups = [np.array([1.0, 2.0, 3.0, 4.0, 5.0]), np.array([2.0, 6.0, 9.0, 14.0]),
              np.array([4.0, 4.5, 5.0, 5.2, 6.0, 7.0])]
    k = len(groups)
    n = np.array([len(g) for g in groups], dtype=float)
    means = np.array([g.mean() for g in groups])
    w = n / np.array([g.var(ddof=1) for g in groups])
    mw = (w * means).sum() / w.sum()
    lam = (((1 - w / w.sum()) ** 2) / (n - 1)).sum()
    f = ((w * (means - mw) ** 2).sum() / (k - 1)) / (1 + 2 * (k - 2) * lam / (k ** 2 - 1))
    df2 = (k ** 2 - 1) / (3 * lam)
    statistic, p = welch_anova(groups)
    assert statistic == pytest.approx(f)
    assert p == pytest.approx(stats.f.sf(f, k - 1, df2))


def test_welch_zero_variance_group():
    with pytest.raises(ZeroGroupVariance):
        welch_anova([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])


def test_levene_is_anova_on_absolute_deviations():
    groups = [np.array([1.0, 3.0, 5.0, 9.0]), np.array([2.0, 2.5, 3.0, 3.2, 4.0])]
    deviations = [np.abs(g - g.mean()) for g in groups]
    assert levene(groups) == pytest.approx(fisher_anova(deviations))


def test_kruskal_wallis():
    statistic, p = kruskal_wallis([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    expected = stats.kruskal([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert statistic == pytest.approx(expected.statistic)
    assert p == pytest.approx(expected.pvalue)
    with pytest.raises(AllTied):
        kruskal_wallis([[2.0, 2.0], [2.0, 2.0]])


def test_shapiro_preconditions():
    with pytest.raises(TooShort):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(ZeroRange):
        shapiro_wilk([3.0, 3.0, 3.0])


def test_compare_groups_routes_to_fisher_for_normal_equal_variance():
    q = make_normal_scores()
    comparison = compare_groups(make_grouped(q, q + 3.0))
    assert comparison.normal and comparison.homoscedastic
    assert comparison.routed_test is RoutedTest.FISHER
    assert comparison.significant


def test_compare_groups_routes_to_kruskal_for_skewed_residuals():
    spike = np.array([0.0] * 11 + [100.0])
    comparison = compare_groups(make_grouped(spike, spike + 1.0))
    assert not comparison.normal
    assert comparison.routed_test is RoutedTest.KRUSKAL_WALLIS
    assert comparison.to_row('all-activities:launch_time_ms', FactorName.APP)['routed'] == 'KruskalWallis'


def test_grouped_slopes_need_two_non_empty_groups():
    with pytest.raises(DegenerateGroups):
        make_grouped([1.0, 2.0])
    with pytest.raises(DegenerateGroups):
        make_grouped([1.0, 2.0], [])


def test_grouped_slopes_from_plan():
    plan = ExperimentPlan.bundled().restrict(DEV='HUAWEIP8')
    slopes = {exp_id: float(i) for i, exp_id in enumerate(plan.ids)}
    del slopes[plan.ids[0]]
    grouped = grouped_slopes(plan, FactorName.VER, slopes)
    assert list(grouped.groups) == ['ANDROID5', 'ANDROID6']
    assert len(grouped.groups['ANDROID5']) == 11
    assert len(grouped.groups['ANDROID6']) == 12
    assert plan.ids[0] not in grouped.experiments['ANDROID5']


def test_grouped_slopes_strict_pairing():
    plan = ExperimentPlan.bundled()
    slopes = {exp_id: 1.0 for exp_id in plan.ids}
    with pytest.raises(UnpairedConfig):
        grouped_slopes(plan, FactorName.DEV, slopes)
    grouped = grouped_slopes(plan.restrict(VER='ANDROID6'), FactorName.DEV, slopes)
    assert sorted(len(v) for v in grouped.groups.values()) == [12, 12, 12, 12]


def test_spearman_correlation():
    result = spearman_correlation([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    assert (result.rho, result.p_value, result.n) == (1.0, 0.0, 5)
    result = spearman_correlation([1, 2, 3, 4, 5, 6], [3, 1, 4, 1, 5, 9])
    expected = stats.spearmanr([1, 2, 3, 4, 5, 6], [3, 1, 4, 1, 5, 9])
    assert result.rho == pytest.approx(expected[0])
    assert result.p_value == pytest.approx(expected[1])
    with pytest.raises(LengthMismatch):
        spearman_correlation([1, 2, 3, 4], [1, 2, 3])
    with pytest.raises(TooShort):
        spearman_correlation([1, 2, 3], [1, 2, 3])
    with pytest.raises(AllTied):
        spearman_correlation([1, 1, 1, 1], [1, 2, 3, 4])


def test_comparison_table_column_order():
    row = {'series': 'x', 'response': 'r', 'factor': 'APP', 'routed': 'Fisher', 'p_value': 0.5}
    df = comparison_table([row])
    assert list(df.columns)[:2] == ['response', 'factor']
    assert list(df.columns)[-1] == 'series'
