"""
Cross-experiment factor analysis.

Per-experiment trend slopes are grouped by the level of one factor and
compared with a one-way test chosen by a decision tree:

    residuals normal? --no--> Kruskal-Wallis
        |yes
    variances equal? --no--> Welch ANOVA
        |yes
    Fisher ANOVA

Normality is checked once per comparison with Shapiro-Wilk on the pooled
residuals (each value minus its group mean); homoscedasticity with the
mean-centered Levene test. Slope vectors of two metrics are related with
Spearman's rank correlation.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.stats.oneway import anova_oneway

from errors import AllTied, DegenerateGroups, LengthMismatch, TooShort, ZeroGroupVariance, ZeroRange
from model import ExperimentPlan, FactorName, partition_by_factor
from trend import DEFAULT_ALPHA, check_alpha

logger = logging.getLogger(__name__)

SHAPIRO_MAX_N = 5000
RESIDUALS_NOTE = 'residuals centered on group means'


class RoutedTest(Enum):
    FISHER = "Fisher"
    WELCH = "Welch"
    KRUSKAL_WALLIS = "KruskalWallis"


@dataclass(frozen=True)
class GroupedSlopes:
    """
    Slopes (one per experiment) grouped by factor level.

    Args:
        factor: Factor the groups are levels of
        groups: level -> slope values
        experiments: level -> experiment ids, parallel to `groups`
    """
    factor: FactorName
    groups: Mapping[str, Tuple[float, ...]]
    experiments: Mapping[str, Tuple[str, ...]] = None

    def __post_init__(self):
        groups = {str(k): tuple(float(v) for v in vals) for k, vals in dict(self.groups).items()}
        if len(groups) < 2:
            raise DegenerateGroups(f"{self.factor.value}: need at least 2 groups, got {len(groups)}")
        empty = [k for k, v in groups.items() if not v]
        if empty:
            raise DegenerateGroups(f"{self.factor.value}: empty group(s) {', '.join(empty)}")
        object.__setattr__(self, 'groups', groups)
        object.__setattr__(self, 'experiments', {k: tuple(v) for k, v in dict(self.experiments or {}).items()})

    @property
    def values(self) -> List[np.ndarray]:
        return [np.asarray(v, dtype=float) for v in self.groups.values()]


@dataclass(frozen=True)
class GroupComparison:
    shapiro_p: float
    normal: bool
    levene_p: float
    homoscedastic: bool
    routed_test: RoutedTest
    statistic: float
    p_value: float
    significant: bool

    def __post_init__(self):
        expected = route_test_from_flags(self.normal, self.homoscedastic)
        if self.routed_test is not expected:
            raise ValueError(f"Routed {self.routed_test.value} but assumptions call for {expected.value}")

    def to_row(self, response: str, factor: FactorName) -> Dict[str, object]:
        return {
            'response': response,
            'factor': factor.value,
            'shapiro_p': self.shapiro_p,
            'normal': self.normal,
            'levene_p': self.levene_p,
            'homoscedastic': self.homoscedastic,
            'routed': self.routed_test.value,
            'p_value': self.p_value,
            'significant': self.significant,
        }


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho {self.rho} outside [-1, 1]")


def _as_groups(groups) -> List[np.ndarray]:
    if isinstance(groups, GroupedSlopes):
        return groups.values
    if isinstance(groups, Mapping):
        groups = list(groups.values())
    return [np.asarray(g, dtype=float).reshape(-1) for g in groups]


def _finite_f(statistic: float, p: float) -> Tuple[float, float]:
    return float(statistic), float(min(1.0, max(0.0, p)))


def shapiro_wilk(sample: Sequence[float]) -> Tuple[float, float]:
    """Shapiro-Wilk W and p (Royston's approximation)."""
    x = np.asarray(sample, dtype=float).reshape(-1)
    if len(x) < 3:
        raise TooShort(f"Shapiro-Wilk needs n >= 3, got {len(x)}")
    if len(x) > SHAPIRO_MAX_N:
        raise TooShort(f"Shapiro-Wilk supports n <= {SHAPIRO_MAX_N}, got {len(x)}")
    if np.ptp(x) == 0:
        raise ZeroRange("Shapiro-Wilk: all values are equal")
    w, p = stats.shapiro(x)
    return float(min(w, 1.0)), float(min(max(p, 0.0), 1.0))


def fisher_anova(groups) -> Tuple[float, float]:
    """
    Classic one-way ANOVA F.

    Zero within-group variance: p = 0 when the means differ, F = 0 and
    p = 1 when they do not.
    """
    data = _as_groups(groups)
    if len(data) < 2 or any(len(g) == 0 for g in data):
        raise DegenerateGroups("Fisher ANOVA needs at least 2 non-empty groups")
    total = sum(len(g) for g in data)
    if total <= len(data):
        raise DegenerateGroups(f"Fisher ANOVA needs N > k (N={total}, k={len(data)})")

    within = sum(float(np.sum((g - g.mean()) ** 2)) for g in data)
    if within == 0:
        means = [float(g.mean()) for g in data]
        if max(means) == min(means):
            return 0.0, 1.0
        return math.inf, 0.0
    result = stats.f_oneway(*data)
    return _finite_f(result.statistic, result.pvalue)


def levene(groups) -> Tuple[float, float]:
    """Mean-centered Levene test: one-way F on |x - group mean|."""
    data = _as_groups(groups)
    if len(data) < 2 or any(len(g) < 2 for g in data):
        raise DegenerateGroups("Levene needs at least 2 groups of size >= 2")
    deviations = [np.abs(g - g.mean()) for g in data]
    if all(np.ptp(z) == 0 for z in deviations):
        return fisher_anova(deviations)
    result = stats.levene(*data, center='mean')
    return _finite_f(result.statistic, result.pvalue)


def welch_anova(groups) -> Tuple[float, float]:
    """Welch's F with weights n_i / s_i^2 and Welch-Satterthwaite denominator df."""
    data = _as_groups(groups)
    if len(data) < 2 or any(len(g) < 2 for g in data):
        raise DegenerateGroups("Welch ANOVA needs at least 2 groups of size >= 2")
    flat = [g for g in data if np.var(g, ddof=1) == 0]
    if flat:
        raise ZeroGroupVariance(f"Welch ANOVA: {len(flat)} group(s) with zero variance")
    result = anova_oneway(data, use_var='unequal', welch_correction=True)
    return _finite_f(result.statistic, result.pvalue)


def kruskal_wallis(groups) -> Tuple[float, float]:
    """Kruskal-Wallis H with tie correction; chi-square with k-1 df."""
    data = _as_groups(groups)
    if len(data) < 2 or any(len(g) == 0 for g in data):
        raise DegenerateGroups("Kruskal-Wallis needs at least 2 non-empty groups")
    if sum(len(g) for g in data) < 3:
        raise DegenerateGroups("Kruskal-Wallis needs N >= 3")
    pooled = np.concatenate(data)
    if np.ptp(pooled) == 0:
        raise AllTied("Kruskal-Wallis: all values are identical")
    result = stats.kruskal(*data)
    return _finite_f(result.statistic, result.pvalue)


def route_test_from_flags(normal: bool, homoscedastic: bool) -> RoutedTest:
    if not normal:
        return RoutedTest.KRUSKAL_WALLIS
    return RoutedTest.FISHER if homoscedastic else RoutedTest.WELCH


def route_test(shapiro_p: float, levene_p: float, alpha: float = DEFAULT_ALPHA) -> RoutedTest:
    """Decision tree on the two assumption-test p-values."""
    alpha = check_alpha(alpha)
    return route_test_from_flags(shapiro_p >= alpha, levene_p >= alpha)


ROUTED_IMPLEMENTATIONS = {
    RoutedTest.FISHER: fisher_anova,
    RoutedTest.WELCH: welch_anova,
    RoutedTest.KRUSKAL_WALLIS: kruskal_wallis,
}


def compare_groups(grouped: GroupedSlopes, alpha: float = DEFAULT_ALPHA) -> GroupComparison:
    """Check assumptions, route, and run the chosen one-way test."""
    alpha = check_alpha(alpha)
    data = grouped.values
    residuals = np.concatenate([g - g.mean() for g in data])
    _, shapiro_p = shapiro_wilk(residuals)
    _, levene_p = levene(data)

    normal, homoscedastic = shapiro_p >= alpha, levene_p >= alpha
    routed = route_test_from_flags(normal, homoscedastic)
    statistic, p = ROUTED_IMPLEMENTATIONS[routed](data)
    logger.debug("%s: shapiro_p=%.4g levene_p=%.4g -> %s p=%.4g",
                 grouped.factor.value, shapiro_p, levene_p, routed.value, p)
    return GroupComparison(
        shapiro_p=shapiro_p,
        normal=normal,
        levene_p=levene_p,
        homoscedastic=homoscedastic,
        routed_test=routed,
        statistic=statistic,
        p_value=p,
        significant=p < alpha,
    )


def spearman_correlation(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Spearman's rho on mid-ranks, t-approximation p with n-2 df."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(x) != len(y):
        raise LengthMismatch(f"Spearman: {len(x)} x values vs {len(y)} y values")
    if len(x) < 4:
        raise TooShort(f"Spearman needs n >= 4 pairs, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise AllTied("Spearman: one of the vectors is constant")

    result = stats.spearmanr(x, y)
    rho, p = float(result[0]), float(result[1])
    if abs(rho) >= 1.0 - 1e-12:
        rho, p = math.copysign(1.0, rho), 0.0
    return CorrelationResult(rho=max(-1.0, min(1.0, rho)), p_value=min(1.0, max(0.0, p)), n=len(x))


def grouped_slopes(plan: ExperimentPlan, factor: FactorName, slopes: Mapping[str, float],
                   strict: bool = True) -> GroupedSlopes:
    """
    Group per-experiment slopes by the levels of `factor`.

    The plan must split into pairwise partitions on `factor` (see
    model.partition_by_factor); experiments without a slope are left out.
    """
    factor = FactorName.parse(factor)
    partitions = partition_by_factor(plan, factor, strict=strict)
    members: Dict[str, List[str]] = {}
    for part in partitions:
        for level, configs in ((part.level_a, part.configs_a), (part.level_b, part.configs_b)):
            ids = members.setdefault(level, [])
            ids.extend(c.id for c in configs if c.id not in ids)

    groups, experiments = {}, {}
    for level in plan.levels_present(factor):
        ids = [i for i in members.get(level, []) if i in slopes]
        groups[level] = tuple(float(slopes[i]) for i in ids)
        experiments[level] = tuple(ids)
    missing = sorted(set(i for ids in members.values() for i in ids) - set(slopes))
    if missing:
        logger.info("%s: no slope for %d experiment(s): %s", factor.value, len(missing), ', '.join(missing))
    return GroupedSlopes(factor, groups, experiments)


def comparison_table(rows: List[Dict[str, object]]) -> pd.DataFrame:
    columns = ['response', 'factor', 'shapiro_p', 'normal', 'levene_p', 'homoscedastic',
               'routed', 'p_value', 'significant']
    df = pd.DataFrame(rows)
    extra = [c for c in df.columns if c not in columns]
    return df.reindex(columns=columns + extra)
