"""
Trend Detection Battery - Is This Series Aging?

Applies, to one MetricSeries:
1. Durbin-Watson on least-squares residuals, to decide whether the series
   is serially correlated
2. Mann-Kendall (plain when uncorrelated, Hamed-Rao variance-corrected
   otherwise)
3. Three confirmation tests: Cox-Stuart, regression t-test, Spearman's rho
4. Sen's slope with a 95% confidence interval

A trend is DECLARED when the Mann-Kendall variant rejects at alpha AND at
least two of the three confirmation tests reject too. All tests are
two-sided; direction is read off the Sen slope.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from statsmodels.stats.stattools import durbin_watson as dw_statistic
from statsmodels.tsa.stattools import acf

from errors import AllTied, TooShort, ZeroVariance
from model import MetricSeries

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
MIN_DETECT_SAMPLES = 10
EXACT_MK_MAX_N = 10
REQUIRED_CONFIRMATIONS = 2
PERFECT_FIT_RTOL = 1e-9

# Durbin-Watson 5% bounds, one regressor (n, dL, dU)
DW_BOUNDS = np.array([
    (6, 0.610, 1.400), (7, 0.700, 1.356), (8, 0.763, 1.332), (9, 0.824, 1.320),
    (10, 0.879, 1.320), (11, 0.927, 1.324), (12, 0.971, 1.331), (13, 1.010, 1.340),
    (14, 1.045, 1.350), (15, 1.077, 1.361), (16, 1.106, 1.371), (17, 1.133, 1.381),
    (18, 1.158, 1.391), (19, 1.180, 1.401), (20, 1.201, 1.411), (21, 1.221, 1.420),
    (22, 1.239, 1.429), (23, 1.257, 1.437), (24, 1.273, 1.446), (25, 1.288, 1.454),
    (26, 1.302, 1.461), (27, 1.316, 1.469), (28, 1.328, 1.476), (29, 1.341, 1.483),
    (30, 1.352, 1.489), (31, 1.363, 1.496), (32, 1.373, 1.502), (33, 1.383, 1.508),
    (34, 1.393, 1.514), (35, 1.402, 1.519), (36, 1.411, 1.525), (37, 1.419, 1.530),
    (38, 1.427, 1.535), (39, 1.435, 1.540), (40, 1.442, 1.544), (45, 1.475, 1.566),
    (50, 1.503, 1.585), (55, 1.528, 1.601), (60, 1.549, 1.616), (65, 1.567, 1.629),
    (70, 1.583, 1.641), (75, 1.598, 1.652), (80, 1.611, 1.662), (85, 1.624, 1.671),
    (90, 1.635, 1.679), (95, 1.645, 1.687), (100, 1.654, 1.694), (150, 1.720, 1.746),
    (200, 1.758, 1.778),
])


class TestName(Enum):
    __test__ = False

    MK = "MK"
    MK_HAMED_RAO = "MK_HamedRao"
    COX_STUART = "CoxStuart"
    T_TEST = "TTest"
    SPEARMAN_RHO = "SpearmanRho"
    DURBIN_WATSON = "DurbinWatson"


class Decision(Enum):
    REJECT = "reject"
    FAIL_TO_REJECT = "fail_to_reject"
    INCONCLUSIVE = "inconclusive"


class AutocorrRoute(Enum):
    PLAIN_MK = "plain_MK"
    MODIFIED_MK = "modified_MK"


CONFIRMATION_TESTS = (TestName.COX_STUART, TestName.T_TEST, TestName.SPEARMAN_RHO)


def check_alpha(alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return float(alpha)


def _decide(p_value: float, alpha: float) -> Decision:
    return Decision.REJECT if p_value < alpha else Decision.FAIL_TO_REJECT


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


@dataclass(frozen=True)
class TestResult:
    """
    Outcome of one test.

    For DurbinWatson, REJECT means serial correlation was found, and
    there is no p-value (the decision comes from tabulated bounds).
    """
    __test__ = False

    test_name: TestName
    statistic: float
    p_value: Optional[float]
    decision: Decision
    detail: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        is_dw = self.test_name is TestName.DURBIN_WATSON
        if is_dw != (self.p_value is None):
            raise ValueError(f"{self.test_name.value}: p-value must be absent exactly for DurbinWatson")
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"{self.test_name.value}: p-value {self.p_value} outside [0, 1]")

    @property
    def rejects(self) -> bool:
        return self.decision is Decision.REJECT

    def to_record(self) -> Dict[str, Any]:
        return {
            'name': self.test_name.value,
            'stat': float(self.statistic),
            'p': None if self.p_value is None else float(self.p_value),
            'decision': self.decision.value,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'TestResult':
        p = record.get('p')
        return cls(TestName(record['name']), float(record['stat']),
                   None if p is None else float(p), Decision(record['decision']))


class SenEstimate(NamedTuple):
    slope: float
    ci95: Tuple[float, float]
    intercept: float


# -- helpers -------------------------------------------------------------------

def _arrays(series: MetricSeries) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(series.t, dtype=float), np.asarray(series.values, dtype=float)


def _require(series: MetricSeries, minimum: int, what: str):
    if len(series) < minimum:
        raise TooShort(f"{what} needs n >= {minimum}, {series.series_id} has {len(series)}")


def _ols_residuals(t: np.ndarray, x: np.ndarray):
    fit = stats.linregress(t, x)
    residuals = x - (fit.intercept + fit.slope * t)
    scale = max(1.0, float(np.max(np.abs(x))))
    perfect = bool(np.all(np.abs(residuals) <= PERFECT_FIT_RTOL * scale))
    return fit, residuals, perfect


def mk_score(x: np.ndarray) -> int:
    """S = sum over i<j of sign(x_j - x_i)."""
    x = np.asarray(x, dtype=float)
    s = 0
    for k in range(len(x) - 1):
        s += int(np.sign(x[k + 1:] - x[k]).sum())
    return s


def mk_variance(x: np.ndarray) -> float:
    """Var(S) with the tie correction term."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    _, counts = np.unique(x, return_counts=True)
    ties = counts[counts > 1].astype(float)
    tie_term = float(np.sum(ties * (ties - 1) * (2 * ties + 5)))
    return (n * (n - 1) * (2 * n + 5) - tie_term) / 18.0


def _z_score(s: int, var_s: float) -> float:
    if s > 0:
        return (s - 1) / math.sqrt(var_s)
    if s < 0:
        return (s + 1) / math.sqrt(var_s)
    return 0.0


@lru_cache(maxsize=None)
def _inversion_counts(n: int) -> Tuple[int, ...]:
    """Number of permutations of n items by inversion count."""
    counts = [1]
    for m in range(2, n + 1):
        grown = [0] * (len(counts) + m - 1)
        for shift in range(m):
            for d, c in enumerate(counts):
                grown[d + shift] += c
        counts = grown
    return tuple(counts)


def _exact_mk_p(s: int, n: int) -> float:
    """Two-sided P(|S| >= |s|) under H0, no ties."""
    counts = _inversion_counts(n)
    pairs = n * (n - 1) // 2
    hits = sum(c for d, c in enumerate(counts) if abs(pairs - 2 * d) >= abs(s))
    return hits / math.factorial(n)


def _mk_p_value(s: int, var_s: float, n: int, tied: bool, exact_ok: bool = True) -> Tuple[float, float]:
    z = _z_score(s, var_s)
    if exact_ok and n <= EXACT_MK_MAX_N and not tied:
        return z, _exact_mk_p(s, n)
    if exact_ok and n <= EXACT_MK_MAX_N:
        logger.debug("MK n=%d with ties: normal approximation", n)
    return z, _clip_p(2 * (1 - stats.norm.cdf(abs(z))))


def _pairwise_slopes(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(len(x), k=1)
    return (x[j] - x[i]) / (t[j] - t[i])


# -- tests ---------------------------------------------------------------------

def durbin_watson_bounds(n: int) -> Tuple[float, float]:
    """(dL, dU) at 5% for one regressor, interpolated; clamped at the last row."""
    ns, lows, highs = DW_BOUNDS[:, 0], DW_BOUNDS[:, 1], DW_BOUNDS[:, 2]
    if n >= ns[-1]:
        return float(lows[-1]), float(highs[-1])
    return float(np.interp(n, ns, lows)), float(np.interp(n, ns, highs))


def durbin_watson(series: MetricSeries) -> TestResult:
    """
    Durbin-Watson statistic on residuals of the least-squares line over time.

    No autocorrelation when d and 4-d both exceed dU; autocorrelation when
    either is below dL; inconclusive otherwise. A perfect fit (all
    residuals zero) is reported as d = 0, positive autocorrelation.
    """
    _require(series, 6, "Durbin-Watson")
    t, x = _arrays(series)
    _, residuals, perfect = _ols_residuals(t, x)
    d = 0.0 if perfect else float(dw_statistic(residuals))

    d_low, d_high = durbin_watson_bounds(len(x))
    if d > d_high and 4 - d > d_high:
        decision = Decision.FAIL_TO_REJECT
    elif d < d_low or 4 - d < d_low:
        decision = Decision.REJECT
    else:
        decision = Decision.INCONCLUSIVE
    sign = 1.0 if d < 2 else -1.0
    return TestResult(TestName.DURBIN_WATSON, d, None, decision,
                      {'dL': d_low, 'dU': d_high, 'sign': sign})


def mann_kendall(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Mann-Kendall S; exact null distribution for n <= 10 without ties."""
    _require(series, 4, "Mann-Kendall")
    alpha = check_alpha(alpha)
    _, x = _arrays(series)
    n = len(x)
    var_s = mk_variance(x)
    if var_s <= 0:
        return TestResult(TestName.MK, 0.0, 1.0, Decision.FAIL_TO_REJECT, {'var_s': 0.0, 'z': 0.0})

    s = mk_score(x)
    tied = len(np.unique(x)) < n
    z, p = _mk_p_value(s, var_s, n, tied)
    return TestResult(TestName.MK, float(s), p, _decide(p, alpha), {'var_s': var_s, 'z': z})


def hamed_rao_factor(t: np.ndarray, x: np.ndarray) -> float:
    """
    Effective-sample-size factor n/n* from significant rank autocorrelations
    of the Sen-detrended series, lags 1..min(n-3, n/4).

    Lags are kept while |rho_k| > 1.96/sqrt(n); the first non-significant
    lag ends the sum.
    """
    n = len(x)
    slope = float(np.median(_pairwise_slopes(t, x)))
    ranks = stats.rankdata(x - slope * t)
    if np.ptp(ranks) == 0:
        return 1.0

    max_lag = min(n - 3, n // 4)
    if max_lag < 1:
        return 1.0
    rho = acf(ranks, nlags=max_lag, fft=True)[1:]
    bound = stats.norm.ppf(1 - DEFAULT_ALPHA / 2) / math.sqrt(n)
    insignificant = np.flatnonzero(np.abs(rho) <= bound)
    kept = int(insignificant[0]) if len(insignificant) else max_lag
    if kept == 0:
        return 1.0

    k = np.arange(1, kept + 1, dtype=float)
    weights = (n - k) * (n - k - 1) * (n - k - 2)
    return 1.0 + 2.0 / (n * (n - 1) * (n - 2)) * float(np.sum(weights * rho[:kept]))


def mann_kendall_hamed_rao(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Mann-Kendall with Var(S) inflated for serial correlation."""
    _require(series, MIN_DETECT_SAMPLES, "Hamed-Rao Mann-Kendall")
    alpha = check_alpha(alpha)
    t, x = _arrays(series)
    n = len(x)
    var_s = mk_variance(x)
    if var_s <= 0:
        return TestResult(TestName.MK_HAMED_RAO, 0.0, 1.0, Decision.FAIL_TO_REJECT,
                          {'var_s': 0.0, 'z': 0.0, 'factor': 1.0})

    factor = hamed_rao_factor(t, x)
    if factor <= 0:
        logger.debug("%s: non-positive Hamed-Rao factor %.4f, using uncorrected variance",
                     series.series_id, factor)
        factor = 1.0

    s = mk_score(x)
    tied = len(np.unique(x)) < n
    if factor == 1.0:
        z, p = _mk_p_value(s, var_s, n, tied)
    else:
        z, p = _mk_p_value(s, var_s * factor, n, tied, exact_ok=False)
    return TestResult(TestName.MK_HAMED_RAO, float(s), p, _decide(p, alpha),
                      {'var_s': var_s * factor, 'z': z, 'factor': factor})


def cox_stuart(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Sign test on (x_i, x_{i+n/2}) pairs, middle element dropped for odd n."""
    _require(series, 6, "Cox-Stuart")
    alpha = check_alpha(alpha)
    _, x = _arrays(series)
    if len(x) % 2:
        x = np.delete(x, len(x) // 2)
    half = len(x) // 2
    diffs = x[half:] - x[:half]
    diffs = diffs[diffs != 0]
    if len(diffs) == 0:
        raise AllTied(f"Cox-Stuart: every pair of {series.series_id} is tied")

    positive = int(np.sum(diffs > 0))
    p = _clip_p(stats.binomtest(positive, len(diffs), 0.5, alternative='two-sided').pvalue)
    return TestResult(TestName.COX_STUART, float(positive), p, _decide(p, alpha),
                      {'pairs': float(half), 'untied': float(len(diffs))})


def t_test_trend(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Regression of value on time; t = b / SE(b) with n-2 df."""
    _require(series, 4, "t-test")
    alpha = check_alpha(alpha)
    t, x = _arrays(series)
    if np.ptp(t) == 0:
        raise ZeroVariance(f"t-test: all timestamps of {series.series_id} are equal")

    fit, _, perfect = _ols_residuals(t, x)
    slope = float(fit.slope)
    if perfect:
        if np.ptp(x) == 0 or slope == 0:
            return TestResult(TestName.T_TEST, 0.0, 1.0, Decision.FAIL_TO_REJECT, {'slope': 0.0})
        return TestResult(TestName.T_TEST, math.copysign(math.inf, slope), 0.0, Decision.REJECT,
                          {'slope': slope})

    statistic = slope / float(fit.stderr)
    p = _clip_p(float(fit.pvalue))
    return TestResult(TestName.T_TEST, statistic, p, _decide(p, alpha), {'slope': slope})


def spearman_rho_trend(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Spearman's rho between time and value (mid-ranks)."""
    _require(series, 4, "Spearman rho")
    alpha = check_alpha(alpha)
    t, x = _arrays(series)
    if np.ptp(x) == 0:
        raise AllTied(f"Spearman rho: {series.series_id} is constant")

    result = stats.spearmanr(t, x)
    rho, p = float(result[0]), float(result[1])
    if abs(rho) >= 1.0 - 1e-12:
        rho, p = math.copysign(1.0, rho), 0.0
    p = _clip_p(p)
    return TestResult(TestName.SPEARMAN_RHO, rho, p, _decide(p, alpha))


def sen_slope(series: MetricSeries, alpha: float = DEFAULT_ALPHA) -> SenEstimate:
    """
    Median pairwise slope, its confidence interval and intercept.

    CI bounds are the sorted pairwise slopes at (fractional) ranks
    (N -/+ z * sqrt(Var S)) / 2, linearly interpolated.
    """
    _require(series, 2, "Sen slope")
    alpha = check_alpha(alpha)
    t, x = _arrays(series)
    if np.ptp(t) == 0:
        raise ZeroVariance(f"Sen slope: all timestamps of {series.series_id} are equal")

    slopes = np.sort(_pairwise_slopes(t, x))
    slope = float(np.median(slopes))
    intercept = float(np.median(x - slope * t))

    n_pairs = len(slopes)
    c = stats.norm.ppf(1 - alpha / 2) * math.sqrt(max(mk_variance(x), 0.0))
    ranks = np.clip([(n_pairs - c) / 2, (n_pairs + c) / 2], 1, n_pairs) - 1
    low, high = (float(v) for v in np.interp(ranks, np.arange(n_pairs), slopes))
    return SenEstimate(slope, (min(low, slope), max(high, slope)), intercept)


# -- battery -------------------------------------------------------------------

@dataclass(frozen=True)
class TrendVerdict:
    """Full battery outcome for one series."""
    series_id: str
    n: int
    autocorr_route: AutocorrRoute
    dw_statistic: float
    tests: Tuple[TestResult, ...]
    declared: bool
    slope: float
    slope_ci95: Tuple[float, float]
    intercept: float
    experiment: Optional[str] = None
    entity: str = ''
    metric: str = ''
    transform: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'tests', tuple(self.tests))
        object.__setattr__(self, 'slope_ci95', (float(self.slope_ci95[0]), float(self.slope_ci95[1])))
        low, high = self.slope_ci95
        if not low <= self.slope <= high:
            raise ValueError(f"{self.series_id}: slope {self.slope} outside its CI {self.slope_ci95}")

    def test(self, name: TestName) -> Optional[TestResult]:
        for result in self.tests:
            if result.test_name is name:
                return result
        return None

    @property
    def direction(self) -> str:
        if not self.declared or self.slope == 0:
            return 'none'
        return 'increasing' if self.slope > 0 else 'decreasing'

    @property
    def increasing(self) -> bool:
        return self.declared and self.slope > 0

    def to_record(self) -> Dict[str, Any]:
        return {
            'series_id': self.series_id,
            'experiment': self.experiment,
            'entity': self.entity,
            'metric': self.metric,
            'n': self.n,
            'route': self.autocorr_route.value,
            'dw': self.dw_statistic,
            'tests': [r.to_record() for r in self.tests],
            'declared': self.declared,
            'slope': self.slope,
            'ci95': list(self.slope_ci95),
            'intercept': self.intercept,
            'transform': self.transform,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> 'TrendVerdict':
        return cls(
            series_id=record['series_id'],
            n=int(record['n']),
            autocorr_route=AutocorrRoute(record['route']),
            dw_statistic=float(record['dw']),
            tests=tuple(TestResult.from_record(r) for r in record['tests']),
            declared=bool(record['declared']),
            slope=float(record['slope']),
            slope_ci95=tuple(record['ci95']),
            intercept=float(record.get('intercept', 0.0)),
            experiment=record.get('experiment'),
            entity=record.get('entity', ''),
            metric=record.get('metric', ''),
            transform=record.get('transform'),
        )

    def to_row(self) -> Dict[str, Any]:
        """Flat form for CSV tables: one stat/p/decision triple per test."""
        row = {k: v for k, v in self.to_record().items() if k not in ('tests', 'ci95')}
        row['ci95_low'], row['ci95_high'] = self.slope_ci95
        row['transform'] = self.transform or ''
        row['experiment'] = self.experiment or ''
        for result in self.tests:
            prefix = result.test_name.value
            row[f'{prefix}_stat'] = result.statistic
            row[f'{prefix}_p'] = '' if result.p_value is None else result.p_value
            row[f'{prefix}_decision'] = result.decision.value
        return row

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> 'TrendVerdict':
        tests = []
        for name in TestName:
            decision = row.get(f'{name.value}_decision')
            if not isinstance(decision, str) or not decision:
                continue
            p = row.get(f'{name.value}_p')
            p = None if name is TestName.DURBIN_WATSON or p in ('', None) or _is_nan(p) else float(p)
            tests.append(TestResult(name, float(row[f'{name.value}_stat']), p, Decision(decision)))
        declared = row['declared']
        if isinstance(declared, str):
            declared = declared.strip().lower() == 'true'
        return cls(
            series_id=str(row['series_id']),
            n=int(row['n']),
            autocorr_route=AutocorrRoute(row['route']),
            dw_statistic=float(row['dw']),
            tests=tuple(tests),
            declared=bool(declared),
            slope=float(row['slope']),
            slope_ci95=(float(row['ci95_low']), float(row['ci95_high'])),
            intercept=float(row['intercept']),
            experiment=_blank_to_none(row.get('experiment')),
            entity=str(row.get('entity', '')),
            metric=str(row.get('metric', '')),
            transform=_blank_to_none(row.get('transform')),
        )


def _is_nan(value) -> bool:
    return isinstance(value, float) and math.isnan(value)


def _blank_to_none(value) -> Optional[str]:
    if value is None or _is_nan(value) or str(value) == '':
        return None
    return str(value)


def _confirm(test, series: MetricSeries, alpha: float, name: TestName) -> TestResult:
    try:
        return test(series, alpha)
    except AllTied:
        # no usable ordering information: counts as not rejecting
        return TestResult(name, 0.0, 1.0, Decision.FAIL_TO_REJECT)


def detect_trend(series: MetricSeries, alpha: float = DEFAULT_ALPHA,
                 transform: Optional[str] = None) -> TrendVerdict:
    """
    Run the full battery on one series.

    Args:
        series: Series to test, n >= 10
        alpha: Significance level for every test
        transform: Label of any transformation applied upstream ("rate")
    """
    _require(series, MIN_DETECT_SAMPLES, "detect_trend")
    alpha = check_alpha(alpha)

    dw = durbin_watson(series)
    if dw.decision is Decision.FAIL_TO_REJECT:
        route, mk = AutocorrRoute.PLAIN_MK, mann_kendall(series, alpha)
    else:
        route, mk = AutocorrRoute.MODIFIED_MK, mann_kendall_hamed_rao(series, alpha)

    confirmations = [
        _confirm(cox_stuart, series, alpha, TestName.COX_STUART),
        _confirm(t_test_trend, series, alpha, TestName.T_TEST),
        _confirm(spearman_rho_trend, series, alpha, TestName.SPEARMAN_RHO),
    ]
    confirmed = sum(r.rejects for r in confirmations)
    declared = mk.rejects and confirmed >= REQUIRED_CONFIRMATIONS

    estimate = sen_slope(series, DEFAULT_ALPHA)
    logger.debug("%s: route=%s dw=%.3f mk_p=%.4g confirmed=%d declared=%s slope=%.6g",
                 series.series_id, route.value, dw.statistic, mk.p_value, confirmed, declared, estimate.slope)
    return TrendVerdict(
        series_id=series.series_id,
        n=len(series),
        autocorr_route=route,
        dw_statistic=dw.statistic,
        tests=(dw, mk, *confirmations),
        declared=declared,
        slope=estimate.slope,
        slope_ci95=estimate.ci95,
        intercept=estimate.intercept,
        experiment=series.experiment,
        entity=series.entity,
        metric=series.metric,
        transform=transform,
    )
