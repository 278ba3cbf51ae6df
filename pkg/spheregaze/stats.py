"""
Significance tests and effect sizes for comparing per-sample errors.
"""

import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import special, stats

from .errors import StatisticsError


class TTest(NamedTuple):
    t_stat: float
    p_value: float
    dof: int
    mean_diff: float


def student_t_two_sided(t_stat: float, dof: int) -> float:
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom (regularised incomplete beta)."""
    if dof < 1:
        raise StatisticsError(f"degrees of freedom must be >= 1, got {dof}")
    x = dof / (dof + t_stat * t_stat)
    return float(special.betainc(dof / 2.0, 0.5, x))


def paired_t_test(errors_a: Sequence[float], errors_b: Sequence[float]) -> TTest:
    """Two-sided paired t-test on a - b."""
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatisticsError(f"paired samples must have equal length, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise StatisticsError(f"paired t-test needs at least 2 pairs, got {n}")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        raise StatisticsError("differences have zero variance; t statistic is undefined")
    mean_d = float(d.mean())
    t_stat = mean_d / (sd / math.sqrt(n))
    return TTest(t_stat, student_t_two_sided(t_stat, n - 1), n - 1, mean_d)


def cohens_d(errors_a: Sequence[float], errors_b: Sequence[float]) -> float:
    """(mean_a - mean_b) / pooled standard deviation.

    Group variances are population variances, so cohens_d([2, 4], [1, 3]) is 1.0.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    n_a, n_b = a.size, b.size
    if n_a == 0 or n_b == 0 or n_a + n_b < 3:
        raise StatisticsError("cohens_d needs non-empty samples with at least 3 values in total")
    var_a = float(np.var(a))
    var_b = float(np.var(b))
    pooled = math.sqrt(((n_a - 1) * var_a + (n_b - 1) * var_b) / (n_a + n_b - 2))
    if pooled == 0.0:
        raise StatisticsError("pooled variance is zero; effect size is undefined")
    return (float(a.mean()) - float(b.mean())) / pooled


def confidence_interval(values: Sequence[float], level: float = 0.95) -> Tuple[float, float]:
    """Student-t interval for the mean."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise StatisticsError("confidence interval needs at least 2 values")
    if not 0.0 < level < 1.0:
        raise StatisticsError(f"confidence level must be in (0, 1), got {level}")
    half = float(stats.t.ppf(0.5 + level / 2.0, x.size - 1)) * float(np.std(x, ddof=1)) / math.sqrt(x.size)
    centre = float(x.mean())
    return centre - half, centre + half


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> Tuple[float, List[bool]]:
    """Per-test threshold alpha / m and which p-values fall below it."""
    if not p_values:
        return alpha, []
    threshold = alpha / len(p_values)
    return threshold, [p < threshold for p in p_values]


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; nan when either side is constant."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.size != b.size or a.size < 2:
        return float("nan")
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    return float((a * b).sum() / denom) if denom > 0 else float("nan")


def sign_test(differences: Sequence[float]) -> float:
    """One-sided sign test: p-value for positive differences outnumbering negative ones.

    Zero differences are dropped before counting.
    """
    d = np.asarray(differences, dtype=np.float64)
    d = d[d != 0.0]
    if d.size == 0:
        raise StatisticsError("sign test needs at least one non-zero difference")
    positive = int((d > 0).sum())
    return float(stats.binomtest(positive, int(d.size), 0.5, alternative="greater").pvalue)
