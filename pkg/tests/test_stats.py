import math

import numpy as np
import pytest
from scipy import stats as sps

from spheregaze.errors import StatisticsError
from spheregaze.stats import (
    bonferroni,
    cohens_d,
    confidence_interval,
    paired_t_test,
    pearson,
    sign_test,
    student_t_two_sided,
)


class TestPairedTTest:
    def test_identical_samples_are_degenerate(self):
        with pytest.raises(StatisticsError, match="zero variance"):
            paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_constant_difference_is_degenerate(self):
        with pytest.raises(StatisticsError):
            paired_t_test([2.0, 3.0, 4.0, 5.0], [1.0, 2.0, 3.0, 4.0])

    def test_needs_pairs(self):
        with pytest.raises(StatisticsError):
            paired_t_test([1.0], [2.0])
        with pytest.raises(StatisticsError, match="equal length"):
            paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_hand_computed_statistic(self):
        result = paired_t_test([3.0, 5.0, 4.0], [1.0, 2.0, 3.0])
        # d = [2, 3, 1], mean 2, sd 1
        assert result.t_stat == pytest.approx(2.0 * math.sqrt(3.0))
        assert result.dof == 2
        assert result.mean_diff == pytest.approx(2.0)

    def test_shifted_normal_differences_are_significant(self):
        rng = np.random.default_rng(0)
        d = rng.normal(0.5, 1.0, size=100)
        result = paired_t_test(d, np.zeros(100))
        assert result.p_value < 0.001

    def test_matches_t_distribution_tail(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(3, 60))
            a, b = rng.normal(size=n), rng.normal(0.2, 1.0, size=n)
            result = paired_t_test(a, b)
            reference = 2.0 * sps.t.sf(abs(result.t_stat), n - 1)
            assert result.p_value == pytest.approx(reference, abs=1e-6)

    def test_tail_probability_bounds(self):
        assert student_t_two_sided(0.0, 5) == pytest.approx(1.0)
        assert student_t_two_sided(50.0, 5) < 1e-6
        with pytest.raises(StatisticsError):
            student_t_two_sided(1.0, 0)


class TestCohensD:
    def test_equal_spread_example(self):
        assert cohens_d([2.0, 4.0], [1.0, 3.0]) == 1.0

    def test_identical_distributions(self):
        assert cohens_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_sign_follows_first_argument(self):
        assert cohens_d([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) < 0

    def test_zero_pooled_variance(self):
        with pytest.raises(StatisticsError):
            cohens_d([1.0, 1.0], [1.0, 1.0])

    def test_too_few_values(self):
        with pytest.raises(StatisticsError):
            cohens_d([1.0], [2.0])


class TestIntervalsAndCorrections:
    def test_confidence_interval_contains_mean(self):
        low, high = confidence_interval([1.0, 2.0, 3.0, 4.0])
        assert low < 2.5 < high
        assert high - 2.5 == pytest.approx(2.5 - low)
        assert high - low == pytest.approx(2 * sps.t.ppf(0.975, 3) * np.std([1, 2, 3, 4], ddof=1) / 2.0)

    def test_confidence_interval_needs_two_values(self):
        with pytest.raises(StatisticsError):
            confidence_interval([1.0])

    def test_bonferroni(self):
        threshold, flags = bonferroni([0.001, 0.02, 0.3], alpha=0.06)
        assert threshold == pytest.approx(0.02)
        assert flags == [True, False, False]
        assert bonferroni([], 0.05) == (0.05, [])

    def test_pearson(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        assert math.isnan(pearson([1, 1, 1], [1, 2, 3]))


class TestSignTest:
    def test_nine_of_ten_positive(self):
        assert sign_test([1.0] * 9 + [-1.0]) == pytest.approx(11 / 1024)

    def test_ties_are_dropped(self):
        assert sign_test([0.0, 0.0, 2.5]) == pytest.approx(0.5)

    def test_all_negative_is_not_significant(self):
        assert sign_test([-0.1] * 8) == pytest.approx(1.0)

    def test_matches_binomial_tail(self, rng):
        d = rng.normal(0.2, 1.0, size=60)
        k = int((d > 0).sum())
        assert sign_test(d) == pytest.approx(sps.binom.sf(k - 1, 60, 0.5))

    def test_needs_a_non_zero_difference(self):
        with pytest.raises(StatisticsError):
            sign_test([0.0, 0.0])
