import math

import numpy as np
import pytest
from scipy.stats import norm

from robust_spc import stats
from robust_spc.datagen import CLEAN, CONTAMINATED, RandomStream, Scenario


def test_mean_and_median():
    assert stats.subgroup_mean([1, 2, 3, 4, 10]) == 4.0
    assert stats.subgroup_median([1, 2, 3, 4, 10]) == 3.0
    assert stats.subgroup_median([1, 2, 3, 4]) == 2.5
    with pytest.raises(ValueError):
        stats.subgroup_mean([])


def test_median_resists_outlier():
    assert stats.subgroup_median([0, 0, 0, 0, 1e6]) == 0.0


def test_sigma_values():
    assert stats.statistic_sigma("mean", 5) == pytest.approx(1 / math.sqrt(5))
    assert stats.statistic_sigma("median", 5) == pytest.approx(0.5355685, abs=1e-6)
    assert stats.statistic_sigma("median", 1) == pytest.approx(1.0, abs=1e-8)


def test_median_sigma_matches_simulation():
    x = RandomStream(9).subgroups(CLEAN, 200_000)
    for n in (4, 5):
        sim = np.median(x[:, :n], axis=1).std()
        assert stats.statistic_sigma("median", n) == pytest.approx(sim, rel=0.01)


def test_median_tail_prob():
    assert stats.median_tail_prob(3.09, 1) == pytest.approx(norm.sf(3.09))
    with pytest.raises(ValueError):
        stats.median_tail_prob(1.0, 4)


def test_signal_probabilities_clean():
    p = stats.shewhart_signal_prob("mean", 3.09, CLEAN)
    assert p == pytest.approx(2 * norm.sf(3.09), rel=1e-9)
    assert 1 / p == pytest.approx(499.6, abs=0.05)


def test_contaminated_mean_signal_prob_is_larger():
    p = stats.shewhart_signal_prob("mean", 3.09, CONTAMINATED)
    assert 1 / p == pytest.approx(87.1, rel=0.05)


def test_median_signal_prob_matches_simulation():
    x = RandomStream(4).subgroups(Scenario(delta=1.0, theta=0.06), 400_000)
    u = stats.standardized_statistics(x, "median")
    sim = np.mean(np.abs(u) > 2.0)
    exact = stats.shewhart_signal_prob("median", 2.0, Scenario(delta=1.0, theta=0.06))
    assert sim == pytest.approx(exact, rel=0.02)


def test_limit_for_arl():
    assert stats.shewhart_limit_for_arl("mean", 500) == pytest.approx(3.0902, abs=1e-3)
    med = stats.shewhart_limit_for_arl("median", 500)
    assert 3.10 <= med <= 3.15
