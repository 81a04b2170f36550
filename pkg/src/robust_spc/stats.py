"""Subgroup statistics, standardization constants and order-statistic oracles."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special, stats as sps

from .datagen import Scenario

KINDS = ("mean", "median")


@dataclass(frozen=True)
class SubgroupStatistic:
    kind: str
    raw_value: float
    standardized_value: float


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown statistic kind {kind!r}; expected one of {KINDS}")


def subgroup_mean(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise ValueError("subgroup_mean of an empty subgroup")
    return float(math.fsum(values) / len(values))


def subgroup_median(values: Sequence[float]) -> float:
    """Middle order statistic; midpoint of the two middle ones for even sizes."""
    if len(values) == 0:
        raise ValueError("subgroup_median of an empty subgroup")
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return float(ordered[mid])
    return float((ordered[mid - 1] + ordered[mid]) / 2.0)


def _order_stat_pdf(x, k: int, n: int):
    log_coef = (
        special.gammaln(n + 1) - special.gammaln(k) - special.gammaln(n - k + 1)
    )
    return np.exp(
        log_coef
        + (k - 1) * special.log_ndtr(x)
        + (n - k) * special.log_ndtr(-x)
        + sps.norm.logpdf(x)
    )


def _order_stat_moment(k: int, n: int, power: int) -> float:
    value, _ = integrate.quad(
        lambda x: x**power * _order_stat_pdf(x, k, n), -np.inf, np.inf,
        epsabs=1e-13, epsrel=1e-12, limit=200,
    )
    return value


def _adjacent_cross_moment(k: int, n: int) -> float:
    """E[X_(k) X_(k+1)] for n standard normals, by double integration over x < y."""
    log_coef = (
        special.gammaln(n + 1) - special.gammaln(k) - special.gammaln(n - k)
    )

    def integrand(y, x):
        if y <= x:
            return 0.0
        return (
            x * y
            * math.exp(
                log_coef
                + (k - 1) * special.log_ndtr(x)
                + (n - k - 1) * special.log_ndtr(-y)
                + sps.norm.logpdf(x)
                + sps.norm.logpdf(y)
            )
        )

    value, _ = integrate.dblquad(
        integrand, -9.0, 9.0, lambda x: x, lambda x: 9.0, epsabs=1e-11, epsrel=1e-10
    )
    return value


@lru_cache(maxsize=None)
def _median_sigma(n: int) -> float:
    if n == 1:
        return 1.0
    if n % 2:
        k = (n + 1) // 2
        return math.sqrt(_order_stat_moment(k, n, 2))
    k = n // 2
    second = _order_stat_moment(k, n, 2)  # equals that of X_(k+1) by symmetry
    cross = _adjacent_cross_moment(k, n)
    return math.sqrt((2.0 * second + 2.0 * cross) / 4.0)


def statistic_sigma(kind: str, n: int) -> float:
    """In-control standard deviation of the statistic for unit-variance data."""
    _check_kind(kind)
    if n < 1:
        raise ValueError(f"subgroup size must be >= 1, got {n}")
    if kind == "mean":
        return 1.0 / math.sqrt(n)
    return _median_sigma(int(n))


def summarize(values: Sequence[float], kind: str) -> SubgroupStatistic:
    _check_kind(kind)
    raw = subgroup_mean(values) if kind == "mean" else subgroup_median(values)
    return SubgroupStatistic(kind, raw, raw / statistic_sigma(kind, len(values)))


def standardized_statistics(data: np.ndarray, kind: str) -> np.ndarray:
    """Standardized statistic of every subgroup along the last axis."""
    n = data.shape[-1]
    if kind == "mean":
        raw = data.mean(axis=-1)
    elif kind == "median":
        raw = np.median(data, axis=-1)
    else:
        _check_kind(kind)
    return raw / statistic_sigma(kind, n)


def _binomial_upper_tail(p, n: int):
    """P(at least (n+1)/2 of n Bernoulli(p) trials succeed)."""
    total = 0.0
    for j in range((n + 1) // 2, n + 1):
        total = total + math.comb(n, j) * p**j * (1.0 - p) ** (n - j)
    return total


def median_tail_prob(m: float, n: int) -> float:
    """P(median of n standard normals > m) for odd n."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"median_tail_prob needs an odd subgroup size, got {n}")
    p = float(special.ndtr(-m))
    return float(_binomial_upper_tail(p, n))


def _observation_sf(x: float, scenario: Scenario) -> float:
    """Survival function of one observation from the (possibly contaminated) scenario."""
    s0 = math.sqrt(scenario.in_control_variance)
    s1 = math.sqrt(scenario.sigma2_c)
    d = scenario.delta
    return float(
        (1.0 - scenario.theta) * special.ndtr(-(x - d) / s0)
        + scenario.theta * special.ndtr(-(x - d) / s1)
    )


def mean_signal_prob(limit: float, scenario: Scenario) -> float:
    """Exact per-inspection probability that |standardized mean| > limit.

    Conditioning on the number of contaminated observations turns the
    subgroup mean into a normal variable, so the mixture is a finite binomial
    sum of normal tail probabilities.
    """
    n = scenario.subgroup_size
    cut = limit / math.sqrt(n)  # standardized limit back in observation units
    prob = 0.0
    for j in range(n + 1):
        weight = math.comb(n, j) * scenario.theta**j * (1.0 - scenario.theta) ** (n - j)
        if weight == 0.0:
            continue
        var = ((n - j) * scenario.in_control_variance + j * scenario.sigma2_c) / n**2
        sd = math.sqrt(var)
        prob += weight * (
            special.ndtr(-(cut - scenario.delta) / sd)
            + special.ndtr((-cut - scenario.delta) / sd)
        )
    return float(prob)


def median_signal_prob(limit: float, scenario: Scenario) -> float:
    """Exact per-inspection probability that |standardized median| > limit (odd n)."""
    n = scenario.subgroup_size
    if n % 2 == 0:
        raise ValueError("median_signal_prob needs an odd subgroup size")
    cut = limit * statistic_sigma("median", n)
    upper = _binomial_upper_tail(_observation_sf(cut, scenario), n)
    # median < -cut  <=>  at least (n+1)/2 observations fall below -cut
    lower = _binomial_upper_tail(1.0 - _observation_sf(-cut, scenario), n)
    return float(upper + lower)


def shewhart_signal_prob(kind: str, limit: float, scenario: Scenario) -> float:
    _check_kind(kind)
    if kind == "mean":
        return mean_signal_prob(limit, scenario)
    return median_signal_prob(limit, scenario)


def shewhart_limit_for_arl(kind: str, target_arl0: float, n: int = 5) -> float:
    """Symmetric standardized limit giving the target in-control ARL exactly."""
    scenario = Scenario(subgroup_size=n)
    goal = 1.0 / target_arl0
    return float(
        optimize.brentq(
            lambda c: shewhart_signal_prob(kind, c, scenario) - goal, 0.5, 8.0, xtol=1e-12
        )
    )
