"""Monte Carlo run-length estimation and stochastic calibration of chart limits.

Run lengths are zero-state: the chart starts from :func:`charts.reset` and the
scenario's shift is present from the first inspection.  Replication ``i``
always draws from ``RandomStream(master_seed, i)``, and the engine only ever
applies elementwise arithmetic across replications, so results do not depend
on how replications are split into batches or across worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from typing import Any, Sequence

import numpy as np
from scipy import optimize

from . import charts
from .datagen import RandomStream, Scenario
from .stats import standardized_statistics, statistic_sigma

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20_190_501
DEFAULT_CAP = 50_000
DEFAULT_SCHEDULE = (2_000, 10_000, 50_000)

_FIRST_BLOCK = 16
_MAX_BLOCK = 2_048


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunLengthSummary:
    arl: float
    std_error: float
    replications: int
    cap: int
    truncated_count: int
    master_seed: int | None = None

    @property
    def lower_bound(self) -> bool:
        """True when capped runs make ``arl`` a lower bound."""
        return self.truncated_count > 0

    @property
    def usable(self) -> bool:
        return self.truncated_count < self.replications

    def to_dict(self) -> dict:
        return {
            "arl": self.arl,
            "std_error": self.std_error,
            "replications": self.replications,
            "cap": self.cap,
            "truncated_count": self.truncated_count,
            "master_seed": self.master_seed,
            "lower_bound": self.lower_bound,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunLengthSummary":
        return cls(
            arl=float(data["arl"]),
            std_error=float(data["std_error"]),
            replications=int(data["replications"]),
            cap=int(data["cap"]),
            truncated_count=int(data["truncated_count"]),
            master_seed=data.get("master_seed"),
        )


def summarize_run_lengths(
    lengths: np.ndarray, truncated: np.ndarray, cap: int, master_seed: int | None = None
) -> RunLengthSummary:
    """Mean and standard error computed exactly from integer sums."""
    r = int(lengths.size)
    if r == 0:
        raise ValueError("no run lengths to summarize")
    values = [int(v) for v in lengths]
    total = sum(values)
    total_sq = sum(v * v for v in values)
    if r > 1:
        var = (r * total_sq - total * total) / (r * (r - 1))
        se = math.sqrt(max(var, 0.0) / r)
    else:
        se = 0.0
    return RunLengthSummary(
        arl=total / r,
        std_error=se,
        replications=r,
        cap=int(cap),
        truncated_count=int(np.count_nonzero(truncated)),
        master_seed=master_seed,
    )


def _run_lengths(config, scenario: Scenario, streams: Sequence[RandomStream], cap: int):
    m = len(streams)
    lengths = np.full(m, cap, dtype=np.int64)
    signalled = np.zeros(m, dtype=bool)
    active = np.arange(m)
    state = charts.reset(config, m)
    kind = config.statistic
    t = 0
    block = _FIRST_BLOCK
    while active.size and t < cap:
        length = min(block, cap - t)
        data = np.stack([streams[i].subgroups(scenario, length) for i in active])
        u = standardized_statistics(data, kind)
        done = np.zeros(active.size, dtype=bool)
        first = np.zeros(active.size, dtype=np.int64)
        for j in range(length):
            outcome = charts.step(config, state, u[:, j])
            state = outcome.state_after
            hit = outcome.signal & ~done
            if hit.any():
                first[hit] = t + j + 1
                done |= hit
                if done.all():
                    break
        lengths[active[done]] = first[done]
        signalled[active[done]] = True
        keep = ~done
        active = active[keep]
        state = charts.take(state, keep)
        t += length
        block = min(2 * block, _MAX_BLOCK)
    return lengths, ~signalled


def run_length(config, scenario: Scenario, stream: RandomStream, cap: int = DEFAULT_CAP) -> int:
    """Inspection index of the first signal, or ``cap`` if none occurs by then."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    fresh = RandomStream(stream.master_seed, stream.replication_index)
    lengths, _ = _run_lengths(config, scenario, [fresh], cap)
    return int(lengths[0])


def _worker(args):
    config, scenario, master_seed, start, stop, cap = args
    streams = [RandomStream(master_seed, i) for i in range(start, stop)]
    return _run_lengths(config, scenario, streams, cap)


def _partition(replications: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, replications))
    edges = np.linspace(0, replications, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_run_lengths(
    config,
    scenario: Scenario,
    replications: int,
    cap: int = DEFAULT_CAP,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
    batch: int = 5_000,
):
    """Run lengths and truncation flags for replications ``0..replications-1``."""
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    n_parts = max(math.ceil(replications / batch), workers)
    tasks = [
        (config, scenario, master_seed, a, b, cap) for a, b in _partition(replications, n_parts)
    ]
    if workers <= 1:
        results = [_worker(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks))
    lengths = np.concatenate([r[0] for r in results])
    truncated = np.concatenate([r[1] for r in results])
    return lengths, truncated


def estimate_arl(
    config,
    scenario: Scenario,
    replications: int = 10_000,
    cap: int = DEFAULT_CAP,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> RunLengthSummary:
    lengths, truncated = simulate_run_lengths(
        config, scenario, replications, cap, master_seed, workers
    )
    summary = summarize_run_lengths(lengths, truncated, cap, master_seed)
    if not summary.usable:
        logger.warning("all %d replications truncated at cap %d", replications, cap)
    return summary


# --------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    parameter: str
    value: float
    achieved_arl0: float
    target_arl0: float
    tolerance: float
    iterations: int
    success: bool
    std_error: float = 0.0
    replications: int = 0
    config: Any = None
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "value": self.value,
            "achieved_arl0": self.achieved_arl0,
            "std_error": self.std_error,
            "replications": self.replications,
            "target_arl0": self.target_arl0,
            "tolerance": self.tolerance,
            "iterations": self.iterations,
            "success": self.success,
        }


class _Objective:
    """log(ARL0 / target) for one parameter value, with common random numbers."""

    def __init__(self, config, name, scenario, target, cap, seed, workers):
        self.config = config
        self.name = name
        self.scenario = scenario
        self.log_target = math.log(target)
        self.cap = cap
        self.seed = seed
        self.workers = workers
        self.calls = 0
        self.history: list[tuple[float, int, float]] = []
        self._cache: dict[tuple[float, int], RunLengthSummary] = {}

    def summary(self, x: float, reps: int) -> RunLengthSummary:
        key = (x, reps)
        if key not in self._cache:
            self.calls += 1
            candidate = charts.with_parameter(self.config, self.name, x)
            s = estimate_arl(candidate, self.scenario, reps, self.cap, self.seed, self.workers)
            self._cache[key] = s
            self.history.append((x, reps, s.arl))
            logger.debug("calibrate %s=%.6g reps=%d -> ARL0 %.2f", self.name, x, reps, s.arl)
        return self._cache[key]

    def __call__(self, x: float, reps: int) -> float:
        return math.log(self.summary(x, reps).arl) - self.log_target


def _lower_bound(config, name: str) -> float:
    if isinstance(config, charts.AdCusumConfig) and name == "shrinkage":
        return 0.0
    return 1e-9


def calibrate_limit(
    config,
    target_arl0: float = 500.0,
    tolerance: float = 0.01,
    parameter: str | None = None,
    scenario: Scenario | None = None,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    budget: int = 60,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
    cap: int | None = None,
) -> CalibrationResult:
    """Find the parameter value whose in-control ARL matches ``target_arl0``.

    Stochastic root finding on log ARL0 with common random numbers: every
    candidate is evaluated on the same replication streams, so the objective
    is a deterministic, (nearly) monotone step function of the parameter.
    Replications escalate through ``schedule`` once the estimate is inside
    the noise band of the current stage; the last stage must meet
    ``tolerance``.  ``budget`` caps the number of ARL evaluations.
    """
    name = parameter or config.limit_parameter
    if name is None:
        raise charts.ConfigError(f"{config.family} has no calibratable limit parameter")
    scenario = scenario or Scenario()
    cap = cap or max(DEFAULT_CAP, int(100 * target_arl0))
    f = _Objective(config, name, scenario, target_arl0, cap, master_seed, workers)
    floor = _lower_bound(config, name)
    x = charts.get_parameter(config, name)
    scale = max(abs(x), 0.05)
    direction = 0.0  # sign of dlogARL/dx, learned on the first stage

    def result(x_best, reps, ok):
        s = f.summary(x_best, reps)
        return CalibrationResult(
            parameter=name,
            value=float(x_best),
            achieved_arl0=s.arl,
            target_arl0=target_arl0,
            tolerance=tolerance,
            iterations=f.calls,
            success=ok,
            std_error=s.std_error,
            replications=reps,
            config=charts.with_parameter(config, name, x_best),
            history=list(f.history),
        )

    step = 0.05 * scale
    for stage, reps in enumerate(schedule):
        final = stage == len(schedule) - 1
        band = tolerance if final else max(tolerance, 2.5 / math.sqrt(reps))
        try:
            g0 = f(x, reps)
            if abs(g0) <= band:
                if final:
                    return result(x, reps, True)
                continue
            if direction == 0.0:
                probe = max(x + step, floor)
                gp = f(probe, reps)
                while gp == g0 and f.calls < budget:
                    step *= 2.0
                    probe = x + step
                    gp = f(probe, reps)
                if gp == g0:
                    raise CalibrationError("objective is flat in the parameter")
                direction = math.copysign(1.0, (gp - g0) * (probe - x))
            # move toward the root until the sign changes
            a, ga = x, g0
            move = -math.copysign(1.0, g0) * direction
            b = max(a + move * step, floor)
            gb = f(b, reps)
            while ga * gb > 0:
                if f.calls >= budget:
                    raise CalibrationError("budget exhausted while bracketing")
                if b == floor and move < 0:
                    raise CalibrationError(f"no root above the parameter floor {floor}")
                step *= 2.0
                a, ga = b, gb
                b = max(a + move * step, floor)
                gb = f(b, reps)
            x, gx = _illinois(f, reps, a, ga, b, gb, band, budget)
            step = max(abs(b - a), 1e-6 * scale) / 4.0
            if final:
                return result(x, reps, abs(gx) <= tolerance)
        except CalibrationError as exc:
            logger.warning("calibration of %s stopped: %s", name, exc)
            best = min(f.history, key=lambda h: (h[1] != reps, abs(math.log(h[2] / target_arl0))))
            return result(best[0], best[1], False)
    return result(x, schedule[-1], False)


def _illinois(f, reps, a, ga, b, gb, band, budget):
    """Regula falsi with the Illinois modification on a bracketing pair."""
    side = 0
    best = (a, ga) if abs(ga) < abs(gb) else (b, gb)
    for _ in range(200):
        if abs(best[1]) <= band:
            return best
        if f.calls >= budget:
            raise CalibrationError("budget exhausted")
        c = (a * gb - b * ga) / (gb - ga)
        lo, hi = min(a, b), max(a, b)
        width = hi - lo
        if not lo + 0.01 * width < c < hi - 0.01 * width:
            c = 0.5 * (a + b)
        if width <= 1e-9 * max(abs(a), abs(b), 1.0):
            return best
        gc = f(c, reps)
        if abs(gc) < abs(best[1]):
            best = (c, gc)
        if gc * gb < 0:
            a, ga = b, gb
            b, gb = c, gc
            side = 0
        else:
            b, gb = c, gc
            if side == 1:
                ga *= 0.5
            side = 1
    return best


def _siegmund_limit(k: float, target: float) -> float:
    """Decision interval whose Siegmund ARL0 approximation equals ``target``."""

    def arl(h):
        b = h + 1.166
        return (math.exp(2 * k * b) - 2 * k * b - 1) / (2 * k * k)

    return float(optimize.brentq(lambda h: arl(h) - target, 1e-3, 200.0))


def sparks_h_table(
    delta_grid: Sequence[float],
    target_arl0: float = 500.0,
    tolerance: float = 0.01,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    statistic: str = "mean",
    subgroup_size: int = 5,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
    budget: int = 60,
) -> dict:
    """Decision intervals h(delta) for upper CUSUMs with reference delta/2.

    Each cell is an independent calibration to ``target_arl0``; the returned
    table must be strictly decreasing in delta.  Offending cells are re-run
    once with doubled replications before giving up.
    """
    grid = [float(d) for d in delta_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("delta_grid must be non-empty and strictly increasing")
    scenario = Scenario(subgroup_size=subgroup_size)

    def cell(delta, sched):
        start = _siegmund_limit(delta / 2.0, target_arl0)
        config = charts.CusumConfig(
            statistic=statistic, delta0=delta / 2.0, limit=start, sides="upper"
        )
        return calibrate_limit(
            config, target_arl0, tolerance, "limit", scenario, sched, budget,
            master_seed, workers,
        )

    results = [cell(d, schedule) for d in grid]
    for attempt in range(2):
        values = [r.value for r in results]
        bad = {i + 1 for i in range(len(values) - 1) if values[i + 1] >= values[i]}
        if not bad:
            break
        if attempt == 1:
            raise CalibrationError(f"h-table is not monotone: {values}")
        bigger = tuple(2 * r for r in schedule)
        for i in sorted(bad | {i - 1 for i in bad}):
            results[i] = cell(grid[i], bigger)
    return {
        "h_grid": grid,
        "h_values": [r.value for r in results],
        "achieved_arl0": [r.achieved_arl0 for r in results],
        "success": all(r.success for r in results),
        "target_arl0": target_arl0,
    }


# --------------------------------------------------------------------------
# parameter conventions for CUSUM-type charts

CONVENTIONS = {
    "observation/full": ("observation", 1.0),
    "observation/half": ("observation", 0.5),
    "standardized/full": ("standardized", 1.0),
    "standardized/half": ("standardized", 0.5),
}


def apply_convention(config, convention: str, subgroup_size: int = 5):
    """Reinterpret printed (delta0, limit) under one of :data:`CONVENTIONS`.

    ``observation`` runs the recursion on the unstandardized statistic;
    ``half`` uses delta0/2 as the reference value.
    """
    units, factor = CONVENTIONS[convention]
    scale = statistic_sigma(config.statistic, subgroup_size) if units == "observation" else 1.0
    return replace(config, input_scale=scale, delta0=config.delta0 * factor)


@dataclass
class ConventionReport:
    chosen: str
    arl0: dict  # convention -> {chart name -> ARL0}
    scores: dict
    within: dict  # chart name -> bool (chosen convention within the acceptance band)


def resolve_cusum_convention(
    printed: dict,
    target_arl0: float = 500.0,
    band: float = 0.10,
    replications: int = 10_000,
    subgroup_size: int = 5,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
) -> ConventionReport:
    """Pick the reading of the printed CUSUM parameters that best hits ARL0.

    ``printed`` maps chart names to CUSUM-type configs carrying the printed
    delta0 and limit.  Charts sharing a reference value must share a
    convention, so candidates are ranked by the summed |log(ARL0/target)|
    across all of them.
    """
    scenario = Scenario(subgroup_size=subgroup_size)
    table: dict[str, dict[str, float]] = {}
    scores = {}
    for label in CONVENTIONS:
        row = {}
        for name, config in printed.items():
            candidate = apply_convention(config, label, subgroup_size)
            row[name] = estimate_arl(
                candidate, scenario, replications, DEFAULT_CAP, master_seed, workers
            ).arl
        table[label] = row
        scores[label] = sum(abs(math.log(v / target_arl0)) for v in row.values())
    chosen = min(scores, key=scores.get)
    within = {
        name: abs(v - target_arl0) <= band * target_arl0 for name, v in table[chosen].items()
    }
    return ConventionReport(chosen, table, scores, within)
