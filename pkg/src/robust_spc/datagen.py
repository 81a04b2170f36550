"""Seedable generation of clean and contaminated Gaussian subgroups.

Each observation is ``delta + s * z`` where ``z`` is standard normal and ``s``
is 1 with probability ``1 - theta`` and ``sqrt(sigma2_c)`` with probability
``theta``.  Contamination is decided independently per observation.

Random numbers come from counter-based Philox streams keyed by
``(master_seed, replication_index)``.  The normal draws and the contamination
coin flips use two separate lanes of the same key, so bulk draws and
one-at-a-time draws consume the streams identically and the block size used
by the simulation engine never changes the data a replication sees.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np

_MASK64 = (1 << 64) - 1
_NOISE_LANE = 0
_MIXING_LANE = 1


@dataclass(frozen=True)
class Scenario:
    """Data-generating description for one simulated process."""

    delta: float = 0.0
    theta: float = 0.0
    sigma2_c: float = 6.25
    subgroup_size: int = 5
    in_control_variance: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.sigma2_c > 0.0:
            raise ValueError(f"sigma2_c must be positive, got {self.sigma2_c}")
        if not self.in_control_variance > 0.0:
            raise ValueError(
                f"in_control_variance must be positive, got {self.in_control_variance}"
            )
        if int(self.subgroup_size) != self.subgroup_size or self.subgroup_size < 1:
            raise ValueError(
                f"subgroup_size must be a positive integer, got {self.subgroup_size}"
            )
        object.__setattr__(self, "subgroup_size", int(self.subgroup_size))

    @property
    def contaminated(self) -> bool:
        return self.theta > 0.0 and self.sigma2_c != self.in_control_variance

    def with_shift(self, delta: float) -> "Scenario":
        return Scenario(
            delta=delta,
            theta=self.theta,
            sigma2_c=self.sigma2_c,
            subgroup_size=self.subgroup_size,
            in_control_variance=self.in_control_variance,
        )

    def observation_variance(self) -> float:
        """Variance of a single observation under the mixture."""
        return (1.0 - self.theta) * self.in_control_variance + self.theta * self.sigma2_c

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {"delta", "theta", "sigma2_c", "subgroup_size", "in_control_variance"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)


CLEAN = Scenario()
CONTAMINATED = Scenario(theta=0.06, sigma2_c=6.25)


def _philox(master_seed: int, replication_index: int, lane: int) -> np.random.Generator:
    key = np.array(
        [master_seed & _MASK64, ((replication_index << 1) | lane) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


class RandomStream:
    """Independent random stream for one replication.

    Two streams built from the same ``(master_seed, replication_index)``
    produce identical sequences; distinct replication indices select distinct
    Philox keys.
    """

    __slots__ = ("master_seed", "replication_index", "_noise", "_mixing")

    def __init__(self, master_seed: int, replication_index: int = 0) -> None:
        if replication_index < 0:
            raise ValueError("replication_index must be non-negative")
        self.master_seed = int(master_seed)
        self.replication_index = int(replication_index)
        self._noise = _philox(self.master_seed, self.replication_index, _NOISE_LANE)
        self._mixing = _philox(self.master_seed, self.replication_index, _MIXING_LANE)

    def __repr__(self) -> str:
        return f"RandomStream({self.master_seed}, {self.replication_index})"

    def subgroups(self, scenario: Scenario, count: int) -> np.ndarray:
        """Draw ``count`` consecutive subgroups as a ``(count, n)`` array."""
        shape = (count, scenario.subgroup_size)
        z = self._noise.standard_normal(shape)
        if scenario.in_control_variance != 1.0:
            z *= math.sqrt(scenario.in_control_variance)
        if scenario.contaminated:
            ratio = math.sqrt(scenario.sigma2_c / scenario.in_control_variance)
            hit = self._mixing.random(shape) < scenario.theta
            z[hit] *= ratio
        if scenario.delta != 0.0:
            z += scenario.delta
        return z


def sample_subgroup(scenario: Scenario, stream: RandomStream) -> np.ndarray:
    """Return one subgroup of ``scenario.subgroup_size`` observations."""
    return stream.subgroups(scenario, 1)[0]


def sample_observation(scenario: Scenario, stream: RandomStream) -> float:
    """Return a single observation, i.e. a subgroup of size one."""
    single = Scenario(
        delta=scenario.delta,
        theta=scenario.theta,
        sigma2_c=scenario.sigma2_c,
        subgroup_size=1,
        in_control_variance=scenario.in_control_variance,
    )
    return float(stream.subgroups(single, 1)[0, 0])
