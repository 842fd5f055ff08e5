"""Core domain types: points, feasible regions, schedules and the problem oracle.

Everything here is immutable after construction and safe to share between
concurrent runs; all operations are pure functions.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

Vector = NDArray[np.float64]

#: Relative tolerance for feasibility checks after projection.
FEASIBILITY_RTOL = 1e-12


def as_vector(x, dim: int | None = None) -> Vector:
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking its length."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    return v


def ceil_exact(value: float, decimals: int = 9) -> int:
    """Ceiling that forgives float round-off just below/above an integer.

    ``1.1 * 100`` is ``110.00000000000001`` in binary floating point; a naive
    ceiling would return 111 where exact arithmetic gives 110.  Rounding to
    ``decimals`` places first removes that dust without affecting genuinely
    fractional values.
    """
    return int(math.ceil(round(float(value), decimals)))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball ``{x : ||x||^2 <= radius_sq}`` centred at the origin."""

    radius_sq: float

    def __post_init__(self):
        if not (self.radius_sq > 0 and math.isfinite(self.radius_sq)):
            raise ValueError(f"radius_sq must be positive and finite, got {self.radius_sq}")

    @property
    def dimension(self) -> int | None:
        return None  # any dimension

    def project(self, x: Vector) -> Vector:
        nsq = float(x @ x)
        if nsq <= self.radius_sq:
            return x
        return x * math.sqrt(self.radius_sq / nsq)

    def feasibility_gap(self, x: Vector) -> float:
        """Relative constraint violation; 0 when feasible."""
        return max(0.0, (float(x @ x) - self.radius_sq) / self.radius_sq)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``{x : lower <= x <= upper}`` (componentwise)."""

    lower: Vector
    upper: Vector

    def __post_init__(self):
        lo = as_vector(self.lower)
        hi = as_vector(self.upper, dim=lo.shape[0])
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        scale.setflags(write=False)
        object.__setattr__(self, "_scale", scale)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def project(self, x: Vector) -> Vector:
        if x.shape[0] != self.dimension:
            raise ValueError(f"dimension mismatch: region is {self.dimension}-dimensional, got {x.shape[0]}")
        return x.clip(self.lower, self.upper)

    def feasibility_gap(self, x: Vector) -> float:
        below = (self.lower - x) / self._scale
        above = (x - self.upper) / self._scale
        return max(0.0, float(below.max()), float(above.max()))


FeasibleRegion = Union[Ball, Box]


def project(region: FeasibleRegion, x: Vector) -> Vector:
    """Euclidean projection of ``x`` onto ``region``.

    Returns the unique nearest feasible point; idempotent, and nonexpansive
    as a map (``||P(x) - P(y)|| <= ||x - y||``).
    """
    x = as_vector(x, dim=region.dimension)
    return region.project(x)


def is_feasible(region: FeasibleRegion, x: Vector, rtol: float = FEASIBILITY_RTOL) -> bool:
    return region.feasibility_gap(x) <= rtol


@dataclass(frozen=True)
class StepSchedule:
    """Per-iteration step-size interval ``[c1/k, c2/k]`` with ``0 < c1 < 1 < c2``.

    The iteration counter ``k`` is 1-based: the first step uses the interval
    ``[c1, c2]``.  Squares of the upper endpoints are summable while the lower
    endpoints diverge, which is the usual requirement on subgradient step
    sizes.
    """

    c1: float = 1e-2
    c2: float = 1e2

    def __post_init__(self):
        if not (0.0 < self.c1 < 1.0):
            raise ValueError(f"c1 must lie in (0, 1), got {self.c1}")
        if not (1.0 < self.c2 < math.inf):
            raise ValueError(f"c2 must lie in (1, inf), got {self.c2}")

    def interval(self, k: int) -> tuple[float, float]:
        if k < 1:
            raise ValueError(f"iteration counter is 1-based, got k={k}")
        return self.c1 / k, self.c2 / k


def step_interval(schedule: StepSchedule, k: int) -> tuple[float, float]:
    """Admissible step-size interval ``(c1/k, c2/k)`` for 1-based ``k``."""
    return schedule.interval(k)


@dataclass(frozen=True)
class SampleSchedule:
    """Geometric sample-size growth ``n -> ceil(min(growth * n, n_max))``."""

    n0: int
    growth: float
    n_max: int

    def __post_init__(self):
        if self.n0 < 1 or self.n_max < 1:
            raise ValueError("sample sizes must be positive")
        if self.n0 > self.n_max:
            raise ValueError(f"n0={self.n0} exceeds n_max={self.n_max}")
        if not (self.growth >= 1.0 and math.isfinite(self.growth)):
            raise ValueError(f"growth must be >= 1, got {self.growth}")

    def next_size(self, n_k: int) -> int:
        if not (self.n0 <= n_k <= self.n_max):
            raise ValueError(f"n_k={n_k} outside [{self.n0}, {self.n_max}]")
        if n_k == self.n_max:
            return self.n_max
        return min(ceil_exact(self.growth * n_k), self.n_max)

    @classmethod
    def full(cls, n_max: int) -> "SampleSchedule":
        """Schedule that uses the full sample at every iteration."""
        return cls(n0=n_max, growth=1.0, n_max=n_max)

    @classmethod
    def fraction(cls, n_max: int, start_fraction: float, growth: float) -> "SampleSchedule":
        """Start from ``ceil(start_fraction * n_max)`` rows and grow geometrically."""
        if not (0.0 < start_fraction <= 1.0):
            raise ValueError(f"start_fraction must lie in (0, 1], got {start_fraction}")
        return cls(n0=ceil_exact(start_fraction * n_max), growth=growth, n_max=n_max)


def next_sample_size(schedule: SampleSchedule, n_k: int) -> int:
    """Successor sample size ``ceil(min(growth * n_k, n_max))``."""
    return schedule.next_size(n_k)


def nested_index_set(permutation: NDArray[np.int64], n_k: int) -> NDArray[np.int64]:
    """First ``n_k`` entries of a fixed permutation of the row indices.

    Prefixes of one permutation are nested, so samples accumulate across
    iterations and runs replay exactly for a fixed seed.
    """
    if n_k > len(permutation):
        raise ValueError(f"requested {n_k} indices from a permutation of length {len(permutation)}")
    return permutation[:n_k]


@dataclass(frozen=True)
class SpectralBounds:
    """Safeguard interval ``0 < zeta_lo <= zeta_hi`` for the spectral coefficient."""

    zeta_lo: float = 1e-4
    zeta_hi: float = 1e4

    def __post_init__(self):
        if not (0.0 < self.zeta_lo <= self.zeta_hi < math.inf):
            raise ValueError(f"need 0 < zeta_lo <= zeta_hi < inf, got ({self.zeta_lo}, {self.zeta_hi})")

    def clamp(self, value: float) -> float:
        return min(self.zeta_hi, max(self.zeta_lo, value))


class Problem(ABC):
    """Finite-sum objective with value and subgradient oracles over index subsets.

    Implementations must be immutable; both oracles must be deterministic
    functions of ``(x, idx)``.  Cost accounting (one FEV unit per index in
    every charged oracle call) is handled by the solver, not here.
    """

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Number of optimization variables."""

    @property
    @abstractmethod
    def ground_size(self) -> int:
        """Number of terms in the full finite sum."""

    @abstractmethod
    def value(self, x: Vector, idx: NDArray[np.int64]) -> float:
        """Sample-average objective over the rows listed in ``idx``."""

    @abstractmethod
    def subgradient(self, x: Vector, idx: NDArray[np.int64]) -> Vector:
        """Some subgradient of the sample-average objective at ``x``."""

    def descent_subgradient(self, x: Vector, idx: NDArray[np.int64], zeta: float, margin: float):
        """Subgradient chosen to favour a descent direction, when the problem
        structure allows it.

        Returns ``(g, certified)`` where ``certified`` reports whether the
        scaled direction ``-zeta * g`` passed the descent test with margin
        ``margin``.  The default implementation returns an arbitrary
        subgradient, uncertified.
        """
        return self.subgradient(x, idx), False

    def full_index_set(self) -> NDArray[np.int64]:
        return np.arange(self.ground_size, dtype=np.int64)

    def full_value(self, x: Vector) -> float:
        """Objective over the full sum in natural row order (instrumentation)."""
        return self.value(x, self.full_index_set())
