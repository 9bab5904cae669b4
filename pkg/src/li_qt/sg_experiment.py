"""Stern-Gerlach experiment: simulation, estimation, robust-solution fit.

A source fires particles of magnetic-moment direction m through a magnet of
orientation a; each event lands in one of two detectors, outcome x = +1 or -1.
The robust description depends on a and m only through a . m = cos(theta) and
reads P(x) = (1 +/- x a.m) / 2.  ``fit_robust_solution`` recovers the winding
number K and phase phi of E(theta) = cos(K theta + phi) from estimated
expectations on a theta grid, preferring the smallest K consistent with the
data (minimum Fisher information).

Randomness: all sampling uses numpy's PCG64 generator seeded explicitly;
outcomes are ``+1 where uniform < P(+1)`` so event logs are reproducible
bit-for-bit for a fixed seed.  ``derive_seeds`` splits a master seed into
independent child streams for parallel repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyLog, InsufficientData, NoSignal
from .inference_core import CountTable, ExperimentConditions

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class UnitVector3:
    """Direction in 3-space, renormalized to unit length on construction."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError("cannot normalize a zero or non-finite vector")
        if abs(norm - 1.0) > _UNIT_TOL:
            object.__setattr__(self, "x", self.x / norm)
            object.__setattr__(self, "y", self.y / norm)
            object.__setattr__(self, "z", self.z / norm)

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "UnitVector3":
        v = np.asarray(v, dtype=float)
        if v.shape != (3,):
            raise ValueError("expected a 3-vector")
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_polar(cls, theta: float, azimuth: float = 0.0) -> "UnitVector3":
        """Unit vector at polar angle theta from +z, in the azimuth plane."""
        return cls(
            math.sin(theta) * math.cos(azimuth),
            math.sin(theta) * math.sin(azimuth),
            math.cos(theta),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "UnitVector3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def angle_to(self, other: "UnitVector3") -> float:
        return math.acos(min(1.0, max(-1.0, self.dot(other))))


@dataclass(frozen=True)
class EventLog:
    """Time series of dichotomic outcomes plus the generating configuration."""

    outcomes: np.ndarray
    a: UnitVector3
    m_direction: UnitVector3
    seed: int
    conditions: ExperimentConditions = field(default_factory=ExperimentConditions)

    def __post_init__(self):
        arr = np.asarray(self.outcomes, dtype=np.int8)
        if arr.ndim != 1:
            raise ValueError("outcomes must be a flat sequence")
        if arr.size and not np.all(np.abs(arr) == 1):
            raise ValueError("outcomes must be +1 or -1")
        object.__setattr__(self, "outcomes", arr)

    @property
    def theta(self) -> float:
        return self.a.angle_to(self.m_direction)

    @property
    def n(self) -> int:
        return int(self.outcomes.size)

    def count_table(self) -> CountTable:
        return CountTable.from_outcomes(self.outcomes)


@dataclass(frozen=True)
class RobustFit:
    """Result of fitting E(theta) = cos(K theta + phi) to expectation data."""

    k_winding: int
    phi: float
    residual: float
    fisher: float

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be nonnegative")


def sg_probability(x: int, a: UnitVector3, m: UnitVector3, sign: int = 1) -> float:
    """Outcome probability (1 +/- x a.m) / 2.

    The sign picks the labelling of the two detectors; it satisfies
    sg_probability(x, a, m, +1) == sg_probability(-x, a, m, -1) identically.
    """
    if x not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    if sign not in (1, -1):
        raise ValueError("sign convention must be +1 or -1")
    return (1 + sign * x * a.dot(m)) / 2


def derive_seeds(seed: int, count: int) -> list[int]:
    """Split a master seed into ``count`` independent 64-bit child seeds."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def sample_sg(
    a: UnitVector3,
    m: UnitVector3,
    n: int,
    seed: int,
    sign: int = 1,
    conditions: ExperimentConditions | None = None,
) -> EventLog:
    """Draw n independent outcomes with P(+1) = sg_probability(+1, a, m, sign)."""
    if n < 1:
        raise ValueError("need at least one event")
    p_plus = sg_probability(1, a, m, sign)
    rng = np.random.Generator(np.random.PCG64(seed))
    uniforms = rng.random(n)
    outcomes = np.where(uniforms < p_plus, 1, -1).astype(np.int8)
    return EventLog(
        outcomes=outcomes,
        a=a,
        m_direction=m,
        seed=int(seed),
        conditions=conditions or ExperimentConditions(),
    )


def estimate_expectation(log: EventLog) -> tuple[float, float]:
    """Sample mean of x and its standard error sqrt((1 - E^2)/N)."""
    n = log.n
    if n < 2:
        raise EmptyLog(f"need at least 2 events to estimate, got {n}")
    e_hat = float(np.mean(log.outcomes))
    stderr = math.sqrt(max(0.0, 1.0 - e_hat * e_hat) / n)
    return e_hat, stderr


def fit_robust_solution(
    thetas: Sequence[float],
    e_hats: Sequence[float],
    k_max: int = 8,
    stderrs: Sequence[float] | None = None,
) -> RobustFit:
    """Exhaustive scan of E(theta) = cos(K theta + phi) over K in 1..k_max.

    phi is restricted to {0, pi} because E must be a function of cos(theta)
    alone.  K = 0 (a theta-independent model) is excluded: if no periodic
    candidate beats the best constant fit, NoSignal is raised.  When several
    K tie within one mean standard error (aliasing on a coarse grid), the
    smallest — the minimum-Fisher-information solution — wins.
    """
    th = np.asarray(thetas, dtype=float)
    eh = np.asarray(e_hats, dtype=float)
    if th.shape != eh.shape or th.ndim != 1:
        raise InsufficientData("thetas and e_hats must be equal-length 1-d sequences")
    if np.unique(th).size < 8:
        raise InsufficientData("need at least 8 distinct theta values")
    if th.max() - th.min() < math.pi - 1e-9:
        raise InsufficientData("theta values must span at least [0, pi]")
    if k_max < 1:
        raise InsufficientData("k_max must be at least 1")

    if stderrs is not None:
        tie_tol = float(np.mean(np.asarray(stderrs, dtype=float)))
    else:
        tie_tol = 1e-12

    candidates = []
    for k in range(1, k_max + 1):
        for phi in (0.0, math.pi):
            resid = float(np.sqrt(np.mean((np.cos(k * th + phi) - eh) ** 2)))
            candidates.append((k, phi, resid))
    best_resid = min(c[2] for c in candidates)

    const_resid = float(np.sqrt(np.mean((eh - eh.mean()) ** 2)))
    if best_resid + tie_tol >= const_resid:
        raise NoSignal(
            f"best periodic residual {best_resid:.3e} does not beat the "
            f"constant-model residual {const_resid:.3e}"
        )

    for k, phi, resid in candidates:  # ascending K: smallest winner survives
        if resid <= best_resid + tie_tol:
            return RobustFit(k_winding=k, phi=phi, residual=resid, fisher=float(k * k))
    raise AssertionError("unreachable: best candidate not re-found")
