"""Detector-binned position data, Fisher functionals, and the linear evolver.

A particle on [-L, L] is probed by 2K+1 contiguous detectors of width L/K;
repeated runs give click counts k_{j,tau}.  The robust-experiment functional
over densities P(x, t) and phase fields S(x, t) is

    F = int dx dt { (dP/dx)^2 / P
                    + 2 m lam [dS/dt + (dS/dx)^2 / (2m) + V] P },

whose extrema are the hydrodynamic (continuity + quantum Hamilton-Jacobi)
equations.  Substituting psi = sqrt(P) exp(i S sqrt(lam) / 2) turns F into
the quadratic functional

    Q = int dx dt [ 2 i m sqrt(lam) (psi dpsi*/dt - psi* dpsi/dt)
                    + 4 |dpsi/dx|^2 + 2 m lam V |psi|^2 ],

whose extremum condition is the linear equation

    (2i/sqrt(lam)) dpsi/dt = -(2/(m lam)) d^2psi/dx^2 + V psi,

i.e. the time-dependent Schroedinger equation once lam = 4/hbar^2.  The
default units are hbar = 1 (lam = 4) and m = 1.

Numerical conventions
---------------------
* Probability floor 1e-12: grid points with P below it are masked out of any
  expression with P in a denominator, and carry no phase.
* Space derivatives: 2nd-order centered differences by default
  (``x_scheme="fd"``); an FFT-based scheme (``x_scheme="spectral"``) is
  available for fields periodic over the box of length n_x * dx, where it is
  exact to roundoff for band-limited fields.  Time derivatives are always
  centered differences on the stored slices with one-sided 2nd-order stencils
  at the ends.
* Single-slice fields are integrated with unit time weight (stationary
  checks); multi-slice fields use trapezoid weights spaced by the grid's dt.
* The evolver uses Crank-Nicolson stepping with hard-wall (zero-Dirichlet)
  boundaries; it is unitary in exact arithmetic, so norm drift beyond
  tolerance diagnoses a genuinely unstable configuration.
* lam is the only free parameter: evolving with (lam, dt, V) and with
  (lam/c^2, dt/c, c^2 V) produces identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .errors import (
    BoundaryContact,
    DegenerateProbability,
    PhaseUndefined,
    UnstableStep,
)

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform space-time grid on [-L, L] with n_x points and n_t time steps."""

    L: float
    n_x: int
    dt: float
    n_t: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("half-extent L must be positive")
        if self.n_x < 16:
            raise ValueError("need at least 16 grid points")
        if self.dt <= 0 or self.n_t < 1:
            raise ValueError("need a positive time step and at least one step")

    @property
    def dx(self) -> float:
        return 2 * self.L / (self.n_x - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_x)

    def times(self, n_slices: int, slice_dt: float | None = None) -> np.ndarray:
        return np.arange(n_slices) * (self.dt if slice_dt is None else slice_dt)


def _promote(arr, dtype) -> np.ndarray:
    out = np.asarray(arr, dtype=dtype)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2:
        raise ValueError("fields must be 1-d (single slice) or 2-d (time x space)")
    return out


@dataclass(frozen=True)
class PolarField:
    """Density P >= 0 and phase field S on the grid, one row per time slice.

    S entries may be NaN where the density sits below the probability floor
    (no phase defined there).
    """

    P: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        P = _promote(self.P, float)
        S = _promote(self.S, float)
        if P.shape != S.shape:
            raise ValueError("P and S must have the same shape")
        if np.any(P < -1e-15):
            raise ValueError("P must be nonnegative")
        object.__setattr__(self, "P", np.maximum(P, 0.0))
        object.__setattr__(self, "S", S)

    @property
    def n_slices(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class WaveField:
    """Complex field psi on the grid, one row per time slice."""

    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi", _promote(self.psi, complex))

    @property
    def n_slices(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class PhysicalParams:
    """Mass, coupling lam, and the potential V(x, t) (energy units).

    ``potential`` is an evaluator mapping (x array, t) to energies; None means
    free evolution.  Set ``time_dependent=True`` if V actually varies with t,
    otherwise it is evaluated once.
    """

    mass: float = 1.0
    lam: float = 4.0
    potential: Callable[[np.ndarray, float], np.ndarray] | None = None
    time_dependent: bool = False

    def __post_init__(self):
        if self.mass <= 0 or self.lam <= 0:
            raise ValueError("mass and lam must be positive")

    @property
    def hbar_equivalent(self) -> float:
        """The hbar value at which lam = 4/hbar^2."""
        return 2.0 / math.sqrt(self.lam)

    def potential_on(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.potential is None:
            return np.zeros_like(x)
        return np.broadcast_to(np.asarray(self.potential(x, t), dtype=float), x.shape)


@dataclass(frozen=True)
class DetectorData:
    """Click counts k_{j,tau} for detectors j = -K..K over M time slices."""

    clicks: np.ndarray
    n_repeats: int
    k_det: int

    def __post_init__(self):
        clicks = np.asarray(self.clicks, dtype=np.int64)
        if clicks.ndim != 2 or clicks.shape[1] != 2 * self.k_det + 1:
            raise ValueError("clicks must be (n_slices, 2*k_det + 1)")
        if np.any(clicks < 0):
            raise ValueError("counts must be nonnegative")
        if np.any(clicks.sum(axis=1) != self.n_repeats):
            raise ValueError("every time slice must contain exactly n_repeats clicks")
        object.__setattr__(self, "clicks", clicks)


# -- derivatives and quadrature ------------------------------------------------

def _d_time(f: np.ndarray, dt: float) -> np.ndarray:
    """Centered time derivative, one-sided 2nd-order at the end slices."""
    if f.shape[0] == 1:
        return np.zeros_like(f)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * dt)
    if f.shape[0] == 2:
        out[0] = out[1] = (f[1] - f[0]) / dt
        return out
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dt)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dt)
    return out


def _d_space_fd(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * dx)
    out[:, 0] = (-3 * f[:, 0] + 4 * f[:, 1] - f[:, 2]) / (2 * dx)
    out[:, -1] = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) / (2 * dx)
    return out


def _d_space_spectral(f: np.ndarray, dx: float) -> np.ndarray:
    n = f.shape[1]
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    df = np.fft.ifft(1j * k * np.fft.fft(f, axis=1), axis=1)
    return df if np.iscomplexobj(f) else df.real


def _d_space(f: np.ndarray, dx: float, scheme: str) -> np.ndarray:
    if scheme == "fd":
        return _d_space_fd(f, dx)
    if scheme == "spectral":
        return _d_space_spectral(f, dx)
    raise ValueError(f"unknown x-derivative scheme {scheme!r}")


def _d2_space_fd(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(f)
    out[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / dx**2
    out[:, 0] = (2 * f[:, 0] - 5 * f[:, 1] + 4 * f[:, 2] - f[:, 3]) / dx**2
    out[:, -1] = (2 * f[:, -1] - 5 * f[:, -2] + 4 * f[:, -3] - f[:, -4]) / dx**2
    return out


def _time_integral(per_slice: np.ndarray, dt: float) -> float:
    """Trapezoid over time slices; a single slice carries unit weight."""
    if per_slice.size == 1:
        return float(per_slice[0])
    return float(np.trapezoid(per_slice, dx=dt))


def _x_integral(fields_2d: np.ndarray, dx: float) -> np.ndarray:
    return np.trapezoid(fields_2d, dx=dx, axis=1)


def _check_normalized(P: np.ndarray, dx: float, tol: float, what: str) -> None:
    norms = _x_integral(P, dx)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > tol:
        raise ValueError(f"{what} is not normalized: worst slice off by {worst:.3e}")


# -- detector model -------------------------------------------------------------

def detector_edges(L: float, k_det: int) -> np.ndarray:
    """Edges of the 2K+1 detector bins covering [-L, L], width L/K each.

    Detector j is centered at j * L/K; the two outermost bins are clipped to
    the line segment.
    """
    if k_det < 1:
        raise ValueError("need at least one detector pair, k_det >= 1")
    delta = L / k_det
    centers = np.arange(-k_det, k_det + 1) * delta
    edges = np.concatenate([centers - delta / 2, [centers[-1] + delta / 2]])
    return np.clip(edges, -L, L)


def bin_probabilities(P_slice: np.ndarray, grid: SpatialGrid, k_det: int) -> np.ndarray:
    """Integral of a density slice over each detector bin."""
    x = grid.x
    cumulative = np.concatenate([[0.0], cumulative_trapezoid(P_slice, x)])
    edges = detector_edges(grid.L, k_det)
    cdf_at_edges = np.interp(edges, x, cumulative)
    probs = np.diff(cdf_at_edges)
    probs = np.maximum(probs, 0.0)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"bin probabilities sum to {total:.8f}, not 1")
    return probs / total


def simulate_detector_clicks(
    P_true: PolarField,
    grid: SpatialGrid,
    k_det: int,
    n: int,
    seed: int,
) -> DetectorData:
    """Multinomial detector clicks, n per time slice, deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one repeat")
    _check_normalized(P_true.P, grid.dx, 1e-6, "P_true")
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    for tau in range(P_true.n_slices):
        probs = bin_probabilities(P_true.P[tau], grid, k_det)
        rows.append(rng.multinomial(n, probs))
    return DetectorData(clicks=np.array(rows), n_repeats=n, k_det=k_det)


# -- Fisher information ----------------------------------------------------------

def fisher_discrete(
    prob_fn: Callable[[float, int], np.ndarray],
    x_positions: Sequence[float],
    dx_step: float,
    floor: float = PROBABILITY_FLOOR,
) -> float:
    """Sum over slices and bins of (dP/dX)^2 / P with a centered difference.

    ``prob_fn(X, tau)`` returns the bin probabilities at source position X in
    slice tau.  Bins with probability at or below the floor are masked out.
    """
    if dx_step <= 0:
        raise ValueError("difference step must be positive")
    total = 0.0
    any_support = False
    for tau, x0 in enumerate(x_positions):
        p0 = np.asarray(prob_fn(float(x0), tau), dtype=float)
        p_plus = np.asarray(prob_fn(float(x0) + dx_step, tau), dtype=float)
        p_minus = np.asarray(prob_fn(float(x0) - dx_step, tau), dtype=float)
        mask = p0 > floor
        if np.any(mask):
            any_support = True
        deriv = (p_plus[mask] - p_minus[mask]) / (2 * dx_step)
        total += float(np.sum(deriv**2 / p0[mask]))
    if not any_support:
        raise DegenerateProbability("no bin probability above the floor")
    return total


def fisher_continuum(
    fields: PolarField,
    grid: SpatialGrid,
    floor: float = PROBABILITY_FLOOR,
    x_scheme: str = "fd",
) -> float:
    """Trapezoid quadrature of int dx dt (dP/dx)^2 / P, floor-masked."""
    P = fields.P
    _check_normalized(P, grid.dx, 1e-8, "P")
    dP = _d_space(P, grid.dx, x_scheme)
    integrand = np.where(P > floor, dP**2 / np.maximum(P, floor), 0.0)
    return _time_integral(_x_integral(integrand, grid.dx), grid.dt)


# -- classical limit -------------------------------------------------------------

def hj_residual(
    S: np.ndarray,
    V: Callable[[np.ndarray, float], np.ndarray] | None,
    mass: float,
    grid: SpatialGrid,
    slice_dt: float | None = None,
) -> np.ndarray:
    """Pointwise Hamilton-Jacobi residual dS/dt + (dS/dx)^2 / (2m) + V."""
    S2d = _promote(S, float)
    dt = grid.dt if slice_dt is None else slice_dt
    dSdt = _d_time(S2d, dt)
    dSdx = _d_space_fd(S2d, grid.dx)
    params = PhysicalParams(mass=mass, potential=V, time_dependent=V is not None)
    times = grid.times(S2d.shape[0], dt)
    V_field = np.stack([params.potential_on(grid.x, t) for t in times])
    return dSdt + dSdx**2 / (2 * mass) + V_field


# -- the nonlinear functional and its quadratic twin ------------------------------

def functional_F(
    fields: PolarField,
    params: PhysicalParams,
    grid: SpatialGrid,
    floor: float = PROBABILITY_FLOOR,
    x_scheme: str = "fd",
) -> float:
    """Quadrature of the robust-experiment functional F over (P, S)."""
    P, S = fields.P, fields.S
    _check_normalized(P, grid.dx, 1e-8, "P")
    live = P > floor
    if not np.all(np.isfinite(S[live])):
        raise ValueError("S must be finite wherever P is above the floor")
    S_safe = np.where(np.isfinite(S), S, 0.0)

    dP = _d_space(P, grid.dx, x_scheme)
    dSdx = _d_space(S_safe, grid.dx, x_scheme)
    dSdt = _d_time(S_safe, grid.dt)

    fisher_part = np.where(live, dP**2 / np.maximum(P, floor), 0.0)
    bracket = dSdt + dSdx**2 / (2 * params.mass)
    times = grid.times(fields.n_slices)
    V_field = np.stack([params.potential_on(grid.x, t) for t in times])
    dynamic_part = 2 * params.mass * params.lam * (bracket + V_field) * P
    integrand = fisher_part + np.where(live, dynamic_part, 0.0)
    return _time_integral(_x_integral(integrand, grid.dx), grid.dt)


def polar_to_wave(fields: PolarField, lam: float) -> WaveField:
    """psi = sqrt(P) exp(i S sqrt(lam) / 2); no phase where P is floored."""
    phase = np.where(np.isfinite(fields.S), fields.S, 0.0) * (math.sqrt(lam) / 2)
    return WaveField(np.sqrt(fields.P) * np.exp(1j * phase))


def wave_to_polar(
    psi: WaveField | np.ndarray,
    lam: float,
    floor: float = PROBABILITY_FLOOR,
) -> PolarField:
    """P = |psi|^2 and S = (2/sqrt(lam)) * phase, unwrapped along x.

    Unwrapping proceeds per time slice from the leftmost point whose density
    exceeds the floor; below-floor points get S = NaN.  Raises PhaseUndefined
    if an entire slice sits below the floor.
    """
    wave = psi if isinstance(psi, WaveField) else WaveField(psi)
    P = np.abs(wave.psi) ** 2
    S = np.full(P.shape, np.nan)
    scale = 2.0 / math.sqrt(lam)
    for tau in range(P.shape[0]):
        mask = P[tau] > floor
        if not np.any(mask):
            raise PhaseUndefined(f"slice {tau} has no density above the floor")
        raw = np.angle(wave.psi[tau, mask])
        S[tau, mask] = scale * np.unwrap(raw)
    return PolarField(P=P, S=S)


def functional_Q(
    psi: WaveField,
    params: PhysicalParams,
    grid: SpatialGrid,
    x_scheme: str = "fd",
    norm_tol: float = 1e-8,
) -> float:
    """Quadrature of the quadratic functional Q over a wavefunction history.

    The time term 2 i m sqrt(lam) (psi dpsi*/dt - psi* dpsi/dt) is evaluated
    through its (exactly real) imaginary part; any residual imaginary piece
    is asserted below 1e-10.
    """
    arr = psi.psi
    _check_normalized(np.abs(arr) ** 2, grid.dx, norm_tol, "|psi|^2")
    dpsi_dt = _d_time(arr, grid.dt)
    dpsi_dx = _d_space(arr, grid.dx, x_scheme)

    z = arr * np.conj(dpsi_dt)  # psi dpsi*/dt; the pair term is z - conj(z)
    time_term = 2 * params.mass * math.sqrt(params.lam) * 1j * (z - np.conj(z))
    stray_imag = float(np.max(np.abs(time_term.imag)))
    if stray_imag >= 1e-10:
        raise AssertionError(f"time term not real: residual imag {stray_imag:.2e}")
    times = grid.times(psi.n_slices)
    V_field = np.stack([params.potential_on(grid.x, t) for t in times])
    integrand = (
        time_term.real
        + 4 * np.abs(dpsi_dx) ** 2
        + 2 * params.mass * params.lam * V_field * np.abs(arr) ** 2
    )
    return _time_integral(_x_integral(integrand, grid.dx), grid.dt)


# -- linear evolution --------------------------------------------------------------

@dataclass(frozen=True)
class TdseTrajectory:
    """Stored Crank-Nicolson history with per-step diagnostics."""

    psi: np.ndarray
    times: np.ndarray
    norms: np.ndarray
    energies: np.ndarray
    grid: SpatialGrid
    params: PhysicalParams
    store_every: int = 1

    @property
    def slice_dt(self) -> float:
        return self.grid.dt * self.store_every

    def wave_field(self) -> WaveField:
        return WaveField(self.psi)

    def polar(self, floor: float = PROBABILITY_FLOOR) -> PolarField:
        return wave_to_polar(self.wave_field(), self.params.lam, floor)


def gaussian_packet(
    grid: SpatialGrid,
    x0: float = 0.0,
    sigma0: float = 1.0,
    p0: float = 0.0,
    lam: float = 4.0,
) -> WaveField:
    """Normalized Gaussian with density std sigma0 and mean momentum p0."""
    x = grid.x
    hbar = 2.0 / math.sqrt(lam)
    psi = np.exp(-((x - x0) ** 2) / (4 * sigma0**2) + 1j * p0 * x / hbar)
    psi /= math.sqrt(np.trapezoid(np.abs(psi) ** 2, dx=grid.dx))
    return WaveField(psi)


def harmonic_potential(omega: float = 1.0, mass: float = 1.0) -> Callable[[np.ndarray, float], np.ndarray]:
    def V(x: np.ndarray, t: float) -> np.ndarray:
        return 0.5 * mass * omega**2 * x**2

    return V


def _hamiltonian_diagonals(
    grid: SpatialGrid, params: PhysicalParams, t: float
) -> tuple[np.ndarray, float]:
    """Main diagonal and off-diagonal of M = (sqrt(lam)/2) H on interior points.

    The evolution equation is i dpsi/dt = M psi with
    M = -(1/(m sqrt(lam))) d^2/dx^2 + (sqrt(lam)/2) V.
    """
    kinetic = 1.0 / (params.mass * math.sqrt(params.lam))
    V = params.potential_on(grid.x, t)[1:-1]
    main = 2 * kinetic / grid.dx**2 + (math.sqrt(params.lam) / 2) * V
    off = -kinetic / grid.dx**2
    return main, off


def evolve_tdse(
    psi0: WaveField | np.ndarray,
    params: PhysicalParams,
    grid: SpatialGrid,
    store_every: int = 1,
    norm_tolerance: float = 1e-8,
    boundary_mass_limit: float = 1e-6,
    check_boundary: bool = True,
) -> TdseTrajectory:
    """Crank-Nicolson integration of (2i/sqrt(lam)) dpsi/dt = -(2/(m lam)) psi_xx + V psi.

    Hard-wall boundaries (psi = 0 at both ends).  The scheme is unitary and
    second order in dt; accuracy requires dt * (dominant energy scale) << 1,
    which the norm and energy diagnostics make observable.  Raises
    UnstableStep if the norm drifts beyond ``norm_tolerance`` and
    BoundaryContact if more than ``boundary_mass_limit`` probability collects
    within 5 cells of a wall.
    """
    wave = psi0 if isinstance(psi0, WaveField) else WaveField(psi0)
    if wave.n_slices != 1:
        raise ValueError("psi0 must be a single slice")
    psi = wave.psi[0].astype(complex).copy()
    if psi.size != grid.n_x:
        raise ValueError("psi0 length does not match the grid")
    psi[0] = psi[-1] = 0.0
    dx, dt = grid.dx, grid.dt

    def norm_of(p: np.ndarray) -> float:
        return float(np.trapezoid(np.abs(p) ** 2, dx=dx))

    def energy_of(p: np.ndarray, main: np.ndarray, off: float) -> float:
        interior = p[1:-1]
        m_psi = main * interior
        m_psi[1:] += off * interior[:-1]
        m_psi[:-1] += off * interior[1:]
        # M = (sqrt(lam)/2) H, so <H> = (2/sqrt(lam)) <M>.
        expectation = float(np.real(np.sum(np.conj(interior) * m_psi)) * dx)
        return (2.0 / math.sqrt(params.lam)) * expectation

    n0 = norm_of(psi)
    if abs(n0 - 1.0) > 1e-8:
        raise ValueError(f"psi0 must be normalized, got integral {n0:.10f}")

    main, off = _hamiltonian_diagonals(grid, params, 0.5 * dt)
    ab = np.zeros((3, grid.n_x - 2), dtype=complex)

    def refresh_matrix(t_mid: float):
        nonlocal main, off
        main, off = _hamiltonian_diagonals(grid, params, t_mid)
        if not (np.all(np.isfinite(main)) and math.isfinite(off)):
            raise UnstableStep(f"operator is non-finite at t = {t_mid:g}")
        ab[0, 1:] = 0.5j * dt * off
        ab[1, :] = 1.0 + 0.5j * dt * main
        ab[2, :-1] = 0.5j * dt * off

    refresh_matrix(0.5 * dt)

    edge = min(5, grid.n_x // 4)
    stored = [psi.copy()]
    norms = [n0]
    energies = [energy_of(psi, main, off)]
    times = [0.0]

    for step in range(grid.n_t):
        if params.time_dependent and step > 0:
            refresh_matrix((step + 0.5) * dt)
        interior = psi[1:-1]
        rhs = (1.0 - 0.5j * dt * main) * interior
        rhs[1:] += -0.5j * dt * off * interior[:-1]
        rhs[:-1] += -0.5j * dt * off * interior[1:]
        psi[1:-1] = solve_banded((1, 1), ab, rhs)

        n_now = norm_of(psi)
        if not math.isfinite(n_now) or abs(n_now - n0) > norm_tolerance:
            raise UnstableStep(
                f"norm drifted to {n_now:.12f} at step {step + 1} "
                f"(tolerance {norm_tolerance:.1e})"
            )
        if check_boundary:
            edge_mass = float(
                np.sum(np.abs(psi[:edge]) ** 2) + np.sum(np.abs(psi[-edge:]) ** 2)
            ) * dx
            if edge_mass > boundary_mass_limit:
                raise BoundaryContact(
                    f"probability {edge_mass:.3e} within {edge} cells of the wall "
                    f"at step {step + 1}"
                )
        if (step + 1) % store_every == 0:
            stored.append(psi.copy())
            norms.append(n_now)
            energies.append(energy_of(psi, main, off))
            times.append((step + 1) * dt)

    return TdseTrajectory(
        psi=np.array(stored),
        times=np.array(times),
        norms=np.array(norms),
        energies=np.array(energies),
        grid=grid,
        params=params,
        store_every=store_every,
    )


def random_polar_fields(
    grid: SpatialGrid,
    n_slices: int,
    seed: int,
    n_modes: int = 4,
    phase_scale: float = 0.5,
) -> PolarField:
    """Random smooth normalized (P, S) pair for equivalence checks.

    Built from a few low trigonometric modes periodic over the box of length
    n_x * dx, so the spectral derivative scheme is exact on them; P is kept
    well above the probability floor and normalized slice by slice.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    x = grid.x
    period = grid.n_x * grid.dx
    times = grid.times(n_slices)

    def trig_sum(scale: float) -> np.ndarray:
        out = np.zeros((n_slices, grid.n_x))
        for k in range(1, n_modes + 1):
            amp_c, amp_s = rng.normal(size=2) * scale / k
            mode_c = np.cos(2 * np.pi * k * x / period)
            mode_s = np.sin(2 * np.pi * k * x / period)
            omega, phi0 = rng.normal(size=2)
            temporal = 1.0 + 0.3 * np.sin(omega * times + phi0)
            out += temporal[:, None] * (amp_c * mode_c + amp_s * mode_s)[None, :]
        return out

    bump = trig_sum(1.0)
    P = 1.0 + 0.5 * np.tanh(bump)  # bounded in [0.5, 1.5]: safely above floor
    P /= _x_integral(P, grid.dx)[:, None]
    S = trig_sum(phase_scale)
    return PolarField(P=P, S=S)


# -- extremum verification -----------------------------------------------------------

@dataclass(frozen=True)
class MadelungReport:
    continuity_rms: float
    quantum_hj_rms: float
    masked_fraction: float


def _align_slice_phases(S: np.ndarray, P: np.ndarray, branch: float) -> np.ndarray:
    """Remove whole phase branches between slices at the max-density column.

    Spatial unwrapping fixes S within a slice only up to the branch constant
    2 pi (2/sqrt(lam)); time derivatives need successive slices on the same
    branch.
    """
    aligned = S.copy()
    anchor = int(np.argmax(P.sum(axis=0)))
    for tau in range(1, S.shape[0]):
        jump = aligned[tau, anchor] - aligned[tau - 1, anchor]
        aligned[tau] -= branch * round(jump / branch)
    return aligned


def check_madelung_extremum(
    fields: PolarField,
    params: PhysicalParams,
    grid: SpatialGrid,
    slice_dt: float | None = None,
    mask_floor: float = 1e-3,
) -> MadelungReport:
    """Residuals of the coupled hydrodynamic equations on an evolved history.

    Continuity: dP/dt + d(P dS/dx / m)/dx;  quantum Hamilton-Jacobi:
    dS/dt + (dS/dx)^2/(2m) + V - (hbar^2/2m) (d^2 sqrt(P)/dx^2)/sqrt(P) with
    hbar^2 = 4/lam.  Points with P <= mask_floor (relative to the slice
    maximum) are masked: the residual statistics cover the probability bulk,
    where the deep-tail amplification of the quantum-potential term cannot
    drown the signal.  Both rms residuals converge at 2nd order in (dx, dt)
    for a true solution.
    """
    if fields.n_slices < 3:
        raise ValueError("need at least 3 slices for time derivatives")
    dt = grid.dt if slice_dt is None else slice_dt
    P, S = fields.P, fields.S

    mask = P > mask_floor * np.max(P, axis=1, keepdims=True)
    if not np.any(mask):
        raise PhaseUndefined("all points masked")
    if not np.all(np.isfinite(S[mask])):
        raise PhaseUndefined("phase undefined inside the unmasked region")

    branch = 2 * math.pi * (2.0 / math.sqrt(params.lam))
    S_safe = _align_slice_phases(np.where(np.isfinite(S), S, 0.0), P, branch)

    dPdt = _d_time(P, dt)
    dSdx = _d_space_fd(S_safe, grid.dx)
    flux = P * dSdx / params.mass
    continuity = dPdt + _d_space_fd(flux, grid.dx)

    hbar2 = 4.0 / params.lam
    sqrtP = np.sqrt(np.maximum(P, 0.0))
    quantum_potential = np.where(
        sqrtP > 0,
        -(hbar2 / (2 * params.mass)) * _d2_space_fd(sqrtP, grid.dx) / np.maximum(sqrtP, 1e-300),
        0.0,
    )
    dSdt = _d_time(S_safe, dt)
    times = grid.times(fields.n_slices, dt)
    V_field = np.stack([params.potential_on(grid.x, t) for t in times])
    qhj = dSdt + dSdx**2 / (2 * params.mass) + V_field + quantum_potential

    # Spatial stencils straddle the mask edge; drop a one-cell margin.
    interior_mask = mask & np.roll(mask, 1, axis=1) & np.roll(mask, -1, axis=1)
    interior_mask[:, [0, -1]] = False
    cont_rms = float(np.sqrt(np.mean(continuity[interior_mask] ** 2)))
    qhj_rms = float(np.sqrt(np.mean(qhj[interior_mask] ** 2)))
    return MadelungReport(
        continuity_rms=cont_rms,
        quantum_hj_rms=qhj_rms,
        masked_fraction=float(1.0 - interior_mask.mean()),
    )
