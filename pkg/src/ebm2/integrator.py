"""Exponential time differencing in the Legendre eigenbasis.

The diffusion part is diagonal with eigenvalues -kappa n(n+1), so the
semigroup is applied exactly and only the reaction term limits the step.
A single ETD1 step is the variation-of-constants formula with the reaction
frozen over the step; ETDRK2 adds the Cox-Matthews corrector.  Adaptive
runs use step doubling with the V-norm as error norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .legendre import SpectralGrid, dirichlet_sq, h_norm_sq, nodal_sup, v_norm_sq
from .model import Forcing, ModelParams, NumericOverflowError, Reaction, StateVec, validate
from .ode import _Clock, escape_time_estimate

COMPLETED = "completed"
BLEW_UP = "blew_up"
STIFFNESS_FAILURE = "stiffness_failure"


class ConfigError(ValueError):
    pass


def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z, Taylor series for |z| < 1e-4."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    series = 1.0 + z / 2.0 + z * z / 6.0 + z**3 / 24.0
    return np.where(small, series, out)


def phi2(z: np.ndarray) -> np.ndarray:
    """(e^z - 1 - z)/z^2, Taylor series for |z| < 1e-4."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = (np.expm1(zs) - zs) / (zs * zs)
    series = 0.5 + z / 6.0 + z * z / 24.0 + z**3 / 120.0
    return np.where(small, series, out)


def linear_symbol(params: ModelParams, grid: SpectralGrid) -> np.ndarray:
    """-kappa_c n(n+1) as a (2, N) array."""
    return -params.kappas[:, None] * grid.eigenvalues[None, :]


class _EtdCoefficients:
    def __init__(self, L: np.ndarray, dt: float):
        z = L * dt
        self.dt = dt
        self.E = np.exp(z)
        self.P1 = dt * phi1(z)
        self.P2 = dt * phi2(z)


def _etd1(U, G0, c: _EtdCoefficients):
    return c.E * U + c.P1 * G0


def _etdrk2(reaction, t, U, G0, c: _EtdCoefficients):
    a = c.E * U + c.P1 * G0
    Ga = reaction(t + c.dt, a)
    return a + c.P2 * (Ga - G0)


def step_etd1(state: StateVec, t: float, dt: float, params: ModelParams, forcing: Forcing,
              reaction=None) -> StateVec:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    reaction = reaction or Reaction(params, forcing)
    U = state.coeffs
    c = _EtdCoefficients(linear_symbol(params, state.grid), dt)
    return StateVec.from_coeffs(state.grid, _etd1(U, reaction(t, U), c))


def step_etdrk2(state: StateVec, t: float, dt: float, params: ModelParams, forcing: Forcing,
                reaction=None) -> StateVec:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    reaction = reaction or Reaction(params, forcing)
    U = state.coeffs
    c = _EtdCoefficients(linear_symbol(params, state.grid), dt)
    return StateVec.from_coeffs(state.grid, _etdrk2(reaction, t, U, reaction(t, U), c))


@dataclass(frozen=True)
class StepControls:
    dt_init: float = 1e-3
    rel_tol: float = 1e-7
    dt_min: float = 1e-30
    blowup_threshold: float = 1e8
    record_every: float = 0.1
    max_steps: int = 5_000_000

    def __post_init__(self):
        for name in ("dt_init", "rel_tol", "dt_min", "blowup_threshold", "record_every"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"run.{name} must be > 0")
        if not self.dt_min < self.dt_init:
            raise ConfigError("run.dt_min must be < run.dt_init")


@dataclass
class TrajectoryRecord:
    grid: SpectralGrid
    times: np.ndarray
    coeffs: np.ndarray  # (n_rec, 2, N)
    energies: np.ndarray  # (n_rec, 2): E_H, E_V
    sup_norms: np.ndarray
    v_norms: np.ndarray
    status: str = COMPLETED
    t_star_bracket: tuple[float, float] | None = None
    n_steps: int = 0
    n_rejected: int = 0
    params: ModelParams | None = field(default=None, repr=False)
    forcing: Forcing | None = field(default=None, repr=False)

    @property
    def states(self) -> list[StateVec]:
        return [StateVec.from_coeffs(self.grid, U) for U in self.coeffs]

    @property
    def final(self) -> StateVec:
        return StateVec.from_coeffs(self.grid, self.coeffs[-1])

    def nodal(self, x: np.ndarray | None = None) -> np.ndarray:
        """Values at points x (default: Gauss nodes), shape (n_rec, 2, len(x))."""
        if x is None:
            return self.grid.to_nodes(self.coeffs)
        V = np.polynomial.legendre.legvander(np.asarray(x, dtype=float), self.grid.n_modes - 1)
        return self.coeffs @ V.T


def energies(U: np.ndarray, params: ModelParams, grid: SpectralGrid) -> tuple[np.ndarray, np.ndarray]:
    """(E_H, E_V) for stacked coefficients (..., 2, N)."""
    g = params.gammas
    gk = params.gammas * params.kappas
    EH = np.sum(g * h_norm_sq(U, grid), axis=-1)
    EV = np.sum(gk * dirichlet_sq(U, grid), axis=-1)
    return EH, EV


def pair_v_norm(U: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """V-norm of the pair (per batch entry): sqrt(sum over components)."""
    return np.sqrt(np.sum(v_norm_sq(U, grid), axis=-1))


def _record_grid(t_max: float, every: float) -> np.ndarray:
    n = int(math.floor(t_max / every + 1e-9))
    ts = every * np.arange(1, n + 1)
    if n == 0 or t_max - ts[-1] > 1e-12 * max(t_max, 1.0):
        ts = np.append(ts, t_max)
    return ts


@np.errstate(over="ignore", invalid="ignore")
def integrate_coeffs(
    U0: np.ndarray,
    reaction,
    L: np.ndarray,
    t_max: float,
    controls: StepControls,
    stop=None,
):
    """Adaptive ETDRK2 on a batch of stacked states U0 of shape (B, 2, N).

    All members share one step sequence (the error is the batch maximum), so
    comparisons between members are not polluted by step-selection noise.
    Returns (times, snapshots (n_rec, B, 2, N), status, bracket, n_steps,
    n_rejected).  ``stop(t, U)`` is polled at record times and ends the run
    early when it returns True.
    """
    grid = reaction.grid
    U = np.array(U0, dtype=float)
    if U.ndim == 2:
        U = U[None]
    rec_t = _record_grid(t_max, controls.record_every)
    times = [0.0]
    snaps = [U.copy()]
    clock = _Clock(0.0)
    dt = min(controls.dt_init, t_max)
    k_rec = 0
    status, bracket = COMPLETED, None
    n_steps = n_rej = 0
    G0 = reaction(0.0, U)
    tol = controls.rel_tol
    thr = controls.blowup_threshold
    if np.max(nodal_sup(U, grid)) > thr:
        return np.array(times), np.array(snaps), BLEW_UP, (0.0, 0.0), 0, 0

    while k_rec < len(rec_t):
        if n_steps + n_rej > controls.max_steps:
            status = STIFFNESS_FAILURE
            break
        t = clock.value
        target = rec_t[k_rec]
        h = dt
        clipped = False
        if t + h >= target * (1 - 1e-14):
            h = target - t
            clipped = True
        if h <= 0:
            # already at the record time within rounding
            clock.hi, clock.lo = float(target), 0.0
            times.append(float(target))
            snaps.append(U.copy())
            k_rec += 1
            continue
        try:
            cf = _EtdCoefficients(L, h)
            ch = _EtdCoefficients(L, 0.5 * h)
            U_full = _etdrk2(reaction, t, U, G0, cf)
            U_half = _etdrk2(reaction, t, U, G0, ch)
            G_half = reaction(t + 0.5 * h, U_half)
            U_two = _etdrk2(reaction, t + 0.5 * h, U_half, G_half, ch)
            diff = np.max(pair_v_norm(U_two - U_full, grid))
            scale = 1.0 + np.max(pair_v_norm(U_two, grid))
            err = diff / (tol * scale)
        except NumericOverflowError:
            err = math.inf
        if not np.isfinite(err) or err > 1.0:
            n_rej += 1
            fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** (-1.0 / 3.0))
            dt = h * fac
            if dt < controls.dt_min:
                status = STIFFNESS_FAILURE
                break
            continue
        n_steps += 1
        s_new = float(np.max(nodal_sup(U_two, grid)))
        if s_new > thr:
            s_old = float(np.max(nodal_sup(U, grid)))
            lo, hi = 0.0, h
            while hi - lo > 1e-5 * (t + hi) and hi - lo > 0:
                mid = 0.5 * (lo + hi)
                if not lo < mid < hi:
                    break
                try:
                    Um = _etdrk2(reaction, t, U, G0, _EtdCoefficients(L, mid))
                    above = float(np.max(nodal_sup(Um, grid))) > thr
                except NumericOverflowError:
                    above = True
                if above:
                    hi = mid
                else:
                    lo = mid
            extra = escape_time_estimate(t + h, s_old, s_new, h)
            clock.advance(h)
            times.append(clock.value)
            snaps.append(U_two)
            status, bracket = BLEW_UP, (float(t + lo), float(t + hi + extra))
            break
        clock.advance(h)
        U = U_two
        try:
            G0 = reaction(clock.value, U)
        except NumericOverflowError:
            times.append(clock.value)
            snaps.append(U.copy())
            status, bracket = BLEW_UP, (float(clock.value), float(clock.value))
            break
        fac = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
        if not clipped or fac < 1.0:
            dt = h * fac
        if clipped:
            clock.hi, clock.lo = float(target), 0.0
            times.append(float(target))
            snaps.append(U.copy())
            k_rec += 1
            if stop is not None and stop(float(target), U):
                break
    return np.array(times), np.array(snaps), status, bracket, n_steps, n_rej


def _make_record(grid, params, forcing, times, snaps, status, bracket, n_steps, n_rej) -> TrajectoryRecord:
    EH, EV = energies(snaps, params, grid)
    return TrajectoryRecord(
        grid=grid,
        times=times,
        coeffs=snaps,
        energies=np.stack([EH, EV], axis=-1),
        sup_norms=nodal_sup(snaps, grid).max(axis=-1),
        v_norms=pair_v_norm(snaps, grid),
        status=status,
        t_star_bracket=bracket,
        n_steps=n_steps,
        n_rejected=n_rej,
        params=params,
        forcing=forcing,
    )


def integrate(
    T0: StateVec,
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    controls: StepControls | None = None,
    reaction=None,
    stop=None,
) -> TrajectoryRecord:
    """Adaptive mild-solution integration; the outcome is encoded in ``status``."""
    controls = controls or StepControls()
    problems = validate(params, forcing)
    if problems:
        raise ConfigError("; ".join(problems))
    if T0.grid != forcing.grid:
        raise ConfigError("initial state and forcing use different grids")
    if not np.all(np.isfinite(T0.coeffs)):
        raise ConfigError("initial state is not finite")
    if not t_max > 0:
        raise ConfigError("run.t_max must be > 0")
    reaction = reaction or Reaction(params, forcing)
    L = linear_symbol(params, T0.grid)
    times, snaps, status, bracket, n_steps, n_rej = integrate_coeffs(
        T0.coeffs, reaction, L, t_max, controls, stop
    )
    return _make_record(T0.grid, params, forcing, times, snaps[:, 0], status, bracket, n_steps, n_rej)


def integrate_batch(
    states: list[StateVec],
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    controls: StepControls | None = None,
    reaction=None,
) -> list[TrajectoryRecord]:
    """Integrate several initial states on one shared step sequence."""
    controls = controls or StepControls()
    problems = validate(params, forcing)
    if problems:
        raise ConfigError("; ".join(problems))
    reaction = reaction or Reaction(params, forcing)
    grid = forcing.grid
    U0 = np.stack([s.coeffs for s in states])
    L = linear_symbol(params, grid)
    times, snaps, status, bracket, n_steps, n_rej = integrate_coeffs(U0, reaction, L, t_max, controls)
    return [
        _make_record(grid, params, forcing, times, snaps[:, b], status, bracket, n_steps, n_rej)
        for b in range(len(states))
    ]


def detect_blowup(record: TrajectoryRecord) -> tuple[float, float] | None:
    return record.t_star_bracket if record.status == BLEW_UP else None
