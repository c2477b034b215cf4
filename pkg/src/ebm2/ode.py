"""Spatially homogeneous two-layer system: sub/super-solution oracle.

Provides the right-hand side, an adaptive Dormand-Prince 5(4) integrator with
blow-up detection, the equilibrium search (warmest / coldest), the minimal
invariant rectangle and the extremal data used to sandwich PDE solutions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .legendre import extrema
from .model import Coalbedo, Forcing, ModelParams, NumericOverflowError, StateVec

B_STOP = 1e8


class StiffnessError(RuntimeError):
    """Step size fell below the minimum before the blow-up threshold."""


class UnsupportedConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class OdeState:
    t_a: float
    t_s: float

    def __iter__(self):
        return iter((self.t_a, self.t_s))

    def as_array(self) -> np.ndarray:
        return np.array([self.t_a, self.t_s])

    def dominates(self, other: "OdeState", tol: float = 0.0) -> bool:
        return self.t_a >= other.t_a - tol and self.t_s >= other.t_s - tol


@dataclass
class OdeTrajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n, 2)
    blew_up: bool = False
    t_star_bracket: tuple[float, float] | None = None

    def state(self, k: int) -> OdeState:
        return OdeState(*self.states[k])

    def at(self, t: float) -> np.ndarray:
        """State at a recorded time (exact match required)."""
        k = int(np.searchsorted(self.times, t))
        if k >= len(self.times) or not math.isclose(self.times[k], t, rel_tol=1e-12, abs_tol=1e-15):
            raise KeyError(f"time {t} not recorded")
        return self.states[k]


@dataclass(frozen=True)
class InvariantRectangle:
    m: float
    mu: float
    verified: bool = True

    @property
    def m_s(self) -> float:
        return self.mu * self.m

    def contains(self, y, rtol: float = 0.0) -> bool:
        ta, ts = y
        return (-rtol * self.m <= ta <= self.m * (1 + rtol)) and (-rtol * self.m_s <= ts <= self.m_s * (1 + rtol))


def ode_rhs(t: float, y, params: ModelParams, q_bar: float, betas: tuple[Coalbedo, Coalbedo]) -> np.ndarray:
    ta, ts = float(y[0]), float(y[1])
    p = params
    ba, bs = betas
    qa = abs(ta) ** 3 * ta
    qs = abs(ts) ** 3 * ts
    fa = -p.lam * (ta - ts) + p.eps_a * p.sigma_b * qs - 2.0 * p.eps_a * p.sigma_b * qa + q_bar * float(ba(ta))
    fs = -p.lam * (ts - ta) - p.sigma_b * qs + p.eps_a * p.sigma_b * qa + q_bar * float(bs(ts))
    out = np.array([fa / p.gamma_a, fs / p.gamma_s])
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("non-finite ODE right-hand side")
    return out


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _dp_step(f, t, y, h, k0):
    k = [k0]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(f(t + _C[i] * h, yi))
    y5 = y + h * sum(b * kj for b, kj in zip(_B5, k))
    err = h * sum(e * kj for e, kj in zip(_E, k))
    return y5, err, k[6]


class _Clock:
    """Compensated time accumulator; lets steps far below ulp(t) still advance."""

    def __init__(self, t0: float = 0.0):
        self.hi = float(t0)
        self.lo = 0.0

    @property
    def value(self) -> float:
        return self.hi + self.lo

    def advance(self, dt: float):
        s = self.hi + dt
        bb = s - self.hi
        err = (self.hi - (s - bb)) + (dt - bb)
        self.hi = s
        self.lo += err

    def copy(self) -> "_Clock":
        c = _Clock(self.hi)
        c.lo = self.lo
        return c


def _record(times, states, t, y):
    # near an escape the step can drop below one ulp of t; keep times strictly increasing
    if times and t <= times[-1]:
        states[-1] = y
    else:
        times.append(t)
        states.append(y)


def escape_time_estimate(t1: float, s0: float, s1: float, dt: float) -> float:
    """Remaining time to escape assuming quartic growth: s^-3 is linear in t."""
    if not (s1 > s0 > 0):
        return 0.0
    a0, a1 = s0 ** -3, s1 ** -3
    slope = (a0 - a1) / dt
    return a1 / slope if slope > 0 else 0.0


def integrate_ode(
    y0,
    params: ModelParams,
    q_bar: float,
    betas: tuple[Coalbedo, Coalbedo],
    t_max: float,
    tol: float = 1e-8,
    t_eval=None,
    b_stop: float = B_STOP,
    dt_init: float | None = None,
    dt_min: float = 1e-30,
    max_steps: int = 2_000_000,
) -> OdeTrajectory:
    """Adaptive Dormand-Prince 5(4) integration of the homogeneous system.

    Records every accepted step unless ``t_eval`` is given, in which case the
    steps are clipped to land exactly on the requested output times.  Stops
    with ``blew_up=True`` once max(|T_a|, |T_s|) exceeds ``b_stop``; the
    crossing is located by bisecting the last step and the bracket's upper
    end is extended by the quartic escape-time extrapolation.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    f = lambda t, y: ode_rhs(t, y, params, q_bar, betas)  # noqa: E731
    y = np.array(list(y0), dtype=float)
    clock = _Clock(0.0)
    outs = None if t_eval is None else np.asarray(t_eval, dtype=float)
    k_out = 0
    times, states = [0.0], [y.copy()]
    if outs is not None:
        times, states = [], []
        while k_out < len(outs) and outs[k_out] <= 0.0:
            times.append(float(outs[k_out]))
            states.append(y.copy())
            k_out += 1
    k0 = f(0.0, y)
    if dt_init is None:
        scale = np.max(np.abs(y)) + 1.0
        dt = min(t_max, 0.01 * scale / (np.max(np.abs(k0)) + 1e-300)) if np.any(k0) else t_max
        dt = max(dt, 1e-12 * max(t_max, 1.0) if t_max > 0 else 1e-12)
    else:
        dt = dt_init
    dt = min(dt, t_max)

    def norm_err(err, ya, yb):
        sc = tol + tol * np.maximum(np.abs(ya), np.abs(yb))
        return float(np.max(np.abs(err) / sc))

    steps = 0
    while clock.value < t_max * (1 - 1e-15) and t_max - clock.value > 0:
        steps += 1
        if steps > max_steps:
            raise StiffnessError("too many steps")
        t = clock.value
        h = min(dt, t_max - t)
        clipped = False
        if outs is not None and k_out < len(outs) and t + h >= outs[k_out]:
            h = outs[k_out] - t
            clipped = True
            if h <= 0:
                times.append(float(outs[k_out]))
                states.append(y.copy())
                k_out += 1
                continue
        try:
            y_new, err, k_last = _dp_step(f, t, y, h, k0)
            e = norm_err(err, y, y_new)
        except NumericOverflowError:
            e = math.inf
        if not math.isfinite(e) or e > 1.0:
            dt = h * max(0.1, 0.9 * e ** -0.2) if math.isfinite(e) else h * 0.1
            if dt < dt_min:
                raise StiffnessError(f"step size {dt:.3e} below minimum at t={t:.6g}")
            continue
        s_old = float(np.max(np.abs(y)))
        s_new = float(np.max(np.abs(y_new)))
        if s_new > b_stop:
            lo_tau, hi_tau = 0.0, h
            k_start = k0
            for _ in range(200):
                if hi_tau - lo_tau <= 1e-7 * (t + hi_tau) or hi_tau - lo_tau <= 0.0:
                    break
                mid = 0.5 * (lo_tau + hi_tau)
                if mid <= lo_tau or mid >= hi_tau:
                    break
                try:
                    ym, _, _ = _dp_step(f, t, y, mid, k_start)
                    above = float(np.max(np.abs(ym))) > b_stop
                except NumericOverflowError:
                    above = True
                if above:
                    hi_tau = mid
                else:
                    lo_tau = mid
            extra = escape_time_estimate(t + h, s_old, s_new, h)
            clock.advance(h)
            _record(times, states, clock.value, y_new)
            return OdeTrajectory(
                np.array(times),
                np.array(states),
                blew_up=True,
                t_star_bracket=(float(t + lo_tau), float(t + hi_tau + extra)),
            )
        clock.advance(h)
        y, k0 = y_new, k_last
        if clipped:
            # land exactly on the requested output time
            clock.hi, clock.lo = float(outs[k_out]), 0.0
            times.append(float(outs[k_out]))
            states.append(y.copy())
            k_out += 1
        elif outs is None:
            _record(times, states, clock.value, y.copy())
        fac = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * e ** -0.2))
        if not clipped or fac < 1.0:
            dt = h * fac
    if outs is not None:
        while k_out < len(outs) and outs[k_out] <= t_max * (1 + 1e-15):
            times.append(float(outs[k_out]))
            states.append(y.copy())
            k_out += 1
    return OdeTrajectory(np.array(times), np.array(states).reshape(-1, 2))


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


def _check_equilibrium_preconditions(params: ModelParams, betas, experimental: bool):
    if not 0.0 < params.eps_a < 2.0:
        raise ValueError(f"eps_a must lie in (0, 2), got {params.eps_a}")
    if not betas[0].is_zero and not experimental:
        raise UnsupportedConfigurationError("equilibrium search requires beta_a = 0 (pass experimental=True)")


def default_search_max(params: ModelParams, q_bar: float, betas) -> float:
    scale = (q_bar * betas[1].sup_abs / (params.sigma_b * (2.0 - params.eps_a))) ** 0.25
    return 10.0 * max(scale, 1e-3)


def atmosphere_from_surface(ts: float, params: ModelParams, q_bar: float = 0.0,
                            beta_a: Coalbedo | None = None) -> float:
    """T_a solving the atmosphere stationarity equation for a given T_s.

    With beta_a = 0 this is the unique root of the increasing map
    x -> lam x + 2 eps sig x^4 set equal to lam T_s + eps sig T_s^4.  A
    nonzero beta_a (experimental) adds -q_bar beta_a(x) to the map, which
    may then have several roots; the bisection returns one of them.
    """
    p = params
    with_beta = beta_a is not None and not beta_a.is_zero
    target = p.lam * ts + p.eps_a * p.sigma_b * abs(ts) ** 3 * ts

    def g(x):
        val = p.lam * x + 2.0 * p.eps_a * p.sigma_b * abs(x) ** 3 * x - target
        if with_beta:
            val -= q_bar * float(beta_a(x))
        return val

    if not with_beta:
        if target == 0.0:
            return 0.0
        if p.lam == 0.0:
            return math.copysign((abs(target) / (2.0 * p.eps_a * p.sigma_b)) ** 0.25, target)
    hi = max(abs(ts), 1.0)
    while g(hi) < 0:
        hi *= 2.0
    lo = -hi
    while g(lo) > 0:
        lo *= 2.0
    return optimize.bisect(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _residual_factory(params, q_bar, betas):
    p = params
    ba, bs = betas

    def residual(ts):
        ta = atmosphere_from_surface(ts, p, q_bar, ba)
        val = (-p.lam * (ts - ta) - p.sigma_b * abs(ts) ** 3 * ts
               + p.eps_a * p.sigma_b * abs(ta) ** 3 * ta + q_bar * float(bs(ts)))
        if not math.isfinite(val):
            raise NumericOverflowError("non-finite equilibrium residual")
        return val

    return residual


def find_equilibria(
    params: ModelParams,
    q_bar: float,
    betas: tuple[Coalbedo, Coalbedo],
    search_max: float | None = None,
    n_grid: int = 10_000,
    experimental: bool = False,
) -> list[OdeState]:
    """All equilibria with T_s in [0, search_max], sorted by increasing T_s."""
    _check_equilibrium_preconditions(params, betas, experimental)
    if search_max is None:
        search_max = default_search_max(params, q_bar, betas)
    res = _residual_factory(params, q_bar, betas)
    xs = np.linspace(0.0, search_max, n_grid)
    vals = np.array([res(x) for x in xs])
    roots = []
    for i in range(len(xs) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(xs[i])
        elif a * b < 0:
            roots.append(optimize.bisect(res, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
    if vals[-1] == 0.0:
        roots.append(xs[-1])
    return [OdeState(atmosphere_from_surface(ts, params, q_bar, betas[0]), float(ts)) for ts in roots]


def warmest_equilibrium(params, q_bar, betas, **kw) -> OdeState:
    eqs = find_equilibria(params, q_bar, betas, **kw)
    if not eqs:
        raise RuntimeError("no equilibrium found; increase search_max")
    return max(eqs, key=lambda e: e.t_s)


def coldest_equilibrium(params, q_bar, betas, **kw) -> OdeState:
    eqs = find_equilibria(params, q_bar, betas, **kw)
    if not eqs:
        raise RuntimeError("no equilibrium found; increase search_max")
    return min(eqs, key=lambda e: e.t_s)


# ---------------------------------------------------------------------------
# invariant rectangle
# ---------------------------------------------------------------------------


def _rhs_arrays(ta, ts, params: ModelParams, q_bar: float, betas):
    p = params
    ba, bs = betas
    qa, qs = np.abs(ta) ** 3 * ta, np.abs(ts) ** 3 * ts
    fa = -p.lam * (ta - ts) + p.eps_a * p.sigma_b * qs - 2.0 * p.eps_a * p.sigma_b * qa + q_bar * ba(ta)
    fs = -p.lam * (ts - ta) - p.sigma_b * qs + p.eps_a * p.sigma_b * qa + q_bar * bs(ts)
    return fa / p.gamma_a, fs / p.gamma_s


def _edges_inward(M: float, mu: float, params, q_bar, betas, n_edge: int = 512) -> bool:
    """rhs_a <= 0 on T_a = M and rhs_s <= 0 on T_s = mu M."""
    s = np.linspace(0.0, 1.0, n_edge)
    fa, _ = _rhs_arrays(np.full_like(s, M), mu * M * s, params, q_bar, betas)
    _, fs = _rhs_arrays(M * s, np.full_like(s, mu * M), params, q_bar, betas)
    return bool(np.all(fa <= 0) and np.all(fs <= 0))


def minimal_rectangle(
    params: ModelParams,
    q_bar: float,
    betas: tuple[Coalbedo, Coalbedo],
    mu: float,
    n_verify: int = 32,
    t_verify: float = 100.0,
    verify_tol: float = 1e-9,
) -> InvariantRectangle:
    """Smallest M with an inward-pointing field on both outflow edges of [0,M]x[0,mu M].

    Smallest means: the edge condition holds for every M' >= M.  The result
    is re-checked by integrating trajectories seeded on the boundary.
    """
    eps = params.eps_a
    if not 0.0 < eps < 2.0:
        raise ValueError(f"eps_a must lie in (0, 2), got {eps}")
    if not eps ** 0.25 < mu < 2 ** 0.25:
        raise ValueError(f"mu must lie in ({eps ** 0.25:.6g}, {2 ** 0.25:.6g}), got {mu}")
    ok = lambda M: _edges_inward(M, mu, params, q_bar, betas)  # noqa: E731
    # log scan from tiny to huge: find the last failing M
    grid = np.logspace(-6, 12, 361)
    flags = [ok(M) for M in grid]
    if not flags[-1]:
        raise RuntimeError("no invariant rectangle found below M = 1e12")
    fail_idx = [i for i, good in enumerate(flags) if not good]
    if not fail_idx:
        M = grid[0]
    else:
        lo, hi = grid[fail_idx[-1]], grid[fail_idx[-1] + 1]
        while (hi - lo) > 1e-7 * hi:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        M = hi
    if M > 1e6:
        warnings.warn(f"invariant rectangle bound M={M:.3g} is very large (mu^4 close to eps_a?)", RuntimeWarning)
    M = float(M)
    rect = InvariantRectangle(M, mu)
    verified = True
    if n_verify > 0:
        for y0 in rectangle_boundary_seeds(rect, n_verify):
            tr = integrate_ode(y0, params, q_bar, betas, t_verify, tol=1e-10)
            if tr.blew_up or not all(rect.contains(y, verify_tol) for y in tr.states):
                verified = False
                break
    return InvariantRectangle(M, mu, verified)


def rectangle_boundary_seeds(rect: InvariantRectangle, n: int) -> list[tuple[float, float]]:
    """n points spread along the four edges of the rectangle, corners included."""
    M, Ms = rect.m, rect.m_s
    per = max(n // 4, 1)
    s = np.linspace(0.0, 1.0, per, endpoint=False)
    pts = [(M * u, 0.0) for u in s] + [(M, Ms * u) for u in s]
    pts += [(M * (1 - u), Ms) for u in s] + [(0.0, Ms * (1 - u)) for u in s]
    return pts[:n]


# ---------------------------------------------------------------------------
# extremal data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtremalData:
    q_bar_min: float
    q_bar_max: float
    T_min0: OdeState
    T_max0: OdeState


def extremal_data(T0: StateVec, forcing: Forcing) -> ExtremalData:
    amin, amax = extrema(T0.t_a)
    smin, smax = extrema(T0.t_s)
    return ExtremalData(forcing.q_bar_min, forcing.q_bar_max, OdeState(amin, smin), OdeState(amax, smax))
