"""Numerical checks of the qualitative behaviour of the two-layer model.

Ordering (comparison, positivity, invariant rectangles, ODE sandwich),
stationary states with the warmest one singled out, and energy diagnostics.
Every ordering check reports the most negative ordered difference seen over
recorded times and a dense set of points (Gauss nodes plus Chebyshev-Lobatto
points, endpoints included).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from .integrator import (
    BLEW_UP,
    ConfigError,
    StepControls,
    TrajectoryRecord,
    energies,
    integrate,
    integrate_batch,
    linear_symbol,
)
from .legendre import SpectralField, SpectralGrid, chebyshev_points, extrema, h_norm_sq
from .model import Forcing, LinearReaction, ModelParams, Reaction, StateVec, validate
from .ode import (
    InvariantRectangle,
    _check_equilibrium_preconditions,
    coldest_equilibrium,
    extremal_data,
    integrate_ode,
    warmest_equilibrium,
)

TOL_FLOOR = 1e-10


class InputError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def tol_order(scale: float, rel: float = 1e-8) -> float:
    return max(rel * scale, TOL_FLOOR)


def dense_points(grid: SpectralGrid, n_cheb: int = 129) -> np.ndarray:
    return np.sort(np.concatenate([chebyshev_points(n_cheb), grid.nodes]))


def _eval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    V = npleg.legvander(x, coeffs.shape[-1] - 1)
    return coeffs @ V.T


@dataclass
class OrderingReport:
    max_violation: float
    first_violation_time: float | None
    passed: bool
    tolerance: float
    name: str = "ordering"

    @classmethod
    def from_margins(cls, times, margins: np.ndarray, tol: float, name: str = "ordering"):
        """margins: (n_times, ...) values that should stay >= -tol."""
        per_t = margins.reshape(len(times), -1).min(axis=1)
        worst = float(per_t.min())
        bad = np.nonzero(per_t < -tol)[0]
        first = float(times[bad[0]]) if len(bad) else None
        return cls(worst, first, worst >= -tol, tol, name)


def _record_scale(*records: TrajectoryRecord) -> float:
    return 1.0 + max(float(np.max(r.sup_norms)) for r in records)


def check_comparison(
    T0_low: StateVec,
    T0_high: StateVec,
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    controls: StepControls | None = None,
    reaction=None,
    rel_tol_order: float = 1e-8,
) -> OrderingReport:
    """Integrate an ordered pair on a shared step sequence and check T_high - T_low >= 0."""
    return check_comparison_pairs([(T0_low, T0_high)], params, forcing, t_max, controls, reaction, rel_tol_order)[0]


def check_comparison_pairs(
    pairs: list[tuple[StateVec, StateVec]],
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    controls: StepControls | None = None,
    reaction=None,
    rel_tol_order: float = 1e-8,
) -> list[OrderingReport]:
    """Many ordered pairs in one batched integration; one report per pair."""
    x = dense_points(forcing.grid)
    for i, (low, high) in enumerate(pairs):
        d0 = _eval(high.coeffs - low.coeffs, x)
        scale0 = 1.0 + float(np.abs(_eval(high.coeffs, x)).max())
        if d0.min() < -1e-12 * scale0:
            raise InputError(f"pair {i}: initial data are not ordered (T0_low > T0_high somewhere)")
    states = [s for pair in pairs for s in pair]
    recs = integrate_batch(states, params, forcing, t_max, controls, reaction)
    out = []
    for lo, hi in zip(recs[::2], recs[1::2]):
        diff = _eval(hi.coeffs - lo.coeffs, x)
        tol = tol_order(_record_scale(lo, hi), rel_tol_order)
        rep = OrderingReport.from_margins(lo.times, diff, tol, "comparison")
        if lo.status == BLEW_UP:
            rep.passed = False
        out.append(rep)
    return out


def check_positivity(
    record: TrajectoryRecord,
    t_strict: float = 0.1,
    strict: bool | None = None,
    rel_tol_order: float = 1e-8,
) -> OrderingReport:
    """Nonnegativity at every record; strict positivity after t_strict when q_min > 0."""
    x = dense_points(record.grid)
    vals = _eval(record.coeffs, x)
    tol = tol_order(_record_scale(record), rel_tol_order)
    rep = OrderingReport.from_margins(record.times, vals, tol, "positivity")
    if strict is None:
        f = record.forcing
        strict = f is not None and f.q_min > 0 and not f.beta_s.is_zero
    if strict:
        late = record.times >= t_strict
        if np.any(late) and vals[late].min() <= 0.0:
            rep.passed = False
            bad = np.nonzero(vals[late].reshape(late.sum(), -1).min(axis=1) <= 0)[0]
            rep.first_violation_time = float(record.times[late][bad[0]])
    return rep


def check_rectangle(
    record: TrajectoryRecord, rect: InvariantRectangle, rel_tol: float = 1e-8
) -> OrderingReport:
    """Containment in [0, M] x [0, mu M] at every record, tolerance rel_tol * M."""
    x = dense_points(record.grid)
    vals = _eval(record.coeffs, x)
    tol = max(rel_tol * rect.m, TOL_FLOOR)
    ta, ts = vals[:, 0], vals[:, 1]

    def margins(a, s):
        return np.stack([a, s, rect.m - a, rect.m_s - s], axis=1)

    if margins(ta[:1], ts[:1]).min() < -tol:
        raise InputError("initial state is outside the rectangle")
    return OrderingReport.from_margins(record.times, margins(ta, ts), tol, "rectangle")


@dataclass
class SandwichReport:
    lower: OrderingReport
    upper: OrderingReport

    @property
    def passed(self) -> bool:
        return self.lower.passed and self.upper.passed

    @property
    def max_violation(self) -> float:
        return min(self.lower.max_violation, self.upper.max_violation)


def check_sandwich(
    T0: StateVec,
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    controls: StepControls | None = None,
    rel_tol_order: float = 1e-8,
    ode_tol: float = 1e-11,
) -> SandwichReport:
    """ODE(q_bar_min, inf T0) <= T(t, x) <= ODE(q_bar_max, sup T0)."""
    rec = integrate(T0, params, forcing, t_max, controls)
    ex = extremal_data(T0, forcing)
    betas = (forcing.beta_a, forcing.beta_s)
    lo = integrate_ode(ex.T_min0.as_array(), params, ex.q_bar_min, betas, t_max, tol=ode_tol, t_eval=rec.times)
    hi = integrate_ode(ex.T_max0.as_array(), params, ex.q_bar_max, betas, t_max, tol=ode_tol, t_eval=rec.times)
    x = dense_points(T0.grid)
    vals = _eval(rec.coeffs, x)
    n = min(len(rec.times), len(lo.times), len(hi.times))
    tol = tol_order(_record_scale(rec), rel_tol_order)
    lower = OrderingReport.from_margins(rec.times[:n], vals[:n] - lo.states[:n, :, None], tol, "sandwich_lower")
    upper = OrderingReport.from_margins(rec.times[:n], hi.states[:n, :, None] - vals[:n], tol, "sandwich_upper")
    if rec.status == BLEW_UP:
        upper.passed = False
    return SandwichReport(lower, upper)


def check_weak_mp(
    state: StateVec,
    params: ModelParams,
    forcing: Forcing,
    T0: StateVec,
    source=(0.0, 0.0),
    t_max: float = 5.0,
    controls: StepControls | None = None,
    rel_tol_order: float = 1e-8,
) -> OrderingReport:
    """Frozen linear cooperative system: Jacobian of G at ``state``, off-diagonals clamped >= 0.

    Nonnegative data and sources must give a nonnegative solution.
    """
    ua, us = state.nodal()
    daa, das, dsa, dss = Reaction(params, forcing).jacobian_nodal(0.0, ua, us)
    blocks = (daa, np.maximum(das, 0.0), np.maximum(dsa, 0.0), dss)
    src = [np.asarray(s, dtype=float) for s in source]
    if any(np.min(s) < 0 for s in src):
        raise InputError("sources must be nonnegative")
    lin = LinearReaction(state.grid, blocks, src)
    rec = integrate(T0, params, forcing, t_max, controls, reaction=lin)
    rep = check_positivity(rec, strict=False, rel_tol_order=rel_tol_order)
    rep.name = "weak_mp"
    return rep


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


@dataclass
class EquilibriumSolution:
    state: StateVec
    residual_h: float
    method: str
    iterations: int
    monotone_violation: float = 0.0
    monotone_ok: bool = True
    warnings: list[str] = field(default_factory=list)


def tendency(U: np.ndarray, reaction, L: np.ndarray, t: float = 0.0) -> np.ndarray:
    """kappa A T + G(T) in coefficient space."""
    return L * U + reaction(t, U)


def _pair_h(U, grid) -> float:
    return float(np.sqrt(np.sum(h_norm_sq(U, grid))))


def newton_jacobian(U: np.ndarray, reaction: Reaction, L: np.ndarray, t: float = 0.0) -> np.ndarray:
    """(2N, 2N) Jacobian of the coefficient-space tendency."""
    g = reaction.grid
    N = g.n_modes
    nod = g.to_nodes(U)
    blocks = reaction.jacobian_nodal(t, nod[0], nod[1])
    V, P = g.vandermonde, g.analysis_matrix
    J = np.zeros((2 * N, 2 * N))
    for k, m in enumerate(blocks):
        i, j = divmod(k, 2)
        J[i * N:(i + 1) * N, j * N:(j + 1) * N] = P.T @ (m[:, None] * V)
    J[np.arange(2 * N), np.arange(2 * N)] += L.ravel()
    return J


def _newton(U, reaction, L, max_iter=50, rtol=1e-9):
    g = reaction.grid
    R = tendency(U, reaction, L)
    res = _pair_h(R, g)
    best = (res, U)
    for it in range(1, max_iter + 1):
        if res <= rtol * (1.0 + _pair_h(U, g)):
            return U, res, it - 1
        J = newton_jacobian(U, reaction, L)
        dU = np.linalg.solve(J, -R.ravel()).reshape(U.shape)
        alpha = 1.0
        while True:
            Un = U + alpha * dU
            try:
                Rn = tendency(Un, reaction, L)
                rn = _pair_h(Rn, g)
            except FloatingPointError:
                rn = math.inf
            if rn < (1.0 - 1e-4 * alpha) * res or alpha < 1e-6:
                break
            alpha *= 0.5
        if not math.isfinite(rn):
            break
        U, R, res = Un, Rn, rn
        if res < best[0]:
            best = (res, U)
    if res <= rtol * (1.0 + _pair_h(U, g)):
        return U, res, max_iter
    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations (residual {best[0]:.3g})",
        best=StateVec.from_coeffs(g, best[1]),
    )


def solve_equilibrium(
    params: ModelParams,
    forcing: Forcing,
    seed="warmest",
    controls: StepControls | None = None,
    t_phase1: float = 400.0,
    stop_tol: float = 1e-6,
    rel_tol_order: float = 1e-8,
    newton_rtol: float = 1e-9,
    max_iter: int = 50,
) -> EquilibriumSolution:
    """Stationary state of the autonomous problem.

    Phase 1 integrates from the seed until the H-norm of dT/dt drops below
    ``stop_tol``.  From the warmest (coldest) ODE equilibrium seed this
    approach is monotone nonincreasing (nondecreasing) in time and the check
    is recorded.  Phase 2 is damped Newton in coefficient space.
    """
    if not forcing.autonomous:
        raise InputError("equilibria need autonomous forcing (constant r)")
    betas = (forcing.beta_a, forcing.beta_s)
    _check_equilibrium_preconditions(params, betas, experimental=False)
    problems = validate(params, forcing)
    if problems:
        raise ConfigError("; ".join(problems))
    grid = forcing.grid
    direction = 0
    if isinstance(seed, str):
        if seed == "warmest":
            e = warmest_equilibrium(params, forcing.q_bar_max, betas)
            direction = -1
        elif seed == "coldest":
            e = coldest_equilibrium(params, forcing.q_bar_min, betas)
            direction = +1
        else:
            raise InputError(f"unknown seed {seed!r}; use warmest, coldest or a StateVec")
        T0 = StateVec.constant(grid, e.t_a, e.t_s)
    else:
        T0 = seed
    reaction = Reaction(params, forcing)
    L = linear_symbol(params, grid)
    controls = controls or StepControls(dt_init=1e-2, rel_tol=1e-9, record_every=0.5)

    def stop(t, U):
        return _pair_h(tendency(U, reaction, L, t), grid) < stop_tol

    if stop(0.0, T0.coeffs):
        U, iters_phase1, viol = T0.coeffs, 0, 0.0
        method = "newton"
    else:
        rec = integrate(T0, params, forcing, t_phase1, controls, reaction=reaction, stop=stop)
        if rec.status != "completed":
            raise ConvergenceError(f"phase-1 integration ended with status {rec.status}")
        U = rec.coeffs[-1]
        iters_phase1 = rec.n_steps
        viol = 0.0
        method = "monotone+newton"
    sol_warn = []
    mono_ok = True
    if direction and method == "monotone+newton":
        x = dense_points(grid)
        vals = _eval(rec.coeffs, x)
        inc = direction * np.diff(vals, axis=0)  # should be >= 0
        tol = tol_order(_record_scale(rec), rel_tol_order)
        viol = float(inc.min()) if inc.size else 0.0
        if viol < -tol:
            mono_ok = False
            msg = f"phase-1 monotonicity violated by {viol:.3g} (tol {tol:.3g})"
            sol_warn.append(msg)
            warnings.warn(msg, RuntimeWarning)
    U, res, iters = _newton(U, reaction, L, max_iter=max_iter, rtol=newton_rtol)
    state = StateVec.from_coeffs(grid, U)
    lo = min(extrema(state.t_a)[0], extrema(state.t_s)[0])
    if lo < -1e-10:
        sol_warn.append(f"equilibrium has negative values (min {lo:.3g})")
    if iters == 0 and method == "monotone+newton":
        method = "monotone"
    return EquilibriumSolution(state, res, method, iters_phase1 + iters, viol, mono_ok, sol_warn)


def dominates(high: StateVec, low: StateVec, tol: float = 0.0) -> tuple[bool, float]:
    """(high >= low - tol everywhere, min of high - low) on the dense point set."""
    x = dense_points(high.grid)
    d = float(_eval(high.coeffs - low.coeffs, x).min())
    return d >= -tol, d


# ---------------------------------------------------------------------------
# energy diagnostics
# ---------------------------------------------------------------------------


@dataclass
class EnergyTable:
    t: np.ndarray
    E_H: np.ndarray
    E_V: np.ndarray
    dE_V_dt_numeric: np.ndarray
    dE_V_dt_formula: np.ndarray
    dE_H_dt_numeric: np.ndarray
    identity_rhs: np.ndarray
    identity_residual: np.ndarray
    scale: np.ndarray

    def rows(self):
        cols = ("t", "E_H", "E_V", "dE_V_dt_numeric", "dE_V_dt_formula", "identity_residual")
        return cols, np.column_stack([getattr(self, c) for c in cols])


def _budget_terms(U: np.ndarray, t: float, params: ModelParams, forcing: Forcing):
    """Quadrature of each term on the right of the energy identity (list of floats)."""
    g = forcing.grid
    w = g.weights
    ta, ts = g.to_nodes(U)
    p, f = params, forcing
    Q = f.r(t) * f.q_nodal
    es = p.eps_a * p.sigma_b
    qa, qs = np.abs(ta) ** 3 * ta, np.abs(ts) ** 3 * ts
    return [
        -p.lam * float(w @ (ta - ts) ** 2),
        float(w @ (Q * (f.beta_a(ta) * ta + f.beta_s(ts) * ts))),
        es * float(w @ (qs * ta + qa * ts)),
        -2.0 * es * float(w @ np.abs(ta) ** 5),
        -p.sigma_b * float(w @ np.abs(ts) ** 5),
    ]


def dE_V_formula(U: np.ndarray, t: float, params: ModelParams, forcing: Forcing, reaction=None) -> float:
    """-2 sum gamma_c int (dT_c/dt)^2 + 2 sum int dT_c/dt F_c with F_c = gamma_c G_c."""
    g = forcing.grid
    reaction = reaction or Reaction(params, forcing)
    L = linear_symbol(params, g)
    dT = g.to_nodes(tendency(U, reaction, L, t))
    ta, ts = g.to_nodes(U)
    Fa, Fs = reaction.nodal(t, ta, ts)
    w = g.weights
    out = -2.0 * (params.gamma_a * (w @ dT[0] ** 2) + params.gamma_s * (w @ dT[1] ** 2))
    out += 2.0 * (w @ (dT[0] * Fa) + w @ (dT[1] * Fs))
    return float(out)


def energy_series(
    record: TrajectoryRecord, params: ModelParams, forcing: Forcing, max_spacing: float = 0.01
) -> EnergyTable:
    t = record.times
    if len(t) < 3:
        raise ValueError("energy diagnostics need at least three snapshots")
    dt = np.diff(t)
    if dt[:-1].size and dt[:-1].max() > max_spacing * (1 + 1e-9):
        raise ValueError(f"snapshots too sparse for differencing: spacing {dt.max():.3g} > {max_spacing}")
    EH, EV = record.energies[:, 0], record.energies[:, 1]
    dEV = np.gradient(EV, t, edge_order=2)
    dEH = np.gradient(EH, t, edge_order=2)
    reaction = Reaction(params, forcing)
    form = np.array([dE_V_formula(U, ti, params, forcing, reaction) for ti, U in zip(t, record.coeffs)])
    terms = np.array([_budget_terms(U, ti, params, forcing) for ti, U in zip(t, record.coeffs)])
    rhs = terms.sum(axis=1)
    resid = np.abs(0.5 * dEH + EV - rhs)
    scale = 0.5 * np.abs(dEH) + EV + np.abs(terms).sum(axis=1)
    return EnergyTable(t, EH, EV, dEV, form, dEH, rhs, resid, scale)


@dataclass
class DissipationResult:
    applicable: bool
    sigma: float
    tau0: float | None = None
    n_bound: float = math.nan
    holds: bool = False
    worst_margin: float = math.nan


def uniform_bound(params: ModelParams, forcing: Forcing) -> tuple[float, float]:
    """(M_a, M_s): warmest ODE equilibrium at q_bar_max plus one."""
    e = warmest_equilibrium(params, forcing.q_bar_max, (forcing.beta_a, forcing.beta_s))
    return e.t_a + 1.0, e.t_s + 1.0


def dissipation_check(
    record: TrajectoryRecord, params: ModelParams, forcing: Forcing, sigma: float, rel_tol: float = 1e-8
) -> DissipationResult:
    """Groenwall form E_V(t) <= N/sigma + exp(-sigma (t - tau0)) E_V(tau0) with empirical N."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    Ma, Ms = uniform_bound(params, forcing)
    x = dense_points(record.grid)
    vals = _eval(record.coeffs, x)
    inside = (np.abs(vals[:, 0]).max(axis=1) <= Ma) & (np.abs(vals[:, 1]).max(axis=1) <= Ms)
    idx = np.nonzero(inside)[0]
    if not len(idx):
        return DissipationResult(False, sigma)
    k0 = idx[0]
    t = record.times[k0:]
    EV = record.energies[k0:, 1]
    reaction = Reaction(params, forcing)
    dEV = np.array([dE_V_formula(U, ti, params, forcing, reaction) for ti, U in zip(t, record.coeffs[k0:])])
    N = max(float(np.max(dEV + sigma * EV)), 0.0)
    bound = N / sigma + np.exp(-sigma * (t - t[0])) * EV[0]
    margin = bound - EV
    tol = max(rel_tol * (1.0 + float(EV.max())), TOL_FLOOR)
    worst = float(margin.min())
    return DissipationResult(True, sigma, float(t[0]), N, worst >= -tol, worst)


@dataclass
class AbsorbReport:
    entry_times: list[float]
    e_h_bound: float
    e_v_bound: float
    stayed_in: bool
    diameters: dict[float, float] = field(default_factory=dict)


def absorbing_set_c0(params: ModelParams, forcing: Forcing) -> float:
    Ma, Ms = uniform_bound(params, forcing)
    return 2.0 * params.gamma_a * Ma**2 + 2.0 * params.gamma_s * Ms**2


def h_diameter(coeffs: np.ndarray, grid: SpectralGrid) -> float:
    """Largest pairwise H-distance in a (B, 2, N) ensemble."""
    B = coeffs.shape[0]
    best = 0.0
    for i in range(B):
        d = coeffs[i + 1:] - coeffs[i]
        if len(d):
            best = max(best, float(np.sqrt(h_norm_sq(d, grid).sum(axis=-1)).max()))
    return best


def _check_probe_inputs(ensemble, params, forcing):
    if not forcing.autonomous:
        raise InputError("absorbing-set probe needs autonomous forcing")
    if not 0.0 < params.eps_a < 2.0:
        raise InputError("absorbing-set probe needs eps_a in (0, 2)")
    for i, s in enumerate(ensemble):
        if min(extrema(s.t_a)[0], extrema(s.t_s)[0]) < -1e-12:
            raise InputError(f"ensemble member {i} is not nonnegative")


def _run_ensemble(ensemble, params, forcing, t_max, controls):
    recs = []
    for i, s in enumerate(ensemble):
        rec = integrate(s, params, forcing, t_max, controls)
        if rec.status != "completed":
            raise RuntimeError(f"ensemble member {i} ended with status {rec.status}")
        recs.append(rec)
    return recs


def calibrate_l1(
    params: ModelParams,
    forcing: Forcing,
    ensemble: list[StateVec],
    t_max: float = 50.0,
    controls: StepControls | None = None,
    margin: float = 2.0,
) -> float:
    """margin times the largest E_V seen after each trajectory first meets E_H <= C0."""
    _check_probe_inputs(ensemble, params, forcing)
    c0 = absorbing_set_c0(params, forcing)
    controls = controls or StepControls(dt_init=1e-3, rel_tol=1e-6, record_every=0.5)
    worst = 0.0
    for rec in _run_ensemble(ensemble, params, forcing, t_max, controls):
        ok = np.nonzero(rec.energies[:, 0] <= c0)[0]
        if len(ok):
            worst = max(worst, float(rec.energies[ok[0]:, 1].max()))
    return margin * worst


def absorbing_probe(
    ensemble: list[StateVec],
    params: ModelParams,
    forcing: Forcing,
    t_max: float,
    l1: float,
    controls: StepControls | None = None,
    diameter_times: tuple[float, ...] = (),
) -> AbsorbReport:
    """Entry times into U = {E_H <= C0, E_V <= L1} and whether every trajectory stays."""
    _check_probe_inputs(ensemble, params, forcing)
    c0 = absorbing_set_c0(params, forcing)
    controls = controls or StepControls(dt_init=1e-3, rel_tol=1e-6, record_every=0.5)
    recs = _run_ensemble(ensemble, params, forcing, t_max, controls)
    entries, stayed = [], True
    for rec in recs:
        inside = (rec.energies[:, 0] <= c0) & (rec.energies[:, 1] <= l1)
        k = np.nonzero(inside)[0]
        if not len(k):
            entries.append(math.inf)
            stayed = False
            continue
        entries.append(float(rec.times[k[0]]))
        stayed = stayed and bool(inside[k[0]:].all())
    diam = {}
    times = recs[0].times
    for td in tuple(diameter_times) + (float(t_max),):
        j = int(np.argmin(np.abs(times - td)))
        diam[float(times[j])] = h_diameter(np.stack([r.coeffs[j] for r in recs]), recs[0].grid)
    return AbsorbReport(entries, c0, l1, stayed, diam)


# ---------------------------------------------------------------------------
# random initial data and reports
# ---------------------------------------------------------------------------


def random_state(
    grid: SpectralGrid,
    rng: np.random.Generator,
    mean=(1.0, 1.0),
    amp: float = 0.3,
    n_active: int = 8,
    nonnegative: bool = True,
) -> StateVec:
    """Smooth random state: given means plus modes 1..n_active with 1/n^2 decay."""
    U = np.zeros((2, grid.n_modes))
    k = min(n_active, grid.n_modes - 1)
    n = np.arange(1, k + 1)
    U[:, 1:k + 1] = amp * rng.uniform(-1.0, 1.0, size=(2, k)) / n**2
    U[:, 0] = mean
    s = StateVec.from_coeffs(grid, U)
    if nonnegative:
        for c, comp in enumerate((s.t_a, s.t_s)):
            lo = extrema(comp)[0]
            if lo < 0:
                U[c, 0] -= lo
        s = StateVec.from_coeffs(grid, U)
    return s


def random_positive_field(grid: SpectralGrid, rng: np.random.Generator, floor: float = 0.05,
                          amp: float = 0.5, n_active: int = 6) -> SpectralField:
    """Smooth field with minimum exactly ``floor`` over [-1, 1]."""
    c = np.zeros(grid.n_modes)
    k = min(n_active, grid.n_modes - 1)
    n = np.arange(1, k + 1)
    c[1:k + 1] = amp * rng.uniform(-1.0, 1.0, size=k) / n**2
    f = SpectralField(grid, c)
    c[0] = floor - extrema(f)[0]
    return SpectralField(grid, c)


@dataclass
class CheckResult:
    check_name: str
    passed: bool
    worst_value: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.check_name}: worst={self.worst_value:.6g} tol={self.tolerance:.3g}"


def write_report_csv(path, results: list[CheckResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check_name", "passed", "worst_value", "tolerance"])
        for r in results:
            w.writerow([r.check_name, str(r.passed).lower(), f"{r.worst_value:.17g}", f"{r.tolerance:.17g}"])
