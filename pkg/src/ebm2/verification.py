"""Quick check suites behind ``ebm2 verify``.

Each check is a small, fast instance of a property exercised in depth by the
test suite.  ``tol_scale`` multiplies every tolerance; a tiny value makes the
checks fail on purpose, which is how the failure path is exercised.
"""

from __future__ import annotations

import numpy as np

from .integrator import StepControls, integrate
from .legendre import SpectralField, SpectralGrid, apply_A, h_norm_sq, hardy_check
from .model import (
    Coalbedo,
    Forcing,
    ModelParams,
    Reaction,
    StateVec,
    ZeroReaction,
    default_forcing,
    g_time_lipschitz_bound,
)
from .ode import find_equilibria, integrate_ode, minimal_rectangle, rectangle_boundary_seeds
from .qualitative import (
    CheckResult,
    check_comparison,
    check_positivity,
    check_rectangle,
    check_sandwich,
    dissipation_check,
    dominates,
    energy_series,
    random_positive_field,
    random_state,
    solve_equilibrium,
)


def _result(name, worst, tol, ts, larger_is_worse=True):
    tol = tol * ts
    passed = worst <= tol if larger_is_worse else worst >= -tol
    return CheckResult(name, bool(passed), float(worst), float(tol))


def spectral_exactness(ts=1.0):
    g = SpectralGrid(32)
    worst = 0.0
    for n in range(32):
        f = SpectralField.legendre(g, n)
        r = apply_A(f).coeffs + n * (n + 1) * f.coeffs
        worst = max(worst, float(np.sqrt(h_norm_sq(r, g))))
    return _result("spectral_exactness", worst, 1e-12, ts)


def semigroup_exactness(ts=1.0):
    g = SpectralGrid(8)
    p = ModelParams(kappa_a=1.0, kappa_s=1.0)
    f = default_forcing(g)
    T0 = StateVec(SpectralField.legendre(g, 3), SpectralField.legendre(g, 5))
    rec = integrate(T0, p, f, 0.5, StepControls(record_every=0.5), reaction=ZeroReaction(g))
    U = rec.coeffs[-1]
    worst = max(abs(U[0, 3] - np.exp(-6.0)), abs(U[1, 5] - np.exp(-15.0)))
    return _result("semigroup_exactness", worst, 1e-10, ts)


def ode_reduction(ts=1.0):
    g = SpectralGrid(8)
    p = ModelParams()
    f = Forcing(q=Forcing.q_constant(g, 1.0))
    rec = integrate(StateVec.constant(g, 0.5, 1.5), p, f, 2.0, StepControls(rel_tol=1e-9, record_every=0.5))
    o = integrate_ode([0.5, 1.5], p, f.q_bar_max, (f.beta_a, f.beta_s), 2.0, tol=1e-12, t_eval=rec.times)
    worst = float(np.abs(rec.coeffs[:, :, 0] - o.states).max())
    return _result("ode_reduction", worst, 1e-6, ts)


def closed_form_equilibrium(ts=1.0):
    p = ModelParams(lam=0.0, eps_a=1.0, sigma_b=1.0)
    e = find_equilibria(p, 1.0, (Coalbedo.constant(0.0), Coalbedo.constant(1.0)))
    worst = max(abs(e[-1].t_a - 1.0), abs(e[-1].t_s - 2**0.25))
    return _result("closed_form_equilibrium", worst, 1e-8, ts)


def hardy(ts=1.0):
    g = SpectralGrid(12)
    rng = np.random.default_rng(7)
    worst = -np.inf
    for n in (0.5, 1.0, 4.0):
        for gam in (0.25, 0.5, 0.9):
            for _ in range(3):
                c = rng.normal(size=12) / (1.0 + np.arange(12)) ** 2
                r = hardy_check(SpectralField(g, c), n, gam)
                worst = max(worst, r.lhs / r.rhs - 1.0)
    # worst relative excess of lhs over rhs; must stay <= 0
    return _result("hardy_inequality", worst, 1e-9, ts)


def g_time_lipschitz(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams()
    f = Forcing(q=Forcing.q_p2(g, 1.0, -0.3), r_kind="sinusoidal", r_delta=0.3, r_omega=2.0,
                beta_a=Coalbedo.constant(0.1), beta_s=Coalbedo.ramp(0.3, 0.7, 0.8, 1.2))
    C = g_time_lipschitz_bound(f, p)
    G = Reaction(p, f)
    rng = np.random.default_rng(3)
    worst = -np.inf
    for _ in range(20):
        U = random_state(g, rng, amp=0.5).coeffs
        t, s = rng.uniform(0, 10, size=2)
        d = G(t, U) - G(s, U)
        lhs = float(np.sqrt(h_norm_sq(d, g).sum()))
        worst = max(worst, lhs - C * abs(t - s))
    return _result("g_time_lipschitz", worst, 1e-12, ts)


def jacobian_fd(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams()
    f = default_forcing(g)
    G = Reaction(p, f)
    rng = np.random.default_rng(5)
    ua, us = g.to_nodes(random_state(g, rng).coeffs)
    da, ds = rng.normal(size=(2, g.n_quad))
    jaa, jas, jsa, jss = G.jacobian_nodal(0.0, ua, us)
    exact = np.stack([jaa * da + jas * ds, jsa * da + jss * ds])
    errs = []
    for h in (1e-3, 1e-4, 1e-5):
        fp = np.stack(G.nodal(0.0, ua + h * da, us + h * ds)) / p.gammas[:, None]
        fm = np.stack(G.nodal(0.0, ua - h * da, us - h * ds)) / p.gammas[:, None]
        errs.append(float(np.abs((fp - fm) / (2 * h) - exact).max()))
    order = min(np.log10(errs[0] / errs[1]), np.log10(errs[1] / errs[2]))
    # a required minimum: tightening the tolerance raises the bar
    need = 1.9 / ts
    return CheckResult("jacobian_fd_order", bool(order >= need), float(order), need)


def comparison(ts=1.0):
    g = SpectralGrid(16)
    p = ModelParams()
    f = default_forcing(g)
    rng = np.random.default_rng(11)
    worst, tol = np.inf, 0.0
    for _ in range(3):
        lo = random_state(g, rng)
        d = random_positive_field(g, rng)
        rep = check_comparison(lo, StateVec(lo.t_a + d, lo.t_s + d), p, f, 10.0, StepControls(record_every=0.5))
        worst = min(worst, rep.max_violation)
        tol = max(tol, rep.tolerance)
    return _result("comparison", worst, tol, ts, larger_is_worse=False)


def positivity(ts=1.0):
    g = SpectralGrid(16)
    p = ModelParams()
    f = default_forcing(g)
    rec = integrate(StateVec.constant(g, 0.0, 0.0), p, f, 2.0, StepControls(record_every=0.05))
    rep = check_positivity(rec)
    late = rec.times >= 0.1
    strict_min = float(np.min(rec.nodal()[late]))
    res = _result("positivity", rep.max_violation, rep.tolerance, ts, larger_is_worse=False)
    res.passed = res.passed and strict_min > 0.0
    return res


def rectangle(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams(eps_a=1.0)
    f = default_forcing(g)
    mu = 0.5 * (p.eps_a**0.25 + 2**0.25)
    rect = minimal_rectangle(p, f.q_bar_max, (f.beta_a, f.beta_s), mu, n_verify=0)
    worst = np.inf
    for a, s in rectangle_boundary_seeds(rect, 4):
        rec = integrate(StateVec.constant(g, a, s), p, f, 10.0, StepControls(record_every=0.5))
        worst = min(worst, check_rectangle(rec, rect).max_violation / rect.m)
    return _result("invariant_rectangle", worst, 1e-8, ts, larger_is_worse=False)


def sandwich(ts=1.0):
    g = SpectralGrid(16)
    p = ModelParams()
    f = default_forcing(g)
    rng = np.random.default_rng(13)
    worst, tol = np.inf, 0.0
    for _ in range(2):
        rep = check_sandwich(random_state(g, rng), p, f, 10.0, StepControls(record_every=0.5))
        worst = min(worst, rep.max_violation)
        tol = max(tol, rep.lower.tolerance)
    return _result("sub_super_sandwich", worst, tol, ts, larger_is_worse=False)


def warmest_dominance(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams()
    f = default_forcing(g)
    warm = solve_equilibrium(p, f, "warmest")
    other = solve_equilibrium(p, f, random_state(g, np.random.default_rng(17), amp=0.5))
    _, d = dominates(warm.state, other.state)
    return _result("warmest_dominance", d, 1e-7, ts, larger_is_worse=False)


def energy_identity(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams()
    f = default_forcing(g)
    T0 = random_state(g, np.random.default_rng(19), n_active=4)
    rec = integrate(T0, p, f, 1.0, StepControls(record_every=0.005, rel_tol=1e-10))
    tab = energy_series(rec, p, f)
    m = tab.t >= 0.5
    ratio = tab.identity_residual[m] / np.maximum(1e-4 * np.abs(tab.identity_rhs[m]), 1e-6 * tab.scale[m])
    return _result("energy_identity", float(ratio.max()), 1.0, ts)


def dissipation(ts=1.0):
    g = SpectralGrid(12)
    p = ModelParams()
    f = default_forcing(g)
    rec = integrate(random_state(g, np.random.default_rng(23)), p, f, 10.0, StepControls(record_every=0.1))
    worst = np.inf
    for sigma in (0.5, 1.0, 2.0):
        r = dissipation_check(rec, p, f, sigma)
        worst = min(worst, r.worst_margin if r.applicable else -np.inf)
    return _result("dissipation", worst, 1e-8, ts, larger_is_worse=False)


def blowup(ts=1.0):
    g = SpectralGrid(8)
    p = ModelParams(eps_a=3.0, lam=0.0)
    f = default_forcing(g)
    rec = integrate(StateVec.constant(g, 1.0, 1.0), p, f, 20.0, StepControls(record_every=1.0))
    o = integrate_ode([1.0, 1.0], p, f.q_bar_min, (f.beta_a, f.beta_s), 20.0, tol=1e-10)
    if rec.status != "blew_up" or not o.blew_up:
        return CheckResult("blowup_bracket", False, float("inf"), 0.01 * ts)
    excess = rec.t_star_bracket[1] / o.t_star_bracket[1] - 1.0
    return _result("blowup_bracket", excess, 0.01, ts)


SUITES = {
    "core": [spectral_exactness, semigroup_exactness, ode_reduction, closed_form_equilibrium,
             hardy, g_time_lipschitz, jacobian_fd],
    "qualitative": [comparison, positivity, rectangle, sandwich, warmest_dominance,
                    energy_identity, dissipation, blowup],
}
SUITES["all"] = SUITES["core"] + SUITES["qualitative"]


def run_check(name: str, tol_scale: float = 1.0) -> CheckResult:
    fn = {f.__name__: f for f in SUITES["all"]}[name]
    try:
        return fn(tol_scale)
    except Exception as exc:  # a crashing check is a failing check
        return CheckResult(f"{name} ({type(exc).__name__}: {exc})", False, float("nan"), float("nan"))
