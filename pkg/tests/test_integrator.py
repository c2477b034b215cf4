import math

import numpy as np
import pytest

from ebm2.integrator import (
    BLEW_UP,
    COMPLETED,
    STIFFNESS_FAILURE,
    ConfigError,
    StepControls,
    detect_blowup,
    integrate,
    integrate_batch,
    phi1,
    phi2,
    step_etd1,
    step_etdrk2,
)
from ebm2.legendre import SpectralField, SpectralGrid, h_norm_sq, nodal_sup, v_norm_sq
from ebm2.model import Coalbedo, Forcing, LinearReaction, ModelParams, Reaction, StateVec, ZeroReaction, default_forcing
from ebm2.ode import integrate_ode, ode_rhs
from ebm2.qualitative import random_state


def vnorm(U, g):
    return math.sqrt(v_norm_sq(U, g).sum())


def const_forcing(g, q0=1.0, bs=0.7):
    return Forcing(q=Forcing.q_constant(g, q0), beta_s=Coalbedo.constant(bs))


# --- phi functions ----------------------------------------------------------------


def test_phi_continuity_across_switch():
    z = np.array([-1e-4 * (1 + 1e-9), -1e-4 * (1 - 1e-9), 1e-4 * (1 - 1e-9), 1e-4 * (1 + 1e-9)])
    np.testing.assert_allclose(phi1(z[:2]), phi1(z[:2]).mean(), rtol=1e-12)
    np.testing.assert_allclose(phi2(z[2:]), phi2(z[2:]).mean(), rtol=1e-12)
    assert phi1(0.0) == 1.0 and phi2(0.0) == 0.5


def test_phi_large_negative():
    z = np.array([-1.0, -50.0, -1e6])
    np.testing.assert_allclose(phi1(z), (np.exp(z) - 1) / z, rtol=1e-14)
    np.testing.assert_allclose(phi2(z), (np.exp(z) - 1 - z) / z**2, rtol=1e-12)


# --- single steps -----------------------------------------------------------------


def test_etd1_pure_semigroup(grid16, rng):
    p = ModelParams(kappa_a=0.3, kappa_s=0.1)
    s = random_state(grid16, rng)
    n = np.arange(16)
    for dt in (1e-3, 0.7, 25.0):
        out = step_etd1(s, 0.0, dt, p, default_forcing(grid16), reaction=ZeroReaction(grid16)).coeffs
        exact = s.coeffs * np.exp(-p.kappas[:, None] * n * (n + 1) * dt)
        np.testing.assert_allclose(out, exact, rtol=1e-13, atol=1e-300)
        np.testing.assert_array_equal(
            out, step_etdrk2(s, 0.0, dt, p, default_forcing(grid16), reaction=ZeroReaction(grid16)).coeffs
        )


def test_etd1_mass_mode_exact(grid16):
    p = ModelParams()
    G = LinearReaction(grid16, (0.0, 0.0, 0.0, 0.0), source=(0.25, -0.5))
    s = StateVec.constant(grid16, 1.0, 2.0)
    out = step_etd1(s, 0.0, 0.3, p, default_forcing(grid16), reaction=G).coeffs[:, 0]
    np.testing.assert_allclose(out, [1.0 + 0.3 * 0.25, 2.0 - 0.3 * 0.5], rtol=0, atol=1e-15)


def test_etd1_state_independent_G_is_exact_quadrature(grid16, rng):
    # frozen source f: exact solution u(dt) = e^{L dt} u0 + (e^{L dt} - 1)/L f
    p = ModelParams()
    f = rng.normal(size=(2, grid16.n_quad))
    G = LinearReaction(grid16, (0.0,) * 4, source=(f[0], f[1]))
    s = random_state(grid16, rng)
    dt = 0.37
    Ghat = G(0.0, s.coeffs)
    L = -p.kappas[:, None] * grid16.eigenvalues[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(L == 0, dt, np.expm1(L * dt) / np.where(L == 0, 1, L))
    exact = np.exp(L * dt) * s.coeffs + factor * Ghat
    out = step_etd1(s, 0.0, dt, p, default_forcing(grid16), reaction=G).coeffs
    np.testing.assert_allclose(out, exact, atol=1e-15)


def test_etd1_matches_ode_step_to_second_order(grid16):
    p = ModelParams(lam=0.0)
    f = const_forcing(grid16)
    y0 = np.array([0.8, 1.3])
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        out = step_etd1(StateVec.constant(grid16, *y0), 0.0, dt, p, f).coeffs[:, 0]
        ref = integrate_ode(y0, p, f.q_bar_max, (f.beta_a, f.beta_s), dt, tol=1e-13).states[-1]
        errs.append(np.abs(out - ref).max())
    assert errs[0] < 1e-3
    assert math.log2(errs[0] / errs[1]) >= 1.9 and math.log2(errs[1] / errs[2]) >= 1.9


def test_step_rejects_nonpositive_dt(grid16, params, forcing16):
    s = StateVec.constant(grid16, 1.0, 1.0)
    with pytest.raises(ValueError):
        step_etd1(s, 0.0, 0.0, params, forcing16)
    with pytest.raises(ValueError):
        step_etdrk2(s, 0.0, -1.0, params, forcing16)


def test_etdrk2_order_on_linear_problem(grid16, rng):
    p = ModelParams()
    lam = 2.0
    G = LinearReaction(grid16, (-lam, lam, lam * 0.25, -lam * 0.25), source=(0.0, 1.0))
    s = random_state(grid16, rng)
    f = default_forcing(grid16)

    def run(n):
        st, dt = s, 1.0 / n
        for k in range(n):
            st = step_etdrk2(st, k * dt, dt, p, f, reaction=G)
        return st.coeffs

    ref = run(4096)
    e = [vnorm(run(n) - ref, grid16) for n in (16, 32, 64)]
    assert math.log2(e[0] / e[1]) >= 1.9 and math.log2(e[1] / e[2]) >= 1.9


def test_accepted_steps_meet_tolerance(grid16, params, forcing16, rng):
    # step doubling: one dt step against two dt/2 steps, checked along an integrated path
    T = random_state(grid16, rng)
    rec = integrate(T, params, forcing16, 1.0, StepControls(record_every=0.25))
    assert rec.status == COMPLETED and rec.n_steps > 0
    for U in rec.coeffs:
        s = StateVec.from_coeffs(grid16, U)
        dt = 1e-3
        one = step_etdrk2(s, 0.0, dt, params, forcing16).coeffs
        two = step_etdrk2(step_etdrk2(s, 0.0, dt / 2, params, forcing16), dt / 2, dt / 2, params, forcing16).coeffs
        assert vnorm(one - two, grid16) <= 1e-7 * (1 + vnorm(U, grid16))


# --- integrate ----------------------------------------------------------------------


def test_pure_diffusion_exact():
    g = SpectralGrid(8)
    p = ModelParams(kappa_a=1.0, kappa_s=1.0)
    T0 = StateVec(SpectralField.legendre(g, 3), SpectralField.legendre(g, 5))
    rec = integrate(T0, p, default_forcing(g), 0.5, StepControls(record_every=0.5), reaction=ZeroReaction(g))
    U = rec.coeffs[-1]
    assert abs(U[0, 3] - math.exp(-12 * 0.5)) < 1e-10
    assert abs(U[1, 5] - math.exp(-30 * 0.5)) < 1e-10
    assert np.abs(np.delete(U[0], 3)).max() < 1e-15 and np.abs(np.delete(U[1], 5)).max() < 1e-15


def test_contraction_without_reaction(grid16, rng):
    p = ModelParams()
    rec = integrate(random_state(grid16, rng), p, default_forcing(grid16), 2.0,
                    StepControls(record_every=0.01), reaction=ZeroReaction(grid16))
    EH = rec.energies[:, 0]
    for series in (EH, rec.v_norms, rec.sup_norms):
        assert np.all(np.diff(series) <= 1e-14 * series[:-1])


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_ode_reduction(lam):
    g = SpectralGrid(8)
    p = ModelParams(eps_a=1.0, lam=lam)
    f = const_forcing(g)
    rec = integrate(StateVec.constant(g, 0.5, 1.5), p, f, 10.0, StepControls(rel_tol=1e-9, record_every=0.5))
    o = integrate_ode([0.5, 1.5], p, f.q_bar_max, (f.beta_a, f.beta_s), 10.0, tol=1e-12, t_eval=rec.times)
    assert np.abs(rec.coeffs[:, :, 0] - o.states).max() < 1e-6
    assert np.abs(rec.coeffs[:, :, 1:]).max() < 1e-12


def test_record_schedule(grid16, params, forcing16):
    rec = integrate(StateVec.constant(grid16, 1.0, 1.0), params, forcing16, 1.0, StepControls(record_every=0.3))
    np.testing.assert_allclose(rec.times, [0.0, 0.3, 0.6, 0.9, 1.0], atol=1e-15)
    assert rec.times[-1] == 1.0
    assert np.all(np.isfinite(rec.energies))
    assert detect_blowup(rec) is None


def blowup_run(g, thr=1e8, forcing=None):
    p = ModelParams(eps_a=3.0, lam=0.0)
    f = forcing or default_forcing(g)
    return integrate(StateVec.constant(g, 300.0, 300.0), p, f, 1.0, StepControls(blowup_threshold=thr))


def test_blowup_within_ode_subsolution_bracket(grid16):
    rec = blowup_run(grid16)
    assert rec.status == BLEW_UP
    assert rec.sup_norms[-1] > 1e8
    lo, hi = detect_blowup(rec)
    assert hi - lo <= 1e-4 * hi
    f = rec.forcing
    o = integrate_ode([300.0, 300.0], rec.params, f.q_bar_min, (f.beta_a, f.beta_s), 1.0, tol=1e-12)
    # the q_bar_min system is a sub-solution: the PDE must escape no later,
    # up to time-integration error (about 5e-6 relative at rel_tol 1e-7)
    assert hi <= o.t_star_bracket[1] * 1.01
    assert lo == pytest.approx(o.t_star_bracket[0], rel=0.01)


def test_blowup_bracket_converges_to_subsolution_bound():
    g = SpectralGrid(8)
    p = ModelParams(eps_a=3.0, lam=0.0)
    f = default_forcing(g)
    rec = integrate(StateVec.constant(g, 300.0, 300.0), p, f, 1.0, StepControls(rel_tol=1e-10))
    o = integrate_ode([300.0, 300.0], p, f.q_bar_min, (f.beta_a, f.beta_s), 1.0, tol=1e-12)
    assert rec.t_star_bracket[1] <= o.t_star_bracket[1] * (1 + 1e-6)


def test_blowup_threshold_stability(grid16):
    a = detect_blowup(blowup_run(grid16, 1e8))
    b = detect_blowup(blowup_run(grid16, 1e7))
    mid_a, mid_b = sum(a) / 2, sum(b) / 2
    width = max(a[1] - a[0], b[1] - b[0])
    # the widths can collapse to float resolution; allow a few ulps on top
    assert abs(mid_a - mid_b) <= 2 * width + 8 * np.spacing(mid_a)


def test_blowup_matches_ode_for_homogeneous_case():
    g = SpectralGrid(8)
    f = const_forcing(g, bs=1.0)
    rec = blowup_run(g, forcing=f)
    o = integrate_ode([300.0, 300.0], rec.params, 1.0, (f.beta_a, f.beta_s), 1.0, tol=1e-12)
    for u, v in zip(rec.t_star_bracket, o.t_star_bracket):
        assert u == pytest.approx(v, rel=0.01)


def test_stiffness_failure(grid16, params, forcing16):
    rec = integrate(StateVec.constant(grid16, 1.0, 1.0), params, forcing16, 1.0,
                    StepControls(dt_init=1e-3, dt_min=1e-4, rel_tol=1e-16))
    assert rec.status == STIFFNESS_FAILURE


@pytest.mark.parametrize("kw", [dict(dt_init=0.0), dict(rel_tol=-1.0), dict(dt_min=1.0, dt_init=0.1),
                                dict(record_every=0.0), dict(blowup_threshold=0.0)])
def test_bad_controls(kw):
    with pytest.raises(ConfigError):
        StepControls(**kw)


def test_bad_inputs(grid16, params, forcing16):
    with pytest.raises(ConfigError):
        integrate(StateVec.constant(grid16, 1.0, 1.0), ModelParams(eps_a=-1), forcing16, 1.0)
    with pytest.raises(ConfigError):
        integrate(StateVec.constant(grid16, 1.0, math.nan), params, forcing16, 1.0)
    with pytest.raises(ConfigError):
        integrate(StateVec.constant(grid16, 1.0, 1.0), params, forcing16, 0.0)
    with pytest.raises(ConfigError):
        integrate(StateVec.constant(SpectralGrid(8), 1.0, 1.0), params, forcing16, 1.0)


def test_self_convergence(grid16, params, forcing16, rng):
    T0 = random_state(grid16, rng)
    for tol in (1e-6, 1e-7):
        a = integrate(T0, params, forcing16, 2.0, StepControls(rel_tol=tol)).final.coeffs
        b = integrate(T0, params, forcing16, 2.0, StepControls(rel_tol=tol / 2)).final.coeffs
        assert vnorm(a - b, grid16) < 10 * tol


def test_batch_matches_shared_steps(grid16, params, forcing16, rng):
    states = [random_state(grid16, rng) for _ in range(3)]
    recs = integrate_batch(states, params, forcing16, 1.0, StepControls(rel_tol=1e-9))
    for s, r in zip(states, recs):
        single = integrate(s, params, forcing16, 1.0, StepControls(rel_tol=1e-9))
        np.testing.assert_array_equal(r.times, single.times)
        assert vnorm(r.final.coeffs - single.final.coeffs, grid16) < 1e-7


def test_deterministic(grid16, params, forcing16):
    T0 = random_state(grid16, np.random.default_rng(5))
    a = integrate(T0, params, forcing16, 1.0)
    b = integrate(T0, params, forcing16, 1.0)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert a.n_steps == b.n_steps


# measured max over a random suite: 1.0000000001 (perturbations never grow on [0, 1])
K_CONTINUITY = 1.5


def test_continuous_dependence(grid16, params, forcing16):
    rng = np.random.default_rng(31)
    ctl = StepControls(record_every=0.05, rel_tol=1e-10)
    for _ in range(4):
        T0 = random_state(grid16, rng)
        d = rng.normal(size=(2, 16)) / (1 + np.arange(16)) ** 2
        delta = 10 ** rng.uniform(-6, -4)
        d *= delta / vnorm(d, grid16)
        a, b = integrate_batch([T0, StateVec.from_coeffs(grid16, T0.coeffs + d)], params, forcing16, 1.0, ctl)
        D = b.coeffs - a.coeffs
        assert np.sqrt(v_norm_sq(D, grid16).sum(-1)).max() <= K_CONTINUITY * delta


def test_record_nodal_and_states(grid16, params, forcing16):
    rec = integrate(StateVec.constant(grid16, 1.0, 2.0), params, forcing16, 0.2, StepControls(record_every=0.1))
    assert rec.nodal().shape == (3, 2, grid16.n_quad)
    x = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(rec.nodal(x)[0], [[1.0] * 3, [2.0] * 3], atol=1e-14)
    assert len(rec.states) == 3 and rec.final.grid == grid16
