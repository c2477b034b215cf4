"""Physical parameters, forcing and the nonlinear reaction term of the two-layer model.

The state is (T_a, T_s): atmosphere and surface temperatures.  Each equation
reads

    T_c' = kappa_c A T_c + G_c(t, T),

with G_a = [-lam (u_a - u_s) + eps sig |u_s|^3 u_s - 2 eps sig |u_a|^3 u_a
            + r(t) q beta_a(u_a)] / gamma_a
and  G_s = [-lam (u_s - u_a) - sig |u_s|^3 u_s + eps sig |u_a|^3 u_a
            + r(t) q beta_s(u_s)] / gamma_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .legendre import SpectralField, SpectralGrid, extrema, h_norm_sq


class NumericOverflowError(FloatingPointError):
    """Non-finite value in the reaction term; a blow-up is imminent."""


@dataclass(frozen=True)
class ModelParams:
    gamma_a: float = 1.0
    gamma_s: float = 4.0
    kappa_a: float = 0.3
    kappa_s: float = 0.1
    sigma_b: float = 1.0
    eps_a: float = 1.0
    lam: float = 0.5

    @property
    def gammas(self) -> np.ndarray:
        return np.array([self.gamma_a, self.gamma_s])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([self.kappa_a, self.kappa_s])


@dataclass(frozen=True)
class Coalbedo:
    """Constant or cubic-smoothstep ramp coalbedo, nondecreasing in temperature."""

    kind: str = "constant"
    beta_min: float = 0.0
    beta_max: float = 0.0
    t_low: float = 0.0
    t_high: float = 1.0

    @classmethod
    def constant(cls, value: float) -> "Coalbedo":
        return cls("constant", value, value)

    @classmethod
    def ramp(cls, beta_min: float, beta_max: float, t_low: float, t_high: float) -> "Coalbedo":
        return cls("smooth-ramp", beta_min, beta_max, t_low, t_high)

    def _s(self, T):
        return np.clip((np.asarray(T, dtype=float) - self.t_low) / (self.t_high - self.t_low), 0.0, 1.0)

    def __call__(self, T):
        if self.kind == "constant":
            return np.full_like(np.asarray(T, dtype=float), self.beta_max)
        s = self._s(T)
        return self.beta_min + (self.beta_max - self.beta_min) * s * s * (3.0 - 2.0 * s)

    def derivative(self, T):
        # smoothstep is C^1, so the left derivative at the ends is the derivative
        if self.kind == "constant":
            return np.zeros_like(np.asarray(T, dtype=float))
        s = self._s(T)
        return (self.beta_max - self.beta_min) / (self.t_high - self.t_low) * 6.0 * s * (1.0 - s)

    @property
    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        return 1.5 * (self.beta_max - self.beta_min) / (self.t_high - self.t_low)

    @property
    def sup_abs(self) -> float:
        return max(abs(self.beta_min), abs(self.beta_max))

    @property
    def is_zero(self) -> bool:
        return self.beta_min == 0.0 and self.beta_max == 0.0

    def violations(self, name: str) -> list[str]:
        out = []
        if self.kind not in ("constant", "smooth-ramp"):
            out.append(f"Hyp1(ii): {name} kind '{self.kind}' unknown")
            return out
        if self.kind == "smooth-ramp":
            if not self.t_high > self.t_low:
                out.append(f"Hyp1(ii): {name} t_high > t_low")
            if self.beta_max < self.beta_min:
                out.append(f"Hyp1(ii): {name} nondecreasing")
        if not all(math.isfinite(v) for v in (self.beta_min, self.beta_max, self.t_low, self.t_high)):
            out.append(f"Hyp1(ii): {name} bounded")
        if self.beta_min < 0:
            out.append(f"Hyp1(ii): {name} >= 0")
        return out


@dataclass(frozen=True, eq=False)
class Forcing:
    """Insolation Q(t, x) = r(t) q(x) and the two coalbedos."""

    q: SpectralField
    r_kind: str = "constant"
    r0: float = 1.0
    r_delta: float = 0.0
    r_omega: float = 0.0
    beta_a: Coalbedo = field(default_factory=lambda: Coalbedo.constant(0.0))
    beta_s: Coalbedo = field(default_factory=lambda: Coalbedo.constant(0.7))
    q_nodal: np.ndarray = field(init=False, repr=False)
    q_min: float = field(init=False)
    q_max: float = field(init=False)

    def __post_init__(self):
        qn = self.q.grid.to_nodes(self.q.coeffs)
        qn.setflags(write=False)
        lo, hi = extrema(self.q)
        object.__setattr__(self, "q_nodal", qn)
        object.__setattr__(self, "q_min", min(lo, float(qn.min())))
        object.__setattr__(self, "q_max", max(hi, float(qn.max())))

    # insolation shapes ----------------------------------------------------
    @staticmethod
    def q_constant(grid: SpectralGrid, q0: float) -> SpectralField:
        return SpectralField.constant(grid, q0)

    @staticmethod
    def q_p2(grid: SpectralGrid, q0: float, s2: float) -> SpectralField:
        """q0 (1 + s2 P_2(x)); s2 < 0 puts the maximum at the equator."""
        if not -1.0 < s2 < 1.0:
            raise ValueError("s2 must lie in (-1, 1)")
        c = np.zeros(grid.n_modes)
        c[0] = q0
        if grid.n_modes > 2:
            c[2] = q0 * s2
        elif s2 != 0.0:
            raise ValueError("n_modes >= 3 needed for a P_2 insolation profile")
        return SpectralField(grid, c)

    @staticmethod
    def q_bump(grid: SpectralGrid, q0: float, power: int) -> SpectralField:
        """q0 (1 - x^2)^power: positive inside, vanishing at both poles."""
        if 2 * power > grid.n_modes - 1:
            raise ValueError("bump degree exceeds the grid")
        return SpectralField.from_function(grid, lambda x: q0 * (1.0 - x * x) ** power)

    # r(t) ----------------------------------------------------------------
    def r(self, t: float) -> float:
        if self.r_kind == "constant":
            return self.r0
        return self.r0 * (1.0 + self.r_delta * math.sin(self.r_omega * t))

    @property
    def r_min(self) -> float:
        return self.r0 * (1.0 - self.r_delta) if self.r_kind == "sinusoidal" else self.r0

    @property
    def r_max(self) -> float:
        return self.r0 * (1.0 + self.r_delta) if self.r_kind == "sinusoidal" else self.r0

    @property
    def r_lipschitz(self) -> float:
        if self.r_kind == "constant":
            return 0.0
        return self.r0 * self.r_delta * abs(self.r_omega)

    @property
    def autonomous(self) -> bool:
        return self.r_kind == "constant" or self.r_delta == 0.0 or self.r_omega == 0.0

    @property
    def q_bar_min(self) -> float:
        return self.r_min * self.q_min

    @property
    def q_bar_max(self) -> float:
        return self.r_max * self.q_max

    @property
    def grid(self) -> SpectralGrid:
        return self.q.grid


@dataclass(frozen=True, eq=False)
class StateVec:
    t_a: SpectralField
    t_s: SpectralField

    def __post_init__(self):
        if self.t_a.grid != self.t_s.grid:
            raise ValueError("both components must share one grid")

    @property
    def grid(self) -> SpectralGrid:
        return self.t_a.grid

    @property
    def coeffs(self) -> np.ndarray:
        """Stacked (2, n_modes) coefficient array."""
        return np.stack([self.t_a.coeffs, self.t_s.coeffs])

    @classmethod
    def from_coeffs(cls, grid: SpectralGrid, U) -> "StateVec":
        U = np.asarray(U, dtype=float)
        return cls(SpectralField(grid, U[0]), SpectralField(grid, U[1]))

    @classmethod
    def constant(cls, grid: SpectralGrid, t_a: float, t_s: float) -> "StateVec":
        return cls(SpectralField.constant(grid, t_a), SpectralField.constant(grid, t_s))

    def nodal(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        return g.to_nodes(self.t_a.coeffs), g.to_nodes(self.t_s.coeffs)


def validate(params: ModelParams, forcing: Forcing) -> list[str]:
    """Every failed clause of the standing hypotheses; empty when all hold."""
    out = []
    p = params
    checks = [
        (p.gamma_a > 0, "Hyp1(i): gamma_a > 0"),
        (p.gamma_s > 0, "Hyp1(i): gamma_s > 0"),
        (p.kappa_a > 0, "Hyp1(i): kappa_a > 0"),
        (p.kappa_s > 0, "Hyp1(i): kappa_s > 0"),
        (p.sigma_b > 0, "Hyp1(i): sigma_b > 0"),
        (p.eps_a > 0, "Hyp1(i): eps_a > 0"),
        (p.lam >= 0, "Hyp1(i): lambda >= 0"),
    ]
    out += [msg for ok, msg in checks if not ok]
    out += forcing.beta_a.violations("beta_a")
    out += forcing.beta_s.violations("beta_s")
    if not np.all(np.isfinite(forcing.q.coeffs)):
        out.append("Hyp1(iii): q bounded")
    # an exactly nonnegative polynomial such as the bump can evaluate to -1e-17 at the poles
    elif min(forcing.q_min, float(forcing.q_nodal.min())) < -1e-14 * max(1.0, forcing.q_max):
        out.append("Hyp1(iii): q >= 0")
    if forcing.r_kind not in ("constant", "sinusoidal"):
        out.append(f"Hyp1(iii): r kind '{forcing.r_kind}' unknown")
    if not forcing.r0 > 0:
        out.append("Hyp1(iii): r > 0")
    if forcing.r_kind == "sinusoidal" and not 0.0 <= forcing.r_delta < 1.0:
        out.append("Hyp1(iii): r > 0 (r_delta in [0, 1))")
    return out


def _quartic(u):
    return np.abs(u) ** 3 * u


class Reaction:
    """Pseudo-spectral evaluator of G on stacked coefficient arrays (..., 2, N)."""

    def __init__(self, params: ModelParams, forcing: Forcing):
        self.params = params
        self.forcing = forcing
        self.grid = forcing.grid

    def nodal(self, t: float, ua: np.ndarray, us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(F_a, F_s) without the 1/gamma factors, at the nodes."""
        p, f = self.params, self.forcing
        Q = f.r(t) * f.q_nodal
        qa, qs = _quartic(ua), _quartic(us)
        Fa = -p.lam * (ua - us) + p.eps_a * p.sigma_b * qs - 2.0 * p.eps_a * p.sigma_b * qa
        Fs = -p.lam * (us - ua) - p.sigma_b * qs + p.eps_a * p.sigma_b * qa
        if not f.beta_a.is_zero:
            Fa = Fa + Q * f.beta_a(ua)
        Fs = Fs + Q * f.beta_s(us)
        return Fa, Fs

    def __call__(self, t: float, U: np.ndarray) -> np.ndarray:
        g = self.grid
        nod = g.to_nodes(U)
        with np.errstate(over="ignore", invalid="ignore"):
            Fa, Fs = self.nodal(t, nod[..., 0, :], nod[..., 1, :])
        if not (np.all(np.isfinite(Fa)) and np.all(np.isfinite(Fs))):
            raise NumericOverflowError("non-finite reaction term")
        out = np.stack([Fa / self.params.gamma_a, Fs / self.params.gamma_s], axis=-2)
        return g.to_coeffs(out)

    def jacobian_nodal(self, t: float, ua: np.ndarray, us: np.ndarray):
        p, f = self.params, self.forcing
        Q = f.r(t) * f.q_nodal
        ca = 4.0 * np.abs(ua) ** 3
        cs = 4.0 * np.abs(us) ** 3
        daa = (-p.lam - 2.0 * p.eps_a * p.sigma_b * ca + Q * f.beta_a.derivative(ua)) / p.gamma_a
        das = (p.lam + p.eps_a * p.sigma_b * cs) / p.gamma_a
        dsa = (p.lam + p.eps_a * p.sigma_b * ca) / p.gamma_s
        dss = (-p.lam - p.sigma_b * cs + Q * f.beta_s.derivative(us)) / p.gamma_s
        return daa, das, dsa, dss


class ZeroReaction:
    """G identically zero (pure diffusion)."""

    def __init__(self, grid: SpectralGrid):
        self.grid = grid

    def __call__(self, t, U):
        return np.zeros_like(U)


class LinearReaction:
    """G = M(x) U + f(x) with a nodal 2x2 coefficient field and source.

    Used for the frozen-coefficient maximum-principle checks and for the
    decoupled scalar comparison.
    """

    def __init__(self, grid: SpectralGrid, blocks, source=(0.0, 0.0)):
        self.grid = grid
        self.blocks = [np.broadcast_to(np.asarray(b, dtype=float), (grid.n_quad,)) for b in blocks]
        self.source = [np.broadcast_to(np.asarray(s, dtype=float), (grid.n_quad,)) for s in source]

    def __call__(self, t, U):
        g = self.grid
        nod = g.to_nodes(U)
        ua, us = nod[..., 0, :], nod[..., 1, :]
        maa, mas, msa, mss = self.blocks
        out = np.stack(
            [maa * ua + mas * us + self.source[0], msa * ua + mss * us + self.source[1]], axis=-2
        )
        return g.to_coeffs(out)


def eval_G(t: float, state: StateVec, params: ModelParams, forcing: Forcing) -> StateVec:
    return StateVec.from_coeffs(state.grid, Reaction(params, forcing)(t, state.coeffs))


@dataclass(frozen=True)
class JacobianBlocks:
    """Nodal partial derivatives of (G_a, G_s) with respect to (u_a, u_s)."""

    daa: np.ndarray
    das: np.ndarray
    dsa: np.ndarray
    dss: np.ndarray

    def __iter__(self):
        return iter((self.daa, self.das, self.dsa, self.dss))


def eval_G_jacobian(state: StateVec, t: float, params: ModelParams, forcing: Forcing) -> JacobianBlocks:
    ua, us = state.nodal()
    return JacobianBlocks(*Reaction(params, forcing).jacobian_nodal(t, ua, us))


def g_time_lipschitz_bound(forcing: Forcing, params: ModelParams) -> float:
    """C with ||G(t,u) - G(s,u)||_H <= C |t - s| for every u."""
    qsup = max(abs(forcing.q_min), abs(forcing.q_max))
    beta_part = (forcing.beta_a.sup_abs / params.gamma_a) ** 2 + (forcing.beta_s.sup_abs / params.gamma_s) ** 2
    return math.sqrt(2.0) * forcing.r_lipschitz * qsup * math.sqrt(beta_part)


def h_norm_pair(U: np.ndarray, grid: SpectralGrid) -> float:
    """H-norm of a stacked pair: sqrt(||u_a||^2 + ||u_s||^2)."""
    return float(np.sqrt(np.sum(h_norm_sq(U, grid))))


def default_forcing(grid: SpectralGrid, q0: float = 1.0, s2: float = -0.3,
                    beta_s: Coalbedo | None = None) -> Forcing:
    return Forcing(
        q=Forcing.q_p2(grid, q0, s2),
        beta_a=Coalbedo.constant(0.0),
        beta_s=beta_s if beta_s is not None else Coalbedo.constant(0.7),
    )
