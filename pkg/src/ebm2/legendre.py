"""Legendre spectral representation of the degenerate operator ((1-x^2) u')'.

Fields on (-1, 1) are stored as Legendre coefficients.  The Legendre
polynomials are eigenfunctions of the operator with eigenvalues -n(n+1) and
satisfy the degenerate flux condition (1-x^2) u' = 0 at x = +-1, so no
boundary rows are needed anywhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import optimize, special


class DimensionError(ValueError):
    """Array length does not match the grid."""


class AccuracyError(RuntimeError):
    """A quadrature failed to reach its tolerance."""


def default_n_quad(n_modes: int) -> int:
    return math.ceil(5 * n_modes / 2) + 2


def min_n_quad(n_modes: int) -> int:
    # Gauss with n points is exact to degree 2n-1; quintic products have degree 5(N-1).
    return math.ceil((5 * (n_modes - 1) + 2) / 2)


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Gauss-Legendre grid carrying Legendre degrees 0..n_modes-1."""

    n_modes: int
    n_quad: int | None = None
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        n_quad = default_n_quad(self.n_modes) if self.n_quad is None else int(self.n_quad)
        if n_quad < min_n_quad(self.n_modes):
            raise ValueError(
                f"n_quad={n_quad} too small for n_modes={self.n_modes}; "
                f"need >= {min_n_quad(self.n_modes)}"
            )
        x, w = npleg.leggauss(n_quad)
        for arr in (x, w):
            arr.setflags(write=False)
        object.__setattr__(self, "n_quad", n_quad)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.arange(self.n_modes)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """n(n+1) for each degree; A P_n = -n(n+1) P_n."""
        n = self.degrees
        return (n * (n + 1)).astype(float)

    @cached_property
    def mass(self) -> np.ndarray:
        """||P_n||^2 = 2/(2n+1)."""
        return 2.0 / (2 * self.degrees + 1.0)

    @cached_property
    def vandermonde(self) -> np.ndarray:
        """P_n(x_j), shape (n_quad, n_modes)."""
        return npleg.legvander(self.nodes, self.n_modes - 1)

    @cached_property
    def analysis_matrix(self) -> np.ndarray:
        """Maps nodal values (last axis) to coefficients: f @ M."""
        return self.vandermonde * (self.weights[:, None] / self.mass[None, :])

    @cached_property
    def endpoint_rows(self) -> np.ndarray:
        """P_n(-1), P_n(+1) as a (2, n_modes) array."""
        n = self.degrees
        return np.vstack([(-1.0) ** n, np.ones(self.n_modes)])

    def to_nodes(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.vandermonde.T

    def to_coeffs(self, nodal: np.ndarray) -> np.ndarray:
        return nodal @ self.analysis_matrix

    def __eq__(self, other):
        if not isinstance(other, SpectralGrid):
            return NotImplemented
        return self.n_modes == other.n_modes and self.n_quad == other.n_quad

    def __hash__(self):
        return hash((self.n_modes, self.n_quad))


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.grid.n_modes,):
            raise DimensionError(
                f"expected {self.grid.n_modes} coefficients, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, grid: SpectralGrid, value: float) -> "SpectralField":
        c = np.zeros(grid.n_modes)
        c[0] = value
        return cls(grid, c)

    @classmethod
    def legendre(cls, grid: SpectralGrid, n: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(grid.n_modes)
        c[n] = amplitude
        return cls(grid, c)

    @classmethod
    def from_function(cls, grid: SpectralGrid, f) -> "SpectralField":
        return analyze(f(grid.nodes), grid)

    def __call__(self, x) -> np.ndarray:
        return npleg.legval(np.asarray(x, dtype=float), self.coeffs)

    def __add__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField(self.grid, self.coeffs + other.coeffs)
        return SpectralField(self.grid, self.coeffs + np.eye(1, self.grid.n_modes)[0] * other)

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField(self.grid, self.coeffs - other.coeffs)
        return self + (-other)

    def __mul__(self, scalar: float):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


@dataclass(frozen=True)
class NormTriple:
    h_norm: float
    v_norm: float
    da_norm: float


def analyze(nodal_values, grid: SpectralGrid) -> SpectralField:
    """Nodal values at the Gauss nodes -> Legendre coefficients."""
    f = np.asarray(nodal_values, dtype=float)
    if f.shape != (grid.n_quad,):
        raise DimensionError(f"expected {grid.n_quad} nodal values, got shape {f.shape}")
    return SpectralField(grid, grid.to_coeffs(f))


def synthesize(field: SpectralField) -> np.ndarray:
    return field.grid.to_nodes(field.coeffs)


def apply_A(field: SpectralField) -> SpectralField:
    return SpectralField(field.grid, -field.grid.eigenvalues * field.coeffs)


def semigroup_apply(field: SpectralField, s: float) -> SpectralField:
    """Heat semigroup e^{sA}: mode n is damped by exp(-n(n+1) s)."""
    if s < 0:
        raise ValueError(f"semigroup time must be >= 0, got {s}")
    return SpectralField(field.grid, np.exp(-field.grid.eigenvalues * s) * field.coeffs)


def h_norm_sq(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.sum(coeffs**2 * grid.mass, axis=-1)


def dirichlet_sq(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """int (1-x^2) (u')^2 dx, along the last axis."""
    return np.sum(grid.eigenvalues * coeffs**2 * grid.mass, axis=-1)


def v_norm_sq(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return np.sum((1.0 + grid.eigenvalues) * coeffs**2 * grid.mass, axis=-1)


def norms(field: SpectralField) -> NormTriple:
    g, c = field.grid, field.coeffs
    w = c**2 * g.mass
    lam = g.eigenvalues
    return NormTriple(
        h_norm=float(np.sqrt(w.sum())),
        v_norm=float(np.sqrt(((1.0 + lam) * w).sum())),
        da_norm=float(np.sqrt(((1.0 + lam**2) * w).sum())),
    )


def chebyshev_points(n_eval: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [-1, 1], increasing, endpoints included."""
    k = np.arange(n_eval)
    return -np.cos(np.pi * k / (n_eval - 1))


def critical_points(coeffs: np.ndarray) -> np.ndarray:
    """Real roots of u' inside [-1, 1]."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if len(c) < 3:
        return np.empty(0)
    d = npleg.legder(c)
    roots = npleg.legroots(d)
    roots = roots[np.abs(roots.imag) < 1e-10].real if np.iscomplexobj(roots) else roots
    return roots[(roots >= -1.0) & (roots <= 1.0)]


def extrema(field: SpectralField, n_eval: int = 129) -> tuple[float, float]:
    """(min, max) of u over [-1, 1]: dense Chebyshev points plus exact critical points."""
    x = np.concatenate([chebyshev_points(n_eval), critical_points(field.coeffs)])
    vals = field(x)
    return float(vals.min()), float(vals.max())


def sup_norm(field: SpectralField, n_eval: int = 129) -> float:
    """max |u| over Chebyshev-Lobatto points and the critical points of u.

    Including the critical points makes the result the exact sup over [-1, 1]
    (up to rounding), hence monotone in n_eval.
    """
    if n_eval < 64:
        raise ValueError("n_eval must be >= 64")
    lo, hi = extrema(field, n_eval)
    return max(abs(lo), abs(hi))


def nodal_sup(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Cheap sup estimate over Gauss nodes and both endpoints (last axis)."""
    inner = np.abs(grid.to_nodes(coeffs)).max(axis=-1)
    ends = np.abs(coeffs @ grid.endpoint_rows.T).max(axis=-1)
    return np.maximum(inner, ends)


# ---------------------------------------------------------------------------
# Hardy-type inequality
# ---------------------------------------------------------------------------


def _hardy_profile_d(d, n, gamma):
    """Hardy profile written in d = 1 + x, so s = 1 - x^2 = d (2 - d) has no cancellation."""
    s = d * (2.0 - d)
    return (n + 1.0) / s**gamma + (d - 1.0) * (1.0 - gamma) / s ** ((1.0 + gamma) / 2.0)


def hardy_side_constant(n: float, gamma: float) -> float:
    """sup over (-1, 0] of (n+1)/(1-x^2)^g + x(1-g)/(1-x^2)^((1+g)/2).

    The mirrored constant on [0, 1) is identical by the symmetry x -> -x.
    The profile tends to -inf at -1 and, for g close to 1, peaks extremely
    close to it (distance ~ 1e-26 for g = 0.9), so the search runs over
    log10 of the distance d = 1 + x: a coarse grid, then a bounded scalar
    search on the neighbouring cell.
    """
    e = np.linspace(-300.0, 0.0, 3001)
    vals = _hardy_profile_d(10.0**e, n, gamma)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = e[max(k - 1, 0)], e[min(k + 1, len(e) - 1)]
    res = optimize.minimize_scalar(
        lambda t: -_hardy_profile_d(10.0**t, n, gamma),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(best, float(-res.fun))


def hardy_constant(n: float, gamma: float) -> float:
    """C = 4 + 2c + 4n/3, c being the one-sided profile bound (equal on both sides by symmetry)."""
    c = hardy_side_constant(n, gamma)
    return 4.0 + 2.0 * c + 4.0 * n / 3.0


def weighted_l2_sq(field: SpectralField, gamma: float, rtol: float = 1e-8, max_doublings: int = 8) -> float:
    """int v^2 (1-x^2)^(-gamma) dx by Gauss-Jacobi, doubling the order until converged."""
    m = max(field.grid.n_modes + 1, 8)
    prev = None
    for _ in range(max_doublings):
        x, w = special.roots_jacobi(m, -gamma, -gamma)
        val = float(np.sum(w * field(x) ** 2))
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), 1e-300):
            return val
        prev = val
        m *= 2
    raise AccuracyError(f"weighted integral did not converge (gamma={gamma})")


@dataclass(frozen=True)
class HardyResult:
    lhs: float
    rhs: float
    constant_used: float
    holds: bool


def hardy_check(field: SpectralField, n: float, gamma: float) -> HardyResult:
    """n int v^2/(1-x^2)^g <= int (1-x^2) v'^2 + C_{n,g} int v^2."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if n <= 0:
        raise ValueError(f"n must be > 0, got {n}")
    g = field.grid
    C = hardy_constant(n, gamma)
    if not np.any(field.coeffs):
        return HardyResult(0.0, 0.0, C, True)
    lhs = n * weighted_l2_sq(field, gamma)
    rhs = float(dirichlet_sq(field.coeffs, g) + C * h_norm_sq(field.coeffs, g))
    return HardyResult(lhs, rhs, C, lhs <= rhs * (1.0 + 1e-9))
