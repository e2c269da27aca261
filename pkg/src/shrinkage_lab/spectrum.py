"""Limiting spectral distribution of high-dimensional sample covariance matrices.

Solves the generalized Marchenko-Pastur fixed point for an atomic population
spectrum H and aspect ratio gamma = lim p/n, locates the support of the
limiting sample spectrum F, and evaluates the boundary values
f(x) + i g(x) of the companion transform on the real axis.  The density of
the continuous part of F is g / (gamma * pi); for gamma > 1 there is an
additional point mass 1 - 1/gamma at zero.

Conventions
-----------
m(z)         Stieltjes transform of F, solving the fixed point
             m = int dH(t) / (t (1 - gamma - gamma z m) - z).
m_comp(z)    companion transform  -(1 - gamma)/z + gamma m(z); its boundary
             values on the support are f + i g.
z_of_m(m)    inverse of the companion transform,
             z = -1/m + gamma int t/(1 + t m) dH(t); real critical points of
             this map give the support edges.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ConvergenceError, DomainError, NumericalError

__all__ = [
    "PopulationSpectrum",
    "AspectRatio",
    "LimitingSpectrum",
    "solve_stieltjes",
    "find_support",
    "boundary_values",
    "companion_at_zero",
    "build_limiting_spectrum",
]

# epsilon-continuation schedule toward the real axis; the final level is the
# reported boundary value
_EPS_LEVELS = tuple(10.0 ** -k for k in range(1, 8))
_RESIDUAL_TOL = 1e-12
_PICARD_DAMPING = 0.5
_GAMMA_ONE_GUARD = 1e-3


@dataclass(frozen=True)
class PopulationSpectrum:
    """Atomic population spectral measure: locations t_i with weights w_i."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ConfigError("population spectrum needs at least one atom")
        atoms = tuple(sorted((float(t), float(w)) for t, w in self.atoms))
        object.__setattr__(self, "atoms", atoms)
        locs = np.array([t for t, _ in atoms])
        wts = np.array([w for _, w in atoms])
        if np.any(locs < 0):
            raise ConfigError("atom locations must be nonnegative")
        if np.any(wts <= 0):
            raise ConfigError("atom weights must be positive")
        if abs(wts.sum() - 1.0) > 1e-12:
            raise ConfigError(f"atom weights sum to {wts.sum()!r}, expected 1")

    @classmethod
    def from_atoms(cls, locations, weights=None) -> "PopulationSpectrum":
        locations = np.asarray(locations, dtype=float)
        if weights is None:
            weights = np.full(locations.shape, 1.0 / locations.size)
        weights = np.asarray(weights, dtype=float)
        return cls(tuple(zip(locations.tolist(), weights.tolist())))

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "PopulationSpectrum":
        """Discretize a matrix spectrum as equally weighted atoms."""
        return cls.from_atoms(np.asarray(eigenvalues, dtype=float))

    @property
    def locations(self) -> np.ndarray:
        return np.array([t for t, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.locations**k))

    def scaled(self, c: float) -> "PopulationSpectrum":
        """Pushforward under t -> c*t."""
        if c <= 0:
            raise ConfigError("scale factor must be positive")
        return PopulationSpectrum(tuple((c * t, w) for t, w in self.atoms))

    def to_json(self) -> str:
        return json.dumps({"atoms": [{"t": t, "w": w} for t, w in self.atoms]})

    @classmethod
    def from_json(cls, text: str) -> "PopulationSpectrum":
        try:
            obj = json.loads(text)
            atoms = tuple((a["t"], a["w"]) for a in obj["atoms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed population spectrum JSON: {exc}") from exc
        return cls(atoms)


@dataclass(frozen=True)
class AspectRatio:
    """Limit of p/n.  gamma == 1 is excluded (density may be unbounded)."""

    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        object.__setattr__(self, "gamma", g)
        if not (g > 0) or not math.isfinite(g):
            raise ConfigError("gamma must be a positive finite real")
        if abs(g - 1.0) < _GAMMA_ONE_GUARD:
            raise ConfigError(
                f"gamma={g} is within {_GAMMA_ONE_GUARD} of the excluded value 1"
            )

    def __float__(self) -> float:
        return self.gamma


def _as_gamma(gamma) -> float:
    if isinstance(gamma, AspectRatio):
        return gamma.gamma
    return AspectRatio(float(gamma)).gamma


# ---------------------------------------------------------------------------
# fixed-point machinery (vectorized over arrays of z)
# ---------------------------------------------------------------------------


def _phi(m, z, t, w, gamma):
    """Fixed-point map: Phi(m) = sum_i w_i / (t_i (1 - g - g z m) - z)."""
    u = 1.0 - gamma - gamma * z * m
    denom = t * u[..., None] - z[..., None]
    return np.sum(w / denom, axis=-1)


def _atom_sum(mb, t, w):
    """int t / (1 + t mb) dH for complex mb."""
    return np.sum(w * t / (1.0 + t * mb[..., None]), axis=-1)


def _atom_sum_sq(mb, t, w):
    """int t^2 / (1 + t mb)^2 dH for complex mb."""
    return np.sum(w * t**2 / (1.0 + t * mb[..., None]) ** 2, axis=-1)


def _psi_companion(mb, z, t, w, gamma):
    """Companion-form map Psi(mb) = -1 / (z - g * int t/(1 + t mb) dH).

    Unlike the map for m itself, Psi sends the upper half-plane into itself
    for Im z > 0, so damped iteration cannot leave the Stieltjes branch.
    """
    return -1.0 / (z - gamma * _atom_sum(mb, t, w))


def _solve_fixed_point(z, t, w, gamma, m0=None, picard_iters=80, newton_iters=60):
    """Solve the Marchenko-Pastur fixed point at complex z (array, Im z > 0).

    Damped iteration of the companion transform mb, followed by a Newton
    polish on the inverse map z(mb) - z; Newton steps are backtracked to keep
    Im mb > 0.  Returns (m, mb) where m is the transform of the limiting
    p x p spectrum; the residual contract |m - Phi(m)| < 1e-10 is verified on
    the m form.
    """
    z = np.asarray(z, dtype=complex)
    if m0 is not None:
        mb = np.broadcast_to(np.asarray(m0, dtype=complex), z.shape).copy()
        mb[mb.imag <= 0] = -1.0 / z[mb.imag <= 0]
    else:
        mb = -1.0 / z

    omega = _PICARD_DAMPING
    for _ in range(picard_iters):
        mb_new = (1.0 - omega) * mb + omega * _psi_companion(mb, z, t, w, gamma)
        if np.max(np.abs(mb_new - mb)) < 0.1 * _RESIDUAL_TOL:
            mb = mb_new
            break
        mb = mb_new

    resid = np.abs(mb - _psi_companion(mb, z, t, w, gamma))
    active = resid > 0.01 * _RESIDUAL_TOL
    for _ in range(newton_iters):
        if not np.any(active):
            break
        ma, za = mb[active], z[active]
        g_val = -1.0 / ma + gamma * _atom_sum(ma, t, w) - za
        g_der = 1.0 / ma**2 - gamma * _atom_sum_sq(ma, t, w)
        step = -g_val / g_der
        cand = ma + step
        shrink = cand.imag <= 0
        for _ in range(60):
            if not np.any(shrink):
                break
            step[shrink] *= 0.5
            cand = ma + step
            shrink = cand.imag <= 0
        mb[active] = cand
        resid[active] = np.abs(cand - _psi_companion(cand, za, t, w, gamma))
        active = resid > 0.01 * _RESIDUAL_TOL

    # recover m and verify the contracted residual on the original form
    m = (mb + (1.0 - gamma) / z) / gamma
    m_resid = np.abs(m - _phi(m, z, t, w, gamma))
    if np.any(m_resid > 1e-10):
        raise ConvergenceError(
            "Stieltjes fixed point did not converge",
            residual=float(np.max(m_resid)),
        )
    return m, mb


def solve_stieltjes(h: PopulationSpectrum, gamma, z: complex):
    """Solve for (m, m_companion) at a single z with Im z > 0.

    The returned m satisfies the fixed point with residual below 1e-10, and
    both transforms have positive imaginary part.
    """
    g = _as_gamma(gamma)
    z = complex(z)
    if z.imag <= 0:
        raise DomainError("solve_stieltjes requires Im z > 0")
    t, w = h.locations, h.weights
    m, mb = _solve_fixed_point(np.array([z]), t, w, g)
    return complex(m[0]), complex(mb[0])


# ---------------------------------------------------------------------------
# support detection via the inverse map z(m)
# ---------------------------------------------------------------------------


def _z_of_m(m, t, w, gamma):
    m = np.asarray(m, dtype=float)
    return -1.0 / m + gamma * np.sum(w * t / (1.0 + t * m[..., None]), axis=-1)


def _z_prime(m, t, w, gamma):
    m = np.asarray(m, dtype=float)
    return 1.0 / m**2 - gamma * np.sum(
        w * t**2 / (1.0 + t * m[..., None]) ** 2, axis=-1
    )


def _cos_cluster(a: float, b: float, count: int) -> np.ndarray:
    """Open grid on (a, b) clustered toward both endpoints."""
    v = np.linspace(0.0, np.pi, count + 2)[1:-1]
    return a + (b - a) * 0.5 * (1.0 - np.cos(v))


def _critical_points(t, w, gamma):
    """All real critical points of z(m) between/beyond the poles -1/t_i."""
    t_pos = t[t > 0]
    poles = np.sort(-1.0 / t_pos)  # ascending, all negative
    poles = np.unique(poles)
    k = poles.size
    # probe density: generous for few atoms, thinner for discretized spectra
    inner = max(16, min(4096, 131072 // max(1, k)))
    outer = 4096

    segments = []
    scale = max(1.0, abs(poles[0]))
    # left unbounded piece (-inf, poles[0])
    offs = np.geomspace(1e-9 * scale, 1e7 * scale, outer)
    segments.append(poles[0] - offs[::-1])
    # pieces between consecutive poles
    for lo, hi in zip(poles[:-1], poles[1:]):
        segments.append(_cos_cluster(lo, hi, inner))
    # piece (poles[-1], 0)
    segments.append(_cos_cluster(poles[-1], 0.0, max(inner, 512)))
    # piece (0, +inf); relevant for gamma > 1 (contains m_comp(0))
    segments.append(np.geomspace(1e-9 / t_pos.max(), 1e9 / t_pos.min(), outer))

    crit = []
    for seg in segments:
        vals = _z_prime(seg, t, w, gamma)
        sign = np.sign(vals)
        flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        for i in flips:
            root = brentq(
                lambda m: float(_z_prime(np.array([m]), t, w, gamma)[0]),
                seg[i],
                seg[i + 1],
                xtol=1e-14,
            )
            crit.append(root)
    return np.array(sorted(crit))


def find_support(h: PopulationSpectrum, gamma) -> list[tuple[float, float]]:
    """Support intervals of the limiting spectrum on (0, oo).

    The complement of the support is swept by the increasing stretches of the
    inverse map z(m) on real m away from the poles; support edges are the
    images of its critical points.
    """
    g = _as_gamma(gamma)
    t, w = h.locations, h.weights
    if not np.any(t > 0):
        raise ConfigError("population spectrum has no positive atoms")
    crit = _critical_points(t, w, g)
    edges = _z_of_m(crit, t, w, g)
    edges = np.sort(edges[edges > 1e-14])
    if edges.size == 0 or edges.size % 2 != 0:
        raise NumericalError(
            f"support detection found {edges.size} edges; expected an even count"
        )
    intervals = [
        (float(edges[i]), float(edges[i + 1])) for i in range(0, edges.size, 2)
    ]
    upper_bound = h.locations.max() * (1.0 + math.sqrt(g)) ** 2
    if intervals[-1][1] > upper_bound * (1.0 + 1e-8):
        raise NumericalError("support extends beyond the norm bound h2*(1+sqrt(g))^2")
    return intervals


def companion_at_zero(h: PopulationSpectrum, gamma) -> tuple[float, float]:
    """(m_comp(0), m_comp'(0)) for gamma > 1.

    m_comp(0) is the unique positive root of z(m) = 0; the derivative follows
    from the inverse-function rule m_comp'(0) = 1 / z'(m_comp(0)).
    """
    g = _as_gamma(gamma)
    if g <= 1.0:
        raise DomainError("companion transform at zero requires gamma > 1")
    t, w = h.locations, h.weights
    t_pos = t[t > 0]

    def zf(m):
        return float(_z_of_m(np.array([m]), t, w, g)[0])

    lo = 1e-12 / t_pos.max()
    while zf(lo) > 0:
        lo *= 0.1
        if lo < 1e-300:
            raise NumericalError("failed to bracket companion root at zero")
    hi = 1.0 / t_pos.min()
    while zf(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("failed to bracket companion root at zero")
    m0 = brentq(zf, lo, hi, xtol=1e-15)
    zp = float(_z_prime(np.array([m0]), t, w, g)[0])
    if zp <= 0:
        raise NumericalError("inverse map is not increasing at the zero root")
    return float(m0), float(1.0 / zp)


# ---------------------------------------------------------------------------
# boundary values by epsilon-continuation
# ---------------------------------------------------------------------------


def _boundary_grid(h: PopulationSpectrum, gamma, xs: np.ndarray):
    """Companion boundary values (f, g) at real points inside the support.

    Continues the solution from Im z = 1e-1 down to 1e-7 in decade steps,
    warm-starting each level; the last level is taken as the boundary value.
    """
    g = _as_gamma(gamma)
    t, w = h.locations, h.weights
    xs = np.asarray(xs, dtype=float)
    mb = None
    for eps in _EPS_LEVELS:
        z = xs + 1j * eps
        _, mb = _solve_fixed_point(z, t, w, g, m0=mb)

    # final Newton polish of z(mb) = x on the real axis; removes the O(eps)
    # continuation bias, which otherwise dominates at edge-clustered nodes
    pol = mb.copy()
    for _ in range(40):
        resid = -1.0 / pol + g * _atom_sum(pol, t, w) - xs
        if np.max(np.abs(resid)) < 1e-13:
            break
        der = 1.0 / pol**2 - g * _atom_sum_sq(pol, t, w)
        pol = pol - resid / der
    good = (
        (pol.imag > 0)
        & (np.abs(-1.0 / pol + g * _atom_sum(pol, t, w) - xs) < 1e-11)
    )
    mb = np.where(good, pol, mb)
    return mb.real.copy(), np.maximum(mb.imag, 0.0)


def boundary_values(h: PopulationSpectrum, gamma, x: float, support=None):
    """(f(x), g(x)) at a point of the support, tolerance-extended at edges."""
    if support is None:
        support = find_support(h, gamma)
    x = float(x)
    width = sum(hi - lo for lo, hi in support)
    tol = 1e-6 * width
    inside = any(lo - tol <= x <= hi + tol for lo, hi in support)
    if not inside:
        raise DomainError(f"x={x} lies outside the support {support}")
    f, gv = _boundary_grid(h, gamma, np.array([x]))
    return float(f[0]), float(gv[0])


# ---------------------------------------------------------------------------
# assembled limiting spectrum
# ---------------------------------------------------------------------------


class LimitingSpectrum:
    """Solved limiting sample spectrum for (gamma, H) on a quadrature grid.

    Nodes are Gauss-Chebyshev (second kind) points per support interval, with
    weights ``quad_weights`` such that sums approximate plain dx-integrals of
    functions vanishing like a square root at the edges -- which every
    integrand used downstream does, via its factor of g.
    """

    def __init__(self, h: PopulationSpectrum, gamma, grid_size: int = 512):
        if grid_size < 64:
            raise ConfigError("grid_size must be at least 64")
        g = _as_gamma(gamma)
        self.h = h
        self.gamma = g
        self.grid_size = int(grid_size)
        self.support = find_support(h, g)

        widths = np.array([hi - lo for lo, hi in self.support])
        counts = np.maximum(24, np.round(grid_size * widths / widths.sum()).astype(int))

        grids, weights, idx = [], [], []
        for i, ((lo, hi), n_i) in enumerate(zip(self.support, counts)):
            c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
            theta = np.arange(1, n_i + 1) * np.pi / (n_i + 1)
            grids.append(c - r * np.cos(theta))
            weights.append(r * np.pi / (n_i + 1) * np.sin(theta))
            idx.append(np.full(n_i, i))
        self.grid = np.concatenate(grids)
        self.quad_weights = np.concatenate(weights)
        self.interval_index = np.concatenate(idx)

        self.f_vals, self.g_vals = _boundary_grid(h, g, self.grid)
        self.density_vals = self.g_vals / (g * np.pi)
        self.atom0_mass = max(1.0 - 1.0 / g, 0.0)
        if g > 1.0:
            self.m0, self.m0_prime = companion_at_zero(h, g)
        else:
            self.m0, self.m0_prime = None, None

        mass = float(self.quad_weights @ self.density_vals) + self.atom0_mass
        if abs(mass - 1.0) > 1e-3:
            raise NumericalError(f"spectrum mass {mass} deviates grossly from 1")

    # -- measure-theoretic helpers ------------------------------------------

    @cached_property
    def abs_m2(self) -> np.ndarray:
        """|f + i g|^2 on the grid."""
        return self.f_vals**2 + self.g_vals**2

    @cached_property
    def f_weights(self) -> np.ndarray:
        """Weights integrating against the continuous part of F."""
        return self.quad_weights * self.density_vals

    @cached_property
    def companion_weights(self) -> np.ndarray:
        """Weights for the companion measure's continuous part (density g/pi)."""
        return self.quad_weights * self.g_vals / np.pi

    @property
    def companion_atom0(self) -> float:
        return max(1.0 - self.gamma, 0.0)

    def integrate_f(self, values_on_grid, value_at_zero: float = 0.0) -> float:
        """Integrate a function against F (continuous part + atom at 0)."""
        return float(self.f_weights @ values_on_grid) + self.atom0_mass * value_at_zero

    def total_mass(self) -> float:
        return self.integrate_f(np.ones_like(self.grid), 1.0)

    def first_moment(self) -> float:
        return self.integrate_f(self.grid, 0.0)

    @cached_property
    def refined(self) -> "LimitingSpectrum":
        """Twin spectrum at twice the grid size, for quadrature diagnostics."""
        return LimitingSpectrum(self.h, self.gamma, 2 * self.grid_size)

    def interval_of(self, j: int) -> tuple[float, float]:
        return self.support[self.interval_index[j]]

    # -- export ---------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "f", "g", "density"])
            for x, f, gv, d in zip(
                self.grid, self.f_vals, self.g_vals, self.density_vals
            ):
                writer.writerow(
                    [f"{x:.17g}", f"{f:.17g}", f"{gv:.17g}", f"{d:.17g}"]
                )


def build_limiting_spectrum(
    h: PopulationSpectrum, gamma, grid_size: int = 512
) -> LimitingSpectrum:
    """Solve (gamma, H) on a grid of roughly ``grid_size`` support nodes."""
    return LimitingSpectrum(h, gamma, grid_size)
