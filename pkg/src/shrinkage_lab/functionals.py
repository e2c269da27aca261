"""Limiting trace functionals of shrunk sample covariance matrices.

Given a solved LimitingSpectrum, this module evaluates

* ``M_functional``:  lim p^{-1} tr(Sigma h(S_n)),
* ``T_functional``:  lim p^{-1} tr(Sigma h(S_n) Sigma h(S_n)),
* ``two_resolvent_limit``:  lim p^{-1} tr(Sigma (S_n-z1)^{-1} Sigma (S_n-z2)^{-1}),
* ``kernel_K``: the continuous off-diagonal kernel entering T,

plus the Frobenius-optimal covariance shrinker and the precision-loss
shrinker built from the boundary values f, g.

The bulk parts are quadratures over the spectrum grid; for gamma > 1 the
point mass at zero contributes closed-form terms in m_comp(0), m_comp'(0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .shrinkage import ShrinkageFunction
from .spectrum import LimitingSpectrum, _atom_sum_sq, _boundary_grid

__all__ = [
    "FunctionalValue",
    "M_functional",
    "T_functional",
    "T_bilinear",
    "two_resolvent_limit",
    "kernel_K",
    "lp_covariance_shrinker",
    "lp_precision_shrinker",
    "m_weight_vector",
    "t_quadratic_form",
    "m_quadratic_form",
]


@dataclass(frozen=True)
class FunctionalValue:
    """Functional value with its bulk/atom split and a refinement-based
    quadrature error estimate (``flagged`` when the estimate is not small
    relative to the value)."""

    value: float
    bulk_term: float
    atom_term: float
    error_estimate: float
    flagged: bool


def _cache(spec: LimitingSpectrum) -> dict:
    cache = getattr(spec, "_functionals_cache", None)
    if cache is None:
        cache = {}
        spec._functionals_cache = cache
    return cache


def _h_on(spec: LimitingSpectrum, h: ShrinkageFunction):
    vals = np.asarray(h(spec.grid), dtype=float)
    if not np.all(np.isfinite(vals)) or not np.isfinite(h.at_zero):
        raise DomainError("shrinkage function is not finite on the support grid")
    return vals, float(h.at_zero)


def m_weight_vector(spec: LimitingSpectrum) -> np.ndarray:
    """Quadrature weights for the bulk of M: g / (gamma pi x (f^2+g^2)) dx."""
    cache = _cache(spec)
    if "m_weights" not in cache:
        cache["m_weights"] = spec.quad_weights * spec.g_vals / (
            spec.gamma * np.pi * spec.grid * spec.abs_m2
        )
    return cache["m_weights"]


def _m_value(spec, hvals, h0):
    bulk = float(m_weight_vector(spec) @ hvals)
    atom = h0 / (spec.gamma * spec.m0) if spec.gamma > 1 else 0.0
    return bulk, atom


def M_functional(spec: LimitingSpectrum, h: ShrinkageFunction,
                 diagnostics: bool = True) -> FunctionalValue:
    """Limit of p^{-1} tr(Sigma h(S_n))."""
    hvals, h0 = _h_on(spec, h)
    bulk, atom = _m_value(spec, hvals, h0)
    value = bulk + atom
    err, flagged = 0.0, False
    if diagnostics:
        ref = spec.refined
        rb, ra = _m_value(ref, np.asarray(h(ref.grid), dtype=float), h0)
        err = abs(value - (rb + ra))
        flagged = err > 1e-6 * abs(value) + 1e-9
    return FunctionalValue(value, bulk, atom, err, flagged)


# ---------------------------------------------------------------------------
# kernel K and the T functional
# ---------------------------------------------------------------------------


def _kernel_from_parts(x, fx, gx, y, fy, gy, gamma):
    """K(x, y) in divided-difference form.

    With phi = f/(f^2+g^2), the two displayed terms combine into
    K = -g(x) g(y) (1 + 2 dphi) / (gamma pi^2 x y A B),
    where dphi = (phi(y)-phi(x))/(y-x); the diagonal is the removable limit.
    """
    ax = fx * fx + gx * gx
    ay = fy * fy + gy * gy
    phix, phiy = fx / ax, fy / ay
    dphi = (phiy - phix) / (y - x)
    return -gx * gy * (1.0 + 2.0 * dphi) / (gamma * np.pi**2 * x * y * ax * ay)


def kernel_K(spec: LimitingSpectrum, x: float, y: float) -> float:
    """Continuous kernel of the double integral in T, evaluated pointwise."""
    if x == y:
        raise DomainError("kernel_K requires x != y; the diagonal is a limit")
    fg = _boundary_grid(spec.h, spec.gamma, np.array([x, y]))
    fx, gx = fg[0][0], fg[1][0]
    fy, gy = fg[0][1], fg[1][1]
    return float(_kernel_from_parts(x, fx, gx, y, fy, gy, spec.gamma))


def _kernel_matrix(spec: LimitingSpectrum) -> np.ndarray:
    """K(x_j, x_k) on the grid; diagonal by symmetric finite difference."""
    cache = _cache(spec)
    if "kernel" in cache:
        return cache["kernel"]
    x, f, g = spec.grid, spec.f_vals, spec.g_vals
    n = x.size
    with np.errstate(divide="ignore", invalid="ignore"):
        K = _kernel_from_parts(
            x[:, None], f[:, None], g[:, None], x[None, :], f[None, :],
            g[None, :], spec.gamma,
        )

    # diagonal: removable singularity; average K(x, x +/- delta), delta capped
    # by the distance to the containing interval's edges
    widths = np.array([hi - lo for lo, hi in spec.support])
    w_at = widths[spec.interval_index]
    lo_at = np.array([lo for lo, _ in spec.support])[spec.interval_index]
    hi_at = np.array([hi for _, hi in spec.support])[spec.interval_index]
    delta = np.minimum(1e-5 * w_at, 0.45 * np.minimum(x - lo_at, hi_at - x))
    fp, gp = _boundary_grid(spec.h, spec.gamma, x + delta)
    fm, gm = _boundary_grid(spec.h, spec.gamma, x - delta)
    kp = _kernel_from_parts(x, f, g, x + delta, fp, gp, spec.gamma)
    km = _kernel_from_parts(x, f, g, x - delta, fm, gm, spec.gamma)
    K[np.arange(n), np.arange(n)] = 0.5 * (kp + km)
    cache["kernel"] = K
    return K


def _t_parts(spec: LimitingSpectrum):
    """(diagonal weights, weighted kernel matrix, atom pieces) for T."""
    cache = _cache(spec)
    if "t_parts" in cache:
        return cache["t_parts"]
    x, g, w = spec.grid, spec.g_vals, spec.quad_weights
    a2 = spec.abs_m2
    gamma = spec.gamma
    diag = w * g / (gamma * np.pi * x**2 * a2**2)
    kernel = _kernel_matrix(spec) * np.outer(w, w)
    if gamma > 1:
        m0, m0p = spec.m0, spec.m0_prime
        quad0 = (m0p / m0**4 - 1.0 / m0**2) / gamma
        u_coef = (a2 - 2.0 * spec.f_vals * m0 - x * m0 * a2) * g / (
            np.pi * x**2 * a2**2
        )
        cross = w * u_coef / (gamma * m0**2)
    else:
        quad0, cross = 0.0, None
    cache["t_parts"] = (diag, kernel, quad0, cross)
    return cache["t_parts"]


def _t_value(spec, hvals, h0):
    diag, kernel, quad0, cross = _t_parts(spec)
    bulk = float(diag @ hvals**2) + float(hvals @ kernel @ hvals)
    atom = 0.0
    if spec.gamma > 1:
        atom = quad0 * h0**2 + 2.0 * h0 * float(cross @ hvals)
    return bulk, atom


def T_functional(spec: LimitingSpectrum, h: ShrinkageFunction,
                 diagnostics: bool = True) -> FunctionalValue:
    """Limit of p^{-1} tr(Sigma h(S_n) Sigma h(S_n))."""
    hvals, h0 = _h_on(spec, h)
    bulk, atom = _t_value(spec, hvals, h0)
    value = bulk + atom
    err, flagged = 0.0, False
    if diagnostics:
        ref = spec.refined
        rb, ra = _t_value(ref, np.asarray(h(ref.grid), dtype=float), h0)
        err = abs(value - (rb + ra))
        flagged = err > 1e-6 * abs(value) + 1e-9
    return FunctionalValue(value, bulk, atom, err, flagged)


def T_bilinear(spec: LimitingSpectrum, h1: ShrinkageFunction,
               h2: ShrinkageFunction) -> float:
    """Polarized bilinear form T(h1, h2) with T(h, h) = T_functional(h)."""
    v1, a1 = _h_on(spec, h1)
    v2, a2 = _h_on(spec, h2)
    diag, kernel, quad0, cross = _t_parts(spec)
    val = float(diag @ (v1 * v2)) + float(v1 @ kernel @ v2)
    if spec.gamma > 1:
        val += quad0 * a1 * a2 + float(cross @ (a1 * v2 + a2 * v1))
    return val


def t_quadratic_form(spec: LimitingSpectrum) -> np.ndarray:
    """T as a symmetric quadratic form over [h(x_1..x_N), h(0)].

    The h(0) coordinate is present only for gamma > 1.
    """
    diag, kernel, quad0, cross = _t_parts(spec)
    n = spec.grid.size
    if spec.gamma > 1:
        q = np.zeros((n + 1, n + 1))
        q[:n, :n] = kernel
        q[np.arange(n), np.arange(n)] += diag
        q[n, n] = quad0
        q[:n, n] = cross
        q[n, :n] = cross
    else:
        q = kernel.copy()
        q[np.arange(n), np.arange(n)] += diag
    return 0.5 * (q + q.T)


def m_quadratic_form(spec: LimitingSpectrum) -> np.ndarray:
    """M(h^2) as a diagonal quadratic form over [h(x_1..x_N), h(0)]."""
    mu = m_weight_vector(spec)
    if spec.gamma > 1:
        return np.diag(np.concatenate([mu, [1.0 / (spec.gamma * spec.m0)]]))
    return np.diag(mu)


# ---------------------------------------------------------------------------
# two-resolvent limit
# ---------------------------------------------------------------------------


def _companion_at(spec: LimitingSpectrum, z: complex) -> complex:
    from .spectrum import solve_stieltjes

    if z.imag > 0:
        return solve_stieltjes(spec.h, spec.gamma, z)[1]
    # Schwarz reflection for lower half-plane arguments
    return np.conj(solve_stieltjes(spec.h, spec.gamma, np.conj(z))[1])


def two_resolvent_limit(spec: LimitingSpectrum, z1: complex, z2: complex) -> complex:
    """Limit of p^{-1} tr(Sigma (S_n - z1)^{-1} Sigma (S_n - z2)^{-1})."""
    z1, z2 = complex(z1), complex(z2)
    if z1.imag == 0 or z2.imag == 0:
        raise DomainError("two_resolvent_limit requires nonreal z1, z2")
    g = spec.gamma
    mb1 = _companion_at(spec, z1)
    mb2 = _companion_at(spec, z2)
    if abs(z1 - z2) < 1e-8:
        # divided difference degenerates; use m_comp'(z) = 1/z'(m_comp(z))
        t, w = spec.h.locations, spec.h.weights
        zp = 1.0 / mb1**2 - g * complex(_atom_sum_sq(np.array([mb1]), t, w)[0])
        dd = 1.0 / zp
    else:
        dd = (mb2 - mb1) / (z2 - z1)
    return -1.0 / (g * z1 * z2 * mb1 * mb2) + dd / (g * z1 * z2 * mb1**2 * mb2**2)


# ---------------------------------------------------------------------------
# optimal shrinkers from the boundary values
# ---------------------------------------------------------------------------


def lp_covariance_shrinker(spec: LimitingSpectrum) -> ShrinkageFunction:
    """Frobenius-optimal covariance shrinker h(x) = 1/(x (f^2+g^2)), with
    h(0) = 1/((gamma-1) m_comp(0)) when gamma > 1."""
    vals = 1.0 / (spec.grid * spec.abs_m2)
    at0 = 1.0 / ((spec.gamma - 1.0) * spec.m0) if spec.gamma > 1 else 0.0
    return ShrinkageFunction.from_grid(spec.grid, vals, at0, family="lp_covariance")


def lp_precision_shrinker(spec: LimitingSpectrum) -> ShrinkageFunction:
    """Frobenius-optimal precision shrinker h(x) = (gamma - 1 - 2 x f(x))/x."""
    if spec.support[0][0] <= 1e-10:
        raise DomainError("precision shrinker needs support bounded away from 0")
    vals = (spec.gamma - 1.0 - 2.0 * spec.grid * spec.f_vals) / spec.grid
    return ShrinkageFunction.from_grid(spec.grid, vals, 0.0, family="lp_precision")


def frobenius_covariance_loss(spec: LimitingSpectrum, h: ShrinkageFunction) -> float:
    """Asymptotic p^{-1} ||Sigma - h(S_n)||_F^2."""
    hvals, h0 = _h_on(spec, h)
    second_moment = spec.h.moment(2)
    hsq = spec.integrate_f(hvals**2, h0**2)
    mbulk, matom = _m_value(spec, hvals, h0)
    return second_moment + hsq - 2.0 * (mbulk + matom)
