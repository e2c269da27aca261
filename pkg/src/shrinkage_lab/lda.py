"""Asymptotic LDA classification error and optimal spectral shrinkage.

For the two-Gaussian model with dense mean difference (Var delta_i =
alpha^2/p) and shrinkage classifier sign(delta_hat' h(Sigma_hat) x), the
misclassification rate converges to Phi(-sqrt(Theta)) with

    Theta(h) = alpha^4 (int h dF)^2 / (alpha^2 M(h^2) + gamma T(h)).

Maximizing Theta over h >= 0 reduces, after fixing int h dF = 1, to a convex
QP in piecewise-constant values of h, assembled from the M and T quadratic
forms.  A relaxation replacing T by M^2 is solved in closed form by an
affine function of x (f^2 + g^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import ConfigError, DomainError, NumericalError
from .functionals import (
    M_functional,
    lp_covariance_shrinker,
    m_quadratic_form,
    m_weight_vector,
    t_quadratic_form,
)
from .shrinkage import ShrinkageFunction
from .spectrum import LimitingSpectrum, PopulationSpectrum, _as_gamma

__all__ = [
    "LdaModelParams",
    "LdaErrorReport",
    "QpSolution",
    "Alpha2Estimate",
    "theta",
    "optimal_shrinkage_qp",
    "relaxed_optimum",
    "mean_shrinker",
    "mean_shrinker_loss",
    "estimate_alpha2",
    "normal_error",
    "lda_error_for",
    "scale_to_unit_mean",
    "covariance_shrinker_normalized",
    "inverted_covariance_shrinker",
]


@dataclass(frozen=True)
class LdaModelParams:
    """Signal scale alpha (Var delta_i = alpha^2/p), aspect ratio, population
    spectrum bounded away from zero; s = alpha^2/gamma is the signal-to-noise
    ratio entering the optimization."""

    alpha: float
    gamma: float
    h: PopulationSpectrum

    def __post_init__(self):
        object.__setattr__(self, "gamma", _as_gamma(self.gamma))
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.h.locations.min() <= 0:
            raise ConfigError("population spectrum must be bounded away from 0")

    @property
    def s(self) -> float:
        return self.alpha**2 / self.gamma


@dataclass(frozen=True)
class LdaErrorReport:
    theta: float
    error: float
    numerator: float
    denom_M: float
    denom_T: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.degenerate:
            ratio = self.numerator / (self.denom_M + self.denom_T)
            if abs(self.theta - ratio) > 1e-12 * max(1.0, abs(self.theta)):
                raise ConfigError("Theta decomposition does not add up")


@dataclass(frozen=True)
class QpSolution:
    h_opt: ShrinkageFunction
    objective: float
    kkt_residual: float
    relaxation_fit: tuple[float, float, float] | None = None
    bound_active: bool = False
    regularized: bool = False


@dataclass(frozen=True)
class Alpha2Estimate:
    """Signal-strength estimate; ``value`` is clamped at zero, ``raw`` keeps
    the possibly negative finite-sample value."""

    value: float
    raw: float
    clamped: bool


def normal_error(theta_value: float) -> float:
    """Phi(-sqrt(theta)): the asymptotic misclassification probability."""
    return 0.5 * float(erfc(np.sqrt(max(theta_value, 0.0)) / np.sqrt(2.0)))


def _check_match(params: LdaModelParams, spec: LimitingSpectrum):
    if abs(params.gamma - spec.gamma) > 1e-12 or params.h.atoms != spec.h.atoms:
        raise ConfigError("spectrum was built for different (gamma, H) than params")


def theta(
    params: LdaModelParams,
    spec: LimitingSpectrum,
    h: ShrinkageFunction,
    check_nonneg: bool = True,
) -> LdaErrorReport:
    """Asymptotic error report for the shrinkage classifier built from h."""
    _check_match(params, spec)
    hv = np.asarray(h(spec.grid), dtype=float)
    h0 = h.at_zero
    if check_nonneg and (np.min(hv) < -1e-12 or h0 < -1e-12):
        raise DomainError("LDA shrinkage function must be nonnegative")

    from .functionals import _m_value, _t_value

    mean_h = spec.integrate_f(hv, h0)
    a2, g = params.alpha**2, params.gamma
    mb, ma = _m_value(spec, hv**2, h0**2)
    denom_m = a2 * (mb + ma)
    tb, ta = _t_value(spec, hv, h0)
    denom_t = g * (tb + ta)
    numerator = a2**2 * mean_h**2
    if numerator <= 1e-300:
        return LdaErrorReport(0.0, 0.5, 0.0, denom_m, denom_t, degenerate=True)
    th = numerator / (denom_m + denom_t)
    return LdaErrorReport(th, normal_error(th), numerator, denom_m, denom_t)


# ---------------------------------------------------------------------------
# optimal shrinkage QP
# ---------------------------------------------------------------------------


def _constraint_vector(spec: LimitingSpectrum) -> np.ndarray:
    """Weights of int h dF over [h(x_j); h(0)] coordinates."""
    nu = spec.f_weights
    if spec.gamma > 1:
        return np.concatenate([nu, [spec.atom0_mass]])
    return nu.copy()


def _floor_psd(q: np.ndarray) -> tuple[np.ndarray, bool]:
    evals, vecs = np.linalg.eigh(q)
    norm = float(np.max(np.abs(evals)))
    if evals[0] < -1e-8 * norm:
        raise NumericalError(
            f"shrinkage quadratic form has eigenvalue {evals[0]:.2e}; "
            "discretization noise should not reach this size"
        )
    if evals[0] >= 0:
        return q, False
    clipped = np.maximum(evals, 0.0)
    return (vecs * clipped) @ vecs.T, True


def _grid_solution(spec, x, family) -> ShrinkageFunction:
    n = spec.grid.size
    at0 = float(x[n]) if spec.gamma > 1 else 0.0
    return ShrinkageFunction.from_grid(spec.grid, x[:n], at0, family=family)


def optimal_shrinkage_qp(
    params: LdaModelParams,
    spec: LimitingSpectrum,
    grid_size: int | None = None,
    s: float | None = None,
) -> QpSolution:
    """Error-optimal shrinkage as a piecewise-constant QP solution.

    Minimizes s M(h^2) + T(h) under int h dF = 1, h >= 0 with s = alpha^2 /
    gamma (overridable for limit studies).  ``grid_size`` rebuilds the
    discretization at a different resolution from the supplied spectrum.
    """
    _check_match(params, spec)
    if grid_size is not None and grid_size < 32:
        raise ConfigError("grid_size must be at least 32")
    if grid_size is not None and grid_size != spec.grid.size:
        spec = LimitingSpectrum(spec.h, spec.gamma, grid_size)
    s_val = params.s if s is None else float(s)

    q = s_val * m_quadratic_form(spec) + t_quadratic_form(spec)
    q, regularized = _floor_psd(q)
    a = _constraint_vector(spec)
    from .qp import solve_qp

    res = solve_qp(q, a, 1.0)
    return QpSolution(
        h_opt=_grid_solution(spec, res.x, "qp_optimal"),
        objective=res.objective,
        kkt_residual=res.kkt_residual,
        bound_active=res.bound_active,
        regularized=regularized,
    )


def relaxed_optimum(params: LdaModelParams, spec: LimitingSpectrum) -> QpSolution:
    """Closed-form optimum of the relaxation M(h^2) + (gamma/alpha^2) M(h)^2.

    The stationarity condition forces h0 = A x (f^2+g^2) - B on the support;
    the constrained minimizer over that affine family is computed exactly.
    The same relaxed program is also solved numerically on the grid and its
    distance to the affine family is reported in ``relaxation_fit``.
    """
    _check_match(params, spec)
    if params.gamma >= 1:
        raise DomainError("the analytic relaxation is stated for gamma < 1")

    mu = m_weight_vector(spec)
    nu = spec.f_weights
    phi1 = spec.grid * spec.abs_m2
    ones = np.ones_like(phi1)
    rho = params.gamma / params.alpha**2

    # constrained minimum over h = A phi1 - B via the 3x3 KKT system; lstsq
    # covers the degenerate Sigma = I case where phi1 is constant and the
    # affine family collapses to the constants
    design = np.column_stack([phi1, -ones])
    p_mat = design.T @ (mu[:, None] * design)
    q_vec = design.T @ mu
    c_vec = design.T @ nu
    kkt = np.zeros((3, 3))
    kkt[:2, :2] = 2.0 * (p_mat + rho * np.outer(q_vec, q_vec))
    kkt[:2, 2] = -c_vec
    kkt[2, :2] = c_vec
    rhs = np.array([0.0, 0.0, 1.0])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if not np.all(np.isfinite(sol)) or abs(c_vec @ sol[:2] - 1.0) > 1e-8:
        raise NumericalError("relaxation KKT system could not be solved")
    a_star, b_star = float(sol[0]), float(sol[1])
    h_vals = a_star * phi1 - b_star
    m_h2 = float(h_vals @ (mu * h_vals))
    m_h = float(mu @ h_vals)
    obj_star = m_h2 + rho * m_h**2

    # numeric solution of the same relaxed program on the grid
    q = np.diag(mu) + rho * np.outer(mu, mu)
    from .qp import kkt_residual, solve_qp

    res = solve_qp(q, nu, 1.0)
    basis = np.column_stack([phi1, ones])
    scaled = np.sqrt(nu)[:, None] * basis
    coef, *_ = np.linalg.lstsq(scaled, np.sqrt(nu) * res.x, rcond=None)
    fit_resid = float(np.sqrt(nu @ (res.x - basis @ coef) ** 2))

    h_closed = np.column_stack([phi1, ones]) @ np.array([a_star, -b_star])
    kkt = kkt_residual(q, nu, np.maximum(h_closed, 0.0), 1.0)
    return QpSolution(
        h_opt=ShrinkageFunction.from_grid(
            spec.grid, h_vals, 0.0, family="relaxed_optimal",
            params={"A": a_star, "B": b_star},
        ),
        objective=obj_star,
        kkt_residual=kkt,
        relaxation_fit=(float(a_star), float(b_star), fit_resid),
        bound_active=bool(np.min(h_vals) <= 0),
    )


# ---------------------------------------------------------------------------
# mean estimation
# ---------------------------------------------------------------------------


def mean_shrinker(params: LdaModelParams, spec: LimitingSpectrum) -> ShrinkageFunction:
    """Optimal multiplier r(Sigma_hat) for shrinking the sample mean
    difference: r(x) = s / (s + 1/(x (f^2+g^2))) with s = alpha^2/gamma."""
    _check_match(params, spec)
    s = params.s
    vals = s / (s + 1.0 / (spec.grid * spec.abs_m2))
    if spec.gamma > 1:
        at0 = s / (s + 1.0 / ((spec.gamma - 1.0) * spec.m0))
    else:
        at0 = 0.0
    return ShrinkageFunction.from_grid(
        spec.grid, vals, at0, family="mean_shrinker",
        params={"alpha": params.alpha, "gamma": params.gamma},
    )


def mean_shrinker_loss(
    params: LdaModelParams, spec: LimitingSpectrum, r: ShrinkageFunction
) -> float:
    """Asymptotic squared error gamma M(r^2) + alpha^2 int (r-1)^2 dF of the
    shrunk mean estimate."""
    _check_match(params, spec)
    rv = np.asarray(r(spec.grid), dtype=float)
    r0 = r.at_zero
    m_r2 = M_functional(
        spec,
        ShrinkageFunction.from_grid(spec.grid, rv**2, r0**2),
        diagnostics=False,
    ).value
    penalty = spec.integrate_f((rv - 1.0) ** 2, (r0 - 1.0) ** 2)
    return params.gamma * m_r2 + params.alpha**2 * penalty


def estimate_alpha2(
    delta_hat_norm2: float, trace_sample_cov: float, n: int
) -> Alpha2Estimate:
    """alpha^2 estimate ||delta_hat||^2 - tr(Sigma_hat)/n, clamped at zero."""
    if n <= 0:
        raise ConfigError("n must be positive")
    raw = float(delta_hat_norm2) - float(trace_sample_cov) / float(n)
    if raw < 0:
        return Alpha2Estimate(0.0, raw, True)
    return Alpha2Estimate(raw, raw, False)


def lda_error_for(params: LdaModelParams, spec: LimitingSpectrum,
                  h: ShrinkageFunction) -> float:
    """Convenience: asymptotic misclassification probability for h."""
    return theta(params, spec, h).error


def scale_to_unit_mean(spec: LimitingSpectrum, h: ShrinkageFunction) -> ShrinkageFunction:
    """Rescale h so that int h dF = 1 (Theta is invariant to this)."""
    hv = np.asarray(h(spec.grid), dtype=float)
    total = spec.integrate_f(hv, h.at_zero)
    if abs(total) < 1e-300:
        raise DomainError("cannot normalize a shrinkage function with zero mean")
    return ShrinkageFunction.from_grid(
        spec.grid, hv / total, h.at_zero / total, family=h.family, params=h.params
    )


def covariance_shrinker_normalized(spec: LimitingSpectrum) -> ShrinkageFunction:
    return scale_to_unit_mean(spec, lp_covariance_shrinker(spec))


def inverted_covariance_shrinker(spec: LimitingSpectrum) -> ShrinkageFunction:
    """Classifier matrix from the covariance-estimation pipeline: shrink the
    sample covariance toward Sigma and invert, giving h(x) = x (f^2+g^2)."""
    vals = spec.grid * spec.abs_m2
    at0 = (spec.gamma - 1.0) * spec.m0 if spec.gamma > 1 else 0.0
    return ShrinkageFunction.from_grid(
        spec.grid, vals, at0, family="lp_covariance_inverted"
    )
