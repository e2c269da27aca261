"""Asymptotic prediction risk and learning curves for shrinkage regression.

The out-of-sample risk of an estimator built by applying a scalar function h
to the singular values of the design converges to

    1 + int [a^2 (sqrt(x) h - 1)^2 + gamma h^2] g / (gamma pi x (f^2+g^2)) dx
      + (a^2 + gamma h(0)^2) / (gamma m_comp(0))   [gamma > 1],

where a is the signal scale.  Gradient descent for time t on the ridge
objective corresponds to h(x; t, lam) = (1 - exp(-t(x+lam))) sqrt(x)/(x+lam),
which yields learning curves in t; the training error follows from the same
spectral data via the companion measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DomainError
from .functionals import m_weight_vector
from .shrinkage import ShrinkageFunction
from .spectrum import LimitingSpectrum, PopulationSpectrum, _as_gamma

__all__ = [
    "RegressionModelParams",
    "RiskReport",
    "LearningCurve",
    "predicted_test_risk",
    "gd_shrinkage",
    "learning_curve",
    "closed_form_identity_curve",
    "check_overregularized_monotone",
    "optimal_stopping_time",
    "early_stopping_comparison",
    "default_time_grid",
]


@dataclass(frozen=True)
class RegressionModelParams:
    """Signal scale alpha (Var w_i = alpha^2/p), aspect ratio and population
    spectrum; noise variance is fixed at 1."""

    alpha: float
    gamma: float
    h: PopulationSpectrum

    def __post_init__(self):
        object.__setattr__(self, "gamma", _as_gamma(self.gamma))
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")

    @property
    def optimal_ridge(self) -> float:
        """The risk-optimal ridge parameter gamma / alpha^2."""
        if self.alpha == 0:
            raise DomainError("optimal ridge parameter is undefined for alpha=0")
        return self.gamma / self.alpha**2


@dataclass(frozen=True)
class RiskReport:
    """Asymptotic out-of-sample risk and its decomposition."""

    test_risk: float
    bias_integral: float
    variance_integral: float
    atom_term: float

    def __post_init__(self):
        total = 1.0 + self.bias_integral + self.variance_integral + self.atom_term
        if abs(self.test_risk - total) > 1e-12:
            raise ConfigError("risk decomposition does not add up")


@dataclass(frozen=True)
class LearningCurve:
    """Predicted test risk and training error along a time grid."""

    lam: float
    times: np.ndarray
    test_risk: np.ndarray
    train_error: np.ndarray
    meta: dict = field(default_factory=dict)


def _check_match(params: RegressionModelParams, spec: LimitingSpectrum):
    if abs(params.gamma - spec.gamma) > 1e-12 or params.h.atoms != spec.h.atoms:
        raise ConfigError("spectrum was built for different (gamma, H) than params")


def predicted_test_risk(
    params: RegressionModelParams, spec: LimitingSpectrum, h: ShrinkageFunction
) -> RiskReport:
    """Asymptotic out-of-sample prediction risk of the h-shrinkage estimator."""
    _check_match(params, spec)
    mu = m_weight_vector(spec)
    x = spec.grid
    hv = np.asarray(h(x), dtype=float)
    h0 = h.at_zero
    a2, g = params.alpha**2, spec.gamma
    bias = a2 * float(mu @ (np.sqrt(x) * hv - 1.0) ** 2)
    var = g * float(mu @ hv**2)
    atom = (a2 + g * h0**2) / (g * spec.m0) if g > 1 else 0.0
    return RiskReport(1.0 + bias + var + atom, bias, var, atom)


def gd_shrinkage(t: float, lam: float) -> ShrinkageFunction:
    """Shrinkage equivalent of gradient descent run for time t with ridge
    penalty lam; t=0 is the zero estimator and t -> oo recovers ridge(lam)."""
    if t < 0 or lam < 0:
        raise ConfigError("t and lam must be nonnegative")
    if t == 0:
        return ShrinkageFunction.zero()
    return ShrinkageFunction.gradient_flow(t, lam)


def _train_error_curve(params, spec, lam, times):
    """Prop-style training error: integral against the companion measure plus
    the alpha^2-weighted integral against F itself."""
    x = spec.grid
    times = np.asarray(times, dtype=float)
    s = x + lam
    # bracket(t, x) = x/(x+lam) (1 - e^{-t s}) - 1
    br = (x / s)[None, :] * (-np.expm1(-np.outer(times, s))) - 1.0
    comp_w = spec.companion_weights
    f_w = spec.f_weights
    term_comp = br**2 @ comp_w + spec.companion_atom0  # bracket at x=0 is -1
    term_f = params.alpha**2 * (br**2 @ (f_w * x))
    return term_comp + term_f


def learning_curve(
    params: RegressionModelParams,
    spec: LimitingSpectrum,
    lam: float,
    times,
) -> LearningCurve:
    """Test risk and training error of gradient descent across ``times``."""
    _check_match(params, spec)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise ConfigError("times must be strictly increasing")
    if lam < 0:
        raise ConfigError("lam must be nonnegative")

    mu = m_weight_vector(spec)
    x = spec.grid
    a2, g = params.alpha**2, spec.gamma
    s = x + lam
    hmat = np.sqrt(x)[None, :] * (-np.expm1(-np.outer(times, s))) / s[None, :]
    bias = a2 * ((np.sqrt(x)[None, :] * hmat - 1.0) ** 2 @ mu)
    var = g * (hmat**2 @ mu)
    atom = a2 / (g * spec.m0) if g > 1 else 0.0  # h(0)=0 for this family
    risks = 1.0 + bias + var + atom
    train = _train_error_curve(params, spec, lam, times)
    return LearningCurve(float(lam), times, risks, train)


def default_time_grid(t_min: float = 1e-2, t_max: float = 1e3,
                      count: int = 40) -> np.ndarray:
    return np.geomspace(t_min, t_max, count)


# ---------------------------------------------------------------------------
# closed-form identity-covariance curve (independent of the spectrum solver)
# ---------------------------------------------------------------------------


def _mp_density_integral(fn, gamma: float) -> float:
    """Integrate fn against the closed-form MP density via the substitution
    x = c + r cos(theta), which absorbs the square-root edge factors."""
    a = (1.0 - np.sqrt(gamma)) ** 2
    b = (1.0 + np.sqrt(gamma)) ** 2
    c, r = 0.5 * (a + b), 0.5 * (b - a)

    def integrand(theta):
        x = c - r * np.cos(theta)
        return fn(x) * (r * np.sin(theta)) ** 2 / (2.0 * np.pi * gamma * x)

    val, _ = quad(integrand, 0.0, np.pi, limit=200, epsabs=1e-12, epsrel=1e-12)
    return val


def closed_form_identity_curve(alpha: float, gamma, times) -> LearningCurve:
    """Unregularized (lam=0) identity-covariance learning curve from the
    closed-form limiting density; the gamma > 1 point mass contributes
    alpha^2 (1 - 1/gamma)."""
    g = _as_gamma(gamma)
    times = np.asarray(times, dtype=float)
    a2 = alpha**2
    risks = np.empty_like(times)
    for i, t in enumerate(times):
        def fn(x, t=t):
            decay = np.exp(-t * x)
            growth = (-np.expm1(-t * x)) ** 2 / x if x > 0 else 0.0
            return a2 * decay**2 + g * growth

        bulk = _mp_density_integral(fn, g)
        atom = a2 * max(1.0 - 1.0 / g, 0.0)
        risks[i] = 1.0 + bulk + atom
    train = np.full_like(times, np.nan)
    return LearningCurve(0.0, times, risks, train, meta={"closed_form": True})


def check_overregularized_monotone(
    params: RegressionModelParams,
    spec: LimitingSpectrum,
    lam: float,
    times,
    enforce_precondition: bool = True,
) -> tuple[bool, float]:
    """Check that the risk curve is non-increasing, as it must be for
    lam >= gamma/alpha^2.  Returns (monotone, max increase)."""
    if enforce_precondition and lam < params.optimal_ridge - 1e-12:
        raise DomainError(
            f"lam={lam} is below gamma/alpha^2={params.optimal_ridge}; "
            "monotonicity is not guaranteed there"
        )
    curve = learning_curve(params, spec, lam, times)
    increases = np.diff(curve.test_risk)
    max_violation = float(max(increases.max(initial=-np.inf), 0.0))
    return max_violation <= 1e-8, max_violation


def optimal_stopping_time(
    params: RegressionModelParams,
    spec: LimitingSpectrum,
    lam: float,
    log_t_bounds: tuple[float, float] = (-3.0, 8.0),
) -> tuple[float, float]:
    """(t*, risk(t*)) minimizing the predicted risk over log-spaced time."""

    def risk_at(log_t):
        h = gd_shrinkage(float(np.exp(log_t)), lam)
        return predicted_test_risk(params, spec, h).test_risk

    res = minimize_scalar(risk_at, bounds=log_t_bounds, method="bounded",
                          options={"xatol": 1e-8})
    return float(np.exp(res.x)), float(res.fun)


def early_stopping_comparison(
    params: RegressionModelParams,
    spec: LimitingSpectrum,
    lambdas,
) -> list[dict]:
    """Fully trained (t -> oo) vs optimally early-stopped risk per lambda."""
    rows = []
    for lam in np.asarray(lambdas, dtype=float):
        full = predicted_test_risk(params, spec, ShrinkageFunction.ridge(lam))
        t_star, risk_star = optimal_stopping_time(params, spec, lam)
        rows.append(
            {
                "lambda": float(lam),
                "risk_full": full.test_risk,
                "risk_early": risk_star,
                "t_star": t_star,
            }
        )
    return rows
