"""Finite-sample simulation for regression and LDA shrinkage estimators.

Draws are deterministic functions of (config, replicate): replicate r uses
the counter-based Philox generator keyed by seed XOR r, so runs are
reproducible bit for bit regardless of execution order.

The regression estimator applies h to the squared singular values of the
scaled design; conditional (noise-free) test risk is computed exactly from
the true covariance.  The LDA path evaluates the exact per-draw conditional
misclassification probability instead of classifying sampled test points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigError, DomainError
from .shrinkage import ShrinkageFunction
from .spectrum import PopulationSpectrum

__all__ = [
    "SigmaSpec",
    "ExperimentConfig",
    "SigmaModel",
    "SimulationDraw",
    "LdaDraw",
    "EmpiricalSpectrumEstimate",
    "generate_regression_draw",
    "empirical_regression_risk",
    "generate_lda_draw",
    "empirical_lda_error",
    "empirical_lda_error_stats",
    "empirical_frobenius_loss",
    "sample_covariance_eigenvalues",
    "kernel_estimate_fg",
    "default_bandwidth",
]


@dataclass(frozen=True)
class SigmaSpec:
    """Population covariance construction: either a diagonal matrix filled
    from spectrum atoms, or the autoregressive Toeplitz Sigma_ij = rho^|i-j|."""

    kind: str  # "diagonal_atoms" | "toeplitz_ar"
    h: PopulationSpectrum | None = None
    rho: float | None = None

    def __post_init__(self):
        if self.kind == "diagonal_atoms":
            if self.h is None:
                raise ConfigError("diagonal_atoms requires a population spectrum")
        elif self.kind == "toeplitz_ar":
            if self.rho is None or not (0.0 < self.rho < 1.0):
                raise ConfigError("toeplitz_ar requires rho in (0, 1)")
        else:
            raise ConfigError(f"unknown sigma spec kind {self.kind!r}")

    @classmethod
    def from_atoms(cls, h: PopulationSpectrum) -> "SigmaSpec":
        return cls("diagonal_atoms", h=h)

    @classmethod
    def toeplitz_ar(cls, rho: float) -> "SigmaSpec":
        return cls("toeplitz_ar", rho=rho)


@dataclass(frozen=True)
class ExperimentConfig:
    p: int
    n: int
    alpha: float
    sigma: SigmaSpec
    z_dist: str = "gaussian"
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        if self.p < 2 or self.n < 2:
            raise ConfigError("p and n must be at least 2")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.z_dist not in ("gaussian", "rademacher"):
            raise ConfigError("z_dist must be 'gaussian' or 'rademacher'")
        if self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")

    @property
    def gamma_n(self) -> float:
        return self.p / self.n


class SigmaModel:
    """Realized covariance at dimension p with its square root and spectrum."""

    def __init__(self, spec: SigmaSpec, p: int):
        self.spec = spec
        self.p = p
        if spec.kind == "diagonal_atoms":
            self.diag = _diagonal_from_atoms(spec.h, p)
            self.sqrt_diag = np.sqrt(self.diag)
            self._dense = None
            self.eigenvalues = np.sort(self.diag)
        else:
            sigma = toeplitz(spec.rho ** np.arange(p))
            evals, evecs = np.linalg.eigh(sigma)
            evals = np.maximum(evals, 0.0)
            self._dense = sigma
            self._sqrt_factor = (evecs * np.sqrt(evals)) @ evecs.T
            self.diag = None
            self.eigenvalues = evals

    @property
    def is_diagonal(self) -> bool:
        return self.diag is not None

    def population_spectrum(self) -> PopulationSpectrum:
        """Equal-weight discretization fed to the limiting-spectrum engine."""
        return PopulationSpectrum.from_eigenvalues(self.eigenvalues)

    def sqrt_apply(self, z: np.ndarray) -> np.ndarray:
        if self.is_diagonal:
            return self.sqrt_diag[:, None] * z
        return self._sqrt_factor @ z

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self.is_diagonal:
            return self.diag * v if v.ndim == 1 else self.diag[:, None] * v
        return self._dense @ v

    def quad_form(self, v: np.ndarray) -> float:
        """v' Sigma v."""
        return float(v @ self.apply(v))

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))


def _diagonal_from_atoms(h: PopulationSpectrum, p: int) -> np.ndarray:
    """floor(w_i p) copies of each atom; the remainder goes to the heaviest."""
    locs, wts = h.locations, h.weights
    counts = np.floor(wts * p).astype(int)
    counts[int(np.argmax(wts))] += p - counts.sum()
    return np.repeat(locs, counts)


def _rng_for(config: ExperimentConfig, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=config.seed ^ replicate))


def _draw_z(rng, p, n, z_dist):
    if z_dist == "gaussian":
        return rng.standard_normal((p, n))
    return rng.choice(np.array([-1.0, 1.0]), size=(p, n))


@dataclass
class SimulationDraw:
    """One regression draw with the singular system of X/sqrt(n)."""

    config: ExperimentConfig
    replicate: int
    sigma: SigmaModel
    X: np.ndarray
    w: np.ndarray
    eps: np.ndarray
    y: np.ndarray
    u: np.ndarray  # p x k left singular vectors
    sqrt_lambda: np.ndarray  # k singular values of X/sqrt(n)
    vt: np.ndarray  # k x n right singular vectors

    @property
    def eigenvalues(self) -> np.ndarray:
        """Nonzero eigenvalues of the sample covariance X X'/n."""
        return self.sqrt_lambda**2

    def reconstruction_error(self) -> float:
        approx = (self.u * self.sqrt_lambda) @ self.vt
        return float(np.max(np.abs(approx - self.X / np.sqrt(self.config.n))))


def generate_regression_draw(config: ExperimentConfig, replicate: int = 0,
                             sigma_model: SigmaModel | None = None) -> SimulationDraw:
    """y = X'w + eps with X = Sigma^{1/2} Z; deterministic given (seed, r)."""
    rng = _rng_for(config, replicate)
    sigma = sigma_model or SigmaModel(config.sigma, config.p)
    z = _draw_z(rng, config.p, config.n, config.z_dist)
    w = rng.normal(0.0, config.alpha / np.sqrt(config.p), config.p)
    eps = rng.standard_normal(config.n)
    x = sigma.sqrt_apply(z)
    y = x.T @ w + eps
    u, s, vt = np.linalg.svd(x / np.sqrt(config.n), full_matrices=False)
    return SimulationDraw(config, replicate, sigma, x, w, eps, y, u, s, vt)


def sample_covariance_eigenvalues(
    config: ExperimentConfig, replicate: int = 0,
    sigma_model: SigmaModel | None = None,
) -> np.ndarray:
    """Eigenvalues of X X'/n for one draw, skipping the SVD of the design.

    Uses the same RNG stream as generate_regression_draw, so the eigenvalues
    match that draw's squared singular values (plus explicit zeros if p > n).
    """
    rng = _rng_for(config, replicate)
    sigma = sigma_model or SigmaModel(config.sigma, config.p)
    z = _draw_z(rng, config.p, config.n, config.z_dist)
    x = sigma.sqrt_apply(z)
    s = x @ x.T / config.n
    return np.maximum(np.linalg.eigvalsh(s), 0.0)


def empirical_regression_risk(
    draw: SimulationDraw, h: ShrinkageFunction
) -> tuple[float, float]:
    """(conditional test risk, training error) of the h-shrinkage estimator.

    w_hat = sum_i h(lambda_i) u_i v_i' y / sqrt(n) over the realized singular
    pairs; null directions (p > n) receive no update.  The test risk is the
    exact conditional value 1 + (w_hat - w)' Sigma (w_hat - w).
    """
    cfg = draw.config
    hvals = np.asarray(h(draw.eigenvalues), dtype=float)
    coeff = hvals * (draw.vt @ draw.y) / np.sqrt(cfg.n)
    w_hat = draw.u @ coeff
    diff = w_hat - draw.w
    test_risk = 1.0 + draw.sigma.quad_form(diff)
    resid = draw.y - draw.X.T @ w_hat
    train_error = float(resid @ resid) / cfg.n
    return test_risk, train_error


# ---------------------------------------------------------------------------
# LDA draws
# ---------------------------------------------------------------------------


@dataclass
class LdaDraw:
    """Two-class Gaussian draw with the class-mean and within-class moments."""

    config: ExperimentConfig
    replicate: int
    sigma: SigmaModel
    X: np.ndarray
    labels: np.ndarray
    delta: np.ndarray
    delta_hat: np.ndarray
    sigma_hat: np.ndarray = field(repr=False)

    @cached_property
    def sigma_hat_eig(self) -> tuple[np.ndarray, np.ndarray]:
        evals, evecs = np.linalg.eigh(self.sigma_hat)
        return np.maximum(evals, 0.0), evecs

    def apply_shrunk(self, h: ShrinkageFunction, v: np.ndarray) -> np.ndarray:
        """h(Sigma_hat) @ v via the eigendecomposition."""
        evals, evecs = self.sigma_hat_eig
        return evecs @ (np.asarray(h(evals)) * (evecs.T @ v))


def generate_lda_draw(config: ExperimentConfig, replicate: int = 0,
                      sigma_model: SigmaModel | None = None) -> LdaDraw:
    """x_i = Sigma^{1/2} z_i + delta y_i with the first half labeled +1.

    delta_hat is the (1/n)-scaled class-mean difference; sigma_hat the
    label-centered within-class covariance.
    """
    if config.n % 2 != 0:
        raise ConfigError("LDA draws need an even sample count")
    if config.z_dist != "gaussian":
        raise ConfigError("the LDA model requires gaussian classes")
    rng = _rng_for(config, replicate)
    sigma = sigma_model or SigmaModel(config.sigma, config.p)
    z = _draw_z(rng, config.p, config.n, config.z_dist)
    delta = rng.normal(0.0, config.alpha / np.sqrt(config.p), config.p)
    labels = np.concatenate([np.ones(config.n // 2), -np.ones(config.n // 2)])
    x = sigma.sqrt_apply(z) + np.outer(delta, labels)
    delta_hat = (x @ labels) / config.n
    centered = x - np.outer(delta_hat, labels)
    sigma_hat = centered @ centered.T / config.n
    return LdaDraw(config, replicate, sigma, x, labels, delta, delta_hat, sigma_hat)


def empirical_lda_error(draw: LdaDraw, h: ShrinkageFunction) -> float:
    """Exact conditional misclassification probability of the trained rule.

    A fresh point from class +1 is misclassified with probability
    Phi(-delta_hat' h(Sigma_hat) delta / ||Sigma^{1/2} h(Sigma_hat) delta_hat||).
    """
    from scipy.special import erfc

    a = draw.apply_shrunk(h, draw.delta_hat)
    denom = np.sqrt(max(draw.sigma.quad_form(a), 0.0))
    if denom < 1e-300:
        return 0.5
    num = float(a @ draw.delta)
    return 0.5 * float(erfc(num / denom / np.sqrt(2.0)))


def empirical_lda_error_stats(draw: LdaDraw, h: ShrinkageFunction,
                              alphas) -> np.ndarray:
    """Conditional error across a signal grid from one unit-signal draw.

    The within-class covariance does not involve the mean difference, so a
    draw generated at alpha=1 serves every alpha: the true mean scales to
    alpha*delta while its estimation noise delta_hat - delta is unchanged.
    Two applications of h(Sigma_hat) cover the whole grid.
    """
    from scipy.special import erfc

    if draw.config.alpha != 1.0:
        raise ConfigError("alpha-grid evaluation expects a draw at alpha=1")
    noise = draw.delta_hat - draw.delta
    a1 = draw.apply_shrunk(h, draw.delta)
    a2 = draw.apply_shrunk(h, noise)
    s1, s2 = draw.sigma.apply(a1), draw.sigma.apply(a2)
    q11, q12, q22 = float(a1 @ s1), float(a1 @ s2), float(a2 @ s2)
    n1, n2 = float(a1 @ draw.delta), float(a2 @ draw.delta)
    out = np.empty(len(alphas))
    for j, al in enumerate(np.asarray(alphas, dtype=float)):
        num = al * (al * n1 + n2)
        den_sq = al * al * q11 + 2.0 * al * q12 + q22
        if den_sq <= 0:
            out[j] = 0.5
            continue
        out[j] = 0.5 * float(erfc(num / np.sqrt(den_sq) / np.sqrt(2.0)))
    return out


def empirical_frobenius_loss(draw: SimulationDraw, h: ShrinkageFunction) -> float:
    """p^{-1} || Sigma - h(S_n) ||_F^2 for a regression draw.

    Uses the singular system: h(S_n) = U h(lam) U' + h(0) (I - U U').
    """
    cfg = draw.config
    p = cfg.p
    lam = draw.eigenvalues
    hv = np.asarray(h(lam), dtype=float)
    h0 = h.at_zero
    sig_u = draw.sigma.apply(draw.u)
    d = np.einsum("ij,ij->j", draw.u, sig_u)  # u_i' Sigma u_i
    tr_sigma = draw.sigma.trace()
    tr_sigma2 = float(np.sum(draw.sigma.eigenvalues**2))
    cross = float(hv @ d) + h0 * (tr_sigma - float(np.sum(d)))
    hs_sq = float(np.sum(hv**2)) + h0**2 * (p - lam.size)
    return (tr_sigma2 - 2.0 * cross + hs_sq) / p


# ---------------------------------------------------------------------------
# kernel estimation of the boundary values from eigenvalues
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalSpectrumEstimate:
    grid: np.ndarray
    f_hat: np.ndarray
    g_hat: np.ndarray
    bandwidth: float


def default_bandwidth(eigenvalues: np.ndarray) -> float:
    """Interquartile range times m^{-1/3}: shrinks slowly enough that
    m * bandwidth^{5/2} diverges."""
    q75, q25 = np.percentile(eigenvalues, [75, 25])
    iqr = max(q75 - q25, 1e-3 * float(np.max(eigenvalues)))
    return float(iqr) * eigenvalues.size ** (-1.0 / 3.0)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    return 0.75 * np.maximum(1.0 - u**2, 0.0)


def _epanechnikov_hilbert(c: np.ndarray) -> np.ndarray:
    """PV integral of the Epanechnikov kernel against 1/(c - u)."""
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(np.abs((c + 1.0) / (c - 1.0)))
        out = 0.75 * ((1.0 - c**2) * log_term + 2.0 * c)
    # at |c| = 1 the log factor is killed by the vanishing prefactor
    out = np.where(np.isfinite(out), out, 0.75 * 2.0 * np.sign(c))
    return out


def kernel_estimate_fg(
    eigenvalues: np.ndarray,
    gamma: float,
    bandwidth: float | None = None,
    grid: np.ndarray | None = None,
) -> EmpiricalSpectrumEstimate:
    """Estimate the boundary values (f, g) from sample-covariance eigenvalues.

    g_hat is gamma*pi times an Epanechnikov density estimate; f_hat combines
    the discretized principal-value convolution (Hilbert transform of the
    density estimate) with the -(1-gamma)/x term carried by the companion
    measure's mass at zero.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    if lam.size < 100:
        raise DomainError("kernel estimation needs at least 100 eigenvalues")
    m = lam.size
    hb = default_bandwidth(lam) if bandwidth is None else float(bandwidth)
    if hb <= 0:
        raise ConfigError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(lam[0], lam[-1], 256)
    grid = np.asarray(grid, dtype=float)

    c = (grid[:, None] - lam[None, :]) / hb
    density = _epanechnikov(c).sum(axis=1) / (m * hb)
    g_hat = gamma * np.pi * density

    pv = -_epanechnikov_hilbert(c).sum(axis=1) / (m * hb)
    f_hat = -(1.0 - gamma) / grid + gamma * pv
    return EmpiricalSpectrumEstimate(grid, f_hat, np.maximum(g_hat, 0.0), hb)
