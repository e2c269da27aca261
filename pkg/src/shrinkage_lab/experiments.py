"""Figure-level drivers combining the analytic engine with simulation.

Each driver returns a list of row dicts ready for CSV/JSON export; the CLI
and the acceptance suite share these code paths.  Replicates are independent
and run on a thread pool (BLAS releases the GIL); results are keyed by
replicate index so the output is identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError
from .functionals import lp_precision_shrinker
from .lda import (
    LdaModelParams,
    inverted_covariance_shrinker,
    optimal_shrinkage_qp,
    theta,
)
from .montecarlo import (
    ExperimentConfig,
    SigmaModel,
    empirical_lda_error,
    empirical_lda_error_stats,
    empirical_regression_risk,
    generate_lda_draw,
    generate_regression_draw,
    kernel_estimate_fg,
    sample_covariance_eigenvalues,
)
from .regression import (
    RegressionModelParams,
    gd_shrinkage,
    learning_curve,
)
from .shrinkage import ShrinkageFunction
from .spectrum import LimitingSpectrum, build_limiting_spectrum

__all__ = [
    "resolve_threads",
    "run_replicates",
    "regression_curve_rows",
    "training_curve_rows",
    "risk_surface_rows",
    "lda_error_rows",
    "compare_shrinkers_rows",
    "simulate_rows",
    "estimate_spectrum_rows",
]

THREADS_ENV = "SHRINKAGE_LAB_THREADS"


def resolve_threads(explicit: int | None = None) -> int:
    """Worker cap: explicit flag beats the environment beats the CPU count."""
    if explicit is not None:
        if explicit < 1:
            raise ConfigError("thread count must be positive")
        return explicit
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            val = int(env)
        except ValueError as exc:
            raise ConfigError(f"bad {THREADS_ENV}={env!r}") from exc
        if val < 1:
            raise ConfigError(f"bad {THREADS_ENV}={env!r}")
        return val
    return os.cpu_count() or 1


def run_replicates(fn, replicates: int, threads: int | None = None) -> list:
    """Evaluate fn(replicate) for r = 0..replicates-1, in index order."""
    workers = min(resolve_threads(threads), replicates)
    if workers <= 1:
        return [fn(r) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(replicates)))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    se = values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else 0.0
    return float(values.mean()), float(se)


# ---------------------------------------------------------------------------
# regression figures
# ---------------------------------------------------------------------------


def _regression_setup(config: ExperimentConfig, grid_size: int):
    sigma_model = SigmaModel(config.sigma, config.p)
    h_pop = sigma_model.population_spectrum()
    spec = build_limiting_spectrum(h_pop, config.gamma_n, grid_size)
    params = RegressionModelParams(config.alpha, config.gamma_n, h_pop)
    return sigma_model, spec, params


def _empirical_curves(config, sigma_model, lam, times, threads):
    def one(replicate):
        draw = generate_regression_draw(config, replicate, sigma_model)
        out = np.empty((len(times), 2))
        for j, t in enumerate(times):
            out[j] = empirical_regression_risk(draw, gd_shrinkage(t, lam))
        return out

    stacked = np.stack(run_replicates(one, config.replicates, threads))
    return stacked[:, :, 0], stacked[:, :, 1]


def regression_curve_rows(config: ExperimentConfig, lam: float, times,
                          grid_size: int = 512, threads: int | None = None):
    """Predicted vs empirical out-of-sample risk along the time grid."""
    sigma_model, spec, params = _regression_setup(config, grid_size)
    times = np.asarray(times, dtype=float)
    curve = learning_curve(params, spec, lam, times)
    risks, _ = _empirical_curves(config, sigma_model, lam, times, threads)
    rows = []
    for j, t in enumerate(times):
        mean, se = _mean_se(risks[:, j])
        rows.append(
            {
                "t": float(t),
                "predicted_risk": float(curve.test_risk[j]),
                "empirical_mean": mean,
                "empirical_se": se,
            }
        )
    return rows


def training_curve_rows(config: ExperimentConfig, lam: float, times,
                        grid_size: int = 512, threads: int | None = None):
    """Predicted vs empirical training error along the time grid."""
    sigma_model, spec, params = _regression_setup(config, grid_size)
    times = np.asarray(times, dtype=float)
    curve = learning_curve(params, spec, lam, times)
    _, trains = _empirical_curves(config, sigma_model, lam, times, threads)
    rows = []
    for j, t in enumerate(times):
        mean, se = _mean_se(trains[:, j])
        rows.append(
            {
                "t": float(t),
                "predicted_train_error": float(curve.train_error[j]),
                "empirical_mean": mean,
                "empirical_se": se,
            }
        )
    return rows


def risk_surface_rows(params: RegressionModelParams, spec: LimitingSpectrum,
                      times, lambdas):
    """Analytic risk over the (t, lambda) grid."""
    rows = []
    for lam in np.asarray(lambdas, dtype=float):
        curve = learning_curve(params, spec, float(lam), np.asarray(times, float))
        for t, risk in zip(curve.times, curve.test_risk):
            rows.append({"t": float(t), "lambda": float(lam), "risk": float(risk)})
    return rows


# ---------------------------------------------------------------------------
# LDA figures
# ---------------------------------------------------------------------------


def lda_error_rows(config: ExperimentConfig, alphas, h: ShrinkageFunction,
                   grid_size: int = 512, threads: int | None = None):
    """Theory vs empirical conditional error across the signal grid.

    The within-class covariance does not depend on alpha, so each replicate
    reuses one eigendecomposition for the whole alpha grid: the draw is made
    at alpha=1 and the mean vector is scaled.
    """
    alphas = np.asarray(alphas, dtype=float)
    sigma_model = SigmaModel(config.sigma, config.p)
    h_pop = sigma_model.population_spectrum()
    spec = build_limiting_spectrum(h_pop, config.gamma_n, grid_size)

    base = ExperimentConfig(config.p, config.n, 1.0, config.sigma,
                            config.z_dist, config.seed, config.replicates)

    def one(replicate):
        draw = generate_lda_draw(base, replicate, sigma_model)
        return empirical_lda_error_stats(draw, h, alphas)

    per_rep = np.stack(run_replicates(one, config.replicates, threads))
    rows = []
    for j, alpha in enumerate(alphas):
        params = LdaModelParams(float(alpha), config.gamma_n, h_pop)
        rep = theta(params, spec, h)
        mean, se = _mean_se(per_rep[:, j])
        rows.append(
            {
                "alpha": float(alpha),
                "predicted_error": float(rep.error),
                "empirical_mean": mean,
                "empirical_se": se,
            }
        )
    return rows


def compare_shrinkers_rows(gamma: float, h_pop, alphas, grid_size: int = 512,
                           ridge_grid=None):
    """Asymptotic error of the shrinkage menu across the signal grid."""
    spec = build_limiting_spectrum(h_pop, gamma, grid_size)
    if ridge_grid is None:
        ridge_grid = np.geomspace(1e-3, 1e3, 61)
    h_cov = inverted_covariance_shrinker(spec)
    h_prec = lp_precision_shrinker(spec)
    h_id = ShrinkageFunction.inverse()
    rows = []
    for alpha in np.asarray(alphas, dtype=float):
        params = LdaModelParams(float(alpha), gamma, h_pop)
        sol = optimal_shrinkage_qp(params, spec)
        err_ridge = min(
            theta(params, spec, ShrinkageFunction.ridge_inverse(l)).error
            for l in ridge_grid
        )
        rows.append(
            {
                "alpha": float(alpha),
                "error_optimal": theta(params, spec, sol.h_opt).error,
                "error_lp_cov": theta(params, spec, h_cov).error,
                "error_lp_prec": theta(params, spec, h_prec).error,
                "error_ridge_best": float(err_ridge),
                "error_identity": theta(params, spec, h_id).error,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# raw simulation and spectrum estimation
# ---------------------------------------------------------------------------


def simulate_rows(config: ExperimentConfig, kind: str, h: ShrinkageFunction,
                  threads: int | None = None):
    """Per-replicate empirical quantities plus a mean/SE summary row."""
    sigma_model = SigmaModel(config.sigma, config.p)
    if kind == "regression":
        def one(replicate):
            draw = generate_regression_draw(config, replicate, sigma_model)
            risk, train = empirical_regression_risk(draw, h)
            return {"replicate": replicate, "test_risk": risk,
                    "train_error": train}
        value_keys = ("test_risk", "train_error")
    elif kind == "lda":
        def one(replicate):
            draw = generate_lda_draw(config, replicate, sigma_model)
            return {"replicate": replicate,
                    "error": empirical_lda_error(draw, h)}
        value_keys = ("error",)
    else:
        raise ConfigError(f"unknown simulation kind {kind!r}")

    rows = run_replicates(one, config.replicates, threads)
    summary = {"replicate": "summary"}
    for key in value_keys:
        mean, se = _mean_se(np.array([r[key] for r in rows]))
        summary[key] = mean
        summary[f"{key}_se"] = se
    return rows + [summary]


def estimate_spectrum_rows(config: ExperimentConfig, bandwidth=None,
                           grid_count: int = 256, grid_size: int = 512):
    """Kernel estimate of (f, g) from one simulated draw, with the solved
    boundary values alongside for comparison."""
    sigma_model = SigmaModel(config.sigma, config.p)
    lam = sample_covariance_eigenvalues(config, 0, sigma_model)
    lam = lam[lam > 1e-12] if config.p > config.n else lam
    est = kernel_estimate_fg(lam, config.gamma_n, bandwidth,
                             grid=np.linspace(lam.min(), lam.max(), grid_count))
    h_pop = sigma_model.population_spectrum()
    spec = build_limiting_spectrum(h_pop, config.gamma_n, grid_size)
    f_ref = np.interp(est.grid, spec.grid, spec.f_vals)
    g_ref = np.interp(est.grid, spec.grid, spec.g_vals)
    inside = (est.grid >= spec.support[0][0]) & (est.grid <= spec.support[-1][1])
    rows = []
    for i, x in enumerate(est.grid):
        rows.append(
            {
                "x": float(x),
                "f_hat": float(est.f_hat[i]),
                "g_hat": float(est.g_hat[i]),
                "f_solved": float(f_ref[i]) if inside[i] else "",
                "g_solved": float(g_ref[i]) if inside[i] else "",
            }
        )
    return rows
