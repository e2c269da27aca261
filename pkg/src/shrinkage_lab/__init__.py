"""Asymptotic risk of spectral shrinkage estimators under proportional growth.

Subpackages cover the limiting-spectrum engine (`spectrum`), the limiting
trace functionals (`functionals`), regression learning curves (`regression`),
LDA classification error and optimal shrinkage (`lda`), finite-sample
simulation (`montecarlo`), and a CLI front end (`cli`).
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    NumericalError,
    ShrinkageLabError,
)
from .spectrum import (
    AspectRatio,
    LimitingSpectrum,
    PopulationSpectrum,
    boundary_values,
    build_limiting_spectrum,
    companion_at_zero,
    find_support,
    solve_stieltjes,
)

__version__ = "0.1.0"

__all__ = [
    "AspectRatio",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "LimitingSpectrum",
    "NumericalError",
    "PopulationSpectrum",
    "ShrinkageLabError",
    "boundary_values",
    "build_limiting_spectrum",
    "companion_at_zero",
    "find_support",
    "solve_stieltjes",
    "__version__",
]
