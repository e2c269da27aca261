"""Scalar shrinkage functions applied to sample eigenvalues/singular values.

A ShrinkageFunction is either a closed-form family (ridge, gradient flow,
pseudo-inverse, ridge-inverse, constant) or a function sampled on the grid of
a solved LimitingSpectrum (the optimal covariance/precision/mean shrinkers
and QP solutions).  All functions are evaluable at every grid point and at 0.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError

__all__ = ["ShrinkageFunction"]

_CLOSED_FORM = {
    "ridge",
    "gradient_flow",
    "pseudo_inverse",
    "ridge_inverse",
    "inverse",
    "constant",
    "zero",
}


class ShrinkageFunction:
    """Callable scalar function h with an explicit value at zero.

    Use the factory classmethods; the constructor is internal.
    """

    def __init__(self, family, params=None, grid_x=None, grid_values=None,
                 value_at_zero=0.0):
        self.family = family
        self.params = dict(params or {})
        self.grid_x = None if grid_x is None else np.asarray(grid_x, dtype=float)
        self.grid_values = (
            None if grid_values is None else np.asarray(grid_values, dtype=float)
        )
        self.value_at_zero = float(value_at_zero)
        if self.is_grid:
            if self.grid_x.shape != self.grid_values.shape:
                raise ConfigError("grid abscissae and values must match in length")
            if np.any(np.diff(self.grid_x) <= 0):
                raise ConfigError("grid abscissae must be strictly increasing")
            if not np.all(np.isfinite(self.grid_values)):
                raise ConfigError("grid shrinkage values must be finite")

    # -- factories -------------------------------------------------------------

    @classmethod
    def ridge(cls, lam: float) -> "ShrinkageFunction":
        """Regression ridge family h(x) = sqrt(x)/(x + lam); lam=0 gives the
        pseudo-inverse 1/sqrt(x)."""
        if lam < 0:
            raise ConfigError("ridge parameter must be nonnegative")
        if lam == 0.0:
            return cls.pseudo_inverse()
        return cls("ridge", {"lambda": float(lam)})

    @classmethod
    def gradient_flow(cls, t: float, lam: float) -> "ShrinkageFunction":
        """h(x) = (1 - exp(-t(x+lam))) sqrt(x)/(x+lam): gradient descent on the
        ridge objective run for time t; t -> oo recovers ridge(lam)."""
        if t < 0 or lam < 0:
            raise ConfigError("gradient_flow parameters must be nonnegative")
        return cls("gradient_flow", {"t": float(t), "lambda": float(lam)})

    @classmethod
    def pseudo_inverse(cls) -> "ShrinkageFunction":
        return cls("pseudo_inverse")

    @classmethod
    def ridge_inverse(cls, lam: float) -> "ShrinkageFunction":
        """LDA ridge family h(x) = 1/(x + lam); lam=0 is the plain inverse."""
        if lam < 0:
            raise ConfigError("ridge_inverse parameter must be nonnegative")
        if lam == 0.0:
            return cls("inverse")
        return cls("ridge_inverse", {"lambda": float(lam)})

    @classmethod
    def inverse(cls) -> "ShrinkageFunction":
        return cls("inverse")

    @classmethod
    def constant(cls, c: float) -> "ShrinkageFunction":
        return cls("constant", {"c": float(c)}, value_at_zero=float(c))

    @classmethod
    def zero(cls) -> "ShrinkageFunction":
        return cls("zero")

    @classmethod
    def from_grid(cls, grid_x, values, value_at_zero=0.0, family="grid",
                  params=None) -> "ShrinkageFunction":
        return cls(family, params, grid_x=grid_x, grid_values=values,
                   value_at_zero=value_at_zero)

    @classmethod
    def from_callable(cls, fn, grid_x, value_at_zero=None, family="grid",
                      params=None) -> "ShrinkageFunction":
        grid_x = np.asarray(grid_x, dtype=float)
        at0 = float(fn(0.0)) if value_at_zero is None else float(value_at_zero)
        return cls.from_grid(grid_x, np.asarray(fn(grid_x), dtype=float), at0,
                             family=family, params=params)

    # -- evaluation ------------------------------------------------------------

    @property
    def is_grid(self) -> bool:
        return self.grid_values is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = self._eval(x)
        return float(out[0]) if scalar else out

    def _eval(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam == "zero":
            return np.zeros_like(x)
        if fam == "constant":
            return np.full_like(x, self.params["c"])
        if fam == "ridge":
            lam = self.params["lambda"]
            return np.sqrt(x) / (x + lam)
        if fam == "pseudo_inverse":
            with np.errstate(divide="ignore"):
                out = np.where(x > 0, 1.0 / np.sqrt(np.maximum(x, 1e-300)), 0.0)
            return out
        if fam == "ridge_inverse":
            return 1.0 / (x + self.params["lambda"])
        if fam == "inverse":
            with np.errstate(divide="ignore"):
                return np.where(x > 0, 1.0 / np.maximum(x, 1e-300), 0.0)
        if fam == "gradient_flow":
            t, lam = self.params["t"], self.params["lambda"]
            s = x + lam
            num = -np.expm1(-t * s)
            # limit of num/s as s -> 0 is t
            ratio = np.where(s > 0, num / np.where(s > 0, s, 1.0), t)
            return np.sqrt(x) * ratio
        if self.is_grid:
            lo = self.grid_x[0]
            out = np.interp(x, self.grid_x, self.grid_values)
            # points well below the sampled support belong to the atom at zero
            return np.where(x < 0.5 * lo, self.value_at_zero, out)
        raise ConfigError(f"unknown shrinkage family {fam!r}")

    @property
    def at_zero(self) -> float:
        if self.family in ("zero", "ridge", "pseudo_inverse", "gradient_flow"):
            return 0.0
        if self.family == "constant":
            return self.params["c"]
        if self.family == "ridge_inverse":
            return 1.0 / self.params["lambda"]
        if self.family == "inverse":
            return 0.0
        return self.value_at_zero

    def scaled(self, c: float) -> "ShrinkageFunction":
        """c * h as a grid-free or grid function."""
        if self.is_grid:
            return ShrinkageFunction.from_grid(
                self.grid_x, c * self.grid_values, c * self.value_at_zero,
                family=self.family, params=self.params,
            )
        if self.family == "constant":
            return ShrinkageFunction.constant(c * self.params["c"])
        if self.family == "zero" or c == 0.0:
            return ShrinkageFunction.zero()
        raise ConfigError(f"cannot scale closed-form family {self.family!r}")

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> str:
        if self.is_grid:
            return json.dumps(
                {"grid": self.grid_values.tolist(), "at_zero": self.value_at_zero}
            )
        obj = {"family": self.family}
        obj.update(self.params)
        return json.dumps(obj)

    @classmethod
    def from_json(cls, text: str, grid_x=None) -> "ShrinkageFunction":
        try:
            obj = json.loads(text)
        except ValueError as exc:
            raise ConfigError(f"malformed shrinkage JSON: {exc}") from exc
        return cls.from_config(obj, grid_x=grid_x)

    @classmethod
    def from_config(cls, obj: dict, grid_x=None) -> "ShrinkageFunction":
        if "grid" in obj:
            values = np.asarray(obj["grid"], dtype=float)
            if grid_x is None:
                raise ConfigError(
                    "grid shrinkage values need abscissae from a solved spectrum"
                )
            return cls.from_grid(grid_x, values, obj.get("at_zero", 0.0))
        fam = obj.get("family")
        if fam == "ridge":
            return cls.ridge(obj["lambda"])
        if fam == "gradient_flow":
            return cls.gradient_flow(obj["t"], obj["lambda"])
        if fam == "pseudo_inverse":
            return cls.pseudo_inverse()
        if fam == "ridge_inverse":
            return cls.ridge_inverse(obj["lambda"])
        if fam == "inverse":
            return cls.inverse()
        if fam == "constant":
            return cls.constant(obj["c"])
        if fam == "zero":
            return cls.zero()
        raise ConfigError(f"unknown shrinkage family {fam!r}")

    def __repr__(self):
        if self.is_grid:
            return (f"ShrinkageFunction(grid[{self.grid_values.size}], "
                    f"family={self.family!r}, at_zero={self.value_at_zero:g})")
        return f"ShrinkageFunction({self.family!r}, {self.params})"
