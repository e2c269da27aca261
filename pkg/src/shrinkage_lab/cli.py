"""Configuration-driven command line front end.

One JSON config per run; selected top-level keys can be overridden with
``--set key=value``.  Every run writes its artifact (CSV by default) plus a
sidecar ``<output>.config.json`` holding the fully resolved configuration,
so rerunning the sidecar reproduces the artifact byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, ShrinkageLabError
from .experiments import (
    compare_shrinkers_rows,
    estimate_spectrum_rows,
    lda_error_rows,
    regression_curve_rows,
    risk_surface_rows,
    simulate_rows,
    training_curve_rows,
)
from .lda import LdaModelParams, optimal_shrinkage_qp
from .montecarlo import ExperimentConfig, SigmaModel, SigmaSpec
from .regression import RegressionModelParams
from .shrinkage import ShrinkageFunction
from .spectrum import PopulationSpectrum, build_limiting_spectrum

COMMANDS = (
    "spectrum",
    "regression-curve",
    "risk-surface",
    "training-curve",
    "lda-error",
    "optimal-shrinkage",
    "compare-shrinkers",
    "simulate",
    "estimate-spectrum",
)


def _log(msg: str) -> None:
    print(f"[shrinkage-lab] {msg}", file=sys.stderr)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_rows(rows: list[dict], path: str, fmt: str) -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=1)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in header])


def _write_sidecar(config: dict, output: str) -> None:
    sidecar = dict(config)
    sidecar["package_version"] = __version__
    with open(output + ".config.json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")


# -- config helpers ----------------------------------------------------------


def _require(config: dict, keys: list[str], command: str) -> None:
    missing = [k for k in keys if k not in config]
    if missing:
        raise ConfigError(f"{command}: missing config keys {missing}")


def _population_spectrum(obj, p: int | None = None) -> PopulationSpectrum:
    """Atoms given directly, or a Toeplitz AR(1) spectrum discretized at p."""
    if isinstance(obj, dict) and "atoms" in obj:
        return PopulationSpectrum(tuple((a["t"], a["w"]) for a in obj["atoms"]))
    if isinstance(obj, dict) and "toeplitz_rho" in obj:
        dim = obj.get("p", p)
        if dim is None:
            raise ConfigError("toeplitz H needs a dimension 'p' to discretize")
        model = SigmaModel(SigmaSpec.toeplitz_ar(obj["toeplitz_rho"]), int(dim))
        return model.population_spectrum()
    raise ConfigError("H must carry 'atoms' or 'toeplitz_rho'")


def _sigma_spec(config: dict) -> SigmaSpec:
    if "sigma" in config:
        sig = config["sigma"]
        if sig.get("kind") == "toeplitz_ar":
            return SigmaSpec.toeplitz_ar(sig["rho"])
        if sig.get("kind") == "diagonal_atoms":
            return SigmaSpec.from_atoms(_population_spectrum(sig["H"]))
        raise ConfigError(f"unknown sigma kind {sig.get('kind')!r}")
    if "H" in config:
        return SigmaSpec.from_atoms(_population_spectrum(config["H"]))
    raise ConfigError("config needs 'H' atoms or a 'sigma' construction")


def _experiment_config(config: dict, command: str) -> ExperimentConfig:
    _require(config, ["p", "n"], command)
    return ExperimentConfig(
        p=int(config["p"]),
        n=int(config["n"]),
        alpha=float(config.get("alpha", 1.0)),
        sigma=_sigma_spec(config),
        z_dist=config.get("z_dist", "gaussian"),
        seed=int(config.get("seed", 0)),
        replicates=int(config.get("replicates", 1)),
    )


def _times(config: dict) -> np.ndarray:
    times = config.get("times", {"min": 1e-2, "max": 1e3, "count": 40})
    if isinstance(times, dict):
        return np.geomspace(times.get("min", 1e-2), times.get("max", 1e3),
                            int(times.get("count", 40)))
    return np.asarray(times, dtype=float)


def _shrinkage(config: dict, key: str = "shrinkage") -> ShrinkageFunction:
    obj = config.get(key)
    if obj is None:
        raise ConfigError(f"config needs a {key!r} entry")
    return ShrinkageFunction.from_config(obj)


# -- command implementations --------------------------------------------------


def _cmd_spectrum(config, threads):
    _require(config, ["H", "gamma"], "spectrum")
    h = _population_spectrum(config["H"])
    spec = build_limiting_spectrum(h, config["gamma"],
                                   int(config.get("grid_size", 512)))
    rows = [
        {"x": float(x), "f": float(f), "g": float(g), "density": float(d)}
        for x, f, g, d in zip(spec.grid, spec.f_vals, spec.g_vals,
                              spec.density_vals)
    ]
    return rows


def _cmd_regression_curve(config, threads):
    cfg = _experiment_config(config, "regression-curve")
    _require(config, ["lambda"], "regression-curve")
    return regression_curve_rows(cfg, float(config["lambda"]), _times(config),
                                 int(config.get("grid_size", 512)), threads)


def _cmd_training_curve(config, threads):
    cfg = _experiment_config(config, "training-curve")
    _require(config, ["lambda"], "training-curve")
    return training_curve_rows(cfg, float(config["lambda"]), _times(config),
                               int(config.get("grid_size", 512)), threads)


def _cmd_risk_surface(config, threads):
    _require(config, ["H", "gamma", "alpha", "lambdas"], "risk-surface")
    h = _population_spectrum(config["H"], config.get("p"))
    params = RegressionModelParams(float(config["alpha"]), config["gamma"], h)
    spec = build_limiting_spectrum(h, config["gamma"],
                                   int(config.get("grid_size", 512)))
    return risk_surface_rows(params, spec, _times(config),
                             np.asarray(config["lambdas"], dtype=float))


def _cmd_lda_error(config, threads):
    cfg = _experiment_config(config, "lda-error")
    _require(config, ["alphas"], "lda-error")
    return lda_error_rows(cfg, np.asarray(config["alphas"], dtype=float),
                          _shrinkage(config),
                          int(config.get("grid_size", 512)), threads)


def _cmd_optimal_shrinkage(config, threads):
    _require(config, ["H", "gamma", "alpha"], "optimal-shrinkage")
    h = _population_spectrum(config["H"], config.get("p"))
    params = LdaModelParams(float(config["alpha"]), config["gamma"], h)
    spec = build_limiting_spectrum(h, config["gamma"],
                                   int(config.get("grid_size", 512)))
    sol = optimal_shrinkage_qp(params, spec)
    _log(f"stage: QP solved, objective={sol.objective:.6g}, "
         f"kkt={sol.kkt_residual:.2e}")
    return [
        {"x": float(x), "h_opt": float(v)}
        for x, v in zip(sol.h_opt.grid_x, sol.h_opt.grid_values)
    ]


def _cmd_compare_shrinkers(config, threads):
    _require(config, ["H", "gamma", "alphas"], "compare-shrinkers")
    h = _population_spectrum(config["H"], config.get("p"))
    ridge_grid = config.get("ridge_grid")
    if ridge_grid is not None:
        ridge_grid = np.asarray(ridge_grid, dtype=float)
    return compare_shrinkers_rows(config["gamma"], h,
                                  np.asarray(config["alphas"], dtype=float),
                                  int(config.get("grid_size", 512)), ridge_grid)


def _cmd_simulate(config, threads):
    cfg = _experiment_config(config, "simulate")
    _require(config, ["kind", "shrinkage"], "simulate")
    return simulate_rows(cfg, config["kind"], _shrinkage(config), threads)


def _cmd_estimate_spectrum(config, threads):
    cfg = _experiment_config(config, "estimate-spectrum")
    bandwidth = config.get("bandwidth")
    return estimate_spectrum_rows(cfg, bandwidth,
                                  int(config.get("grid_count", 256)),
                                  int(config.get("grid_size", 512)))


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "regression-curve": _cmd_regression_curve,
    "risk-surface": _cmd_risk_surface,
    "training-curve": _cmd_training_curve,
    "lda-error": _cmd_lda_error,
    "optimal-shrinkage": _cmd_optimal_shrinkage,
    "compare-shrinkers": _cmd_compare_shrinkers,
    "simulate": _cmd_simulate,
    "estimate-spectrum": _cmd_estimate_spectrum,
}


# -- entry point ---------------------------------------------------------------


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shrinkage-lab",
        description="Asymptotics and simulation for spectral shrinkage "
                    "estimators in high-dimensional regression and LDA.",
    )
    parser.add_argument("command", choices=COMMANDS, help="what to compute")
    parser.add_argument("--config", help="path to a JSON config document")
    parser.add_argument("--output", help="artifact path (overrides config)")
    parser.add_argument("--format", choices=("csv", "json"),
                        help="artifact format (default csv)")
    parser.add_argument("--threads", type=int,
                        help="cap on worker threads (default: env or CPUs)")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a top-level config key (JSON value)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    if argv is not None and len(argv) == 0:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        config: dict = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    config = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
            if not isinstance(config, dict):
                raise ConfigError("config document must be a JSON object")
        for item in args.set:
            key, value = _parse_override(item)
            config[key] = value
        if args.output:
            config["output_path"] = args.output
        if args.format:
            config["format"] = args.format
        if args.threads:
            config["threads"] = args.threads

        config.setdefault("format", "csv")
        config["command"] = args.command
        output = config.get("output_path")
        if not output:
            raise ConfigError("an output path is required (--output)")
        fmt = config["format"]
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {fmt!r}")
        threads = config.get("threads")

        _log(f"stage: running {args.command}")
        rows = _HANDLERS[args.command](config, threads)
        if not rows:
            raise NumericalError("command produced no rows")
        _log(f"stage: writing {len(rows)} rows to {output}")
        _write_rows(rows, output, fmt)
        _write_sidecar(config, output)
        return 0
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except ShrinkageLabError as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}),
              file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
