"""Command line front end.

Subcommands: design (emit one sensing matrix), evaluate (bound / power /
coherence of a stored matrix), sweep (Monte Carlo sweep from a config file),
reproduce (canned figure configs).  Config files are flat key=value text with
'#' comments; all keys are listed in --help.  Exit codes: 0 success, 2
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .designer import (
    SensingMatrix,
    design_gaussian,
    design_lower_bound,
    design_randomized,
    design_tight_frame,
    design_upper_bound,
)
from .errors import NumericalError, ParameterError
from .experiments import (
    CANNED_FIGURES,
    DESIGN_CHOICES,
    ESTIMATOR_CHOICES,
    ExperimentConfig,
    emit_results,
    run_sweep,
)
from .metrics import mse_lower_bound, mutual_coherence, transmit_power
from .model import source_covariance
from .sdr import solve_sdr

OUT_ENV = "CSDESIGN_OUT"

CONFIG_HELP = """\
config file format: one key=value per line, '#' starts a comment.
keys:
  n, k              source length and sparsity (int, required)
  rho               correlation coefficient in [0, 1) (required)
  m                 measurements (int; required unless m_list given)
  m_list            comma list of M values to sweep
  p_db              transmit power in dB (default 10)
  p_db_list         comma list of power values (dB) to sweep
  csnr_db_list      comma list of g^2/sigma_w^2 values (dB) to sweep
  g                 channel gain (default 1; ignored on csnr sweeps)
  sigma_v           observation noise deviation (default 0)
  sigma_w           channel noise deviation (default 0.1)
  trials            Monte Carlo trials per point (default 500)
  seed              master seed (default 0)
  designs           comma list of {lower_bound,upper_bound,gaussian,tight_frame,randomized}
  estimator         one of {omp,romp,lmmse,oracle,mmse}
  ensemble          full | sampled:<count>
  randomized_draws  realizations for the randomized baseline (default 100)
  romp_passes       passes of the randomized greedy decoder (default 20)
  label             basename for the gnuplot .dat file (default sweep)
output directory: --out, else $CSDESIGN_OUT, else ./results
"""

_INT_KEYS = {"n", "k", "m", "trials", "seed", "randomized_draws", "romp_passes"}
_FLOAT_KEYS = {"rho", "p_db", "g", "sigma_v", "sigma_w"}
_LIST_KEYS = {"m_list", "p_db_list", "csnr_db_list"}
_STR_KEYS = {"estimator", "ensemble", "label"}
_REQUIRED_KEYS = ("n", "k", "rho")


def load_config(path) -> ExperimentConfig:
    """Parse a flat key=value config file into an ExperimentConfig."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in entries:
            raise ParameterError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value

    kwargs = {}
    for key, value in entries.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _LIST_KEYS:
                kwargs[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key == "designs":
                kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in _STR_KEYS:
                kwargs[key] = value
            else:
                raise ParameterError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ParameterError(f"bad value for {key!r}: {value!r}") from exc
    missing = [key for key in _REQUIRED_KEYS if key not in kwargs]
    if missing:
        raise ParameterError(f"config is missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**kwargs)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        updates["trials"] = args.trials
    if getattr(args, "ensemble", None) is not None:
        updates["ensemble"] = args.ensemble
    if getattr(args, "estimator", None) is not None:
        updates["estimator"] = args.estimator
    return dataclasses.replace(config, **updates) if updates else config


def _out_dir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path("results")


def _single_point(config: ExperimentConfig):
    if len(config.sweep_values) != 1:
        raise ParameterError(
            "this subcommand needs a single-point config (one m, no sweep lists)"
        )
    return config.model_at(config.sweep_values[0]), config.ensemble_at(0)


# -----------------------------------------------------------------------------
# subcommands
# -----------------------------------------------------------------------------

def _cmd_design(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    model, ensemble = _single_point(config)
    r_x = source_covariance(model, ensemble)
    rng = np.random.default_rng(config.seed)
    name = args.designer
    if name == "lower_bound":
        sm = design_lower_bound(model, ensemble)
    elif name == "upper_bound":
        sm = design_upper_bound(model, r_x=r_x)
    elif name == "gaussian":
        sm = design_gaussian(model, rng, r_x=r_x)
    elif name == "tight_frame":
        sm = design_tight_frame(model, rng, r_x=r_x)
    else:
        candidate, _ = solve_sdr(model, ensemble)
        sm = design_randomized(model, ensemble, candidate, config.randomized_draws, rng)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}_a.txt"
    sm.save(path)
    bound = mse_lower_bound(model, ensemble, sm)
    print(f"wrote {path}")
    print(f"mse_lower_bound = {bound.value:.10g}")
    print(f"transmit_power = {transmit_power(model, sm, r_x=r_x):.10g}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    model, ensemble = _single_point(config)
    sm = SensingMatrix.load(args.matrix)
    if sm.a.shape != (model.m, model.l):
        raise ParameterError(
            f"matrix shape {sm.a.shape} does not match the config's ({model.m}, {model.l})"
        )
    r_x = source_covariance(model, ensemble)
    print(f"mse_lower_bound = {mse_lower_bound(model, ensemble, sm).value:.10g}")
    print(f"transmit_power = {transmit_power(model, sm, r_x=r_x):.10g}")
    print(f"mutual_coherence = {mutual_coherence(sm):.10g}")
    return 0


def _run_and_emit(config: ExperimentConfig, args) -> int:
    run = run_sweep(config)
    paths = emit_results(run, _out_dir(args))
    for path in paths:
        print(f"wrote {path}")
    var = run.sweep_var
    for point in run.points:
        cells = []
        for name in config.designs:
            o = point.designs[name]
            cells.append(f"{name} failed" if o.error else f"{name} {o.nmse_db:.2f} dB")
        print(f"{var}={point.value:g}: " + ", ".join(cells))
    return 0


def _cmd_sweep(args) -> int:
    return _run_and_emit(_apply_overrides(load_config(args.config), args), args)


def _cmd_reproduce(args) -> int:
    factory = CANNED_FIGURES[args.figure]
    config = factory()
    return _run_and_emit(_apply_overrides(config, args), args)


# -----------------------------------------------------------------------------
# entry point
# -----------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--trials", type=int, default=None, help="override trial count")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--ensemble", default=None, metavar="full|sampled:<count>",
        help="override the support ensemble",
    )
    parser.add_argument(
        "--estimator", default=None, choices=ESTIMATOR_CHOICES,
        help="override the decoder",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdesign",
        description="Power-constrained sensing matrix design and NMSE experiments.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "design", help="compute one sensing matrix and write it to a file",
        epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", required=True, help="single-point config file")
    p.add_argument("--designer", default="lower_bound", choices=DESIGN_CHOICES)
    _add_common(p)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser(
        "evaluate", help="report bound, power, and coherence for a matrix file",
        epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", required=True, help="single-point config file")
    p.add_argument("--matrix", required=True, help="matrix file written by 'design'")
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser(
        "sweep", help="run a Monte Carlo sweep from a config file",
        epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", required=True, help="sweep config file")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("reproduce", help="run a canned figure configuration")
    p.add_argument("figure", choices=sorted(CANNED_FIGURES))
    _add_common(p)
    p.set_defaults(func=_cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
