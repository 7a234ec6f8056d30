"""Monte Carlo harness for the NMSE sweeps and the canned figure configs.

A sweep varies exactly one of M, P (dB), or CSNR (dB) and evaluates every
requested design at every point with common random numbers: the source and
noise draws for trial t are shared across designs, so curves differ only
through the sensing matrices.  All randomness derives from
numpy.random.SeedSequence seeded with (master_seed, point_index, trial_index,
stream_tag), which makes runs reproducible bit-for-bit regardless of how
trials are scheduled.

NMSE is defined as E||x - x_hat||^2 / E||x||^2 with the analytic signal
energy E||x||^2 = tr(R); multiplying NMSE by that energy recovers the plain
MSE that the analytic lower bound speaks about.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Tuple

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
from .estimators import (
    EXHAUSTIVE_LIMIT,
    lmmse_filter,
    mmse_exhaustive,
    omp,
    oracle_mmse,
    random_omp,
)
from .metrics import mse_lower_bound
from .model import (
    FULL_ENUMERATION_LIMIT,
    SupportEnsemble,
    SystemModel,
    exponential_correlation,
    source_covariance,
)
from .sdr import solve_sdr

DESIGN_CHOICES = ("lower_bound", "upper_bound", "gaussian", "tight_frame", "randomized")
ESTIMATOR_CHOICES = ("omp", "romp", "lmmse", "oracle", "mmse")
BOUND_CURVE = "lower_bound_curve"

# stream tags for SeedSequence entropy tuples (seed, point, trial, tag[, design])
_TAG_DESIGN = 0
_TAG_SOURCE = 1
_TAG_NOISE = 2
_TAG_ESTIMATOR = 3
_TAG_ENSEMBLE = 4


# -----------------------------------------------------------------------------
# configuration
# -----------------------------------------------------------------------------

def _ascending_tuple(values, name: str, integral: bool = False) -> tuple:
    out = []
    for v in values:
        f = float(v)
        if not np.isfinite(f):
            raise ParameterError(f"{name} entries must be finite")
        if integral:
            if f != int(f):
                raise ParameterError(f"{name} entries must be integers")
            out.append(int(f))
        else:
            out.append(f)
    if not out:
        raise ParameterError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ParameterError(f"{name} must be strictly ascending")
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: fixed model family, one swept variable, designs, estimator."""

    n: int
    k: int
    rho: float
    m: Optional[int] = None
    m_list: Optional[tuple] = None
    p_db: float = 10.0
    p_db_list: Optional[tuple] = None
    csnr_db_list: Optional[tuple] = None
    g: float = 1.0
    sigma_v: float = 0.0
    sigma_w: float = 0.1
    trials: int = 500
    seed: int = 0
    designs: Tuple[str, ...] = ("lower_bound", "upper_bound", "gaussian", "tight_frame")
    estimator: str = "romp"
    ensemble: str = "full"
    randomized_draws: int = 100
    romp_passes: int = 20
    label: str = "sweep"

    def __post_init__(self) -> None:
        for name in ("n", "k", "trials", "seed", "randomized_draws", "romp_passes"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ParameterError(f"{name} must be an integer")
        if self.n < 1 or self.k < 1 or self.k > self.n:
            raise ParameterError("need 1 <= k <= n")
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError("rho must lie in [0, 1)")
        if self.trials < 1 or self.randomized_draws < 1 or self.romp_passes < 1:
            raise ParameterError("trials, randomized_draws and romp_passes must be >= 1")
        if self.g <= 0:
            raise ParameterError("g must be positive")
        if self.sigma_v < 0 or self.sigma_w < 0:
            raise ParameterError("noise deviations must be nonnegative")
        if not np.isfinite(self.p_db):
            raise ParameterError("p_db must be finite")
        if isinstance(self.designs, str):
            object.__setattr__(
                self, "designs", tuple(s for s in self.designs.split(",") if s)
            )
        else:
            object.__setattr__(self, "designs", tuple(self.designs))
        if not self.designs:
            raise ParameterError("designs must not be empty")
        if len(set(self.designs)) != len(self.designs):
            raise ParameterError("designs must not repeat")
        for d in self.designs:
            if d not in DESIGN_CHOICES:
                raise ParameterError(f"unknown design {d!r}; choices: {DESIGN_CHOICES}")
        if self.estimator not in ESTIMATOR_CHOICES:
            raise ParameterError(
                f"unknown estimator {self.estimator!r}; choices: {ESTIMATOR_CHOICES}"
            )
        if self.estimator == "mmse" and math.comb(self.n, self.k) > EXHAUSTIVE_LIMIT:
            raise ParameterError(
                "mmse estimator enumerates all supports; "
                f"C({self.n},{self.k}) exceeds {EXHAUSTIVE_LIMIT}"
            )
        self._parse_ensemble(self.ensemble, self.n, self.k)
        if not self.label or not all(c.isalnum() or c in "_-" for c in self.label):
            raise ParameterError("label must be a simple name ([A-Za-z0-9_-])")

        lists = {
            "m_list": self.m_list,
            "p_db_list": self.p_db_list,
            "csnr_db_list": self.csnr_db_list,
        }
        given = [k for k, v in lists.items() if v is not None]
        if len(given) > 1:
            raise ParameterError(f"at most one sweep list, got {given}")
        if not given:
            if self.m is None:
                raise ParameterError("either m or one sweep list is required")
            object.__setattr__(self, "m_list", (self.m,))
            given = ["m_list"]
        if given == ["m_list"]:
            object.__setattr__(
                self, "m_list", _ascending_tuple(self.m_list, "m_list", integral=True)
            )
            for m in self.m_list:
                if not 1 <= m <= self.n:
                    raise ParameterError(f"m values must lie in [1, {self.n}]")
        else:
            if self.m is None:
                raise ParameterError("m is required for p_db / csnr_db sweeps")
            if not isinstance(self.m, (int, np.integer)) or not 1 <= self.m <= self.n:
                raise ParameterError(f"m must be an integer in [1, {self.n}]")
            key = given[0]
            object.__setattr__(self, key, _ascending_tuple(lists[key], key))
            if key == "csnr_db_list" and self.sigma_w <= 0:
                raise ParameterError("csnr_db sweeps require sigma_w > 0")

    @staticmethod
    def _parse_ensemble(spec: str, n: int, k: int):
        if spec == "full":
            return ("full", None)
        if spec.startswith("sampled:"):
            tail = spec.split(":", 1)[1]
            try:
                count = int(tail)
            except ValueError:
                raise ParameterError(f"bad ensemble spec {spec!r}") from None
            if count < 1:
                raise ParameterError("sampled ensemble size must be >= 1")
            return ("sampled", count)
        raise ParameterError(f"ensemble must be 'full' or 'sampled:<count>', got {spec!r}")

    # -- derived views --------------------------------------------------------

    @property
    def sweep_var(self) -> str:
        if self.p_db_list is not None:
            return "p_db"
        if self.csnr_db_list is not None:
            return "csnr_db"
        return "m"

    @property
    def sweep_values(self) -> tuple:
        return {
            "m": self.m_list,
            "p_db": self.p_db_list,
            "csnr_db": self.csnr_db_list,
        }[self.sweep_var]

    def model_at(self, value) -> SystemModel:
        var = self.sweep_var
        m = int(value) if var == "m" else int(self.m)
        p_db = value if var == "p_db" else self.p_db
        g = self.sigma_w * 10.0 ** (value / 20.0) if var == "csnr_db" else self.g
        return SystemModel(
            n=self.n,
            k=self.k,
            m=m,
            r=exponential_correlation(self.k, self.rho),
            g=g,
            sigma_v=self.sigma_v,
            sigma_w=self.sigma_w,
            p=10.0 ** (p_db / 10.0),
        )

    def ensemble_at(self, point_idx: int) -> SupportEnsemble:
        kind, count = self._parse_ensemble(self.ensemble, self.n, self.k)
        if kind == "full":
            return SupportEnsemble.full(self.n, self.k)
        ss = np.random.SeedSequence((self.seed, point_idx, 0, _TAG_ENSEMBLE))
        return SupportEnsemble.sampled(
            self.n, self.k, count, seed=int(ss.generate_state(1)[0])
        )

    def snapshot_lines(self) -> list:
        """Sorted key=value lines; the CLI config parser reads them back."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = f"{value:.10g}"
            lines.append(f"{f.name}={value}")
        return lines


# -----------------------------------------------------------------------------
# results
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignOutcome:
    """Aggregated Monte Carlo error of one design at one sweep point."""

    nmse: float
    nmse_db: float
    stderr_db: float
    error: Optional[str] = None

    @staticmethod
    def failed(message: str) -> "DesignOutcome":
        return DesignOutcome(nmse=np.nan, nmse_db=np.nan, stderr_db=np.nan, error=message)


@dataclass(frozen=True)
class PointResult:
    value: float
    bound_nmse_db: float
    designs: Dict[str, DesignOutcome]
    seconds: float  # wall clock, kept in memory only, never emitted


@dataclass(frozen=True)
class ExperimentRun:
    config: ExperimentConfig
    points: Tuple[PointResult, ...]

    @property
    def sweep_var(self) -> str:
        return self.config.sweep_var


# -----------------------------------------------------------------------------
# sweep driver
# -----------------------------------------------------------------------------

def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _build_designs(
    config: ExperimentConfig,
    model: SystemModel,
    ensemble: SupportEnsemble,
    point_idx: int,
    r_x: np.ndarray,
) -> Tuple[Dict[str, SensingMatrix], Dict[str, DesignOutcome]]:
    matrices: Dict[str, SensingMatrix] = {}
    failures: Dict[str, DesignOutcome] = {}
    for di, name in enumerate(config.designs):
        rng = _rng(config.seed, point_idx, 0, _TAG_DESIGN, di)
        try:
            if name == "lower_bound":
                matrices[name] = design_lower_bound(model, ensemble)
            elif name == "upper_bound":
                matrices[name] = design_upper_bound(model, r_x=r_x)
            elif name == "gaussian":
                matrices[name] = design_gaussian(model, rng, r_x=r_x)
            elif name == "tight_frame":
                matrices[name] = design_tight_frame(model, rng, r_x=r_x)
            else:  # randomized
                candidate, _ = solve_sdr(model, ensemble)
                matrices[name] = design_randomized(
                    model, ensemble, candidate, config.randomized_draws, rng
                )
        except (ParameterError, NumericalError, np.linalg.LinAlgError) as exc:
            failures[name] = DesignOutcome.failed(f"{type(exc).__name__}: {exc}")
    return matrices, failures


def _estimate(
    config: ExperimentConfig,
    model: SystemModel,
    a: np.ndarray,
    y: np.ndarray,
    support: np.ndarray,
    lmmse_f: Optional[np.ndarray],
    rng_est: Optional[np.random.Generator],
) -> np.ndarray:
    kind = config.estimator
    if kind == "omp":
        return omp(model.g * (a @ model.h), y, model.k).x_hat
    if kind == "romp":
        return random_omp(model, a, y, rng_est, passes=config.romp_passes).x_hat
    if kind == "lmmse":
        return lmmse_f @ y
    if kind == "oracle":
        return oracle_mmse(model, a, y, support).x_hat
    return mmse_exhaustive(model, a, y).x_hat


def run_sweep(config: ExperimentConfig) -> ExperimentRun:
    """Evaluate every design at every sweep point; designs that fail to build
    are marked failed at that point and the sweep continues."""
    energy = float(np.trace(exponential_correlation(config.k, config.rho)))
    points = []
    for pi, value in enumerate(config.sweep_values):
        t0 = time.perf_counter()
        model = config.model_at(value)
        ensemble = config.ensemble_at(pi)
        r_x = source_covariance(model, ensemble)
        matrices, outcomes = _build_designs(config, model, ensemble, pi, r_x)

        bound_db = np.nan
        if "lower_bound" in matrices:
            try:
                report = mse_lower_bound(model, ensemble, matrices["lower_bound"])
                bound_db = 10.0 * np.log10(report.value / energy)
            except (NumericalError, np.linalg.LinAlgError):
                pass

        # the support-blind linear estimator wants the marginal covariance of
        # the true source; fall back to the design ensemble's when the full
        # one is too large to enumerate
        lmmse_filters: Dict[str, np.ndarray] = {}
        if config.estimator == "lmmse":
            if math.comb(config.n, config.k) <= FULL_ENUMERATION_LIMIT:
                full = SupportEnsemble.full(config.n, config.k)
                lmmse_rx = source_covariance(model, full)
            else:
                lmmse_rx = r_x
            for name, sm in matrices.items():
                lmmse_filters[name] = lmmse_filter(model, sm.a, r_x=lmmse_rx)

        chol_r = np.linalg.cholesky(model.r)
        sq_err = {name: np.empty(config.trials) for name in matrices}
        for t in range(config.trials):
            rng_x = _rng(config.seed, pi, t, _TAG_SOURCE)
            support = np.sort(rng_x.choice(config.n, size=config.k, replace=False))
            x = np.zeros(config.n)
            x[support] = chol_r @ rng_x.standard_normal(config.k)
            rng_n = _rng(config.seed, pi, t, _TAG_NOISE)
            v_raw = rng_n.standard_normal(model.l)
            w_raw = rng_n.standard_normal(model.m)
            hx = model.h @ x
            for di, name in enumerate(config.designs):
                if name not in matrices:
                    continue
                a = matrices[name].a
                y = model.g * (a @ (hx + model.sigma_v * v_raw)) + model.sigma_w * w_raw
                rng_est = _rng(config.seed, pi, t, _TAG_ESTIMATOR, di)
                x_hat = _estimate(
                    config, model, a, y, support, lmmse_filters.get(name), rng_est
                )
                sq_err[name][t] = float(np.sum((x - x_hat) ** 2))

        for name, errs in sq_err.items():
            ratios = errs / energy
            nmse = float(np.mean(ratios))
            if nmse <= 0:
                outcomes[name] = DesignOutcome(nmse=0.0, nmse_db=-np.inf, stderr_db=0.0)
                continue
            spread = float(np.std(ratios, ddof=1)) if config.trials > 1 else 0.0
            stderr_db = (10.0 / np.log(10.0)) * spread / np.sqrt(config.trials) / nmse
            outcomes[name] = DesignOutcome(
                nmse=nmse, nmse_db=float(10.0 * np.log10(nmse)), stderr_db=stderr_db
            )

        points.append(
            PointResult(
                value=float(value),
                bound_nmse_db=float(bound_db),
                designs=outcomes,
                seconds=time.perf_counter() - t0,
            )
        )
    return ExperimentRun(config=config, points=tuple(points))


# -----------------------------------------------------------------------------
# artifact emission
# -----------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.10g}"


def emit_results(run: ExperimentRun, out_dir) -> list:
    """Write results.csv, config.snapshot, and <label>.dat; returns the paths.

    Byte-identical for identical (config, seed).  Failed design points carry
    nan values in both the CSV and the .dat file.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = run.config
    var = run.sweep_var

    csv_lines = ["design,sweep_var,value,nmse_db,stderr"]
    for point in run.points:
        for name in config.designs:
            o = point.designs[name]
            csv_lines.append(
                f"{name},{var},{_fmt(point.value)},{_fmt(o.nmse_db)},{_fmt(o.stderr_db)}"
            )
        csv_lines.append(
            f"{BOUND_CURVE},{var},{_fmt(point.value)},{_fmt(point.bound_nmse_db)},0"
        )
    csv_path = out / "results.csv"
    csv_path.write_text("\n".join(csv_lines) + "\n")

    snap_path = out / "config.snapshot"
    snap_path.write_text("\n".join(config.snapshot_lines()) + "\n")

    dat_lines = ["# " + " ".join([var, *config.designs, BOUND_CURVE])]
    for point in run.points:
        cells = [_fmt(point.value)]
        cells += [_fmt(point.designs[name].nmse_db) for name in config.designs]
        cells.append(_fmt(point.bound_nmse_db))
        dat_lines.append(" ".join(cells))
    dat_path = out / f"{config.label}.dat"
    dat_path.write_text("\n".join(dat_lines) + "\n")
    return [csv_path, snap_path, dat_path]


# -----------------------------------------------------------------------------
# canned figure configs
# -----------------------------------------------------------------------------

def fig2_config(trials: int = 500, seed: int = 1) -> ExperimentConfig:
    """NMSE vs M for the correlated-source baseline comparison."""
    return ExperimentConfig(
        n=36, k=3, rho=0.25, g=0.5, sigma_w=0.1, sigma_v=0.0, p_db=10.0,
        m_list=(6, 12, 18, 24, 30), estimator="romp", trials=trials, seed=seed,
        label="fig2",
    )


def fig3_config(trials: int = 500, seed: int = 1) -> ExperimentConfig:
    """NMSE vs transmit power at M = 18."""
    return ExperimentConfig(
        n=36, k=3, rho=0.25, g=0.5, sigma_w=0.1, sigma_v=0.0, m=18,
        p_db_list=(-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0),
        estimator="romp", trials=trials, seed=seed, label="fig3",
    )


def fig4_config(trials: int = 500, seed: int = 1) -> ExperimentConfig:
    """NMSE vs channel SNR at M = 18 with the plain greedy decoder."""
    return ExperimentConfig(
        n=36, k=3, rho=0.5, sigma_w=0.1, sigma_v=0.0, p_db=10.0, m=18,
        csnr_db_list=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
        estimator="omp", trials=trials, seed=seed, label="fig4",
    )


def fig5_config(trials: int = 500, seed: int = 1) -> ExperimentConfig:
    """High-dimensional sweep with a sampled support ensemble and the
    randomization baseline."""
    return ExperimentConfig(
        n=100, k=5, rho=0.75, g=0.5, sigma_w=0.1, sigma_v=0.0, p_db=10.0,
        m_list=(20, 40, 60, 80), ensemble="sampled:2500",
        designs=("lower_bound", "upper_bound", "gaussian", "tight_frame", "randomized"),
        randomized_draws=1000, estimator="romp", trials=trials, seed=seed,
        label="fig5",
    )


CANNED_FIGURES = {
    "fig2": fig2_config,
    "fig3": fig3_config,
    "fig4": fig4_config,
    "fig5": fig5_config,
}
