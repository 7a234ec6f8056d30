"""Sensing-matrix construction: relaxation-based designs, closed forms, baselines.

The main pipeline is solve-then-factor: minimize the relaxed Gram objective,
keep the top-M eigenpairs of the optimizer (the closest rank-M Gram matrix in
Frobenius norm), and rescale to meet the power budget with equality.  The
relaxed optimizer is not rank-M in general, and when its spectrum is flat the
Frobenius-nearest factor can sit far above the best rank-M bound, so the
lower-bound design finishes with a monotone projected-gradient descent over
factors on the power shell.  Closed forms cover the known special regimes;
Gaussian, tight-frame, and randomization baselines provide comparison points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import NumericalError, ParameterError
from .metrics import (
    _spd_inverse,
    mse_lower_bound,
    mutual_coherence,
    power_matrix,
    transmit_power,
)
from .model import (
    SupportEnsemble,
    SystemModel,
    _check_ensemble,
    _frozen_array,
    as_matrix,
    source_covariance,
)
from .sdr import (
    GramCandidate,
    SolverOptions,
    SolverTrace,
    _gram_value,
    _gram_value_gradient,
    _solve_projected,
    solve_sdr,
)

RANK_TOL = 1e-10
REFINE_MAX_ITER = 400
REFINE_REL_TOL = 1e-11
REFINE_STARTS = 10
REFINE_BOUND_SLACK = 0.02


@dataclass(frozen=True)
class SensingMatrix:
    """An M x L compression matrix tagged with how it was built."""

    a: np.ndarray
    method: str
    power_normalized: bool = False
    seed: Optional[int] = None
    solver_trace: Optional[SolverTrace] = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2:
            raise ParameterError("a must be a 2-D array")
        object.__setattr__(self, "a", _frozen_array(a))

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def l(self) -> int:
        return self.a.shape[1]

    def save(self, path) -> None:
        """Plain-text serialization: header `M L method seed`, then rows."""
        with open(path, "w") as fh:
            seed = "-" if self.seed is None else str(self.seed)
            fh.write(f"{self.m} {self.l} {self.method} {seed}\n")
            for row in self.a:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "SensingMatrix":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 4:
                raise ParameterError(f"malformed matrix header in {path}")
            m, l, method, seed = int(header[0]), int(header[1]), header[2], header[3]
            rows = [[float(v) for v in line.split()] for line in fh if line.strip()]
        a = np.array(rows, dtype=float)
        if a.shape != (m, l):
            raise ParameterError(
                f"matrix body {a.shape} does not match header ({m}, {l}) in {path}"
            )
        return cls(a=a, method=method, seed=None if seed == "-" else int(seed))

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.a:
                writer.writerow([f"{v:.17g}" for v in row])


def full_row_rank(a, rel_tol: float = RANK_TOL) -> bool:
    """True when all M singular values exceed rel_tol * sigma_max."""
    a = as_matrix(a)
    s = np.linalg.svd(a, compute_uv=False)
    return bool(s.size == a.shape[0] and s[-1] > rel_tol * s[0])


# -----------------------------------------------------------------------------
# factorization and power normalization
# -----------------------------------------------------------------------------


def low_rank_factor(q, m: int, method: str = "lower_bound") -> SensingMatrix:
    """Best rank-M factor of a PSD Gram matrix: A = diag(sqrt(top eigs)) U^T.

    The returned A satisfies A^T A = best rank-M approximation of q in
    Frobenius norm (Eckart-Young on the eigendecomposition).  When q has
    fewer than m significant eigenvalues the remaining singular values are
    zero-padded and a warning is emitted.
    """
    q = np.asarray(getattr(q, "q", q), dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ParameterError("q must be square")
    if not np.allclose(q, q.T, rtol=0.0, atol=1e-8 * max(1.0, np.abs(q).max())):
        raise ParameterError("q must be symmetric")
    if not 1 <= m <= q.shape[0]:
        raise ParameterError(f"m must be in [1, {q.shape[0]}], got {m}")
    lam, u = np.linalg.eigh(0.5 * (q + q.T))
    top = lam[-1]
    if lam[0] < -1e-8 * max(top, 1.0):
        raise ParameterError("q must be positive semidefinite")
    lam = np.clip(lam[::-1], 0.0, None)
    u = u[:, ::-1]
    rank = int(np.sum(lam > RANK_TOL * max(top, 0.0)))
    if rank < m:
        warnings.warn(
            f"gram matrix has rank {rank} < m = {m}; trailing singular values are zero",
            RuntimeWarning,
        )
    a = np.sqrt(lam[:m])[:, None] * u[:, :m].T
    return SensingMatrix(a=a, method=method)


def power_rescale(
    model: SystemModel, sm: SensingMatrix, r_x: Optional[np.ndarray] = None
) -> SensingMatrix:
    """Scale a matrix so the transmit power meets the budget with equality."""
    power = transmit_power(model, sm, r_x)
    if not power > 0:
        raise ParameterError("cannot rescale a matrix with zero transmit power")
    scale = math.sqrt(model.p / power)
    return replace(sm, a=sm.a * scale, power_normalized=True)


def _descend_power_shell(value_grad, phi, p, a0, max_iter: int, rel_tol: float):
    """Monotone projected gradient over factors on the shell <Phi, A^T A> = P.

    Radial renormalization after every move keeps the power budget tight;
    backtracking halves the step until the objective decreases and each
    accepted step grows the trial step.  Stops on a failed line search or
    after several consecutive negligible improvements.
    """

    def rescale(a):
        power = float(np.einsum("ij,jk,ik->", a, phi, a))
        if not power > 0:
            raise NumericalError("zero transmit power during factor refinement")
        return a * math.sqrt(p / power)

    a = rescale(np.asarray(a0, dtype=float))
    value, grad = value_grad(a)
    grad_norm = float(np.linalg.norm(grad))
    if not grad_norm > 0:
        return a, value, 0
    step = 1e-2 * float(np.linalg.norm(a)) / grad_norm
    accepted = 0
    stalled = 0
    for _ in range(max_iter):
        for _ in range(60):
            trial = rescale(a - step * grad)
            trial_value, trial_grad = value_grad(trial)
            if trial_value < value:
                break
            step *= 0.5
        else:
            break
        improvement = value - trial_value
        a, value, grad = trial, trial_value, trial_grad
        step *= 1.8
        accepted += 1
        if improvement <= rel_tol * max(1.0, abs(value)):
            stalled += 1
            if stalled >= 5:
                break
        else:
            stalled = 0
    return a, value, accepted


def refine_factor(
    model: SystemModel,
    ensemble: SupportEnsemble,
    sm,
    max_iter: int = REFINE_MAX_ITER,
) -> SensingMatrix:
    """Descend the oracle bound over M x L factors from a feasible start.

    Deterministic local refinement: the objective is the bound itself
    evaluated at A^T A, the iterate stays on the transmit-power shell, and
    only decreasing steps are accepted, so the result is never worse than
    the input.  Closes most of the truncation gap whenever the relaxed
    optimizer carries more than M significant eigenvalues.
    """
    _check_ensemble(model, ensemble)
    a0 = as_matrix(sm)
    if a0.shape != (model.m, model.l):
        raise ParameterError(
            f"matrix shape {a0.shape} does not match model ({model.m}, {model.l})"
        )
    r_x = source_covariance(model, ensemble)
    phi = power_matrix(model, r_x)
    r_inv = _spd_inverse(model.r, "r")

    def value_grad(a):
        value, grad_q = _gram_value_gradient(model, a.T @ a, ensemble.supports, r_inv)
        return value, 2.0 * (a @ grad_q)

    a, _, _ = _descend_power_shell(
        value_grad, phi, model.p, a0, max_iter, REFINE_REL_TOL
    )
    method = sm.method if isinstance(sm, SensingMatrix) else "refined"
    return SensingMatrix(
        a=a,
        method=method,
        power_normalized=True,
        seed=getattr(sm, "seed", None),
        solver_trace=getattr(sm, "solver_trace", None),
    )


# -----------------------------------------------------------------------------
# relaxation-based designs
# -----------------------------------------------------------------------------


def design_lower_bound(
    model: SystemModel,
    ensemble: SupportEnsemble,
    options: Optional[SolverOptions] = None,
    refine_iters: int = REFINE_MAX_ITER,
    starts: int = REFINE_STARTS,
    bound_slack: float = REFINE_BOUND_SLACK,
) -> SensingMatrix:
    """Relax, factor to rank M, rescale to the power budget, then refine.

    The truncation step is Frobenius-optimal for the Gram matrix but not
    for the bound, and the two differ badly when the relaxed spectrum is
    flat; a projected-gradient pass therefore descends the bound itself
    within the rank budget.  The pass runs from the truncated factor and
    from `starts - 1` seeded unstructured factors: near saturation the
    bound has a basin of near-equivalent local minima whose decoding
    behavior differs (the truncated eigenbasis in particular can alias
    shifted sparsity patterns), so among candidates within `bound_slack`
    of the best bound the one with the smallest mutual coherence wins.
    When the relaxed optimizer has rank at most M the truncated start is
    exact and wins on the bound outright.
    """
    candidate, trace = solve_sdr(model, ensemble, options)
    sm = low_rank_factor(candidate.q, model.m, method="lower_bound")
    r_x = source_covariance(model, ensemble)
    sm = power_rescale(model, sm, r_x)
    if refine_iters <= 0:
        return replace(sm, solver_trace=trace)
    if starts < 1:
        raise ParameterError("starts must be >= 1")
    if not 0.0 <= bound_slack < 1.0:
        raise ParameterError("bound_slack must be in [0, 1)")
    inits = [sm]
    for j in range(starts - 1):
        rng = np.random.default_rng([model.m, model.l, j])
        a0 = _haar(model.m, rng) @ _haar(model.l, rng)[:, : model.m].T
        inits.append(
            power_rescale(model, SensingMatrix(a=a0, method="lower_bound"), r_x)
        )
    scored = []
    for j, init in enumerate(inits):
        refined = refine_factor(model, ensemble, init, max_iter=refine_iters)
        value = mse_lower_bound(model, ensemble, refined).value
        with warnings.catch_warnings():
            # truncated starts can carry structurally zero columns; the
            # coherence here is only a tie-break score, not user output
            warnings.simplefilter("ignore", RuntimeWarning)
            coherence = mutual_coherence(refined)
        scored.append((value, coherence, j, refined))
    floor = min(entry[0] for entry in scored)
    eligible = [entry for entry in scored if entry[0] <= floor * (1.0 + bound_slack)]
    _, _, _, best = min(eligible, key=lambda entry: (entry[1], entry[2]))
    return replace(best, solver_trace=trace)


def design_upper_bound(
    model: SystemModel,
    options: Optional[SolverOptions] = None,
    r_x: Optional[np.ndarray] = None,
) -> SensingMatrix:
    """Minimize the LMMSE MSE upper bound over feasible Gram matrices.

    Same machinery as the lower-bound design with a single "support"
    covering all N indices and base covariance Rx.
    """
    if model.sigma_w == 0:
        raise NumericalError("design_upper_bound requires sigma_w > 0")
    options = options or SolverOptions()
    if r_x is None:
        r_x = source_covariance(model, SupportEnsemble.full(model.n, model.k))
    phi = power_matrix(model, r_x)
    lam_phi = np.linalg.eigvalsh(phi)
    if lam_phi[0] <= 1e-14 * max(lam_phi[-1], 1.0):
        raise ParameterError("power matrix is singular; the feasible set is unbounded")
    rx_inv = _spd_inverse(r_x, "r_x")
    supports = np.arange(model.n, dtype=np.int64)[None, :]
    q0 = (model.p / float(np.trace(phi))) * np.eye(model.l)

    def value(qq):
        return _gram_value(model, qq, supports, rx_inv)

    def value_grad(qq):
        return _gram_value_gradient(model, qq, supports, rx_inv)

    q, _, trace = _solve_projected(value, value_grad, phi, model.p, q0, options)
    sm = low_rank_factor(q, model.m, method="upper_bound")
    sm = power_rescale(model, sm, r_x)
    return replace(sm, solver_trace=trace)


# -----------------------------------------------------------------------------
# closed forms
# -----------------------------------------------------------------------------


def _require_isotropic_r(model: SystemModel, who: str) -> float:
    r = model.r
    sigma2 = float(np.mean(np.diag(r)))
    if not np.allclose(r, sigma2 * np.eye(model.k), rtol=0.0, atol=1e-12 * max(sigma2, 1.0)):
        raise ParameterError(f"{who} requires an isotropic source covariance R = sigma_x^2 I")
    return sigma2


def _require_identity_h(model: SystemModel, who: str) -> None:
    if model.l != model.n or not np.allclose(
        model.h, np.eye(model.n), rtol=0.0, atol=1e-12
    ):
        raise ParameterError(f"{who} requires H = I")


def closed_form_case1(model: SystemModel) -> SensingMatrix:
    """Isotropic source, identity map: any power-rescaled tight frame [I_M 0]."""
    _require_isotropic_r(model, "closed_form_case1")
    _require_identity_h(model, "closed_form_case1")
    a = np.zeros((model.m, model.l))
    a[:, : model.m] = np.eye(model.m)
    return power_rescale(model, SensingMatrix(a=a, method="closed_form_case1"))


def closed_form_case2(model: SystemModel) -> SensingMatrix:
    """Isotropic source, sigma_v = 0, square full-rank H: channel inversion.

    With the singular values of H sorted ascending, A carries their
    reciprocals on the first M directions so that the effective matrix
    g A H is a tight frame.
    """
    _require_isotropic_r(model, "closed_form_case2")
    if model.sigma_v != 0:
        raise ParameterError("closed_form_case2 requires sigma_v = 0")
    if model.l != model.n:
        raise ParameterError("closed_form_case2 requires a square H")
    u, s, _ = np.linalg.svd(model.h)
    if s[-1] <= RANK_TOL * s[0]:
        raise ParameterError("closed_form_case2 requires a full-rank H")
    s_asc = s[::-1]
    u_asc = u[:, ::-1]
    a = (1.0 / s_asc[: model.m])[:, None] * u_asc[:, : model.m].T
    return power_rescale(model, SensingMatrix(a=a, method="closed_form_case2"))


def closed_form_case3(model: SystemModel) -> SensingMatrix:
    """Isotropic source, identity map, noiseless channel (sigma_w = 0).

    The bound depends on A only through its row space, so the truncated
    identity with identity right rotation is optimal.
    """
    _require_isotropic_r(model, "closed_form_case3")
    _require_identity_h(model, "closed_form_case3")
    if model.sigma_w != 0:
        raise ParameterError("closed_form_case3 requires sigma_w = 0")
    a = np.zeros((model.m, model.l))
    a[:, : model.m] = np.eye(model.m)
    return power_rescale(model, SensingMatrix(a=a, method="closed_form_case3"))


def closed_form_case4(model: SystemModel, ensemble: SupportEnsemble) -> SensingMatrix:
    """Low channel-SNR limit (sigma_v = 0, g^2/sigma_w^2 -> 0): rank-1 beamforming.

    Maximizes the linearized objective trace(T Q) with
    T = mean_S H E_S R^2 E_S^T H^T subject to the power constraint; the
    optimizer is rank one along the generalized direction given by the
    smallest eigenvalue of Z = T^-1/2 H Rx H^T T^-1/2.
    """
    _check_ensemble(model, ensemble)
    if model.sigma_v != 0:
        raise ParameterError("closed_form_case4 requires sigma_v = 0")
    from . import _kernels

    r2 = model.r @ model.r
    t_n = _kernels.accumulate_support_blocks(ensemble.supports, r2, model.n)
    t = model.h @ (t_n / ensemble.count) @ model.h.T
    lam_t, u_t = np.linalg.eigh(0.5 * (t + t.T))
    if lam_t[0] <= 1e-14 * max(lam_t[-1], 1.0):
        raise NumericalError("support-averaged matrix T is singular")
    t_inv_half = (u_t * lam_t**-0.5) @ u_t.T
    r_x = source_covariance(model, ensemble)
    z = t_inv_half @ (model.h @ r_x @ model.h.T) @ t_inv_half
    lam_z, u_z = np.linalg.eigh(0.5 * (z + z.T))
    direction = t_inv_half @ u_z[:, 0]  # smallest eigenvalue; ties -> lowest index
    q = (model.p / lam_z[0]) * np.outer(direction, direction)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # rank-1 by construction
        sm = low_rank_factor(q, model.m, method="closed_form_case4")
    return power_rescale(model, sm, r_x)


# -----------------------------------------------------------------------------
# baselines
# -----------------------------------------------------------------------------


def design_gaussian(
    model: SystemModel, rng: np.random.Generator, r_x: Optional[np.ndarray] = None
) -> SensingMatrix:
    """iid standard normal entries, rescaled to the power budget."""
    a = rng.standard_normal((model.m, model.l))
    return power_rescale(model, SensingMatrix(a=a, method="gaussian"), r_x)


def design_tight_frame(
    model: SystemModel, rng: np.random.Generator, r_x: Optional[np.ndarray] = None
) -> SensingMatrix:
    """Haar-random tight frame U [I_M 0] V^T, rescaled to the power budget."""
    u = _haar(model.m, rng)
    v = _haar(model.l, rng)
    a = u @ v[:, : model.m].T
    return power_rescale(model, SensingMatrix(a=a, method="tight_frame"), r_x)


def design_randomized(
    model: SystemModel,
    ensemble: SupportEnsemble,
    q,
    realizations: int,
    rng: np.random.Generator,
) -> SensingMatrix:
    """Random factors A = V Gamma^1/2 U_q^T with E[A^T A] = Q; keep the best.

    Each candidate is power-rescaled and scored by the lower bound on the
    given ensemble; ties keep the earliest candidate.
    """
    _check_ensemble(model, ensemble)
    if realizations < 1:
        raise ParameterError("realizations must be >= 1")
    q = np.asarray(getattr(q, "q", q), dtype=float)
    lam, u = np.linalg.eigh(0.5 * (q + q.T))
    lam = np.clip(lam, 0.0, None)
    w = np.sqrt(lam)[:, None] * u.T
    r_x = source_covariance(model, ensemble)
    best = None
    best_value = np.inf
    for _ in range(realizations):
        v = rng.standard_normal((model.m, model.l)) / math.sqrt(model.m)
        cand = power_rescale(model, SensingMatrix(a=v @ w, method="randomized"), r_x)
        value = mse_lower_bound(model, ensemble, cand).value
        if value < best_value:
            best, best_value = cand, value
    return best


def _haar(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim))
    qf, rf = np.linalg.qr(z)
    d = np.sign(np.diag(rf))
    d[d == 0] = 1.0
    return qf * d
