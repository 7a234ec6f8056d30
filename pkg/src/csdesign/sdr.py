"""Gram-space relaxation of the sensing-matrix design problem.

Lifting Q = A^T A turns the support-averaged oracle-MSE bound into a convex
function of Q over {Q PSD, trace(Phi Q) <= P}, at the price of dropping the
rank-M constraint.  With c = sigma_w^2 / (g^2 sigma_v^2) the channel term

    g^2 A^T Rn^-1 A  =  (1 / sigma_v^2) Q (cI + Q)^-1        (sigma_v > 0)
                     =  (g^2 / sigma_w^2) Q                  (sigma_v = 0)

depends on A only through Q, so the objective and its gradient are exact in
the lifted variable.  The solver is a monotone spectral projected-gradient
method; the feasible set is handled by an exact Euclidean projection whose
power multiplier is found by safeguarded root finding.  The LMI certificate
of the equivalent semidefinite program can be instantiated from any feasible
Q and checked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NumericalError, ParameterError
from .metrics import _spd_inverse, power_matrix
from .model import SupportEnsemble, SystemModel, _check_ensemble, source_covariance

# -----------------------------------------------------------------------------
# containers
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class GramCandidate:
    """A feasible point of the relaxed problem with its feasibility residuals."""

    q: np.ndarray
    objective: float
    power_slack: float
    min_eigenvalue: float


@dataclass(frozen=True)
class SlackWitness:
    """Certificate variables (per-support X_S blocks and Y) for the LMI form."""

    x_s: Sequence[np.ndarray]
    y: np.ndarray


@dataclass(frozen=True)
class SolverTrace:
    """Per-iteration history of the projected-gradient run."""

    objective: np.ndarray
    step: np.ndarray
    grad_norm: np.ndarray
    power_slack: np.ndarray
    termination: str  # "converged" | "max_iter" | "stalled"

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "step", "grad_norm", "power_slack"])
            for i in range(self.iterations):
                writer.writerow(
                    [
                        i,
                        f"{self.objective[i]:.17g}",
                        f"{self.step[i]:.17g}",
                        f"{self.grad_norm[i]:.17g}",
                        f"{self.power_slack[i]:.17g}",
                    ]
                )


@dataclass
class SolverOptions:
    """Tuning knobs for the projected-gradient solver."""

    max_iter: int = 5000
    objective_rel_tol: float = 1e-9  # relative decrease over `stall_window` iterations
    stall_window: int = 10
    pg_tol: float = 1e-7  # scaled by (1 + |objective|)
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    step_init: Optional[float] = None  # None -> ||q0||_F / ||grad0||_F
    step_min: float = 1e-20
    step_max: float = 1e16


@dataclass(frozen=True)
class LmiReport:
    """Numerical feasibility summary of an LMI certificate at a given Q."""

    min_eig_support_blocks: float
    min_eig_channel_block: float
    q_min_eigenvalue: float
    power_slack: float
    trace_sum: float
    objective: float
    trace_dominates_objective: bool

    def feasible(self, tol: float = 1e-8) -> bool:
        return (
            self.min_eig_support_blocks >= -tol
            and self.min_eig_channel_block >= -tol
            and self.q_min_eigenvalue >= -tol
            and self.power_slack >= -tol
        )


# -----------------------------------------------------------------------------
# objective and gradient
# -----------------------------------------------------------------------------


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def _gram_information_parts(model: SystemModel, q: np.ndarray, validate: bool = False):
    """N x N information matrix H^T B(Q) H and, for sigma_v > 0, (cI + Q)^-1."""
    if model.sigma_w == 0:
        raise NumericalError("the Gram-space objective requires sigma_w > 0")
    q = _sym(np.asarray(q, dtype=float))
    if q.shape != (model.l, model.l):
        raise ParameterError(f"q must have shape ({model.l}, {model.l}), got {q.shape}")
    gain = model.g**2 / model.sigma_w**2
    if model.sigma_v == 0:
        if validate:
            lam = np.linalg.eigvalsh(q)
            if lam[0] < -1e-10 * max(lam[-1], 1.0):
                raise ParameterError("q must be positive semidefinite")
        b = gain * q
        sandwich = None
    else:
        c = model.sigma_w**2 / (model.g**2 * model.sigma_v**2)
        lam, u = np.linalg.eigh(q)
        if validate and lam[0] < -1e-10 * max(lam[-1], 1.0):
            raise ParameterError("q must be positive semidefinite")
        lam = np.clip(lam, 0.0, None)
        b = (u * (lam / (model.sigma_v**2 * (c + lam)))) @ u.T
        sandwich = (u * (1.0 / (c + lam))) @ u.T
    info = model.h.T @ b @ model.h
    return _sym(info), sandwich


def _gram_value(model, q, supports, base_inv, validate=False) -> float:
    info, _ = _gram_information_parts(model, q, validate=validate)
    terms = _kernels.support_trace_terms(info, supports, base_inv)
    return float(np.mean(terms))


def _gram_value_gradient(model, q, supports, base_inv, validate=False):
    info, sandwich = _gram_information_parts(model, q, validate=validate)
    terms, w_sum = _kernels.support_trace_terms_with_scatter(
        info, supports, base_inv, model.n
    )
    w = model.h @ (w_sum / supports.shape[0]) @ model.h.T
    if model.sigma_v == 0:
        grad = -(model.g**2 / model.sigma_w**2) * w
    else:
        c = model.sigma_w**2 / (model.g**2 * model.sigma_v**2)
        grad = -(c / model.sigma_v**2) * (sandwich @ w @ sandwich)
    return float(np.mean(terms)), _sym(grad)


def relaxed_objective(model: SystemModel, ensemble: SupportEnsemble, q) -> float:
    """Oracle-MSE lower bound expressed in the Gram variable Q = A^T A.

    Equals `mse_lower_bound` at any A with A^T A = Q (for sigma_w > 0).
    """
    _check_ensemble(model, ensemble)
    base_inv = _spd_inverse(model.r, "r")
    return _gram_value(model, q, ensemble.supports, base_inv, validate=True)


def relaxed_gradient(model: SystemModel, ensemble: SupportEnsemble, q) -> np.ndarray:
    """Gradient of `relaxed_objective` with respect to the symmetric Q."""
    _check_ensemble(model, ensemble)
    base_inv = _spd_inverse(model.r, "r")
    _, grad = _gram_value_gradient(model, q, ensemble.supports, base_inv, validate=True)
    return grad


# -----------------------------------------------------------------------------
# feasible-set projection
# -----------------------------------------------------------------------------


def psd_clip(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the PSD cone (eigenvalue clipping)."""
    x = _sym(np.asarray(x, dtype=float))
    lam, u = np.linalg.eigh(x)
    if lam[0] >= 0.0:
        return x
    return _sym((u * np.clip(lam, 0.0, None)) @ u.T)


def project_feasible(x: np.ndarray, phi: np.ndarray, p: float, warm_mu: float = 0.0):
    """Euclidean projection onto {Q PSD, <Phi, Q> <= P}.

    The optimal point is psd_clip(x - mu * Phi) for the smallest mu >= 0
    meeting the power constraint; mu is located by bracketing plus an
    Illinois-type secant iteration.  Returns (projection, mu).
    """
    x = _sym(np.asarray(x, dtype=float))
    q0 = psd_clip(x)
    budget = float(np.einsum("ij,ij->", phi, q0))
    if budget <= p * (1.0 + 1e-12):
        return q0, 0.0

    def excess(mu: float):
        q = psd_clip(x - mu * phi)
        return float(np.einsum("ij,ij->", phi, q)) - p, q

    lo, f_lo = 0.0, budget - p
    hi = warm_mu if warm_mu > 0.0 else (budget - p) / max(np.einsum("ij,ij->", phi, phi), 1e-300)
    f_hi, q_hi = excess(hi)
    grow = 0
    while f_hi > 0.0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi, q_hi = excess(hi)
        grow += 1
        if grow > 200:
            raise NumericalError("projection bracketing failed; power matrix may be singular")

    tol = 1e-12 * p + 1e-300
    best_q, best_mu = q_hi, hi
    side = 0
    for _ in range(200):
        mu = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not np.isfinite(mu) or not (lo < mu < hi):
            mu = 0.5 * (lo + hi)
        fm, qm = excess(mu)
        if fm <= 0.0 and fm >= -tol:
            return qm, mu
        if abs(fm) <= tol:
            if fm <= 0:
                return qm, mu
            # at the root from the infeasible side by at most tol: shrink onto
            # the boundary instead of falling back to a stale feasible iterate
            return qm * (p / (p + fm)), mu
        if fm > 0.0:
            lo, f_lo = mu, fm
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi = mu, fm
            best_q, best_mu = qm, mu
            if side == -1:
                f_lo *= 0.5
            side = -1
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return best_q, best_mu


# -----------------------------------------------------------------------------
# projected-gradient solver
# -----------------------------------------------------------------------------


def _solve_projected(
    value_fn: Callable[[np.ndarray], float],
    value_grad_fn: Callable[[np.ndarray], tuple],
    phi: np.ndarray,
    p: float,
    q0: np.ndarray,
    options: SolverOptions,
):
    """Monotone spectral projected gradient over {Q PSD, <Phi, Q> <= P}."""
    q = _sym(q0)
    f, grad = value_grad_fn(q)
    hist_f = [f]
    hist_step = [0.0]
    hist_pg = [np.nan]
    hist_slack = [p - float(np.einsum("ij,ij->", phi, q))]
    termination = "max_iter"
    prev_q = prev_grad = None
    step = options.step_init or (
        np.linalg.norm(q) / max(np.linalg.norm(grad), 1e-300)
    )
    mu_warm = 0.0
    for _ in range(options.max_iter):
        if prev_q is not None:
            dq = q - prev_q
            dg = grad - prev_grad
            denom = float(np.einsum("ij,ij->", dq, dg))
            if denom > 1e-300:
                step = float(np.einsum("ij,ij->", dq, dq)) / denom
            else:
                step = step * 10.0
        step = min(max(step, options.step_min), options.step_max)
        t = step
        accepted = False
        qn = q
        fn = f
        moved = 0.0
        while t >= options.step_min:
            qn, mu = project_feasible(q - t * grad, phi, p, warm_mu=mu_warm)
            diff = qn - q
            moved = float(np.einsum("ij,ij->", diff, diff))
            if moved == 0.0:
                fn, accepted = f, True
                break
            fn = value_fn(qn)
            if fn <= f - options.armijo_c1 / t * moved + 1e-15 * abs(f):
                accepted = True
                mu_warm = mu
                break
            t *= options.backtrack
        if not accepted:
            termination = "stalled"
            break
        pg_norm = np.sqrt(moved) / t
        hist_f.append(fn)
        hist_step.append(t)
        hist_pg.append(pg_norm)
        hist_slack.append(p - float(np.einsum("ij,ij->", phi, qn)))
        if moved == 0.0 or pg_norm <= options.pg_tol * (1.0 + abs(fn)):
            q, f = qn, fn
            termination = "converged"
            break
        prev_q, prev_grad = q, grad
        q = qn
        f, grad = value_grad_fn(q)
        window = options.stall_window
        if len(hist_f) > window:
            drop = hist_f[-window - 1] - hist_f[-1]
            if drop <= options.objective_rel_tol * max(1.0, abs(hist_f[-1])):
                termination = "converged"
                break
    trace = SolverTrace(
        objective=np.asarray(hist_f),
        step=np.asarray(hist_step),
        grad_norm=np.asarray(hist_pg),
        power_slack=np.asarray(hist_slack),
        termination=termination,
    )
    return _sym(q), float(f), trace


def solve_sdr(
    model: SystemModel,
    ensemble: SupportEnsemble,
    options: Optional[SolverOptions] = None,
):
    """Minimize the relaxed objective over feasible Gram matrices.

    Returns (GramCandidate, SolverTrace).  Initialization is the isotropic
    feasible point (P / trace(Phi)) I, which is already optimal in the
    isotropic-source identity-map case.
    """
    _check_ensemble(model, ensemble)
    if model.sigma_w == 0:
        raise NumericalError("solve_sdr requires sigma_w > 0; use the closed forms instead")
    options = options or SolverOptions()
    r_x = source_covariance(model, ensemble)
    phi = power_matrix(model, r_x)
    lam_phi = np.linalg.eigvalsh(phi)
    if lam_phi[0] <= 1e-14 * max(lam_phi[-1], 1.0):
        raise ParameterError("power matrix is singular; the feasible set is unbounded")
    base_inv = _spd_inverse(model.r, "r")
    supports = ensemble.supports
    q0 = (model.p / float(np.trace(phi))) * np.eye(model.l)

    def value(qq):
        return _gram_value(model, qq, supports, base_inv)

    def value_grad(qq):
        return _gram_value_gradient(model, qq, supports, base_inv)

    q, f, trace = _solve_projected(value, value_grad, phi, model.p, q0, options)
    lam_q = np.linalg.eigvalsh(q)
    candidate = GramCandidate(
        q=q,
        objective=f,
        power_slack=model.p - float(np.einsum("ij,ij->", phi, q)),
        min_eigenvalue=float(lam_q[0]),
    )
    return candidate, trace


# -----------------------------------------------------------------------------
# LMI certificate
# -----------------------------------------------------------------------------


def canonical_witness(model: SystemModel, ensemble: SupportEnsemble, q) -> SlackWitness:
    """Schur-complement witness (X_S = M_S^-1, Y = (g^2/sigma_w^2) Q(cI+Q)^-1 Q)."""
    _check_ensemble(model, ensemble)
    if model.sigma_v == 0 or model.sigma_w == 0:
        raise ParameterError("the LMI certificate requires sigma_v > 0 and sigma_w > 0")
    q = _sym(np.asarray(q, dtype=float))
    c = model.sigma_w**2 / (model.g**2 * model.sigma_v**2)
    gain = model.g**2 / model.sigma_w**2
    lam, u = np.linalg.eigh(q)
    lam = np.clip(lam, 0.0, None)
    y = _sym((u * (gain * lam**2 / (c + lam))) @ u.T)
    info, _ = _gram_information_parts(model, q)
    r_inv = _spd_inverse(model.r, "r")
    x_s = []
    for row in ensemble.supports:
        m_s = r_inv + info[np.ix_(row, row)]
        x_s.append(_spd_inverse(m_s, "per-support information"))
    return SlackWitness(x_s=tuple(x_s), y=y)


def verify_lmi_witness(
    model: SystemModel, ensemble: SupportEnsemble, q, witness: SlackWitness
) -> LmiReport:
    """Check both LMI families of the lifted program at (Q, witness).

    Reports minimum block eigenvalues, the power slack, and the certificate
    trace sum compared against C * relaxed_objective(Q).
    """
    _check_ensemble(model, ensemble)
    if model.sigma_v == 0 or model.sigma_w == 0:
        raise ParameterError("the LMI certificate requires sigma_v > 0 and sigma_w > 0")
    q = _sym(np.asarray(q, dtype=float))
    if len(witness.x_s) != ensemble.count:
        raise ParameterError(
            f"witness has {len(witness.x_s)} X_S blocks; ensemble has {ensemble.count}"
        )
    c = model.sigma_w**2 / (model.g**2 * model.sigma_v**2)
    gain = model.g**2 / model.sigma_w**2
    beta = model.g / model.sigma_w
    y = _sym(np.asarray(witness.y, dtype=float))
    shrunk = model.h.T @ (gain * q - y) @ model.h  # N x N
    r_inv = _spd_inverse(model.r, "r")
    k = model.k
    eye_k = np.eye(k)
    min_support = np.inf
    trace_sum = 0.0
    for row, x_blk in zip(ensemble.supports, witness.x_s):
        tl = r_inv + shrunk[np.ix_(row, row)]
        block = np.block([[tl, eye_k], [eye_k, np.asarray(x_blk, dtype=float)]])
        min_support = min(min_support, float(np.linalg.eigvalsh(_sym(block))[0]))
        trace_sum += float(np.trace(x_blk))
    channel = np.block(
        [[y, beta * q], [beta * q, c * np.eye(model.l) + q]]
    )
    min_channel = float(np.linalg.eigvalsh(_sym(channel))[0])
    r_x = source_covariance(model, ensemble)
    phi = power_matrix(model, r_x)
    power_slack = model.p - float(np.einsum("ij,ij->", phi, q))
    objective = relaxed_objective(model, ensemble, q)
    scaled = ensemble.count * objective
    dominates = trace_sum >= scaled - 1e-8 * max(1.0, abs(scaled))
    return LmiReport(
        min_eig_support_blocks=float(min_support),
        min_eig_channel_block=min_channel,
        q_min_eigenvalue=float(np.linalg.eigvalsh(q)[0]),
        power_slack=power_slack,
        trace_sum=trace_sum,
        objective=objective,
        trace_dominates_objective=bool(dominates),
    )
