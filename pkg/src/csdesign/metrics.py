"""Closed-form objectives and diagnostics for a fixed sensing matrix.

The central quantity is the support-averaged oracle-MSE lower bound

    bound(A) = mean_S trace( (R^-1 + g^2 E_S^T H^T A^T Rn^-1 A H E_S)^-1 ),

evaluated over a full or sampled support ensemble.  The LMMSE counterpart
replaces the per-support average by the marginal source covariance and upper
bounds the decoder MSE.  With sigma_w = 0 the noise covariance is singular
and Rn^-1 is replaced by the pseudo-inverse, which reduces the information
matrix to a row-space projector of A scaled by 1/sigma_v^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import NumericalError, ParameterError
from .model import (
    SupportEnsemble,
    SystemModel,
    _check_ensemble,
    as_matrix,
    noise_covariance,
    source_covariance,
)

# relative eigenvalue cutoff for the sigma_w = 0 pseudo-inverse path
PINV_RANK_TOL = 1e-10


@dataclass(frozen=True)
class BoundReport:
    """Value of the oracle-MSE lower bound plus its per-support breakdown."""

    value: float
    ensemble_kind: str
    supports: Optional[np.ndarray] = None
    per_support_terms: Optional[np.ndarray] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["support", "term"])
            if self.per_support_terms is not None:
                for row, term in zip(self.supports, self.per_support_terms):
                    writer.writerow([" ".join(str(i) for i in row), f"{term:.17g}"])


# -----------------------------------------------------------------------------
# information matrix
# -----------------------------------------------------------------------------

def _noise_solve(model: SystemModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rn^-1 b, or Rn^+ b through the row-space projector when sigma_w = 0."""
    if model.sigma_w > 0:
        rn = noise_covariance(model, a)
        return np.linalg.solve(rn, b)
    if model.sigma_v > 0:
        # Rn = g^2 sigma_v^2 A A^T; Rn^+ = (g^2 sigma_v^2)^-1 (A A^T)^+
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        keep = s**2 > PINV_RANK_TOL * (s[0] ** 2 if s.size else 0.0)
        uk, sk = u[:, keep], s[keep]
        scale = 1.0 / (model.g**2 * model.sigma_v**2)
        return scale * (uk @ ((uk.T @ b).T / sk**2).T)
    raise NumericalError("total noise covariance is singular: sigma_v = sigma_w = 0")


def observation_information(model: SystemModel, a) -> np.ndarray:
    """g^2 (AH)^T Rn^(-1) (AH), an N x N PSD matrix (pseudo-inverse if sigma_w = 0)."""
    a = as_matrix(a)
    if a.shape != (model.m, model.l):
        raise ParameterError(f"a must have shape ({model.m}, {model.l}), got {a.shape}")
    ah = a @ model.h
    info = model.g**2 * (ah.T @ _noise_solve(model, a, ah))
    return 0.5 * (info + info.T)


# -----------------------------------------------------------------------------
# bounds
# -----------------------------------------------------------------------------

def mse_lower_bound(model: SystemModel, ensemble: SupportEnsemble, a) -> BoundReport:
    """Support-averaged trace of the per-support oracle error covariance.

    Lower bounds the MSE of every estimator of x from y, with equality for
    the support-aware oracle MMSE estimator averaged over the ensemble.
    """
    _check_ensemble(model, ensemble)
    info = observation_information(model, a)
    r_inv = _spd_inverse(model.r, "r")
    terms = _kernels.support_trace_terms(info, ensemble.supports, r_inv)
    return BoundReport(
        value=float(np.mean(terms)),
        ensemble_kind=ensemble.kind,
        supports=ensemble.supports,
        per_support_terms=terms,
    )


def mse_lower_bound_sampled(
    model: SystemModel, omega_prime_size: int, seed: int, a
) -> BoundReport:
    """Bound over a fresh uniformly sampled ensemble of the given size."""
    ens = SupportEnsemble.sampled(model.n, model.k, omega_prime_size, seed)
    return mse_lower_bound(model, ens, a)


def lmmse_mse(model: SystemModel, a, r_x: Optional[np.ndarray] = None) -> float:
    """MSE of the (support-blind) LMMSE estimator: trace((Rx^-1 + info)^-1).

    `r_x` defaults to the exact full-ensemble source covariance; pass it
    explicitly when C(N, K) is too large to enumerate.
    """
    if r_x is None:
        r_x = source_covariance(model, SupportEnsemble.full(model.n, model.k))
    info = observation_information(model, a)
    rx_inv = _spd_inverse(r_x, "r_x")
    return float(np.trace(_spd_inverse(rx_inv + info, "Rx^-1 + information")))


def transmit_power(model: SystemModel, a, r_x: Optional[np.ndarray] = None) -> float:
    """trace(A (H Rx H^T + sigma_v^2 I) A^T), the average transmit power."""
    a = as_matrix(a)
    phi = power_matrix(model, r_x)
    return float(np.einsum("ml,ml->", a @ phi, a))


def power_matrix(model: SystemModel, r_x: Optional[np.ndarray] = None) -> np.ndarray:
    """H Rx H^T + sigma_v^2 I, the quadratic form behind the power constraint."""
    if r_x is None:
        r_x = source_covariance(model, SupportEnsemble.full(model.n, model.k))
    phi = model.h @ r_x @ model.h.T
    phi[np.diag_indices(model.l)] += model.sigma_v**2
    return 0.5 * (phi + phi.T)


# -----------------------------------------------------------------------------
# empirical metrics and matrix diagnostics
# -----------------------------------------------------------------------------

def nmse(x_true: np.ndarray, x_hat: np.ndarray, k: int, db: bool = False) -> float:
    """Mean squared error normalized by the sparsity level, optionally in dB."""
    x_true = np.atleast_2d(np.asarray(x_true, dtype=float))
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=float))
    if x_true.shape != x_hat.shape:
        raise ParameterError("x_true and x_hat must have matching shapes")
    value = float(np.mean(np.sum((x_true - x_hat) ** 2, axis=1)) / k)
    if db:
        return 10.0 * np.log10(value)
    return value


def mutual_coherence(a) -> float:
    """Largest normalized inner product between distinct columns.

    Zero columns are skipped (with a warning); fewer than two usable columns
    give 0.
    """
    import warnings

    a = as_matrix(a)
    norms = np.linalg.norm(a, axis=0)
    usable = norms > 1e-14 * (norms.max() if norms.size else 0.0)
    if not np.all(usable):
        warnings.warn("zero columns skipped in mutual coherence", RuntimeWarning)
    cols = a[:, usable] / norms[usable]
    if cols.shape[1] < 2:
        return 0.0
    gram = np.abs(cols.T @ cols)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def frame_potential(a) -> float:
    """Frobenius distance of the column Gram matrix from the identity."""
    a = as_matrix(a)
    gram = a.T @ a
    gram[np.diag_indices(gram.shape[0])] -= 1.0
    return float(np.linalg.norm(gram))


# -----------------------------------------------------------------------------
# helpers
# -----------------------------------------------------------------------------

def _spd_inverse(mat: np.ndarray, label: str) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{label} is not positive definite") from exc
    inv_chol = np.linalg.solve(chol, np.eye(mat.shape[0]))
    out = inv_chol.T @ inv_chol
    return 0.5 * (out + out.T)
