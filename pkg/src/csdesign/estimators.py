"""Decoders for the compressed noisy observations.

All estimators consume y = g A (Hx + v) + w and the model that produced it.
`oracle_mmse` knows the true support and attains the per-support MSE bound;
`mmse_exhaustive` mixes the oracle means over all supports with log-domain
posterior weights; `lmmse` is the support-blind linear estimator; `omp` and
`random_omp` are greedy decoders on the effective matrix g A H, the latter
averaging oracle means over stochastically sampled supports.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError, ParameterError
from .metrics import _noise_solve, _spd_inverse, observation_information
from .model import (
    SupportEnsemble,
    SystemModel,
    as_matrix,
    noise_covariance,
    source_covariance,
)

# exhaustive posterior mixing is refused above this support count
EXHAUSTIVE_LIMIT = 10**5


@dataclass(frozen=True)
class Reconstruction:
    """Estimate of the sparse source, with optional support information."""

    x_hat: np.ndarray
    support_estimate: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None


# -----------------------------------------------------------------------------
# support-aware estimators
# -----------------------------------------------------------------------------

def _checked_matrix(model: SystemModel, a) -> np.ndarray:
    a = as_matrix(a)
    if a.shape != (model.m, model.l):
        raise ParameterError(f"a must have shape ({model.m}, {model.l}), got {a.shape}")
    return a


def _checked_support(model: SystemModel, support) -> np.ndarray:
    sup = np.sort(np.asarray(support, dtype=np.int64).ravel())
    if sup.size != model.k or np.unique(sup).size != model.k:
        raise ParameterError(f"support must hold {model.k} distinct indices")
    if sup[0] < 0 or sup[-1] >= model.n:
        raise ParameterError(f"support indices must lie in [0, {model.n})")
    return sup


def oracle_mmse(model: SystemModel, a, y: np.ndarray, support) -> Reconstruction:
    """Conditional-mean estimate given the true support.

    x_hat_S = (R^-1 + g^2 (AHE_S)^T Rn^-1 AHE_S)^-1 g (AHE_S)^T Rn^-1 y;
    with a noiseless chain this degenerates to least squares on the support
    columns.
    """
    a = _checked_matrix(model, a)
    y = np.asarray(y, dtype=float)
    sup = _checked_support(model, support)
    ahs = (a @ model.h)[:, sup]
    if model.sigma_v == 0 and model.sigma_w == 0:
        coef, *_ = np.linalg.lstsq(model.g * ahs, y, rcond=None)
    else:
        stacked = _noise_solve(model, a, np.column_stack([ahs, y]))
        j = model.g**2 * (ahs.T @ stacked[:, : model.k])
        rhs = model.g * (ahs.T @ stacked[:, model.k])
        r_inv = _spd_inverse(model.r, "r")
        try:
            coef = np.linalg.solve(r_inv + 0.5 * (j + j.T), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular posterior information matrix") from exc
    x_hat = np.zeros(model.n)
    x_hat[sup] = coef
    return Reconstruction(x_hat=x_hat, support_estimate=sup)


def lmmse_filter(
    model: SystemModel, a, r_x: Optional[np.ndarray] = None
) -> np.ndarray:
    """N x M matrix F with x_hat = F y for the support-blind linear MMSE."""
    a = _checked_matrix(model, a)
    ah = a @ model.h
    if model.sigma_v == 0 and model.sigma_w == 0:
        return np.linalg.pinv(model.g * ah)
    if r_x is None:
        r_x = source_covariance(model, SupportEnsemble.full(model.n, model.k))
    w = _noise_solve(model, a, ah)
    info = model.g**2 * (ah.T @ w)
    rx_inv = _spd_inverse(r_x, "r_x")
    try:
        return np.linalg.solve(rx_inv + 0.5 * (info + info.T), model.g * w.T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular LMMSE information matrix") from exc


def lmmse(model: SystemModel, a, y: np.ndarray, r_x: Optional[np.ndarray] = None) -> Reconstruction:
    """Support-blind linear MMSE estimate using the marginal covariance Rx."""
    y = np.asarray(y, dtype=float)
    return Reconstruction(x_hat=lmmse_filter(model, a, r_x) @ y)


def mmse_exhaustive(model: SystemModel, a, y: np.ndarray) -> Reconstruction:
    """Exact MMSE estimate: posterior-weighted average of per-support oracle means.

    Weights are computed in the log domain (max-shifted) from the Gaussian
    evidence of each support; the uniform support prior cancels.  Refuses to
    enumerate more than 10^5 supports; use `random_omp` beyond that.
    """
    count = math.comb(model.n, model.k)
    if count > EXHAUSTIVE_LIMIT:
        raise ParameterError(
            f"C({model.n}, {model.k}) = {count} supports exceed the exhaustive limit "
            f"{EXHAUSTIVE_LIMIT}; use random_omp for systems this large"
        )
    a = _checked_matrix(model, a)
    y = np.asarray(y, dtype=float)
    ensemble = SupportEnsemble.full(model.n, model.k)
    ah = a @ model.h
    stacked = _noise_solve(model, a, np.column_stack([ah, y]))
    info = model.g**2 * (ah.T @ stacked[:, : model.n])
    info = 0.5 * (info + info.T)
    filt = model.g * (ah.T @ stacked[:, model.n])
    r_inv = _spd_inverse(model.r, "r")
    # Evidence in information form: with B_S = info[S, S] and c_S = filt[S],
    # log p(y | S) = 0.5 c_S^T (R^-1 + B_S)^-1 c_S - 0.5 logdet(R^-1 + B_S)
    # up to support-independent terms, and the posterior mean shares the same
    # K x K system, so everything batches across supports.
    sup = ensemble.supports
    posterior = r_inv[None, :, :] + info[sup[:, :, None], sup[:, None, :]]
    try:
        chol = np.linalg.cholesky(posterior)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular per-support posterior information") from exc
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    c_stack = filt[sup]
    means = np.linalg.solve(posterior, c_stack[:, :, None])[:, :, 0]
    log_ev = 0.5 * np.einsum("ij,ij->i", c_stack, means) - 0.5 * logdet
    log_ev -= log_ev.max()
    weights = np.exp(log_ev)
    weights /= weights.sum()
    x_hat = np.zeros(model.n)
    np.add.at(x_hat, ensemble.supports.ravel(), (weights[:, None] * means).ravel())
    best = int(np.argmax(weights))
    return Reconstruction(
        x_hat=x_hat,
        support_estimate=ensemble.supports[best].copy(),
        weights=weights,
    )


# -----------------------------------------------------------------------------
# greedy decoders
# -----------------------------------------------------------------------------

def omp(a_eff: np.ndarray, y: np.ndarray, k: int) -> Reconstruction:
    """Orthogonal matching pursuit with least-squares refitting.

    Runs exactly k rounds of max-normalized-correlation selection (ties go to
    the lowest index, zero columns score 0) and refits on the selected
    columns each round.
    """
    a_eff = np.asarray(a_eff, dtype=float)
    y = np.asarray(y, dtype=float)
    if a_eff.ndim != 2:
        raise ParameterError("a_eff must be 2-D")
    n = a_eff.shape[1]
    if not 1 <= k <= n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    norms = np.linalg.norm(a_eff, axis=0)
    usable = norms > 1e-14 * (norms.max() if norms.size else 0.0)
    safe = np.where(usable, norms, 1.0)
    selected: list[int] = []
    residual = y.copy()
    coef = np.zeros(0)
    for _ in range(k):
        scores = np.where(usable, np.abs(a_eff.T @ residual) / safe, 0.0)
        if selected:
            scores[selected] = -1.0
        idx = int(np.argmax(scores))
        selected.append(idx)
        sub = a_eff[:, selected]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(selected):
            warnings.warn(
                "rank-deficient least-squares refit; pseudo-inverse solution used",
                RuntimeWarning,
            )
        residual = y - sub @ coef
    order = np.argsort(selected)
    support = np.asarray(selected, dtype=np.int64)[order]
    x_hat = np.zeros(n)
    x_hat[support] = coef[order]
    return Reconstruction(x_hat=x_hat, support_estimate=support)


def random_omp(
    model: SystemModel,
    a,
    y: np.ndarray,
    rng: np.random.Generator,
    passes: int = 20,
    temperature: float = 1.0,
) -> Reconstruction:
    """Greedy pursuit with Boltzmann atom sampling, averaging oracle means.

    Each pass grows a K-atom support by sampling atoms with probability
    proportional to exp(score / temperature), where score is the squared
    normalized residual correlation over twice the average noise power; the
    pass then contributes the oracle mean for its support.  With one pass
    and temperature -> 0 the selected support coincides with plain OMP.
    """
    a = _checked_matrix(model, a)
    y = np.asarray(y, dtype=float)
    if passes < 1:
        raise ParameterError("passes must be >= 1")
    if temperature < 0:
        raise ParameterError("temperature must be >= 0")
    rn = noise_covariance(model, a)
    sigma_eff2 = float(np.mean(np.diag(rn)))
    if sigma_eff2 <= 0:
        raise NumericalError("random_omp requires a nonzero noise level")
    ah = a @ model.h
    a_eff = model.g * ah
    norms = np.linalg.norm(a_eff, axis=0)
    usable = norms > 1e-14 * (norms.max() if norms.size else 0.0)
    safe = np.where(usable, norms, 1.0)
    stacked = _noise_solve(model, a, np.column_stack([ah, y]))
    info = model.g**2 * (ah.T @ stacked[:, : model.n])
    info = 0.5 * (info + info.T)
    filt = model.g * (ah.T @ stacked[:, model.n])
    r_inv = _spd_inverse(model.r, "r")
    acc = np.zeros(model.n)
    for _ in range(passes):
        residual = y.copy()
        selected: list[int] = []
        for _ in range(model.k):
            corr = np.where(usable, np.abs(a_eff.T @ residual) / safe, 0.0)
            scores = corr**2 / (2.0 * sigma_eff2)
            if selected:
                scores[selected] = -np.inf
            if temperature == 0:
                idx = int(np.argmax(scores))
            else:
                logits = (scores - scores[np.isfinite(scores)].max()) / temperature
                probs = np.exp(logits)
                probs[~np.isfinite(probs)] = 0.0
                probs /= probs.sum()
                idx = int(rng.choice(model.n, p=probs))
            selected.append(idx)
            sub = a_eff[:, selected]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            residual = y - sub @ coef
        sup = np.sort(np.asarray(selected, dtype=np.int64))
        mean = np.linalg.solve(r_inv + info[np.ix_(sup, sup)], filt[sup])
        acc[sup] += mean
    return Reconstruction(x_hat=acc / passes)
