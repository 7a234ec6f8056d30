"""Statistical model of the sparse-source measurement chain.

A K-sparse length-N source x is observed through a fixed linear map H
(z = Hx + v), compressed by an M x L sensing matrix A and sent over a
scalar-gain channel (y = g*A*z + w).  The support of x is uniform over an
ensemble of K-subsets of {0, ..., N-1}; the nonzero entries are jointly
Gaussian with a K x K covariance R.

Conventions
-----------
* indices are 0-based; supports are stored as sorted int64 index arrays
* full ensembles enumerate supports in lexicographic order
* every stochastic operation takes an explicit numpy Generator
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from .errors import NumericalError, ParameterError

# Full support enumeration is refused above this count; callers must switch
# to an explicitly sampled ensemble instead.
FULL_ENUMERATION_LIMIT = 10**6


# -----------------------------------------------------------------------------
# containers
# -----------------------------------------------------------------------------

def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SystemModel:
    """Immutable problem data for one measurement chain.

    Parameters
    ----------
    n : int
        Source dimension.
    k : int
        Sparsity level (size of every support).
    m : int
        Number of compressed measurements (rows of the sensing matrix).
    r : (k, k) ndarray
        Covariance of the nonzero source entries; symmetric positive definite.
    h : (l, n) ndarray, optional
        Observation map applied before compression.  Defaults to the
        identity, in which case L = N.
    g : float
        Channel gain, positive.
    sigma_v : float
        Sensor (pre-compression) noise standard deviation, >= 0.
    sigma_w : float
        Channel (post-compression) noise standard deviation, >= 0.
    p : float
        Transmit power budget, positive.
    """

    n: int
    k: int
    m: int
    r: np.ndarray
    h: Optional[np.ndarray] = None
    g: float = 1.0
    sigma_v: float = 0.0
    sigma_w: float = 0.1
    p: float = 10.0

    def __post_init__(self):
        for name in ("n", "k", "m"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.k > self.n:
            raise ParameterError(f"sparsity k={self.k} cannot exceed n={self.n}")
        r = np.array(self.r, dtype=float)
        if r.shape != (self.k, self.k):
            raise ParameterError(f"r must have shape ({self.k}, {self.k}), got {r.shape}")
        if not np.allclose(r, r.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(r).max())):
            raise ParameterError("r must be symmetric")
        try:
            np.linalg.cholesky(r)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("r must be positive definite") from exc
        object.__setattr__(self, "r", _frozen_array(r))
        if self.h is None:
            h = np.eye(self.n)
        else:
            h = np.array(self.h, dtype=float)
            if h.ndim != 2 or h.shape[1] != self.n:
                raise ParameterError(f"h must be 2-D with {self.n} columns, got shape {h.shape}")
        object.__setattr__(self, "h", _frozen_array(h))
        if self.m > self.l:
            raise ParameterError(f"m={self.m} cannot exceed the observation dimension l={self.l}")
        if not self.g > 0:
            raise ParameterError(f"g must be positive, got {self.g}")
        if self.sigma_v < 0 or self.sigma_w < 0:
            raise ParameterError("noise standard deviations must be >= 0")
        if not self.p > 0:
            raise ParameterError(f"p must be positive, got {self.p}")

    @property
    def l(self) -> int:
        """Observation dimension (rows of H, columns of the sensing matrix)."""
        return self.h.shape[0]

    @property
    def support_count(self) -> int:
        """Number of K-subsets of {0, ..., N-1}."""
        return math.comb(self.n, self.k)


@dataclass(frozen=True)
class SupportEnsemble:
    """A fixed collection of sparsity patterns, averaged over with equal weight.

    `supports` has shape (count, k); every row is sorted ascending and rows
    are in lexicographic order.  `kind` is "full" (all K-subsets) or
    "sampled" (a uniform subset without replacement, reproducible from
    `seed`).
    """

    supports: np.ndarray
    n: int
    kind: str
    seed: Optional[int] = None

    def __post_init__(self):
        sup = np.array(self.supports, dtype=np.int64)
        if sup.ndim != 2:
            raise ParameterError("supports must be a 2-D index array")
        if sup.size and (sup.min() < 0 or sup.max() >= self.n):
            raise ParameterError("support indices out of range")
        if np.any(np.diff(sup, axis=1) <= 0):
            raise ParameterError("supports rows must be strictly increasing")
        object.__setattr__(self, "supports", _frozen_array(sup, dtype=np.int64))

    @classmethod
    def full(cls, n: int, k: int) -> "SupportEnsemble":
        """Enumerate all C(n, k) supports in lexicographic order."""
        count = math.comb(n, k)
        if count > FULL_ENUMERATION_LIMIT:
            raise ParameterError(
                f"C({n}, {k}) = {count} exceeds the full-enumeration limit "
                f"{FULL_ENUMERATION_LIMIT}; use SupportEnsemble.sampled instead"
            )
        flat = np.fromiter(
            (i for combo in combinations(range(n), k) for i in combo),
            dtype=np.int64,
            count=count * k,
        )
        return cls(flat.reshape(count, k), n=n, kind="full")

    @classmethod
    def sampled(cls, n: int, k: int, count: int, seed: int) -> "SupportEnsemble":
        """Draw `count` distinct supports uniformly without replacement."""
        total = math.comb(n, k)
        if not 1 <= count <= total:
            raise ParameterError(f"sample count must be in [1, {total}], got {count}")
        rng = np.random.default_rng(seed)
        if total <= FULL_ENUMERATION_LIMIT:
            everything = cls.full(n, k).supports
            picked = everything[np.sort(rng.choice(total, size=count, replace=False))]
        else:
            seen = set()
            rows = []
            while len(rows) < count:
                cand = tuple(np.sort(rng.choice(n, size=k, replace=False)))
                if cand not in seen:
                    seen.add(cand)
                    rows.append(cand)
            picked = np.array(rows, dtype=np.int64)
            picked = picked[np.lexsort(picked.T[::-1])]
        return cls(picked, n=n, kind="sampled", seed=seed)

    @property
    def count(self) -> int:
        return self.supports.shape[0]

    @property
    def k(self) -> int:
        return self.supports.shape[1]


@dataclass(frozen=True)
class SparseSample:
    """One realization of the sparse source."""

    x: np.ndarray
    support: np.ndarray


# -----------------------------------------------------------------------------
# operations
# -----------------------------------------------------------------------------

def exponential_correlation(k: int, rho: float) -> np.ndarray:
    """Exponentially correlated covariance R[i, j] = rho**|i - j|.

    Parameters
    ----------
    k : int
        Matrix order.
    rho : float
        Correlation coefficient, 0 <= rho < 1.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if not 0.0 <= rho < 1.0:
        raise ParameterError(f"rho must satisfy 0 <= rho < 1, got {rho}")
    idx = np.arange(k)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def selection_matrix(support: Iterable[int], n: int) -> np.ndarray:
    """N x K matrix whose columns are the unit vectors of a sorted support."""
    sup = np.asarray(sorted(int(i) for i in support), dtype=np.int64)
    if sup.size == 0:
        raise ParameterError("support must be nonempty")
    if np.unique(sup).size != sup.size:
        raise ParameterError("support indices must be distinct")
    if sup.min() < 0 or sup.max() >= n:
        raise ParameterError(f"support indices must lie in [0, {n})")
    e = np.zeros((n, sup.size))
    e[sup, np.arange(sup.size)] = 1.0
    return e


def source_covariance(model: SystemModel, ensemble: SupportEnsemble) -> np.ndarray:
    """Marginal covariance of x: the ensemble average of E_S R E_S^T.

    Exact for a full ensemble; for a sampled ensemble it is the covariance
    implied by the sample (an approximation of the full average).
    """
    _check_ensemble(model, ensemble)
    from . import _kernels

    total = _kernels.accumulate_support_blocks(ensemble.supports, model.r, model.n)
    return total / ensemble.count


def source_covariance_empirical(
    model: SystemModel, draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Monte Carlo estimate of the source covariance from `draws` samples.

    Supports are drawn uniformly over all K-subsets (not restricted to a
    stored ensemble), so this estimates the full-ensemble covariance.
    """
    if draws < 1:
        raise ParameterError("draws must be >= 1")
    chol = np.linalg.cholesky(model.r)
    # uniform K-subsets via the k smallest entries of iid uniforms, sorted
    order = np.argsort(rng.random((draws, model.n)), axis=1)[:, : model.k]
    order.sort(axis=1)
    values = rng.standard_normal((draws, model.k)) @ chol.T
    x = np.zeros((draws, model.n))
    np.put_along_axis(x, order, values, axis=1)
    return x.T @ x / draws


def draw_sparse_sample(model: SystemModel, rng: np.random.Generator) -> SparseSample:
    """Draw (x, S): S uniform over all K-subsets, x_S ~ N(0, R)."""
    support = np.sort(rng.choice(model.n, size=model.k, replace=False))
    try:
        chol = np.linalg.cholesky(model.r)
    except np.linalg.LinAlgError as exc:  # defensive; the constructor verified PD
        raise NumericalError("r is not positive definite") from exc
    x = np.zeros(model.n)
    x[support] = chol @ rng.standard_normal(model.k)
    return SparseSample(x=x, support=support.astype(np.int64))


def simulate_channel(
    model: SystemModel, a, x: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Push one source vector through the chain: y = g*A*(Hx + v) + w.

    Noise terms are drawn only when the corresponding standard deviation is
    nonzero, so a noiseless model returns g*A*H*x exactly.
    """
    a = as_matrix(a)
    x = np.asarray(x, dtype=float)
    if a.shape != (model.m, model.l):
        raise ParameterError(f"a must have shape ({model.m}, {model.l}), got {a.shape}")
    if x.shape != (model.n,):
        raise ParameterError(f"x must have shape ({model.n},), got {x.shape}")
    z = model.h @ x
    if model.sigma_v > 0:
        z = z + model.sigma_v * rng.standard_normal(model.l)
    y = model.g * (a @ z)
    if model.sigma_w > 0:
        y = y + model.sigma_w * rng.standard_normal(model.m)
    return y


def noise_covariance(model: SystemModel, a) -> np.ndarray:
    """Covariance of the total noise g*A*v + w: g^2 sigma_v^2 A A^T + sigma_w^2 I."""
    a = as_matrix(a)
    if a.shape != (model.m, model.l):
        raise ParameterError(f"a must have shape ({model.m}, {model.l}), got {a.shape}")
    rn = (model.g**2 * model.sigma_v**2) * (a @ a.T)
    rn[np.diag_indices(model.m)] += model.sigma_w**2
    return rn


# -----------------------------------------------------------------------------
# helpers
# -----------------------------------------------------------------------------

def as_matrix(a) -> np.ndarray:
    """Accept a raw ndarray or any wrapper with an `.a` attribute."""
    return np.asarray(getattr(a, "a", a), dtype=float)


def _check_ensemble(model: SystemModel, ensemble: SupportEnsemble) -> None:
    if ensemble.n != model.n or ensemble.k != model.k:
        raise ParameterError(
            f"ensemble is for (n={ensemble.n}, k={ensemble.k}); "
            f"model has (n={model.n}, k={model.k})"
        )
