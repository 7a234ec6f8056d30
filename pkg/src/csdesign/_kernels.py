"""Per-support accumulation kernels: the numeric hot loops.

Every bound/objective/gradient evaluation reduces to a sweep over the
support ensemble, adding a K x K submatrix of a precomputed N x N
information matrix to R^-1 and accumulating the trace of the inverse (and,
for gradients, the squared inverse scattered back to N x N).  These sweeps
run over up to 10^6 supports, so they are jitted with numba; a pure-numpy
chunked fallback covers environments without numba.

Backend selection: set CSDESIGN_BACKEND=numpy to force the fallback or
=numba to require the jitted path.  Default is numba when importable.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import NumericalError, ParameterError

_ENV_VAR = "CSDESIGN_BACKEND"
_CHUNK = 1 << 15


def _pick_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ParameterError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _pick_backend()


# -----------------------------------------------------------------------------
# numpy fallback (always defined; also the reference for backend tests)
# -----------------------------------------------------------------------------

def _batched_inverse(sub: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(sub)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular per-support information matrix") from exc


def _terms_numpy(info: np.ndarray, supports: np.ndarray, base_inv: np.ndarray) -> np.ndarray:
    count = supports.shape[0]
    terms = np.empty(count)
    for start in range(0, count, _CHUNK):
        rows = supports[start : start + _CHUNK]
        sub = info[rows[:, :, None], rows[:, None, :]]
        sub += base_inv
        inv = _batched_inverse(sub)
        terms[start : start + _CHUNK] = np.einsum("cii->c", inv)
    return terms


def _terms_scatter_numpy(info, supports, base_inv, n):
    count = supports.shape[0]
    terms = np.empty(count)
    w = np.zeros((n, n))
    for start in range(0, count, _CHUNK):
        rows = supports[start : start + _CHUNK]
        sub = info[rows[:, :, None], rows[:, None, :]]
        sub += base_inv
        inv = _batched_inverse(sub)
        terms[start : start + _CHUNK] = np.einsum("cii->c", inv)
        np.add.at(w, (rows[:, :, None], rows[:, None, :]), inv @ inv)
    return terms, w


def _scatter_numpy(supports, block, n):
    w = np.zeros((n, n))
    for start in range(0, supports.shape[0], _CHUNK):
        rows = supports[start : start + _CHUNK]
        np.add.at(w, (rows[:, :, None], rows[:, None, :]), block[None, :, :])
    return w


# -----------------------------------------------------------------------------
# numba kernels
# -----------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _spd_inv_trace(m, lo, li, inv):
        # Cholesky m = L L^T, invert L, trace(m^-1) = ||L^-1||_F^2,
        # inv = L^-T L^-1.  Returns -1.0 when m is not positive definite.
        k = m.shape[0]
        for i in range(k):
            for j in range(i + 1):
                s = m[i, j]
                for t in range(j):
                    s -= lo[i, t] * lo[j, t]
                if i == j:
                    if s <= 0.0:
                        return -1.0
                    lo[i, i] = math.sqrt(s)
                else:
                    lo[i, j] = s / lo[j, j]
        for j in range(k):
            li[j, j] = 1.0 / lo[j, j]
            for i in range(j + 1, k):
                s = 0.0
                for t in range(j, i):
                    s -= lo[i, t] * li[t, j]
                li[i, j] = s / lo[i, i]
        trace = 0.0
        for i in range(k):
            for j in range(i + 1):
                trace += li[i, j] * li[i, j]
        for i in range(k):
            for j in range(k):
                s = 0.0
                t0 = i if i > j else j
                for t in range(t0, k):
                    s += li[t, i] * li[t, j]
                inv[i, j] = s
        return trace

    @njit(cache=True)
    def _terms_numba(info, supports, base_inv):
        count, k = supports.shape
        terms = np.empty(count)
        m = np.empty((k, k))
        lo = np.zeros((k, k))
        li = np.zeros((k, k))
        inv = np.empty((k, k))
        for c in range(count):
            for a in range(k):
                ia = supports[c, a]
                for b in range(k):
                    m[a, b] = base_inv[a, b] + info[ia, supports[c, b]]
            tr = _spd_inv_trace(m, lo, li, inv)
            terms[c] = tr if tr >= 0.0 else np.nan
        return terms

    @njit(cache=True)
    def _terms_scatter_numba(info, supports, base_inv, n):
        count, k = supports.shape
        terms = np.empty(count)
        w = np.zeros((n, n))
        m = np.empty((k, k))
        lo = np.zeros((k, k))
        li = np.zeros((k, k))
        inv = np.empty((k, k))
        sq = np.empty((k, k))
        for c in range(count):
            for a in range(k):
                ia = supports[c, a]
                for b in range(k):
                    m[a, b] = base_inv[a, b] + info[ia, supports[c, b]]
            tr = _spd_inv_trace(m, lo, li, inv)
            if tr < 0.0:
                terms[c] = np.nan
                continue
            terms[c] = tr
            for a in range(k):
                for b in range(k):
                    s = 0.0
                    for t in range(k):
                        s += inv[a, t] * inv[t, b]
                    sq[a, b] = s
            for a in range(k):
                ia = supports[c, a]
                for b in range(k):
                    w[ia, supports[c, b]] += sq[a, b]
        return terms, w

    @njit(cache=True)
    def _scatter_numba(supports, block, n):
        count, k = supports.shape
        w = np.zeros((n, n))
        for c in range(count):
            for a in range(k):
                ia = supports[c, a]
                for b in range(k):
                    w[ia, supports[c, b]] += block[a, b]
        return w


# -----------------------------------------------------------------------------
# dispatch
# -----------------------------------------------------------------------------

def _prep(info, supports, base_inv):
    info = np.ascontiguousarray(info, dtype=np.float64)
    supports = np.ascontiguousarray(supports, dtype=np.int64)
    base_inv = np.ascontiguousarray(base_inv, dtype=np.float64)
    if supports.ndim != 2:
        raise ParameterError("supports must be 2-D")
    k = supports.shape[1]
    if base_inv.shape != (k, k):
        raise ParameterError(f"base_inv must be ({k}, {k}), got {base_inv.shape}")
    return info, supports, base_inv


def _check_pd(terms: np.ndarray) -> np.ndarray:
    if np.isnan(terms).any():
        raise NumericalError("per-support information matrix is not positive definite")
    return terms


def support_trace_terms(info, supports, base_inv) -> np.ndarray:
    """terms[c] = trace((base_inv + info[S_c, S_c])^-1) for every support row."""
    info, supports, base_inv = _prep(info, supports, base_inv)
    if BACKEND == "numba":
        return _check_pd(_terms_numba(info, supports, base_inv))
    return _terms_numpy(info, supports, base_inv)


def support_trace_terms_with_scatter(info, supports, base_inv, n: int):
    """Trace terms plus the scatter sum_c E_c M_c^-2 E_c^T (unnormalized)."""
    info, supports, base_inv = _prep(info, supports, base_inv)
    if BACKEND == "numba":
        terms, w = _terms_scatter_numba(info, supports, base_inv, n)
        return _check_pd(terms), w
    return _terms_scatter_numpy(info, supports, base_inv, n)


def accumulate_support_blocks(supports, block, n: int) -> np.ndarray:
    """sum_c E_c B E_c^T: scatter a fixed K x K block over every support."""
    supports = np.ascontiguousarray(supports, dtype=np.int64)
    block = np.ascontiguousarray(block, dtype=np.float64)
    if BACKEND == "numba":
        return _scatter_numba(supports, block, n)
    return _scatter_numpy(supports, block, n)
