"""Bound / power / diagnostic metrics against independent formulas.

The general-case oracle recomputes the bound from raw definitions with
np.linalg.inv; the sigma_w = 0 oracle uses the closed hypergeometric form of
the truncated-identity design, derived separately from the row-space
projector argument.
"""

import math

import numpy as np
import pytest

from csdesign import (
    NumericalError,
    ParameterError,
    SupportEnsemble,
    SystemModel,
    exponential_correlation,
    frame_potential,
    lmmse_mse,
    mse_lower_bound,
    mse_lower_bound_sampled,
    mutual_coherence,
    nmse,
    observation_information,
    power_matrix,
    source_covariance,
    transmit_power,
)


def make_model(n=8, k=2, m=4, rho=0.35, **kw):
    kw.setdefault("g", 0.7)
    kw.setdefault("sigma_w", 0.12)
    return SystemModel(n=n, k=k, m=m, r=exponential_correlation(k, rho), **kw)


def brute_bound(model, ensemble, a):
    """Direct transcription of the bound definition, no shared helpers."""
    ah = a @ model.h
    rn = model.g**2 * model.sigma_v**2 * (a @ a.T) + model.sigma_w**2 * np.eye(model.m)
    info = model.g**2 * (ah.T @ np.linalg.inv(rn) @ ah)
    r_inv = np.linalg.inv(model.r)
    total = 0.0
    for row in ensemble.supports:
        total += np.trace(np.linalg.inv(r_inv + info[np.ix_(row, row)]))
    return total / ensemble.count


# -----------------------------------------------------------------------------
# information matrix
# -----------------------------------------------------------------------------

def test_observation_information_direct_formula():
    model = make_model(sigma_v=0.3)
    a = np.random.default_rng(0).standard_normal((4, 8))
    rn = model.g**2 * 0.3**2 * (a @ a.T) + model.sigma_w**2 * np.eye(4)
    ah = a @ model.h
    expected = model.g**2 * (ah.T @ np.linalg.inv(rn) @ ah)
    np.testing.assert_allclose(observation_information(model, a), expected, atol=1e-11)


def test_observation_information_shape_check():
    model = make_model()
    with pytest.raises(ParameterError):
        observation_information(model, np.zeros((3, 8)))


def test_observation_information_rejects_all_zero_noise():
    model = make_model(sigma_v=0.0, sigma_w=0.0)
    a = np.random.default_rng(1).standard_normal((4, 8))
    with pytest.raises(NumericalError):
        observation_information(model, a)


# -----------------------------------------------------------------------------
# lower bound
# -----------------------------------------------------------------------------

def test_mse_lower_bound_matches_brute_force():
    for sigma_v in (0.0, 0.25):
        model = make_model(sigma_v=sigma_v)
        ens = SupportEnsemble.full(8, 2)
        a = np.random.default_rng(2).standard_normal((4, 8))
        report = mse_lower_bound(model, ens, a)
        assert report.ensemble_kind == "full"
        assert report.per_support_terms.shape == (ens.count,)
        np.testing.assert_allclose(report.value, brute_bound(model, ens, a), rtol=1e-10)
        np.testing.assert_allclose(report.value, np.mean(report.per_support_terms))


def test_mse_lower_bound_with_rectangular_h():
    h = np.random.default_rng(3).standard_normal((9, 8))
    model = SystemModel(
        n=8, k=2, m=4, r=exponential_correlation(2, 0.3), h=h, g=0.6, sigma_w=0.15
    )
    ens = SupportEnsemble.full(8, 2)
    a = np.random.default_rng(4).standard_normal((4, 9))
    np.testing.assert_allclose(
        mse_lower_bound(model, ens, a).value, brute_bound(model, ens, a), rtol=1e-10
    )


def test_noiseless_channel_bound_hypergeometric_oracle():
    # sigma_w = 0 reduces the information matrix to a row-space projector over
    # sigma_v^2; for A = c [I_M 0] and R = sigma_x^2 I the per-support term is
    # linear in the overlap k1 = |S ∩ [0, M)|, so the ensemble average only
    # needs E[k1] = K M / N
    n, k, m = 10, 3, 4
    sigma_v, sigma_x2 = 0.4, 1.0
    model = SystemModel(
        n=n, k=k, m=m, r=sigma_x2 * np.eye(k), sigma_v=sigma_v, sigma_w=0.0, g=0.9
    )
    a = np.zeros((m, n))
    a[:, :m] = 2.7 * np.eye(m)
    ens = SupportEnsemble.full(n, k)
    hit = sigma_x2 * sigma_v**2 / (sigma_x2 + sigma_v**2)
    mean_k1 = k * m / n
    expected = mean_k1 * hit + (k - mean_k1) * sigma_x2
    report = mse_lower_bound(model, ens, a)
    np.testing.assert_allclose(report.value, expected, rtol=1e-12)
    # the bound is scale invariant in A when sigma_w = 0
    np.testing.assert_allclose(
        mse_lower_bound(model, ens, 17.0 * a).value, report.value, rtol=1e-12
    )


def test_noiseless_channel_bound_rank_deficient_rows():
    # duplicate rows leave the row space (and the bound) unchanged
    n, m = 8, 4
    model = SystemModel(
        n=n, k=2, m=m, r=np.eye(2), sigma_v=0.3, sigma_w=0.0
    )
    ens = SupportEnsemble.full(n, 2)
    rng = np.random.default_rng(5)
    rows = rng.standard_normal((m - 1, n))
    a_full = np.vstack([rows, rng.standard_normal(n)])
    a_dup = np.vstack([rows, rows[0]])
    a_three = np.vstack([rows, 0.0 * rows[0]])
    v1 = mse_lower_bound(model, ens, a_dup).value
    v2 = mse_lower_bound(model, ens, a_three).value
    np.testing.assert_allclose(v1, v2, rtol=1e-9)
    assert mse_lower_bound(model, ens, a_full).value <= v1 + 1e-12


def test_sampled_bound_determinism_and_full_recovery():
    model = make_model()
    a = np.random.default_rng(6).standard_normal((4, 8))
    r1 = mse_lower_bound_sampled(model, 10, seed=3, a=a)
    r2 = mse_lower_bound_sampled(model, 10, seed=3, a=a)
    assert r1.value == r2.value
    np.testing.assert_array_equal(r1.supports, r2.supports)
    total = math.comb(8, 2)
    full_via_sample = mse_lower_bound_sampled(model, total, seed=0, a=a)
    full = mse_lower_bound(model, SupportEnsemble.full(8, 2), a)
    np.testing.assert_allclose(full_via_sample.value, full.value, rtol=1e-14)


def test_single_support_sampled_bound():
    model = make_model()
    a = np.random.default_rng(7).standard_normal((4, 8))
    report = mse_lower_bound_sampled(model, 1, seed=11, a=a)
    ens = SupportEnsemble(report.supports, n=8, kind="sampled")
    np.testing.assert_allclose(report.value, brute_bound(model, ens, a), rtol=1e-10)


def test_bound_report_csv(tmp_path):
    model = make_model()
    a = np.random.default_rng(8).standard_normal((4, 8))
    report = mse_lower_bound(model, SupportEnsemble.full(8, 2), a)
    path = tmp_path / "terms.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "support,term"
    assert len(lines) == 1 + math.comb(8, 2)
    first = lines[1].split(",")
    assert first[0] == "0 1"
    np.testing.assert_allclose(float(first[1]), report.per_support_terms[0])


# -----------------------------------------------------------------------------
# LMMSE upper bound
# -----------------------------------------------------------------------------

def test_lmmse_mse_covariance_form_oracle():
    # Wiener MSE in covariance form: tr(Rx) - tr(Rx C^T Sigma_y^-1 C Rx) with
    # C = g A H; equals the information form through the inversion lemma
    model = make_model(sigma_v=0.2)
    a = np.random.default_rng(9).standard_normal((4, 8))
    r_x = source_covariance(model, SupportEnsemble.full(8, 2))
    c = model.g * (a @ model.h)
    rn = model.g**2 * 0.2**2 * (a @ a.T) + model.sigma_w**2 * np.eye(4)
    sigma_y = c @ r_x @ c.T + rn
    expected = np.trace(r_x) - np.trace(r_x @ c.T @ np.linalg.inv(sigma_y) @ c @ r_x)
    np.testing.assert_allclose(lmmse_mse(model, a), expected, rtol=1e-10)
    np.testing.assert_allclose(lmmse_mse(model, a, r_x=r_x), expected, rtol=1e-10)


def test_lmmse_upper_bounds_oracle_bound():
    model = make_model()
    ens = SupportEnsemble.full(8, 2)
    a = np.random.default_rng(10).standard_normal((4, 8))
    assert lmmse_mse(model, a) >= mse_lower_bound(model, ens, a).value - 1e-12


# -----------------------------------------------------------------------------
# power
# -----------------------------------------------------------------------------

def test_transmit_power_direct():
    model = make_model(sigma_v=0.3)
    a = np.random.default_rng(11).standard_normal((4, 8))
    r_x = source_covariance(model, SupportEnsemble.full(8, 2))
    phi = model.h @ r_x @ model.h.T + 0.3**2 * np.eye(8)
    np.testing.assert_allclose(
        transmit_power(model, a), np.trace(a @ phi @ a.T), rtol=1e-12
    )
    np.testing.assert_allclose(power_matrix(model), phi, atol=1e-14)


def test_power_matrix_accepts_explicit_rx():
    model = make_model()
    r_x = np.diag(np.linspace(1.0, 2.0, 8))
    phi = power_matrix(model, r_x=r_x)
    np.testing.assert_allclose(phi, r_x, atol=1e-14)


# -----------------------------------------------------------------------------
# empirical metrics
# -----------------------------------------------------------------------------

def test_nmse_values_and_db():
    x = np.array([[1.0, 0.0, 2.0]])
    xh = np.array([[0.0, 0.0, 2.0]])
    assert nmse(x, xh, k=2) == pytest.approx(0.5)
    assert nmse(x, xh, k=2, db=True) == pytest.approx(10 * np.log10(0.5))
    batch = nmse(np.vstack([x, x]), np.vstack([xh, x]), k=2)
    assert batch == pytest.approx(0.25)
    with pytest.raises(ParameterError):
        nmse(np.zeros(3), np.zeros(4), k=2)


def test_mutual_coherence_hand_example():
    a = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    # normalized inner products: |<e1, e2>| = 0, |<e1, u>| = |<e2, u>| = 1/sqrt(2)
    assert mutual_coherence(a) == pytest.approx(1.0 / math.sqrt(2.0))
    assert mutual_coherence(np.eye(3)) == pytest.approx(0.0)


def test_mutual_coherence_skips_zero_columns():
    a = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    with pytest.warns(RuntimeWarning):
        value = mutual_coherence(a)
    assert value == pytest.approx(1.0 / math.sqrt(2.0))
    with pytest.warns(RuntimeWarning):
        assert mutual_coherence(np.zeros((2, 3))) == 0.0


def test_frame_potential_scaled_truncated_identity():
    n, m, c = 6, 3, 1.7
    a = np.zeros((m, n))
    a[:, :m] = c * np.eye(m)
    expected = math.sqrt(m * (c**2 - 1.0) ** 2 + (n - m))
    assert frame_potential(a) == pytest.approx(expected)
    # a unit-norm orthonormal basis meets the identity exactly
    assert frame_potential(np.eye(4)) == pytest.approx(0.0)
