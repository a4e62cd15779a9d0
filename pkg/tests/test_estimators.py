import numpy as np
import pytest

import dense_oracle as D
from conftest import random_problem
from exotest.estimators import delta_inverse_paths, fit
from exotest.exceptions import IdentificationDataError
from exotest.problem import ExogeneityProblem, make_problem

FIELDS = (
    "beta_ols", "beta_2sls", "gamma_ols", "gamma_2sls", "u_hat", "u_tilde", "sigma2_hat",
    "sigma2_tilde", "sigma2_tilde1", "sigma2_tilde2", "sigma2_tilde_e", "omega_iv", "omega_ls",
    "sigma_v", "delta_hat", "delta_hat_inv",
)


def test_desk_matches_dense_oracle(desk):
    b = fit(desk)
    q = D.quantities(desk.y, desk.Y, desk.X1, desk.X2)
    for name in FIELDS:
        np.testing.assert_allclose(getattr(b, name), q[name], rtol=1e-10, atol=1e-12, err_msg=name)


def test_frozen_desk_estimates(desk):
    b = fit(desk)
    np.testing.assert_allclose(b.beta_ols, [2.57253288], rtol=1e-8)
    np.testing.assert_allclose(b.beta_2sls, [2.20138859], rtol=1e-8)


def test_scale_identities(rng):
    for _ in range(10):
        p = random_problem(rng)
        b = fit(p)
        assert abs(b.sigma2_tilde1 - (b.sigma2_tilde - b.sigma2_tilde_e)) <= 1e-10 * b.sigma2_tilde
        d = b.d
        assert abs(b.sigma2_tilde2 - (b.sigma2_hat - d @ b.delta_hat_inv @ d)) <= 1e-10 * b.sigma2_hat
        assert b.sigma2_tilde2 >= 0 and b.sigma2_tilde_e >= 0 and b.sigma2_tilde1 >= 0
        np.testing.assert_allclose(b.delta_hat_inv @ b.delta_hat, np.eye(p.G), atol=1e-8)
        assert np.all(np.linalg.eigvalsh(b.delta_hat_inv) > 0)


def test_sandwich_bound(rng):
    for _ in range(10):
        p = random_problem(rng)
        b = fit(p)
        upper = b.omega_ls @ np.linalg.solve(b.sigma_v, b.omega_ls)
        for _ in range(5):
            d = rng.standard_normal(p.G)
            mid = d @ b.delta_hat_inv @ d
            assert d @ b.omega_iv @ d <= mid * (1 + 1e-10)
            assert mid <= d @ upper @ d * (1 + 1e-10)


def test_u_tilde_is_n2_m1_y(desk):
    b = fit(desk)
    q = D.quantities(desk.y, desk.Y, desk.X1, desk.X2)
    np.testing.assert_allclose(b.u_tilde, q["N2"] @ q["M1"] @ desk.y, atol=1e-10)


def test_zero_error_dataset(rng):
    T = 25
    X1 = np.column_stack([np.ones(T), rng.standard_normal(T)])
    X2 = rng.standard_normal((T, 3))
    Y = X2 @ rng.standard_normal((3, 2)) + rng.standard_normal((T, 2))
    beta, gamma = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    p = make_problem(Y @ beta + X1 @ gamma, Y, X2, X1)
    b = fit(p)
    np.testing.assert_allclose(b.beta_ols, beta, atol=1e-10)
    np.testing.assert_allclose(b.beta_2sls, beta, atol=1e-10)
    for name in ("sigma2_hat", "sigma2_tilde", "sigma2_tilde1", "sigma2_tilde_e"):
        assert abs(getattr(b, name)) < 1e-20


def test_delta_inverse_paths_agree(desk):
    b = fit(desk)
    paths = delta_inverse_paths(b)
    for m in paths[1:]:
        np.testing.assert_allclose(m, paths[0], rtol=1e-8)


def test_g1_scalar_identity(desk):
    b = fit(desk)
    expected = 1.0 / (1.0 / b.omega_iv[0, 0] - 1.0 / b.omega_ls[0, 0])
    assert b.delta_hat_inv[0, 0] == pytest.approx(expected, rel=1e-10)


def test_uninformative_instruments_rejected(rng):
    T = 30
    X2 = rng.standard_normal((T, 2))
    # Y orthogonal to X2 exactly
    Y = rng.standard_normal((T, 1))
    Y = Y - X2 @ np.linalg.lstsq(X2, Y, rcond=None)[0]
    p = ExogeneityProblem(rng.standard_normal(T), Y, np.zeros((T, 0)), X2)
    with pytest.raises(IdentificationDataError):
        fit(p)


def test_y_in_instrument_span_rejected(rng):
    T = 30
    X2 = rng.standard_normal((T, 2))
    Y = X2 @ np.array([[1.0], [2.0]])
    p = ExogeneityProblem(rng.standard_normal(T), Y, np.zeros((T, 0)), X2)
    with pytest.raises(IdentificationDataError):
        fit(p)
