"""OLS and 2SLS estimates and the scale estimators behind the statistics.

Notation: ``M1`` annihilates ``X1``, ``P`` projects on ``X = [X1, X2]``,
``M = I - P`` and ``N1 = M1 P``, the projector on the span of ``M1 X2``.
All variance estimators divide by ``T``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import IdentificationDataError
from .linalg import DEFAULT_TOL, orthonormal_basis


@dataclass(frozen=True)
class EstimatorBundle:
    """Estimates computed by :func:`fit`.

    Attributes
    ----------
    beta_ols, beta_2sls : ndarray of shape (G,)
    gamma_ols, gamma_2sls : ndarray of shape (k1,)
    u_hat, u_tilde : ndarray of shape (T,)
        ``M1 (y - Y beta)`` at the OLS and 2SLS estimates.
    sigma2_hat, sigma2_tilde : float
        ``u_hat'u_hat / T`` and ``u_tilde'u_tilde / T``.
    sigma2_tilde1 : float
        ``(y - Y beta_2sls)' N1 (y - Y beta_2sls) / T``.
    sigma2_tilde2 : float
        ``sigma2_hat - d' Delta^{-1} d`` with ``d = beta_2sls - beta_ols``.
    sigma2_tilde_e : float
        ``(y - Y beta_2sls)' M (y - Y beta_2sls) / T``.
    omega_iv, omega_ls, sigma_v : ndarray of shape (G, G)
        ``Y'N1Y/T``, ``Y'M1Y/T`` and ``Y'MY/T``.
    delta_hat, delta_hat_inv : ndarray of shape (G, G)
        ``inv(omega_iv) - inv(omega_ls)`` and its inverse, the latter
        from the additive form ``omega_iv + omega_iv inv(sigma_v) omega_iv``.
    """

    T: int
    beta_ols: np.ndarray
    beta_2sls: np.ndarray
    gamma_ols: np.ndarray
    gamma_2sls: np.ndarray
    u_hat: np.ndarray
    u_tilde: np.ndarray
    sigma2_hat: float
    sigma2_tilde: float
    sigma2_tilde1: float
    sigma2_tilde2: float
    sigma2_tilde_e: float
    omega_iv: np.ndarray
    omega_ls: np.ndarray
    sigma_v: np.ndarray
    delta_hat: np.ndarray
    delta_hat_inv: np.ndarray

    @property
    def d(self):
        """Difference ``beta_2sls - beta_ols``."""
        return self.beta_2sls - self.beta_ols


def _sym(A):
    return 0.5 * (A + A.T)


def _check_full_rank(A, scale, tol, message):
    # rank relative to a reference scale so that an exactly-zero block
    # carrying rounding noise is not mistaken for a full-rank one
    s = np.linalg.svd(A, compute_uv=False)
    if A.shape[1] and (s.size < A.shape[1] or s[-1] <= tol * scale):
        raise IdentificationDataError(message)


@dataclass(frozen=True)
class _Factors:
    """Shared factorizations of the regressor side of a problem."""

    B1: object  # OrthoBasis of X1
    BN: object  # OrthoBasis of M1 X2
    M1Y: np.ndarray
    N1Y: np.ndarray
    MY: np.ndarray
    Q1: np.ndarray
    R1: np.ndarray
    Q2: np.ndarray
    R2: np.ndarray


def _factor(p, tol=DEFAULT_TOL):
    T, G, k1, k2 = p.dims
    B1 = orthonormal_basis(p.X1, tol)
    if B1.rank < k1:
        raise IdentificationDataError(f"X1 has rank {B1.rank} < k1={k1}")
    BN = orthonormal_basis(B1.annihilate(p.X2), tol)
    if BN.rank < k2:
        raise IdentificationDataError(f"[X1, X2] is rank deficient (rank of M1 X2 is {BN.rank} < k2={k2})")
    M1Y = B1.annihilate(p.Y)
    scale = max(np.linalg.norm(p.Y, 2), np.finfo(float).tiny)
    _check_full_rank(M1Y, scale, tol, "[Y, X1] is rank deficient")
    N1Y = BN.project(M1Y)
    _check_full_rank(
        N1Y, np.linalg.norm(M1Y, 2), tol,
        "Y'N1Y is singular: instruments carry no information on Y given X1",
    )
    MY = M1Y - N1Y
    _check_full_rank(MY, np.linalg.norm(M1Y, 2), tol, "Y'MY is singular: Y lies in the span of X")
    Q1, R1 = np.linalg.qr(M1Y)
    Q2, R2 = np.linalg.qr(N1Y)
    return _Factors(B1, BN, M1Y, N1Y, MY, Q1, R1, Q2, R2)


def fit(p, tol=DEFAULT_TOL):
    """OLS and 2SLS estimates with every scale estimator.

    Parameters
    ----------
    p : ExogeneityProblem
    tol : float
        Relative rank tolerance.

    Returns
    -------
    EstimatorBundle

    Raises
    ------
    IdentificationDataError
        ``Y'N1Y``, ``Y'M1Y`` or ``Y'MY`` is numerically singular, or the
        exogenous blocks are rank deficient.
    """
    f = _factor(p, tol)
    return _fit_from_factors(p, f)


def _fit_from_factors(p, f):
    T = p.T
    y = p.y
    solve = scipy.linalg.solve_triangular
    beta_ols = solve(f.R1, f.Q1.T @ y)
    beta_2sls = solve(f.R2, f.Q2.T @ y)
    if p.k1:
        gamma_ols = np.linalg.lstsq(p.X1, y - p.Y @ beta_ols, rcond=None)[0]
        gamma_2sls = np.linalg.lstsq(p.X1, y - p.Y @ beta_2sls, rcond=None)[0]
    else:
        gamma_ols = gamma_2sls = np.zeros(0)
    M1y = f.B1.annihilate(y)
    u_hat = M1y - f.M1Y @ beta_ols
    u_tilde = M1y - f.M1Y @ beta_2sls
    n1_coef = f.BN.coords(u_tilde)
    e_tilde = u_tilde - f.BN.basis @ n1_coef
    omega_iv = _sym(f.R2.T @ f.R2) / T
    omega_ls = _sym(f.R1.T @ f.R1) / T
    sigma_v = _sym(f.MY.T @ f.MY) / T
    G = p.G
    eye = np.eye(G)
    delta_hat = _sym(
        scipy.linalg.cho_solve(scipy.linalg.cho_factor(omega_iv), eye)
        - scipy.linalg.cho_solve(scipy.linalg.cho_factor(omega_ls), eye)
    )
    delta_hat_inv = _sym(omega_iv + omega_iv @ scipy.linalg.solve(sigma_v, omega_iv, assume_a="pos"))
    d = beta_2sls - beta_ols
    sigma2_hat = float(u_hat @ u_hat) / T
    return EstimatorBundle(
        T=T,
        beta_ols=beta_ols,
        beta_2sls=beta_2sls,
        gamma_ols=gamma_ols,
        gamma_2sls=gamma_2sls,
        u_hat=u_hat,
        u_tilde=u_tilde,
        sigma2_hat=sigma2_hat,
        sigma2_tilde=float(u_tilde @ u_tilde) / T,
        sigma2_tilde1=float(n1_coef @ n1_coef) / T,
        sigma2_tilde2=sigma2_hat - float(d @ delta_hat_inv @ d),
        sigma2_tilde_e=float(e_tilde @ e_tilde) / T,
        omega_iv=omega_iv,
        omega_ls=omega_ls,
        sigma_v=sigma_v,
        delta_hat=delta_hat,
        delta_hat_inv=delta_hat_inv,
    )


def delta_inverse_paths(b):
    """Three closed forms of ``inv(delta_hat)``, for cross-checking.

    Returns
    -------
    tuple of three ndarrays
        ``omega_iv + omega_iv inv(sigma_v) omega_iv``,
        ``omega_ls inv(sigma_v) omega_ls - omega_ls`` and
        ``inv(delta_hat)``.

    Raises
    ------
    IdentificationDataError
        If ``sigma_v`` is singular.
    """
    sv = b.sigma_v
    if np.linalg.matrix_rank(sv) < sv.shape[0]:
        raise IdentificationDataError("sigma_v is singular")
    via_iv = b.omega_iv + b.omega_iv @ np.linalg.solve(sv, b.omega_iv)
    via_ls = b.omega_ls @ np.linalg.solve(sv, b.omega_ls) - b.omega_ls
    direct = np.linalg.inv(b.delta_hat)
    return _sym(via_iv), _sym(via_ls), _sym(direct)
