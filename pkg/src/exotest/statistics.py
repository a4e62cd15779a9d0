"""Durbin-Wu-Hausman and Revankar-Hartley exogeneity statistics.

Eight statistics are provided: ``t1``-``t4`` (Durbin-Wu), ``h1``-``h3``
(Hausman) and ``r`` (Revankar-Hartley). Each can be computed by three
independently coded routes:

* :func:`compute_direct` from the estimates of :func:`exotest.estimators.fit`;
* :func:`compute_from_vector` from quadratic forms in a T-vector using a
  :class:`WeightOperatorSet`, which depends on ``(X, Y)`` only and is the
  engine of the Monte Carlo test;
* :func:`compute_ssr_oracle` from sums of squared residuals of auxiliary
  regressions (no ``h1``).
"""

from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg
from scipy import stats as _st

from .estimators import _factor, _sym
from .exceptions import InvalidInput
from .linalg import DEFAULT_TOL, orthonormal_basis
from .problem import ExogeneityProblem, kappa_constants, require_valid

STATISTICS = ("t1", "t2", "t3", "t4", "h1", "h2", "h3", "r")
# a quadratic form counts as zero below this fraction of x'x/T
VANISH = 1e-20
H1_SINGULAR = 1e-12


@dataclass(frozen=True)
class StatisticSet:
    """Values of the eight statistics with their constants and flags.

    ``t1`` is ``nan`` when ``t1_defined`` is false (``k2 == G``). ``h1``
    is ``nan`` when its inner scale matrix is singular. ``degenerate``
    marks statistics set to 0 because numerator and denominator vanished
    together (perfect fit).
    """

    t1: float
    t2: float
    t3: float
    t4: float
    h1: float
    h2: float
    h3: float
    r: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    kappaR: float
    t1_defined: bool
    h1_scale_pd: bool
    degenerate: bool = False

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def values(self):
        """Mapping of statistic name to value, skipping undefined ``t1``."""
        return {k: getattr(self, k) for k in STATISTICS if k != "t1" or self.t1_defined}


def _ratio(num, den, floor):
    """Elementwise ``num / den`` with 0/0 -> 0 and x/0 -> inf."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    small_den = den <= floor
    small_num = np.abs(num) <= floor
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(small_den, np.where(small_num, 0.0, np.inf), num / np.where(small_den, 1.0, den))
    return out, small_den & small_num


def _assemble(dims, q0, lam1, lam2, lam3, lam4, psi_r, lam_r, h1, h1_pd, floor):
    """Combine quadratic forms into statistic arrays."""
    T, G, k1, k2 = dims
    kap = kappa_constants(T, G, k1, k2)
    t1_defined = k2 > G
    degenerate = np.zeros(np.shape(q0), dtype=bool)
    out = {}
    for name, kappa, den in [
        ("t1", kap["kappa1"], lam1),
        ("t2", kap["kappa2"], lam2),
        ("t3", kap["kappa3"], lam3),
        ("t4", kap["kappa4"], lam4),
        ("h2", T, lam3),
        ("h3", T, lam4),
    ]:
        if name == "t1" and not t1_defined:
            continue
        val, deg = _ratio(q0, den, floor)
        out[name] = kappa * val
        degenerate |= deg
    if not t1_defined:
        out["t1"] = np.full(np.shape(q0), np.nan)
    val, deg = _ratio(psi_r, lam_r, floor)
    out["r"] = kap["kappaR"] * val
    degenerate |= deg
    # numerator zero: h1 is zero whatever the inner matrix does
    zero_num = q0 <= floor
    degenerate |= zero_num & ~np.isfinite(h1)
    out["h1"] = np.where(zero_num, 0.0, h1)
    return out, kap, t1_defined, np.asarray(h1_pd), degenerate


def _to_set(vals, kap, t1_defined, h1_pd, degenerate, j=0):
    return StatisticSet(
        **{k: float(np.asarray(vals[k]).reshape(-1)[j]) for k in STATISTICS},
        **kap,
        t1_defined=t1_defined,
        h1_scale_pd=bool(np.asarray(h1_pd).reshape(-1)[j]),
        degenerate=bool(np.asarray(degenerate).reshape(-1)[j]),
    )


class WeightOperatorSet:
    """Factored weight operators of the quadratic-form representation.

    Built once from ``(X, Y)``; evaluates for any T-vector ``x`` the
    forms ``x'Wx`` for ``W`` in ``psi0``, ``lambda1`` .. ``lambda4``,
    ``psi_r``, ``lambda_r`` without forming T x T matrices. Instances are
    read-only after construction.

    Parameters
    ----------
    p : ExogeneityProblem
        Only ``X1``, ``X2`` and ``Y`` are used.
    tol : float
        Relative rank tolerance.
    """

    NAMES = ("psi0", "lambda1", "lambda2", "lambda3", "lambda4", "psi_r", "lambda_r")

    def __init__(self, p, tol=DEFAULT_TOL):
        f = _factor(p, tol)
        self.dims = p.dims
        T, G, k1, k2 = p.dims
        self.T = T
        self.kappas = kappa_constants(T, G, k1, k2)
        self.t1_defined = k2 > G
        self._B1 = f.B1
        self._BN = f.BN
        self._M1Y = f.M1Y
        self._Q1, self._R1 = f.Q1, f.R1
        self._Q2, self._R2 = f.Q2, f.R2
        self.omega_iv = _sym(f.R2.T @ f.R2) / T
        self.omega_ls = _sym(f.R1.T @ f.R1) / T
        sigma_v = _sym(f.MY.T @ f.MY) / T
        self.delta_hat_inv = _sym(self.omega_iv + self.omega_iv @ np.linalg.solve(sigma_v, self.omega_iv))
        self._L = np.linalg.cholesky(self.delta_hat_inv)
        eye = np.eye(G)
        self.omega_iv_inv = _sym(scipy.linalg.cho_solve(scipy.linalg.cho_factor(self.omega_iv), eye))
        self.omega_ls_inv = _sym(scipy.linalg.cho_solve(scipy.linalg.cho_factor(self.omega_ls), eye))
        # lambda1: annihilate N1Y inside the k2-dim coordinates of span(M1 X2)
        self._Qa = np.linalg.qr(f.BN.basis.T @ f.M1Y)[0]
        # lambda2: residual space of [X1, N1Y, MY]; the three blocks are orthogonal
        self._Q3 = np.linalg.qr(f.MY)[0]
        # psi_r: span of M[Ybar] X2
        m1x2 = f.BN.basis  # same span as M1 X2
        self._QR = np.linalg.qr(m1x2 - self._Q1 @ (self._Q1.T @ m1x2))[0]
        # lambda_r: residual space of Z; span M1[Y, X2] = span[Q1, QR]
        self._QZ = np.hstack([self._Q1, self._QR])

    # -- linear pieces -------------------------------------------------
    def _m1(self, x):
        return self._B1.annihilate(x)

    def b1(self, x):
        """``(Y'M1Y)^{-1} Y'M1 x``."""
        return scipy.linalg.solve_triangular(self._R1, self._Q1.T @ x)

    def b2(self, x):
        """``(Y'N1Y)^{-1} Y'N1 x``."""
        return scipy.linalg.solve_triangular(self._R2, self._Q2.T @ x)

    def c1(self, x):
        """``C1 x = (B2 - B1) x``; for ``x = y`` the 2SLS minus OLS gap."""
        x = self._check(x)
        return self.b2(x) - self.b1(x)

    def c1_t(self, z):
        """Transpose action ``C1' z`` for a G-vector or G x n matrix."""
        z = np.asarray(z, dtype=float)
        sol = scipy.linalg.solve_triangular
        return self._Q2 @ sol(self._R2, z, trans="T") - self._Q1 @ sol(self._R1, z, trans="T")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.T:
            raise InvalidInput(f"expected {self.T} rows, got {x.shape[0]}")
        return x

    # -- residual vectors whose squared norms give the forms ------------
    def _pieces(self, x):
        x = self._check(x)
        m1x = self._m1(x)
        c = self.c1(x)
        cn = self._BN.basis.T @ x
        r1 = cn - self._Qa @ (self._Qa.T @ cn)
        r2 = m1x - self._Q2 @ (self._Q2.T @ x) - self._Q3 @ (self._Q3.T @ x)
        r3 = m1x - self._M1Y @ self.b2(x)
        r4 = m1x - self._Q1 @ (self._Q1.T @ x)
        pr = self._QR.T @ x
        rr = m1x - self._QZ @ (self._QZ.T @ x)
        return c, r1, r2, r3, r4, pr, rr

    def quadratic_forms(self, x):
        """All weight-matrix quadratic forms of ``x``.

        Parameters
        ----------
        x : array_like of shape (T,) or (T, n)

        Returns
        -------
        dict
            ``c1`` (G or G x n) and one entry per name in ``NAMES``
            (scalar or length-n array).
        """
        c, r1, r2, r3, r4, pr, rr = self._pieces(x)
        T = self.T
        z = self._L.T @ c
        sq = lambda a: np.sum(a * a, axis=0)  # noqa: E731
        return {
            "c1": c,
            "psi0": sq(z),
            "lambda1": sq(r1) / T,
            "lambda2": sq(r2) / T,
            "lambda3": sq(r3) / T,
            "lambda4": sq(r4) / T,
            "psi_r": sq(pr) / T,
            "lambda_r": sq(rr) / T,
        }

    def matvec(self, name, x):
        """Apply weight matrix ``name`` to ``x`` (T or T x n)."""
        x = self._check(x)
        T = self.T
        if name == "psi0":
            return self.c1_t(self.delta_hat_inv @ self.c1(x))
        if name == "lambda1":
            cn = self._BN.basis.T @ x
            return self._BN.basis @ (cn - self._Qa @ (self._Qa.T @ cn)) / T
        if name == "lambda2":
            return (self._m1(x) - self._Q2 @ (self._Q2.T @ x) - self._Q3 @ (self._Q3.T @ x)) / T
        if name == "lambda3":
            v = self._m1(x)
            v = v - self._M1Y @ self.b2(v)
            # N2' w = w - B2'(M1Y' w)
            sol = scipy.linalg.solve_triangular
            v = v - self._Q2 @ sol(self._R2, self._M1Y.T @ v, trans="T")
            return self._m1(v) / T
        if name == "lambda4":
            return (self._m1(x) - self._Q1 @ (self._Q1.T @ x)) / T
        if name == "psi_r":
            return self._QR @ (self._QR.T @ x) / T
        if name == "lambda_r":
            return (self._m1(x) - self._QZ @ (self._QZ.T @ x)) / T
        raise InvalidInput(f"unknown weight matrix {name!r}")

    def trace(self, name):
        """Trace of ``T * W`` computed from the factored operator."""
        return float(np.sum(self.quadratic_forms(np.eye(self.T))[name])) * self.T

    # -- statistics ----------------------------------------------------
    def evaluate(self, E):
        """Statistics for each column of ``E`` (T x n).

        Returns
        -------
        values : dict of ndarray
            One length-n array per statistic.
        flags : dict
            ``kappas``, ``t1_defined``, ``h1_scale_pd`` (array) and
            ``degenerate`` (array).
        """
        E = self._check(E)
        if E.ndim == 1:
            E = E[:, None]
        qf = self.quadratic_forms(E)
        floor = VANISH * np.sum(E * E, axis=0) / self.T
        h1, pd = self._h1(qf["c1"], qf["lambda3"], qf["lambda4"])
        vals, kap, t1_defined, pd, deg = _assemble(
            self.dims, qf["psi0"], qf["lambda1"], qf["lambda2"], qf["lambda3"],
            qf["lambda4"], qf["psi_r"], qf["lambda_r"], h1, pd, floor,
        )
        return vals, {"kappas": kap, "t1_defined": t1_defined, "h1_scale_pd": pd, "degenerate": deg}

    def _h1(self, c, lam3, lam4):
        # inner matrix lam3*inv(omega_iv) - lam4*inv(omega_ls), may be indefinite
        A = lam3[:, None, None] * self.omega_iv_inv - lam4[:, None, None] * self.omega_ls_inv
        w, V = np.linalg.eigh(A)
        z = np.einsum("nij,in->nj", V, c)
        scale = np.max(np.abs(w), axis=1)
        singular = ~(np.min(np.abs(w), axis=1) > H1_SINGULAR * scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            h1 = self.T * np.sum(z * z / np.where(singular[:, None], 1.0, w), axis=1)
        h1 = np.where(singular, np.nan, h1)
        pd = ~singular & (np.min(w, axis=1) > 0)
        return h1, pd


def weight_operators(p, tol=DEFAULT_TOL):
    """Build the :class:`WeightOperatorSet` of a problem."""
    return WeightOperatorSet(p, tol)


def compute_from_vector(w, x):
    """Statistics evaluated on the vector ``x`` with cached operators.

    With ``x = y`` this equals :func:`compute_direct`. With ``x`` a
    null error draw it gives a draw from the null distribution.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInput("x must be a T-vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("x contains non-finite entries")
    vals, flags = w.evaluate(x)
    return _to_set(vals, flags["kappas"], flags["t1_defined"], flags["h1_scale_pd"], flags["degenerate"])


def compute_direct(p, b):
    """Statistics from the estimates in an :class:`EstimatorBundle`.

    ``t_l = kappa_l d' inv(Sigma_l) d`` and ``h_j = T d' inv(Sigma_j) d``
    with ``d = beta_2sls - beta_ols``; ``r`` from the residual sums of
    squares of ``y`` on ``[Y, X1]`` and on ``Z``.
    """
    T = p.T
    d = b.beta_2sls - b.beta_ols
    q0 = float(d @ b.delta_hat_inv @ d)
    floor = VANISH * float(p.y @ p.y) / T
    BZ = orthonormal_basis(p.Z)
    ez = BZ.annihilate(p.y)
    lam_r = float(ez @ ez) / T
    psi_r = b.sigma2_hat - lam_r
    # symmetric indefinite solve for the h1 scale matrix
    S1 = _sym(
        b.sigma2_tilde * np.linalg.inv(b.omega_iv) - b.sigma2_hat * np.linalg.inv(b.omega_ls)
    )
    eig = np.linalg.eigvalsh(S1)
    scale = np.max(np.abs(eig))
    if scale > 0 and np.min(np.abs(eig)) > H1_SINGULAR * scale:
        h1 = T * float(d @ scipy.linalg.solve(S1, d, assume_a="sym"))
        pd = bool(eig[0] > 0)
    else:
        h1, pd = np.nan, False
    vals, kap, t1_defined, pd, deg = _assemble(
        p.dims, np.array([q0]), np.array([b.sigma2_tilde1]), np.array([b.sigma2_tilde2]),
        np.array([b.sigma2_tilde]), np.array([b.sigma2_hat]), np.array([psi_r]),
        np.array([lam_r]), np.array([h1]), np.array([pd]), floor,
    )
    return _to_set(vals, kap, t1_defined, pd, deg)


def _ssr(A, v):
    if A.shape[1] == 0:
        return float(v @ v)
    coef = np.linalg.lstsq(A, v, rcond=None)[0]
    r = v - A @ coef
    return float(r @ r)


def compute_ssr_oracle(p):
    """Statistics from sums of squared residuals of auxiliary regressions.

    Used as a test oracle. ``h1`` has no such form and is returned as
    ``nan`` with ``h1_scale_pd`` false.

    The sums of squares are: ``s0`` (y on ``[Y, X1]``), ``s1`` (y on
    ``[Y, X1, V]`` with ``V`` the residuals of ``Y`` on ``X``), ``s0_iv``
    (``y - Y b_iv`` on ``X1``), ``s1_iv`` (``y - Y b_iv`` on ``X``) and
    ``sz`` (y on ``Z``), where ``b_iv`` comes from the second-stage
    regression of ``y`` on ``[P[X] Y, X1]``.
    """
    T, G, k1, k2 = p.dims
    y, Y, X1, X = p.y, p.Y, p.X1, p.X
    Yhat = X @ np.linalg.lstsq(X, Y, rcond=None)[0]
    Vhat = Y - Yhat
    b_iv = np.linalg.lstsq(np.hstack([Yhat, X1]), y, rcond=None)[0][:G]
    ytil = y - Y @ b_iv
    s0 = _ssr(np.hstack([Y, X1]), y)
    s1 = _ssr(np.hstack([Y, X1, Vhat]), y)
    s0_iv = _ssr(X1, ytil)
    s1_iv = _ssr(X, ytil)
    sz = _ssr(p.Z, y)
    floor = VANISH * float(y @ y)
    num = np.array([s0 - s1])
    kap = kappa_constants(T, G, k1, k2)
    vals, deg = {}, np.zeros(1, dtype=bool)
    for name, kappa, n, den in [
        ("t1", kap["kappa1"], num, s0_iv - s1_iv),
        ("t2", kap["kappa2"], num, s1),
        ("t3", kap["kappa3"], num, s0_iv),
        ("t4", kap["kappa4"], num, s0),
        ("h2", T, num, s0_iv),
        ("h3", T, num, s0),
        ("r", kap["kappaR"], np.array([s0 - sz]), sz),
    ]:
        if name == "t1" and k2 <= G:
            continue
        v, dg = _ratio(n, np.array([den]), floor)
        vals[name] = kappa * v
        deg |= dg
    if k2 <= G:
        vals["t1"] = np.array([np.nan])
    vals["h1"] = np.array([np.nan])
    return _to_set(vals, kap, k2 > G, np.array([False]), deg)


def wu_q_forms(p):
    """Wu's quadratic forms from dense annihilators (small T oracle).

    Returns
    -------
    dict
        ``q_star``, ``q1``, ``q2``, ``q3``, ``q4`` with ``A1 = M1`` and
        ``A2 = M1 - M``.
    """
    T = p.T
    eye = np.eye(T)

    def resid_maker(A):
        if A.shape[1] == 0:
            return eye
        return eye - A @ np.linalg.pinv(A)

    A1 = resid_maker(p.X1)
    M = resid_maker(p.X)
    A2 = A1 - M
    y, Y = p.y, p.Y
    b1 = np.linalg.solve(Y.T @ A1 @ Y, Y.T @ A1 @ y)
    b2 = np.linalg.solve(Y.T @ A2 @ Y, Y.T @ A2 @ y)
    d = b1 - b2
    inner = np.linalg.inv(Y.T @ A2 @ Y) - np.linalg.inv(Y.T @ A1 @ Y)
    q_star = float(d @ np.linalg.solve(inner, d))
    r1, r2 = y - Y @ b1, y - Y @ b2
    q4 = float(r1 @ A1 @ r1)
    return {
        "q_star": q_star,
        "q1": float(r2 @ A2 @ r2),
        "q2": q4 - q_star,
        "q3": float(r2 @ A1 @ r2),
        "q4": q4,
    }


def reference_pvalues(s, dims):
    """Reference p-values of a :class:`StatisticSet`.

    ``t1``, ``t2`` and ``r`` use their exact F laws under Gaussian
    errors; the others use the asymptotic chi-square(G) law.

    Parameters
    ----------
    s : StatisticSet
    dims : tuple
        ``(T, G, k1, k2)``.

    Returns
    -------
    dict
        ``{name: {"pvalue": float, "law": str, "kind": str}}``. ``t1`` is
        absent when undefined, ``h1`` when its scale matrix is not
        positive definite, and any statistic that is not finite.
    """
    T, G, k1, k2 = dims
    laws = {
        "t1": ("F", (G, k2 - G), "exact-gaussian"),
        "t2": ("F", (G, T - k1 - 2 * G), "exact-gaussian"),
        "r": ("F", (k2, T - k1 - k2 - G), "exact-gaussian"),
    }
    out = {}
    for name in STATISTICS:
        value = getattr(s, name)
        if name == "t1" and not s.t1_defined:
            continue
        if name == "h1" and not s.h1_scale_pd:
            continue
        if not np.isfinite(value):
            continue
        family, df, kind = laws.get(name, ("chi2", (G,), "asymptotic"))
        if family == "F":
            pv = float(_st.f.sf(value, *df))
            law = f"F({df[0]},{df[1]})"
        else:
            pv = float(_st.chi2.sf(value, *df))
            law = f"chi2({df[0]})"
        out[name] = {"pvalue": pv, "law": law, "kind": kind}
    return out


def critical_values(dims, alpha=0.05):
    """Critical values used in standard-mode rejection decisions."""
    T, G, k1, k2 = dims
    chi = float(_st.chi2.isf(alpha, G))
    out = {k: chi for k in STATISTICS}
    out["t1"] = float(_st.f.isf(alpha, G, k2 - G)) if k2 > G else np.nan
    out["t2"] = float(_st.f.isf(alpha, G, T - k1 - 2 * G))
    out["r"] = float(_st.f.isf(alpha, k2, T - k1 - k2 - G))
    return out


def block_triangular_transform(p, R11, R21, R22):
    """Apply ``y* = y R11 + Y R21`` and ``Y* = Y R22``.

    Parameters
    ----------
    p : ExogeneityProblem
    R11 : float
        Nonzero scalar.
    R21 : array_like of shape (G,)
    R22 : array_like of shape (G, G)
        Nonsingular.

    Returns
    -------
    ExogeneityProblem
        Same ``X1``, ``X2``; all eight statistics are unchanged.

    Raises
    ------
    InvalidInput
        ``R11 == 0`` or ``R22`` singular.
    """
    G = p.G
    R21 = np.asarray(R21, dtype=float).reshape(G)
    R22 = np.asarray(R22, dtype=float).reshape(G, G)
    if not np.isfinite(R11) or R11 == 0:
        raise InvalidInput("R11 must be a nonzero finite scalar")
    if np.linalg.matrix_rank(R22) < G:
        raise InvalidInput("R22 must be nonsingular")
    return ExogeneityProblem(
        p.y * R11 + p.Y @ R21, p.Y @ R22, p.X1, p.X2, p.intercept_flag, p.names
    )


def compute(p, tol=DEFAULT_TOL):
    """Validate ``p`` and return ``compute_direct(p, fit(p))``."""
    from .estimators import fit

    require_valid(p, tol)
    return compute_direct(p, fit(p, tol))
