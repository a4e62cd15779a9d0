"""Orthogonal-decomposition primitives.

Projections and annihilators are never formed as T x T matrices. A
column space is stored as an orthonormal basis ``Q`` and applied as
``Q @ (Q.T @ x)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import InvalidInput

DEFAULT_TOL = 1e-10


def _as_2d(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be a vector or a matrix, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal basis of the column space of a T x m matrix.

    Attributes
    ----------
    basis : ndarray of shape (T, rank)
        Column-orthonormal matrix spanning the column space.
    rank : int
        Numerical rank at ``tol_used``.
    source_cols : int
        Number of columns in the source matrix.
    tol_used : float
        Relative tolerance used for the rank decision.
    """

    basis: np.ndarray
    rank: int
    source_cols: int
    tol_used: float

    @property
    def n_rows(self):
        return self.basis.shape[0]

    def coords(self, x):
        """Coordinates ``Q' x`` of ``x`` in the basis."""
        return self.basis.T @ _check_rows(self, x)

    def project(self, x):
        """Orthogonal projection of ``x`` onto the column space."""
        x = _check_rows(self, x)
        return self.basis @ (self.basis.T @ x)

    def annihilate(self, x):
        """Projection of ``x`` onto the orthogonal complement."""
        return annihilate(self, x)


def _check_rows(B, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != B.basis.shape[0]:
        raise InvalidInput(
            f"row dimension mismatch: basis has {B.basis.shape[0]} rows, "
            f"argument has {x.shape[0]}"
        )
    return x


def orthonormal_basis(A, tol=DEFAULT_TOL):
    """Orthonormal basis of the column space of ``A``.

    Uses a QR factorization with column pivoting. The numerical rank is
    the number of singular values of ``A`` above ``tol * sigma_max``.

    Parameters
    ----------
    A : array_like of shape (T, m)
        Source matrix; ``m`` may be zero.
    tol : float, default=1e-10
        Relative rank tolerance.

    Returns
    -------
    OrthoBasis

    Raises
    ------
    InvalidInput
        If ``A`` has non-finite entries or ``tol`` is not positive.
    """
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    A = _as_2d(A)
    T, m = A.shape
    if T < 1:
        raise InvalidInput("A must have at least one row")
    if m == 0:
        return OrthoBasis(np.zeros((T, 0)), 0, 0, tol)
    r = numerical_rank(A, tol)
    if r == 0:
        return OrthoBasis(np.zeros((T, 0)), 0, m, tol)
    Q, _, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    return OrthoBasis(np.ascontiguousarray(Q[:, :r]), r, m, tol)


def annihilate(B, x):
    """Apply the annihilator of the span of ``B`` to ``x``.

    Parameters
    ----------
    B : OrthoBasis
    x : array_like of shape (T,) or (T, k)

    Returns
    -------
    ndarray
        ``x - Q (Q' x)``, same shape as ``x``.
    """
    x = _check_rows(B, x)
    if B.rank == 0:
        return x.copy()
    return x - B.basis @ (B.basis.T @ x)


def numerical_rank(A, tol=DEFAULT_TOL):
    """Count singular values above ``tol`` times the largest one."""
    if not tol > 0:
        raise InvalidInput("tol must be positive")
    A = _as_2d(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def stack_columns(*blocks, n_rows):
    """Horizontally stack 2-D blocks, allowing zero-width blocks."""
    parts = [np.asarray(b, dtype=float).reshape(n_rows, -1) for b in blocks]
    return np.hstack(parts) if parts else np.zeros((n_rows, 0))
