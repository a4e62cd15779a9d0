"""Observed data of the linear IV model and its validation.

The model is ``y = Y beta + X1 gamma + u`` with possibly endogenous
regressors ``Y`` (T x G), included exogenous regressors ``X1`` (T x k1,
possibly empty) and excluded instruments ``X2`` (T x k2).
"""

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataError, IdentificationDataError, InvalidInput, SpecError
from .linalg import DEFAULT_TOL, numerical_rank, orthonormal_basis

INTERCEPT_NAME = "const"
_MISSING = {"", "na", "nan", "null", "none", "."}


def kappa_constants(T, G, k1, k2):
    """Degrees-of-freedom constants of the eight statistics.

    Returns
    -------
    dict
        Keys ``kappa1`` .. ``kappa4`` and ``kappaR``.
    """
    return {
        "kappa1": (k2 - G) / G,
        "kappa2": (T - k1 - 2 * G) / G,
        "kappa3": float(T - k1 - G),
        "kappa4": float(T - k1 - G),
        "kappaR": (T - k1 - k2 - G) / k2,
    }


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ExogeneityProblem:
    """Observed sample ``(y, Y, X1, X2)``.

    Arrays are copied and made read-only, so instances can be shared
    between threads. Use :func:`make_problem` or :func:`load_problem` to
    get rank checking on construction.

    Parameters
    ----------
    y : array_like of shape (T,)
    Y : array_like of shape (T, G)
    X1 : array_like of shape (T, k1)
        May have zero columns.
    X2 : array_like of shape (T, k2)
    intercept_flag : bool
        Whether a constant column was added to ``X1`` automatically.
    names : dict, optional
        Column names per role, used in reports.
    """

    y: np.ndarray
    Y: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    intercept_flag: bool = False
    names: dict = field(default=None, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 2 and y.shape[1] == 1:
            y = y[:, 0]
        if y.ndim != 1:
            raise InvalidInput("y must be a vector")
        T = y.shape[0]
        blocks = {}
        for name in ("Y", "X1", "X2"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim == 1:
                a = a[:, None] if a.size else a.reshape(T, 0)
            if a.ndim != 2 or a.shape[0] != T:
                raise InvalidInput(f"{name} must have {T} rows, got shape {a.shape}")
            blocks[name] = a
        if blocks["Y"].shape[1] < 1:
            raise InvalidInput("Y needs at least one column")
        if blocks["X2"].shape[1] < 1:
            raise InvalidInput("X2 needs at least one column")
        for name, a in [("y", y), *blocks.items()]:
            if not np.all(np.isfinite(a)):
                raise InvalidInput(f"{name} contains non-finite entries")
        object.__setattr__(self, "y", _frozen(y))
        for name, a in blocks.items():
            object.__setattr__(self, name, _frozen(a))
        if self.names is None:
            object.__setattr__(self, "names", _default_names(*self.dims[1:], self.intercept_flag))

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def G(self):
        return self.Y.shape[1]

    @property
    def k1(self):
        return self.X1.shape[1]

    @property
    def k2(self):
        return self.X2.shape[1]

    @property
    def dims(self):
        """``(T, G, k1, k2)``."""
        return self.T, self.G, self.k1, self.k2

    @property
    def X(self):
        """All exogenous variables ``[X1, X2]``."""
        return np.hstack([self.X1, self.X2])

    @property
    def Ybar(self):
        """Regressors of the structural equation ``[Y, X1]``."""
        return np.hstack([self.Y, self.X1])

    @property
    def Z(self):
        """``[Y, X1, X2]``."""
        return np.hstack([self.Y, self.X1, self.X2])

    @property
    def kappas(self):
        return kappa_constants(*self.dims)

    def with_y(self, y):
        """Same regressors and instruments with a new dependent variable."""
        return ExogeneityProblem(y, self.Y, self.X1, self.X2, self.intercept_flag, self.names)


def _default_names(G, k1, k2, intercept):
    x1 = [f"x1_{i}" for i in range(k1)]
    if intercept and k1:
        x1[0] = INTERCEPT_NAME
    return {
        "y": "y",
        "endog": [f"y_{i}" for i in range(G)],
        "exog": x1,
        "instr": [f"x2_{i}" for i in range(k2)],
    }


def make_problem(y, Y, X2, X1=None, add_intercept=False, tol=DEFAULT_TOL, names=None):
    """Build a problem from arrays and check the identification ranks.

    Parameters
    ----------
    y, Y, X2 : array_like
        Dependent variable, endogenous regressors, excluded instruments.
    X1 : array_like, optional
        Included exogenous regressors. Defaults to none.
    add_intercept : bool, default=False
        Prepend a column of ones to ``X1``.
    tol : float
        Relative rank tolerance.

    Returns
    -------
    ExogeneityProblem

    Raises
    ------
    InvalidInput
        Shape problems or non-finite values.
    IdentificationDataError
        ``[Y, X]`` or ``[P[X] Y, X1]`` lacks full column rank.
    """
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    X1 = np.zeros((T, 0)) if X1 is None else np.asarray(X1, dtype=float).reshape(T, -1)
    if add_intercept:
        X1 = np.hstack([np.ones((T, 1)), X1])
    p = ExogeneityProblem(y, Y, X1, X2, bool(add_intercept), names)
    report = validate(p, tol)
    rank_failures = [f for f in report.failures if f.startswith("rank")]
    if rank_failures:
        raise IdentificationDataError("; ".join(report.messages[f] for f in rank_failures))
    return p


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`.

    ``failures`` lists failure codes: ``rank_YX``, ``rank_PYX1`` and
    ``DegenerateDims``. ``messages`` maps each code to a description.
    """

    T: int
    G: int
    k1: int
    k2: int
    rank_YX: int
    rank_PYX1: int
    kappas: dict
    t1_defined: bool
    failures: tuple
    messages: dict

    @property
    def ok(self):
        return not self.failures


def validate(p, tol=DEFAULT_TOL):
    """Check the rank condition and degrees of freedom of a problem.

    Never raises for data problems; failures are listed in the report.
    """
    T, G, k1, k2 = p.dims
    rank_yx = numerical_rank(p.Z, tol)
    PX = orthonormal_basis(p.X, tol)
    rank_pyx1 = numerical_rank(np.hstack([PX.project(p.Y), p.X1]), tol)
    failures, messages = [], {}
    if rank_yx < G + k1 + k2:
        failures.append("rank_YX")
        messages["rank_YX"] = f"[Y, X] has rank {rank_yx} < {G + k1 + k2} (exact collinearity)"
    if rank_pyx1 < G + k1:
        failures.append("rank_PYX1")
        messages["rank_PYX1"] = (
            f"[P[X]Y, X1] has rank {rank_pyx1} < {G + k1}: instruments carry no "
            "information on Y given X1"
        )
    if T <= k1 + k2 + G or T <= k1 + 2 * G:
        failures.append("DegenerateDims")
        messages["DegenerateDims"] = (
            f"T={T} must exceed k1+k2+G={k1 + k2 + G} and k1+2G={k1 + 2 * G}"
        )
    return ValidationReport(
        T, G, k1, k2, rank_yx, rank_pyx1, kappa_constants(T, G, k1, k2),
        k2 > G, tuple(failures), messages,
    )


def require_valid(p, tol=DEFAULT_TOL):
    """Raise the matching error when :func:`validate` reports a failure."""
    from .exceptions import DegenerateDimsError

    report = validate(p, tol)
    for code in report.failures:
        if code.startswith("rank"):
            raise IdentificationDataError(report.messages[code])
    if report.failures:
        raise DegenerateDimsError(report.messages["DegenerateDims"])
    return report


@dataclass(frozen=True)
class ColumnRoles:
    """Mapping from table columns to model roles.

    Parameters
    ----------
    y : str
        Dependent variable.
    endog : sequence of str
        Possibly endogenous regressors (at least one).
    instr : sequence of str
        Excluded instruments (at least one).
    exog : sequence of str, default=()
        Included exogenous regressors.
    intercept : bool, default=True
        Add a constant to the included exogenous regressors.
    """

    y: str
    endog: Sequence[str]
    instr: Sequence[str]
    exog: Sequence[str] = ()
    intercept: bool = True

    def __post_init__(self):
        for role in ("endog", "instr", "exog"):
            value = getattr(self, role)
            if isinstance(value, str):
                value = [value]
            object.__setattr__(self, role, tuple(value))
        if not self.y:
            raise SpecError("role 'y' is not set")
        if not self.endog:
            raise SpecError("role 'endog' needs at least one column")
        if not self.instr:
            raise SpecError("role 'instr' needs at least one column")
        used = [self.y, *self.endog, *self.instr, *self.exog]
        dup = sorted({c for c in used if used.count(c) > 1})
        if dup:
            raise SpecError(f"columns assigned to more than one role: {', '.join(dup)}")


def _column(table, name):
    if name not in table:
        raise SpecError(f"column {name!r} not found in table")
    raw = table[name]
    out = np.empty(len(raw), dtype=float)
    for i, v in enumerate(raw):
        if isinstance(v, str):
            s = v.strip()
            if s.lower() in _MISSING:
                raise DataError(f"missing value in column {name!r} at row {i + 1}")
            try:
                v = float(s)
            except ValueError:
                raise DataError(f"non-numeric value {s!r} in column {name!r} at row {i + 1}") from None
        if v is None or not np.isfinite(v):
            raise DataError(f"missing or non-finite value in column {name!r} at row {i + 1}")
        out[i] = v
    return out


def load_problem(table, roles, tol=DEFAULT_TOL):
    """Build a problem from a column-labelled table.

    Parameters
    ----------
    table : mapping of str to sequence
        Columns by name. Values may be numbers or strings (as read from
        CSV); only columns named in ``roles`` are parsed.
    roles : ColumnRoles
    tol : float

    Returns
    -------
    ExogeneityProblem

    Raises
    ------
    SpecError
        A named column is absent.
    DataError
        Missing, non-numeric or non-finite cells.
    IdentificationDataError
        Exact rank failure.
    """
    if not isinstance(table, Mapping):
        raise InvalidInput("table must be a mapping of column name to values")
    y = _column(table, roles.y)
    T = y.shape[0]

    def block(cols):
        if not cols:
            return np.zeros((T, 0))
        arrays = [_column(table, c) for c in cols]
        for c, a in zip(cols, arrays):
            if a.shape[0] != T:
                raise DataError(f"column {c!r} has {a.shape[0]} rows, expected {T}")
        return np.column_stack(arrays)

    Y, X1, X2 = block(roles.endog), block(roles.exog), block(roles.instr)
    exog_names = list(roles.exog)
    if roles.intercept:
        exog_names = [INTERCEPT_NAME, *exog_names]
    names = {"y": roles.y, "endog": list(roles.endog), "exog": exog_names, "instr": list(roles.instr)}
    return make_problem(y, Y, X2, X1, add_intercept=roles.intercept, tol=tol, names=names)


def read_csv(path):
    """Read a CSV file with a header row into a dict of string columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicated column names in header")
        cols = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols


def write_csv(p, path):
    """Write the data of ``p`` as CSV so that :func:`load_problem` restores it.

    Floats are written with ``repr`` which round-trips exactly. An
    automatically added intercept is not written.

    Returns
    -------
    ColumnRoles
        Roles that reload the file into an identical problem.
    """
    names = p.names
    exog_names = list(names["exog"])
    X1 = p.X1
    if p.intercept_flag:
        exog_names, X1 = exog_names[1:], X1[:, 1:]
    header = [names["y"], *names["endog"], *exog_names, *names["instr"]]
    data = np.column_stack([p.y, p.Y, X1, p.X2])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    return ColumnRoles(names["y"], names["endog"], names["instr"], exog_names, p.intercept_flag)
