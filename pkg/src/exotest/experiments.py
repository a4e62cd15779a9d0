"""Simulation study: data generation, size/power tables and power theory.

Design: ``T = 50``, two endogenous regressors, no included exogenous
variables, ``beta0 = (2, 5)``, ``u = V a + e`` with ``a = lambda * a0``,
``a0 = (0.5, 0.2)``, ``Y = X2 Pi2 + V`` with ``Pi2 = [eta1 e1 : eta2 e2]``
and ``X2 ~ N(0, I)`` drawn once per design and held fixed.

Random streams: the design matrix is keyed by ``(seed, T, k2)`` and the
errors of replication ``r`` by ``(seed, T, k2, r)``. Cells that differ
only in ``lambda`` or ``eta`` therefore share their error draws (common
random numbers), which makes comparisons across cells sharper.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _st

from . import _rng
from .exceptions import InvalidInput
from .linalg import orthonormal_basis
from .mct import ErrorLaw, MctConfig, mc_test_operators
from .problem import ExogeneityProblem
from .statistics import STATISTICS, critical_values, weight_operators

LAMBDAS = (-20.0, -5.0, 0.0, 1.0, 100.0)
ETAS = (0.0, 0.01, 0.5)
K2S = (5, 10, 20)
_LAW_TAG = {"gaussian": 0, "t": 1, "custom": 2}


def _law(law):
    return law if isinstance(law, ErrorLaw) else ErrorLaw.parse(law)


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the simulation design.

    Parameters
    ----------
    T : int, default=50
    k2 : int, default=5
    beta0 : tuple, default=(2, 5)
    a0 : tuple, default=(0.5, 0.2)
    lam : float, default=0
        Endogeneity multiplier; ``a = lam * a0``.
    eta : tuple, default=(0, 0)
        Instrument strengths.
    law : ErrorLaw or str, default="gaussian"
        Law of the components of ``e`` and ``V``.
    seed : int, default=0
    g_values : ndarray of shape (T, G), optional
        Replaces ``X2 Pi2`` as the mean of ``Y`` (incomplete-model
        experiments).
    instrument_cols : tuple of int, optional
        Columns of ``X2`` handed to the tests; others stay in the DGP only.
    """

    T: int = 50
    k2: int = 5
    beta0: tuple = (2.0, 5.0)
    a0: tuple = (0.5, 0.2)
    lam: float = 0.0
    eta: tuple = (0.0, 0.0)
    law: object = "gaussian"
    seed: int = 0
    g_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    instrument_cols: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "law", _law(self.law))
        G = len(self.beta0)
        if not (len(self.a0) == len(self.eta) == G):
            raise InvalidInput("beta0, a0 and eta must have the same length")
        if self.k2 < G:
            raise InvalidInput("k2 must be at least G")
        if self.T <= self.k2 + G:
            raise InvalidInput("T must exceed k2 + G")
        if self.g_values is not None and np.shape(self.g_values) != (self.T, G):
            raise InvalidInput(f"g_values must have shape {(self.T, G)}")

    @property
    def G(self):
        return len(self.beta0)

    @property
    def a(self):
        return self.lam * np.asarray(self.a0, dtype=float)

    @property
    def Pi2(self):
        P = np.zeros((self.k2, self.G))
        P[np.arange(self.G), np.arange(self.G)] = self.eta
        return P


@dataclass(frozen=True)
class LatentRecord:
    """Unobserved pieces of a simulated sample."""

    V: np.ndarray
    e: np.ndarray
    u: np.ndarray
    g: np.ndarray


def design_matrix(cfg):
    """Fixed instrument matrix ``X2`` of a design."""
    return _rng.substream(cfg.seed, _rng.DESIGN, cfg.T, cfg.k2).standard_normal((cfg.T, cfg.k2))


def generate_dataset(cfg, rep=0, X2=None):
    """Draw replication ``rep`` of the design.

    Returns
    -------
    problem : ExogeneityProblem
        ``k1 = 0``; no intercept.
    latent : LatentRecord
    """
    X2 = design_matrix(cfg) if X2 is None else X2
    T, G = cfg.T, cfg.G
    rng = _rng.substream(cfg.seed, _rng.DATA, T, cfg.k2, _LAW_TAG[cfg.law.kind], rep)
    draws = cfg.law.sample(rng, T, G + 1, X2)
    e, V = draws[:, 0], draws[:, 1:]
    g = X2 @ cfg.Pi2 if cfg.g_values is None else np.asarray(cfg.g_values, dtype=float)
    u = V @ cfg.a + e
    Y = g + V
    y = Y @ np.asarray(cfg.beta0, dtype=float) + u
    Xt = X2 if cfg.instrument_cols is None else X2[:, list(cfg.instrument_cols)]
    p = ExogeneityProblem(y, Y, np.zeros((T, 0)), Xt)
    return p, LatentRecord(V, e, u, g)


@dataclass(frozen=True)
class Cell:
    """One table cell: instrument count, endogeneity and strengths."""

    k2: int
    lam: float
    eta: tuple

    @classmethod
    def parse(cls, text):
        """Parse ``"k2=5,lambda=1,eta1=.5,eta2=0"``."""
        fields_ = {}
        for part in str(text).split(","):
            if "=" not in part:
                raise InvalidInput(f"bad cell component {part!r}; expected key=value")
            k, v = part.split("=", 1)
            fields_[k.strip().lower()] = v.strip()
        try:
            k2 = int(fields_.pop("k2"))
            lam = float(fields_.pop("lambda"))
            eta = (float(fields_.pop("eta1")), float(fields_.pop("eta2")))
        except KeyError as exc:
            raise InvalidInput(f"cell {text!r} is missing {exc.args[0]}") from None
        except ValueError:
            raise InvalidInput(f"cell {text!r} has a non-numeric value") from None
        if fields_:
            raise InvalidInput(f"unknown cell keys: {sorted(fields_)}")
        return cls(k2, lam, eta)

    def label(self):
        return f"k2={self.k2} lambda={_fmt(self.lam)} eta=({_fmt(self.eta[0])},{_fmt(self.eta[1])})"


def _fmt(v):
    return f"{v:g}"


SMOKE_CELLS = (
    Cell(5, 0.0, (0.0, 0.0)),
    Cell(5, 0.0, (0.01, 0.0)),
    Cell(5, 0.0, (0.5, 0.0)),
    Cell(5, 0.0, (0.0, 0.5)),
    Cell(5, 0.0, (0.5, 0.5)),
    Cell(5, 1.0, (0.5, 0.0)),
    Cell(5, 1.0, (0.0, 0.5)),
    Cell(5, 1.0, (0.5, 0.5)),
    Cell(5, 100.0, (0.01, 0.0)),
    Cell(5, -20.0, (0.0, 0.0)),
    Cell(5, 100.0, (0.0, 0.0)),
    Cell(5, -5.0, (0.5, 0.5)),
)


def full_cells():
    """All cells of a full table: 3 k2 x 5 lambda x 9 eta pairs (135 cells)."""
    return tuple(
        Cell(k2, lam, (e1, e2)) for k2 in K2S for lam in LAMBDAS for e2 in ETAS for e1 in ETAS
    )


PRESETS = {
    "table1": {"law": "gaussian", "mode": "standard"},
    "table2": {"law": "t:3", "mode": "standard"},
    "table3": {"law": "gaussian", "mode": "mc"},
    "table4": {"law": "t:3", "mode": "mc"},
}


def _cell_counts(cell, reps, mode, seed, law, n_draws, alpha, T, n_jobs):
    cfg = DgpConfig(T=T, k2=cell.k2, lam=cell.lam, eta=cell.eta, law=law, seed=seed)
    X2 = design_matrix(cfg)
    dims = (T, cfg.G, 0, cfg.k2)
    crit = critical_values(dims, alpha)
    mcfg = MctConfig(n_draws=n_draws, alpha_star=alpha, law=cfg.law) if mode == "mc" else None

    def run(block):
        counts = dict.fromkeys(STATISTICS, 0)
        for rep in block:
            p, _ = generate_dataset(cfg, rep, X2)
            w = weight_operators(p)
            if mode == "standard":
                vals, _ = w.evaluate(p.y)
                for k in STATISTICS:
                    v = vals[k][0]
                    counts[k] += bool(np.isfinite(v) and v >= crit[k])
            else:
                key = (seed, T, cell.k2, _LAW_TAG[cfg.law.kind], rep)
                rep_ = mc_test_operators(w, p.y, mcfg, X=p.X, seed_key=key)
                for k, e in rep_.entries.items():
                    counts[k] += e.reject
        return counts

    size = max(1, math.ceil(reps / (4 * n_jobs)))
    blocks = [range(s, min(s + size, reps)) for s in range(0, reps, size)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return {k: sum(c[k] for c in parts) for k in STATISTICS}


def rejection_table(cells, reps, mode="standard", seed=0, law="gaussian", n_draws=199,
                    alpha=0.05, T=50, n_jobs=1):
    """Rejection percentages of every statistic over a grid of cells.

    Parameters
    ----------
    cells : iterable of Cell
    reps : int
        Replications per cell.
    mode : {"standard", "mc"}
        ``standard`` compares with F / chi-square critical values, ``mc``
        runs the Monte Carlo test with ``n_draws`` draws from ``law``.
    seed : int
    law : ErrorLaw or str
    n_draws : int
    alpha : float
    T : int
    n_jobs : int
        Worker threads; results do not depend on it.

    Returns
    -------
    list of dict
        One row per (cell, statistic) with keys ``statistic``, ``k2``,
        ``lambda``, ``eta1``, ``eta2``, ``mode``, ``law``,
        ``rejection_pct``, ``reps``, ``seed``.
    """
    if int(reps) != reps or reps < 1:
        raise InvalidInput("reps must be a positive integer")
    if mode not in ("standard", "mc"):
        raise InvalidInput("mode must be 'standard' or 'mc'")
    law = _law(law)
    rows = []
    for cell in cells:
        counts = _cell_counts(cell, reps, mode, seed, law, n_draws, alpha, T, n_jobs)
        for k in STATISTICS:
            rows.append({
                "statistic": k,
                "k2": cell.k2,
                "lambda": cell.lam,
                "eta1": cell.eta[0],
                "eta2": cell.eta[1],
                "mode": mode,
                "law": law.describe(),
                "rejection_pct": 100.0 * counts[k] / reps,
                "reps": reps,
                "seed": seed,
            })
    return rows


TABLE_COLUMNS = ("statistic", "k2", "lambda", "eta1", "eta2", "mode", "law", "rejection_pct", "reps", "seed")


def format_csv(rows):
    """CSV text of table rows with fixed number formatting."""
    out = [",".join(TABLE_COLUMNS)]
    for r in rows:
        out.append(",".join([
            r["statistic"], str(r["k2"]), _fmt(r["lambda"]), _fmt(r["eta1"]), _fmt(r["eta2"]),
            r["mode"], r["law"], f"{r['rejection_pct']:.2f}", str(r["reps"]), str(r["seed"]),
        ]))
    return "\n".join(out) + "\n"


_DISPLAY = {"t1": "T1", "t2": "T2", "t3": "T3", "t4": "T4", "h1": "H1", "h2": "H2", "h3": "H3", "r": "R"}


def format_text(rows):
    """Aligned text table: statistics down, cells across, one block per k2."""
    if not rows:
        return ""
    suffix = "mc" if rows[0]["mode"] == "mc" else ""
    lines = [f"Rejection frequencies (%), law={rows[0]['law']}, mode={rows[0]['mode']}, "
             f"reps={rows[0]['reps']}, seed={rows[0]['seed']}"]
    for k2 in sorted({r["k2"] for r in rows}):
        sub = [r for r in rows if r["k2"] == k2]
        cells = []
        for r in sub:
            c = (r["lambda"], r["eta1"], r["eta2"])
            if c not in cells:
                cells.append(c)
        heads = [f"l={_fmt(l)} e=({_fmt(a)},{_fmt(b)})" for l, a, b in cells]
        width = max(8, *(len(h) for h in heads))
        lines.append("")
        lines.append(f"k2 = {k2}")
        lines.append(" " * 6 + " ".join(h.rjust(width) for h in heads))
        for s in STATISTICS:
            vals = {(r["lambda"], r["eta1"], r["eta2"]): r["rejection_pct"] for r in sub if r["statistic"] == s}
            lines.append((_DISPLAY[s] + suffix).ljust(6) + " ".join(f"{vals[c]:.1f}".rjust(width) for c in cells))
    return "\n".join(lines) + "\n"


# --- invariance and power theory ------------------------------------------

def canonical_transform(p, beta, a):
    """Outcome in exogeneity canonical form, ``y* = y - Y (beta + a)``."""
    beta = np.asarray(beta, dtype=float).reshape(p.G)
    a = np.asarray(a, dtype=float).reshape(p.G)
    return p.y - p.Y @ (beta + a)


NONCENTRALITY = ("psi0", "lambda1", "lambda2", "lambda4", "psi_r", "lambda_r")


def noncentrality_params(w, mu_perp):
    """Noncentralities ``delta(W) = T mu' W mu`` from factored operators.

    Parameters
    ----------
    w : WeightOperatorSet
    mu_perp : array_like of shape (T,)
        Mean of the canonical outcome after removing ``X1``, scaled by
        the error standard deviation.

    Returns
    -------
    dict
    """
    qf = w.quadratic_forms(np.asarray(mu_perp, dtype=float))
    return {k: w.T * float(qf[k]) for k in NONCENTRALITY}


# dof and noncentrality names of numerator and denominator for each law
_F_LAWS = {
    "t1": (lambda T, G, k1, k2: (G, k2 - G), "psi0", "lambda1"),
    "t2": (lambda T, G, k1, k2: (G, T - k1 - 2 * G), "psi0", "lambda2"),
    "r": (lambda T, G, k1, k2: (k2, T - k1 - k2 - G), "psi_r", "lambda_r"),
}


def _ncx2(rng, df, nonc, size):
    if nonc <= 0:
        return rng.chisquare(df, size)
    return rng.noncentral_chisquare(df, nonc, size)


def theoretical_power_check(dims, deltas, reps, seed=0, alpha=0.05):
    """Rejection probabilities under doubly noncentral F laws, by simulation.

    Parameters
    ----------
    dims : tuple
        ``(T, G, k1, k2)``.
    deltas : dict
        Noncentralities keyed as in :func:`noncentrality_params`.
    reps : int
    seed : int
    alpha : float

    Returns
    -------
    dict
        Rejection probability of ``t1`` (when ``k2 > G``), ``t2`` and ``r``
        against central F critical values.

    Raises
    ------
    InvalidInput
        Non-positive degrees of freedom or ``reps < 1``.
    """
    if int(reps) != reps or reps < 1:
        raise InvalidInput("reps must be a positive integer")
    T, G, k1, k2 = dims
    out = {}
    for i, (name, (dof, num, den)) in enumerate(_F_LAWS.items()):
        n1, n2 = dof(T, G, k1, k2)
        if name == "t1" and n2 == 0:
            continue
        if n1 <= 0 or n2 <= 0:
            raise InvalidInput(f"degrees of freedom of {name} must be positive, got ({n1}, {n2})")
        rng = _rng.substream(seed, _rng.POWER, i)
        q1 = _ncx2(rng, n1, deltas[num], reps)
        q2 = _ncx2(rng, n2, deltas[den], reps)
        crit = _st.f.isf(alpha, n1, n2)
        out[name] = float(np.mean((q1 / n1) / (q2 / n2) > crit))
    return out


@dataclass(frozen=True)
class PowerSpec:
    """Fixed ingredients of a conditional power experiment.

    With ``Y = g + V`` the canonical outcome is ``y* = X1 gamma - g a + e``;
    dividing by the scale of ``e`` shows that power depends on ``a``
    through ``a_bar = a / scale`` only.

    Parameters
    ----------
    X1 : ndarray of shape (T, k1)
    X2 : ndarray of shape (T, k2)
    V : ndarray of shape (T, G)
        Reduced-form errors.
    g : ndarray of shape (T, G)
        Reduced-form means; ``Y = g + V``.
    a_grid : sequence of G-vectors
    scale : float, default=1
        Scale of the structural error ``e``.
    """

    X1: np.ndarray
    X2: np.ndarray
    V: np.ndarray
    g: np.ndarray
    a_grid: tuple
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidInput("scale must be positive")
        G = np.shape(self.V)[1]
        grid = tuple(np.asarray(a, dtype=float).reshape(G) for a in self.a_grid)
        if not grid:
            raise InvalidInput("a_grid must not be empty")
        object.__setattr__(self, "a_grid", grid)

    @property
    def Y(self):
        return self.g + self.V

    def problem(self, y):
        return ExogeneityProblem(y, self.Y, self.X1, self.X2)

    def mu_perp(self, a):
        """``-M1 g a / scale``, the scaled mean of the canonical outcome."""
        m = -self.g @ (np.asarray(a, dtype=float) / self.scale)
        return orthonormal_basis(self.X1).annihilate(m)


def power_spec_from_dgp(cfg, a_grid, rep=0):
    """Power skeleton from one draw of the simulation design."""
    p, latent = generate_dataset(cfg, rep)
    return PowerSpec(p.X1, p.X2, latent.V, latent.g, tuple(a_grid), 1.0)


def power_spec_from_problem(p, a_grid, scale=1.0):
    """Power skeleton of observed data: ``g = P[X] Y`` and ``V = M Y``."""
    B = orthonormal_basis(p.X)
    g = B.project(p.Y)
    return PowerSpec(p.X1, p.X2, p.Y - g, g, tuple(a_grid), scale)


def power_curve(spec, reps, seed, law="gaussian", alpha=0.05, theory_reps=100000):
    """Conditional power over the a-grid, empirical and theoretical.

    For each ``a`` the canonical outcome ``mu_perp(a) + e`` is drawn
    ``reps`` times with ``(X, V)`` held fixed and the standard-mode
    decisions are counted. Theoretical power of ``t1``, ``t2`` and ``r``
    comes from :func:`theoretical_power_check` (Gaussian errors only).

    Returns
    -------
    list of dict
        Keys ``index``, ``a``, the noncentralities, ``statistic``,
        ``empirical_pct`` and ``theoretical_pct`` (None when unavailable).
    """
    if int(reps) != reps or reps < 1:
        raise InvalidInput("reps must be a positive integer")
    law = _law(law)
    p0 = spec.problem(np.zeros(spec.V.shape[0]))
    w = weight_operators(p0)
    crit = critical_values(p0.dims, alpha)
    rows = []
    for i, a in enumerate(spec.a_grid):
        mu = spec.mu_perp(a)
        deltas = noncentrality_params(w, mu)
        rng = _rng.substream(seed, _rng.DATA, i)
        E = law.sample(rng, p0.T, reps, p0.X)
        vals, _ = w.evaluate(mu[:, None] + E)
        theory = (
            theoretical_power_check(p0.dims, deltas, theory_reps, seed=seed, alpha=alpha)
            if law.kind == "gaussian" else {}
        )
        for k in STATISTICS:
            if k == "t1" and not w.t1_defined:
                continue
            v = vals[k]
            emp = 100.0 * float(np.mean(np.isfinite(v) & (v >= crit[k])))
            th = theory.get(k)
            rows.append({
                "index": i,
                "a": tuple(float(x) for x in a),
                **{f"delta_{n}": deltas[n] for n in NONCENTRALITY},
                "statistic": k,
                "empirical_pct": emp,
                "theoretical_pct": None if th is None else 100.0 * th,
            })
    return rows


POWER_COLUMNS = ("index", "a", *(f"delta_{n}" for n in NONCENTRALITY), "statistic", "empirical_pct", "theoretical_pct")


def format_power_csv(rows):
    out = [",".join(POWER_COLUMNS)]
    for r in rows:
        th = "" if r["theoretical_pct"] is None else f"{r['theoretical_pct']:.2f}"
        out.append(",".join([
            str(r["index"]), " ".join(repr(x) for x in r["a"]),
            *(f"{r[f'delta_{n}']:.10g}" for n in NONCENTRALITY),
            r["statistic"], f"{r['empirical_pct']:.2f}", th,
        ]))
    return "\n".join(out) + "\n"
