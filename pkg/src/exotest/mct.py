"""Exact Monte Carlo exogeneity tests.

Conditional on ``(X, Y)`` every statistic is a function of the
structural error vector alone, so its null distribution can be simulated
from any fully specified error law. With ``N`` draws and nominal level
``alpha_star`` the test rejects when the simulated p-value is at most
``(floor(alpha_star * N) + 1) / (N + 1)``, and this level is exact.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _rng
from .exceptions import DrawError, InvalidInput
from .problem import require_valid
from .statistics import STATISTICS, StatisticSet, _to_set, weight_operators

CHUNK = 64


@dataclass(frozen=True)
class ErrorLaw:
    """Distribution of the i.i.d. components of the null error vector.

    Location and scale are irrelevant: the statistics are invariant to
    them. Use the constructors :meth:`gaussian`, :meth:`student_t`,
    :meth:`custom` or :meth:`parse`.
    """

    kind: str
    df: Optional[int] = None
    sampler: Optional[Callable] = field(default=None, compare=False, repr=False)
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "t", "custom"):
            raise InvalidInput(f"unknown error law kind {self.kind!r}")
        if self.kind == "t":
            if self.df is None or int(self.df) != self.df or self.df < 1:
                raise InvalidInput("student-t degrees of freedom must be an integer >= 1")
            object.__setattr__(self, "df", int(self.df))
        if self.kind == "custom" and not callable(self.sampler):
            raise InvalidInput("custom law needs a callable sampler")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def student_t(cls, df):
        return cls("t", df=df)

    @classmethod
    def custom(cls, sampler, name="custom"):
        """Law given by ``sampler(rng, X, n)`` returning a T x n array.

        ``X`` is the matrix of exogenous variables, so the law may depend
        on it.
        """
        return cls("custom", sampler=sampler, name=name)

    @classmethod
    def parse(cls, text):
        """Parse ``"gaussian"`` or ``"t:<df>"``."""
        t = str(text).strip().lower()
        if t in ("gaussian", "normal"):
            return cls.gaussian()
        if t.startswith("t:"):
            try:
                df = float(t[2:])
            except ValueError:
                raise InvalidInput(f"bad degrees of freedom in law {text!r}") from None
            return cls.student_t(df)
        raise InvalidInput(f"unknown error law {text!r}; use 'gaussian' or 't:<df>'")

    def describe(self):
        if self.kind == "gaussian":
            return "gaussian"
        if self.kind == "t":
            return f"t:{self.df}"
        return f"custom:{self.name}"

    def sample(self, rng, T, n, X=None):
        """Draw a T x n matrix of errors.

        Columns are filled one after another from the stream, so the
        first ``m`` columns do not depend on ``n``.
        """
        if self.kind == "gaussian":
            return rng.standard_normal((n, T)).T
        if self.kind == "t":
            return rng.standard_t(self.df, size=(n, T)).T
        E = np.asarray(self.sampler(rng, X, n), dtype=float)
        if E.ndim == 1 and n == 1:
            E = E[:, None]
        if E.shape != (T, n):
            raise DrawError(f"custom sampler returned shape {E.shape}, expected {(T, n)}")
        return E


@dataclass(frozen=True)
class MctConfig:
    """Settings of a Monte Carlo test.

    Parameters
    ----------
    n_draws : int, default=199
    alpha_star : float, default=0.05
    seed : int, default=0
    law : ErrorLaw, default=gaussian
    statistics : tuple of str
        Statistics to test; ``t1`` is dropped when undefined.
    n_jobs : int, default=1
        Worker threads; results do not depend on it.
    """

    n_draws: int = 199
    alpha_star: float = 0.05
    seed: int = 0
    law: ErrorLaw = field(default_factory=ErrorLaw.gaussian)
    statistics: tuple = STATISTICS
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.n_draws) != self.n_draws or self.n_draws < 1:
            raise InvalidInput("n_draws must be a positive integer")
        if not 0 < self.alpha_star < 1:
            raise InvalidInput("alpha_star must lie in (0, 1)")
        bad = set(self.statistics) - set(STATISTICS)
        if bad:
            raise InvalidInput(f"unknown statistics: {sorted(bad)}")
        if self.n_jobs < 1:
            raise InvalidInput("n_jobs must be >= 1")

    @property
    def alpha(self):
        return plan_level(self.alpha_star, self.n_draws)


def _critical_count(alpha_star, N):
    # guard against alpha_star * N landing just below an integer
    return math.floor(alpha_star * N + 1e-9) + 1


def plan_level(alpha_star, N):
    """Exactly achievable level ``(floor(alpha_star N) + 1) / (N + 1)``.

    Warns when it differs from ``alpha_star``.

    Raises
    ------
    InvalidInput
        ``N < 1`` or ``alpha_star`` outside (0, 1).
    """
    if N is None or int(N) != N or N < 1:
        raise InvalidInput("N must be a positive integer")
    if not 0 < alpha_star < 1:
        raise InvalidInput("alpha_star must lie in (0, 1)")
    alpha = _critical_count(alpha_star, N) / (N + 1)
    if abs(alpha - alpha_star) > 1e-12:
        warnings.warn(
            f"achievable level {alpha:.6g} differs from nominal {alpha_star:.6g} with N={N}",
            stacklevel=2,
        )
    return alpha


@dataclass(frozen=True)
class NullDraws:
    """Statistics evaluated on ``N`` simulated null error vectors."""

    values: dict
    h1_scale_pd: np.ndarray
    degenerate: np.ndarray
    kappas: dict
    t1_defined: bool

    def __len__(self):
        return len(self.h1_scale_pd)

    def __getitem__(self, j):
        return StatisticSet(
            **{k: float(self.values[k][j]) for k in STATISTICS},
            **self.kappas,
            t1_defined=self.t1_defined,
            h1_scale_pd=bool(self.h1_scale_pd[j]),
            degenerate=bool(self.degenerate[j]),
        )

    def ranking_values(self, name):
        """Draws of ``name`` with non-finite h1 values mapped to +inf."""
        v = self.values[name]
        if name == "h1":
            v = np.where(np.isfinite(v), v, np.inf)
        return v


def _key(seed):
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def draw_null_statistics(w, law, N, seed, X=None, n_jobs=1):
    """Simulate the statistics under the null for ``N`` error draws.

    Draw ``j`` lives in chunk ``j // 64`` whose generator is keyed by
    ``(seed, chunk)``, so results are bit-identical for any ``n_jobs``.

    Parameters
    ----------
    w : WeightOperatorSet
        Operators of the observed ``(X, Y)``.
    law : ErrorLaw
    N : int
    seed : int or tuple of int
    X : ndarray, optional
        Passed to custom samplers.
    n_jobs : int, default=1

    Returns
    -------
    NullDraws

    Raises
    ------
    DrawError
        A sampler produced non-finite values; the message names the draw.
    """
    if int(N) != N or N < 1:
        raise InvalidInput("N must be a positive integer")
    key = _key(seed)
    T = w.T
    starts = list(range(0, N, CHUNK))

    def run(start):
        n = min(CHUNK, N - start)
        rng = _rng.substream(key[0], *key[1:], _rng.MC, start // CHUNK)
        E = law.sample(rng, T, n, X)
        bad = ~np.all(np.isfinite(E), axis=0)
        if bad.any():
            j = start + int(np.argmax(bad))
            raise DrawError(f"error sampler produced non-finite values in draw {j}", j)
        return w.evaluate(E)

    if n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    values = {k: np.concatenate([v[k] for v, _ in parts]) for k in STATISTICS}
    flags = parts[0][1]
    return NullDraws(
        values=values,
        h1_scale_pd=np.concatenate([f["h1_scale_pd"] for _, f in parts]),
        degenerate=np.concatenate([f["degenerate"] for _, f in parts]),
        kappas=flags["kappas"],
        t1_defined=flags["t1_defined"],
    )


def _exceed_count(observed, draws, tie_seed):
    draws = np.asarray(draws, dtype=float)
    above = int(np.sum(draws > observed))
    ties = draws == observed
    n_ties = int(ties.sum())
    if n_ties == 0:
        return above
    if tie_seed is None:
        return above + n_ties
    u = _rng.substream(*_key(tie_seed), _rng.TIES).random(draws.size + 1)
    return above + int(np.sum(u[1:][ties] >= u[0]))


def mc_pvalue(observed, draws, tie_seed=0):
    """Simulated p-value ``(1 + #{draws >= observed}) / (N + 1)``.

    Exact ties are broken by ranking independent uniforms attached to
    the observed value and to each draw.

    Parameters
    ----------
    observed : float
        ``nan`` gives a ``nan`` p-value.
    draws : array_like of shape (N,)
        ``+inf`` is allowed; ``nan`` is not.
    tie_seed : int, tuple of int or None, default=0
        Seed of the tie-breaking uniforms; ``None`` counts every tie as
        an exceedance.

    Raises
    ------
    InvalidInput
        Empty draws or ``nan`` among them.
    """
    draws = np.asarray(draws, dtype=float).reshape(-1)
    if draws.size == 0:
        raise InvalidInput("draws must not be empty")
    if np.isnan(draws).any():
        raise InvalidInput("draws contain nan")
    if np.isnan(observed):
        return float("nan")
    return (1 + _exceed_count(observed, draws, tie_seed)) / (draws.size + 1)


@dataclass(frozen=True)
class McEntry:
    observed: float
    pvalue: float
    reject: bool
    n_exceed: int
    draw_min: float
    draw_median: float
    draw_max: float


@dataclass(frozen=True)
class MctReport:
    """Monte Carlo test results for one dataset and one error law."""

    entries: dict
    alpha: float
    alpha_star: float
    n_draws: int
    seed: int
    law: str
    observed: StatisticSet

    @property
    def pvalues(self):
        return {k: e.pvalue for k, e in self.entries.items()}

    @property
    def decisions(self):
        return {k: e.reject for k, e in self.entries.items()}

    def to_dict(self):
        return {
            "law": self.law,
            "n_draws": self.n_draws,
            "seed": self.seed,
            "alpha_star": self.alpha_star,
            "alpha": self.alpha,
            "statistics": {
                k: {
                    "observed": _finite_or_none(e.observed),
                    "pvalue": _finite_or_none(e.pvalue),
                    "reject": e.reject,
                    "draws": {
                        "min": _finite_or_none(e.draw_min),
                        "median": _finite_or_none(e.draw_median),
                        "max": _finite_or_none(e.draw_max),
                    },
                }
                for k, e in self.entries.items()
            },
        }


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def decide(observed, draws, alpha_star, tie_seed):
    """Return ``(pvalue, reject, count)`` with an integer rejection rule."""
    N = len(draws)
    if np.isnan(observed):
        return float("nan"), False, -1
    count = _exceed_count(observed, draws, tie_seed)
    return (1 + count) / (N + 1), 1 + count <= _critical_count(alpha_star, N), count


def mc_test_operators(w, y, cfg, X=None, seed_key=None):
    """Monte Carlo test given prebuilt operators; returns an MctReport."""
    key = _key(cfg.seed if seed_key is None else seed_key)
    vals, flags = w.evaluate(np.asarray(y, dtype=float))
    observed = _to_set(vals, flags["kappas"], flags["t1_defined"], flags["h1_scale_pd"], flags["degenerate"])
    draws = draw_null_statistics(w, cfg.law, cfg.n_draws, key, X=X, n_jobs=cfg.n_jobs)
    alpha = _critical_count(cfg.alpha_star, cfg.n_draws) / (cfg.n_draws + 1)
    entries = {}
    for i, name in enumerate(cfg.statistics):
        if name == "t1" and not observed.t1_defined:
            continue
        d = draws.ranking_values(name)
        obs = getattr(observed, name)
        pv, rej, cnt = decide(obs, d, cfg.alpha_star, (*key, i))
        entries[name] = McEntry(obs, pv, rej, cnt, float(np.min(d)), float(np.median(d)), float(np.max(d)))
    return MctReport(entries, alpha, cfg.alpha_star, cfg.n_draws, key[0], cfg.law.describe(), observed)


def mc_test(p, cfg=None):
    """Exact Monte Carlo exogeneity test of a problem.

    Parameters
    ----------
    p : ExogeneityProblem
    cfg : MctConfig, optional

    Returns
    -------
    MctReport
    """
    cfg = MctConfig() if cfg is None else cfg
    plan_level(cfg.alpha_star, cfg.n_draws)
    require_valid(p)
    w = weight_operators(p)
    return mc_test_operators(w, p.y, cfg, X=p.X)
