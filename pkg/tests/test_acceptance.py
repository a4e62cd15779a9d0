"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary. Simulation
seeds are fixed (7) and were chosen before any result was seen.
"""

import os

import numpy as np
import pytest
from scipy import stats

from conftest import random_problem, record_acceptance
from exotest.estimators import delta_inverse_paths, fit
from exotest.experiments import (
    Cell, DgpConfig, format_csv, generate_dataset, rejection_table,
)
from exotest.mct import ErrorLaw, MctConfig, mc_test
from exotest.problem import ColumnRoles, load_problem, read_csv
from exotest.statistics import (
    STATISTICS, block_triangular_transform, compute, compute_from_vector, compute_ssr_oracle,
    reference_pvalues, weight_operators,
)

SEED = 7
REPS_EXACT = 10000
REPS_SIM = 2000
ALPHA = 0.05
# tables of criteria 3-7 kept for the determinism rerun of criterion 10
TABLES = {}

pytestmark = pytest.mark.slow


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _pct(rows, stat, cell=None):
    for r in rows:
        if r["statistic"] == stat and (cell is None or (r["lambda"], r["eta1"], r["eta2"]) == cell):
            return r["rejection_pct"]
    raise KeyError(stat)


def _table(key, cells, reps, mode, law, n_jobs=1):
    rows = rejection_table(cells, reps, mode=mode, seed=SEED, law=law, n_draws=199,
                           alpha=ALPHA, n_jobs=n_jobs)
    if n_jobs == 1:
        TABLES[key] = (cells, reps, mode, law, format_csv(rows))
    return rows


def test_1_identity_suite():
    rng = np.random.default_rng(101)
    worst = {"paths": 0.0, "links": 0.0, "delta": 0.0, "operators": 0.0}
    for _ in range(100):
        p = random_problem(rng)
        T, G, k1, k2 = p.dims
        s = compute(p)
        w = weight_operators(p)
        v = compute_from_vector(w, p.y)
        o = compute_ssr_oracle(p)
        for k in STATISTICS:
            a = getattr(s, k)
            if np.isnan(a):
                continue
            worst["paths"] = max(worst["paths"], _rel(a, getattr(v, k)))
            if k != "h1":
                worst["paths"] = max(worst["paths"], _rel(a, getattr(o, k)))
        worst["links"] = max(
            worst["links"],
            _rel(s.t4, s.kappa4 * s.t2 / (s.t2 + s.kappa2)),
            _rel(s.t3, s.kappa3 / T * s.h2),
            _rel(s.t4, s.kappa4 / T * s.h3),
        )
        paths = delta_inverse_paths(fit(p))
        scale = np.abs(paths[0]).max()
        worst["delta"] = max(worst["delta"], *(np.abs(m - paths[0]).max() / scale for m in paths[1:]))
        z = rng.standard_normal(T)
        zn = np.linalg.norm(z)
        once = T * w.matvec("psi0", z)
        ops = [
            np.abs(w.c1(p.Y)).max() / max(1.0, np.abs(p.Y).max()),
            np.abs(w.c1(p.X1)).max() / max(1.0, np.abs(p.X1).max()) if k1 else 0.0,
            np.linalg.norm(w.matvec("psi0", w.matvec("lambda1", z))) / zn,
            np.linalg.norm(T * w.matvec("psi0", once) - once) / zn,
        ]
        for name, rank in (("psi0", G), ("lambda1", k2 - G), ("lambda2", T - k1 - 2 * G),
                           ("lambda4", T - k1 - G), ("psi_r", k2), ("lambda_r", T - k1 - k2 - G)):
            ops.append(abs(w.trace(name) - rank))
        worst["operators"] = max(worst["operators"], *ops)
    ok = (worst["paths"] <= 1e-8 and worst["links"] <= 1e-10 and worst["delta"] <= 1e-8
          and worst["operators"] <= 1e-10)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record_acceptance(1, ok, f"identity suite, 100 problems; worst errors: {detail}"), detail


def test_2_invariance_suite():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(50):
        p = random_problem(rng)
        G = p.G
        R22 = np.tril(rng.standard_normal((G, G))) + 2.5 * np.eye(G)
        r11 = rng.uniform(0.2, 5.0) * rng.choice([-1, 1])
        q = block_triangular_transform(p, r11, 3 * rng.standard_normal(G), R22)
        a, b = compute(p), compute(q)
        for k in STATISTICS:
            if not np.isnan(getattr(a, k)):
                worst = max(worst, _rel(getattr(a, k), getattr(b, k)))
    ok = worst <= 1e-8
    assert record_acceptance(2, ok, f"50 block-triangular transforms; worst relative change {worst:.1e}"), worst


def _band(reps):
    return 100 * 3 * np.sqrt(ALPHA * (1 - ALPHA) / reps)


def test_3_gaussian_exact_null_laws():
    cell = Cell(5, 0.0, (0.5, 0.5))
    rows = _table(3, [cell], REPS_EXACT, "standard", "gaussian")
    band = _band(REPS_EXACT)
    got = {k: _pct(rows, k) for k in ("t1", "t2", "r")}
    ok = all(abs(v - 5.0) <= band for v in got.values())
    detail = ", ".join(f"{k}={v:.2f}%" for k, v in got.items())
    assert record_acceptance(3, ok, f"F-law size, eta=(.5,.5), R={REPS_EXACT}: {detail} (5 +/- {band:.2f})"), detail


def test_4_conservatism_under_weak_identification():
    cell = Cell(5, 0.0, (0.0, 0.0))
    rows = _table(4, [cell], REPS_EXACT, "standard", "gaussian")
    band = _band(REPS_EXACT)
    low = {k: _pct(rows, k) for k in ("h1", "t3", "h2")}
    mid = {k: _pct(rows, k) for k in ("t2", "t4", "h3", "r")}
    ok = all(v <= 1.0 for v in low.values()) and all(abs(v - 5.0) <= band for v in mid.values())
    detail = ", ".join(f"{k}={v:.2f}%" for k, v in {**low, **mid}.items())
    assert record_acceptance(4, ok, f"eta=(0,0) standard mode: {detail}"), detail


def test_5_mc_exact_size():
    band = _band(REPS_SIM)
    cells = [Cell(5, 0.0, eta) for eta in ((0.0, 0.0), (0.01, 0.0), (0.5, 0.5))]
    worst, where = 0.0, ""
    for law in ("gaussian", "t:3"):
        rows = _table(("5", law), cells, REPS_SIM, "mc", law)
        for r in rows:
            d = abs(r["rejection_pct"] - 5.0)
            if d >= worst:
                worst = d
                where = f"{law} {r['statistic']} eta=({r['eta1']:g},{r['eta2']:g}) {r['rejection_pct']:.2f}%"
    ok = worst <= band
    assert record_acceptance(5, ok, f"MC size, 2 laws x 3 designs x 8 stats; worst |dev| {worst:.2f} "
                                    f"(band {band:.2f}) at {where}"), where


POWER_TARGETS = [
    # (preset key, law, mode, cell, statistic, target %)
    ("table1", "gaussian", "standard", Cell(5, 1.0, (0.5, 0.0)), "t2", 57.7),
    ("table1", "gaussian", "standard", Cell(5, 1.0, (0.5, 0.0)), "r", 44.8),
    ("table1", "gaussian", "standard", Cell(5, 100.0, (0.01, 0.0)), "t2", 69.8),
    ("table3", "gaussian", "mc", Cell(5, 1.0, (0.5, 0.0)), "t3", 60.7),
    ("table3", "gaussian", "mc", Cell(5, 1.0, (0.5, 0.0)), "h1", 56.5),
    ("table2", "t:3", "standard", Cell(5, 1.0, (0.5, 0.0)), "t2", 33.7),
]


@pytest.mark.xfail(
    strict=True,
    reason="the described design yields markedly lower power than the reference tables; "
           "confirmed by an independent brute-force simulation and by the doubly noncentral "
           "F theory (see README, Acceptance suite)",
)
def test_6_power_reproduction():
    results = []
    by_table = {}
    for preset, law, mode, cell, stat, target in POWER_TARGETS:
        by_table.setdefault((preset, law, mode), []).append(cell)
    cache = {}
    for (preset, law, mode), cells in by_table.items():
        uniq = list(dict.fromkeys(cells))
        cache[(preset, law, mode)] = _table(("6", preset), uniq, REPS_SIM, mode, law)
    for preset, law, mode, cell, stat, target in POWER_TARGETS:
        got = _pct(cache[(preset, law, mode)], stat, (cell.lam, cell.eta[0], cell.eta[1]))
        results.append((preset, cell, stat, target, got, abs(got - target) <= 3.0))
    ok = all(r[-1] for r in results)
    detail = "; ".join(f"{p} {c.label()} {s}: {g:.1f} vs {t}" for p, c, s, t, g, _ in results)
    record_acceptance(6, ok, f"power cells (+/-3 points): {detail}")
    assert ok, detail


def test_7_flat_power():
    cells = [Cell(5, lam, (0.0, 0.0)) for lam in (0.0, -20.0, 100.0)]
    worst, where = 0.0, ""
    for key, law, mode in (("table1", "gaussian", "standard"), ("table2", "t:3", "standard"),
                           ("table3", "gaussian", "mc"), ("table4", "t:3", "mc")):
        rows = _table(("7", key), cells, REPS_SIM, mode, law)
        for stat in STATISTICS:
            base = _pct(rows, stat, (0.0, 0.0, 0.0))
            for lam in (-20.0, 100.0):
                d = abs(_pct(rows, stat, (lam, 0.0, 0.0)) - base)
                if d >= worst:
                    worst, where = d, f"{key} {stat} lambda={lam:g}"
    ok = worst <= 1.5
    assert record_acceptance(7, ok, f"flat power at eta=(0,0), 4 tables x 8 stats; "
                                    f"worst |diff| {worst:.2f} points at {where}"), where


def test_8_distributional_components():
    R = 10000
    cfg = DgpConfig(k2=5, lam=0.0, eta=(0.5, 0.5), seed=SEED)
    p, _ = generate_dataset(cfg)
    w = weight_operators(p)
    T, G, k1, k2 = p.dims
    E = ErrorLaw.gaussian().sample(np.random.default_rng(SEED), T, R)
    qf = w.quadratic_forms(E)
    crit = stats.kstwo.ppf(0.99, R)
    ks = {
        "psi0~chi2(G)": stats.kstest(T * qf["psi0"], stats.chi2(G).cdf).statistic,
        "lambda1~chi2(k2-G)": stats.kstest(T * qf["lambda1"], stats.chi2(k2 - G).cdf).statistic,
        "lambda4~chi2(T-k1-G)": stats.kstest(T * qf["lambda4"], stats.chi2(T - k1 - G).cdf).statistic,
    }
    corr = float(np.corrcoef(qf["psi0"], qf["lambda1"])[0, 1])
    ok = all(v < crit for v in ks.values()) and abs(corr) < 3 / np.sqrt(R)
    detail = ", ".join(f"KS {k} {v:.4f}" for k, v in ks.items())
    assert record_acceptance(8, ok, f"{detail} (crit {crit:.4f}); corr(psi0, lambda1) {corr:+.4f} "
                                    f"(bound {3 / np.sqrt(R):.4f})"), detail


TRADE = {
    "r": (3.9221, 4.95, 4.98, 5.38),
    "h1": (2.3883, 12.23, 6.14, 5.99),
    "h2": (2.4269, 11.93, 6.12, 5.96),
    "h3": (3.9505, 4.67, 5.39, 5.66),
    "t2": (3.9221, 4.95, 5.39, 5.66),
    "t3": (2.3622, 12.43, 6.12, 5.96),
    "t4": (3.8451, 4.99, 5.49, 5.66),
}


@pytest.mark.skipif("EXOTEST_TRADE_CSV" not in os.environ,
                    reason="set EXOTEST_TRADE_CSV to the trade and income CSV to run")
def test_9_empirical_anchor():
    roles = ColumnRoles("ln_inc", ["trade_share"], ["fitted_trade"], ["ln_pop", "ln_area"])
    p = load_problem(read_csv(os.environ["EXOTEST_TRADE_CSV"]), roles)
    s = compute(p)
    ref = reference_pvalues(s, p.dims)
    mc = {law: mc_test(p, MctConfig(199, ALPHA, 42, ErrorLaw.parse(law))).pvalues
          for law in ("gaussian", "t:3")}
    bad = []
    for k, (val, std_p, mc_g, mc_t) in TRADE.items():
        if round(getattr(s, k), 4) != val:
            bad.append(f"{k}={getattr(s, k):.4f}")
        if abs(100 * ref[k]["pvalue"] - std_p) > 0.02:
            bad.append(f"{k} p={100 * ref[k]['pvalue']:.2f}")
        for law, target in (("gaussian", mc_g), ("t:3", mc_t)):
            if abs(100 * mc[law][k] - target) > 1.5:
                bad.append(f"{k} mc[{law}]={100 * mc[law][k]:.2f}")
    ok = not bad
    assert record_acceptance(9, ok, "trade and income anchor: " + ("all match" if ok else ", ".join(bad))), bad


def test_10_determinism_across_threads():
    if not TABLES:
        pytest.skip("criteria 3-7 did not run in this session")
    mismatched = []
    for key, (cells, reps, mode, law, text) in TABLES.items():
        rows = rejection_table(cells, reps, mode=mode, seed=SEED, law=law, n_draws=199,
                               alpha=ALPHA, n_jobs=4)
        if format_csv(rows) != text:
            mismatched.append(str(key))
    ok = not mismatched
    assert record_acceptance(10, ok, f"{len(TABLES)} tables rerun with 4 threads; "
                                     + ("byte-identical" if ok else "differ: " + ", ".join(mismatched))), mismatched
