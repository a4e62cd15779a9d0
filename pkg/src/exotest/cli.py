"""Command line interface ``exotest``.

Subcommands: ``test`` (exogeneity tests on a CSV file, JSON report),
``simulate`` (size/power tables, CSV and text) and ``power`` (power
curves over an endogeneity grid, CSV). Exit status is 0 on success, 2
for user errors and 3 for internal errors.
"""

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .exceptions import UserError
from .experiments import (
    PRESETS, SMOKE_CELLS, Cell, DgpConfig, format_csv, format_power_csv, format_text,
    full_cells, power_curve, power_spec_from_dgp, power_spec_from_problem, rejection_table,
)
from .mct import ErrorLaw, MctConfig, mc_test
from .problem import ColumnRoles, load_problem, read_csv, validate
from .statistics import STATISTICS, compute_direct, reference_pvalues
from .estimators import fit

SCHEMA_VERSION = "1.0"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text):
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def _alpha(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return v


def _law(text):
    try:
        return ErrorLaw.parse(text)
    except UserError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = _Parser(prog="exotest", description="Exact exogeneity tests for IV regressions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="test exogeneity on a CSV data file")
    t.add_argument("--data", required=True, help="CSV file with a header row")
    t.add_argument("--y", required=True, help="dependent variable column")
    t.add_argument("--endog", required=True, type=_csv_list, help="possibly endogenous regressors")
    t.add_argument("--exog", default=[], type=_csv_list, help="included exogenous regressors")
    t.add_argument("--instr", required=True, type=_csv_list, help="excluded instruments")
    t.add_argument("--no-intercept", action="store_true", help="do not add a constant")
    t.add_argument("--mc-draws", type=_nonneg_int, default=199, help="Monte Carlo draws (0 disables)")
    t.add_argument("--law", type=_law, action="append", help="null error law: gaussian or t:<df>; repeatable")
    t.add_argument("--alpha", type=_alpha, default=0.05)
    t.add_argument("--seed", type=_nonneg_int, default=0)
    t.add_argument("--threads", type=_positive_int, default=1)
    t.add_argument("--out", help="JSON report path (default: standard output)")

    s = sub.add_parser("simulate", help="size and power tables of the simulation design")
    s.add_argument("--preset", choices=sorted(PRESETS), default="table1")
    s.add_argument("--cells", choices=("smoke", "full"), default="smoke")
    s.add_argument("--cell", action="append", type=str, help="single cell, e.g. k2=5,lambda=1,eta1=.5,eta2=0")
    s.add_argument("--reps", type=_positive_int, default=2000)
    s.add_argument("--seed", type=_nonneg_int, required=True)
    s.add_argument("--mode", choices=("standard", "mc"))
    s.add_argument("--law", type=_law)
    s.add_argument("--mc-draws", type=_positive_int, default=199)
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--T", type=_positive_int, default=50, dest="T")
    s.add_argument("--threads", type=_positive_int, default=1)
    s.add_argument("--out-csv", help="CSV path (default: standard output)")
    s.add_argument("--out-txt", help="aligned text table path")

    w = sub.add_parser("power", help="power curves over an endogeneity grid")
    w.add_argument("--seed", type=_nonneg_int, required=True)
    w.add_argument("--reps", type=_positive_int, default=2000)
    w.add_argument("--law", type=_law, default=ErrorLaw.gaussian())
    w.add_argument("--alpha", type=_alpha, default=0.05)
    w.add_argument("--lambdas", type=_float_list, default=[-5.0, -1.0, 0.0, 1.0, 5.0],
                   help="grid of multipliers; a = lambda * a0")
    w.add_argument("--a0", type=_float_list, default=[0.5, 0.2],
                   help="direction of a; with --data of another width, ones are used")
    w.add_argument("--k2", type=_positive_int, default=5)
    w.add_argument("--eta", type=_float_list, default=[0.5, 0.0])
    w.add_argument("--T", type=_positive_int, default=50, dest="T")
    w.add_argument("--data", help="CSV file used as the skeleton instead of the simulation design")
    w.add_argument("--y")
    w.add_argument("--endog", type=_csv_list)
    w.add_argument("--exog", default=[], type=_csv_list)
    w.add_argument("--instr", type=_csv_list)
    w.add_argument("--no-intercept", action="store_true")
    w.add_argument("--out", help="CSV path (default: standard output)")
    return parser


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        if epoch else _dt.datetime.now(_dt.timezone.utc)
    )
    return when.replace(microsecond=0).isoformat()


def _options(args):
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "command":
            continue
        if isinstance(v, ErrorLaw):
            v = v.describe()
        elif isinstance(v, list):
            v = [x.describe() if isinstance(x, ErrorLaw) else x for x in v]
        out[k] = v
    return out


def manifest(args, input_path=None):
    """Run manifest embedded in every report."""
    return {
        "command": args.command,
        "options": _options(args),
        "seed": args.seed,
        "version": __version__,
        "input_sha256": _digest(input_path) if input_path else None,
        "timestamp": _timestamp(),
    }


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _roles(args):
    missing = [f"--{r}" for r in ("y", "endog", "instr") if not getattr(args, r)]
    if missing:
        raise UserError(f"missing column role(s): {', '.join(missing)}")
    return ColumnRoles(args.y, args.endog, args.instr, args.exog, not args.no_intercept)


def cmd_test(args):
    roles = _roles(args)
    p = load_problem(read_csv(args.data), roles)
    report = validate(p)
    b = fit(p)
    s = compute_direct(p, b)
    laws = args.law or [ErrorLaw.gaussian()]
    mc = []
    if args.mc_draws:
        for law in laws:
            cfg = MctConfig(args.mc_draws, args.alpha, args.seed, law, n_jobs=args.threads)
            mc.append(mc_test(p, cfg).to_dict())
    names = p.names
    doc = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest(args, args.data),
        "problem": {
            "T": p.T, "G": p.G, "k1": p.k1, "k2": p.k2,
            "y": names["y"], "endog": names["endog"], "exog": names["exog"], "instr": names["instr"],
            "intercept_added": p.intercept_flag,
        },
        "validation": {
            "rank_YX": report.rank_YX, "rank_PYX1": report.rank_PYX1,
            "t1_defined": report.t1_defined, "failures": list(report.failures),
        },
        "estimates": {
            "beta_ols": dict(zip(names["endog"], map(float, b.beta_ols))),
            "beta_2sls": dict(zip(names["endog"], map(float, b.beta_2sls))),
        },
        "statistics": {
            "values": {k: _num(getattr(s, k)) for k in STATISTICS},
            "kappas": {k: float(getattr(s, k)) for k in ("kappa1", "kappa2", "kappa3", "kappa4", "kappaR")},
            "t1_defined": s.t1_defined,
            "h1_scale_pd": s.h1_scale_pd,
            "degenerate": s.degenerate,
        },
        "reference_pvalues": reference_pvalues(s, p.dims),
        "monte_carlo": mc,
    }
    _write(json.dumps(doc, indent=2, sort_keys=False) + "\n", args.out)


def _cells(args):
    if args.cell:
        return [Cell.parse(c) for c in args.cell]
    return list(SMOKE_CELLS) if args.cells == "smoke" else list(full_cells())


def cmd_simulate(args):
    preset = PRESETS[args.preset]
    mode = args.mode or preset["mode"]
    law = args.law or ErrorLaw.parse(preset["law"])
    rows = rejection_table(
        _cells(args), args.reps, mode=mode, seed=args.seed, law=law, n_draws=args.mc_draws,
        alpha=args.alpha, T=args.T, n_jobs=args.threads,
    )
    _write(format_csv(rows), args.out_csv)
    if args.out_txt:
        _write(format_text(rows), args.out_txt)
    if args.out_csv:
        _write(json.dumps(manifest(args), indent=2) + "\n", args.out_csv + ".manifest.json")


def cmd_power(args):
    if args.data:
        p = load_problem(read_csv(args.data), _roles(args))
        G = p.G
        a0 = np.asarray(args.a0 if len(args.a0) == G else [1.0] * G, dtype=float)
        spec = power_spec_from_problem(p, [lam * a0 for lam in args.lambdas])
    else:
        if len(args.eta) != len(args.a0):
            raise UserError("--eta and --a0 must have the same length")
        beta0 = (2.0, 5.0) if len(args.a0) == 2 else tuple([1.0] * len(args.a0))
        cfg = DgpConfig(T=args.T, k2=args.k2, beta0=beta0, a0=tuple(args.a0), eta=tuple(args.eta),
                        law=args.law, seed=args.seed)
        a0 = np.asarray(args.a0, dtype=float)
        spec = power_spec_from_dgp(cfg, [lam * a0 for lam in args.lambdas])
    rows = power_curve(spec, args.reps, args.seed, law=args.law, alpha=args.alpha)
    _write(format_power_csv(rows), args.out)
    if args.out:
        _write(json.dumps(manifest(args, args.data), indent=2) + "\n", args.out + ".manifest.json")


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "power": cmd_power}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (UserError, OSError) as exc:
        print(f"exotest: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"exotest: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
