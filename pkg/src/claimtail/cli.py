"""Command-line front end: ``claimtail select|fit|reserve|study|danish``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Failures print a one-line JSON record to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from .composite import PMode, fit_composite, from_record, model_digest, scollnik_model, to_record
from .data import DataError, load_claims
from .distributions import BULK_FAMILIES, DomainError, Family
from .fitting import FitMode, fit_scollnik
from .reserve import ResolutionError, estimate_reserves
from .study import format_table, load_config, run_study, write_csv
from .tailselect import (InsufficientDataError, Method, NoThresholdFoundError, SecondOrderError,
                         select)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DANISH_LAMBDA = 227.0
DANISH_EPS = (0.05, 0.01, 0.005)


class UsageError(Exception):
    pass


def _parse_list(value: str, parse, flag: str):
    try:
        return [parse(v.strip()) for v in value.split(",")]
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _methods(value: str) -> list[Method]:
    if value == "all":
        return list(Method)
    return _parse_list(value, Method.parse, "--method")


def _families(value: str) -> list[Family]:
    if value == "all":
        return list(BULK_FAMILIES)
    fams = _parse_list(value, Family.parse, "--bulk")
    if any(f not in BULK_FAMILIES for f in fams):
        raise UsageError(f"--bulk must name bulk families, got {value!r}")
    return fams


def _eps_list(value: str) -> list[float]:
    return _parse_list(value, float, "--eps")


def _seed(args, out) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = int(np.random.SeedSequence().entropy % 2 ** 64)
    print(f"# seed = {seed}", file=out)
    return seed


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _load(args):
    if not args.input:
        raise UsageError("--input is required")
    return load_claims(args.input, args.column, args.delimiter)


def _threshold(z, method: Method):
    if method is Method.M7:
        fit = fit_scollnik(z)
        return fit.b, fit
    return select(z, method).b_hat, None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_select(args, out) -> int:
    data = _load(args)
    z = np.sort(data.values)
    print(f"# input {data.source}  column {data.column}  n {data.n}", file=out)
    print(f"{'method':<7}{'index':>8}{'k':>12}{'b_hat':>14}  note", file=out)
    for m in _methods(args.method):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if m is Method.M7:
                fit = fit_scollnik(z)
                index = int(np.count_nonzero(z <= fit.b))
                print(f"{m.label:<7}{index:>8}{data.n - index:>12}{fit.b:>14.6g}  "
                      f"alpha={fit.alpha:.6g}", file=out)
                continue
            est = select(z, m)
        print(f"{m.label:<7}{est.index:>8}{est.k:>12.4f}{est.b_hat:>14.6g}  {est.warning or ''}".rstrip(),
              file=out)
    return EXIT_OK


def cmd_fit(args, out) -> int:
    data = _load(args)
    z = np.sort(data.values)
    for m in _methods(args.method):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            b_hat, sfit = _threshold(z, m)
        if sfit is not None:
            print(f"[{m.label}] scollnik mu={sfit.mu:.6g} sigma={sfit.sigma:.6g} alpha={sfit.alpha:.6g} "
                  f"beta={sfit.beta:.6g} b={sfit.b:.6g} r={sfit.r:.6g} loglik={sfit.loglik:.6f}", file=out)
            print(to_record(scollnik_model(sfit)), file=out, end="")
            continue
        for fam in _families(args.bulk):
            fit = fit_composite(z, b_hat, fam, args.p_mode, args.fit_mode)
            t, bk = fit.tail, fit.bulk
            print(f"[{m.label}/{fam.value}] b={b_hat:.6g} pareto alpha={t.alpha:.6g} beta={t.beta:.6g} "
                  f"n_exceed={t.n_exceed} | {fam.value} param1={bk.spec.param1:.6g} "
                  f"param2={bk.spec.param2:.6g} converged={bk.converged} | p_below={fit.p_raw:.6g}",
                  file=out)
            print(to_record(fit.model), file=out, end="")
    return EXIT_OK


def cmd_reserve(args, out) -> int:
    eps = _eps_list(args.eps)
    seed = _seed(args, out)
    if args.model:
        with open(args.model, encoding="utf-8") as fh:
            models = [("model", from_record(fh.read()))]
    else:
        data = _load(args)
        z = np.sort(data.values)
        models = []
        for m in _methods(args.method):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                b_hat, sfit = _threshold(z, m)
                if sfit is not None:
                    models.append((f"{m.label}/lognormal*", scollnik_model(sfit)))
                    continue
                for fam in _families(args.bulk):
                    fit = fit_composite(z, b_hat, fam, args.p_mode, args.fit_mode)
                    models.append((f"{m.label}/{fam.value}", fit.model))
    print(f"{'cell':<20}{'digest':>14}{'lambda':>10}{'eps':>8}{'m':>10}{'seed':>22}{'q_hat':>16}", file=out)
    for label, model in models:
        for est in estimate_reserves(model, args.lam, eps, args.sims, seed, workers=_workers(args)):
            q = est.query
            print(f"{label:<20}{est.model_digest:>14}{q.lam:>10g}{q.eps:>8g}{q.m:>10d}{q.seed:>22d}"
                  f"{est.q_hat:>16.6f}", file=out)
    return EXIT_OK


def cmd_study(args, out) -> int:
    if not args.config:
        raise UsageError("--config is required")
    overrides = {"seed": args.seed, "sims": args.sims}
    if args.p_mode_given:
        overrides["p_mode"] = args.p_mode
    config = load_config(args.config, **overrides)
    result = run_study(config, workers=_workers(args))
    if args.out:
        write_csv(result, args.out)
        with open(os.path.splitext(args.out)[0] + ".txt", "w", encoding="utf-8") as fh:
            fh.write(format_table(result, "bias") + "\n" + format_table(result, "rmse"))
    print(format_table(result, "bias"), file=out)
    print(format_table(result, "rmse"), file=out)
    return EXIT_OK


def danish_report(z: np.ndarray, lam: float = DANISH_LAMBDA, m: int = 1_000_000, seed: int = 0,
                  p_mode="empirical", methods=None, families=None, workers: int = 1,
                  fit_mode=FitMode.TRUNCATED):
    """Thresholds, fitted parameters and reserves (billions) for every method and bulk family."""
    z = np.sort(np.asarray(z, dtype=float))
    methods = list(Method) if methods is None else methods
    families = list(BULK_FAMILIES) if families is None else families
    rows = []
    for meth in methods:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                b_hat, sfit = _threshold(z, meth)
            except (InsufficientDataError, NoThresholdFoundError, SecondOrderError) as exc:
                rows.append({"method": meth.label, "error": str(exc)})
                continue
            cells = [("lognormal*", scollnik_model(sfit), sfit)] if sfit is not None else []
            for fam in ([] if sfit is not None else families):
                fit = fit_composite(z, b_hat, fam, p_mode, fit_mode)
                cells.append((fam.value, fit.model, fit))
        for name, model, fit in cells:
            est = estimate_reserves(model, lam, DANISH_EPS, m, seed, workers=workers)
            rows.append({"method": meth.label, "b_hat": b_hat, "bulk": name,
                         "tail": model.tail.params, "bulk_params": model.bulk.params,
                         "p_below": model.p_below, "digest": model_digest(model),
                         "reserves_bn": [e.q_hat / 1e3 for e in est]})
    return rows


def cmd_danish(args, out) -> int:
    data = _load(args)
    seed = _seed(args, out)
    d = data.describe()
    print(f"# Danish fire claims: n={d['n']} min={d['min']:.2f} max={d['max']:.2f} "
          f"mean={d['mean']:.2f} sd={d['sd']:.2f}  lambda={args.lam:g} sims={args.sims} seed={seed}", file=out)
    rows = danish_report(data.values, args.lam, args.sims, seed, args.p_mode,
                         _methods(args.method), _families(args.bulk), _workers(args), args.fit_mode)
    print(f"{'method':<7}{'b_hat':>9}  {'bulk':<11}{'alpha_p':>9}{'beta_p':>9}{'param1':>10}{'param2':>10}"
          f"{'p_below':>9}{'95%':>8}{'99%':>8}{'99.5%':>8}  digest", file=out)
    for r in rows:
        if "error" in r:
            print(f"{r['method']:<7}  failed: {r['error']}", file=out)
            continue
        a, bb = r["tail"]
        p1, p2 = r["bulk_params"]
        q = r["reserves_bn"]
        print(f"{r['method']:<7}{r['b_hat']:>9.2f}  {r['bulk']:<11}{a:>9.2f}{bb:>9.2f}{p1:>10.3f}{p2:>10.3f}"
              f"{r['p_below']:>9.4f}{q[0]:>8.2f}{q[1]:>8.2f}{q[2]:>8.2f}  {r['digest']}", file=out)
    print("# reserves in billions DKK; gamma/weibull param2 is a scale, loggamma param2 a rate", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", help="claim file (comma, semicolon or whitespace separated)")
    common.add_argument("--column", default=None, help="column name or 0-based position (default: last)")
    common.add_argument("--delimiter", default=None, help="field delimiter; default autodetect")
    common.add_argument("--method", default="all", help="m1..m7, comma list, or all")
    common.add_argument("--bulk", default="all", help="gamma|lognormal|weibull|loggamma, comma list, or all")
    common.add_argument("--p-mode", dest="p_mode", default=None, choices=["empirical", "theoretical"])
    common.add_argument("--fit-mode", dest="fit_mode", default="truncated", choices=["truncated", "plain"])
    common.add_argument("--lambda", dest="lam", type=float, default=None)
    common.add_argument("--eps", default="0.05,0.01,0.005")
    common.add_argument("--sims", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--workers", type=int, default=None, help="default: all cores")

    parser = _Parser(prog="claimtail", description="Threshold selection and reserves for composite claim models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("select", parents=[common], help="threshold estimates")
    sub.add_parser("fit", parents=[common], help="bulk, tail and composite fits")
    r = sub.add_parser("reserve", parents=[common], help="Monte Carlo reserve")
    r.add_argument("--model", default=None, help="model record written by `fit`")
    sub.add_parser("study", parents=[common], help="run a simulation study config")
    sub.add_parser("danish", parents=[common], help="Danish fire data report")
    return parser


_COMMANDS = {"select": cmd_select, "fit": cmd_fit, "reserve": cmd_reserve, "study": cmd_study,
             "danish": cmd_danish}


def _error(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: select, fit, reserve, study or danish")
        args.p_mode_given = args.p_mode is not None
        args.p_mode = PMode.parse(args.p_mode or "empirical")
        if args.lam is None:
            args.lam = DANISH_LAMBDA if args.command == "danish" else 50.0
        if args.sims is None and args.command != "study":
            args.sims = 1_000_000
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        return _error("usage", exc, EXIT_USAGE)
    except (DataError, DomainError, InsufficientDataError, FileNotFoundError) as exc:
        return _error("data", exc, EXIT_DATA)
    except (NoThresholdFoundError, SecondOrderError, FloatingPointError, ArithmeticError) as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    except (ValueError, ResolutionError) as exc:
        kind, code = ("usage", EXIT_USAGE) if isinstance(exc, ResolutionError) else ("data", EXIT_DATA)
        return _error(kind, exc, code)


if __name__ == "__main__":
    sys.exit(main())
