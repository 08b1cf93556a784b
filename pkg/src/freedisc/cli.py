"""Command line entry point.

Exit codes: 0 success, 1 solver failure, 2 invalid arguments or input.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys

from scipy.linalg import LinAlgError

from . import csvio, experiments, interp, profile
from .functional import EnergyParams, MinimizeOptions, SolverError, minimize
from .profile import fraction_str

log = logging.getLogger("freedisc")


class UsageError(Exception):
    """Invalid user input detected after parsing."""


class SolverFailure(Exception):
    pass


def _num(x) -> str:
    return csvio.fmt(x)


def _emit(args, lines: list, payload: dict):
    for line in lines:
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


# ---- commands ----------------------------------------------------------------

def cmd_profile(args):
    k = args.k
    if k < 1:
        raise UsageError("--k must be >= 1")
    if args.n is not None or args.N is not None:
        if args.n is None or args.N is None:
            raise UsageError("--n and --N go together")
        res = profile.m_k_constrained(k, args.n, args.N)
        lines = [f"m_{k}^{args.n}(N={_num(args.N)}) = {_num(res.energy)}", f"T = {_num(res.T_star)}"]
        payload = {"k": k, "n": args.n, "N": args.N, "energy": res.energy, "T": res.T_star}
        return _emit(args, lines, payload)
    if args.b <= 0 or args.c <= 0:
        raise UsageError("--b and --c must be positive")
    res = profile.m_k_general(k, args.b, args.c)
    A = res.A_k
    lines = [
        f"m_{k} = {_num(res.energy)}",
        f"T* = {_num(res.T_star)}",
        f"A_{k} = {fraction_str(A)} ({_num(float(A))})",
    ]
    _emit(args, lines, res.to_dict())


def cmd_calibrate(args):
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if not args.mu > 0:
        raise UsageError("--mu must be positive")
    c = profile.calibrate_c_k(args.k, args.mu)
    _emit(args, [f"c_{args.k} = {_num(c)}"], {"k": args.k, "mu": args.mu, "c_k": c})


def _solver_options(args) -> MinimizeOptions:
    opts = MinimizeOptions()
    if args.config:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(args.config) as fh:
            cp.read_file(fh)
        sec = cp["solver"] if "solver" in cp else {}
        for key in sec:
            if key not in ("tolerance", "max-iter", "smoothing"):
                raise UsageError(f"unknown solver key {key!r}")
        opts.tolerance = float(sec.get("tolerance", opts.tolerance))
        opts.max_iter = int(sec.get("max-iter", opts.max_iter))
        opts.smoothing = float(sec.get("smoothing", opts.smoothing))
    for name in ("tolerance", "max_iter", "smoothing"):
        val = getattr(args, name)
        if val is not None:
            setattr(opts, name, val)
    if not opts.tolerance > 0 or opts.max_iter < 1 or opts.smoothing < 0:
        raise UsageError("tolerance > 0, max-iter >= 1 and smoothing >= 0 required")
    return opts


def cmd_denoise(args):
    if args.k < 1 or not args.eps > 0 or not args.lam > 0:
        raise UsageError("--k >= 1, --eps > 0 and --lambda > 0 required")
    g = csvio.read_signal(args.input)
    if g.n < 2 * args.k + 2:
        raise UsageError(f"input has {g.n} samples; order {args.k} needs at least {2 * args.k + 2}")
    opts = _solver_options(args)
    p = EnergyParams(args.k, args.eps, c=args.c, lam=args.lam, data=g)
    res = minimize(g, p, opts)
    if not res.converged:
        raise SolverFailure(f"minimization did not converge: {res.message}")
    csvio.write_signal(args.output, res.signal)
    payload = {"energy": res.energy, "iterations": res.iterations, "grad_norm": res.grad_norm,
               "converged": res.converged, "method": res.method, "message": res.message}
    _emit(args, [f"energy = {_num(res.energy)}", f"iterations = {res.iterations}"], payload)


def cmd_sweep(args):
    report = experiments.run_from_config(args.config)
    lines = []
    for r in report.records:
        if "density" in r:
            lines.append(f"eps = {_num(r['eps'])}  transitions = {r.get('transitions')}  "
                         f"density = {_num(r['density']) if r.get('density') is not None else 'failed'}")
    for key, val in report.summary.items():
        if isinstance(val, float):
            lines.append(f"{key} = {_num(val)}")
    _emit(args, lines, report.to_dict())
    if report.summary.get("failures"):
        raise SolverFailure(f"{report.summary['failures']} sweep points failed")


def cmd_interp(args):
    if args.k < 3:
        raise UsageError("--k must be >= 3")
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    rep = interp.sample_cases(args.k, args.samples, args.seed)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rep.to_csv())
    _emit(args, [f"R_hat_{args.k} = {_num(rep.R_hat)}"], rep.summary())


def cmd_bz(args):
    if args.k < 3:
        raise UsageError("--k must be >= 3")
    rep = experiments.run_bz_approximation(args.k, args.eps, args.width)
    fin = rep.records[-1]
    lines = [f"eps = {_num(fin['eps'])}"] + [f"{kind} = {_num(fin[kind])}" for kind in ("flat", "crease", "jump")]
    _emit(args, lines, rep.to_dict())


# ---- parser ------------------------------------------------------------------

def _positive_list(text):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise argparse.ArgumentTypeError("values must be positive and finite")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freedisc", description="Free-discontinuity energies with higher-order perturbations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--json", metavar="PATH", help="also write the result as JSON")
        sp.set_defaults(func=func)
        return sp

    sp = add("profile", cmd_profile, "optimal-profile constant m_k")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--n", type=int, help="box the derivative orders 1..n")
    sp.add_argument("--N", type=float, help="box bound 1/N")

    sp = add("calibrate", cmd_calibrate, "weight c_k with m_k^{1,c_k} = mu")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--mu", type=float, required=True)

    sp = add("denoise", cmd_denoise, "minimize the discrete energy with fidelity to a CSV signal")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--config", help="INI file with a [solver] section")
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--smoothing", type=float)

    sp = add("sweep", cmd_sweep, "run an experiment described by a config file")
    sp.add_argument("--config", required=True)

    sp = add("interp", cmd_interp, "estimate the interpolation constant R_k")
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--csv", metavar="PATH", help="per-case report")

    sp = add("bz", cmd_bz, "Blake-Zisserman approximation along constructed sequences")
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--eps", type=_positive_list, help="decreasing eps list")
    sp.add_argument("--width", type=float, default=0.25)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ValueError, TypeError, KeyError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, SolverError, ArithmeticError, LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    return 0


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
