"""Command-line entry point.

Exit status: 0 success, 1 an audit failed, 2 usage error, 3 output not writable,
4 parameters outside their valid regime.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import audits
from .blocking import Blocking, GridBlocking, GridSpec, factorial_free_approx, log_prob, prob
from .copula import DiscreteCopula
from .coupling import build_assignment, coupled_runs
from .gaussian import NormalizedBlocking, RegularityParams, build_gamma_grid, gaussian_approx_ratio, standard_reason
from .rng import fresh_seed, substream
from .samplers import McmcConfig, birkhoff_chain, sample_permutation_batch
from .sheet import grid_nodes, sample_sheet_values
from .tiling import pile_from_copula, tiling_svg

OK, AUDIT_FAILED, USAGE, UNWRITABLE, BAD_REGIME = 0, 1, 2, 3, 4
OUTDIR_ENV = "COPULALIMIT_OUTDIR"


class Unwritable(Exception):
    pass


class UsageError(Exception):
    pass


def _resolve(out: str | None) -> Path | None:
    if out is None or out == "-":
        return None
    path = Path(out)
    base = os.environ.get(OUTDIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _emit(text: str, out: str | None) -> None:
    path = _resolve(out)
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise Unwritable(f"cannot write {path}: {exc}") from exc


def _seed(args) -> int:
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


# -- subcommands --------------------------------------------------------------


def cmd_sample(args) -> int:
    seed = _seed(args)
    if args.kind == "perm":
        sig = sample_permutation_batch(args.n, args.samples, substream(seed, "sample"))
        if args.format == "json":
            text = "".join(json.dumps({"n": args.n, "sigma": (s + 1).tolist()}) + "\n" for s in sig)
        else:
            text = _csv((s + 1).tolist() for s in sig)
    else:
        cfg = McmcConfig(args.n, args.burnin, args.thin, seed=int(substream(seed, "sample").integers(2**63)))
        mats = list(birkhoff_chain(cfg, args.samples))
        if args.format == "json":
            text = "".join(json.dumps({"n": args.n, "matrix": m.tolist()}) + "\n" for m in mats)
        else:
            text = _csv([_num(x) for x in m.ravel()] for m in mats)
    _emit(text, args.out)
    return OK


def cmd_prob(args) -> int:
    if args.grid:
        spec = json.loads(Path(args.grid).read_text())
        b = GridBlocking(GridSpec(spec["n"], spec["a"], spec["b"]), tuple(map(tuple, spec["cdot"])))
    else:
        if None in (args.n, args.a, args.b, args.c):
            raise UsageError("prob needs --n --a --b --c or --grid")
        b = Blocking(args.n, args.a, args.b, args.c)
    if args.approx:
        ap = factorial_free_approx(b)
        text = json.dumps({"log_p_approx": ap.log_p, "sparsity": ap.sparsity, "low_sparsity": ap.low_sparsity}) + "\n"
    elif args.exact or (b.n if isinstance(b, Blocking) else b.grid.n) <= 2000:
        p = prob(b, exact=True)
        text = f"{p.numerator}/{p.denominator}\n" if isinstance(p, Fraction) and p.denominator != 1 else f"{p}\n"
    else:
        text = f"{log_prob(b)!r}\n"
    _emit(text, args.out)
    return OK


def cmd_approx(args) -> int:
    params = RegularityParams(args.alpha, args.eta)
    if not params.in_delta1:
        print(f"(alpha, eta) = ({args.alpha}, {args.eta}) is outside 0 < 6 eta < 8 alpha - 7 < 1", file=sys.stderr)
        return BAD_REGIME
    b = Blocking(args.n, args.a, args.b, args.c)
    reason = standard_reason(NormalizedBlocking.from_blocking(b), params) if 0 < b.a < b.n and 0 < b.b < b.n else "degenerate grid"
    r = gaussian_approx_ratio(b)
    record = {
        "exact_log_p": r.log_p,
        "approx_log_p": r.log_approx,
        "ratio": r.ratio,
        "standard": reason is None,
    }
    if reason:
        record["reason"] = reason
    _emit(json.dumps(record) + "\n", args.out)
    return OK


def cmd_sheet(args) -> int:
    seed = _seed(args)
    I, J = (int(x) for x in args.grid.split(","))
    u, v = grid_nodes((I, J))
    f = sample_sheet_values((I, J), args.samples, substream(seed, "sheet"), route=args.route)
    header = [f"f({_num(x)};{_num(y)})" for x in u for y in v]
    text = _csv([header] + [[_num(x) for x in s.ravel()] for s in f])
    _emit(text, args.out)
    return OK


def cmd_couple(args) -> int:
    seed = _seed(args)
    gamma = Fraction(args.gamma)
    eta = Fraction(args.eta)
    try:
        gg = build_gamma_grid(args.n, gamma)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return BAD_REGIME
    rng = substream(seed, "couple")
    assignment = build_assignment(gg.grid, eta, rng=rng)
    runs = coupled_runs(args.n, gamma, eta, args.samples, rng, assignment)
    text = "".join(json.dumps(s.to_record()) + "\n" for s in runs)
    _emit(text, args.out)
    return OK


def cmd_verify(args) -> int:
    seed = _seed(args)
    thresholds = {}
    if args.threshold is not None:
        names = audits.SUITES if args.suite == "all" else (args.suite,)
        thresholds = {k: args.threshold for k in names if k != "tail"}
    reports = audits.run_suite(args.suite, args.n, args.samples, seed, thresholds, args.workers)
    doc = {"seed": seed, "reports": [r.to_dict() for r in reports]}
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    for r in reports:
        print(f"{r.test}: {'PASS' if r.passed else 'FAIL'} statistic={r.statistic:.6g} threshold={r.threshold:.6g}",
              file=sys.stderr)
    return OK if all(r.passed for r in reports) else AUDIT_FAILED


def cmd_tile(args) -> int:
    if args.from_csv:
        c = DiscreteCopula.from_csv(Path(args.from_csv).read_text())
    else:
        if args.n is None:
            raise UsageError("tile needs --n or --from")
        seed = _seed(args)
        c = DiscreteCopula(substream(seed, "tile").permutation(args.n))
    _emit(tiling_svg(pile_from_copula(c)), args.out)
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="copulalimit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=None, help="root seed (random and reported when omitted)")
        p.add_argument("--out", default=None, help=f"output file (default stdout; relative to ${OUTDIR_ENV} when set)")

    p = sub.add_parser("sample", help="uniform permutations or Birkhoff matrices")
    p.add_argument("--kind", choices=["perm", "birkhoff"], default="perm")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("prob", help="blocking probability")
    for k in ("n", "a", "b", "c"):
        p.add_argument(f"--{k}", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--approx", action="store_true")
    p.add_argument("--grid", help="JSON file with n, a, b and cdot")
    common(p, seed=False)
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("approx", help="Gaussian approximation of a blocking probability")
    for k in ("n", "a", "b", "c"):
        p.add_argument(f"--{k}", type=int, required=True)
    p.add_argument("--alpha", type=Fraction, required=True)
    p.add_argument("--eta", type=Fraction, required=True)
    common(p, seed=False)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("sheet", help="bridged Brownian sheet node values")
    p.add_argument("--grid", default="4,4", help="I,J")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--route", choices=["projection", "bridge"], default="projection")
    common(p)
    p.set_defaults(func=cmd_sheet)

    p = sub.add_parser("couple", help="coupled copula and sheet on a gamma-grid")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", required=True)
    p.add_argument("--eta", default="1/20")
    p.add_argument("--samples", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("verify", help="statistical audits")
    p.add_argument("--suite", choices=list(audits.SUITES) + ["all"], default="all")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--threshold", type=float, default=None, help="override the pass threshold")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tile", help="lozenge tiling SVG of a copula")
    p.add_argument("--n", type=int)
    p.add_argument("--from", dest="from_csv", help="copula CSV to render instead of a random one")
    common(p)
    p.set_defaults(func=cmd_tile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE
    except Unwritable as exc:
        print(str(exc), file=sys.stderr)
        return UNWRITABLE
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return BAD_REGIME


if __name__ == "__main__":
    sys.exit(main())
