"""Command line: ``lenscat {run,ensemble,rates,check,export}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .lab import RATE_TARGETS, cmd_ensemble, cmd_rates, cmd_run, dumps, load_config
from .snapshot import SnapshotFormatError, load_snapshot


def _experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--delta-reg", type=float, dest="delta_reg")
    p.add_argument("--clusters", type=int, dest="J", help="cluster cutoff J")
    p.add_argument("--quad", type=int, dest="M", help="quadrature points per axis")
    p.add_argument("--dt", type=float)
    p.add_argument("--law", choices=("gaussian", "rademacher", "uniform"))
    p.add_argument("--seeds", help="'7', '1,4,9' or a range '0:500'")
    p.add_argument("--out")
    p.add_argument("--big", action="store_true", default=None, help="allow n=4 and large grids")
    p.add_argument("--dealias", action="store_true", default=None, help="use 2*(3*d_max)+1 nodes per axis")


def _config(args):
    keys = ("n", "p", "s", "delta_reg", "J", "M", "dt", "law", "seeds", "out", "big", "dealias")
    return load_config(args.config, **{k: getattr(args, k) for k in keys})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lenscat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "one randomized trajectory with diagnostics"),
        ("ensemble", "Monte Carlo ensemble over seeds"),
        ("rates", "decay-exponent fits with a refinement floor"),
    ):
        _experiment_flags(sub.add_parser(name, help=help_text))
    check = sub.add_parser("check", help="run the invariant battery")
    check.add_argument("names", nargs="*", help="subset of checks to run")
    export = sub.add_parser("export", help="dump a LENS1 snapshot as JSON or CSV")
    export.add_argument("snapshot")
    export.add_argument("--format", choices=("json", "csv"), default="json")
    export.add_argument("--out", help="output file (default: stdout)")
    return parser


def _run(args) -> int:
    config = _config(args)
    record = cmd_run(config)
    print(dumps({k: record[k] for k in ("meta", "valid", "reason", "r0_plus_norm_H1", "rate")}), end="")
    return 0 if record["valid"] else 1


def _ensemble(args) -> int:
    summary = cmd_ensemble(_config(args))
    print(dumps(summary.as_dict()), end="")
    return 0


def _rates(args) -> int:
    config = _config(args)
    table = cmd_rates(config)
    lo, hi = RATE_TARGETS.get(config.n, (float("-inf"), float("inf")))
    for row in table:
        mu = row.get("mu")
        status = "inconclusive" if mu is None else ("in band" if lo <= mu <= hi else "out of band")
        r2 = row.get("r2")
        print(f"seed {row['seed']}: mu={mu} r2={r2} window={row.get('window')} floor={row.get('floor')} [{status}]")
    return 0


def _check(args) -> int:
    from .checks import run_checks

    results = run_checks(args.names or None)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def _export(args) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except SnapshotFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    field = snap.field()
    rows = [
        (k, *map(int, field.basis.indices[k]), float(c.real), float(c.imag))
        for k, c in enumerate(field.coeffs)
    ]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if args.format == "json":
            payload = {"metadata": snap.metadata, "coefficients": [[r[-2], r[-1]] for r in rows],
                       "indices": field.basis.indices.tolist()}
            out.write(json.dumps(payload, sort_keys=True) + "\n")
        else:
            writer = csv.writer(out)
            writer.writerow(["k"] + [f"alpha{i}" for i in range(field.basis.n)] + ["re", "im"])
            writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


COMMANDS = {"run": _run, "ensemble": _ensemble, "rates": _rates, "check": _check, "export": _export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
