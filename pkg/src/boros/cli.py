"""Command line entry point: ``boros run|fuzz|costs|oracle-diff|netsim``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import netsim
from .core import BorosError
from .harness import account_costs, check_properties, load_scenario, run_scenario
from .harness import library
from .harness.fuzz import BASES, fuzz
from .harness.oracle import oracle_diff
from .harness.scenario import Scenario


def _scenario(ref: str) -> Scenario:
    """A scenario file, or the name of a built-in scenario."""
    if Path(ref).exists():
        return load_scenario(ref)
    builtin = library.corpus()
    if ref in builtin:
        return builtin[ref]
    if ref == "stale-complaint":
        return library.stale_complaint()
    raise SystemExit(f"no scenario file or built-in scenario named {ref!r} "
                     f"(built-ins: {', '.join(sorted(builtin))}, stale-complaint)")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    s = _scenario(args.scenario)
    trace = run_scenario(s)
    if args.trace:
        trace.write(args.trace)
    for rnd, party, kind, sid in trace.outputs():
        print(f"round {rnd:3d}  {party:<6} {kind:<16} {sid}")
    report = check_properties(trace, require_settled=args.require_settled)
    for f in report.findings:
        print(f"{f.prop} round {f.round} {f.party}: {f.detail}")
    print(f"digest {trace.digest()}")
    print("properties ok" if report.ok else f"properties violated: {report.counts()}")
    return 0 if report.ok else 1


def cmd_costs(args) -> int:
    report = account_costs(run_scenario(_scenario(args.scenario), observe=False))
    _emit(report.to_csv(), args.out)
    return 0


def cmd_oracle_diff(args) -> int:
    diffs = oracle_diff(_scenario(args.scenario))
    for d in diffs:
        print(d)
    print("equivalent" if not diffs else f"{len(diffs)} differences")
    return 0 if not diffs else 1


def cmd_fuzz(args) -> int:
    res = fuzz(args.base, args.n, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["base", "runs", "P1", "P2", "P3", "INV", "failing_seeds"])
    c = res.counts()
    w.writerow([res.base, res.runs, c["P1"], c["P2"], c["P3"], c["INV"],
                " ".join(str(s) for s, _ in res.failures)])
    _emit(buf.getvalue(), args.out)
    for seed, findings in res.failures[:10]:
        first = findings[0]
        print(f"seed {seed}: {first.prop} round {first.round} {first.party}: {first.detail}",
              file=sys.stderr)
    return 0 if res.ok else 1


def cmd_netsim(args) -> int:
    kinds = sorted(set(args.kind or netsim.KINDS), key=netsim.KINDS.index)
    workload = netsim.load_workload(args.workload, args.n) if args.workload else None
    results = [netsim.evaluate(args.n, args.ratio, alpha, args.hub_size,
                               seeds=range(args.seed, args.seed + args.seeds), pairs=args.pairs,
                               kinds=kinds, routers=args.router or ["sp"], workload=workload)
               for alpha in args.alpha]
    _emit(netsim.results_csv(results), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boros", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and check its properties")
    run.add_argument("scenario", help="scenario YAML file or built-in scenario name")
    run.add_argument("--trace", help="write the JSON-lines trace here")
    run.add_argument("--require-settled", action="store_true",
                     help="treat channels left open at the end as violations")
    run.set_defaults(func=cmd_run)

    costs = sub.add_parser("costs", help="count on-chain txs, messages and signatures")
    costs.add_argument("scenario")
    costs.add_argument("--out", help="CSV output path (default stdout)")
    costs.set_defaults(func=cmd_costs)

    od = sub.add_parser("oracle-diff", help="compare a run with the reference functionality")
    od.add_argument("scenario")
    od.set_defaults(func=cmd_oracle_diff)

    fz = sub.add_parser("fuzz", help="random adversaries against a base operation")
    fz.add_argument("base", choices=sorted(BASES))
    fz.add_argument("--n", type=int, default=1000)
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--out", help="CSV output path (default stdout)")
    fz.set_defaults(func=cmd_fuzz)

    ns = sub.add_parser("netsim", help="average path lengths with and without hubs")
    ns.add_argument("--n", type=int, default=200)
    ns.add_argument("--ratio", type=float, default=4.0)
    ns.add_argument("--alpha", type=float, nargs="+", default=[0.05])
    ns.add_argument("--hub-size", type=int, default=200)
    ns.add_argument("--kind", choices=netsim.KINDS, action="append")
    ns.add_argument("--router", choices=netsim.ROUTERS, action="append")
    ns.add_argument("--pairs", type=int, default=100_000)
    ns.add_argument("--seeds", type=int, default=10)
    ns.add_argument("--seed", type=int, default=0, help="first seed")
    ns.add_argument("--workload", help="CSV of src,dst node pairs to route instead of sampling")
    ns.add_argument("--out", help="CSV output path (default stdout)")
    ns.set_defaults(func=cmd_netsim)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BorosError, netsim.NetsimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
