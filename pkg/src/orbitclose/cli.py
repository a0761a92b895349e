"""orbitclose command line: scenario runner.

    orbitclose run <scenario.toml> [--seed N] [--out DIR] [--tol X] [--r N]
    orbitclose suite <dir>         [--seed N] [--out DIR] [--tol X] [--r N]
    orbitclose catalog

Exit status: 0 all assertions pass, 1 assertion failure, 2 usage or schema
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .catalog import catalog
from .errors import OrbitCloseError, SchemaError
from .pipelines import run_scenario
from .scenario import load_scenario


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", type=str, default=None)
    sub.add_argument("--tol", type=float, default=None)
    sub.add_argument("--r", type=int, default=None)


def _overrides(args):
    return {"seed": args.seed, "tol": args.tol, "r": args.r}


def _run_one(path, args):
    scn = load_scenario(path, overrides=_overrides(args))
    rep = run_scenario(scn, out_dir=args.out)
    for a in rep.assertions:
        status = "pass" if a["pass"] else "FAIL"
        print(f"[{status}] {scn.name}: {a['name']} = {a['value']!r} "
              f"(tol {a['tolerance']!r})")
    return rep


def main(argv=None):
    parser = argparse.ArgumentParser(prog="orbitclose",
                                     description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    p_run = subs.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario")
    _add_common(p_run)
    p_suite = subs.add_parser("suite", help="run every *.toml in a directory")
    p_suite.add_argument("directory")
    _add_common(p_suite)
    subs.add_parser("catalog", help="list built-in systems")

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0

    try:
        if args.command == "catalog":
            for name in catalog():
                print(name)
            return 0
        if args.command == "run":
            rep = _run_one(args.scenario, args)
            return 0 if rep.passed else 1
        # suite: deterministic merge by scenario name order
        paths = sorted(
            os.path.join(args.directory, f)
            for f in os.listdir(args.directory) if f.endswith(".toml"))
        if not paths:
            print(f"no *.toml scenarios in {args.directory}", file=sys.stderr)
            return 2
        reports = [_run_one(p, args) for p in paths]
        merged = {r.scenario_name: r.to_json()
                  for r in sorted(reports, key=lambda r: r.scenario_name)}
        out_root = args.out or "runs"
        os.makedirs(out_root, exist_ok=True)
        with open(os.path.join(out_root, "suite_report.json"), "w") as fh:
            json.dump(merged, fh, indent=2, sort_keys=True)
        return 0 if all(r.passed for r in reports) else 1
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OrbitCloseError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
