"""Command-line front end: scripted runs and the control service.

Each invocation builds an ephemeral overlay from the shared sizing flags
(--nodes/--dist/--keys/--seed), performs one action, prints, and exits; the
long-running service behind `serve` exposes the same actions over HTTP for
the dashboard. Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .experiments import (ExperimentConfig, OutOfRangeError, SystemHandle,
                          export_report)
from .protocol import SimConfig
from .workloads import KINDS, DistributionSpec

DEFAULT_PORT = 8642


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; users get 1
        raise UsageError(message)


def _add_system_flags(p, default_keys=None):
    p.add_argument("--nodes", type=int, default=3,
                   help="overlay size (>= 3; the first three are introducers)")
    p.add_argument("--dist", choices=KINDS, default="uniform",
                   help="key distribution for the initial load")
    p.add_argument("--keys", type=int, default=default_keys,
                   help="initial key count (default: 5.7 per peer for init, "
                        "0 for one-shot ops)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist-seed", type=int, default=None,
                   help="seed for the key distribution (default: --seed)")


def build_parser():
    parser = _Parser(prog="nbdtsim",
                     description="Deterministic NBDT overlay simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="build an overlay and print its status")
    _add_system_flags(p)
    p.add_argument("--config", type=argparse.FileType("r"), default=None,
                   help="JSON file with the same fields as the flags")

    p = sub.add_parser("op", help="run one search/insert/delete")
    p.add_argument("action", choices=("search", "insert", "delete"))
    p.add_argument("--key", type=int, required=True)
    p.add_argument("--origin", type=int, default=1)
    _add_system_flags(p, default_keys=0)

    p = sub.add_parser("experiment", help="batched operation statistics")
    p.add_argument("--op", choices=("search", "insert", "delete"),
                   required=True)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--origin", type=int, default=None,
                   help="fixed origin peer (default: random per trial)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_system_flags(p)

    p = sub.add_parser("churn", help="presence-toggling updates + load report")
    p.add_argument("--updates", type=int, default=2500)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_system_flags(p)

    p = sub.add_parser("export", help="re-emit a result document")
    p.add_argument("--format", choices=("csv", "json"), required=True)
    p.add_argument("--out", default="-", help="output path (default stdout)")
    p.add_argument("--in", dest="src", default="-",
                   help="result JSON produced by experiment/churn "
                        "(default stdin)")

    p = sub.add_parser("serve", help="run the HTTP control service")
    p.add_argument("--port", type=int, default=None,
                   help=f"default $NBDTSIM_PORT or {DEFAULT_PORT}")
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _dist_spec(args, nodes, b=14):
    seed = args.seed if args.dist_seed is None else args.dist_seed
    return DistributionSpec(args.dist, 0, nodes * b - 1, seed=seed)


def _build_system(args, default_keys=None):
    nodes = args.nodes
    keys = args.keys
    if keys is None:
        keys = default_keys if default_keys is not None else \
            math.ceil(5.7 * nodes)
    if nodes < 3:
        raise UsageError("--nodes must be at least 3")
    if keys < 0:
        raise UsageError("--keys must be non-negative")
    handle = SystemHandle(seed=args.seed, config=SimConfig())
    handle.init_system(nodes, dist=_dist_spec(args, nodes),
                       initial_keys=keys)
    return handle


def cmd_init(args):
    if args.config is not None:
        doc = json.load(args.config)
        for name in ("nodes", "keys", "seed"):
            if name in doc:
                setattr(args, name, int(doc[name]))
        if "dist" in doc:
            args.dist = doc["dist"]
    handle = _build_system(args)
    print(json.dumps(handle.status().to_doc()))
    return 0


def cmd_op(args):
    handle = _build_system(args, default_keys=0)
    try:
        reply, lines = handle.do_op(args.action, args.key, args.origin)
    except OutOfRangeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    for line in lines:
        print(line)
    print(json.dumps({"outcome": reply.outcome, "hops": reply.hops,
                      "holder": reply.holder, "key": args.key}))
    return 0


def cmd_experiment(args):
    handle = _build_system(args)
    cfg = ExperimentConfig(args.op, _dist_spec(args, args.nodes),
                           trials=args.trials, origin=args.origin)
    result = handle.run_experiment(cfg)
    sys.stdout.write(export_report(result, args.format))
    return 0


def cmd_churn(args):
    handle = _build_system(args)
    report = handle.churn_run(args.updates, _dist_spec(args, args.nodes))
    sys.stdout.write(export_report(report, args.format))
    return 0


def cmd_export(args):
    raw = sys.stdin.read() if args.src == "-" else open(args.src).read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        raise UsageError(f"input is not a result document: {err}")
    rendered = export_report(doc, args.format)
    if args.out == "-":
        sys.stdout.write(rendered)
    else:
        with open(args.out, "w") as fh:
            fh.write(rendered)
    return 0


def cmd_serve(args):
    import os

    import uvicorn

    from .service import create_app

    port = args.port
    if port is None:
        port = int(os.environ.get("NBDTSIM_PORT", DEFAULT_PORT))
    uvicorn.run(create_app(), host=args.host, port=port, log_level="warning")
    return 0


_COMMANDS = {"init": cmd_init, "op": cmd_op, "experiment": cmd_experiment,
             "churn": cmd_churn, "export": cmd_export, "serve": cmd_serve}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - internal failure boundary
        print(f"internal error: {err!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
