"""Command-line entry point ``borel-ns``.

Every subcommand reads the same flat configuration (``--config``), writes
its files under ``--out`` and finishes with ``manifest.json``.  The exit
status is 0 when every stage passes, 1 when a stage fails its checks and 2
on an error (the error code is printed to stderr).
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import RunConfig, parse_config, validate_config
from .errors import BorelNSError
from .pipeline import Pipeline

ENV_THREADS = "BNS_THREADS"


def _load_config(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise BorelNSError("CONFIG_INVALID", f"cannot read {args.config}: {exc}") from exc
        cfg = parse_config(text)
    else:
        cfg = RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    threads = args.threads
    if threads is None and os.environ.get(ENV_THREADS):
        try:
            threads = int(os.environ[ENV_THREADS])
        except ValueError as exc:
            raise BorelNSError("CONFIG_INVALID", f"{ENV_THREADS} must be an integer") from exc
    if threads is not None:
        changes["threads"] = threads
    if getattr(args, "t", None):
        changes["t_list"] = tuple(args.t)
    cfg = cfg.replace(**changes)
    validate_config(cfg)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="seed for random presets and lemma trials")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, help=f"worker threads (fallback: ${ENV_THREADS})")

    parser = argparse.ArgumentParser(prog="borel-ns",
                                     description="Borel-plane Navier-Stokes solver and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="emit the constants certificate")
    sub.add_parser("solve-borel", parents=[common], help="solve the Borel-plane equation")
    sub.add_parser("taylor", parents=[common], help="Taylor coefficients and Gevrey ratios")
    p_sum = sub.add_parser("sum", parents=[common], help="Laplace-sum a Borel solution")
    p_sum.add_argument("--input", metavar="PATH", help="Borel snapshot (default: solve afresh)")
    p_sum.add_argument("--t", type=float, nargs="+", help="times (default: config t_list)")
    p_sum.add_argument("--physical", action="store_true", help="also write physical fields")
    p_or = sub.add_parser("oracle", parents=[common], help="classical time-stepper comparison")
    p_or.add_argument("--t", type=float, nargs="+", help="times (default: config t_list)")
    p_lem = sub.add_parser("verify-lemmas", parents=[common], help="randomised inequality checks")
    p_lem.add_argument("--lemma", action="append", help="restrict to one id (repeatable)")
    p_lem.add_argument("--trials", type=int, help="trials per check (default: config)")
    p_k = sub.add_parser("kernel-scan", parents=[common], help="Green kernel table and supremum")
    p_k.add_argument("--z-max", type=float, default=200.0)
    p_k.add_argument("--samples", type=int, default=100_000)
    p_k.add_argument("--grid", type=int, default=101, help="table points per axis")
    sub.add_parser("run", parents=[common], help="full pipeline")
    return parser


def _dispatch(args, pipe: Pipeline) -> dict:
    cmd = args.command
    if cmd == "run":
        return pipe.run_all()
    if cmd == "constants":
        pipe.stage_certificate()
    elif cmd == "solve-borel":
        pipe.stage_borel()
    elif cmd == "taylor":
        pipe.stage_taylor()
    elif cmd == "sum":
        if args.input:
            pipe.use_borel_snapshot(args.input)
        pipe.stage_sum(physical=args.physical)
    elif cmd == "oracle":
        pipe.stage_oracle()
    elif cmd == "verify-lemmas":
        pipe.stage_lemmas(args.lemma, args.trials)
    elif cmd == "kernel-scan":
        pipe.stage_kernel_scan(args.z_max, args.samples, args.grid)
    return pipe.write_manifest()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        manifest = _dispatch(args, Pipeline(cfg))
    except BorelNSError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 2
    for stage in manifest["stages"]:
        print(f"{stage['name']:12s} {'PASS' if stage['passed'] else 'FAIL'}")
    print(f"manifest: {os.path.join(cfg.out, 'manifest.json')}")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
