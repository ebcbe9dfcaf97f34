"""Command line entry point: ``epdp run | generate | audit``."""

from __future__ import annotations

import argparse
import logging
import sys

from epdp import kernels
from epdp.accountant import BudgetLedger, LedgerError, audit, read_requirements_csv
from epdp.bench.config import load_config
from epdp.bench.runner import run_and_write
from epdp.noise import RandomSource
from epdp.streams import GENERATORS, write_csv


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits: {text}")
    return v


def cmd_run(args) -> int:
    config = load_config(args.config)
    config = config.with_overrides(
        master_seed=args.seed,
        zero_noise=True if args.zero_noise else None,
        output_dir=args.output_dir,
        record_timing=False if args.no_timing else None,
        save_ledgers=True if args.save_ledgers else None,
    )
    logging.info("kernel backend: %s", kernels.backend())
    results, summary = run_and_write(config, jobs=args.jobs)
    failed = [r for r in results if not r["audit_ok"]]
    for row in summary:
        print(
            f"{row['mechanism']:8s} eps={row['epsilon']:<5g} w={row['window']:<4d} "
            f"ratio={'' if row['ratio'] is None else row['ratio']!s:4s} "
            f"amre_median={row['amre_median']:.6g} ajsd_median={row['ajsd_median']:.6g}"
        )
    print(f"wrote {len(results)} rows to {config.output_dir}")
    if failed:
        print(f"{len(failed)} runs failed the budget audit", file=sys.stderr)
        return 1
    return 0


def cmd_generate(args) -> int:
    rng = RandomSource(args.seed)
    stream = GENERATORS[args.kind](args.n, args.t, rng=rng)
    write_csv(stream, args.out)
    return 0


def cmd_audit(args) -> int:
    try:
        reqs = read_requirements_csv(args.requirements)
        ledger = BudgetLedger.from_csv(args.ledger, reqs)
    except (OSError, LedgerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    violations = audit(ledger)
    for v in violations:
        print(f"{v.user_id},{v.t},{v.overshoot!r}")
    print(f"{len(violations)} violations in {len(ledger)} charges", file=sys.stderr)
    return 0 if not violations else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epdp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=_u64, default=None, help="override master_seed")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--zero-noise", action="store_true")
    run.add_argument("--output-dir", default=None)
    run.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0 for byte-stable output")
    run.add_argument("--save-ledgers", action="store_true")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("generate", help="write a synthetic stream as user_id,slot,category CSV")
    gen.add_argument("--kind", choices=sorted(GENERATORS), required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--t", type=int, required=True)
    gen.add_argument("--seed", type=_u64, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    aud = sub.add_parser("audit", help="check a ledger CSV against per-user requirements")
    aud.add_argument("--ledger", required=True)
    aud.add_argument("--requirements", required=True)
    aud.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
