"""Command line entry point: ``mtlreach plan | validate | encode-check``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .mtl import TABLE_I, exhaustive_check
from .scenarios.config import ConfigError, MODES, load, shipped
from .scenarios.run import StageError, run_scenario, validate_partition


def _resolve(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    return shipped(name)


def _plan(args) -> int:
    cfg = load(_resolve(args.scenario))
    out = Path(args.out) if args.out else Path("runs") / cfg.name
    art = run_scenario(cfg, out, mode=args.mode, gap=args.gap, seed=args.seed, time_limit=args.time_limit)
    s = art.summary
    print(f"{cfg.name}: {s['status']}")
    if "solver" in s:
        sv = s["solver"]
        print(f"  objective {sv['objective']}  bound {sv['bound']}  gap {sv['gap']}  nodes {sv['nodes']}  {sv['wall_time']:.2f} s")
    for k, v in sorted(s["checks"].items()):
        print(f"  {k}: {'ok' if v else 'FAILED'}")
    for key, p in sorted(art.files.items()):
        print(f"  {key}: {p}")
    return 0


def _validate(args) -> int:
    checks = validate_partition(_resolve(args.scenario), args.resolution)
    bad = 0
    for c in checks:
        print(f"step {c.step} {c.layer}: {c.report.describe()}")
        bad += not c.ok
    return 1 if bad else 0


def _encode_check(args) -> int:
    t0 = time.perf_counter()
    total = 0
    taus = range(1, args.tau + 1)
    for kind in TABLE_I:
        for tau in taus if kind in ("until", "eventually", "always") else (1,):
            n = exhaustive_check(kind, tau)
            total += n
            print(f"{kind:<10} tau={tau}: {n} mismatches")
    print(f"total mismatches {total} in {time.perf_counter() - t0:.2f} s")
    return 1 if total else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtlreach", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("plan", help="solve a scenario and write its artifacts")
    p.add_argument("--scenario", required=True, help="TOML file or the name of a shipped scenario")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.set_defaults(func=_plan)
    v = sub.add_parser("validate", help="check the region partition of a scenario")
    v.add_argument("--scenario", required=True)
    v.add_argument("--resolution", type=float, default=None, help="coverage grid spacing")
    v.set_defaults(func=_validate)
    e = sub.add_parser("encode-check", help="exhaustive operator-encoding equivalence")
    e.add_argument("--tau", type=int, default=4)
    e.set_defaults(func=_encode_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
