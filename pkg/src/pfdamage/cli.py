"""Command line front end.

    pfdamage run CONFIG [section.key=value ...] [-o DIR]
    pfdamage sweep CONFIG --axis tau|delta [--levels N] [--factor F] [-o DIR]
    pfdamage validate CONFIG

Exit status: 0 when every certification passes, 1 on a certification
failure, 2 on a configuration or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .material import validate_assumptions
from .scenarios import ScenarioError
from .sweep import SweepError, run_sweep

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfdamage", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="path to the run configuration")
        sp.add_argument("overrides", nargs="*", metavar="section.key=value",
                        help="override configuration entries (may follow the options)")

    r = sub.add_parser("run", help="simulate one scenario and certify every step")
    common(r)
    r.add_argument("-o", "--output", help="output directory (default: output.dir)")
    r.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    s = sub.add_parser("sweep", help="refinement sweep along tau or delta")
    common(s)
    s.add_argument("--axis", choices=("tau", "delta"), required=True)
    s.add_argument("--levels", type=int, default=3)
    s.add_argument("--factor", type=float, default=None,
                   help="refinement factor per level (default 2 for tau, 10 for delta)")
    s.add_argument("--jobs", type=int, default=1, help="levels run in parallel")
    s.add_argument("-o", "--output", help="output directory (default: output.dir)")
    s.add_argument("--no-figures", action="store_true")

    v = sub.add_parser("validate", help="check the material against the standing assumptions")
    common(v)
    return p


def main(argv=None) -> int:
    parser = _parser()
    args, extra = parser.parse_known_args(argv)
    stray = [a for a in extra if a.startswith("-") or "=" not in a]
    if stray:
        parser.error(f"unrecognized arguments: {' '.join(stray)}")
    args.overrides = list(args.overrides) + extra
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "validate":
        report = validate_assumptions(cfg.material, seed=cfg.seed)
        print("\n".join(report.lines()))
        return EXIT_OK if report.passed else EXIT_FAIL

    if args.command == "run":
        from .runner import execute

        try:
            outcome = execute(cfg, out_dir=args.output, figures=not args.no_figures and cfg.figures)
        except ScenarioError as exc:
            print(f"scenario error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        for c in outcome.assumptions.failures():
            print(f"assumption violated: {c.name} (margin {c.margin:.3g})", file=sys.stderr)
        if outcome.error:
            print(f"run failed: {outcome.error}", file=sys.stderr)
        for f in outcome.failures[:20]:
            print(f"certification failure: {f}", file=sys.stderr)
        s = outcome.summary
        if "steps" in s:
            print(f"{s['scenario']}: {s['steps']} steps, worst slack {s['worst_slack']:.3e}, "
                  f"max residual {max(s['max_r1'], s['max_r2'], s['max_r3'], s['max_r4']):.3e}")
        print("PASS" if outcome.passed else "FAIL")
        return EXIT_OK if outcome.passed else EXIT_FAIL

    try:
        report = run_sweep(cfg, args.axis, args.levels, args.factor,
                           out_dir=args.output or cfg.output_dir, jobs=args.jobs,
                           figures=not args.no_figures and cfg.figures)
    except SweepError as exc:
        print(f"sweep error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, ok, detail in report.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}".rstrip())
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
