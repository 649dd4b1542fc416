"""Command-line entry point: ``python -m maxfollow <subcommand>``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import runner
from .config import ConfigError, LqrConfig, load

log = logging.getLogger("maxfollow")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxfollow", description="MaxIteration policy ensembling experiments")
    p.add_argument("--seed", type=int, default=0, help="base seed; config seeds select substreams")
    p.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    p.add_argument("--c-alpha", type=float, default=None, help="constant in alpha = c eps^3 / (K H^4)")
    p.add_argument("--c-beta", type=float, default=None, help="constant in beta = c eps / H")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run one scenario and write report.json, returns.csv, plot.svg"),
                           ("theorem", "epsilon sweep comparing MaxIteration with class_worst - eps"),
                           ("lemma", "check the worst class value against the best constituent"),
                           ("lqr", "LQR closed forms, Monte-Carlo checks and fit residuals"),
                           ("enumerate", "class bounds, witnesses and exhaustive selector enumeration")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
    sub.add_parser("observations", help="reproduce the five example observations")
    return p


def _config(args):
    cfg = load(args.config)
    if args.c_alpha is not None:
        cfg.c_alpha = args.c_alpha
    if args.c_beta is not None:
        cfg.c_beta = args.c_beta
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "observations":
            checks = runner.verify_observations()
            out = args.out or "out"
            runner.write_json(os.path.join(out, "observations.json"), checks)
            for c in checks:
                print(f"observation {c['observation']}: {'PASS' if c['passed'] else 'FAIL'}  {c['claim']}")
            return 0 if all(c["passed"] for c in checks) else 1

        cfg = _config(args)
        if args.command == "run":
            report = runner.run_scenario(cfg, base_seed=args.seed)
            sys.stdout.write(report.returns_csv())
            return 0 if all(v for v in report.checks.values() if isinstance(v, bool)) else 1
        if args.command == "theorem":
            res = runner.verify_theorem1(cfg, base_seed=args.seed)
            runner.write_json(os.path.join(cfg.out_dir, "theorem.json"), res)
            for r in res["records"]:
                print(f"{r['instance']:<28} eps={r['epsilon']:<5} margin={r['margin']:+.4f} "
                      f"bad={r['max_bad_fraction']:.3g}  {'PASS' if r['passed'] else 'FAIL'}")
        elif args.command == "lemma":
            res = runner.run_lemma(cfg)
            runner.write_json(os.path.join(cfg.out_dir, "lemma.json"), res)
            for r in res["records"]:
                lem = r["lemma1"]
                print(f"{r['instance']:<20} worst={lem['lhs']:.6f} best_constituent={lem['rhs']:.6f} "
                      f"{'PASS' if r['passed'] else 'FAIL'}")
        elif args.command == "lqr":
            res = runner.run_lqr(cfg.lqr if cfg.lqr is not None else LqrConfig(), base_seed=args.seed)
            runner.write_json(os.path.join(cfg.out_dir, "lqr.json"), res)
            print(json.dumps(res["checks"], indent=2))
        elif args.command == "enumerate":
            res = runner.run_enumerate(cfg)
            runner.write_json(os.path.join(cfg.out_dir, "enumerate.json"), res)
            summary = {k: res[k] for k in ("beta", "selector_count", "witnesses_member")}
            summary.update(worst=res["bounds"]["worst"], best=res["bounds"]["best"],
                           enumeration=res.get("enumeration", "skipped: too many selectors"))
            print(json.dumps(summary, indent=2))
        print("PASS" if res["passed"] else "FAIL")
        return 0 if res["passed"] else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
