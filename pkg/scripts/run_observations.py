"""Reproduce the five worked examples and write out/observations.json."""
import argparse
import os
import sys

from maxfollow.harness.runner import verify_observations, write_json


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    checks = verify_observations()
    write_json(os.path.join(args.out, "observations.json"), checks)
    for c in checks:
        print(f"observation {c['observation']}: {'PASS' if c['passed'] else 'FAIL'}  {c['claim']}")
    return 0 if all(c["passed"] for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
