"""Two mirrored linear controllers on a 2-D LQR system and their max-following switch."""
import argparse
import sys

import numpy as np

from maxfollow.harness.config import LqrConfig
from maxfollow.harness.runner import run_lqr


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--b-eps", type=float, default=0.1)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--sigma2", type=float, default=0.01)
    ap.add_argument("--rollouts", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = LqrConfig(b_eps=args.b_eps, gamma=args.gamma, sigma2=args.sigma2, rollouts=args.rollouts)
    res = run_lqr(cfg, base_seed=args.seed)
    np.set_printoptions(precision=4, suppress=True)
    for i, (P, q) in enumerate(zip(res["P"], res["q"])):
        print(f"controller {i}: P =\n{np.array(P)}\n  q = {q:.4f}")
    print(f"truncation horizon: {res['t_max']}")
    print(f"{'x0':>18} {'V1 closed':>10} {'V1 mc':>10} {'V2 closed':>10} {'V2 mc':>10} {'switch mc':>10}")
    for p in res["points"]:
        mc = [m for m, _ in p["mc"]]
        x0 = "(" + ", ".join(f"{v:+.3f}" for v in p["x0"]) + ")"
        print(f"{x0:>18} {p['closed_form'][0]:10.3f} {mc[0]:10.3f} {p['closed_form'][1]:10.3f} "
              f"{mc[1]:10.3f} {mc[2]:10.3f}")
    print("quadratic fit residuals:", res["fit_residuals"])
    print("checks:", res["checks"])
    return 0 if res["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
