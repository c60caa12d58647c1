"""Marginal-error study for one or more configs; prints median L1 and W1 per N
and the fitted log-log slope.

usage: python scripts/chaos_study.py [config ...] [--threads K]
"""
import argparse
import time

from weightedchaos.chaos import marginal_error_study
from weightedchaos.config import load_config
from weightedchaos.experiments import study_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="*", default=["configs/free.json", "configs/interacting.json"])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for path in args.configs:
        cfg = load_config(path)
        sc = study_config(cfg, args.threads)
        t0 = time.perf_counter()
        rep = marginal_error_study(sc, progress=lambda s, N: print(f"  seed {s} N {N}", flush=True))
        print(f"{cfg.name}  ({time.perf_counter() - t0:.0f} s)")
        print(f"{'N':>6} {'L1':>10} {'W1':>10}")
        for r in rep.rows:
            print(f"{r['N']:6d} {r['l1']:10.4e} {r['w1']:10.4e}")
        print(f"slope of log L1 vs log N: {rep.slope:.3f}\n")


if __name__ == "__main__":
    main()
