"""Worst qualifying-pair integral of the N = 2, k = 1 brute force against
grid size, plus the negative control. Used to pick tol_cancel.

usage: python scripts/cancellation_calibration.py [config]
"""
import sys

from weightedchaos.chaos import product_cancellation_bruteforce
from weightedchaos.config import load_config
from weightedchaos.experiments import initial_field


def main(argv):
    cfg = load_config(argv[0] if argv else "configs/cancellation-1d.json")
    k = cfg.build_kernels()
    m_max = cfg.chaos.brute_m_max or cfg.grids.m_max
    print(f"{'G':>4} {'worst pair':>12} {'control':>12}")
    for G in (6, 8, 12, 16):
        psi = initial_field(cfg, G_x=G, G_m=G, m_max=m_max)
        rep = product_cancellation_bruteforce(psi, k, N=2, k=1, tol_cancel=cfg.chaos.tol_cancel)
        ctrl = max(max(abs(p.phi), abs(p.theta)) for p in rep.controls)
        print(f"{G:4d} {rep.worst:12.4e} {ctrl:12.4e}")


if __name__ == "__main__":
    main(sys.argv[1:])
