"""Entropy inequality at N = 2 under grid refinement.

Prints, per grid, the largest excess E(t) - rhs(t) (negative means the
inequality holds without slack). Used to pick tol_ent.

usage: python scripts/entropy_refinement.py [config] [G ...]
"""
import sys
import time

from weightedchaos.config import load_config
from weightedchaos.experiments import initial_field
from weightedchaos.kolmogorov import entropy_inequality_check, solve_kolmogorov, tensor_power


def main(argv):
    path = argv[0] if argv else "configs/entropy.json"
    grids = [int(g) for g in argv[1:]] or [16, 24, 32]
    cfg = load_config(path)
    k = cfg.build_kernels()
    kc = cfg.kolmogorov
    print(f"{'G':>4} {'max excess':>12} {'E(T)-E(0)':>12} {'wall s':>8}")
    for G in grids:
        t0 = time.perf_counter()
        psi = initial_field(cfg, G_x=G, G_m=G, m_max=kc.m_max)
        frames = solve_kolmogorov(tensor_power(psi, 2), k, cfg.times.T, n_frames=kc.n_frames,
                                  budget=max(G ** 4, 32 ** 4))
        rep = entropy_inequality_check(frames, k, tol=0.0)
        excess = max(e - r for e, r in zip(rep.entropy, rep.rhs))
        print(f"{G:4d} {excess:12.4e} {rep.entropy[-1] - rep.entropy[0]:12.4e} "
              f"{time.perf_counter() - t0:8.1f}")


if __name__ == "__main__":
    main(sys.argv[1:])
