"""Run all four optimizers on the one-qubit DV problem and report D over time.

Target p = (0.75, 0.25), G = Z, tabular critic, exact evaluation.  The
second-order methods get a small ridge term so H_ww stays invertible.
"""

import argparse
import time

import numpy as np

from eqbm.critic import LinearCritic
from eqbm.model import Distribution, HamiltonianFamily, computational_povm
from eqbm.objective import Objective, ObjectiveConfig
from eqbm.optimizers import ALGORITHMS, OptState, Schedule


def build(lam):
    fam = HamiltonianFamily.from_letters(["Z"], [])
    povm = computational_povm(1)
    cfg = ObjectiveConfig(Distribution(np.array([0.75, 0.25])), povm)
    return Objective(cfg, fam, LinearCritic.tabular(2, lam=lam))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=3000)
    ap.add_argument("--lam", type=float, default=0.0)
    args = ap.parse_args()

    sched = Schedule(eta_gamma=0.02, eta_w=0.5, eta_w1=0.5, eta_w2=0.2, iterations=args.iterations)
    print(f"{'algorithm':<18}{'D at 10%':>12}{'final D':>12}{'theta':>10}{'seconds':>9}")
    for name, run in ALGORITHMS.items():
        obj = build(args.lam)
        t0 = time.perf_counter()
        s, trace = run(obj, sched, OptState(np.zeros(1), np.zeros(2)), monitor=lambda g, w: obj.relative_entropy(g))
        d = trace.column("rel_entropy")
        print(f"{name:<18}{d[len(d) // 10]:>12.2e}{obj.relative_entropy(s.gamma):>12.2e}{s.gamma[0]:>10.4f}"
              f"{time.perf_counter() - t0:>9.2f}")
    print(f"target theta: {-np.arctanh(0.5):.4f}, the root of (1 - tanh theta) / 2 = 0.75")


if __name__ == "__main__":
    main()
