"""Shot-mode versus exact gradients as the accuracy target epsilon shrinks.

For a fixed two-qubit instance, reports the mean absolute deviation of the
shot-mode gamma-gradient from the exact one and the shots consumed.
"""

import argparse
import dataclasses

import numpy as np

from eqbm import experiments as ex
from eqbm.objective import Objective


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    exact, gamma, w = ex.random_instance(np.random.default_rng(args.seed), "dv", kind="linear", max_qubits=2)
    ref = exact.grad_gamma(gamma, w)
    print(f"instance: {exact.family.num_qubits} qubits, J={exact.family.J}, K={exact.family.K}")
    print(f"{'epsilon':>8}{'mean |err|':>14}{'shots/grad':>12}")
    for eps in (0.2, 0.1, 0.05, 0.025):
        errs, shots = [], 0
        for r in range(args.repeats):
            cfg = dataclasses.replace(exact.cfg, mode="shots", epsilon=eps, seed=1000 * r + 1, threads=args.threads)
            obj = Objective(cfg, exact.family, exact.critic)
            errs.append(np.mean(np.abs(obj.grad_gamma(gamma, w) - ref)))
            shots += obj.shots_used
        print(f"{eps:>8.3f}{np.mean(errs):>14.4f}{shots // args.repeats:>12d}")


if __name__ == "__main__":
    main()
