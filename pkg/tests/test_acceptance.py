"""Acceptance gate: one test per criterion, each emitting a PASS/FAIL line.

Tolerances and budgets are fixed constants below; nothing here is tuned
to the observed results.
"""

import filecmp
import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from eqbm import cli
from eqbm import experiments as ex
from eqbm.channels import Observable, exact_partial_phi, exact_partial_theta
from eqbm.critic import LinearCritic, exp_clamped
from eqbm.estimators import block_size, shots_required
from eqbm.model import Distribution, HamiltonianFamily, computational_povm
from eqbm.objective import Objective, ObjectiveConfig, bound_gradient, bound_hessian, optimize_inner
from eqbm.optimizers import (OptState, Schedule, follow_the_ridge_run, hessian_fr_run, local_minimax_check,
                             orientation_flip, quadratic_toy, two_timescale_gda_run)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

GRAD_TOL, HESS_TOL = 1e-5, 1e-3
EPSILON, DELTA, REPS, MAX_FAILURE_RATE = 0.1, 0.05, 400, 0.10
DV_TOL = 1e-6
SWEEP_TOL = 1e-10
TRAIN_D_TOL, TRAIN_MAX_ITERS, TOY_GRAD_TOL = 1e-3, 5000, 1e-6
RENYI_TOL = 1e-6


def test_criterion_1_gradient_fidelity(report):
    t0 = time.perf_counter()
    res = ex.random_grad_check(trials=20, seed=2024)
    elapsed = time.perf_counter() - t0
    kinds = {t["critic"] for t in res["trials"]}
    qubits = {t["qubits"] for t in res["trials"]}
    worst = res["max_error"]
    ok = (res["passed"] and worst["grad_gamma"] <= GRAD_TOL and worst["grad_w"] <= GRAD_TOL
          and worst["hessian_ww"] <= HESS_TOL and worst["hessian_wgamma"] <= HESS_TOL
          and kinds == {"MlpCritic", "LinearCritic"} and elapsed <= 120)
    report(1, "gradient-formula fidelity", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", qubits {sorted(qubits)}, {elapsed:.1f}s")
    assert ok, res["failures"]


def test_criterion_2_estimator_calibration(report):
    t0 = time.perf_counter()
    res = ex.calibrate(REPS, EPSILON, DELTA, seed=7)
    elapsed = time.perf_counter() - t0
    a1, a2 = res["alg1"], res["alg2"]
    ok = (a1["shots"] == 185 and a2["shots"] == 738
          and a1["failure_rate"] <= MAX_FAILURE_RATE and a2["failure_rate"] <= MAX_FAILURE_RATE
          and abs(a1["bias"]) <= 3 * a1["standard_error"] and abs(a2["bias"]) <= 3 * a2["standard_error"]
          and elapsed <= 300)
    report(2, "estimator calibration", ok,
           f"alg1 n=185 fail {a1['failure_rate']:.4f} bias/se {a1['bias'] / a1['standard_error']:+.2f}; "
           f"alg2 n=738 fail {a2['failure_rate']:.4f} bias/se {a2['bias'] / a2['standard_error']:+.2f}; {elapsed:.1f}s")
    assert ok


def test_criterion_3_dv_exactness(report):
    t0 = time.perf_counter()
    res = ex.dv_exactness_suite(instances=10, seed=11)
    elapsed = time.perf_counter() - t0
    sizes = sorted({c["alphabet"] for c in res["cases"]})
    closed = res["cases"][0]
    worst = max(c["error"] for c in res["cases"])
    ok = (res["passed"] and len(res["cases"]) == 10 and sizes == list(range(2, 9))
          and abs(closed["max_value"] - np.log1p(np.e ** 2)) <= DV_TOL
          and abs(closed["max_value"] - 2.126928) <= DV_TOL and elapsed <= 60)
    report(3, "DV exactness", ok, f"max |sup f - D| {worst:.1e}, closed-form point {closed['max_value']:.6f}, "
                                  f"alphabets {sizes}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_nonconvexity_sweep(report):
    t0 = time.perf_counter()
    res = ex.nonconvexity_sweep(-5.0, 5.0, 201)
    elapsed = time.perf_counter() - t0

    # independent oracle: matrix exponential of -(mu X + Z)
    X = np.array([[0, 1], [1, 0]], float)
    Z = np.diag([1.0, -1.0])

    def d_expm(mu):
        r = expm(-(mu * X + Z))
        return -np.log(r[0, 0] / np.trace(r))

    oracle_gap = max(abs(d_expm(m) - res[k]) for m, k in ((0.0, "D0"), (0.5, "D_half"), (1.0, "D1")))
    ok = (res["max_abs_diff"] <= SWEEP_TOL and res["D_half"] > res["chord_midpoint"]
          and oracle_gap <= SWEEP_TOL and abs(res["D0"] - 2.126928) <= 1e-6 and elapsed <= 10)
    report(4, "nonconvexity sweep", ok,
           f"pipeline gap {res['max_abs_diff']:.1e}, D(0.5) {res['D_half']:.6f} > chord {res['chord_midpoint']:.6f}, "
           f"{elapsed:.2f}s")
    assert ok


def test_criterion_5_norm_bounds(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    violations = []
    for i in range(50):
        obj, gamma, w = ex.random_instance(rng, "dv")
        critic = obj.critic.with_params(w)
        bg, bw = bound_gradient(obj.family, critic)
        bww, bwg = bound_hessian(obj.family, critic)
        actual = (np.sum(obj.grad_gamma(gamma, w) ** 2), np.sum(obj.grad_w(gamma, w) ** 2),
                  np.linalg.norm(obj.hessian_ww(gamma, w), 2) ** 2,
                  np.linalg.norm(obj.hessian_wgamma(gamma, w), 2) ** 2)
        for name, a, b in zip(("grad_gamma", "grad_w", "h_ww", "h_wgamma"), actual, (bg, bw, bww, bwg)):
            worst = max(worst, a / b)
            if a > b:
                violations.append((i, name, a, b))
    elapsed = time.perf_counter() - t0
    ok = not violations and elapsed <= 120
    report(5, "gradient and Hessian norm bounds", ok, f"largest actual/bound ratio {worst:.3f}, {elapsed:.1f}s")
    assert ok, violations


def test_criterion_6_training(report):
    t0 = time.perf_counter()
    fam = HamiltonianFamily.from_letters(["Z"], [])
    povm = computational_povm(1)
    obj = Objective(ObjectiveConfig(Distribution([0.75, 0.25]), povm), fam, LinearCritic.tabular(2))
    state, trace = two_timescale_gda_run(obj, Schedule(eta_gamma=0.02, eta_w=0.5, iterations=TRAIN_MAX_ITERS),
                                         OptState(np.zeros(1), np.zeros(2)))
    d_final = obj.relative_entropy(state.gamma)

    toy = quadratic_toy(0.5)
    start = OptState(np.array([1.0]), np.array([-0.7]))
    fr, fr_trace = follow_the_ridge_run(toy, Schedule(eta_gamma=0.05, eta_w=0.5, iterations=2000), start)
    hfr, hfr_trace = hessian_fr_run(toy, Schedule(eta_gamma=0.05, eta_w=0.5, eta_w1=0.5, eta_w2=0.3,
                                                  iterations=2000), start)
    norms = []
    verdicts = []
    for s in (fr, hfr):
        norms += [np.linalg.norm(toy.grad_gamma(s.gamma, s.w)), np.linalg.norm(toy.grad_w(s.gamma, s.w))]
        verdicts += list(local_minimax_check(toy, s.gamma, s.w).verdict)
    elapsed = time.perf_counter() - t0
    ok = d_final < TRAIN_D_TOL and max(norms) < TOY_GRAD_TOL and all(verdicts) and elapsed <= 180
    report(6, "end-to-end training", ok, f"GDA D {d_final:.1e} after {len(trace)} iters, FR/HFR max grad "
                                         f"{max(norms):.1e}, verdicts {all(verdicts)}, {elapsed:.1f}s")
    assert ok


def test_criterion_7_renyi(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst_fd = worst_pref = 0.0
    for alpha in (0.5, 2.0):
        for _ in range(4):
            obj, gamma, w = ex.random_instance(rng, "renyi", alpha)
            analytic = obj.grad_gamma(gamma, w)
            fd = ex.finite_difference_blocks(obj, gamma, w)["grad_gamma"]
            worst_fd = max(worst_fd, ex.relative_error(analytic, fd))
            # second route: (1 - alpha) times the exact derivative of <exp T>_omega
            o = Observable(exp_clamped(obj.critic.with_params(w).values()), obj.cfg.povm)
            fam, J = obj.family, obj.family.J
            d = [exact_partial_theta(o, fam, gamma, j) for j in range(J)]
            d += [exact_partial_phi(o, fam, gamma, k) for k in range(fam.K)]
            worst_pref = max(worst_pref, ex.relative_error(analytic, (1 - alpha) * np.array(d)))

    # tabular inner problem at p = q
    fam = HamiltonianFamily.from_letters(["ZI", "XX"], ["IY"])
    povm = computational_povm(2)
    gamma = np.array([0.3, -0.4, 0.2])
    q = Objective(ObjectiveConfig(Distribution(np.full(4, 0.25)), povm), fam, LinearCritic.tabular(4)).q(gamma)
    values = {}
    for alpha in (0.5, 2.0):
        cfg = ObjectiveConfig(Distribution(q / q.sum()), povm, "renyi", alpha)
        obj = Objective(cfg, fam, LinearCritic.tabular(4, w=rng.normal(size=4)))
        if cfg.orientation == "maximin":
            # inf over w of f is sup over w of the flipped objective
            flipped = orientation_flip(obj)
            w, v = optimize_inner(flipped, gamma)
            values[alpha] = -v
        else:
            w, values[alpha] = optimize_inner(obj, gamma)
    q_err = max(abs(v - 1.0) for v in values.values())
    elapsed = time.perf_counter() - t0
    ok = worst_fd <= GRAD_TOL and worst_pref <= GRAD_TOL and q_err <= RENYI_TOL and elapsed <= 60
    report(7, "Renyi variant", ok, f"FD {worst_fd:.1e}, prefactor route {worst_pref:.1e}, |Q - 1| {q_err:.1e}, "
                                   f"{elapsed:.1f}s")
    assert ok


def _train_twice(cfg, tmp_path, tag, threads=(1, 1)):
    outs = []
    for i, th in enumerate(threads):
        out = tmp_path / f"{tag}{i}"
        assert cli.main(["train", "--config", str(cfg), "--out", str(out), "--threads", str(th)]) == 0
        outs.append(out)
    return all(filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in ("trace.csv", "summary.json"))


def test_criterion_8_determinism(tmp_path, report, capsys):
    t0 = time.perf_counter()
    exact_cfg = json.loads((CONFIGS / "qubit_gda.json").read_text())
    exact_cfg["optimizer"]["iterations"] = 300
    exact_path = tmp_path / "exact.json"
    exact_path.write_text(json.dumps(exact_cfg))
    same_exact = _train_twice(exact_path, tmp_path, "exact")
    shots_path = CONFIGS / "three_qubit_shots.json"
    eps = json.loads(shots_path.read_text())["mode"]["epsilon"]
    multi_block = shots_required(eps, DELTA, 1.0, "alg2") > block_size(8)
    same_shots = _train_twice(shots_path, tmp_path, "shots", threads=(4, 4))
    same_threads = _train_twice(shots_path, tmp_path, "mixed", threads=(1, 4))
    elapsed = time.perf_counter() - t0
    ok = same_exact and same_shots and same_threads and multi_block and elapsed <= 60
    capsys.readouterr()
    report(8, "determinism", ok, f"exact {same_exact}, shots 4 threads {same_shots}, 1 vs 4 threads "
                                 f"{same_threads}, multi-block {multi_block}, {elapsed:.1f}s")
    assert ok
