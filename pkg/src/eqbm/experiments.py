"""Verification harnesses behind the CLI subcommands.

Each function returns a plain-dict report with a boolean ``passed`` entry
so it can be dumped as JSON and mapped onto an exit code.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import binom

from . import estimators as est
from .channels import ExactModel, Observable, anticommutator_term, commutator_term
from .critic import LinearCritic, MlpCritic
from .model import (Distribution, HamiltonianFamily, Povm, born_probabilities, computational_povm,
                    relative_entropy, single_qubit_closed_form)
from .objective import Objective, ObjectiveConfig, optimize_inner

GRAD_TOL = 1e-5
HESS_TOL = 1e-3
FD_STEP = 1e-3
DV_TOL = 1e-6
SWEEP_TOL = 1e-10
# roundoff allowance for zero-variance estimators, where the SE is exactly 0
BIAS_FLOOR = 1e-12


def relative_error(a, b, floor: float = 1e-6) -> float:
    """Normwise max|a - b| / max(||b||_inf, floor)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), floor))


# -- random instances ------------------------------------------------------
def random_pauli(rng: np.random.Generator, n: int) -> str:
    while True:
        s = "".join(rng.choice(list("IXYZ"), size=n))
        if set(s) != {"I"}:
            return s


def random_family(rng: np.random.Generator, n: int, J: int, K: int) -> HamiltonianFamily:
    return HamiltonianFamily.from_letters([random_pauli(rng, n) for _ in range(J)],
                                          [random_pauli(rng, n) for _ in range(K)])


def random_target(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.dirichlet(np.ones(size))


def random_critic(rng: np.random.Generator, size: int, kind: str, lam: float = 0.0):
    if kind == "mlp":
        hidden = (int(rng.integers(2, 6)),)
        return MlpCritic.default(size, hidden=hidden, seed=int(rng.integers(2**31)), scale=0.6)
    feats = rng.normal(size=(size, int(rng.integers(1, size + 2))))
    return LinearCritic(feats, rng.normal(scale=0.5, size=feats.shape[1]), lam)


def random_instance(rng: np.random.Generator, divergence: str = "dv", alpha: float = 2.0,
                    kind: str | None = None, max_qubits: int = 3):
    """Random (Objective, gamma, w) on 1..max_qubits qubits with J, K <= 4."""
    n = int(rng.integers(1, max_qubits + 1))
    fam = random_family(rng, n, int(rng.integers(1, 5)), int(rng.integers(0, 5)))
    povm = computational_povm(n)
    kind = kind or ("mlp" if rng.random() < 0.5 else "linear")
    lam = float(rng.uniform(0, 0.5)) if (kind == "linear" and divergence == "dv") else 0.0
    critic = random_critic(rng, povm.size, kind, lam)
    cfg = ObjectiveConfig(Distribution(random_target(rng, povm.size)), povm, divergence, alpha)
    gamma = rng.uniform(-1, 1, fam.M)
    return Objective(cfg, fam, critic), gamma, critic.w.copy()


# -- finite-difference gradient check --------------------------------------
def _central(f, x, h):
    """Five-point central stencil, O(h^4) truncation."""
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        num = (np.asarray(f(x - 2 * e)) - 8 * np.asarray(f(x - e))
               + 8 * np.asarray(f(x + e)) - np.asarray(f(x + 2 * e)))
        cols.append(num / (12 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros((0,))


def finite_difference_blocks(obj: Objective, gamma, w, h: float = FD_STEP) -> dict:
    """Central differences of the value (gradients) and of grad_w (Hessians)."""
    fd_gg = _central(lambda g: obj.value(g, w), gamma, h)
    fd_gw = _central(lambda v: obj.value(gamma, v), w, h)
    fd_hww = _central(lambda v: obj.grad_w(gamma, v), w, h)
    fd_hwg = _central(lambda g: obj.grad_w(g, w), gamma, h).reshape(len(w), len(gamma))
    return {"grad_gamma": fd_gg, "grad_w": fd_gw, "hessian_ww": fd_hww, "hessian_wgamma": fd_hwg}


def block_errors(obj: Objective, gamma, w) -> dict:
    fd = finite_difference_blocks(obj, gamma, w)
    analytic = {"grad_gamma": obj.grad_gamma(gamma, w), "grad_w": obj.grad_w(gamma, w),
                "hessian_ww": obj.hessian_ww(gamma, w), "hessian_wgamma": obj.hessian_wgamma(gamma, w)}
    return {k: relative_error(analytic[k], fd[k]) for k in fd}


TOLERANCES = {"grad_gamma": GRAD_TOL, "grad_w": GRAD_TOL, "hessian_ww": HESS_TOL, "hessian_wgamma": HESS_TOL}


def grad_check(instances) -> dict:
    """``instances`` yields (Objective, gamma, w); reports the worst block per trial."""
    trials, failures = [], []
    for i, (obj, gamma, w) in enumerate(instances):
        errs = block_errors(obj, gamma, w)
        trials.append({"trial": i, "qubits": obj.family.num_qubits, "J": obj.family.J, "K": obj.family.K,
                       "critic": type(obj.critic).__name__, "divergence": obj.cfg.divergence, **errs})
        failures += [{"trial": i, "block": k, "error": v, "tol": TOLERANCES[k]}
                     for k, v in errs.items() if not v <= TOLERANCES[k]]
    worst = {k: max((t[k] for t in trials), default=0.0) for k in TOLERANCES}
    return {"trials": trials, "max_error": worst, "failures": failures, "passed": not failures}


def random_grad_check(trials: int = 20, seed: int = 0, divergence: str | None = None, alpha=None) -> dict:
    rng = np.random.default_rng(seed)

    def gen():
        for _ in range(trials):
            div = divergence or rng.choice(["dv", "dv", "renyi"])
            a = alpha if alpha is not None else float(rng.choice([0.5, 2.0]))
            yield random_instance(rng, str(div), a)

    return grad_check(gen())


# -- estimator calibration -------------------------------------------------
def calibration_instance():
    """One qubit, G = (Z, X), H = (Y), payoff g = (1, -1) with |mu_0| ~ 0.85.

    Returns ``(model, observable, j, k)``.
    """
    fam = HamiltonianFamily.from_letters(["Z", "X"], ["Y"])
    povm = computational_povm(1)
    model = ExactModel(fam, np.array([0.8, 0.2, 0.25]))
    return model, Observable(np.array([1.0, -1.0]), povm), 0, 0


def commuting_instance():
    """G = Z at theta = 1, K = 0, O = Z, where mu = -1 exactly."""
    fam = HamiltonianFamily.from_letters(["Z"], [])
    povm = computational_povm(1)
    return ExactModel(fam, np.array([1.0])), Observable(np.array([1.0, -1.0]), povm), 0, None


def exact_failure_probability(mean: float, n: int, epsilon: float) -> float:
    """P(|Ybar - mean| > eps) for n i.i.d. +-1 shots with E[Y] = mean."""
    k = np.arange(n + 1)
    dev = np.abs((2 * k - n) / n - mean)
    return float(binom.pmf(k, n, (1 + mean) / 2)[dev > epsilon].sum())


def _summarise(estimates: np.ndarray, exact: float, epsilon: float, delta: float) -> dict:
    err = estimates - exact
    bias = float(err.mean())
    se = float(err.std(ddof=1) / np.sqrt(err.size)) if err.size > 1 else 0.0
    rate = float(np.mean(np.abs(err) > epsilon))
    return {"exact": float(exact), "failure_rate": rate, "bias": bias, "standard_error": se,
            "failure_ok": rate <= 2 * delta, "bias_ok": abs(bias) <= 3 * se + BIAS_FLOOR}


def calibrate(repetitions: int = 400, epsilon: float = 0.1, delta: float = 0.05, seed=0,
              threads: int = 1, instance=None) -> dict:
    """Repeat both interferometric estimators against their exact values."""
    model, obs, j, k = instance or calibration_instance()
    fam = model.family
    report = {"epsilon": epsilon, "delta": delta, "repetitions": repetitions}
    n1 = est.shots_required(epsilon, delta, obs.norm, "alg1")
    mu = anticommutator_term(obs, fam, model.gamma, j, model)
    plan1 = est.ShotPlan(epsilon, delta, n1)
    vals = np.array([est.estimate_anticommutator_term(obs, model, j, plan1, est.substream(seed, 1, r), threads).mean
                     for r in range(repetitions)])
    report["alg1"] = {"shots": n1, **_summarise(vals, mu, epsilon, delta),
                      "exact_failure_probability": exact_failure_probability(mu, n1, epsilon)}
    if k is not None:
        n2 = est.shots_required(epsilon, delta, obs.norm, "alg2")
        nu = commutator_term(obs, fam, model.gamma, k, model)
        plan2 = est.ShotPlan(epsilon, delta, n2)
        vals = np.array([est.estimate_commutator_term(obs, model, k, plan2, est.substream(seed, 2, r), threads).mean
                         for r in range(repetitions)])
        report["alg2"] = {"shots": n2, **_summarise(vals, nu, epsilon, delta),
                          "exact_failure_probability": exact_failure_probability(nu, n2, epsilon)}
    parts = [report[a] for a in ("alg1", "alg2") if a in report]
    report["passed"] = all(p["failure_ok"] and p["bias_ok"] for p in parts)
    return report


# -- nonconvexity sweep ----------------------------------------------------
def sweep_pipeline_value(mu: float, theta_z: float = 1.0) -> float:
    """D(point mass on 0 || q) through the generic density-matrix path."""
    fam = HamiltonianFamily.from_letters(["X", "Z"], [])
    q = born_probabilities(ExactModel(fam, np.array([mu, theta_z])).omega, computational_povm(1))
    return relative_entropy([1.0, 0.0], q)


def nonconvexity_sweep(lo: float = -5.0, hi: float = 5.0, points: int = 201, theta_z: float = 1.0) -> dict:
    grid = np.linspace(lo, hi, points)
    closed = np.array([single_qubit_closed_form(m, theta_z)[3] for m in grid])
    generic = np.array([sweep_pipeline_value(m, theta_z) for m in grid])
    diff = float(np.max(np.abs(closed - generic)))
    d0, dh, d1 = (single_qubit_closed_form(m, theta_z)[3] for m in (0.0, 0.5, 1.0))
    chord = 0.5 * (d0 + d1)
    return {"grid": grid, "closed_form": closed, "pipeline": generic, "max_abs_diff": diff,
            "D0": d0, "D_half": dh, "D1": d1, "chord_midpoint": chord, "convexity_violated": dh > chord,
            "passed": diff <= SWEEP_TOL and dh > chord}


# -- DV exactness ----------------------------------------------------------
def binned_povm(num_qubits: int, size: int) -> Povm:
    """Coarse-grain the computational basis into ``size`` outcomes."""
    d = 2 ** num_qubits
    if not 1 <= size <= d:
        raise ValueError(f"cannot bin {d} basis states into {size} outcomes")
    effects = np.zeros((size, d, d), dtype=np.complex128)
    for i in range(d):
        effects[i * size // d, i, i] = 1.0
    return Povm(effects)


def dv_exactness_case(p, family: HamiltonianFamily, povm: Povm, gamma) -> dict:
    p = np.asarray(p, float)
    cfg = ObjectiveConfig(Distribution(p, povm.labels), povm)
    obj = Objective(cfg, family, LinearCritic.tabular(povm.size))
    D = obj.relative_entropy(gamma)
    if not np.isfinite(D):
        return {"D": D, "max_value": None, "error": None, "maximizer_error": None, "passed": True,
                "note": "q vanishes on the support of p"}
    w, val = optimize_inner(obj, gamma, np.zeros(povm.size), max_iter=2000)
    q = obj.q(gamma)
    supp = p > 0
    werr = float(np.max(np.abs(w[supp] - np.log(p[supp] / q[supp]))))
    err = abs(val - D)
    return {"D": D, "max_value": float(val), "error": err, "maximizer_error": werr,
            "passed": bool(err <= DV_TOL and werr <= 1e-4)}


def dv_closed_form_case() -> dict:
    fam = HamiltonianFamily.from_letters(["Z"], [])
    return dv_exactness_case([1.0, 0.0], fam, computational_povm(1), np.array([1.0]))


def dv_exactness_suite(instances: int = 10, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    cases = [dict(dv_closed_form_case(), alphabet=2, closed_form=float(np.log1p(np.e ** 2)))]
    for i in range(instances - 1):
        size = 2 + i % 7
        n = int(np.ceil(np.log2(size)))
        n = max(n, int(rng.integers(n, 4)))
        fam = random_family(rng, n, int(rng.integers(1, 4)), int(rng.integers(0, 3)))
        povm = binned_povm(n, size)
        p = random_target(rng, size)
        cases.append(dict(dv_exactness_case(p, fam, povm, rng.uniform(-1, 1, fam.M)), alphabet=size))
    return {"cases": cases, "passed": all(c["passed"] for c in cases)}
