"""Variational minimax objectives and their derivative blocks.

Donsker-Varadhan (DV) form, with optional ridge term for linear critics:

    f(gamma, w) = E_p[T_w] + 1 - E_q[exp T_w] - lam/2 ||w||^2

Renyi quasi-entropy form:

    f_a(gamma, w) = a E_p[exp(((a-1)/a) T_w)] + (1-a) E_q[exp T_w]

All gamma-dependence enters through q = Born distribution of the evolved
state, so every gamma-derivative is a payoff-weighted combination of the
Born Jacobian dq(z)/dgamma (exact mode) or of the interferometric shot
estimators (shot mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import estimators as est
from .channels import ExactModel, Observable
from .critic import LinearCritic, exp_clamped
from .model import Distribution, HamiltonianFamily, Povm, born_probabilities, relative_entropy


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    """What to optimise and how to evaluate it.

    ``target`` is the distribution used for E_p.  When it came from a
    sample file, ``target_source`` is ``"samples"`` and the probabilities
    are the empirical frequencies, so E_p is exactly the sample mean.
    """

    target: Distribution
    povm: Povm
    divergence: str = "dv"
    alpha: float = 2.0
    mode: str = "exact"
    epsilon: float = 0.1
    delta: float = 0.05
    max_shots: int = 200_000
    seed: int = 0
    threads: int = 1
    target_source: str = "table"

    def __post_init__(self):
        if self.divergence not in ("dv", "renyi"):
            raise ObjectiveError(f"unknown divergence {self.divergence!r}")
        if self.divergence == "renyi" and (self.alpha <= 0 or self.alpha == 1):
            raise ObjectiveError("Renyi order must satisfy alpha > 0 and alpha != 1")
        if self.mode not in ("exact", "shots"):
            raise ObjectiveError(f"unknown mode {self.mode!r}")
        if self.target.probabilities.size != self.povm.size:
            raise ObjectiveError(
                f"target has {self.target.probabilities.size} outcomes, POVM has {self.povm.size}")

    @property
    def orientation(self) -> str:
        """'minimax' (inf over gamma of sup over w) or 'maximin'."""
        if self.divergence == "renyi" and self.alpha < 1:
            return "maximin"
        return "minimax"


@dataclass(frozen=True)
class GradientBundle:
    grad_gamma: np.ndarray
    grad_w: np.ndarray


@dataclass(frozen=True)
class HessianBlocks:
    h_ww: np.ndarray
    h_wgamma: np.ndarray


class Objective:
    """f(gamma, w) bound to a model family, POVM, target and critic class.

    ``gamma`` and ``w`` are flat float vectors; ``critic`` fixes the
    architecture and supplies the initial ``w``.
    """

    def __init__(self, cfg: ObjectiveConfig, family: HamiltonianFamily, critic):
        if critic.alphabet_size != cfg.povm.size:
            raise ObjectiveError(
                f"critic alphabet has {critic.alphabet_size} letters, POVM has {cfg.povm.size}")
        if cfg.povm.dim != family.dim:
            raise ObjectiveError("POVM and Hamiltonian family act on different dimensions")
        if cfg.divergence == "renyi" and getattr(critic, "lam", 0.0) > 0:
            raise ObjectiveError("the ridge term is only defined for the DV objective")
        self.cfg = cfg
        self.family = family
        self.critic = critic
        self.p = cfg.target.probabilities
        self.lam = float(getattr(critic, "lam", 0.0)) if isinstance(critic, LinearCritic) else 0.0
        self.shots_used = 0
        self._calls = 0
        self._model: Optional[ExactModel] = None

    # -- bookkeeping -------------------------------------------------------
    @property
    def dim_gamma(self) -> int:
        return self.family.M

    @property
    def dim_w(self) -> int:
        return self.critic.num_params

    def model(self, gamma) -> ExactModel:
        gamma = np.asarray(gamma, dtype=float)
        if self._model is None or not np.array_equal(self._model.gamma, gamma):
            self._model = ExactModel(self.family, gamma)
        return self._model

    def q(self, gamma) -> np.ndarray:
        return np.clip(born_probabilities(self.model(gamma).omega, self.cfg.povm), 0.0, None)

    def relative_entropy(self, gamma) -> float:
        return relative_entropy(self.p, self.q(gamma))

    def _critic_data(self, w, hessians: bool = False):
        c = self.critic.with_params(w)
        T = c.values()
        Gr = c.grads()
        return T, Gr, (c.hessians() if hessians else None)

    def _seed(self):
        self._calls += 1
        return est.substream(self.cfg.seed, self._calls)

    def _n(self, g_norm: float, which: str) -> int:
        if g_norm <= 0:
            return 1
        return min(est.shots_required(self.cfg.epsilon, self.cfg.delta, g_norm, which), self.cfg.max_shots)

    @property
    def _renyi(self) -> bool:
        return self.cfg.divergence == "renyi"

    @property
    def _c(self) -> float:
        a = self.cfg.alpha
        return (a - 1.0) / a

    @property
    def _q_prefactor(self) -> float:
        """Coefficient of E_q[exp T] in the objective."""
        return (1.0 - self.cfg.alpha) if self._renyi else -1.0

    # -- E_q[payoff] -------------------------------------------------------
    def _eq(self, gamma, payoff: np.ndarray) -> np.ndarray:
        """E_q of a (|Z|,) or (|Z|, n) payoff table."""
        q = self.q(gamma)
        if self.cfg.mode == "exact":
            return q @ payoff
        payoff = np.asarray(payoff, float)
        flat = payoff.reshape(payoff.shape[0], -1)
        n = self._n(float(np.max(np.abs(flat))), "alg1")
        seed = self._seed()

        def block(rng, count):
            z = rng.choice(q.size, size=count, p=q / q.sum())
            return flat[z]

        draws = est.run_blocks(n, seed, block, 2, self.cfg.threads)
        draws = draws.reshape(n, -1)
        self.shots_used += n
        return draws.mean(axis=0).reshape(payoff.shape[1:])

    # -- gamma-derivatives of <O>_omega ------------------------------------
    def _d_expectation(self, gamma, payoffs: np.ndarray) -> np.ndarray:
        """d/dgamma <sum_z g(z) Lambda_z>_omega for each payoff column.

        ``payoffs`` is (|Z|, n); returns (n, M).
        """
        if self.cfg.mode == "exact":
            jac = self.model(gamma).born_jacobian(self.cfg.povm)
            return payoffs.T @ jac
        m = self.model(gamma)
        out = np.zeros((payoffs.shape[1], self.family.M))
        for col in range(payoffs.shape[1]):
            obs = Observable(payoffs[:, col], self.cfg.povm)
            if obs.norm == 0:
                continue
            n1 = self._n(obs.norm, "alg1")
            n2 = self._n(obs.norm, "alg2")
            for j in range(self.family.J):
                mu = est.estimate_anticommutator_term(obs, m, j, est.ShotPlan(self.cfg.epsilon, self.cfg.delta, n1),
                                                      self._seed(), self.cfg.threads, check_plan=False)
                prod = est.estimate_product_term(obs, m, j, n2, self._seed(), self.cfg.threads)
                out[col, j] = mu.mean + prod.mean
                self.shots_used += n1 + n2
            for k in range(self.family.K):
                nu = est.estimate_commutator_term(obs, m, k, est.ShotPlan(self.cfg.epsilon, self.cfg.delta, n2),
                                                  self._seed(), self.cfg.threads, check_plan=False)
                out[col, self.family.J + k] = 2.0 * nu.mean
                self.shots_used += n2
        return out

    # -- public blocks -----------------------------------------------------
    def value(self, gamma, w) -> float:
        w = np.asarray(w, dtype=float)
        T, _, _ = self._critic_data(w)
        eT = exp_clamped(T)
        eq = float(self._eq(gamma, eT))
        if self._renyi:
            a = self.cfg.alpha
            return a * float(self.p @ exp_clamped(self._c * T)) + (1 - a) * eq
        return float(self.p @ T) + 1.0 - eq - 0.5 * self.lam * float(w @ w)

    def grad_gamma(self, gamma, w) -> np.ndarray:
        T, _, _ = self._critic_data(w)
        d = self._d_expectation(gamma, exp_clamped(T)[:, None])[0]
        return self._q_prefactor * d

    def grad_w(self, gamma, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        T, Gr, _ = self._critic_data(w)
        eT = exp_clamped(T)
        eq = self._eq(gamma, eT[:, None] * Gr)
        if self._renyi:
            a = self.cfg.alpha
            return (a - 1.0) * (Gr.T @ (self.p * exp_clamped(self._c * T)) - eq)
        return Gr.T @ self.p - eq - self.lam * w

    def hessian_ww(self, gamma, w) -> np.ndarray:
        T, Gr, Hz = self._critic_data(w, hessians=True)
        eT = exp_clamped(T)
        outer = Gr[:, :, None] * Gr[:, None, :]
        L = Gr.shape[1]
        eq = self._eq(gamma, (eT[:, None, None] * (Hz + outer)).reshape(len(T), -1)).reshape(L, L)
        if self._renyi:
            a, c = self.cfg.alpha, self._c
            ep = exp_clamped(c * T)
            hp = np.einsum("z,zij->ij", self.p * ep, Hz + c * outer)
            H = (a - 1.0) * hp + (1.0 - a) * eq
        else:
            H = np.einsum("z,zij->ij", self.p, Hz) - eq - self.lam * np.eye(L)
        return 0.5 * (H + H.T)

    def hessian_wgamma(self, gamma, w) -> np.ndarray:
        """(L, M) block of mixed derivatives d/dgamma_m d/dw_l f."""
        T, Gr, _ = self._critic_data(w)
        payoffs = exp_clamped(T)[:, None] * Gr
        return self._q_prefactor * self._d_expectation(gamma, payoffs)

    def gradients(self, gamma, w) -> GradientBundle:
        return GradientBundle(self.grad_gamma(gamma, w), self.grad_w(gamma, w))

    def hessians(self, gamma, w) -> HessianBlocks:
        return HessianBlocks(self.hessian_ww(gamma, w), self.hessian_wgamma(gamma, w))


# -- function-style entry points ------------------------------------------
def objective_value(cfg, family, gamma, critic) -> float:
    return Objective(cfg, family, critic).value(gamma, critic.w)


def grad_gamma(cfg, family, gamma, critic) -> np.ndarray:
    return Objective(cfg, family, critic).grad_gamma(gamma, critic.w)


def grad_w(cfg, family, gamma, critic) -> np.ndarray:
    return Objective(cfg, family, critic).grad_w(gamma, critic.w)


def hessian_ww(cfg, family, gamma, critic) -> np.ndarray:
    return Objective(cfg, family, critic).hessian_ww(gamma, critic.w)


def hessian_wgamma(cfg, family, gamma, critic) -> np.ndarray:
    return Objective(cfg, family, critic).hessian_wgamma(gamma, critic.w)


# -- norm bounds -----------------------------------------------------------
def _generator_norm_sq(family: HamiltonianFamily) -> float:
    # Pauli strings have unit spectral norm
    return float(family.J + family.K)


def bound_gradient(family: HamiltonianFamily, critic) -> tuple[float, float]:
    """Right-hand sides of the squared gradient-norm bounds (DV objective).

    A ridge term lam/2 ||w||^2 adds lam ||w|| to the w-gradient norm via the
    triangle inequality.
    """
    e_norm = float(np.max(exp_clamped(critic.values())))
    Gr = critic.grads()
    b_gamma = 4.0 * e_norm ** 2 * _generator_norm_sq(family)
    b_w = (e_norm + 1.0) ** 2 * float(np.sum(np.max(np.abs(Gr), axis=0) ** 2))
    lam = float(getattr(critic, "lam", 0.0))
    if lam:
        b_w = (np.sqrt(b_w) + lam * float(np.linalg.norm(critic.w))) ** 2
    return b_gamma, b_w


def bound_hessian(family: HamiltonianFamily, critic) -> tuple[float, float]:
    """Right-hand sides of the squared Hessian spectral-norm bounds (DV)."""
    eT = exp_clamped(critic.values())
    e_norm = float(np.max(eT))
    Gr = critic.grads()
    Hz = critic.hessians()
    d1 = np.max(np.abs(Gr), axis=0)
    d2 = np.max(np.abs(Hz), axis=0)
    terms = d2 * (1.0 + e_norm) + e_norm * np.outer(d1, d1)
    b_ww = float(np.sum(terms ** 2))
    lam = float(getattr(critic, "lam", 0.0))
    if lam:
        b_ww = (np.sqrt(b_ww) + lam) ** 2
    h = np.max(np.abs(eT[:, None] * Gr), axis=0)
    b_wg = 4.0 * float(np.sum(h ** 2)) * _generator_norm_sq(family)
    return b_ww, b_wg


# -- inner problem ---------------------------------------------------------
def optimize_inner(obj: Objective, gamma, w0=None, maximize: bool = True,
                   max_iter: int = 500, tol: float = 1e-13) -> tuple[np.ndarray, float]:
    """Damped Newton on w -> f(gamma, w) at fixed gamma.

    Intended for the concave (DV, Renyi a > 1) and convex (Renyi a < 1)
    inner problems.  Returns ``(w, value)``.
    """
    sign = 1.0 if maximize else -1.0
    w = np.array(obj.critic.w if w0 is None else w0, dtype=float)
    val = sign * obj.value(gamma, w)
    for _ in range(max_iter):
        g = sign * obj.grad_w(gamma, w)
        if np.max(np.abs(g)) < tol:
            break
        H = sign * obj.hessian_ww(gamma, w)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        if step @ g <= 0:
            step = g
        t = 1.0
        while t > 1e-12:
            cand = w + t * step
            cval = sign * obj.value(gamma, cand)
            if cval >= val:
                break
            t *= 0.5
        else:
            break
        improvement = cval - val
        w, val = cand, cval
        if improvement < 1e-16 and np.max(np.abs(g)) < 1e-8:
            break
    return w, sign * val
