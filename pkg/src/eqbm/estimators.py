"""Shot-level emulation of the gradient-estimator circuits.

Each shot of the two interferometric estimators draws an evolution time,
builds the unitary W(t) that the controlled gate implements, computes the
exact joint distribution of (control bit, data outcome) and samples from
it.  Shots are processed in fixed-size blocks; block ``b`` draws from the
stream ``SeedSequence(entropy, spawn_key + (b,))``, so results depend only
on the seed and never on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import linalg
from .channels import ExactModel, Observable, default_tent_sampler
from .model import Povm

BLOCK_ELEMENTS = 1 << 18

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
S_GATE = np.diag([1.0, 1j]).astype(np.complex128)

# Global signs: for the standard real-part Hadamard test
# E[(-1)^r g(z)] = +1/2 <{O', W}>, the negative of mu; the imaginary-part
# test with S^dag gives E[(-1)^s g(z)] = -(i/2) <[O, W]> = nu directly.
ALG1_SIGN = -1.0
ALG2_SIGN = 1.0


class ShotPlanError(ValueError):
    pass


def shots_required(epsilon: float, delta: float, g_norm: float, which: str) -> int:
    """Hoeffding shot count for the given estimator.

    ``alg1``: ||g||^2 / (2 eps^2) ln(2/delta); ``alg2`` and ``product``:
    2 ||g||^2 / eps^2 ln(2/delta).
    """
    if epsilon <= 0 or not 0 < delta < 1 or g_norm <= 0:
        raise ShotPlanError("need epsilon > 0, 0 < delta < 1 and g_norm > 0")
    log_term = math.log(2.0 / delta)
    if which == "alg1":
        bound = g_norm ** 2 / (2 * epsilon ** 2) * log_term
    elif which in ("alg2", "product"):
        bound = 2 * g_norm ** 2 / epsilon ** 2 * log_term
    else:
        raise ValueError(f"unknown estimator kind {which!r}")
    # guard against ceil() of a value that is an integer up to roundoff
    return max(1, math.ceil(bound - 1e-9))


@dataclass(frozen=True)
class ShotPlan:
    epsilon: float
    delta: float
    n: int

    @classmethod
    def for_estimator(cls, epsilon: float, delta: float, g_norm: float, which: str) -> "ShotPlan":
        return cls(epsilon, delta, shots_required(epsilon, delta, g_norm, which))

    def check(self, g_norm: float, which: str) -> None:
        need = shots_required(self.epsilon, self.delta, max(g_norm, 1e-300), which)
        if self.n < need:
            raise ShotPlanError(f"{which} plan has {self.n} shots but the bound needs {need}")


@dataclass(frozen=True)
class EstimatorOutcome:
    mean: float
    shots: int
    per_shot_values: np.ndarray | None = None


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def substream(seed, *key: int) -> np.random.SeedSequence:
    """Counter-derived child stream; stateless, unlike ``SeedSequence.spawn``."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key))


def block_size(dim: int) -> int:
    return max(16, BLOCK_ELEMENTS // (dim * dim))


def run_blocks(n: int, seed, fn: Callable[[np.random.Generator, int], np.ndarray],
               dim: int = 2, threads: int = 1) -> np.ndarray:
    """Evaluate ``fn(rng, count)`` over ``n`` shots in seed-indexed blocks."""
    size = block_size(dim)
    counts = [min(size, n - start) for start in range(0, n, size)]

    def one(b):
        return fn(np.random.default_rng(substream(seed, b)), counts[b])

    if threads > 1 and len(counts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(counts))))
    else:
        parts = [one(b) for b in range(len(counts))]
    return np.concatenate(parts) if parts else np.zeros(0)


def hadamard_test_joint(kind: str, W, state, post_unitary, povm: Povm) -> np.ndarray:
    """Exact joint distribution p(r, z) of the Hadamard-test circuit.

    Simulated gate by gate on control (most significant) x data:
    H on control, controlled-W, S^dag on control (``imag_part`` only),
    H on control, ``post_unitary`` on data, then Z-basis measurement of
    the control and the POVM on the data.  Returns shape (2, |Z|).
    """
    if kind not in ("real_part", "imag_part"):
        raise ValueError(f"kind must be real_part or imag_part, got {kind!r}")
    rho = np.asarray(getattr(state, "matrix", state), dtype=np.complex128)
    W = np.asarray(W, dtype=np.complex128)
    V = np.asarray(post_unitary, dtype=np.complex128)
    d = rho.shape[0]
    if W.shape != (d, d) or V.shape != (d, d) or povm.dim != d:
        raise ValueError("dimension mismatch between state, W, post_unitary and POVM")
    I = np.eye(d, dtype=np.complex128)
    P0 = np.diag([1.0, 0.0]).astype(np.complex128)
    P1 = np.diag([0.0, 1.0]).astype(np.complex128)

    gates = [np.kron(HADAMARD, I), np.kron(P0, I) + np.kron(P1, W)]
    if kind == "imag_part":
        gates.append(np.kron(linalg.dagger(S_GATE), I))
    gates += [np.kron(HADAMARD, I), np.kron(np.eye(2), V)]

    total = np.kron(P0, rho)
    for g in gates:
        total = g @ total @ linalg.dagger(g)
    blocks = total.reshape(2, d, 2, d)
    out = np.empty((2, povm.size))
    for r in range(2):
        out[r] = np.real(np.einsum("zij,ji->z", povm.effects, blocks[r, :, r, :]))
    return np.clip(out, 0.0, None)


def _joint_batch(kind: str, W: np.ndarray, rho: np.ndarray, effects: np.ndarray) -> np.ndarray:
    """Batched Kraus-form equivalent of ``hadamard_test_joint``.

    ``W`` has shape (B, d, d); ``effects`` are already conjugated by the
    post-measurement unitary.  Returns (B, 2, |Z|).
    """
    d = rho.shape[0]
    I = np.eye(d)
    c = 1.0 if kind == "real_part" else -1j
    out = []
    for sgn in (1.0, -1.0):
        K = 0.5 * (I + sgn * c * W)
        rhoK = K @ rho @ np.conj(np.swapaxes(K, -1, -2))
        out.append(np.real(np.einsum("zij,bji->bz", effects, rhoK)))
    return np.clip(np.stack(out, axis=1), 0.0, None)


def _sample_joint(probs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample one (r, z) per row of a (B, 2, |Z|) probability array."""
    B = probs.shape[0]
    flat = probs.reshape(B, -1)
    cum = np.cumsum(flat, axis=1)
    u = rng.random(B) * cum[:, -1]
    idx = np.minimum((cum < u[:, None]).sum(axis=1), flat.shape[1] - 1)
    nz = probs.shape[2]
    return idx // nz, idx % nz


def _finish(values: np.ndarray, keep: bool) -> EstimatorOutcome:
    return EstimatorOutcome(float(values.mean()), int(values.size), values if keep else None)


def estimate_anticommutator_term(obs: Observable, model: ExactModel, j: int, plan: ShotPlan, seed,
                                 threads: int = 1, keep_values: bool = False,
                                 check_plan: bool = True) -> EstimatorOutcome:
    """Shot estimate of mu = -1/2 <{e^{iH} O e^{-iH}, Phi_theta(G_j)}>_rho."""
    if check_plan:
        plan.check(obs.norm, "alg1")
    if not 0 <= j < model.family.J:
        raise IndexError(f"theta index {j} out of range")
    sampler = default_tent_sampler()
    eig = model.G_eig
    V = eig.eigenvectors
    lam = eig.eigenvalues
    # work in the eigenbasis of G(theta): rho is diagonal and W(t) is a phase
    # twist of G_j there
    Gj = linalg.dagger(V) @ model.family.g_mats[j] @ V
    rho = np.diag(model.rho_spectrum).astype(np.complex128)
    UV = model.U @ V
    effects = np.einsum("ji,zjk,kl->zil", np.conj(UV), obs.povm.effects, UV)
    gaps = lam[:, None] - lam[None, :]
    g = obs.payoff

    def block(rng, count):
        t = sampler.sample(rng, count)
        W = Gj[None] * np.exp(-1j * t[:, None, None] * gaps[None])
        r, z = _sample_joint(_joint_batch("real_part", W, rho, effects), rng)
        return ALG1_SIGN * np.where(r == 0, 1.0, -1.0) * g[z]

    return _finish(run_blocks(plan.n, seed, block, model.family.dim, threads), keep_values)


def estimate_commutator_term(obs: Observable, model: ExactModel, k: int, plan: ShotPlan, seed,
                             threads: int = 1, keep_values: bool = False,
                             check_plan: bool = True) -> EstimatorOutcome:
    """Shot estimate of nu = -(i/2) <[O, Psi_phi(H_k)]>_omega."""
    if check_plan:
        plan.check(obs.norm, "alg2")
    if not 0 <= k < model.family.K:
        raise IndexError(f"phi index {k} out of range")
    eig = model.H_eig
    V = eig.eigenvectors
    lam = eig.eigenvalues
    Hk = linalg.dagger(V) @ model.family.h_mats[k] @ V
    omega = linalg.dagger(V) @ model.omega @ V
    effects = np.einsum("ji,zjk,kl->zil", np.conj(V), obs.povm.effects, V)
    gaps = lam[:, None] - lam[None, :]
    g = obs.payoff

    def block(rng, count):
        t = rng.random(count)
        W = Hk[None] * np.exp(-1j * t[:, None, None] * gaps[None])
        s, z = _sample_joint(_joint_batch("imag_part", W, omega, effects), rng)
        return ALG2_SIGN * np.where(s == 0, 1.0, -1.0) * g[z]

    return _finish(run_blocks(plan.n, seed, block, model.family.dim, threads), keep_values)


def estimate_product_term(obs: Observable, model: ExactModel, j: int, n: int, seed,
                          threads: int = 1, keep_values: bool = False) -> EstimatorOutcome:
    """Shot estimate of <O>_omega <G_j>_rho from the product state omega x rho.

    G_j is a Pauli string, so its projective measurement yields +-1 with
    P(+1) = (1 + <G_j>_rho) / 2.
    """
    if n < 1:
        raise ShotPlanError("n must be positive")
    q = np.clip(np.real(np.einsum("zii->z", np.einsum("zij,jk->zik", obs.povm.effects, model.omega))), 0, None)
    q = q / q.sum()
    p_plus = 0.5 * (1.0 + model.g_expect[j])
    g = obs.payoff

    def block(rng, count):
        z = rng.choice(q.size, size=count, p=q)
        lam = np.where(rng.random(count) < p_plus, 1.0, -1.0)
        return g[z] * lam

    return _finish(run_blocks(n, seed, block, 2, threads), keep_values)


def estimate_expectation(payoff: np.ndarray, q: np.ndarray, n: int, seed, threads: int = 1) -> EstimatorOutcome:
    """Sample mean of payoff(z) with z ~ q (plain Born-rule sampling)."""
    q = np.clip(np.asarray(q, float), 0, None)
    q = q / q.sum()
    payoff = np.asarray(payoff, float)

    def block(rng, count):
        return payoff[rng.choice(q.size, size=count, p=q)]

    return _finish(run_blocks(n, seed, block, 2, threads), False)
