"""Time-averaged channels and exact partial derivatives of Tr[O omega].

Both channels are diagonal "kernels" in the eigenbasis of their generator:

    Phi_theta(X)_{mn} = X_{mn} * hhat(lam_m - lam_n)    (tent-averaged, G eigenbasis)
    Psi_phi(X)_{mn}   = X_{mn} * k(lam_m - lam_n)       (uniform on [0, 1], H eigenbasis)

where hhat is the Fourier transform of the high-peak tent density and
k(D) = (1 - exp(-iD)) / (iD).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, special

from . import linalg
from .linalg import HermitianEig
from .model import HamiltonianFamily, build_generator, evolution_unitary

# tail mass beyond this cutoff is below 1e-16
_TAIL_CUTOFF = 13.0
_ASYMPTOTIC_GAP = 1e6


def tent_density(t):
    """High-peak tent density (2/pi) ln|coth(pi t / 2)|.

    Accepts scalars or arrays; ``t == 0`` is the logarithmic singularity
    and is rejected.
    """
    t = np.abs(np.asarray(t, dtype=float))
    if np.any(t == 0):
        raise ValueError("the tent density is singular at t = 0")
    x = np.pi * t
    # ln coth(x/2) = ln(1 + e^-x) - ln(1 - e^-x), stable for all x > 0
    out = (2.0 / np.pi) * (np.log1p(np.exp(-x)) - np.log(-np.expm1(-x)))
    return out if out.ndim else float(out)


def _legendre_chi2(y):
    """sum over odd k of y^k / k^2."""
    y = np.asarray(y, dtype=float)
    return special.spence(1.0 - y) - 0.25 * special.spence(1.0 - y * y)


def tent_abs_cdf(t):
    """P(|T| <= t) for T drawn from the tent density, t >= 0."""
    t = np.asarray(t, dtype=float)
    return 1.0 - (8.0 / np.pi ** 2) * _legendre_chi2(np.exp(-np.pi * t))


@dataclass(frozen=True)
class TentSampler:
    """Tabulated CDF of the tent density on [0, t_max] for inverse-CDF draws.

    ``cdf`` is the full (two-sided) CDF at the grid points, so
    ``cdf[0] == 0.5``.  Draws pick |t| by inverting the one-sided table
    and attach a fair-coin sign.
    """

    grid: np.ndarray
    cdf: np.ndarray
    t_max: float

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        abs_cdf = 2.0 * self.cdf - 1.0
        t = np.interp(u * abs_cdf[-1], abs_cdf, self.grid)
        out = sign * t
        return out if np.ndim(out) else float(out)

    def cdf_at(self, t):
        """Interpolated two-sided CDF."""
        t = np.asarray(t, dtype=float)
        half = np.interp(np.abs(t), self.grid, self.cdf) - 0.5
        return 0.5 + np.sign(t) * half


def build_tent_sampler(resolution: int = 20001, t_max: float = 12.0) -> TentSampler:
    if resolution < 10_000:
        raise ValueError("resolution must be at least 1e4 grid points")
    if t_max < 10:
        raise ValueError("t_max must be at least 10")
    # log spacing resolves the integrable singularity at the origin
    grid = np.concatenate([[0.0], np.logspace(-12, np.log10(t_max), resolution - 1)])
    cdf = 0.5 + 0.5 * tent_abs_cdf(grid)
    cdf[0] = 0.5
    cdf = np.maximum.accumulate(cdf)
    return TentSampler(grid, cdf, float(t_max))


@lru_cache(maxsize=None)
def default_tent_sampler() -> TentSampler:
    return build_tent_sampler()


def sample_tent(sampler: TentSampler, rng: np.random.Generator, size=None):
    return sampler.sample(rng, size)


def _hhat_quad(gap: float, epsabs: float = 1e-11) -> float:
    gap = abs(gap)
    if gap == 0:
        return 1.0
    if gap > _ASYMPTOTIC_GAP:
        # only the log singularity at t = 0 survives: hhat ~ 2 / gap, with an
        # exponentially small remainder
        return 2.0 / gap
    # [0, a] holds the log singularity and at most one period (QAGS never
    # touches the endpoint); the rest uses the oscillatory-weight rule.
    a = min(1.0, 2.0 * np.pi / gap)
    head, _ = integrate.quad(lambda t: tent_density(t) * np.cos(gap * t), 0.0, a,
                             limit=2000, epsabs=epsabs, epsrel=0.0)
    tail, _ = integrate.quad(tent_density, a, _TAIL_CUTOFF, weight="cos", wvar=gap,
                             limit=2000, epsabs=epsabs, epsrel=0.0)
    return 2.0 * (head + tail)


@lru_cache(maxsize=65536)
def _hhat_cached(key: float) -> float:
    return _hhat_quad(key)


def tent_spectral_weight(gap: float) -> float:
    """hhat(gap) = integral of p(t) cos(gap t) dt, by adaptive quadrature."""
    if gap == 0:
        return 1.0
    # gaps of degenerate spectra are only zero to roundoff; the key rounding
    # keeps those on one cache entry
    return _hhat_cached(round(abs(float(gap)), 12))


def psi_kernel(gap):
    """k(D) = (1 - exp(-iD)) / (iD), k(0) = 1."""
    gap = np.asarray(gap, dtype=float)
    small = np.abs(gap) < 1e-8
    safe = np.where(small, 1.0, gap)
    k = (1.0 - np.exp(-1j * safe)) / (1j * safe)
    return np.where(small, 1.0 - 0.5j * gap, k)


def _gap_matrix(eigenvalues: np.ndarray) -> np.ndarray:
    return eigenvalues[:, None] - eigenvalues[None, :]


def phi_kernel(eig: HermitianEig) -> np.ndarray:
    gaps = _gap_matrix(eig.eigenvalues)
    keys, inverse = np.unique(np.round(np.abs(gaps), 12), return_inverse=True)
    vals = np.array([tent_spectral_weight(k) for k in keys])
    return vals[inverse].reshape(gaps.shape)


def _apply_kernel(X, eig: HermitianEig, kernel: np.ndarray) -> np.ndarray:
    V = eig.eigenvectors
    Xt = linalg.dagger(V) @ np.asarray(X, dtype=np.complex128) @ V
    return V @ (Xt * kernel) @ linalg.dagger(V)


def phi_channel_exact(X, G, eig: HermitianEig | None = None) -> np.ndarray:
    """Tent-averaged Heisenberg evolution of X under G."""
    eig = eig or linalg.hermitian_eigendecompose(G)
    return _apply_kernel(X, eig, phi_kernel(eig))


def psi_channel_exact(X, H, eig: HermitianEig | None = None) -> np.ndarray:
    """Unit-interval-averaged evolution exp(-iHt) X exp(iHt)."""
    eig = eig or linalg.hermitian_eigendecompose(H)
    return _apply_kernel(X, eig, psi_kernel(_gap_matrix(eig.eigenvalues)))


@dataclass(frozen=True)
class Observable:
    """O = sum_z g(z) Lambda_z for a payoff table g over the POVM alphabet."""

    payoff: np.ndarray
    povm: "object"

    def __post_init__(self):
        g = np.asarray(self.payoff, dtype=float)
        if g.shape != (self.povm.size,):
            raise ValueError(f"payoff has shape {g.shape}, POVM has {self.povm.size} outcomes")
        object.__setattr__(self, "payoff", g)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.povm.observable(self.payoff)

    @property
    def norm(self) -> float:
        """||g||_inf, an upper bound on the spectral norm of O."""
        return float(np.max(np.abs(self.payoff)))


class ExactModel:
    """Dense snapshot of the model at one parameter point.

    Holds the spectral data, states and channel images needed by every
    exact derivative and by the shot-level emulators.
    """

    def __init__(self, family: HamiltonianFamily, gamma):
        self.family = family
        self.gamma = np.array(gamma, dtype=float)
        self.theta, self.phi = family.split(self.gamma)
        G = build_generator(family, self.theta, "G")
        self.G = G
        self.G_eig = linalg.hermitian_eigendecompose(G)
        lam = self.G_eig.eigenvalues
        w = np.exp(-(lam - lam[0]))
        self.rho_spectrum = w / w.sum()
        V = self.G_eig.eigenvectors
        self.rho = (V * self.rho_spectrum) @ linalg.dagger(V)
        if family.K:
            self.H = build_generator(family, self.phi, "H")
            self.H_eig = linalg.hermitian_eigendecompose(self.H)
            self.U = evolution_unitary(self.H)
        else:
            self.H = np.zeros_like(G)
            self.H_eig = None
            self.U = np.eye(family.dim, dtype=np.complex128)
        omega = self.U @ self.rho @ linalg.dagger(self.U)
        self.omega = 0.5 * (omega + linalg.dagger(omega))

    @cached_property
    def g_expect(self) -> np.ndarray:
        """<G_j>_rho for every j."""
        return np.array([linalg.expectation(Gj, self.rho) for Gj in self.family.g_mats])

    @cached_property
    def phi_G(self) -> np.ndarray:
        kern = phi_kernel(self.G_eig)
        return np.array([_apply_kernel(Gj, self.G_eig, kern) for Gj in self.family.g_mats])

    @cached_property
    def psi_H(self) -> np.ndarray:
        if not self.family.K:
            return np.zeros((0, self.family.dim, self.family.dim), dtype=np.complex128)
        kern = psi_kernel(_gap_matrix(self.H_eig.eigenvalues))
        return np.array([_apply_kernel(Hk, self.H_eig, kern) for Hk in self.family.h_mats])

    @cached_property
    def derivative_operators(self) -> np.ndarray:
        """D_m with d/dgamma_m Tr[O omega] = Tr[O D_m] for every O.

        Both derivative formulas are linear in O, so they can be folded into
        one operator per parameter.
        """
        U, Ud = self.U, linalg.dagger(self.U)
        ops = []
        for j in range(self.family.J):
            anti = self.phi_G[j] @ self.rho + self.rho @ self.phi_G[j]
            ops.append(-0.5 * (U @ anti @ Ud) + self.g_expect[j] * self.omega)
        for k in range(self.family.K):
            P = self.psi_H[k]
            ops.append(-1j * (P @ self.omega - self.omega @ P))
        return np.array(ops).reshape(self.family.M, self.family.dim, self.family.dim)

    def born_jacobian(self, povm) -> np.ndarray:
        """dq(z)/dgamma_m as a (|Z|, M) array."""
        return np.real(np.einsum("zij,mji->zm", povm.effects, self.derivative_operators))

    def expectation(self, O: np.ndarray, state: str = "omega") -> float:
        return linalg.expectation(O, self.omega if state == "omega" else self.rho)


def _as_model(family, gamma, model) -> ExactModel:
    return model if model is not None else ExactModel(family, gamma)


def anticommutator_term(obs: Observable, family, gamma, j: int, model: ExactModel | None = None) -> float:
    """mu = -1/2 <{e^{iH} O e^{-iH}, Phi_theta(G_j)}>_rho."""
    m = _as_model(family, gamma, model)
    if not 0 <= j < m.family.J:
        raise IndexError(f"theta index {j} out of range for J={m.family.J}")
    O_heis = linalg.dagger(m.U) @ obs.matrix @ m.U
    anti = O_heis @ m.phi_G[j] + m.phi_G[j] @ O_heis
    return -0.5 * linalg.expectation(anti, m.rho)


def commutator_term(obs: Observable, family, gamma, k: int, model: ExactModel | None = None) -> float:
    """nu = -(i/2) <[O, Psi_phi(H_k)]>_omega; half of the phi-derivative."""
    return 0.5 * exact_partial_phi(obs, family, gamma, k, model=model)


def exact_partial_theta(obs: Observable, family, gamma, j: int, model: ExactModel | None = None) -> float:
    """d/dtheta_j Tr[O omega] from the anticommutator formula."""
    m = _as_model(family, gamma, model)
    mu = anticommutator_term(obs, family, gamma, j, model=m)
    return mu + m.expectation(obs.matrix) * m.g_expect[j]


def exact_partial_phi(obs: Observable, family, gamma, k: int, model: ExactModel | None = None) -> float:
    """d/dphi_k Tr[O omega] = -i <[O, Psi_phi(H_k)]>_omega."""
    m = _as_model(family, gamma, model)
    if not 0 <= k < m.family.K:
        raise IndexError(f"phi index {k} out of range for K={m.family.K}")
    O = obs.matrix
    P = m.psi_H[k]
    val = -1j * np.trace((O @ P - P @ O) @ m.omega)
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"phi derivative has imaginary residue {val.imag:.3e}")
    return float(val.real)
