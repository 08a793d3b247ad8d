"""Evolved quantum Boltzmann machine family and its Born distribution.

The model is

    rho(theta)        = exp(-G(theta)) / Tr exp(-G(theta)),   G = sum_j theta_j G_j
    omega(theta, phi) = exp(-i H(phi)) rho(theta) exp(i H(phi)), H = sum_k phi_k H_k
    q(z)              = Tr[Lambda_z omega]

with every G_j and H_k a Pauli string (Hermitian and unitary).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Sequence

import numpy as np

from . import linalg
from .linalg import TOL, LinalgError

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis; letter 0 acts on the most significant qubit."""

    letters: str

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or any(c not in PAULI for c in letters):
            raise ModelError(f"invalid Pauli string {self.letters!r}")
        if len(letters) > 10:
            raise ModelError("at most 10 qubits are supported")
        object.__setattr__(self, "letters", letters)

    @property
    def num_qubits(self) -> int:
        return len(self.letters)

    def dense(self) -> np.ndarray:
        return reduce(np.kron, (PAULI[c] for c in self.letters))


@dataclass(frozen=True)
class HamiltonianFamily:
    """Generators {G_j} (thermal part) and {H_k} (time evolution part)."""

    g_terms: tuple[PauliString, ...]
    h_terms: tuple[PauliString, ...] = ()

    def __post_init__(self):
        g = tuple(t if isinstance(t, PauliString) else PauliString(t) for t in self.g_terms)
        h = tuple(t if isinstance(t, PauliString) else PauliString(t) for t in self.h_terms)
        if not g:
            raise ModelError("at least one thermal generator G_j is required")
        sizes = {t.num_qubits for t in g + h}
        if len(sizes) != 1:
            raise ModelError(f"all Pauli terms must act on the same number of qubits, got {sorted(sizes)}")
        object.__setattr__(self, "g_terms", g)
        object.__setattr__(self, "h_terms", h)

    @classmethod
    def from_letters(cls, g_terms: Sequence[str], h_terms: Sequence[str] = ()) -> "HamiltonianFamily":
        return cls(tuple(PauliString(s) for s in g_terms), tuple(PauliString(s) for s in h_terms))

    @property
    def num_qubits(self) -> int:
        return self.g_terms[0].num_qubits

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    @property
    def J(self) -> int:
        return len(self.g_terms)

    @property
    def K(self) -> int:
        return len(self.h_terms)

    @property
    def M(self) -> int:
        return self.J + self.K

    @cached_property
    def g_mats(self) -> np.ndarray:
        return np.array([t.dense() for t in self.g_terms])

    @cached_property
    def h_mats(self) -> np.ndarray:
        if not self.h_terms:
            return np.zeros((0, self.dim, self.dim), dtype=np.complex128)
        return np.array([t.dense() for t in self.h_terms])

    def split(self, gamma) -> tuple[np.ndarray, np.ndarray]:
        """Split a flat parameter vector into (theta, phi)."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.M,):
            raise ModelError(f"expected {self.M} parameters (J={self.J}, K={self.K}), got shape {gamma.shape}")
        return gamma[: self.J], gamma[self.J:]


@dataclass(frozen=True)
class ParamVector:
    theta: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.theta, float), np.asarray(self.phi, float)])

    @classmethod
    def from_flat(cls, family: HamiltonianFamily, gamma) -> "ParamVector":
        theta, phi = family.split(gamma)
        return cls(theta.copy(), phi.copy())


def build_generator(family: HamiltonianFamily, coeffs, which: str = "G") -> np.ndarray:
    """Return sum_j c_j P_j over the G or H terms of ``family``."""
    mats = family.g_mats if which == "G" else family.h_mats
    if which not in ("G", "H"):
        raise ModelError(f"which must be 'G' or 'H', got {which!r}")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(mats),):
        raise ModelError(f"{which} has {len(mats)} terms but {coeffs.shape} coefficients were given")
    if len(mats) == 0:
        return np.zeros((family.dim, family.dim), dtype=np.complex128)
    return np.tensordot(coeffs, mats, axes=1)


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = linalg.check_hermitian(self.matrix)
        tr = np.trace(m).real
        if abs(tr - 1) > TOL:
            raise ModelError(f"density matrix has trace {tr!r}")
        lo = np.linalg.eigvalsh(0.5 * (m + linalg.dagger(m)))[0]
        if lo < -TOL:
            raise ModelError(f"density matrix has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def thermal_state(G) -> DensityMatrix:
    """Gibbs state exp(-G)/Z, evaluated as a softmax over the spectrum."""
    eig = linalg.hermitian_eigendecompose(G)
    lam = eig.eigenvalues
    weights = np.exp(-(lam - lam[0]))
    weights /= weights.sum()
    return DensityMatrix(linalg.matrix_function_hermitian(G, lambda _: weights, eig=eig))


def evolution_unitary(H, t: float = 1.0) -> np.ndarray:
    """exp(-i H t)."""
    return linalg.expm_hermitian(H, -1j * t)


def evolved_state(rho: DensityMatrix, H) -> DensityMatrix:
    U = evolution_unitary(H)
    m = linalg.conjugate(U, rho.matrix)
    return DensityMatrix(0.5 * (m + linalg.dagger(m)))


@dataclass(frozen=True)
class Povm:
    """Effects Lambda_z stacked along axis 0, with outcome labels."""

    effects: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        eff = np.asarray(self.effects, dtype=np.complex128)
        if eff.ndim != 3 or eff.shape[1] != eff.shape[2]:
            raise ModelError(f"POVM effects must have shape (n, d, d), got {eff.shape}")
        labels = tuple(self.labels) if self.labels else tuple(range(eff.shape[0]))
        if len(labels) != eff.shape[0] or len(set(labels)) != len(labels):
            raise ModelError("POVM labels must be unique and one per effect")
        object.__setattr__(self, "effects", eff)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def size(self) -> int:
        return self.effects.shape[0]

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelError(f"unknown outcome label {label!r}") from None

    @cached_property
    def is_diagonal(self) -> bool:
        d = self.dim
        off = self.effects * (1 - np.eye(d))
        return bool(np.max(np.abs(off)) == 0)

    def observable(self, payoff) -> np.ndarray:
        """sum_z g(z) Lambda_z."""
        return np.tensordot(np.asarray(payoff, dtype=float), self.effects, axes=1)


def validate_povm(effects, labels=()) -> Povm:
    """Check positivity and completeness, naming the first offending outcome."""
    povm = Povm(effects, labels)
    for lab, e in zip(povm.labels, povm.effects):
        res = linalg.hermitian_residual(e)
        if res > TOL:
            raise ModelError(f"effect for outcome {lab!r} is not Hermitian (residual {res:.3e})")
        lo = np.linalg.eigvalsh(0.5 * (e + linalg.dagger(e)))[0]
        if lo < -TOL:
            raise ModelError(f"effect for outcome {lab!r} is not PSD (min eigenvalue {lo:.3e})")
    total = povm.effects.sum(axis=0)
    err = float(np.max(np.abs(total - np.eye(povm.dim))))
    if err > TOL:
        raise ModelError(f"effects do not sum to identity (max deviation {err:.3e})")
    return povm


def computational_povm(num_qubits: int) -> Povm:
    d = 2 ** num_qubits
    effects = np.zeros((d, d, d), dtype=np.complex128)
    effects[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    return Povm(effects, tuple(range(d)))


@dataclass(frozen=True)
class Distribution:
    probabilities: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ModelError("distribution must be a non-empty vector")
        if np.any(p < -TOL) or abs(p.sum() - 1) > TOL:
            raise ModelError(f"not a probability vector (min {p.min():.3e}, sum {p.sum()!r})")
        p = np.clip(p, 0.0, None)
        labels = tuple(self.labels) if self.labels else tuple(range(p.size))
        if len(labels) != p.size:
            raise ModelError("one label per probability is required")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", labels)


def born_probabilities(omega: np.ndarray, povm: Povm) -> np.ndarray:
    """Raw q(z) = Re Tr[Lambda_z omega] without distribution validation."""
    if omega.shape[0] != povm.dim:
        raise ModelError(f"state dimension {omega.shape[0]} does not match POVM dimension {povm.dim}")
    if povm.is_diagonal:
        diag = np.real(np.diagonal(omega))
        return np.real(np.einsum("zii,i->z", povm.effects, diag))
    return np.real(np.einsum("zij,ji->z", povm.effects, omega))


def born_distribution(omega: DensityMatrix, povm: Povm) -> Distribution:
    q = np.clip(born_probabilities(omega.matrix, povm), 0.0, None)
    return Distribution(q / q.sum(), povm.labels)


def sample_outcomes(q: Distribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. outcome indices from ``q``."""
    if count < 1:
        raise ModelError("count must be positive")
    return rng.choice(q.probabilities.size, size=count, p=q.probabilities)


def relative_entropy(p, q) -> float:
    """D(p||q) in nats; +inf when q vanishes on the support of p."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    supp = p > 0
    if np.any(q[supp] <= 0):
        return float("inf")
    return float(np.sum(p[supp] * np.log(p[supp] / q[supp])))


def tanh_ratio(r: float) -> float:
    """tanh(r)/r with its removable singularity at 0."""
    if r < 1e-6:
        return 1.0 - r * r / 3.0
    return float(np.tanh(r) / r)


def single_qubit_closed_form(theta_x: float, theta_z: float) -> tuple[float, float, float, float]:
    """Bloch vector, q(0) and D(point mass on 0 || q) for G = theta_x X + theta_z Z.

    Returns ``(r_x, r_z, q0, rel_ent)``.
    """
    r = float(np.hypot(theta_x, theta_z))
    ratio = tanh_ratio(r)
    r_x = -ratio * theta_x
    r_z = -ratio * theta_z
    q0 = 0.5 * (1.0 - ratio * theta_z)
    return r_x, r_z, q0, float(-np.log(q0))


def model_state(family: HamiltonianFamily, gamma) -> tuple[DensityMatrix, DensityMatrix]:
    """(rho_theta, omega_theta_phi) for a flat parameter vector."""
    theta, phi = family.split(gamma)
    rho = thermal_state(build_generator(family, theta, "G"))
    if family.K == 0:
        return rho, rho
    return rho, evolved_state(rho, build_generator(family, phi, "H"))
