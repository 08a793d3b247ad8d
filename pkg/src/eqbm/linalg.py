"""Dense complex linear algebra for small Hilbert spaces.

Everything here is a pure function on numpy arrays.  Matrices are plain
``complex128`` ndarrays; the helpers below only add the validation that
the rest of the package relies on (Hermiticity, unitarity, the d <= 1024
dimension cap).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_DIM = 1024
TOL = 1e-10


class LinalgError(ValueError):
    """Raised when an operator violates a structural precondition."""


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a square complex128 array, enforcing the size cap."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise LinalgError(f"expected a non-empty square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise LinalgError(f"dimension {m.shape[0]} exceeds the cap of {MAX_DIM}")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def hermitian_residual(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - dagger(a))))


def check_hermitian(a, tol: float = TOL) -> np.ndarray:
    m = as_matrix(a)
    res = hermitian_residual(m)
    if res > tol:
        raise LinalgError(f"matrix is not Hermitian: max |A - A^dag| = {res:.3e}")
    return m


def check_unitary(u, tol: float = TOL) -> np.ndarray:
    m = as_matrix(u)
    res = float(np.max(np.abs(dagger(m) @ m - np.eye(m.shape[0]))))
    if res > tol:
        raise LinalgError(f"matrix is not unitary: max |U^dag U - I| = {res:.3e}")
    return m


@dataclass(frozen=True)
class HermitianEig:
    """Spectral data of a Hermitian matrix.

    ``eigenvalues`` are ascending; column ``k`` of ``eigenvectors`` belongs
    to ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ dagger(v)


def hermitian_eigendecompose(a) -> HermitianEig:
    m = check_hermitian(a)
    # symmetrize away the sub-tolerance skew part before LAPACK sees it
    m = 0.5 * (m + dagger(m))
    vals, vecs = np.linalg.eigh(m)
    return HermitianEig(vals, vecs)


def matrix_function_hermitian(a, scalar_map: Callable[[np.ndarray], np.ndarray],
                              eig: HermitianEig | None = None) -> np.ndarray:
    """Apply ``scalar_map`` to the spectrum of Hermitian ``a``.

    ``scalar_map`` receives the full eigenvalue vector and must be
    vectorised.  A precomputed ``eig`` skips the decomposition.
    """
    if eig is None:
        eig = hermitian_eigendecompose(a)
    v = eig.eigenvectors
    f = np.asarray(scalar_map(eig.eigenvalues), dtype=np.complex128)
    return (v * f) @ dagger(v)


def expm_hermitian(a, scale: complex = 1.0, eig: HermitianEig | None = None) -> np.ndarray:
    """``exp(scale * A)`` for Hermitian ``A``."""
    return matrix_function_hermitian(a, lambda lam: np.exp(scale * lam), eig=eig)


def conjugate(u, x, check: bool = True) -> np.ndarray:
    """``U X U^dag``."""
    um = check_unitary(u) if check else np.asarray(u, dtype=np.complex128)
    return um @ np.asarray(x, dtype=np.complex128) @ dagger(um)


def spectral_norm(a) -> float:
    m = np.asarray(a)
    if m.ndim == 0:
        return float(abs(m))
    return float(np.linalg.norm(m, ord=2))


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a), ord="fro"))


def trace(a) -> complex:
    return complex(np.trace(np.asarray(a)))


def expectation(op: np.ndarray, state: np.ndarray) -> float:
    """Real part of ``Tr[op state]`` for Hermitian ``op`` and ``state``."""
    # Tr[AB] = sum_ij A_ij B_ji, cheaper than forming the product
    return float(np.real(np.sum(op * state.T)))


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (z + dagger(z))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
