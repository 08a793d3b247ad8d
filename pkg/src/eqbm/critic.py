"""Critic families T_w over a finite outcome alphabet.

Critics are immutable; ``with_params`` returns a copy at a new ``w``.
All evaluation is vectorised over the alphabet: ``values()`` has shape
(|Z|,), ``grads()`` (|Z|, L) and ``hessians()`` (|Z|, L, L).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import Observable

CLAMP = 30.0
HESSIAN_STEP = 1e-4


class ClampCounter:
    """Counts critic outputs clipped to +-CLAMP before exponentiation."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int) -> None:
        if n:
            with self._lock:
                self.count += n

    def reset(self) -> int:
        with self._lock:
            n, self.count = self.count, 0
        return n


clamp_events = ClampCounter()


def exp_clamped(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    clamp_events.add(int(np.count_nonzero(np.abs(T) > CLAMP)))
    return np.exp(np.clip(T, -CLAMP, CLAMP))


def one_hot_features(size: int) -> np.ndarray:
    return np.eye(size)


class _CriticBase:
    w: np.ndarray

    @property
    def num_params(self) -> int:
        return int(self.w.size)

    @property
    def alphabet_size(self) -> int:
        raise NotImplementedError

    def with_params(self, w):
        w = np.array(w, dtype=float)
        if w.shape != self.w.shape:
            raise ValueError(f"expected {self.w.shape} parameters, got {w.shape}")
        return replace(self, w=w)

    def _index(self, z: int) -> int:
        if not isinstance(z, (int, np.integer)) or not 0 <= z < self.alphabet_size:
            raise KeyError(f"unknown outcome {z!r}")
        return int(z)


@dataclass(frozen=True, eq=False)
class LinearCritic(_CriticBase):
    """T_w(z) = w . features[z], optionally with a ridge term lam/2 ||w||^2."""

    features: np.ndarray
    w: np.ndarray = None
    lam: float = 0.0

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        w = np.zeros(feats.shape[1]) if self.w is None else np.asarray(self.w, dtype=float)
        if w.shape != (feats.shape[1],):
            raise ValueError(f"w has shape {w.shape}, features need {feats.shape[1]}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "w", w)

    @classmethod
    def tabular(cls, size: int, w=None, lam: float = 0.0) -> "LinearCritic":
        return cls(one_hot_features(size), w, lam)

    @property
    def alphabet_size(self) -> int:
        return self.features.shape[0]

    def values(self) -> np.ndarray:
        return self.features @ self.w

    def grads(self) -> np.ndarray:
        return self.features.copy()

    def hessians(self, symmetrize: bool = True) -> np.ndarray:
        L = self.num_params
        return np.zeros((self.alphabet_size, L, L))


@dataclass(frozen=True, eq=False)
class MlpCritic(_CriticBase):
    """Fully connected tanh network with a scalar linear output.

    ``inputs[z]`` is the network input for outcome z (one-hot by default).
    Parameters are packed layer by layer as (weight matrix row-major, bias).
    """

    layer_sizes: tuple
    inputs: np.ndarray
    w: np.ndarray = None
    lam: float = field(default=0.0, init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("layer_sizes must run from the input width to a scalar output")
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if X.shape[1] != sizes[0]:
            raise ValueError(f"inputs have width {X.shape[1]}, first layer expects {sizes[0]}")
        n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
        w = np.zeros(n) if self.w is None else np.asarray(self.w, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"expected {n} parameters for layers {sizes}, got {w.shape}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "w", w)

    @classmethod
    def default(cls, alphabet_size: int, hidden=(16,), seed: int = 0, scale: float = 0.5) -> "MlpCritic":
        sizes = (alphabet_size, *hidden, 1)
        n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
        w = np.random.default_rng(seed).uniform(-scale, scale, n)
        return cls(sizes, one_hot_features(alphabet_size), w)

    @property
    def alphabet_size(self) -> int:
        return self.inputs.shape[0]

    def _layers(self, w=None):
        w = self.w if w is None else w
        out, pos = [], 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = w[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = w[pos:pos + o]
            pos += o
            out.append((W, b))
        return out

    def _forward(self, w=None):
        acts = [self.inputs]
        layers = self._layers(w)
        for idx, (W, b) in enumerate(layers):
            pre = acts[-1] @ W.T + b
            acts.append(pre if idx == len(layers) - 1 else np.tanh(pre))
        return layers, acts

    def values(self) -> np.ndarray:
        return self._forward()[1][-1][:, 0]

    def _grads(self, w=None) -> np.ndarray:
        layers, acts = self._forward(w)
        nz = self.alphabet_size
        delta = np.ones((nz, 1))
        blocks = []
        for idx in range(len(layers) - 1, -1, -1):
            W, _ = layers[idx]
            a_in = acts[idx]
            gW = delta[:, :, None] * a_in[:, None, :]
            blocks.append(np.concatenate([gW.reshape(nz, -1), delta], axis=1))
            if idx:
                delta = (delta @ W) * (1.0 - a_in ** 2)
        return np.concatenate(blocks[::-1], axis=1)

    def grads(self) -> np.ndarray:
        return self._grads()

    def hessians(self, symmetrize: bool = True) -> np.ndarray:
        """Central differences of the analytic gradient, step 1e-4."""
        L = self.num_params
        H = np.empty((self.alphabet_size, L, L))
        for m in range(L):
            e = np.zeros(L)
            e[m] = HESSIAN_STEP
            H[:, :, m] = (self._grads(self.w + e) - self._grads(self.w - e)) / (2 * HESSIAN_STEP)
        if symmetrize:
            H = 0.5 * (H + np.swapaxes(H, 1, 2))
        return H


Critic = LinearCritic | MlpCritic


def critic_value(critic, z: int) -> float:
    return float(critic.values()[critic._index(z)])


def critic_grad_w(critic, z: int) -> np.ndarray:
    return critic.grads()[critic._index(z)]


def critic_hessian_w(critic, z: int) -> np.ndarray:
    return critic.hessians()[critic._index(z)]


def observable_O_w(critic, povm) -> Observable:
    """O_w = sum_z exp(T_w(z)) Lambda_z."""
    return Observable(exp_clamped(critic.values()), povm)


def observable_P_wl(critic, povm, ell: int) -> Observable:
    """P_{w_l} = sum_z exp(T_w(z)) dT_w(z)/dw_l Lambda_z."""
    if not 0 <= ell < critic.num_params:
        raise IndexError(f"parameter index {ell} out of range for L={critic.num_params}")
    return Observable(exp_clamped(critic.values()) * critic.grads()[:, ell], povm)
