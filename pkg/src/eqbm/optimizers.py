"""Minimax optimizers over (gamma, w): descend in gamma, ascend in w.

Any object exposing ``value``, ``grad_gamma``, ``grad_w`` (and, for the
second-order methods, ``hessian_ww`` and ``hessian_wgamma``) as functions
of flat ``(gamma, w)`` vectors can be optimised; ``Objective`` is the
quantum one, the toys below are closed-form test problems.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
COND_LIMIT = 1e12
MAX_SHIFT = 1e-2


class DivergenceError(RuntimeError):
    def __init__(self, message: str, iteration: int, gamma: np.ndarray, w: np.ndarray):
        super().__init__(message)
        self.iteration = iteration
        self.gamma = gamma
        self.w = w


class RidgeSolveError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class Schedule:
    eta_gamma: float = 0.02
    eta_w: float = 0.2
    eta_w1: float = 0.2
    eta_w2: float = 0.05
    iterations: int = 1000
    ridge_shift: float = 1e-8
    gda_mode: str = "simultaneous"

    def __post_init__(self):
        if self.eta_gamma <= 0 or self.eta_w <= 0:
            raise ValueError("learning rates eta_gamma and eta_w must be positive")
        if self.eta_w1 < 0 or self.eta_w2 < 0 or self.ridge_shift < 0:
            raise ValueError("eta_w1, eta_w2 and ridge_shift must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.gda_mode not in ("simultaneous", "alternating"):
            raise ValueError(f"unknown gda_mode {self.gda_mode!r}")


@dataclass
class OptState:
    gamma: np.ndarray
    w: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    f_value: float
    grad_gamma_norm: float
    grad_w_norm: float
    wall_clock: float
    shots_cumulative: int
    rel_entropy: Optional[float] = None


@dataclass
class TraceRecord:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def solve_ridge(H, b, shift: float = 0.0, return_shift: bool = False):
    """Solve (H - shift I) x = b for a (negative-definite oriented) symmetric H.

    When the shifted matrix has condition number above 1e12 the shift is
    raised tenfold (starting from 1e-12 if it was zero) until it reaches
    1e-2; past that a ``RidgeSolveError`` carries the condition estimate.
    With ``return_shift`` the shift actually used is returned as well.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    b = np.asarray(b, dtype=float)
    eye = np.eye(H.shape[0])
    while True:
        A = H - shift * eye
        cond = float(np.linalg.cond(A))
        if np.isfinite(cond) and cond <= COND_LIMIT:
            x = np.linalg.solve(A, b)
            return (x, shift) if return_shift else x
        if shift >= MAX_SHIFT:
            raise RidgeSolveError(f"H_ww still ill-conditioned at shift {shift:g} (cond {cond:.3e})", cond)
        shift = min(MAX_SHIFT, max(shift * 10.0, 1e-12))
        log.debug("ridge shift escalated to %g (cond %.3e)", shift, cond)


def _check(state: OptState) -> None:
    for name in ("gamma", "w"):
        v = getattr(state, name)
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) > DIVERGENCE_LIMIT):
            raise DivergenceError(f"{name} diverged at iteration {state.iteration}",
                                  state.iteration, state.gamma, state.w)


def _run(step, objective, schedule: Schedule, state0: OptState,
         monitor: Callable | None = None, sink: Callable | None = None):
    state = OptState(np.array(state0.gamma, dtype=float), np.array(state0.w, dtype=float), state0.iteration)
    trace = TraceRecord()
    t0 = time.perf_counter()
    for _ in range(schedule.iterations):
        f = objective.value(state.gamma, state.w)
        gg = objective.grad_gamma(state.gamma, state.w)
        gw = objective.grad_w(state.gamma, state.w)
        extra = monitor(state.gamma, state.w) if monitor else None
        gamma, w = step(objective, schedule, state.gamma, state.w, gg, gw)
        row = TraceRow(state.iteration, float(f), float(np.linalg.norm(gg)), float(np.linalg.norm(gw)),
                       time.perf_counter() - t0, int(getattr(objective, "shots_used", 0)), extra)
        trace.rows.append(row)
        if sink:
            sink(row)
        state = OptState(gamma, w, state.iteration + 1)
        _check(state)
    return state, trace


def _extragradient_step(obj, s, gamma, w, gg, gw):
    gamma_t = gamma - s.eta_gamma * gg
    w_t = w + s.eta_w * gw
    return gamma - s.eta_gamma * obj.grad_gamma(gamma_t, w_t), w + s.eta_w * obj.grad_w(gamma_t, w_t)


def _gda_step(obj, s, gamma, w, gg, gw):
    gamma_new = gamma - s.eta_gamma * gg
    if s.gda_mode == "alternating":
        gw = obj.grad_w(gamma_new, w)
    return gamma_new, w + s.eta_w * gw


def _ridge_correction(obj, s, gamma, w, gg):
    """H_ww^{-1} H_wgamma grad_gamma, plus H_ww for reuse."""
    Hww = obj.hessian_ww(gamma, w)
    Hwg = obj.hessian_wgamma(gamma, w)
    return solve_ridge(Hww, Hwg @ gg, s.ridge_shift), Hww


def _ftr_step(obj, s, gamma, w, gg, gw):
    corr, _ = _ridge_correction(obj, s, gamma, w, gg)
    return gamma - s.eta_gamma * gg, w + s.eta_w * gw + s.eta_gamma * corr


def _hessian_fr_step(obj, s, gamma, w, gg, gw):
    corr, Hww = _ridge_correction(obj, s, gamma, w, gg)
    newton = solve_ridge(Hww, gw, s.ridge_shift)
    u = s.eta_w1 * gw - s.eta_w2 * newton + s.eta_gamma * corr
    return gamma - s.eta_gamma * gg, w + u


def extragradient_run(objective, schedule: Schedule, state0: OptState, **kw):
    """Predictor-corrector gradient descent-ascent."""
    return _run(_extragradient_step, objective, schedule, state0, **kw)


def two_timescale_gda_run(objective, schedule: Schedule, state0: OptState, **kw):
    """Gradient descent-ascent with eta_gamma < eta_w.

    Both gradients are taken at the pre-update point unless
    ``schedule.gda_mode == "alternating"``.
    """
    if schedule.eta_gamma >= schedule.eta_w:
        raise ValueError("two-timescale GDA requires eta_gamma < eta_w")
    if schedule.eta_gamma / schedule.eta_w > 0.1:
        warnings.warn(f"timescale ratio eta_gamma/eta_w = {schedule.eta_gamma / schedule.eta_w:.3g} exceeds 0.1",
                      stacklevel=2)
    return _run(_gda_step, objective, schedule, state0, **kw)


def follow_the_ridge_run(objective, schedule: Schedule, state0: OptState, **kw):
    return _run(_ftr_step, objective, schedule, state0, **kw)


def hessian_fr_run(objective, schedule: Schedule, state0: OptState, **kw):
    return _run(_hessian_fr_step, objective, schedule, state0, **kw)


ALGORITHMS = {
    "extragradient": extragradient_run,
    "gda": two_timescale_gda_run,
    "follow_the_ridge": follow_the_ridge_run,
    "hessian_fr": hessian_fr_run,
}


@dataclass(frozen=True)
class LocalMinimaxReport:
    grad_norms: tuple
    h_ww_max_eig: float
    schur_min_eig: float
    verdict: tuple

    @property
    def is_local_minimax(self) -> bool:
        return all(self.verdict)


def hessian_gamma_gamma(objective, gamma, w, step: float = 1e-4) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    M = gamma.size
    H = np.empty((M, M))
    for m in range(M):
        e = np.zeros(M)
        e[m] = step
        H[:, m] = (objective.grad_gamma(gamma + e, w) - objective.grad_gamma(gamma - e, w)) / (2 * step)
    return 0.5 * (H + H.T)


def local_minimax_check(objective, gamma, w, grad_tol: float = 1e-4, max_tol: float = 1e-6,
                        schur_tol: float = 1e-5, shift: float = 0.0) -> LocalMinimaxReport:
    """Stationarity, strict concavity in w, and PSD Schur complement."""
    gg = objective.grad_gamma(gamma, w)
    gw = objective.grad_w(gamma, w)
    Hww = np.atleast_2d(objective.hessian_ww(gamma, w))
    Hwg = np.atleast_2d(objective.hessian_wgamma(gamma, w))
    Hgg = np.atleast_2d(hessian_gamma_gamma(objective, gamma, w))
    schur = Hgg - Hwg.T @ solve_ridge(Hww, Hwg, shift)
    schur = 0.5 * (schur + schur.T)
    max_eig = float(np.linalg.eigvalsh(Hww)[-1])
    min_schur = float(np.linalg.eigvalsh(schur)[0])
    norms = (float(np.linalg.norm(gg)), float(np.linalg.norm(gw)))
    verdict = (norms[0] < grad_tol and norms[1] < grad_tol, max_eig < -max_tol, min_schur >= -schur_tol)
    return LocalMinimaxReport(norms, max_eig, min_schur, verdict)


class FlippedObjective:
    """-f, so that sup_gamma inf_w f becomes inf_gamma sup_w (-f)."""

    def __init__(self, base):
        self.base = base

    def __getattr__(self, name):
        return getattr(self.base, name)

    def value(self, gamma, w):
        return -self.base.value(gamma, w)

    def grad_gamma(self, gamma, w):
        return -self.base.grad_gamma(gamma, w)

    def grad_w(self, gamma, w):
        return -self.base.grad_w(gamma, w)

    def hessian_ww(self, gamma, w):
        return -self.base.hessian_ww(gamma, w)

    def hessian_wgamma(self, gamma, w):
        return -self.base.hessian_wgamma(gamma, w)


def orientation_flip(objective):
    """Turn a maximin objective into a minimax one (and back)."""
    if isinstance(objective, FlippedObjective):
        return objective.base
    cfg = getattr(objective, "cfg", None)
    if cfg is not None and cfg.divergence == "dv":
        raise ValueError("the DV objective is already minimax; flipping it is not meaningful")
    if cfg is not None and cfg.orientation != "maximin":
        raise ValueError("only Renyi objectives with alpha in (0, 1) are maximin")
    return FlippedObjective(objective)


class QuadraticMinimax:
    """f(g, w) = 1/2 g'A g + g'B'w - 1/2 w'C w with closed-form derivatives.

    ``B`` has shape (L, M); the Hessian blocks are H_ww = -C, H_wg = B.
    """

    def __init__(self, A, B, C):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))

    def value(self, g, w):
        g, w = np.atleast_1d(g), np.atleast_1d(w)
        return float(0.5 * g @ self.A @ g + w @ self.B @ g - 0.5 * w @ self.C @ w)

    def grad_gamma(self, g, w):
        return self.A @ np.atleast_1d(g) + self.B.T @ np.atleast_1d(w)

    def grad_w(self, g, w):
        return self.B @ np.atleast_1d(g) - self.C @ np.atleast_1d(w)

    def hessian_ww(self, g, w):
        return -self.C.copy()

    def hessian_wgamma(self, g, w):
        return self.B.copy()


def bilinear_toy() -> QuadraticMinimax:
    """f = gamma * w."""
    return QuadraticMinimax([[0.0]], [[1.0]], [[0.0]])


def quadratic_toy(a: float = 0.5) -> QuadraticMinimax:
    """f = -w^2/2 + gamma w + a gamma^2/2, local minimax at the origin for a > -1."""
    return QuadraticMinimax([[a]], [[1.0]], [[1.0]])
