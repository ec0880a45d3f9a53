"""Flows and sampled trajectories of switching systems and of Σ_ε."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from slyap.analysis.matkit import as_matrix, exp_with_forced_integral, mat_exp
from slyap.analysis.model import BlockMode, BlockSystem, PwcSignal
from slyap.errors import DimensionError, ValidationError, Violation

logger = logging.getLogger(__name__)

# Grid points closer than this (relative to the horizon) to a switching
# instant are merged into it.
_MERGE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Φ(t, 0) of a switching system driven by one signal."""

    phi: np.ndarray
    t: float
    signal_digest: str


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # shape (len(times), dim)
    epsilon: float | None       # None for subsystem runs

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


# ---------------------------------------------------------------------------
# Mode assembly
# ---------------------------------------------------------------------------

def _check_epsilon(epsilon: float) -> float:
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValidationError(Violation(None, "epsilon", f"must be a positive real, got {epsilon}"))
    return float(epsilon)


def eps_mode(mode: BlockMode, epsilon: float) -> np.ndarray:
    """Generator of Σ_ε in mode *mode*: [[A, B], [C/ε, D/ε]]."""
    epsilon = _check_epsilon(epsilon)
    return np.block([[mode.A, mode.B], [mode.C / epsilon, mode.D / epsilon]])


def scaled_mode(mode: BlockMode, epsilon: float) -> np.ndarray:
    """Fast-time generator [[εA, εB], [C, D]] (Σ_ε after t ↦ t/ε)."""
    epsilon = _check_epsilon(epsilon)
    return np.block([[epsilon * mode.A, epsilon * mode.B], [mode.C, mode.D]])


def _check_modes(modes: Sequence[np.ndarray], sig: PwcSignal) -> list[np.ndarray]:
    if len(modes) == 0:
        raise ValidationError(Violation(None, "modes", "empty mode set"))
    mats = [as_matrix(M, f"mode {i}") for i, M in enumerate(modes)]
    d = mats[0].shape[0]
    for i, M in enumerate(mats):
        if M.shape != (d, d):
            raise DimensionError(Violation(i, "mode", f"expected shape {(d, d)}, got {M.shape}"))
    sig.check_indices(len(mats))
    return mats


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

def flow(modes: Sequence[np.ndarray], sig: PwcSignal) -> FlowResult:
    """Φ(t, 0) = e^{N_k τ_k} ··· e^{N_1 τ_1} for the signal's pieces."""
    mats = _check_modes(modes, sig)
    cache: dict[tuple[int, float], np.ndarray] = {}
    phi = np.eye(mats[0].shape[0])
    for idx, dwell in sig.pieces:
        key = (idx, dwell)
        if key not in cache:
            cache[key] = mat_exp(mats[idx], dwell)
        phi = cache[key] @ phi
    return FlowResult(phi=phi, t=sig.total_duration, signal_digest=sig.digest)


def eps_flow(sys: BlockSystem, sig: PwcSignal, epsilon: float, route: str = "scaled") -> FlowResult:
    """Flow of Σ_ε driven by *sig* (durations in slow time).

    ``route="scaled"`` evaluates each piece as e^{[[εA, εB],[C, D]]·τ/ε},
    which is the same matrix as e^{[[A, B],[C/ε, D/ε]]·τ} but keeps the
    generator entries of order one for small ε.
    """
    epsilon = _check_epsilon(epsilon)
    if route == "direct":
        return flow([eps_mode(mode, epsilon) for mode in sys.modes], sig)
    if route != "scaled":
        raise ValueError(f"Unknown route: {route}")
    res = flow([scaled_mode(mode, epsilon) for mode in sys.modes], sig.rescaled(1.0 / epsilon))
    return FlowResult(phi=res.phi, t=sig.total_duration, signal_digest=sig.digest)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _sample_grid(sig: PwcSignal, sample_dt: float) -> np.ndarray:
    if not (np.isfinite(sample_dt) and sample_dt > 0):
        raise ValidationError(Violation(None, "sample_dt", f"must be positive, got {sample_dt}"))
    switches = sig.switch_times
    horizon = switches[-1]
    grid = np.arange(int(np.floor(horizon / sample_dt)) + 1) * sample_dt
    times = np.concatenate([switches, grid[grid < horizon]])
    times.sort(kind="mergesort")
    keep = np.concatenate([[True], np.diff(times) > _MERGE_RTOL * max(horizon, 1.0)])
    return times[keep]


def _propagate(
    generators: list[np.ndarray],
    sig: PwcSignal,
    state0: np.ndarray,
    sample_dt: float,
    forcing: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact piecewise propagation of ż = N z (+ f) sampled on grid ∪ switches."""
    times = _sample_grid(sig, sample_dt)
    switches = sig.switch_times
    states = np.empty((len(times), state0.shape[0]))
    cache: dict[tuple[int, float], tuple[np.ndarray, np.ndarray]] = {}

    def step(idx: int, h: float) -> tuple[np.ndarray, np.ndarray]:
        key = (idx, h)
        if key not in cache:
            if forcing is None:
                cache[key] = (mat_exp(generators[idx], h), np.zeros(state0.shape[0]))
            else:
                phi, J = exp_with_forced_integral(generators[idx], forcing[idx][:, None], h)
                cache[key] = (phi, J[:, 0])
        return cache[key]

    z = state0.astype(np.float64).copy()
    k = 0
    for p, (idx, _) in enumerate(sig.pieces):
        start, end = switches[p], switches[p + 1]
        t_prev, z_prev = start, z
        while k < len(times) and times[k] < end - _MERGE_RTOL * max(end, 1.0):
            h = times[k] - t_prev
            if h > 0:
                phi, f = step(idx, h)
                z_prev = phi @ z_prev + f
                t_prev = times[k]
            states[k] = z_prev
            k += 1
        phi, f = step(idx, end - t_prev)
        z = phi @ z_prev + f
    while k < len(times):
        states[k] = z
        k += 1
    return times, states


def simulate(
    sys: BlockSystem,
    sig: PwcSignal,
    epsilon: float | None,
    x0: Sequence[float],
    sample_dt: float,
) -> Trajectory:
    """Sampled trajectory (x, y) of Σ_ε from the initial state *x0*.

    With ``epsilon=None`` this runs the fast subsystem Σ_D instead, and *x0*
    holds only the m fast coordinates.
    """
    if epsilon is None:
        return simulate_fast(sys, sig, np.zeros(sys.n), x0, sample_dt)
    epsilon = _check_epsilon(epsilon)
    state0 = np.asarray(x0, dtype=np.float64).ravel()
    if state0.shape[0] != sys.n + sys.m:
        raise DimensionError(Violation(None, "x0", f"expected {sys.n + sys.m} entries, got {state0.shape[0]}"))
    sig.check_indices(len(sys))
    generators = [eps_mode(mode, epsilon) for mode in sys.modes]
    times, states = _propagate(generators, sig, state0, sample_dt)
    return Trajectory(times=times, states=states, epsilon=epsilon)


def simulate_fast(
    sys: BlockSystem,
    sig: PwcSignal,
    x: Sequence[float],
    y0: Sequence[float],
    sample_dt: float,
) -> Trajectory:
    """Sampled trajectory of Σ_x: ẏ = D y + C x with the slow state frozen at *x*.

    With x = 0 this is the fast subsystem Σ_D.
    """
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y0, dtype=np.float64).ravel()
    if xv.shape[0] != sys.n:
        raise DimensionError(Violation(None, "x", f"expected {sys.n} entries, got {xv.shape[0]}"))
    if yv.shape[0] != sys.m:
        raise DimensionError(Violation(None, "y0", f"expected {sys.m} entries, got {yv.shape[0]}"))
    sig.check_indices(len(sys))
    generators = [np.array(mode.D) for mode in sys.modes]
    forcing = [mode.C @ xv for mode in sys.modes]
    times, states = _propagate(generators, sig, yv, sample_dt, forcing)
    return Trajectory(times=times, states=states, epsilon=None)
