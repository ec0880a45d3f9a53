"""Point-cloud estimates of K(x) and bounds for the inclusion Σ̂.

K(x) collects the ω-limit points of the forced fast dynamics
ẏ = D(t)y + C(t)x started at y(0) = 0. It is homogeneous of degree one and
Lipschitz in x, so a cloud per unit direction is enough to evaluate the
right-hand side Ax + B·K(x) of Σ̂ anywhere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from slyap.analysis.lyapunov import LyapunovBound, MethodCertificate, Side
from slyap.analysis.matkit import exp_with_forced_integral, hausdorff, op_norm
from slyap.analysis.model import BlockSystem, DecayEstimate
from slyap.analysis.search import STREAM_ATTRACTION, STREAM_KSET, STREAM_SPHERE
from slyap.config import HatConfig, KSetConfig
from slyap.errors import AssumptionError, DimensionError, ValidationError, Violation

logger = logging.getLogger(__name__)

_MESH_SAMPLES = 4096


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample of K(base_x); points are rows of length m."""

    base_x: np.ndarray
    points: np.ndarray
    burn_in: float
    decay: DecayEstimate
    seed: int
    tolerance: float

    def scaled(self, factor: float) -> np.ndarray:
        return factor * self.points

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": self.base_x.tolist(),
            "tolerance": self.tolerance,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "decay": {"c": self.decay.c, "delta": self.decay.delta},
            "points": self.points.tolist(),
        }


def _decay_for(sys: BlockSystem, decay: DecayEstimate | None) -> DecayEstimate:
    if decay is not None:
        return decay
    check = sys.assumption()
    if not check.holds:
        raise AssumptionError(
            f"fast subsystem not certified ES (verdict {check.verdict.value}); K(x) may be unbounded")
    return check.decay


def _slow_vector(sys: BlockSystem, x: Sequence[float]) -> np.ndarray:
    xv = np.asarray(x, dtype=np.float64).ravel()
    if xv.shape[0] != sys.n:
        raise DimensionError(Violation(None, "x", f"expected {sys.n} entries, got {xv.shape[0]}"))
    if not np.all(np.isfinite(xv)):
        raise ValidationError(Violation(None, "x", "non-finite entry"))
    return xv


# ---------------------------------------------------------------------------
# K(x)
# ---------------------------------------------------------------------------

def _mode_schedule(rng: np.random.Generator, n_modes: int, steps: int, mean_steps: float) -> np.ndarray:
    """Mode index per step: exponential dwells quantized to whole steps."""
    out = np.empty(steps, dtype=np.int64)
    k = 0
    while k < steps:
        length = max(1, int(round(rng.exponential(mean_steps))))
        out[k:k + length] = rng.integers(0, n_modes)
        k += length
    return out


def kset_estimate(
    sys: BlockSystem,
    x: Sequence[float],
    config: KSetConfig | None = None,
    decay: DecayEstimate | None = None,
) -> PointCloud:
    """Sample K(x) from seeded random signals of Σ_x started at y(0) = 0.

    Samples before the burn-in t_b, where c·e^{-δ t_b}·R < tolerance and R
    bounds |K(x)|, are discarded. The rest is snapped to a grid of
    tolerance/10 and deduplicated.
    """
    config = config or KSetConfig()
    decay = _decay_for(sys, decay)
    xv = _slow_vector(sys, x)
    forcing = [mode.C @ xv for mode in sys.modes]
    f_max = max(float(np.linalg.norm(f)) for f in forcing)
    if f_max == 0.0:
        return PointCloud(base_x=xv, points=np.zeros((1, sys.m)), burn_in=0.0,
                          decay=decay, seed=config.seed, tolerance=config.tolerance)

    c, delta = decay.c, decay.delta
    radius = c * f_max / delta
    burn_in = max(0.0, math.log(c * radius / config.tolerance) / delta)
    horizon = config.horizon if config.horizon is not None else 200.0 / delta
    dt = 1.0 / (config.samples_per_decay * delta)
    burn_steps = int(math.ceil(burn_in / dt))
    steps = burn_steps + int(math.ceil(horizon / dt))
    logger.debug("kset x=%s: burn_in=%.6g dt=%.6g steps=%d", xv.tolist(), burn_in, dt, steps)

    stacks = [exp_with_forced_integral(mode.D, f[:, None], dt) for mode, f in zip(sys.modes, forcing)]
    Phi = np.stack([s[0] for s in stacks])           # (modes, m, m)
    J = np.stack([s[1][:, 0] for s in stacks])       # (modes, m)

    schedule = np.stack([
        _mode_schedule(np.random.default_rng([config.seed, STREAM_KSET, s]), len(sys), steps,
                       1.0 / (delta * dt))
        for s in range(config.signals)
    ])                                                # (signals, steps)
    y = np.zeros((config.signals, sys.m))
    collected = []
    for k in range(steps):
        idx = schedule[:, k]
        y = np.einsum("sij,sj->si", Phi[idx], y) + J[idx]
        if k + 1 >= burn_steps:
            collected.append(y)
    samples = np.concatenate(collected)
    cell = config.tolerance / 10.0
    points = np.unique(np.round(samples / cell), axis=0) * cell
    return PointCloud(base_x=xv, points=points, burn_in=burn_steps * dt,
                      decay=decay, seed=config.seed, tolerance=config.tolerance)


def kset_homogeneity_check(
    sys: BlockSystem,
    x: Sequence[float],
    scale: float,
    config: KSetConfig | None = None,
    decay: DecayEstimate | None = None,
) -> float:
    """Hausdorff distance between the clouds of K(scale·x) and scale·K(x)."""
    if scale == 0 or not math.isfinite(scale):
        raise ValidationError(Violation(None, "scale", f"must be a non-zero real, got {scale}"))
    decay = _decay_for(sys, decay)
    xv = _slow_vector(sys, x)
    base = kset_estimate(sys, xv, config, decay)
    if scale == 1:
        return hausdorff(base.points, base.points)
    other = kset_estimate(sys, scale * xv, config, decay)
    return hausdorff(other.points, base.scaled(scale))


def kset_lipschitz_constant(sys: BlockSystem, decay: DecayEstimate) -> float:
    """L_K = c·max‖C‖/δ, a Lipschitz constant of x ↦ K(x) in Hausdorff distance."""
    return decay.c * max(op_norm(mode.C) for mode in sys.modes) / decay.delta


def kset_attraction_check(
    sys: BlockSystem,
    cloud: PointCloud,
    config: KSetConfig | None = None,
    restarts: int = 16,
) -> float:
    """Largest distance to the cloud of Σ_x runs restarted from cloud points.

    Each run lasts one horizon of the cloud's time scale and uses a fresh
    seeded random signal.
    """
    config = config or KSetConfig()
    delta = cloud.decay.delta
    forcing = [mode.C @ cloud.base_x for mode in sys.modes]
    dt = 1.0 / (config.samples_per_decay * delta)
    steps = int(math.ceil((config.horizon if config.horizon is not None else 10.0 / delta) / dt))
    stacks = [exp_with_forced_integral(mode.D, f[:, None], dt) for mode, f in zip(sys.modes, forcing)]
    Phi = np.stack([s[0] for s in stacks])
    J = np.stack([s[1][:, 0] for s in stacks])

    picks = np.linspace(0, len(cloud.points) - 1, min(restarts, len(cloud.points))).round().astype(int)
    y = cloud.points[picks].copy()
    schedule = np.stack([
        _mode_schedule(np.random.default_rng([config.seed, STREAM_ATTRACTION, s]), len(sys), steps,
                       1.0 / (delta * dt))
        for s in range(len(picks))
    ])
    tree = cKDTree(cloud.points)
    worst = 0.0
    for k in range(steps):
        idx = schedule[:, k]
        y = np.einsum("sij,sj->si", Phi[idx], y) + J[idx]
        dist, _ = tree.query(y)
        worst = max(worst, float(dist.max()))
    return worst


# ---------------------------------------------------------------------------
# Unit-sphere atlas
# ---------------------------------------------------------------------------

def sphere_atlas(n: int, samples: int | None = None) -> np.ndarray:
    """Deterministic, antipodally closed unit directions in ℝⁿ.

    Rows come in pairs: row 2i+1 is −(row 2i).
    """
    if n == 1:
        return np.array([[1.0], [-1.0]])
    count = samples if samples is not None else 256 * (n - 1)
    half = max(1, count // 2)
    if n == 2:
        theta = np.pi * np.arange(half) / half
        base = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        halton = qmc.Halton(d=n, scramble=False).random(half + 1)[1:]
        base = norm.ppf(np.clip(halton, 1e-12, 1 - 1e-12))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
    out = np.empty((2 * half, n))
    out[0::2] = base
    out[1::2] = -base
    return out


def sphere_mesh(atlas: np.ndarray, seed: int = 0) -> float:
    """Largest distance from a unit vector to the nearest atlas direction.

    Exact for n ≤ 2; for n ≥ 3 estimated from seeded random directions.
    """
    n = atlas.shape[1]
    if n == 1:
        return 0.0
    if n == 2:
        return 2.0 * math.sin(math.pi / (2.0 * len(atlas)))
    rng = np.random.default_rng([seed, STREAM_SPHERE, 0])
    samples = rng.standard_normal((_MESH_SAMPLES, n))
    samples /= np.linalg.norm(samples, axis=1, keepdims=True)
    dist, _ = cKDTree(atlas).query(samples)
    return float(dist.max())


def _atlas_clouds(
    sys: BlockSystem,
    atlas: np.ndarray,
    config: KSetConfig,
    decay: DecayEstimate,
) -> list[np.ndarray]:
    """Cloud per atlas direction; the antipode of each pair is mirrored."""
    clouds: list[np.ndarray] = []
    for i in range(0, len(atlas), 2):
        pts = kset_estimate(sys, atlas[i], config, decay).points
        clouds.extend([pts, -pts])
    return clouds


# ---------------------------------------------------------------------------
# Σ̂ bounds
# ---------------------------------------------------------------------------

def hat_upper_bound(
    sys: BlockSystem,
    hat: HatConfig | None = None,
    config: KSetConfig | None = None,
    decay: DecayEstimate | None = None,
) -> LyapunovBound:
    """λ(Σ̂) ≤ max over x̂, modes and y ∈ K(x̂) of x̂ᵀ(Ax̂ + By), plus η·L.

    η is the atlas mesh and L = 2·max‖A‖ + 2·max‖B‖·c·max‖C‖/δ a Lipschitz
    constant of the maximized function on the sphere.
    """
    hat = hat or HatConfig()
    config = config or KSetConfig()
    decay = _decay_for(sys, decay)
    atlas = sphere_atlas(sys.n, hat.sphere_samples)
    clouds = _atlas_clouds(sys, atlas, config, decay)

    best = -math.inf
    argmax: dict[str, Any] = {}
    for d, pts in zip(atlas, clouds):
        for i, mode in enumerate(sys.modes):
            values = d @ mode.A @ d + pts @ (mode.B.T @ d)
            j = int(np.argmax(values))
            if values[j] > best:
                best = float(values[j])
                argmax = {"direction": d.tolist(), "mode": i, "y": pts[j].tolist()}

    eta = sphere_mesh(atlas, config.seed)
    a_max = max(op_norm(mode.A) for mode in sys.modes)
    b_max = max(op_norm(mode.B) for mode in sys.modes)
    lip = 2.0 * a_max + 2.0 * b_max * kset_lipschitz_constant(sys, decay)
    slack = eta * lip
    logger.debug("hat upper: sampled max %.9g, mesh %.3g, slack %.6g", best, eta, slack)
    return LyapunovBound(
        value=best + slack,
        side=Side.UPPER,
        certificate=MethodCertificate("hat-sphere", {
            "sampled_max": best,
            "mesh": eta,
            "lipschitz": lip,
            "directions": len(atlas),
            "kset_tolerance": config.tolerance,
            "argmax": argmax,
        }),
    )


def hat_lower_greedy(
    sys: BlockSystem,
    x0: Sequence[float] | None = None,
    hat: HatConfig | None = None,
    config: KSetConfig | None = None,
    decay: DecayEstimate | None = None,
) -> LyapunovBound:
    """Greedy Euler trajectory of Σ̂; heuristic lower bound on λ(Σ̂).

    Each step picks the mode and cloud point maximizing x̂ᵀ(Ax̂ + By), with
    y taken from the cloud of the nearest atlas direction scaled by |x|.
    The state is renormalized every step and the log growth accumulated.
    """
    hat = hat or HatConfig()
    config = config or KSetConfig()
    decay = _decay_for(sys, decay)
    atlas = sphere_atlas(sys.n, hat.sphere_samples)
    clouds = _atlas_clouds(sys, atlas, config, decay)
    tree = cKDTree(atlas)

    x = np.ones(sys.n) if x0 is None else _slow_vector(sys, x0)
    r0 = float(np.linalg.norm(x))
    if r0 == 0.0:
        raise ValidationError(Violation(None, "x0", "initial state must be non-zero"))
    u = x / r0
    h = hat.greedy_step
    steps = max(1, int(round(hat.greedy_horizon / h)))
    log_growth = 0.0
    choices = np.zeros(len(sys), dtype=np.int64)
    for _ in range(steps):
        _, a = tree.query(u)
        pts = clouds[int(a)]
        best_val, best_vec, best_mode = -math.inf, None, 0
        for i, mode in enumerate(sys.modes):
            drift = pts @ mode.B.T + mode.A @ u    # rows: Au + By
            vals = drift @ u
            j = int(np.argmax(vals))
            if vals[j] > best_val:
                best_val, best_vec, best_mode = float(vals[j]), drift[j], i
        choices[best_mode] += 1
        u = u + h * best_vec
        r = float(np.linalg.norm(u))
        log_growth += math.log(r)
        u = u / r
    t = steps * h
    value = log_growth / t
    return LyapunovBound(
        value=value,
        side=Side.LOWER,
        certificate=MethodCertificate("hat-greedy", {
            "x0": x.tolist(),
            "t": t,
            "step": h,
            "mode_steps": choices.tolist(),
            "kset_tolerance": config.tolerance,
        }),
        heuristic=True,
    )


