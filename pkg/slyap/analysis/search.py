"""Seeded search for periodic witnesses of a large Lyapunov exponent.

Any signal σ on [0, t] gives the lower bound λ ≥ log ρ(Φ_σ(t, 0)) / t, so the
search only affects tightness: random restarts over piece counts and
log-uniform dwells, then coordinate descent on the dwells of the best one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from slyap.analysis.flows import flow
from slyap.analysis.matkit import spectral_radius
from slyap.analysis.model import PwcSignal
from slyap.batch.processor import BatchProcessor
from slyap.config import SearchConfig

logger = logging.getLogger(__name__)

# Substream ids for numpy.random.default_rng([seed, stream, index]).
STREAM_WITNESS = 0
STREAM_CHECK_SAMPLE = 1
STREAM_KSET = 2
STREAM_SPHERE = 3
STREAM_ATTRACTION = 4

# Minimal gain for a dwell perturbation to be accepted.
_IMPROVEMENT = 1e-12


@dataclass(frozen=True)
class Witness:
    """A signal on [0, t] with ρ = ρ(Φ(t, 0)); value = log ρ / t."""

    signal: PwcSignal
    t: float
    rho: float

    @property
    def value(self) -> float:
        if self.rho <= 0.0:
            return -math.inf
        return math.log(self.rho) / self.t

    def to_dict(self) -> dict:
        return {"pieces": self.signal.to_dict()["pieces"], "t": self.t, "rho": self.rho}


def evaluate(modes: Sequence[np.ndarray], sig: PwcSignal) -> Witness:
    """Witness of *sig*; a non-finite flow is an ArithmeticError."""
    res = flow(modes, sig)
    if not np.all(np.isfinite(res.phi)):
        raise ArithmeticError(f"flow overflow for signal {sig.digest[:12]}")
    return Witness(signal=sig, t=res.t, rho=spectral_radius(res.phi))


def _best(witnesses: Sequence[Witness | None]) -> Witness | None:
    found = [w for w in witnesses if w is not None]
    if not found:
        return None
    # ties go to the smallest digest so the reduction is order independent
    return min(found, key=lambda w: (-w.value, w.signal.digest))


def _fit_horizon(sig: PwcSignal, horizon: float | None) -> PwcSignal:
    if horizon is None or sig.total_duration <= horizon:
        return sig
    return sig.rescaled(horizon / sig.total_duration)


def initial_candidates(
    n_modes: int,
    config: SearchConfig,
    stream: int = STREAM_WITNESS,
) -> list[PwcSignal]:
    """Constant signals on every mode, then ``config.restarts`` random signals."""
    candidates = [_fit_horizon(PwcSignal.constant(i, 1.0), config.horizon) for i in range(n_modes)]
    log_lo, log_hi = math.log(config.dwell_min), math.log(config.dwell_max)
    for r in range(config.restarts):
        rng = np.random.default_rng([config.seed, stream, r])
        k = 1 + r % config.max_pieces
        dwells = np.exp(rng.uniform(log_lo, log_hi, size=k))
        idx = rng.integers(0, n_modes, size=k)
        sig = PwcSignal(tuple(zip(idx.tolist(), dwells.tolist())))
        candidates.append(_fit_horizon(sig, config.horizon))
    return candidates


def refine(modes: Sequence[np.ndarray], start: Witness, config: SearchConfig) -> Witness:
    """Coordinate descent on dwells with multiplicative steps ×(1 ± step).

    A dwell stays within [dwell_min, dwell_max], widened to contain its
    starting value.
    """
    best = start
    pieces = list(start.signal.pieces)
    bounds = [(min(config.dwell_min, d), max(config.dwell_max, d)) for _, d in pieces]
    for it in range(config.iterations):
        k = it % len(pieces)
        lo, hi = bounds[k]
        for factor in (1.0 + config.step, 1.0 - config.step):
            idx, dwell = pieces[k]
            trial_dwell = dwell * factor
            if not lo <= trial_dwell <= hi:
                continue
            trial = pieces.copy()
            trial[k] = (idx, trial_dwell)
            sig = PwcSignal(tuple(trial))
            if config.horizon is not None and sig.total_duration > config.horizon:
                continue
            try:
                cand = evaluate(modes, sig)
            except ArithmeticError:
                continue
            if cand.value > best.value + _IMPROVEMENT:
                logger.debug("Dwell %d x%.2f: %.12g -> %.12g", k, factor, best.value, cand.value)
                best, pieces = cand, trial
                break
    return best


def search_witness(
    modes: Sequence[np.ndarray],
    config: SearchConfig,
    warm_start: Sequence[PwcSignal] = (),
) -> Witness:
    """Best witness over warm starts and seeded candidates, then refined.

    Warm starts must index into *modes*; a bad one raises ValidationError.
    """
    for sig in warm_start:
        sig.check_indices(len(modes))
    candidates = list(warm_start) + initial_candidates(len(modes), config)
    processor = BatchProcessor(max_workers=config.threads)
    evaluated = processor.map(lambda sig: evaluate(modes, sig), candidates)
    status = processor.get_status()
    if status["skipped"]:
        logger.debug("%d of %d witness candidates overflowed", status["skipped"], status["total"])
    best = _best(evaluated)
    if best is None:
        raise ArithmeticError("every witness candidate overflowed")
    return refine(modes, best, config)
