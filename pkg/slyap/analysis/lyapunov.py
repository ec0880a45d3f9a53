"""One-sided bounds on maximal Lyapunov exponents.

Lower bounds come from periodic witnesses (see :mod:`slyap.analysis.search`),
upper bounds from logarithmic norms. Both sides are combined into an
ES / EU / UNDECIDED classification, an ε-sweep of Σ_ε and the comparison
chain Σ̄ ≤ Σ̌ ≤ Σ_ε ≤ Σ̂.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from slyap.analysis.flows import eps_mode, scaled_mode
from slyap.analysis.matkit import as_matrix, log_norm, op_norm
from slyap.analysis.model import BlockSystem, PwcSignal
from slyap.analysis.search import Witness, evaluate, search_witness
from slyap.config import DEFAULT_TOLERANCES, ChainConfig, SearchConfig
from slyap.errors import AssumptionError, ConsistencyError, PreconditionError, ValidationError, Violation

logger = logging.getLogger(__name__)


class Side(str, enum.Enum):
    LOWER = "LOWER"
    UPPER = "UPPER"


class Stability(str, enum.Enum):
    ES = "ES"
    EU = "EU"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class MethodCertificate:
    """Method tag plus the data needed to re-check a bound."""

    method: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"method": self.method, **self.data}


@dataclass(frozen=True)
class LyapunovBound:
    value: float
    side: Side
    certificate: Witness | MethodCertificate
    heuristic: bool = False

    def shifted(self, mu: float) -> LyapunovBound:
        return replace(self, value=self.value + mu)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "value": self.value,
            "side": self.side.value,
            "certificate": self.certificate.to_dict(),
        }
        if self.heuristic:
            out["heuristic"] = True
        return out


def _mode_list(modes: Sequence[Any]) -> list[np.ndarray]:
    if len(modes) == 0:
        raise ValidationError(Violation(None, "modes", "empty mode set"))
    return [as_matrix(M, f"mode {i}") for i, M in enumerate(modes)]


# ---------------------------------------------------------------------------
# Lower bounds
# ---------------------------------------------------------------------------

def lambda_lower(
    modes: Sequence[np.ndarray],
    config: SearchConfig | None = None,
    warm_start: Sequence[PwcSignal] = (),
) -> LyapunovBound:
    """Largest log ρ(Φ(t, 0)) / t found by the seeded witness search.

    Warm-start signals are evaluated first; when the mode list extends a
    previous one, passing the previous witness keeps the bound monotone.
    """
    mats = _mode_list(modes)
    config = config or SearchConfig()
    witness = search_witness(mats, config, warm_start)
    logger.debug("lambda_lower over %d modes: %.12g (%d pieces)",
                 len(mats), witness.value, len(witness.signal.pieces))
    return LyapunovBound(value=witness.value, side=Side.LOWER, certificate=witness)


def replay_witness(modes: Sequence[np.ndarray], witness: Witness) -> float:
    """Recompute log ρ / t of *witness* from scratch."""
    return evaluate(_mode_list(modes), witness.signal).value


# ---------------------------------------------------------------------------
# Upper bounds
# ---------------------------------------------------------------------------

def lambda_upper_lognorm(modes: Sequence[np.ndarray]) -> LyapunovBound:
    """λ ≤ max over modes of the Euclidean logarithmic norm."""
    per_mode = [log_norm(M) for M in _mode_list(modes)]
    return LyapunovBound(
        value=max(per_mode),
        side=Side.UPPER,
        certificate=MethodCertificate("lognorm", {"per_mode": per_mode}),
    )


def _lyapunov_candidates(mats: list[np.ndarray]) -> list[np.ndarray]:
    """P = I plus the solutions of NᵀP + PN = −I that are positive definite."""
    d = mats[0].shape[0]
    found = [np.eye(d)]
    for N in mats + [sum(mats) / len(mats)]:
        try:
            P = scipy.linalg.solve_continuous_lyapunov(N.T, -np.eye(d))
        except (np.linalg.LinAlgError, ValueError):
            continue
        if not np.all(np.isfinite(P)):
            continue
        P = 0.5 * (P + P.T)
        residual = np.linalg.norm(N.T @ P + P @ N + np.eye(d))
        if residual > 1e-8 * max(1.0, np.linalg.norm(P)):
            continue
        if scipy.linalg.eigvalsh(P)[0] <= 0.0:
            continue
        found.append(P)
    return found


def lambda_upper_quadratic(modes: Sequence[np.ndarray]) -> LyapunovBound:
    """λ ≤ min over P of max over modes of the P-norm logarithmic norm.

    For P = LLᵀ the log-norm induced by |x|_P = |Lᵀx| is μ₂(Lᵀ N L^{-ᵀ}),
    and ‖Φ(t)‖₂ ≤ sqrt(cond P)·e^{μ t}. P = I is always a candidate.
    """
    mats = _mode_list(modes)
    best: tuple[float, np.ndarray] | None = None
    for P in _lyapunov_candidates(mats):
        L = scipy.linalg.cholesky(P, lower=True)
        Lt_inv = scipy.linalg.inv(L.T)
        value = max(log_norm(L.T @ N @ Lt_inv) for N in mats)
        if best is None or value < best[0]:
            best = (value, P)
    value, P = best
    eig = scipy.linalg.eigvalsh(P)
    c = float(math.sqrt(eig[-1] / eig[0]))
    return LyapunovBound(
        value=float(value),
        side=Side.UPPER,
        certificate=MethodCertificate("quadratic-lognorm", {"c": c, "P": P.tolist()}),
    )


# ---------------------------------------------------------------------------
# Shift and classification
# ---------------------------------------------------------------------------

def shift_modes(modes: Sequence[np.ndarray], mu: float) -> list[np.ndarray]:
    """N ↦ N + μI; λ shifts by exactly μ."""
    return [M + mu * np.eye(M.shape[0]) for M in _mode_list(modes)]


def _value(bound: LyapunovBound | float) -> float:
    return bound.value if isinstance(bound, LyapunovBound) else float(bound)


def classify(
    lower: LyapunovBound | float,
    upper: LyapunovBound | float,
    margin: float = DEFAULT_TOLERANCES["verdict"],
    tol: float = DEFAULT_TOLERANCES["consistency"],
) -> Stability:
    """ES if upper < 0, EU if lower > 0, otherwise UNDECIDED."""
    lo, hi = _value(lower), _value(upper)
    if lo > hi + tol:
        raise ConsistencyError(f"lower bound {lo:.12g} exceeds upper bound {hi:.12g}")
    if hi < -margin:
        return Stability.ES
    if lo > margin:
        return Stability.EU
    return Stability.UNDECIDED


# ---------------------------------------------------------------------------
# ε-sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    lower: LyapunovBound
    upper: LyapunovBound
    verdict: Stability

    @property
    def eps_times_lower(self) -> float:
        return self.epsilon * self.lower.value

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "lower": self.lower.to_dict(),
            "upper": self.upper.to_dict(),
            "eps_times_lower": self.eps_times_lower,
            "verdict": self.verdict.value,
        }


def sweep_eps(
    sys: BlockSystem,
    eps_list: Sequence[float],
    config: SearchConfig | None = None,
    warm_start: Mapping[float, Sequence[PwcSignal]] | None = None,
    margin: float = DEFAULT_TOLERANCES["verdict"],
    tol: float = DEFAULT_TOLERANCES["consistency"],
) -> list[SweepRow]:
    """Bounds on λ(Σ_ε) for every ε, sorted by ε descending.

    The search runs in fast time on [[εA, εB], [C, D]], where exponents are
    ε·λ(Σ_ε); the witness is mapped back with σ ↦ σ(·/ε). Warm starts and
    ``config.horizon`` are given in slow time. Dividing by ε magnifies
    fast-time round-off by 1/ε, so the consistency tolerance is scaled by
    max(1, |upper|)/ε.
    """
    config = config or SearchConfig()
    warm_start = warm_start or {}
    rows: list[SweepRow] = []
    for eps in sorted({float(e) for e in eps_list}, reverse=True):
        if not (math.isfinite(eps) and eps > 0):
            raise ValidationError(Violation(None, "epsilon", f"must be a positive real, got {eps}"))
        fast_cfg = replace(config, horizon=None if config.horizon is None else config.horizon / eps)
        fast_modes = [scaled_mode(mode, eps) for mode in sys.modes]
        starts = [sig.rescaled(1.0 / eps) for sig in warm_start.get(eps, ())]
        fast_witness = search_witness(fast_modes, fast_cfg, starts)
        witness = Witness(
            signal=fast_witness.signal.rescaled(eps),
            t=fast_witness.t * eps,
            rho=fast_witness.rho,
        )
        lower = LyapunovBound(value=fast_witness.value / eps, side=Side.LOWER, certificate=witness)
        upper = lambda_upper_lognorm([eps_mode(mode, eps) for mode in sys.modes])
        scaled_tol = tol * max(1.0, abs(upper.value)) / eps
        verdict = classify(lower, upper, margin, scaled_tol)
        logger.debug("eps=%g lower=%.9g upper=%.9g %s", eps, lower.value, upper.value, verdict.value)
        rows.append(SweepRow(epsilon=eps, lower=lower, upper=upper, verdict=verdict))
    return rows


def sweep_trend(rows: Sequence[SweepRow]) -> dict[str, Any]:
    """Least-squares line ε·lower ≈ a + b·ε over the smallest half of the ladder.

    The intercept is a finite-ε trend for lim ε·λ(Σ_ε), not a limit.
    """
    if not rows:
        raise ValidationError(Violation(None, "rows", "empty sweep"))
    ordered = sorted(rows, key=lambda r: r.epsilon)
    used = ordered[: max(2, (len(ordered) + 1) // 2)]
    eps = np.array([r.epsilon for r in used])
    vals = np.array([r.eps_times_lower for r in used])
    if len(used) < 2 or not np.all(np.isfinite(vals)):
        return {"intercept": float(vals[0]), "slope": 0.0, "epsilons": eps.tolist()}
    slope, intercept = np.polyfit(eps, vals, 1)
    return {"intercept": float(intercept), "slope": float(slope), "epsilons": eps.tolist()}


# ---------------------------------------------------------------------------
# Comparison chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainCheck:
    name: str
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


@dataclass(frozen=True)
class ChainReport:
    bar_lower: LyapunovBound
    bar_upper: LyapunovBound
    check_lower: LyapunovBound
    check_size: int
    eps_rows: list[SweepRow]
    hat_upper: LyapunovBound
    hat_greedy: LyapunovBound
    lifts: dict[float, Any]
    checks: list[ChainCheck]

    @property
    def consistent(self) -> bool:
        return all(c.holds for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "bar": {"lower": self.bar_lower.to_dict(), "upper": self.bar_upper.to_dict()},
            "check": {"lower": self.check_lower.to_dict(), "sampled_modes": self.check_size},
            "eps": [row.to_dict() for row in self.eps_rows],
            "hat": {"upper": self.hat_upper.to_dict(), "greedy_lower": self.hat_greedy.to_dict()},
            "lifts": {repr(eps): (lift.to_dict() if hasattr(lift, "to_dict") else lift)
                      for eps, lift in self.lifts.items()},
            "checks": [c.to_dict() for c in self.checks],
            "consistent": self.consistent,
        }


def _chain_checks(
    bar_lower: LyapunovBound,
    check_lower: LyapunovBound,
    rows: list[SweepRow],
    hat_upper: LyapunovBound,
    hat_greedy: LyapunovBound,
    tol: float,
    trend_slack: float,
) -> list[ChainCheck]:
    def check(name: str, lhs: float, rhs: float) -> ChainCheck:
        return ChainCheck(name, lhs, rhs, bool(lhs <= rhs + tol))

    checks = [
        check("bar.lower <= check.lower", bar_lower.value, check_lower.value),
        check("check.lower <= hat.upper", check_lower.value, hat_upper.value),
        check("hat.greedy <= hat.upper", hat_greedy.value, hat_upper.value),
    ]
    for row in rows:
        checks.append(check(f"eps={row.epsilon!r}: lower <= upper", row.lower.value, row.upper.value))
        checks.append(check(f"eps={row.epsilon!r}: lower <= hat.upper", row.lower.value, hat_upper.value))
    if rows:
        smallest = min(rows, key=lambda r: r.epsilon)
        checks.append(check(
            f"check.lower <= eps={smallest.epsilon!r} lower + {trend_slack!r}",
            check_lower.value, smallest.lower.value + trend_slack,
        ))
    return checks


def chain_experiment(
    sys: BlockSystem,
    config: ChainConfig | None = None,
    progress_callback: Callable[[int, str], None] | None = None,
) -> ChainReport:
    """Bounds for λ(Σ̄), λ(Σ̌), λ(Σ_ε) on the ε list and λ(Σ̂).

    Requires the fast-stability verdict HOLDS. The Σ̄ witness warm-starts the
    Σ̌ search (𝓜̄ comes first in the sample) and, when λ(Σ̌) lower > 0, the
    Σ̌ witness is lifted to every ε and warm-starts the Σ_ε search.
    """
    from slyap.analysis import auxiliary, inclusion

    config = config or ChainConfig()

    def _progress(pct: int, stage: str) -> None:
        logger.info("chain %3d%% %s", pct, stage)
        if progress_callback:
            try:
                progress_callback(pct, stage)
            except Exception:
                pass

    assumption = sys.assumption(search=config.search)
    if not assumption.holds:
        raise AssumptionError(
            f"fast subsystem not certified ES (verdict {assumption.verdict.value}, "
            f"upper bound {assumption.upper.value:.6g}); the comparison chain requires it"
        )
    decay = assumption.decay

    _progress(5, "reduced system")
    bar = auxiliary.reduced_modes(sys)
    bar_lower = lambda_lower(bar, config.search)
    bar_upper = lambda_upper_lognorm(bar)

    _progress(20, "check system")
    sample = auxiliary.sample_check_modes(sys, config.check, config.check_signals)
    check_lower = lambda_lower([lam for lam, _ in sample], config.search,
                               warm_start=(bar_lower.certificate.signal,))

    warm: dict[float, list[PwcSignal]] = {}
    lifts: dict[float, Any] = {}
    if check_lower.value > 0:
        witness = check_lower.certificate
        blocks = [(auxiliary.lambda_parts(sys, sample[idx][1]), dwell) for idx, dwell in witness.signal.pieces]
        for eps in config.eps_list:
            once = blocks[0][0].signal.rescaled(eps)
            for parts, _ in blocks[1:]:
                once = once.concat(parts.signal.rescaled(eps))
            warm[eps] = [once]
            try:
                lift = auxiliary.lift_check_certificate(sys, blocks, eps)
            except PreconditionError as exc:
                logger.warning("No lift at eps=%g: %s", eps, exc)
                lifts[eps] = {"error": str(exc)}
                continue
            lifts[eps] = lift
            warm[eps].append(lift.signal)

    _progress(45, "singularly perturbed family")
    rows = sweep_eps(sys, config.eps_list, config.search, warm, tol=config.consistency_tol)

    _progress(65, "hat inclusion")
    hat_upper = inclusion.hat_upper_bound(sys, config.hat, config.kset, decay)
    hat_greedy = inclusion.hat_lower_greedy(sys, None, config.hat, config.kset, decay)

    checks = _chain_checks(bar_lower, check_lower, rows, hat_upper, hat_greedy,
                           config.consistency_tol + config.kset.tolerance * _cloud_slack(sys),
                           config.trend_slack)
    _progress(100, "done")
    return ChainReport(
        bar_lower=bar_lower,
        bar_upper=bar_upper,
        check_lower=check_lower,
        check_size=len(sample),
        eps_rows=rows,
        hat_upper=hat_upper,
        hat_greedy=hat_greedy,
        lifts=lifts,
        checks=checks,
    )


def _cloud_slack(sys: BlockSystem) -> float:
    """max‖B‖: a cloud tolerance τ moves x̂ᵀB y by at most ‖B‖τ."""
    return max(op_norm(mode.B) for mode in sys.modes)
