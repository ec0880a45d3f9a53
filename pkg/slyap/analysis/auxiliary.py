"""Auxiliary systems of the slow dynamics.

* Σ̄: the reduced modes A − BD⁻¹C.
* Σ̌: the matrices Λ(T, σ) obtained by running the fast dynamics along a
  signal σ on [0, T] and averaging the slow right-hand side over its
  periodic regime.
* the first-order ε-expansion of the period flow at time εT, and the lift of
  a Σ̌ instability certificate to an explicit signal of Σ_ε.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.integrate import quad_vec

from slyap.analysis.flows import FlowResult, eps_flow, flow, scaled_mode
from slyap.analysis.matkit import (
    RCOND_THRESHOLD,
    integrated_exponentials,
    invert,
    mat_exp,
    op_norm,
    spectral_radius,
    vanloan_integral,
)
from slyap.analysis.model import BlockMode, BlockSystem, DecayEstimate, PwcSignal, periodize
from slyap.analysis.search import STREAM_CHECK_SAMPLE
from slyap.batch.processor import BatchProcessor
from slyap.config import DEFAULT_EPS_LADDER, DEFAULT_TOLERANCES, CheckSampleConfig
from slyap.errors import PreconditionError, SingularMatrixError, ValidationError, Violation

logger = logging.getLogger(__name__)

_MONODROMY_ROLE = "I - PhiD (fast monodromy not contractive)"


# ---------------------------------------------------------------------------
# Σ̄
# ---------------------------------------------------------------------------

def reduced_modes(sys: BlockSystem, rcond_threshold: float = RCOND_THRESHOLD) -> list[np.ndarray]:
    """A − BD⁻¹C for every mode, in order."""
    out = []
    for i, mode in enumerate(sys.modes):
        D_inv = invert(mode.D, f"D of mode {i}", rcond_threshold)
        out.append(mode.A - mode.B @ D_inv @ mode.C)
    return out


# ---------------------------------------------------------------------------
# Λ(T, σ)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LambdaParts:
    """Λ₀, Λ₁, Λ₂, Φ_D(T, 0) and Λ(T, σ) for one signal.

    Λ = (Λ₁ + Λ₂ (I − Φ_D)⁻¹ Λ₀) / T.
    """

    Lambda0: np.ndarray
    Lambda1: np.ndarray
    Lambda2: np.ndarray
    PhiD: np.ndarray
    Lambda: np.ndarray
    T: float
    signal: PwcSignal

    @property
    def signal_digest(self) -> str:
        return self.signal.digest

    @property
    def Q0(self) -> np.ndarray:
        """(I − Φ_D)⁻¹ Λ₀, the leading term of Q(ε)."""
        m = self.PhiD.shape[0]
        return invert(np.eye(m) - self.PhiD, _MONODROMY_ROLE) @ self.Lambda0

    def reconstruct(self) -> np.ndarray:
        return (self.Lambda1 + self.Lambda2 @ self.Q0) / self.T

    def to_dict(self) -> dict[str, Any]:
        return {
            "T": self.T,
            "pieces": self.signal.to_dict()["pieces"],
            "Lambda": self.Lambda.tolist(),
            "parts": {
                "Lambda0": self.Lambda0.tolist(),
                "Lambda1": self.Lambda1.tolist(),
                "Lambda2": self.Lambda2.tolist(),
                "PhiD": self.PhiD.tolist(),
            },
        }


def lambda_parts(
    sys: BlockSystem,
    sig: PwcSignal,
    rcond_threshold: float = RCOND_THRESHOLD,
) -> LambdaParts:
    """Accumulate Λ₀, Λ₁, Λ₂ and Φ_D piece by piece and assemble Λ(T, σ).

    Inside a piece of length h with constant (A, B, C, D), Λ₀(s) moves along
    Λ₀ ↦ Φ(s)Λ₀ + J(s), so ∫(A + BΛ₀(s))ds = Ah + B(EΛ₀ + G) with Φ, J, E, G
    from one augmented exponential.
    """
    sig.check_indices(len(sys))
    n, m = sys.n, sys.m
    Lambda0 = np.zeros((m, n))
    Lambda1 = np.zeros((n, n))
    Lambda2 = np.zeros((n, m))
    PhiD = np.eye(m)
    cache: dict[tuple[int, float], tuple[np.ndarray, ...]] = {}
    for idx, h in sig.pieces:
        mode = sys.modes[idx]
        if (idx, h) not in cache:
            cache[idx, h] = integrated_exponentials(mode.D, mode.C, h)
        Phi, J, E, G = cache[idx, h]
        Lambda1 = Lambda1 + mode.A * h + mode.B @ (E @ Lambda0 + G)
        Lambda2 = Lambda2 + mode.B @ E @ PhiD
        Lambda0 = Phi @ Lambda0 + J
        PhiD = Phi @ PhiD

    T = sig.total_duration
    try:
        resolvent = invert(np.eye(m) - PhiD, _MONODROMY_ROLE, rcond_threshold)
    except SingularMatrixError:
        logger.debug("Singular I - PhiD for signal %s", sig.digest[:12])
        raise
    Lambda = (Lambda1 + Lambda2 @ resolvent @ Lambda0) / T
    return LambdaParts(Lambda0=Lambda0, Lambda1=Lambda1, Lambda2=Lambda2,
                       PhiD=PhiD, Lambda=Lambda, T=T, signal=sig)


# ---------------------------------------------------------------------------
# 𝓜̌ sampling
# ---------------------------------------------------------------------------

def _random_signal(n_modes: int, config: CheckSampleConfig, index: int) -> PwcSignal:
    rng = np.random.default_rng([config.seed, STREAM_CHECK_SAMPLE, index])
    grid = np.geomspace(config.dwell_min, config.dwell_max, config.grid_size)
    k = 1 + index % config.max_pieces
    log_lo, log_hi = math.log(config.dwell_min), math.log(config.dwell_max)
    pieces = []
    for _ in range(k):
        mode = int(rng.integers(0, n_modes))
        if rng.random() < 0.5:
            dwell = float(grid[rng.integers(0, len(grid))])
        else:
            dwell = float(math.exp(rng.uniform(log_lo, log_hi)))
        pieces.append((mode, dwell))
    return PwcSignal(tuple(pieces))


def sample_check_modes(
    sys: BlockSystem,
    config: CheckSampleConfig | None = None,
    extra_signals: Sequence[PwcSignal] = (),
) -> list[tuple[np.ndarray, PwcSignal]]:
    """Finite sample of 𝓜̌ with the signal that generated each matrix.

    The reduced modes come first (constant signals of dwell 1), then the
    extra signals, then ``config.count`` seeded random signals stratified by
    piece count. Signals whose fast monodromy is not contractive are dropped.
    """
    config = config or CheckSampleConfig()
    sample: list[tuple[np.ndarray, PwcSignal]] = [
        (bar, PwcSignal.constant(i, 1.0)) for i, bar in enumerate(reduced_modes(sys))
    ]
    for sig in extra_signals:
        sig.check_indices(len(sys))
    signals = list(extra_signals) + [_random_signal(len(sys), config, k) for k in range(config.count)]
    processor = BatchProcessor(max_workers=config.threads)
    results = processor.map(lambda sig: lambda_parts(sys, sig), signals)
    dropped = 0
    for sig, parts in zip(signals, results):
        if parts is None:
            dropped += 1
            continue
        sample.append((parts.Lambda, sig))
    if dropped:
        logger.warning("Dropped %d of %d sampled signals", dropped, len(signals))
    return sample


def check_modes_bound(sys: BlockSystem, decay: DecayEstimate) -> float:
    """Explicit bound on ‖Λ(T, σ)‖ over all T > 0 and all σ.

    C₁ = c·max(‖B‖, ‖C‖)·max(1, 1/α), C₂ = max‖A‖ + c·max‖B‖·max‖C‖/α,
    T̄ = log(2c)/α; the bound is C₂ + 2cC₁²(1 + T̄).
    """
    c, alpha = decay.c, decay.delta
    a_max = max(op_norm(mode.A) for mode in sys.modes)
    b_max = max(op_norm(mode.B) for mode in sys.modes)
    c_max = max(op_norm(mode.C) for mode in sys.modes)
    C1 = c * max(b_max, c_max) * max(1.0, 1.0 / alpha)
    C2 = a_max + c * b_max * c_max / alpha
    T_bar = math.log(2.0 * c) / alpha
    return C2 + 2.0 * c * C1 ** 2 * (1.0 + T_bar)


# ---------------------------------------------------------------------------
# ε-expansion of the period flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionRow:
    epsilon: float
    r1: float                  # ‖top-left of P⁻¹𝓜P − I − εT(Λ + μI)‖
    r2: float                  # ‖bottom-left of P⁻¹𝓜P‖
    expansion_error: float     # ‖𝓜(ε) − 𝓜₀ − ε𝓜₁‖
    lambda_estimate: np.ndarray
    richardson: np.ndarray

    @property
    def r1_scaled(self) -> float:
        return self.r1 / self.epsilon ** 2

    @property
    def r2_scaled(self) -> float:
        return self.r2 / self.epsilon

    @property
    def expansion_scaled(self) -> float:
        return self.expansion_error / self.epsilon ** 2

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "r1": self.r1,
            "r2": self.r2,
            "r1_over_eps2": self.r1_scaled,
            "r2_over_eps": self.r2_scaled,
            "expansion_over_eps2": self.expansion_scaled,
            "lambda_estimate": self.lambda_estimate.tolist(),
            "richardson": self.richardson.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ExpansionReport:
    M0: np.ndarray
    M1: np.ndarray
    Q0: np.ndarray
    mu: float
    parts: LambdaParts
    residuals: list[ExpansionRow] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu": self.mu,
            "M0": self.M0.tolist(),
            "M1": self.M1.tolist(),
            "Q0": self.Q0.tolist(),
            "Lambda": self.parts.Lambda.tolist(),
            "residuals": [row.to_dict() for row in self.residuals],
        }


def _split_generators(mode: BlockMode, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """N₀ = [[0, 0], [C, D]] and N₁ = [[A + μI, B], [0, μI]]."""
    n, m = mode.n, mode.m
    N0 = np.block([[np.zeros((n, n)), np.zeros((n, m))], [mode.C, mode.D]])
    N1 = np.block([[mode.A + mu * np.eye(n), mode.B], [np.zeros((m, n)), mu * np.eye(m)]])
    return N0, N1


def _first_order_term(sys: BlockSystem, sig: PwcSignal, mu: float, method: str, tol: float) -> np.ndarray:
    """𝓜₁ = ∫₀ᵀ Φ_{N₀}(T, τ) N₁(τ) Φ_{N₀}(τ, 0) dτ, one integral per piece."""
    d = sys.n + sys.m
    M1 = np.zeros((d, d))
    before = np.eye(d)                      # Φ_{N₀} up to the current piece
    for idx, h in sig.pieces:
        N0, N1 = _split_generators(sys.modes[idx], mu)
        if method == "vanloan":
            inner = vanloan_integral(N0, N1, h)
        elif method == "quad":
            inner, _ = quad_vec(lambda tau: mat_exp(N0, h - tau) @ N1 @ mat_exp(N0, tau),
                                0.0, h, epsabs=tol, epsrel=tol)
        else:
            raise ValueError(f"Unknown method: {method}")
        step = mat_exp(N0, h)
        M1 = step @ M1 + inner @ before
        before = step @ before
    return M1


def _period_flow(sys: BlockSystem, sig: PwcSignal, mu: float, eps: float) -> np.ndarray:
    """𝓜(ε): flow of N₀ + εN₁ over σ in fast time."""
    shifted = BlockSystem(sys.n, sys.m, tuple(
        BlockMode(A=mode.A + mu * np.eye(sys.n), B=mode.B, C=mode.C, D=mode.D + eps * mu * np.eye(sys.m))
        for mode in sys.modes
    ))
    return flow([scaled_mode(mode, eps) for mode in shifted.modes], sig).phi


def expansion_report(
    sys: BlockSystem,
    sig: PwcSignal,
    mu: float = 0.0,
    eps_list: Sequence[float] = DEFAULT_EPS_LADDER,
    method: str = "quad",
    quad_tol: float = DEFAULT_TOLERANCES["quadrature"],
) -> ExpansionReport:
    """First-order expansion 𝓜(ε) = 𝓜₀ + ε𝓜₁ + O(ε²) and its residuals.

    With P = [[I, 0], [Q₀, I]], the top-left block of P⁻¹𝓜(ε)P is
    I + εT(Λ + μI) + O(ε²) and the bottom-left block is O(ε). Each row also
    carries f(ε) = (top-left − I)/(εT) − μI and its Richardson value
    2f(ε) − f(2ε).
    """
    parts = lambda_parts(sys, sig)
    n, m, T = sys.n, sys.m, parts.T
    Q0 = parts.Q0
    M0 = np.block([[np.eye(n), np.zeros((n, m))], [parts.Lambda0, parts.PhiD]])
    M1 = _first_order_term(sys, sig, mu, method, quad_tol)
    P = np.block([[np.eye(n), np.zeros((n, m))], [Q0, np.eye(m)]])
    P_inv = np.block([[np.eye(n), np.zeros((n, m))], [-Q0, np.eye(m)]])
    target = parts.Lambda + mu * np.eye(n)

    def top_left_estimate(eps: float) -> tuple[np.ndarray, np.ndarray]:
        X = P_inv @ _period_flow(sys, sig, mu, eps) @ P
        return X, (X[:n, :n] - np.eye(n)) / (eps * T) - mu * np.eye(n)

    rows = []
    for eps in sorted({float(e) for e in eps_list}, reverse=True):
        if not (math.isfinite(eps) and eps > 0):
            raise ValidationError(Violation(None, "epsilon", f"must be a positive real, got {eps}"))
        X, f_eps = top_left_estimate(eps)
        _, f_2eps = top_left_estimate(2.0 * eps)
        M_eps = P @ X @ P_inv
        rows.append(ExpansionRow(
            epsilon=eps,
            r1=op_norm(X[:n, :n] - np.eye(n) - eps * T * target),
            r2=op_norm(X[n:, :n]),
            expansion_error=op_norm(M_eps - M0 - eps * M1),
            lambda_estimate=f_eps,
            richardson=2.0 * f_eps - f_2eps,
        ))
    return ExpansionReport(M0=M0, M1=M1, Q0=Q0, mu=mu, parts=parts, residuals=rows)


# ---------------------------------------------------------------------------
# Certificate lifting
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LiftResult:
    signal: PwcSignal
    flow: FlowResult
    rho: float
    repetitions: tuple[int, ...]
    epsilon: float

    @property
    def t_eps(self) -> float:
        return self.flow.t

    @property
    def rate(self) -> float:
        return math.log(self.rho) / self.t_eps if self.rho > 0 else -math.inf

    @property
    def rho_per_repetition(self) -> float:
        return self.rho ** (1.0 / sum(self.repetitions))

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "repetitions": list(self.repetitions),
            "t_eps": self.t_eps,
            "rho": self.rho,
            "rho_per_repetition": self.rho_per_repetition,
            "rate": self.rate,
            "pieces": len(self.signal.pieces),
        }


def lift_check_certificate(
    sys: BlockSystem,
    cert: Sequence[tuple[LambdaParts, float]],
    epsilon: float,
) -> LiftResult:
    """Turn a Σ̌ certificate ρ(e^{t_ℓΛ_ℓ}···e^{t₁Λ₁}) > 1 into a Σ_ε witness.

    Block k contributes N_k = ⌊t_k/(εT_k)⌋ repetitions of σ_k(·/ε).
    """
    if not cert:
        raise PreconditionError("empty certificate")
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValidationError(Violation(None, "epsilon", f"must be a positive real, got {epsilon}"))
    product = np.eye(sys.n)
    for parts, t in cert:
        if not t > 0:
            raise PreconditionError(f"certificate duration must be positive, got {t}")
        product = mat_exp(parts.Lambda, t) @ product
    rho_check = spectral_radius(product)
    if rho_check <= 1.0:
        raise PreconditionError(f"certificate is not an instability witness: rho = {rho_check:.12g} <= 1")

    repetitions = []
    signal: PwcSignal | None = None
    for k, (parts, t) in enumerate(cert):
        if epsilon * parts.T >= t:
            raise PreconditionError(
                f"epsilon {epsilon:g} too large for block {k}: eps*T = {epsilon * parts.T:.6g} >= t = {t:.6g}")
        count = int(math.floor(t / (epsilon * parts.T) * (1.0 + 1e-12)))
        repetitions.append(count)
        block = periodize(parts.signal.rescaled(epsilon), count)
        signal = block if signal is None else signal.concat(block)

    res = eps_flow(sys, signal, epsilon)
    rho = spectral_radius(res.phi)
    logger.debug("Lifted certificate at eps=%g: N=%s rho=%.12g", epsilon, repetitions, rho)
    return LiftResult(signal=signal, flow=res, rho=rho, repetitions=tuple(repetitions), epsilon=epsilon)
