"""The planar two-mode example: a switched system with ES reduced dynamics
that becomes unstable for small ε.

Modes (n = m = 1)::

    M1 = [[-1, 1], [0, -0.1]]      M2 = [[-3, 0], [2, -0.1]]

Σ̄ = {-1, -3} is ES, yet switching at rate 1/ε between the two modes gives
Λ(2, σ) = -2 + 100(1 - e^{-0.2})⁻¹(1 - e^{-0.1})² ≈ 2.99582 > 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from slyap.analysis.auxiliary import lambda_parts, reduced_modes
from slyap.analysis.exporter import ReportExporter
from slyap.analysis.flows import eps_flow, simulate
from slyap.analysis.lyapunov import chain_experiment, sweep_eps, sweep_trend
from slyap.analysis.matkit import as_matrix, spectral_radius
from slyap.analysis.model import BlockMode, BlockSystem, PwcSignal, periodize
from slyap.config import ChainConfig
from slyap.errors import DimensionError, PreconditionError, Violation

logger = logging.getLogger(__name__)

TRAJ_EPS = 0.1
TRAJ_X0 = (1.0, 1.0)
TRAJ_HORIZON = 20.0
TRAJ_DT = 0.01
RHO_EPS = (0.1, 0.05, 0.01)


def example_system() -> BlockSystem:
    return BlockSystem(n=1, m=1, modes=(
        BlockMode(A=[[-1.0]], B=[[1.0]], C=[[0.0]], D=[[-0.1]]),
        BlockMode(A=[[-3.0]], B=[[0.0]], C=[[2.0]], D=[[-0.1]]),
    ))


def example_signal() -> PwcSignal:
    """Mode 1 on [0, 1), mode 2 on [1, 2)."""
    return PwcSignal(((0, 1.0), (1, 1.0)))


def example_lambda_closed_form() -> float:
    return -2.0 + 100.0 * (1.0 - math.exp(-0.1)) ** 2 / (1.0 - math.exp(-0.2))


# ---------------------------------------------------------------------------
# Γ condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaCheck:
    gamma: float
    det_product: float
    threshold: float
    holds: bool

    def to_dict(self) -> dict[str, Any]:
        return {"gamma": self.gamma, "det_product": self.det_product,
                "threshold": self.threshold, "holds": self.holds}


def _det2(M: np.ndarray) -> float:
    return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])


def gamma_sp5(M1: Any, M2: Any) -> GammaCheck:
    """Γ = ½(tr M₁ tr M₂ − tr(M₁M₂)) against −sqrt(det M₁ det M₂)."""
    M1, M2 = as_matrix(M1, "M1"), as_matrix(M2, "M2")
    for role, M in (("M1", M1), ("M2", M2)):
        if M.shape != (2, 2):
            raise DimensionError(Violation(None, role, f"expected a 2x2 matrix, got shape {M.shape}"))
    gamma = 0.5 * (np.trace(M1) * np.trace(M2) - np.trace(M1 @ M2))
    det_product = _det2(M1) * _det2(M2)
    if det_product < 0:
        raise PreconditionError(f"det M1 * det M2 = {det_product:.6g} < 0, threshold undefined")
    threshold = -math.sqrt(det_product)
    return GammaCheck(gamma=float(gamma), det_product=det_product,
                      threshold=threshold, holds=bool(gamma < threshold))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class ExampleReport:
    gamma: float
    det_product: float
    sp5_holds: bool
    bar_modes: list[float]
    lambda_check_value: float
    rho_at_eps: list[tuple[float, float]]
    figure1_csv_path: str
    files: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma": self.gamma,
            "det_product": self.det_product,
            "sp5_holds": self.sp5_holds,
            "bar_modes": self.bar_modes,
            "lambda_check_value": self.lambda_check_value,
            "rho_at_eps": [[e, r] for e, r in self.rho_at_eps],
            "figure1_csv_path": self.figure1_csv_path,
        }


def period_rho(sys: BlockSystem, sig: PwcSignal, eps: float) -> float:
    """ρ of the Σ_ε flow over one period of σ(·/ε)."""
    return spectral_radius(eps_flow(sys, sig.rescaled(eps), eps).phi)


def trajectory_signal(eps: float = TRAJ_EPS, horizon: float = TRAJ_HORIZON) -> PwcSignal:
    period = example_signal().rescaled(eps)
    return periodize(period, int(round(horizon / period.total_duration)))


def run_example(
    out_dir: str | Path,
    config: ChainConfig | None = None,
    sweep_eps_list: Sequence[float] = RHO_EPS,
    progress_callback: Callable[[int, str], None] | None = None,
) -> ExampleReport:
    """Write figure1.csv, lambda.json, gamma.json, sweep.csv and chain.json."""
    config = config or ChainConfig(check_signals=(example_signal(),))
    out = Path(out_dir)
    exporter = ReportExporter()
    sys = example_system()
    sig = example_signal()

    logger.info("Example: Gamma check and Lambda")
    blocks = [mode.block() for mode in sys.modes]
    gamma = gamma_sp5(blocks[0], blocks[1])
    parts = lambda_parts(sys, sig)
    bar = [float(M[0, 0]) for M in reduced_modes(sys)]
    rho_at_eps = [(eps, period_rho(sys, sig, eps)) for eps in RHO_EPS]

    logger.info("Example: divergent trajectory")
    traj = simulate(sys, trajectory_signal(), TRAJ_EPS, TRAJ_X0, TRAJ_DT)
    traj_path = exporter.write(exporter.export_trajectory_csv(traj, sys.n, sys.m), out / "figure1.csv")

    exporter.write(exporter.export_json(parts), out / "lambda.json")
    exporter.write(exporter.export_json({**gamma.to_dict(), "M1": blocks[0], "M2": blocks[1]}),
                   out / "gamma.json")

    logger.info("Example: eps sweep")
    warm = {eps: [sig.rescaled(eps)] for eps in sweep_eps_list}
    rows = sweep_eps(sys, sweep_eps_list, config.search, warm)
    exporter.write(exporter.export_sweep_csv(rows), out / "sweep.csv")

    logger.info("Example: comparison chain")
    chain = chain_experiment(sys, config, progress_callback)
    exporter.write(exporter.export_json({**chain.to_dict(), "trend": sweep_trend(rows)}), out / "chain.json")

    report = ExampleReport(
        gamma=gamma.gamma,
        det_product=gamma.det_product,
        sp5_holds=gamma.holds,
        bar_modes=bar,
        lambda_check_value=float(parts.Lambda[0, 0]),
        rho_at_eps=rho_at_eps,
        figure1_csv_path=str(traj_path),
        files={name: str(out / name) for name in
               ("figure1.csv", "lambda.json", "gamma.json", "sweep.csv", "chain.json")},
    )
    return report
