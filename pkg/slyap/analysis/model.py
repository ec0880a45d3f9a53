"""Block systems, switching signals, validation and the on-disk formats."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np

from slyap.config import DEFAULT_TOLERANCES, SearchConfig
from slyap.errors import DimensionError, ValidationError, Violation

if TYPE_CHECKING:
    from slyap.analysis.lyapunov import LyapunovBound

logger = logging.getLogger(__name__)

_BLOCKS = ("A", "B", "C", "D")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Modes and systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockMode:
    """One element (A B; C D) of the mode set."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        for name in _BLOCKS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[0]

    def block(self) -> np.ndarray:
        """The full (n+m)×(n+m) matrix [[A, B], [C, D]]."""
        return np.block([[self.A, self.B], [self.C, self.D]])


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """A finite mode set of block matrices sharing the dimensions (n, m)."""

    n: int
    m: int
    modes: tuple[BlockMode, ...]
    _assumption_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ValidationError(Violation(None, "modes", "empty mode set"))
        for i, mode in enumerate(self.modes):
            for name, shape in zip(_BLOCKS, _block_shapes(self.n, self.m)):
                if getattr(mode, name).shape != shape:
                    raise DimensionError(Violation(i, name, f"expected shape {shape}, got {getattr(mode, name).shape}"))

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def fast_modes(self) -> list[np.ndarray]:
        return [mode.D for mode in self.modes]

    @property
    def block_modes(self) -> list[np.ndarray]:
        return [mode.block() for mode in self.modes]

    def assumption(
        self,
        horizon: float | None = None,
        search: SearchConfig | None = None,
    ) -> AssumptionCheck:
        """Cached :func:`check_assumption_fast_stable`."""
        key = (horizon, search)
        if key not in self._assumption_cache:
            self._assumption_cache[key] = check_assumption_fast_stable(self, horizon, search)
        return self._assumption_cache[key]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "modes": [{name: getattr(mode, name).tolist() for name in _BLOCKS} for mode in self.modes],
        }


def _block_shapes(n: int, m: int) -> tuple[tuple[int, int], ...]:
    return (n, n), (n, m), (m, n), (m, m)


@dataclass(frozen=True)
class DecayEstimate:
    """Constants of a bound ‖Φ(t, s)‖ ≤ c·e^{-δ(t-s)}."""

    c: float
    delta: float

    def __post_init__(self) -> None:
        if not (self.c >= 1.0 and self.delta > 0.0):
            raise ValueError(f"DecayEstimate needs c >= 1 and delta > 0, got c={self.c}, delta={self.delta}")


# ---------------------------------------------------------------------------
# Switching signals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PwcSignal:
    """Piecewise-constant switching signal as (mode index, dwell) pieces."""

    pieces: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        pieces = tuple((int(i), float(d)) for i, d in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise ValidationError(Violation(None, "pieces", "signal has no pieces"))
        for k, (idx, dwell) in enumerate(pieces):
            if idx < 0:
                raise ValidationError(Violation(None, f"pieces[{k}]", f"negative mode index {idx}"))
            if not (math.isfinite(dwell) and dwell > 0.0):
                raise ValidationError(Violation(None, f"pieces[{k}]", f"dwell must be positive and finite, got {dwell}"))

    @property
    def total_duration(self) -> float:
        return math.fsum(d for _, d in self.pieces)

    @property
    def indices(self) -> set[int]:
        return {i for i, _ in self.pieces}

    @property
    def switch_times(self) -> np.ndarray:
        """Start time of every piece followed by the end time."""
        return np.concatenate([[0.0], np.cumsum([d for _, d in self.pieces])])

    @property
    def digest(self) -> str:
        text = ";".join(f"{i}:{d!r}" for i, d in self.pieces)
        return hashlib.sha256(text.encode()).hexdigest()

    def check_indices(self, n_modes: int) -> None:
        bad = sorted(i for i in self.indices if i >= n_modes)
        if bad:
            raise ValidationError(Violation(None, "pieces", f"mode indices {bad} out of range for {n_modes} modes"))

    def rescaled(self, factor: float) -> PwcSignal:
        """σ(·/factor): every dwell multiplied by *factor*."""
        return PwcSignal(tuple((i, d * factor) for i, d in self.pieces))

    def concat(self, other: PwcSignal) -> PwcSignal:
        return PwcSignal(self.pieces + other.pieces)

    def covering(self, horizon: float) -> PwcSignal:
        """Periodic extension of the signal cut at exactly *horizon*."""
        if not (math.isfinite(horizon) and horizon > 0.0):
            raise ValidationError(Violation(None, "horizon", f"must be positive and finite, got {horizon}"))
        pieces: list[tuple[int, float]] = []
        elapsed = 0.0
        while True:
            for idx, dwell in self.pieces:
                if elapsed + dwell >= horizon:
                    rest = horizon - elapsed
                    if rest > 0.0:
                        pieces.append((idx, rest))
                    return PwcSignal(tuple(pieces))
                pieces.append((idx, dwell))
                elapsed += dwell

    def to_dict(self) -> dict[str, Any]:
        return {"pieces": [[i, d] for i, d in self.pieces]}

    @classmethod
    def constant(cls, index: int, dwell: float) -> PwcSignal:
        return cls(((index, dwell),))


def periodize(sig: PwcSignal, repetitions: int) -> PwcSignal:
    """Concatenate *repetitions* copies of *sig*."""
    if repetitions < 1:
        raise ValidationError(Violation(None, "repetitions", f"must be a positive integer, got {repetitions}"))
    return PwcSignal(sig.pieces * repetitions)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_system(raw: Mapping[str, Any]) -> BlockSystem:
    """Check a parsed system description and return a BlockSystem.

    Every violation found is collected; a single ValidationError (or
    DimensionError when all problems are shape problems) lists them all.
    """
    violations: list[Violation] = []
    if not isinstance(raw, Mapping):
        raise ValidationError(Violation(None, "system", "expected a JSON object"))

    n, m = raw.get("n"), raw.get("m")
    for name, dim in (("n", n), ("m", m)):
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            violations.append(Violation(None, name, f"must be a positive integer, got {dim!r}"))
    modes_raw = raw.get("modes")
    if not isinstance(modes_raw, Sequence) or isinstance(modes_raw, (str, bytes)):
        violations.append(Violation(None, "modes", "must be a list"))
        modes_raw = []
    elif len(modes_raw) == 0:
        violations.append(Violation(None, "modes", "empty mode set"))
    if violations:
        raise ValidationError(violations)

    shape_only = True
    modes: list[BlockMode] = []
    for i, mode_raw in enumerate(modes_raw):
        if not isinstance(mode_raw, Mapping):
            violations.append(Violation(i, "mode", "expected an object with A, B, C, D"))
            shape_only = False
            continue
        blocks: dict[str, np.ndarray] = {}
        for name, shape in zip(_BLOCKS, _block_shapes(n, m)):
            if name not in mode_raw:
                violations.append(Violation(i, name, "missing"))
                shape_only = False
                continue
            try:
                arr = np.array(mode_raw[name], dtype=np.float64)
            except (TypeError, ValueError):
                violations.append(Violation(i, name, "not a rectangular array of numbers"))
                shape_only = False
                continue
            if arr.shape != shape:
                violations.append(Violation(i, name, f"expected shape {shape}, got {arr.shape}"))
                continue
            if not np.all(np.isfinite(arr)):
                violations.append(Violation(i, name, "non-finite entry"))
                shape_only = False
                continue
            blocks[name] = arr
        if len(blocks) == 4:
            modes.append(BlockMode(**blocks))

    if violations:
        raise (DimensionError if shape_only else ValidationError)(violations)
    return BlockSystem(n=n, m=m, modes=tuple(modes))


def validate_signal(raw: Mapping[str, Any], n_modes: int | None = None) -> PwcSignal:
    if not isinstance(raw, Mapping) or "pieces" not in raw:
        raise ValidationError(Violation(None, "signal", "expected an object with 'pieces'"))
    try:
        pieces = tuple((int(i), float(d)) for i, d in raw["pieces"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(Violation(None, "pieces", f"expected [mode_index, dwell] pairs ({exc})")) from exc
    sig = PwcSignal(pieces)
    if n_modes is not None:
        sig.check_indices(n_modes)
    return sig


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------

def _read_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(Violation(None, str(path), f"invalid JSON: {exc}")) from exc


def load_system(path: str | Path) -> BlockSystem:
    return validate_system(_read_json(path))


def load_signal(path: str | Path, n_modes: int | None = None) -> PwcSignal:
    return validate_signal(_read_json(path), n_modes)


def dump_system(sys: BlockSystem) -> str:
    return json.dumps(sys.to_dict(), indent=2)


def dump_signal(sig: PwcSignal) -> str:
    return json.dumps(sig.to_dict())


# ---------------------------------------------------------------------------
# Fast-subsystem assumption
# ---------------------------------------------------------------------------

class Verdict(str, enum.Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"
    UNDECIDED = "UNDECIDED"


@dataclass(frozen=True)
class AssumptionCheck:
    verdict: Verdict
    lower: LyapunovBound
    upper: LyapunovBound
    decay: DecayEstimate | None

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS


def check_assumption_fast_stable(
    sys: BlockSystem,
    horizon: float | None = None,
    search: SearchConfig | None = None,
    margin: float = DEFAULT_TOLERANCES["verdict"],
) -> AssumptionCheck:
    """Bound λ(Σ_D) from both sides and decide whether Σ_D is ES.

    The upper bound is the Euclidean log-norm sup, tightened by a quadratic
    norm when that one is not negative; the lower bound is a periodic
    spectral-radius witness on the D modes.
    """
    from slyap.analysis import lyapunov
    from slyap.config import SearchConfig

    search = search or SearchConfig()
    if horizon is not None:
        search = replace(search, horizon=horizon)

    fast = sys.fast_modes
    upper = lyapunov.lambda_upper_lognorm(fast)
    if upper.value >= -margin:
        quadratic = lyapunov.lambda_upper_quadratic(fast)
        if quadratic.value < upper.value:
            upper = quadratic
    lower = lyapunov.lambda_lower(fast, search)

    decay: DecayEstimate | None = None
    if upper.value < -margin:
        verdict = Verdict.HOLDS
        decay = DecayEstimate(c=float(upper.certificate.data.get("c", 1.0)), delta=-upper.value)
    elif lower.value > margin:
        verdict = Verdict.FAILS
    else:
        verdict = Verdict.UNDECIDED
    logger.debug("Fast-stability verdict %s: lower=%.6g upper=%.6g (%s)",
                 verdict.value, lower.value, upper.value, upper.certificate.method)
    return AssumptionCheck(verdict=verdict, lower=lower, upper=upper, decay=decay)
