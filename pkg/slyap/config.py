"""Settings for slyap analyses.

Every config is a frozen dataclass built from a module-level defaults
dictionary merged with caller overrides, ``{**DEFAULTS, **overrides}``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from typing import Any

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------

DEFAULT_SEARCH: dict[str, Any] = {
    "max_pieces": 6,          # L
    "dwell_min": 1e-2,
    "dwell_max": 1e1,
    "restarts": 64,
    "iterations": 200,        # coordinate-descent steps
    "step": 0.1,              # multiplicative dwell perturbation
    "horizon": None,          # cap on witness duration, None = uncapped
    "seed": 0,
    "threads": 1,
}

DEFAULT_CHECK_SAMPLE: dict[str, Any] = {
    "max_pieces": 4,
    "dwell_min": 0.1,
    "dwell_max": 10.0,
    "grid_size": 9,           # log-grid points on [dwell_min, dwell_max]
    "count": 64,
    "seed": 0,
    "threads": 1,
}

DEFAULT_KSET: dict[str, Any] = {
    "signals": 32,
    "horizon": None,          # post burn-in duration, None = 200/δ
    "samples_per_decay": 20,  # sample_dt = 1/(samples_per_decay·δ)
    "tolerance": 0.05,
    "seed": 0,
}

DEFAULT_HAT: dict[str, Any] = {
    "sphere_samples": None,   # None = 256·(n-1), n ≥ 2
    "greedy_horizon": 2.0,
    "greedy_step": 2e-4,
}

DEFAULT_TOLERANCES: dict[str, float] = {
    "verdict": 1e-9,
    "kset": 0.05,
    "quadrature": 1e-10,
    "rcond": 1e-12,
    "consistency": 1e-9,
}

DEFAULT_EPS_LADDER: tuple[float, ...] = tuple(2.0 ** -k for k in range(3, 11))


def _build(cls: type, defaults: dict[str, Any], overrides: dict[str, Any] | None) -> Any:
    cfg = {**defaults, **(overrides or {})}
    known = {f.name for f in fields(cls)}
    unknown = set(cfg) - known
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} settings: {sorted(unknown)}")
    return cls(**cfg)


# ---------------------------------------------------------------------------
# Config records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    max_pieces: int = DEFAULT_SEARCH["max_pieces"]
    dwell_min: float = DEFAULT_SEARCH["dwell_min"]
    dwell_max: float = DEFAULT_SEARCH["dwell_max"]
    restarts: int = DEFAULT_SEARCH["restarts"]
    iterations: int = DEFAULT_SEARCH["iterations"]
    step: float = DEFAULT_SEARCH["step"]
    horizon: float | None = DEFAULT_SEARCH["horizon"]
    seed: int = DEFAULT_SEARCH["seed"]
    threads: int = DEFAULT_SEARCH["threads"]

    def __post_init__(self) -> None:
        if self.max_pieces < 1:
            raise ValueError("max_pieces must be >= 1")
        if not 0 < self.dwell_min <= self.dwell_max:
            raise ValueError("dwell bounds must satisfy 0 < dwell_min <= dwell_max")
        if not 0 < self.step < 1:
            raise ValueError("step must lie in (0, 1)")

    @classmethod
    def from_settings(cls, settings: dict[str, Any] | None = None) -> SearchConfig:
        return _build(cls, DEFAULT_SEARCH, settings)


@dataclass(frozen=True)
class CheckSampleConfig:
    max_pieces: int = DEFAULT_CHECK_SAMPLE["max_pieces"]
    dwell_min: float = DEFAULT_CHECK_SAMPLE["dwell_min"]
    dwell_max: float = DEFAULT_CHECK_SAMPLE["dwell_max"]
    grid_size: int = DEFAULT_CHECK_SAMPLE["grid_size"]
    count: int = DEFAULT_CHECK_SAMPLE["count"]
    seed: int = DEFAULT_CHECK_SAMPLE["seed"]
    threads: int = DEFAULT_CHECK_SAMPLE["threads"]

    def __post_init__(self) -> None:
        if self.max_pieces < 1:
            raise ValueError("max_pieces must be >= 1")
        if not 0 < self.dwell_min <= self.dwell_max:
            raise ValueError("dwell bounds must satisfy 0 < dwell_min <= dwell_max")
        if self.count < 0 or self.grid_size < 1:
            raise ValueError("count must be >= 0 and grid_size >= 1")

    @classmethod
    def from_settings(cls, settings: dict[str, Any] | None = None) -> CheckSampleConfig:
        return _build(cls, DEFAULT_CHECK_SAMPLE, settings)


@dataclass(frozen=True)
class KSetConfig:
    signals: int = DEFAULT_KSET["signals"]
    horizon: float | None = DEFAULT_KSET["horizon"]
    samples_per_decay: int = DEFAULT_KSET["samples_per_decay"]
    tolerance: float = DEFAULT_KSET["tolerance"]
    seed: int = DEFAULT_KSET["seed"]

    def __post_init__(self) -> None:
        if self.signals < 1 or self.samples_per_decay < 1:
            raise ValueError("signals and samples_per_decay must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")

    @classmethod
    def from_settings(cls, settings: dict[str, Any] | None = None) -> KSetConfig:
        return _build(cls, DEFAULT_KSET, settings)


@dataclass(frozen=True)
class HatConfig:
    sphere_samples: int | None = DEFAULT_HAT["sphere_samples"]
    greedy_horizon: float = DEFAULT_HAT["greedy_horizon"]
    greedy_step: float = DEFAULT_HAT["greedy_step"]

    @classmethod
    def from_settings(cls, settings: dict[str, Any] | None = None) -> HatConfig:
        return _build(cls, DEFAULT_HAT, settings)


@dataclass(frozen=True)
class ChainConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    check: CheckSampleConfig = field(default_factory=CheckSampleConfig)
    kset: KSetConfig = field(default_factory=KSetConfig)
    hat: HatConfig = field(default_factory=HatConfig)
    eps_list: tuple[float, ...] = (0.1, 0.01, 0.001)
    check_signals: tuple[Any, ...] = ()     # extra PwcSignal generators for 𝓜̌
    consistency_tol: float = DEFAULT_TOLERANCES["consistency"]
    trend_slack: float = 0.5              # check.lower <= smallest-eps lower + slack


# ---------------------------------------------------------------------------
# CLI run configuration
# ---------------------------------------------------------------------------

def resolve_threads(requested: int | None = None) -> int:
    """``--threads`` wins, then ``SLYAP_THREADS``, then 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("SLYAP_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = DEFAULT_SEARCH["seed"]
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    max_pieces: int = DEFAULT_SEARCH["max_pieces"]
    dwell_min: float = DEFAULT_SEARCH["dwell_min"]
    dwell_max: float = DEFAULT_SEARCH["dwell_max"]
    restarts: int = DEFAULT_SEARCH["restarts"]
    iterations: int = DEFAULT_SEARCH["iterations"]
    output_format: str = "json"
    threads: int = DEFAULT_SEARCH["threads"]
    out: str | None = None

    def __post_init__(self) -> None:
        bad = [k for k, v in self.tolerances.items() if not v > 0]
        if bad:
            raise ValueError(f"tolerances must be > 0: {bad}")
        if self.max_pieces < 1:
            raise ValueError("max_pieces must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")

    def search(self, **overrides: Any) -> SearchConfig:
        return SearchConfig.from_settings({
            "max_pieces": self.max_pieces,
            "dwell_min": self.dwell_min,
            "dwell_max": self.dwell_max,
            "restarts": self.restarts,
            "iterations": self.iterations,
            "seed": self.seed,
            "threads": self.threads,
            **overrides,
        })

    def check_sample(self, **overrides: Any) -> CheckSampleConfig:
        return CheckSampleConfig.from_settings({"seed": self.seed, "threads": self.threads, **overrides})

    def kset(self, **overrides: Any) -> KSetConfig:
        return KSetConfig.from_settings({
            "seed": self.seed,
            "tolerance": self.tolerances.get("kset", DEFAULT_KSET["tolerance"]),
            **overrides,
        })

    def chain(self, **overrides: Any) -> ChainConfig:
        return ChainConfig(
            search=self.search(),
            check=self.check_sample(),
            kset=self.kset(),
            consistency_tol=self.tolerances.get("consistency", DEFAULT_TOLERANCES["consistency"]),
            **overrides,
        )
