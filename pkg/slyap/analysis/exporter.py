"""Text exporters for slyap results (CSV tables, JSON reports, certificates)."""

from __future__ import annotations

import enum
import io
import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from slyap.analysis.flows import Trajectory
from slyap.analysis.lyapunov import SweepRow
from slyap.analysis.model import PwcSignal, validate_signal
from slyap.errors import ValidationError, Violation


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def fmt(value: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return "%.17g" % value


def jsonable(obj: Any) -> Any:
    """Plain JSON data; non-finite floats become null."""
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def _csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def load_certificate(path: str | Path, n_modes: int | None = None) -> list[tuple[PwcSignal, float]]:
    """Read ``{"blocks": [{"pieces": [[i, d], ...], "t": t}, ...]}``."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(Violation(None, str(path), f"invalid JSON: {exc}")) from exc
    blocks = raw.get("blocks") if isinstance(raw, dict) else None
    if not isinstance(blocks, list) or not blocks:
        raise ValidationError(Violation(None, "blocks", "expected a non-empty list"))
    out = []
    for k, block in enumerate(blocks):
        if not isinstance(block, dict) or "t" not in block:
            raise ValidationError(Violation(None, f"blocks[{k}]", "expected an object with 'pieces' and 't'"))
        t = block["t"]
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not (math.isfinite(t) and t > 0):
            raise ValidationError(Violation(None, f"blocks[{k}].t", f"must be a positive real, got {t!r}"))
        out.append((validate_signal(block, n_modes), float(t)))
    return out


# ---------------------------------------------------------------------------
# Exporter class
# ---------------------------------------------------------------------------

class ReportExporter:
    """Render results as CSV or JSON text and write them to disk."""

    def export_json(self, obj: Any) -> str:
        return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"

    def export_trajectory_csv(self, traj: Trajectory, n: int, m: int) -> str:
        """Columns ``t,x1..xn,y1..ym``; a subsystem run (n = 0) has only y."""
        if traj.states.shape[1] != n + m:
            raise ValueError(f"trajectory has {traj.states.shape[1]} columns, expected {n + m}")
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{j + 1}" for j in range(m)]
        rows = [[fmt(t)] + [fmt(v) for v in state] for t, state in zip(traj.times, traj.states)]
        return _csv(header, rows)

    def export_sweep_csv(self, rows: Sequence[SweepRow]) -> str:
        header = ["epsilon", "lower", "upper", "eps_times_lower", "verdict"]
        body = [
            [fmt(r.epsilon), fmt(r.lower.value), fmt(r.upper.value), fmt(r.eps_times_lower), r.verdict.value]
            for r in rows
        ]
        return _csv(header, body)

    def export_certificate(self, blocks: Sequence[tuple[PwcSignal, float]]) -> str:
        return self.export_json({
            "blocks": [{"pieces": sig.to_dict()["pieces"], "t": t} for sig, t in blocks],
        })

    def write(self, text: str, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path
