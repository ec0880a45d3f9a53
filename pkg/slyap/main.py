"""Command-line entry point for slyap."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from slyap import __version__
from slyap.analysis import auxiliary, inclusion, lyapunov
from slyap.analysis.example import example_signal, run_example
from slyap.analysis.exporter import ReportExporter, fmt, load_certificate
from slyap.analysis.flows import eps_flow, flow, simulate
from slyap.analysis.matkit import spectral_radius
from slyap.analysis.model import BlockSystem, load_signal, load_system
from slyap.config import DEFAULT_TOLERANCES, HatConfig, RunConfig, resolve_threads
from slyap.errors import (
    AssumptionError,
    ConsistencyError,
    PreconditionError,
    SingularMatrixError,
    ValidationError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3
EXIT_INTERNAL = 4

_exporter = ReportExporter()


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, Any] = {}
    for name in ("max_pieces", "restarts", "iterations", "dwell_min", "dwell_max"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return RunConfig(
        seed=args.seed,
        tolerances=dict(DEFAULT_TOLERANCES),
        output_format=args.format,
        threads=resolve_threads(args.threads),
        out=args.out,
        **overrides,
    )


def _emit(text: str, args: argparse.Namespace) -> None:
    if args.out:
        _exporter.write(text, args.out)
    else:
        sys.stdout.write(text)


def _system(args: argparse.Namespace) -> BlockSystem:
    return load_system(args.system)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    sys_ = _system(args)
    _emit(_exporter.export_json({"valid": True, "n": sys_.n, "m": sys_.m, "modes": len(sys_)}), args)
    return EXIT_OK


def cmd_flow(args: argparse.Namespace) -> int:
    sys_ = _system(args)
    sig = load_signal(args.signal, len(sys_))
    res = eps_flow(sys_, sig, args.eps) if args.eps is not None else flow(sys_.block_modes, sig)
    rho = spectral_radius(res.phi)
    _emit(_exporter.export_json({
        "epsilon": args.eps,
        "t": res.t,
        "phi": res.phi,
        "rho": rho,
        "value": float(np.log(rho) / res.t) if rho > 0 else None,
        "signal_digest": res.signal_digest,
    }), args)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    sys_ = _system(args)
    sig = load_signal(args.signal, len(sys_))
    if args.horizon is not None:
        sig = sig.covering(args.horizon)
    traj = simulate(sys_, sig, args.eps, args.x0, args.dt)
    _emit(_exporter.export_trajectory_csv(traj, sys_.n, sys_.m), args)
    return EXIT_OK


def cmd_bar(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    bar = auxiliary.reduced_modes(_system(args), cfg.tolerances["rcond"])
    lower = lyapunov.lambda_lower(bar, cfg.search())
    upper = lyapunov.lambda_upper_lognorm(bar)
    verdict = lyapunov.classify(lower, upper, cfg.tolerances["verdict"], cfg.tolerances["consistency"])
    _emit(_exporter.export_json({"modes": bar, "lower": lower, "upper": upper, "verdict": verdict}), args)
    return EXIT_OK


def cmd_lambda_parts(args: argparse.Namespace) -> int:
    sys_ = _system(args)
    sig = load_signal(args.signal, len(sys_))
    _emit(_exporter.export_json(auxiliary.lambda_parts(sys_, sig)), args)
    return EXIT_OK


def cmd_check_sample(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    sys_ = _system(args)
    overrides: dict[str, Any] = {}
    if args.count is not None:
        overrides["count"] = args.count
    if args.max_pieces is not None:
        overrides["max_pieces"] = args.max_pieces
    extra = [load_signal(path, len(sys_)) for path in args.signal or ()]
    sample = auxiliary.sample_check_modes(sys_, cfg.check_sample(**overrides), extra)
    bar = lyapunov.lambda_lower([lam for lam, _ in sample[:len(sys_)]], cfg.search())
    lower = lyapunov.lambda_lower([lam for lam, _ in sample], cfg.search(),
                                  warm_start=(bar.certificate.signal,))
    if args.cert_out:
        if lower.value <= 0:
            raise PreconditionError(
                f"no certificate: check-system lower bound {lower.value:.6g} is not positive")
        blocks = [(sample[idx][1], dwell) for idx, dwell in lower.certificate.signal.pieces]
        _exporter.write(_exporter.export_certificate(blocks), args.cert_out)
    _emit(_exporter.export_json({
        "size": len(sample),
        "modes": [{"Lambda": lam, "pieces": sig.to_dict()["pieces"]} for lam, sig in sample],
        "lower": lower,
    }), args)
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    sys_ = _system(args)
    assumption = sys_.assumption(search=cfg.search())
    row = lyapunov.sweep_eps(sys_, [args.eps], cfg.search(),
                             margin=cfg.tolerances["verdict"], tol=cfg.tolerances["consistency"])[0]
    lower, upper = row.lower.shifted(args.mu), row.upper.shifted(args.mu)
    verdict = lyapunov.classify(lower, upper, cfg.tolerances["verdict"], cfg.tolerances["consistency"])
    _emit(_exporter.export_json({
        "epsilon": args.eps,
        "mu": args.mu,
        "fast_subsystem": assumption.verdict,
        "lower": lower,
        "upper": upper,
        "verdict": verdict,
    }), args)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    rows = lyapunov.sweep_eps(_system(args), args.eps_list, cfg.search(),
                              margin=cfg.tolerances["verdict"], tol=cfg.tolerances["consistency"])
    if cfg.output_format == "csv":
        _emit(_exporter.export_sweep_csv(rows), args)
    else:
        _emit(_exporter.export_json({"rows": rows, "trend": lyapunov.sweep_trend(rows)}), args)
    return EXIT_OK


def _decay(sys_: BlockSystem, cfg: RunConfig):
    check = sys_.assumption(search=cfg.search())
    if not check.holds:
        raise AssumptionError(f"fast subsystem not certified ES (verdict {check.verdict.value})")
    return check.decay


def cmd_kset(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    sys_ = _system(args)
    kcfg = cfg.kset(**({"tolerance": args.tol} if args.tol is not None else {}))
    cloud = inclusion.kset_estimate(sys_, args.x, kcfg, _decay(sys_, cfg))
    if cfg.output_format == "csv":
        text = "\n".join([",".join(f"y{j + 1}" for j in range(sys_.m))] +
                         [",".join(fmt(v) for v in p) for p in cloud.points]) + "\n"
        _emit(text, args)
    else:
        _emit(_exporter.export_json(cloud), args)
    return EXIT_OK


def cmd_hat_bounds(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    sys_ = _system(args)
    decay = _decay(sys_, cfg)
    hat = HatConfig.from_settings({"sphere_samples": args.sphere_samples} if args.sphere_samples else None)
    upper = inclusion.hat_upper_bound(sys_, hat, cfg.kset(), decay)
    greedy = inclusion.hat_lower_greedy(sys_, None, hat, cfg.kset(), decay)
    _emit(_exporter.export_json({"upper": upper, "greedy_lower": greedy}), args)
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    sys_ = _system(args)
    blocks = load_certificate(args.from_check, len(sys_))
    cert = [(auxiliary.lambda_parts(sys_, sig), t) for sig, t in blocks]
    lift = auxiliary.lift_check_certificate(sys_, cert, args.eps)
    _emit(_exporter.export_json({**lift.to_dict(), "signal": lift.signal}), args)
    return EXIT_OK


def cmd_chain(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    overrides = {"eps_list": tuple(args.eps_list)} if args.eps_list else {}
    report = lyapunov.chain_experiment(_system(args), cfg.chain(**overrides))
    _emit(_exporter.export_json(report), args)
    return EXIT_OK


def cmd_example(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    out = Path(args.out or "example")
    report = run_example(out, cfg.chain(check_signals=(example_signal(),)))
    sys.stdout.write(_exporter.export_json(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    common.add_argument("--threads", type=int, default=None, help="worker threads (env SLYAP_THREADS)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--out", default=None, help="output file (directory for 'example')")
    common.add_argument("--verbose", "-v", action="store_true")
    common.add_argument("--max-pieces", type=int, default=None)
    common.add_argument("--restarts", type=int, default=None)
    common.add_argument("--iterations", type=int, default=None)
    common.add_argument("--dwell-min", type=float, default=None)
    common.add_argument("--dwell-max", type=float, default=None)

    parser = _Parser(prog="slyap", description="Singularly perturbed switching-system analysis")
    parser.add_argument("--version", action="version", version=f"slyap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, handler, help_text: str, signal: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("system", help="system JSON file")
        if signal:
            p.add_argument("signal", help="signal JSON file")
        p.set_defaults(handler=handler)
        return p

    add("validate", cmd_validate, "check a system file")

    p = add("flow", cmd_flow, "flow of the block modes or of Σ_ε", signal=True)
    p.add_argument("--eps", type=float, default=None)

    p = add("simulate", cmd_simulate, "sampled trajectory of Σ_ε", signal=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--x0", type=_floats, required=True, help="initial state (x, y), comma separated")
    p.add_argument("--horizon", type=float, default=None, help="repeat the signal up to this time")
    p.add_argument("--dt", type=float, default=0.01)

    add("bar", cmd_bar, "reduced modes and their bounds")
    add("lambda-parts", cmd_lambda_parts, "Λ(T, σ) report", signal=True)

    p = add("check-sample", cmd_check_sample, "sample the check system")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--signal", action="append", help="extra signal file (repeatable)")
    p.add_argument("--cert-out", default=None, help="write the instability certificate here")

    p = add("bounds", cmd_bounds, "bounds on λ(Σ_ε), optionally shifted by μ")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)

    p = add("sweep", cmd_sweep, "bounds on λ(Σ_ε) over a list of ε")
    p.add_argument("--eps-list", type=_floats, required=True)

    p = add("kset", cmd_kset, "point cloud of K(x)")
    p.add_argument("--x", type=_floats, required=True)
    p.add_argument("--tol", type=float, default=None)

    p = add("hat-bounds", cmd_hat_bounds, "bounds on λ(Σ̂)")
    p.add_argument("--sphere-samples", type=int, default=None)

    p = add("certify", cmd_certify, "lift a check-system certificate to Σ_ε")
    p.add_argument("--from-check", required=True)
    p.add_argument("--eps", type=float, required=True)

    p = add("chain", cmd_chain, "comparison chain experiment")
    p.add_argument("--eps-list", type=_floats, default=None)

    p = sub.add_parser("example", parents=[common], help="reproduce the two-mode example")
    p.set_defaults(handler=cmd_example)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"invalid: {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularMatrixError, AssumptionError, PreconditionError, ConsistencyError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception:
        logger.exception("Unexpected failure in '%s'", args.command)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
