#!/usr/bin/env python3
"""igabem CLI: adaptive isogeometric BEM runs from the command line.

Entry point for the ``igabem`` console script defined in pyproject.toml.
Subcommands: run, reference, geometry, version.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Any

from pydantic import ValidationError

from igabem.errors import ConfigurationError, IgabemError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _jprint(obj: Any) -> None:
    """Print JSON to stdout."""
    print(json.dumps(obj, ensure_ascii=False, indent=2))


def _error(code: int, exc: BaseException) -> int:
    notes = list(getattr(exc, "__notes__", []))
    if isinstance(exc, ValidationError):
        message = "; ".join(str(e["msg"]) for e in exc.errors())
    else:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    _jprint({"ok": False, "error": message, "notes": notes})
    return code


def _weights(raw: str | None) -> list[float] | None:
    if not raw:
        return None
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid_weights: {raw!r} is not a comma-separated list of numbers")


# ── subcommands ─────────────────────────────────────────────────────────


_RUN_FIELDS = (
    "geometry", "problem", "p", "theta", "estimator", "mode", "refinement", "max_dofs", "max_iters", "n0",
    "quad_n", "quad_log_n", "quad_far_n", "eta_quad_n", "residual_k", "reference_energy",
    "out", "dump_mesh", "dump_indicators", "dump_matrix",
)


def cmd_run(args: argparse.Namespace) -> int:
    """Adaptive or uniform run; CSV report to --out, JSON summary to stdout."""
    from igabem.adaptive.driver import run
    from igabem.runtime.protocol import RunConfig
    from igabem.runtime.telemetry import TelemetryEmitter, stderr_progress

    try:
        fields = {k: getattr(args, k) for k in _RUN_FIELDS if getattr(args, k) is not None}
        weights = _weights(args.weights)
        if weights is not None:
            fields["initial_weights"] = weights
        fields["compute_eta"] = bool(args.compute_eta)
        fields["diagnostics"] = bool(args.diagnostics)
        cfg = RunConfig(**fields)
    except (ValidationError, ConfigurationError) as exc:
        return _error(EXIT_CONFIG, exc)

    emitter = TelemetryEmitter(emit_event=None if args.quiet else stderr_progress)
    try:
        report = run(cfg, telemetry=emitter)
    except ConfigurationError as exc:
        return _error(EXIT_CONFIG, exc)
    except IgabemError as exc:
        return _error(EXIT_NUMERICAL, exc)

    _jprint({
        "ok": True,
        "summary": report.summary.model_dump(mode="json"),
        "fit": None if report.fit is None else report.fit.model_dump(mode="json"),
        "last": report.records[-1].model_dump(mode="json"),
        "out": cfg.out,
    })
    return 0


def cmd_reference(args: argparse.Namespace) -> int:
    """⟨f, φ⟩: closed form when known, otherwise extrapolated from uniform refinements."""
    from igabem.discretization.geometry import builtin_geometry
    from igabem.solver.problems import build_problem, extrapolate_reference_energy

    try:
        curve = builtin_geometry(args.geometry)
        closed_form = build_problem(args.problem, curve, derive=False).reference_energy
        value = extrapolate_reference_energy(args.geometry, args.problem, args.p, levels=args.levels, n0=args.n0)
    except ConfigurationError as exc:
        return _error(EXIT_CONFIG, exc)
    except IgabemError as exc:
        return _error(EXIT_NUMERICAL, exc)
    _jprint({
        "ok": True,
        "geometry": curve.name,
        "problem": args.problem,
        "p": args.p,
        "levels": args.levels,
        "reference_energy": value,
        "closed_form": closed_form,
    })
    return 0


def cmd_geometry(args: argparse.Namespace) -> int:
    """Sampled validity checks of a built-in curve (JSON)."""
    from igabem.discretization.geometry import check_curve, geometry_factory, geometry_names

    try:
        curve = geometry_factory(args.name)()
    except ConfigurationError as exc:
        return _error(EXIT_CONFIG, exc)
    check = check_curve(curve, samples=args.samples)
    _jprint({
        "ok": check.ok,
        "name": curve.name,
        "available": geometry_names(),
        "param_interval": list(curve.param_interval),
        "closed": curve.closed,
        "smooth_breaks": list(curve.smooth_breaks),
        "length": curve.length,
        "check": check.to_dict(),
    })
    return 0 if check.ok else 1


def cmd_version(_args: argparse.Namespace) -> int:
    """Print version."""
    from igabem import __version__

    print(f"igabem {__version__}")
    return 0


# ── parser & entry point ───────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    """Build CLI argument parser."""
    p = argparse.ArgumentParser(
        prog="igabem",
        description="igabem - adaptive isogeometric BEM for the 2D single-layer equation",
    )
    p.add_argument("--version", "-V", action="store_true", help="Print version")

    sub = p.add_subparsers(dest="cmd")

    # run
    sp = sub.add_parser("run", help="Adaptive (or uniform) solve-estimate-mark-refine loop")
    sp.add_argument("--geometry", "-g", default=None, help="circle | slit | square | pacman (default: slit)")
    sp.add_argument("--problem", default=None, help="Right-hand side: constant | harmonic | power")
    sp.add_argument("--p", type=int, default=None, help="Spline degree (default: 0)")
    sp.add_argument("--theta", type=float, default=None, help="Dörfler parameter in (0, 1] (default: 0.5)")
    sp.add_argument("--estimator", choices=["mu", "eta"], default=None)
    sp.add_argument("--mode", choices=["adaptive", "uniform"], default=None)
    sp.add_argument("--refinement", choices=["hk", "h"], default=None, help="hk: multiplicity increase allowed")
    sp.add_argument("--max-dofs", dest="max_dofs", type=int, default=None)
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    sp.add_argument("--n0", type=int, default=None, help="Initial number of elements")
    sp.add_argument("--weights", default=None, help="Initial NURBS weights, comma separated")
    sp.add_argument("--quad-n", dest="quad_n", type=int, default=None)
    sp.add_argument("--quad-log-n", dest="quad_log_n", type=int, default=None)
    sp.add_argument("--quad-far-n", dest="quad_far_n", type=int, default=None)
    sp.add_argument("--eta-quad-n", dest="eta_quad_n", type=int, default=None)
    sp.add_argument("--residual-k", dest="residual_k", type=int, default=None)
    sp.add_argument("--reference-energy", dest="reference_energy", type=float, default=None)
    sp.add_argument("--compute-eta", dest="compute_eta", action="store_true", help="Record η next to μ")
    sp.add_argument("--diagnostics", action="store_true", help="Record estimator-reduction and mesh diagnostics")
    sp.add_argument("--out", "-o", default=None, help="CSV report path")
    sp.add_argument("--dump-mesh", dest="dump_mesh", default=None)
    sp.add_argument("--dump-indicators", dest="dump_indicators", default=None)
    sp.add_argument("--dump-matrix", dest="dump_matrix", default=None)
    sp.add_argument("--quiet", "-q", action="store_true", help="No progress lines on stderr")
    sp.set_defaults(fn=cmd_run)

    # reference
    sp = sub.add_parser("reference", help="Reference energy ⟨f, φ⟩ by extrapolation")
    sp.add_argument("--geometry", "-g", default="slit")
    sp.add_argument("--problem", default="constant")
    sp.add_argument("--p", type=int, default=0)
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--n0", type=int, default=16)
    sp.set_defaults(fn=cmd_reference)

    # geometry
    sp = sub.add_parser("geometry", help="Check a built-in geometry (JSON)")
    sp.add_argument("name", help="circle | slit | square | pacman")
    sp.add_argument("--samples", type=int, default=200)
    sp.set_defaults(fn=cmd_geometry)

    # version
    sp = sub.add_parser("version", help="Print version")
    sp.set_defaults(fn=cmd_version)

    return p


def main(argv: list[str] | None = None) -> int:
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        return cmd_version(args)

    if not args.cmd:
        parser.print_help()
        return 0

    return int(args.fn(args))


if __name__ == "__main__":
    sys.exit(main())
